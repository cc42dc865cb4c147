#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "udae/rng.hpp"
#include "udae/tensor.hpp"

namespace udae {

// Parametric underwater corruption: wavelength-dependent attenuation toward
// an ambient light color, contrast compression toward the image mean, and
// additive sensor noise.
struct DegradationParams {
  std::array<double, 3> beta = {0.0, 0.0, 0.0};    // per-channel attenuation, >= 0
  std::array<double, 3> ambient = {0.0, 0.0, 0.0}; // background light, [0,1]
  double depth_scale = 1.0;                        // scene distance, > 0
  double contrast_loss = 0.0;                      // [0,1]
  double noise_sigma = 0.0;                        // >= 0
  std::uint64_t seed = 0;
};

inline void validate(const DegradationParams &p) {
  for (int c = 0; c < 3; ++c) {
    if (!(p.beta[static_cast<std::size_t>(c)] >= 0.0))
      throw std::invalid_argument("DegradationParams: beta must be >= 0");
    if (!(p.ambient[static_cast<std::size_t>(c)] >= 0.0 &&
          p.ambient[static_cast<std::size_t>(c)] <= 1.0))
      throw std::invalid_argument("DegradationParams: ambient must be in [0,1]");
  }
  if (!(p.depth_scale > 0.0))
    throw std::invalid_argument("DegradationParams: depth_scale must be > 0");
  if (!(p.contrast_loss >= 0.0 && p.contrast_loss <= 1.0))
    throw std::invalid_argument("DegradationParams: contrast_loss must be in [0,1]");
  if (!(p.noise_sigma >= 0.0))
    throw std::invalid_argument("DegradationParams: noise_sigma must be >= 0");
}

// out_c = clean_c * e^(-beta_c * d) + ambient_c * (1 - e^(-beta_c * d)),
// then contrast compression toward the image mean, then seeded Gaussian
// noise, then clamp to [0,1]. Null parameters reproduce the input exactly.
inline Tensor degrade(const Tensor &clean, const DegradationParams &p) {
  validate(p);
  if (clean.channels() != 3)
    throw std::invalid_argument("degrade: expected 3-channel input, got " +
                                clean.shape().str());
  Tensor out(clean.shape());
  const std::int64_t hw = clean.height() * clean.width();

  for (std::int64_t n = 0; n < clean.batch(); ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      const float t = static_cast<float>(
          std::exp(-p.beta[static_cast<std::size_t>(c)] * p.depth_scale));
      const float amb = static_cast<float>(
          p.ambient[static_cast<std::size_t>(c)] * (1.0 - static_cast<double>(t)));
      const float *src = clean.plane(n, c);
      float *dst = out.plane(n, c);
      for (std::int64_t i = 0; i < hw; ++i)
        dst[i] = src[i] * t + amb;
    }
  }

  if (p.contrast_loss > 0.0) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < out.size(); ++i)
      mean += out.data()[i];
    mean /= static_cast<double>(out.size());
    const float m = static_cast<float>(mean);
    const float keep = static_cast<float>(1.0 - p.contrast_loss);
    for (std::int64_t i = 0; i < out.size(); ++i)
      out.data()[i] = m + (out.data()[i] - m) * keep;
  }

  if (p.noise_sigma > 0.0) {
    auto rng = make_rng(p.seed);
    for (std::int64_t i = 0; i < out.size(); ++i)
      out.data()[i] += static_cast<float>(gaussian(rng, 0.0, p.noise_sigma));
  }

  for (std::int64_t i = 0; i < out.size(); ++i) {
    float v = out.data()[i];
    out.data()[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

enum class Preset { Greenish, Bluish, Turbid, Mixed };

inline const char *preset_name(Preset p) {
  switch (p) {
  case Preset::Greenish:
    return "greenish";
  case Preset::Bluish:
    return "bluish";
  case Preset::Turbid:
    return "turbid";
  case Preset::Mixed:
    return "mixed";
  }
  return "unknown";
}

inline Preset preset_from_name(const std::string &name) {
  if (name == "greenish")
    return Preset::Greenish;
  if (name == "bluish")
    return Preset::Bluish;
  if (name == "turbid")
    return Preset::Turbid;
  if (name == "mixed")
    return Preset::Mixed;
  throw std::invalid_argument("unknown preset '" + name +
                              "' (expected greenish|bluish|turbid|mixed)");
}

struct Range {
  double lo = 0.0, hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct PresetRanges {
  std::array<Range, 3> beta;
  std::array<Range, 3> ambient;
  Range depth_scale;
  Range contrast_loss;
  Range noise_sigma;
};

// Sampling ranges per water type. Greenish/bluish keep red attenuation
// strictly above the dominant ambient channel's; turbid is near-neutral with
// heavier contrast loss and noise. Mixed picks one of the three per draw, so
// its declared envelope is the component-wise union.
inline PresetRanges preset_ranges(Preset p) {
  switch (p) {
  case Preset::Greenish:
    return {{Range{0.60, 1.20}, Range{0.10, 0.30}, Range{0.25, 0.55}},
            {Range{0.02, 0.10}, Range{0.30, 0.50}, Range{0.20, 0.35}},
            Range{0.5, 2.0},
            Range{0.05, 0.35},
            Range{0.0, 0.03}};
  case Preset::Bluish:
    return {{Range{0.70, 1.30}, Range{0.25, 0.50}, Range{0.05, 0.24}},
            {Range{0.02, 0.10}, Range{0.20, 0.35}, Range{0.35, 0.55}},
            Range{0.5, 2.0},
            Range{0.05, 0.35},
            Range{0.0, 0.03}};
  case Preset::Turbid:
    return {{Range{0.50, 1.00}, Range{0.45, 0.95}, Range{0.40, 0.90}},
            {Range{0.25, 0.45}, Range{0.25, 0.45}, Range{0.25, 0.45}},
            Range{0.5, 2.0},
            Range{0.30, 0.60},
            Range{0.01, 0.05}};
  case Preset::Mixed: {
    auto merge = [](const Range &a, const Range &b, const Range &c) {
      return Range{std::min({a.lo, b.lo, c.lo}), std::max({a.hi, b.hi, c.hi})};
    };
    const PresetRanges g = preset_ranges(Preset::Greenish);
    const PresetRanges b = preset_ranges(Preset::Bluish);
    const PresetRanges t = preset_ranges(Preset::Turbid);
    PresetRanges m;
    for (std::size_t c = 0; c < 3; ++c) {
      m.beta[c] = merge(g.beta[c], b.beta[c], t.beta[c]);
      m.ambient[c] = merge(g.ambient[c], b.ambient[c], t.ambient[c]);
    }
    m.depth_scale = merge(g.depth_scale, b.depth_scale, t.depth_scale);
    m.contrast_loss = merge(g.contrast_loss, b.contrast_loss, t.contrast_loss);
    m.noise_sigma = merge(g.noise_sigma, b.noise_sigma, t.noise_sigma);
    return m;
  }
  }
  throw std::logic_error("preset_ranges: bad preset");
}

inline bool within_ranges(const DegradationParams &p, const PresetRanges &r) {
  for (std::size_t c = 0; c < 3; ++c)
    if (!r.beta[c].contains(p.beta[c]) || !r.ambient[c].contains(p.ambient[c]))
      return false;
  return r.depth_scale.contains(p.depth_scale) &&
         r.contrast_loss.contains(p.contrast_loss) &&
         r.noise_sigma.contains(p.noise_sigma);
}

inline DegradationParams sample_params(std::uint64_t rng_seed, Preset preset) {
  auto rng = make_rng(rng_seed);
  Preset effective = preset;
  if (preset == Preset::Mixed) {
    const std::uint32_t pick = rng() % 3;
    effective = pick == 0 ? Preset::Greenish : (pick == 1 ? Preset::Bluish : Preset::Turbid);
  }
  const PresetRanges r = preset_ranges(effective);
  DegradationParams p;
  for (std::size_t c = 0; c < 3; ++c)
    p.beta[c] = uniform(rng, r.beta[c].lo, r.beta[c].hi);
  for (std::size_t c = 0; c < 3; ++c)
    p.ambient[c] = uniform(rng, r.ambient[c].lo, r.ambient[c].hi);
  p.depth_scale = uniform(rng, r.depth_scale.lo, r.depth_scale.hi);
  p.contrast_loss = uniform(rng, r.contrast_loss.lo, r.contrast_loss.hi);
  p.noise_sigma = uniform(rng, r.noise_sigma.lo, r.noise_sigma.hi);
  p.seed = rng_seed;
  return p;
}

} // namespace udae
