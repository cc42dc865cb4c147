#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "udae/checkpoint.hpp"
#include "udae/tape.hpp"
#include "udae/unet.hpp"

namespace udae {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates per parameter array. No weight-decay
// term exists anywhere in the update.
struct AdamState {
  std::int64_t t = 0;
  struct Slot {
    std::vector<float> m, v;
  };
  std::vector<Slot> weight_slots;
  std::vector<Slot> bias_slots;
};

inline AdamState make_adam_state(const ModelWeights &model) {
  AdamState s;
  s.weight_slots.resize(model.layers.size());
  s.bias_slots.resize(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto &l = model.layers[i];
    s.weight_slots[i].m.assign(static_cast<std::size_t>(l.weights.size()), 0.0f);
    s.weight_slots[i].v.assign(static_cast<std::size_t>(l.weights.size()), 0.0f);
    s.bias_slots[i].m.assign(l.bias.size(), 0.0f);
    s.bias_slots[i].v.assign(l.bias.size(), 0.0f);
  }
  return s;
}

// Bias-corrected Adam update over one parameter array.
inline void adam_update(std::span<float> params, std::span<const float> grads,
                        std::span<float> m, std::span<float> v, std::int64_t t,
                        const AdamConfig &cfg) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
    throw std::invalid_argument("adam_update: array size mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    params[i] = static_cast<float>(params[i] - cfg.learning_rate * m_hat /
                                                   (std::sqrt(v_hat) + cfg.eps));
  }
}

// One optimizer step over the whole model.
inline void adam_step(ModelWeights &model, const std::vector<LayerGrads> &grads,
                      AdamState &state, const AdamConfig &cfg) {
  if (grads.size() != model.layers.size())
    throw std::invalid_argument("adam_step: grads do not match model layers");
  ++state.t;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto &l = model.layers[i];
    adam_update({l.weights.data(), static_cast<std::size_t>(l.weights.size())},
                {grads[i].weights.data(), static_cast<std::size_t>(grads[i].weights.size())},
                state.weight_slots[i].m, state.weight_slots[i].v, state.t, cfg);
    adam_update(l.bias, grads[i].bias, state.bias_slots[i].m, state.bias_slots[i].v,
                state.t, cfg);
  }
}

// Optimizer state sidecar, same conventions as the model checkpoint:
// "ADAM" magic, u16 version, u64 step count, per layer m/v for weights then
// bias, CRC32 trailer.
inline void save_adam_state(const AdamState &s, const std::filesystem::path &path) {
  detail::ByteWriter w;
  w.raw("ADAM", 4);
  w.u16(kCheckpointVersion);
  w.u64(static_cast<std::uint64_t>(s.t));
  w.u32(static_cast<std::uint32_t>(s.weight_slots.size()));
  for (std::size_t i = 0; i < s.weight_slots.size(); ++i) {
    w.u64(s.weight_slots[i].m.size());
    w.u64(s.bias_slots[i].m.size());
    for (float x : s.weight_slots[i].m)
      w.f32(x);
    for (float x : s.weight_slots[i].v)
      w.f32(x);
    for (float x : s.bias_slots[i].m)
      w.f32(x);
    for (float x : s.bias_slots[i].v)
      w.f32(x);
  }
  w.u32(crc32(w.bytes.data(), w.bytes.size()));
  detail::write_file(path, w.bytes, "save_adam_state");
}

inline AdamState load_adam_state(const std::filesystem::path &path) {
  const char *what = "load_adam_state";
  const auto bytes = detail::read_file(path, what);
  if (bytes.size() < 4 + 2 + 8 + 4 + 4)
    throw std::runtime_error(std::string(what) + ": truncated file");
  if (std::memcmp(bytes.data(), "ADAM", 4) != 0)
    throw std::runtime_error(std::string(what) + ": bad magic");
  const std::uint32_t stored = [&] {
    detail::ByteReader r{bytes.data() + bytes.size() - 4, 4, what};
    return r.u32();
  }();
  if (stored != crc32(bytes.data(), bytes.size() - 4))
    throw std::runtime_error(std::string(what) + ": checksum mismatch");
  detail::ByteReader r{bytes.data() + 4, bytes.size() - 8, what};
  if (r.u16() != kCheckpointVersion)
    throw std::runtime_error(std::string(what) + ": unsupported version");
  AdamState s;
  s.t = static_cast<std::int64_t>(r.u64());
  const std::uint32_t layers = r.u32();
  s.weight_slots.resize(layers);
  s.bias_slots.resize(layers);
  for (std::uint32_t i = 0; i < layers; ++i) {
    const std::uint64_t wn = r.u64();
    const std::uint64_t bn = r.u64();
    auto read_arr = [&r](std::vector<float> &dst, std::uint64_t n) {
      dst.resize(n);
      for (std::uint64_t k = 0; k < n; ++k)
        dst[k] = r.f32();
    };
    read_arr(s.weight_slots[i].m, wn);
    read_arr(s.weight_slots[i].v, wn);
    read_arr(s.bias_slots[i].m, bn);
    read_arr(s.bias_slots[i].v, bn);
  }
  if (r.left != 0)
    throw std::runtime_error(std::string(what) + ": trailing bytes");
  return s;
}

} // namespace udae
