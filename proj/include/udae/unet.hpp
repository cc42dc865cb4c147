#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udae/ops.hpp"
#include "udae/rng.hpp"
#include "udae/tape.hpp"
#include "udae/tensor.hpp"

namespace udae {

struct UNetConfig {
  int depth = 4;
  int base_channels = 64;
  int in_channels = 3;
  int out_channels = 3;
};

inline void validate(const UNetConfig &cfg) {
  if (cfg.depth < 1)
    throw std::invalid_argument("UNetConfig: depth must be >= 1, got " +
                                std::to_string(cfg.depth));
  if (cfg.base_channels < 1 || cfg.in_channels < 1 || cfg.out_channels < 1)
    throw std::invalid_argument("UNetConfig: channel counts must be >= 1");
  if (cfg.depth > 16)
    throw std::invalid_argument("UNetConfig: depth too large");
}

inline std::int64_t stage_channels(const UNetConfig &cfg, int stage) {
  // stage 1..depth; feature maps double per stage
  return static_cast<std::int64_t>(cfg.base_channels) << (stage - 1);
}

constexpr std::uint16_t kCheckpointVersion = 1;

// All learnable arrays, in build order:
//   per encoder stage: two 3x3 convs; bottleneck: two 3x3 convs;
//   per decoder stage (deepest first): 2x2 up-conv then three 3x3 convs;
//   final 1x1 projection.
template <typename T> struct ModelWeightsT {
  UNetConfig config;
  std::uint16_t version = kCheckpointVersion;
  std::vector<ConvLayerT<T>> layers;

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto &l : layers)
      n += l.weights.size() + static_cast<std::int64_t>(l.bias.size());
    return n;
  }
};

using ModelWeights = ModelWeightsT<float>;

template <typename U, typename T> ModelWeightsT<U> cast_model(const ModelWeightsT<T> &m) {
  ModelWeightsT<U> out;
  out.config = m.config;
  out.version = m.version;
  out.layers.reserve(m.layers.size());
  for (const auto &l : m.layers) {
    ConvLayerT<U> cl;
    cl.weights = l.weights.template cast<U>();
    cl.bias.assign(l.bias.begin(), l.bias.end());
    cl.stride = l.stride;
    cl.padding = l.padding;
    out.layers.push_back(std::move(cl));
  }
  return out;
}

inline std::int64_t parameter_count(const UNetConfig &cfg) {
  validate(cfg);
  const std::int64_t D = cfg.depth;
  auto conv_params = [](std::int64_t in, std::int64_t out, std::int64_t k) {
    return out * in * k * k + out;
  };
  std::int64_t total = 0;
  std::int64_t prev = cfg.in_channels;
  for (int s = 1; s <= D; ++s) {
    const std::int64_t ch = stage_channels(cfg, s);
    total += conv_params(prev, ch, 3) + conv_params(ch, ch, 3);
    prev = ch;
  }
  const std::int64_t cb = stage_channels(cfg, cfg.depth + 1);
  total += conv_params(prev, cb, 3) + conv_params(cb, cb, 3);
  for (int s = static_cast<int>(D); s >= 1; --s) {
    const std::int64_t ch = stage_channels(cfg, s);
    total += conv_params(2 * ch, ch, 2);                       // up-conv
    total += conv_params(2 * ch, ch, 3);                       // after concat
    total += conv_params(ch, ch, 3) + conv_params(ch, ch, 3);
  }
  total += conv_params(cfg.base_channels, cfg.out_channels, 1);
  return total;
}

namespace detail {

inline ConvLayer make_conv(std::int64_t in_c, std::int64_t out_c, std::int64_t k,
                           int stride, int padding, std::mt19937 &rng) {
  ConvLayer l;
  l.weights = Tensor(out_c, in_c, k, k);
  l.bias.assign(static_cast<std::size_t>(out_c), 0.0f);
  l.stride = stride;
  l.padding = padding;
  // He-normal, fan-in scaled
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
  float *w = l.weights.data();
  for (std::int64_t i = 0; i < l.weights.size(); ++i)
    w[i] = static_cast<float>(gaussian(rng, 0.0, stddev));
  return l;
}

} // namespace detail

inline ModelWeights build_model(const UNetConfig &cfg, std::uint64_t seed) {
  validate(cfg);
  ModelWeights m;
  m.config = cfg;
  auto rng = make_rng(seed);

  std::int64_t prev = cfg.in_channels;
  for (int s = 1; s <= cfg.depth; ++s) {
    const std::int64_t ch = stage_channels(cfg, s);
    m.layers.push_back(detail::make_conv(prev, ch, 3, 1, 1, rng));
    m.layers.push_back(detail::make_conv(ch, ch, 3, 1, 1, rng));
    prev = ch;
  }
  const std::int64_t cb = stage_channels(cfg, cfg.depth + 1);
  m.layers.push_back(detail::make_conv(prev, cb, 3, 1, 1, rng));
  m.layers.push_back(detail::make_conv(cb, cb, 3, 1, 1, rng));
  for (int s = cfg.depth; s >= 1; --s) {
    const std::int64_t ch = stage_channels(cfg, s);
    m.layers.push_back(detail::make_conv(2 * ch, ch, 2, 2, 0, rng)); // up-conv
    m.layers.push_back(detail::make_conv(2 * ch, ch, 3, 1, 1, rng));
    m.layers.push_back(detail::make_conv(ch, ch, 3, 1, 1, rng));
    m.layers.push_back(detail::make_conv(ch, ch, 3, 1, 1, rng));
  }
  m.layers.push_back(detail::make_conv(cfg.base_channels, cfg.out_channels, 1, 1, 0, rng));
  return m;
}

template <typename T>
void check_forward_input(const ModelWeightsT<T> &m, const TensorT<T> &input) {
  if (input.channels() != m.config.in_channels)
    throw std::invalid_argument("forward: input has " + std::to_string(input.channels()) +
                                " channels, model expects " +
                                std::to_string(m.config.in_channels));
  const std::int64_t div = std::int64_t{1} << m.config.depth;
  if (input.height() % div != 0 || input.width() % div != 0)
    throw std::invalid_argument("forward: spatial dims of " + input.shape().str() +
                                " not divisible by 2^depth = " + std::to_string(div));
}

// Taped forward; returns the tape value id of the network output.
template <typename T>
int forward(const ModelWeightsT<T> &m, const TensorT<T> &input, TapeT<T> &tape) {
  check_forward_input(m, input);
  int li = 0;
  int v = tape.input(input);
  std::vector<int> skips;
  skips.reserve(static_cast<std::size_t>(m.config.depth));
  for (int s = 1; s <= m.config.depth; ++s) {
    v = tape.relu(tape.conv(v, m.layers, li++));
    v = tape.relu(tape.conv(v, m.layers, li++));
    skips.push_back(v);
    v = tape.maxpool(v);
  }
  v = tape.relu(tape.conv(v, m.layers, li++));
  v = tape.relu(tape.conv(v, m.layers, li++));
  for (int s = m.config.depth; s >= 1; --s) {
    v = tape.upconv(v, m.layers, li++);
    v = tape.concat(v, skips[static_cast<std::size_t>(s - 1)]);
    v = tape.relu(tape.conv(v, m.layers, li++));
    v = tape.relu(tape.conv(v, m.layers, li++));
    v = tape.relu(tape.conv(v, m.layers, li++));
  }
  v = tape.sigmoid(tape.conv(v, m.layers, li++));
  return v;
}

template <typename T>
TensorT<T> forward(const ModelWeightsT<T> &m, const TensorT<T> &input) {
  TapeT<T> tape;
  return tape.value(forward(m, input, tape));
}

template <typename T> std::vector<LayerGradsT<T>> make_zero_grads(const ModelWeightsT<T> &m) {
  std::vector<LayerGradsT<T>> grads;
  grads.reserve(m.layers.size());
  for (const auto &l : m.layers)
    grads.push_back({TensorT<T>(l.weights.shape()), std::vector<T>(l.bias.size(), T(0))});
  return grads;
}

template <typename T>
std::vector<LayerGradsT<T>> backward(const ModelWeightsT<T> &m, TapeT<T> &tape, int out_id,
                                     const TensorT<T> &grad_output) {
  auto grads = make_zero_grads(m);
  tape.backward(out_id, grad_output, m.layers, grads);
  return grads;
}

// Flat views over every learnable value, in build order (weights then bias
// per layer). Used by the finite-difference checker.
template <typename T> std::vector<T> flatten_params(const ModelWeightsT<T> &m) {
  std::vector<T> flat;
  flat.reserve(static_cast<std::size_t>(m.parameter_count()));
  for (const auto &l : m.layers) {
    flat.insert(flat.end(), l.weights.data(), l.weights.data() + l.weights.size());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

template <typename T>
void scatter_params(ModelWeightsT<T> &m, const std::vector<T> &flat) {
  std::size_t pos = 0;
  for (auto &l : m.layers) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() +
                  static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(l.weights.size())),
              l.weights.data());
    pos += static_cast<std::size_t>(l.weights.size());
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + l.bias.size()), l.bias.begin());
    pos += l.bias.size();
  }
  if (pos != flat.size())
    throw std::invalid_argument("scatter_params: size mismatch");
}

template <typename T>
std::vector<T> flatten_grads(const std::vector<LayerGradsT<T>> &grads) {
  std::vector<T> flat;
  for (const auto &g : grads) {
    flat.insert(flat.end(), g.weights.data(), g.weights.data() + g.weights.size());
    flat.insert(flat.end(), g.bias.begin(), g.bias.end());
  }
  return flat;
}

} // namespace udae
