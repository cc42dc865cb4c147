#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "udae/parallel.hpp"
#include "udae/tensor.hpp"

namespace udae {

// Learned convolution parameters. Weights are (out_channels, in_channels,
// kh, kw); the same layout is reused for the 2x2 stride-2 up-convolution.
template <typename T> struct ConvLayerT {
  TensorT<T> weights;
  std::vector<T> bias;
  int stride = 1;
  int padding = 0;

  std::int64_t out_channels() const { return weights.batch(); }
  std::int64_t in_channels() const { return weights.channels(); }
  std::int64_t kh() const { return weights.height(); }
  std::int64_t kw() const { return weights.width(); }
};

using ConvLayer = ConvLayerT<float>;

template <typename T> struct ConvGradsT {
  TensorT<T> input;
  TensorT<T> weights;
  std::vector<T> bias;
};

using ConvGrads = ConvGradsT<float>;

namespace detail {

template <typename T>
void check_conv_pre(const TensorT<T> &input, const ConvLayerT<T> &layer, const char *op) {
  if (input.channels() != layer.in_channels())
    throw std::invalid_argument(std::string(op) + ": input channels " +
                                std::to_string(input.channels()) +
                                " != layer in_channels " +
                                std::to_string(layer.in_channels()) + " (input " +
                                input.shape().str() + ", weights " +
                                layer.weights.shape().str() + ")");
  if (layer.stride < 1)
    throw std::invalid_argument(std::string(op) + ": stride must be positive");
  if (layer.padding < 0)
    throw std::invalid_argument(std::string(op) + ": negative padding");
  if (static_cast<std::int64_t>(layer.bias.size()) != layer.out_channels())
    throw std::invalid_argument(std::string(op) + ": bias size " +
                                std::to_string(layer.bias.size()) +
                                " != out_channels " +
                                std::to_string(layer.out_channels()));
}

} // namespace detail

// Cross-correlation (no kernel flip), zero padding.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T> &input, const ConvLayerT<T> &layer) {
  detail::check_conv_pre(input, layer, "conv2d_forward");
  const std::int64_t N = input.batch(), C = input.channels();
  const std::int64_t H = input.height(), W = input.width();
  const std::int64_t OC = layer.out_channels(), KH = layer.kh(), KW = layer.kw();
  const std::int64_t s = layer.stride, p = layer.padding;
  const std::int64_t OH = (H + 2 * p - KH) / s + 1;
  const std::int64_t OW = (W + 2 * p - KW) / s + 1;
  if (H + 2 * p < KH || W + 2 * p < KW || OH <= 0 || OW <= 0)
    throw std::invalid_argument("conv2d_forward: non-positive output dims for input " +
                                input.shape().str() + ", kernel " +
                                layer.weights.shape().str() + ", stride " +
                                std::to_string(s) + ", padding " + std::to_string(p));

  TensorT<T> out(N, OC, OH, OW);
  const T *wts = layer.weights.data();

  parallel_for(N * OC, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t bo = lo; bo < hi; ++bo) {
      const std::int64_t b = bo / OC, oc = bo % OC;
      T *out_plane = out.plane(b, oc);
      std::fill(out_plane, out_plane + OH * OW, layer.bias[static_cast<std::size_t>(oc)]);
      for (std::int64_t ic = 0; ic < C; ++ic) {
        const T *in_plane = input.plane(b, ic);
        const T *w_plane = wts + ((oc * C + ic) * KH) * KW;
        for (std::int64_t kh = 0; kh < KH; ++kh) {
          for (std::int64_t kw = 0; kw < KW; ++kw) {
            const T wv = w_plane[kh * KW + kw];
            if (s == 1) {
              // iw = ow + kw - p is contiguous; clip to the valid ow range.
              const std::int64_t ow_lo = std::max<std::int64_t>(0, p - kw);
              const std::int64_t ow_hi = std::min<std::int64_t>(OW, W + p - kw);
              for (std::int64_t oh = 0; oh < OH; ++oh) {
                const std::int64_t ih = oh + kh - p;
                if (ih < 0 || ih >= H)
                  continue;
                T *orow = out_plane + oh * OW;
                const T *irow = in_plane + ih * W + (kw - p);
                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                  orow[ow] += wv * irow[ow];
              }
            } else {
              for (std::int64_t oh = 0; oh < OH; ++oh) {
                const std::int64_t ih = oh * s + kh - p;
                if (ih < 0 || ih >= H)
                  continue;
                T *orow = out_plane + oh * OW;
                const T *irow = in_plane + ih * W;
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                  const std::int64_t iw = ow * s + kw - p;
                  if (iw >= 0 && iw < W)
                    orow[ow] += wv * irow[iw];
                }
              }
            }
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
ConvGradsT<T> conv2d_backward(const TensorT<T> &input, const ConvLayerT<T> &layer,
                              const TensorT<T> &grad_out) {
  detail::check_conv_pre(input, layer, "conv2d_backward");
  const std::int64_t N = input.batch(), C = input.channels();
  const std::int64_t H = input.height(), W = input.width();
  const std::int64_t OC = layer.out_channels(), KH = layer.kh(), KW = layer.kw();
  const std::int64_t s = layer.stride, p = layer.padding;
  const std::int64_t OH = (H + 2 * p - KH) / s + 1;
  const std::int64_t OW = (W + 2 * p - KW) / s + 1;
  if (grad_out.shape() != Shape4{N, OC, OH, OW})
    throw std::invalid_argument("conv2d_backward: grad_out shape " +
                                grad_out.shape().str() + " != expected " +
                                Shape4{N, OC, OH, OW}.str());

  ConvGradsT<T> g;
  g.input = TensorT<T>(input.shape());
  g.weights = TensorT<T>(layer.weights.shape());
  g.bias.assign(static_cast<std::size_t>(OC), T(0));
  const T *wts = layer.weights.data();

  // dL/dinput: disjoint over (b, ic).
  parallel_for(N * C, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t bi = lo; bi < hi; ++bi) {
      const std::int64_t b = bi / C, ic = bi % C;
      T *gi_plane = g.input.plane(b, ic);
      for (std::int64_t oc = 0; oc < OC; ++oc) {
        const T *go_plane = grad_out.plane(b, oc);
        const T *w_plane = wts + ((oc * C + ic) * KH) * KW;
        for (std::int64_t kh = 0; kh < KH; ++kh) {
          for (std::int64_t kw = 0; kw < KW; ++kw) {
            const T wv = w_plane[kh * KW + kw];
            if (s == 1) {
              const std::int64_t ow_lo = std::max<std::int64_t>(0, p - kw);
              const std::int64_t ow_hi = std::min<std::int64_t>(OW, W + p - kw);
              for (std::int64_t oh = 0; oh < OH; ++oh) {
                const std::int64_t ih = oh + kh - p;
                if (ih < 0 || ih >= H)
                  continue;
                const T *grow = go_plane + oh * OW;
                T *irow = gi_plane + ih * W + (kw - p);
                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                  irow[ow] += wv * grow[ow];
              }
            } else {
              for (std::int64_t oh = 0; oh < OH; ++oh) {
                const std::int64_t ih = oh * s + kh - p;
                if (ih < 0 || ih >= H)
                  continue;
                const T *grow = go_plane + oh * OW;
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                  const std::int64_t iw = ow * s + kw - p;
                  if (iw >= 0 && iw < W)
                    gi_plane[ih * W + iw] += wv * grow[ow];
                }
              }
            }
          }
        }
      }
    }
  });

  // dL/dweights and dL/dbias: disjoint over oc. Row dot products stay in T;
  // cross-row sums accumulate in double.
  parallel_for(OC, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t oc = lo; oc < hi; ++oc) {
      double bias_acc = 0.0;
      for (std::int64_t b = 0; b < N; ++b) {
        const T *go_plane = grad_out.plane(b, oc);
        for (std::int64_t i = 0; i < OH * OW; ++i)
          bias_acc += go_plane[i];
      }
      g.bias[static_cast<std::size_t>(oc)] = static_cast<T>(bias_acc);

      for (std::int64_t ic = 0; ic < C; ++ic) {
        for (std::int64_t kh = 0; kh < KH; ++kh) {
          for (std::int64_t kw = 0; kw < KW; ++kw) {
            double acc = 0.0;
            for (std::int64_t b = 0; b < N; ++b) {
              const T *go_plane = grad_out.plane(b, oc);
              const T *in_plane = input.plane(b, ic);
              if (s == 1) {
                const std::int64_t ow_lo = std::max<std::int64_t>(0, p - kw);
                const std::int64_t ow_hi = std::min<std::int64_t>(OW, W + p - kw);
                for (std::int64_t oh = 0; oh < OH; ++oh) {
                  const std::int64_t ih = oh + kh - p;
                  if (ih < 0 || ih >= H)
                    continue;
                  const T *grow = go_plane + oh * OW;
                  const T *irow = in_plane + ih * W + (kw - p);
                  T dot = T(0);
                  for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                    dot += grow[ow] * irow[ow];
                  acc += dot;
                }
              } else {
                for (std::int64_t oh = 0; oh < OH; ++oh) {
                  const std::int64_t ih = oh * s + kh - p;
                  if (ih < 0 || ih >= H)
                    continue;
                  const T *grow = go_plane + oh * OW;
                  const T *irow = in_plane + ih * W;
                  for (std::int64_t ow = 0; ow < OW; ++ow) {
                    const std::int64_t iw = ow * s + kw - p;
                    if (iw >= 0 && iw < W)
                      acc += grow[ow] * irow[iw];
                  }
                }
              }
            }
            g.weights.at(oc, ic, kh, kw) = static_cast<T>(acc);
          }
        }
      }
    }
  });
  return g;
}

// Argmax bookkeeping from the pooling forward pass; flat offsets into the
// pooled input, one per output element.
struct PoolIndices {
  Shape4 input_shape;
  std::vector<std::int64_t> argmax;
};

template <typename T>
std::pair<TensorT<T>, PoolIndices> maxpool2x2_forward(const TensorT<T> &input) {
  const std::int64_t N = input.batch(), C = input.channels();
  const std::int64_t H = input.height(), W = input.width();
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("maxpool2x2_forward: odd spatial dims " + input.shape().str());
  const std::int64_t OH = H / 2, OW = W / 2;
  TensorT<T> out(N, C, OH, OW);
  PoolIndices idx;
  idx.input_shape = input.shape();
  idx.argmax.assign(static_cast<std::size_t>(out.size()), 0);

  parallel_for(N * C, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t bc = lo; bc < hi; ++bc) {
      const std::int64_t b = bc / C, c = bc % C;
      const T *ip = input.plane(b, c);
      T *op = out.plane(b, c);
      std::int64_t *am = idx.argmax.data() + ((b * C + c) * OH) * OW;
      const std::int64_t plane_base = input.index(b, c, 0, 0);
      for (std::int64_t oy = 0; oy < OH; ++oy) {
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          // Ties break to the first element in row-major scan order.
          std::int64_t best = (2 * oy) * W + 2 * ox;
          T bv = ip[best];
          const std::int64_t cands[3] = {(2 * oy) * W + 2 * ox + 1,
                                         (2 * oy + 1) * W + 2 * ox,
                                         (2 * oy + 1) * W + 2 * ox + 1};
          for (std::int64_t k : cands) {
            if (ip[k] > bv) {
              bv = ip[k];
              best = k;
            }
          }
          op[oy * OW + ox] = bv;
          am[oy * OW + ox] = plane_base + best;
        }
      }
    }
  });
  return {std::move(out), std::move(idx)};
}

template <typename T>
TensorT<T> maxpool2x2_backward(const PoolIndices &idx, const TensorT<T> &grad_out) {
  const Shape4 expect{idx.input_shape.n, idx.input_shape.c, idx.input_shape.h / 2,
                      idx.input_shape.w / 2};
  if (grad_out.shape() != expect)
    throw std::invalid_argument("maxpool2x2_backward: grad_out shape " +
                                grad_out.shape().str() + " != expected " + expect.str());
  TensorT<T> gi(idx.input_shape);
  const std::int64_t total = gi.size();
  const T *go = grad_out.data();
  T *gp = gi.data();
  for (std::size_t i = 0; i < idx.argmax.size(); ++i) {
    const std::int64_t target = idx.argmax[i];
    if (target < 0 || target >= total)
      throw std::out_of_range("maxpool2x2_backward: argmax index out of range");
    gp[target] += go[i];
  }
  return gi;
}

// Transposed convolution, kernel 2x2, stride 2: doubles both spatial dims.
template <typename T>
TensorT<T> upconv2x2_forward(const TensorT<T> &input, const ConvLayerT<T> &layer) {
  detail::check_conv_pre(input, layer, "upconv2x2_forward");
  if (layer.kh() != 2 || layer.kw() != 2 || layer.stride != 2)
    throw std::invalid_argument("upconv2x2_forward: requires 2x2 kernel, stride 2");
  const std::int64_t N = input.batch(), C = input.channels();
  const std::int64_t H = input.height(), W = input.width();
  const std::int64_t OC = layer.out_channels();
  TensorT<T> out(N, OC, 2 * H, 2 * W);
  const T *wts = layer.weights.data();

  parallel_for(N * OC, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t bo = lo; bo < hi; ++bo) {
      const std::int64_t b = bo / OC, oc = bo % OC;
      T *op = out.plane(b, oc);
      std::fill(op, op + 4 * H * W, layer.bias[static_cast<std::size_t>(oc)]);
      for (std::int64_t ic = 0; ic < C; ++ic) {
        const T *ip = input.plane(b, ic);
        const T *w = wts + ((oc * C + ic) * 2) * 2;
        for (std::int64_t y = 0; y < H; ++y) {
          const T *irow = ip + y * W;
          T *o0 = op + (2 * y) * (2 * W);
          T *o1 = op + (2 * y + 1) * (2 * W);
          for (std::int64_t x = 0; x < W; ++x) {
            const T v = irow[x];
            o0[2 * x] += v * w[0];
            o0[2 * x + 1] += v * w[1];
            o1[2 * x] += v * w[2];
            o1[2 * x + 1] += v * w[3];
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
ConvGradsT<T> upconv2x2_backward(const TensorT<T> &input, const ConvLayerT<T> &layer,
                                 const TensorT<T> &grad_out) {
  detail::check_conv_pre(input, layer, "upconv2x2_backward");
  const std::int64_t N = input.batch(), C = input.channels();
  const std::int64_t H = input.height(), W = input.width();
  const std::int64_t OC = layer.out_channels();
  if (grad_out.shape() != Shape4{N, OC, 2 * H, 2 * W})
    throw std::invalid_argument("upconv2x2_backward: grad_out shape " +
                                grad_out.shape().str() + " != expected " +
                                Shape4{N, OC, 2 * H, 2 * W}.str());

  ConvGradsT<T> g;
  g.input = TensorT<T>(input.shape());
  g.weights = TensorT<T>(layer.weights.shape());
  g.bias.assign(static_cast<std::size_t>(OC), T(0));
  const T *wts = layer.weights.data();

  parallel_for(N * C, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t bi = lo; bi < hi; ++bi) {
      const std::int64_t b = bi / C, ic = bi % C;
      T *gip = g.input.plane(b, ic);
      for (std::int64_t oc = 0; oc < OC; ++oc) {
        const T *gop = grad_out.plane(b, oc);
        const T *w = wts + ((oc * C + ic) * 2) * 2;
        for (std::int64_t y = 0; y < H; ++y) {
          const T *g0 = gop + (2 * y) * (2 * W);
          const T *g1 = gop + (2 * y + 1) * (2 * W);
          T *grow = gip + y * W;
          for (std::int64_t x = 0; x < W; ++x)
            grow[x] += w[0] * g0[2 * x] + w[1] * g0[2 * x + 1] + w[2] * g1[2 * x] +
                       w[3] * g1[2 * x + 1];
        }
      }
    }
  });

  parallel_for(OC, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t oc = lo; oc < hi; ++oc) {
      double bias_acc = 0.0;
      for (std::int64_t b = 0; b < N; ++b) {
        const T *gop = grad_out.plane(b, oc);
        for (std::int64_t i = 0; i < 4 * H * W; ++i)
          bias_acc += gop[i];
      }
      g.bias[static_cast<std::size_t>(oc)] = static_cast<T>(bias_acc);

      for (std::int64_t ic = 0; ic < C; ++ic) {
        double acc[4] = {0.0, 0.0, 0.0, 0.0};
        for (std::int64_t b = 0; b < N; ++b) {
          const T *ip = input.plane(b, ic);
          const T *gop = grad_out.plane(b, oc);
          for (std::int64_t y = 0; y < H; ++y) {
            const T *irow = ip + y * W;
            const T *g0 = gop + (2 * y) * (2 * W);
            const T *g1 = gop + (2 * y + 1) * (2 * W);
            T d0 = T(0), d1 = T(0), d2 = T(0), d3 = T(0);
            for (std::int64_t x = 0; x < W; ++x) {
              const T v = irow[x];
              d0 += v * g0[2 * x];
              d1 += v * g0[2 * x + 1];
              d2 += v * g1[2 * x];
              d3 += v * g1[2 * x + 1];
            }
            acc[0] += d0;
            acc[1] += d1;
            acc[2] += d2;
            acc[3] += d3;
          }
        }
        T *w = g.weights.data() + ((oc * C + ic) * 2) * 2;
        for (int k = 0; k < 4; ++k)
          w[k] = static_cast<T>(acc[k]);
      }
    }
  });
  return g;
}

// Channel concatenation, a's channels first.
template <typename T>
TensorT<T> concat_channels(const TensorT<T> &a, const TensorT<T> &b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument("concat_channels: batch/spatial mismatch, " +
                                a.shape().str() + " vs " + b.shape().str());
  TensorT<T> out(a.batch(), a.channels() + b.channels(), a.height(), a.width());
  const std::int64_t plane = a.height() * a.width();
  for (std::int64_t n = 0; n < a.batch(); ++n) {
    T *dst = out.plane(n, 0);
    std::copy(a.plane(n, 0), a.plane(n, 0) + a.channels() * plane, dst);
    std::copy(b.plane(n, 0), b.plane(n, 0) + b.channels() * plane,
              dst + a.channels() * plane);
  }
  return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_channels_backward(const TensorT<T> &grad_out,
                                                           std::int64_t ca,
                                                           std::int64_t cb) {
  if (grad_out.channels() != ca + cb)
    throw std::invalid_argument("concat_channels_backward: grad_out channels " +
                                std::to_string(grad_out.channels()) + " != " +
                                std::to_string(ca) + "+" + std::to_string(cb));
  TensorT<T> ga(grad_out.batch(), ca, grad_out.height(), grad_out.width());
  TensorT<T> gb(grad_out.batch(), cb, grad_out.height(), grad_out.width());
  const std::int64_t plane = grad_out.height() * grad_out.width();
  for (std::int64_t n = 0; n < grad_out.batch(); ++n) {
    const T *src = grad_out.plane(n, 0);
    std::copy(src, src + ca * plane, ga.plane(n, 0));
    std::copy(src + ca * plane, src + (ca + cb) * plane, gb.plane(n, 0));
  }
  return {std::move(ga), std::move(gb)};
}

template <typename T> TensorT<T> relu(const TensorT<T> &input) {
  TensorT<T> out(input.shape());
  const T *in = input.data();
  T *o = out.data();
  for (std::int64_t i = 0; i < input.size(); ++i)
    o[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

// Subgradient 0 at exactly 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T> &input, const TensorT<T> &grad_out) {
  check_same_shape(input, grad_out, "relu_backward");
  TensorT<T> gi(input.shape());
  const T *in = input.data();
  const T *go = grad_out.data();
  T *g = gi.data();
  for (std::int64_t i = 0; i < input.size(); ++i)
    g[i] = in[i] > T(0) ? go[i] : T(0);
  return gi;
}

template <typename T> T stable_sigmoid(T v) {
  if (v >= T(0)) {
    const T e = std::exp(-v);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T> TensorT<T> sigmoid(const TensorT<T> &input) {
  TensorT<T> out(input.shape());
  const T *in = input.data();
  T *o = out.data();
  for (std::int64_t i = 0; i < input.size(); ++i)
    o[i] = stable_sigmoid(in[i]);
  return out;
}

// Takes the forward *output*: ds/dv = s(1-s).
template <typename T>
TensorT<T> sigmoid_backward(const TensorT<T> &output, const TensorT<T> &grad_out) {
  check_same_shape(output, grad_out, "sigmoid_backward");
  TensorT<T> gi(output.shape());
  const T *s = output.data();
  const T *go = grad_out.data();
  T *g = gi.data();
  for (std::int64_t i = 0; i < output.size(); ++i)
    g[i] = s[i] * (T(1) - s[i]) * go[i];
  return gi;
}

} // namespace udae
