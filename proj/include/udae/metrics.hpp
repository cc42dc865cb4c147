#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "udae/parallel.hpp"
#include "udae/tensor.hpp"

namespace udae {

// Windowed-SSIM constants. The canonical five-scale weights are normalized
// to sum to 1 over however many scales end up being used.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
  int scales = 5;
  std::vector<double> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
};

struct LossConfig {
  double alpha = 0.80;
};

template <typename T> double mse(const TensorT<T> &a, const TensorT<T> &b) {
  check_same_shape(a, b, "mse");
  const T *pa = a.data(), *pb = b.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  return a.size() == 0 ? 0.0 : acc / static_cast<double>(a.size());
}

// Mean absolute difference; subgradient 0 where a == b.
template <typename T>
double l1_loss(const TensorT<T> &a, const TensorT<T> &b, TensorT<T> *grad_a = nullptr) {
  check_same_shape(a, b, "l1_loss");
  const T *pa = a.data(), *pb = b.data();
  const std::int64_t n = a.size();
  double acc = 0.0;
  if (grad_a)
    *grad_a = TensorT<T>(a.shape());
  T *g = grad_a ? grad_a->data() : nullptr;
  const T inv_n = n > 0 ? T(1) / static_cast<T>(n) : T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += std::abs(d);
    if (g)
      g[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : T(0));
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

namespace metrics_detail {

struct Plane {
  std::int64_t h = 0, w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::int64_t h_, std::int64_t w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_ * w_), 0.0) {}
  double *row(std::int64_t y) { return v.data() + y * w; }
  const double *row(std::int64_t y) const { return v.data() + y * w; }
};

inline std::vector<double> gauss_window(const SsimParams &p) {
  std::vector<double> g(static_cast<std::size_t>(p.window));
  const double c = (p.window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < p.window; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * p.sigma * p.sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (double &x : g)
    x /= sum;
  return g;
}

template <typename T>
Plane extract_plane(const TensorT<T> &t, std::int64_t n, std::int64_t c) {
  Plane p(t.height(), t.width());
  const T *src = t.plane(n, c);
  for (std::int64_t i = 0; i < t.height() * t.width(); ++i)
    p.v[static_cast<std::size_t>(i)] = static_cast<double>(src[i]);
  return p;
}

// 2x2 mean pool; trailing odd row/column dropped.
inline Plane meanpool2(const Plane &in) {
  Plane out(in.h / 2, in.w / 2);
  for (std::int64_t y = 0; y < out.h; ++y) {
    const double *r0 = in.row(2 * y), *r1 = in.row(2 * y + 1);
    double *o = out.row(y);
    for (std::int64_t x = 0; x < out.w; ++x)
      o[x] = 0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
  }
  return out;
}

inline Plane meanpool2_backward(const Plane &grad, std::int64_t h, std::int64_t w) {
  Plane out(h, w);
  for (std::int64_t y = 0; y < grad.h; ++y) {
    const double *gr = grad.row(y);
    double *o0 = out.row(2 * y), *o1 = out.row(2 * y + 1);
    for (std::int64_t x = 0; x < grad.w; ++x) {
      const double q = 0.25 * gr[x];
      o0[2 * x] += q;
      o0[2 * x + 1] += q;
      o1[2 * x] += q;
      o1[2 * x + 1] += q;
    }
  }
  return out;
}

// Separable valid-region filtering of the five moment maps.
struct StatMaps {
  std::int64_t oh = 0, ow = 0;
  Plane mx, my, xx, yy, xy;
};

inline Plane filter_valid(const Plane &src, const std::vector<double> &g) {
  const std::int64_t k = static_cast<std::int64_t>(g.size());
  Plane tmp(src.h, src.w - k + 1);
  for (std::int64_t y = 0; y < src.h; ++y) {
    const double *r = src.row(y);
    double *t = tmp.row(y);
    for (std::int64_t x = 0; x < tmp.w; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < k; ++i)
        acc += g[static_cast<std::size_t>(i)] * r[x + i];
      t[x] = acc;
    }
  }
  Plane out(src.h - k + 1, tmp.w);
  for (std::int64_t y = 0; y < out.h; ++y) {
    double *o = out.row(y);
    for (std::int64_t x = 0; x < out.w; ++x) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < k; ++i)
        acc += g[static_cast<std::size_t>(i)] * tmp.row(y + i)[x];
      o[x] = acc;
    }
  }
  return out;
}

inline StatMaps window_stats(const Plane &x, const Plane &y, const std::vector<double> &g) {
  Plane xx(x.h, x.w), yy(x.h, x.w), xy(x.h, x.w);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    xx.v[i] = x.v[i] * x.v[i];
    yy.v[i] = y.v[i] * y.v[i];
    xy.v[i] = x.v[i] * y.v[i];
  }
  StatMaps s;
  s.mx = filter_valid(x, g);
  s.my = filter_valid(y, g);
  s.xx = filter_valid(xx, g);
  s.yy = filter_valid(yy, g);
  s.xy = filter_valid(xy, g);
  s.oh = s.mx.h;
  s.ow = s.mx.w;
  return s;
}

enum class SsimMode { Full, ContrastStructure };

// Sum of the per-window term over all window positions of one plane pair.
inline double window_term_sum(const StatMaps &s, double c1, double c2, SsimMode mode) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < s.oh * s.ow; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const double mx = s.mx.v[k], my = s.my.v[k];
    const double vx = s.xx.v[k] - mx * mx;
    const double vy = s.yy.v[k] - my * my;
    const double cov = s.xy.v[k] - mx * my;
    const double a2 = 2.0 * cov + c2;
    const double b2 = vx + vy + c2;
    if (mode == SsimMode::ContrastStructure) {
      acc += a2 / b2;
    } else {
      const double a1 = 2.0 * mx * my + c1;
      const double b1 = mx * mx + my * my + c1;
      acc += (a1 * a2) / (b1 * b2);
    }
  }
  return acc;
}

// d(sum of per-window terms)/dx scattered into grad (same size as x).
// coef scales every contribution.
inline void window_term_grad(const Plane &x, const Plane &y, const StatMaps &s,
                             const std::vector<double> &g, double c1, double c2,
                             SsimMode mode, double coef, Plane &grad) {
  const std::int64_t k = static_cast<std::int64_t>(g.size());
  for (std::int64_t wy = 0; wy < s.oh; ++wy) {
    for (std::int64_t wx = 0; wx < s.ow; ++wx) {
      const std::size_t q = static_cast<std::size_t>(wy * s.ow + wx);
      const double mx = s.mx.v[q], my = s.my.v[q];
      const double vx = s.xx.v[q] - mx * mx;
      const double vy = s.yy.v[q] - my * my;
      const double cov = s.xy.v[q] - mx * my;
      const double a2 = 2.0 * cov + c2;
      const double b2 = vx + vy + c2;
      if (mode == SsimMode::ContrastStructure) {
        const double cs = a2 / b2;
        for (std::int64_t i = 0; i < k; ++i) {
          const double *xr = x.row(wy + i) + wx;
          const double *yr = y.row(wy + i) + wx;
          double *gr = grad.row(wy + i) + wx;
          const double gi = g[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < k; ++j) {
            const double w2 = gi * g[static_cast<std::size_t>(j)];
            gr[j] += coef * 2.0 * w2 * ((yr[j] - my) - cs * (xr[j] - mx)) / b2;
          }
        }
      } else {
        const double a1 = 2.0 * mx * my + c1;
        const double b1 = mx * mx + my * my + c1;
        const double ss = (a1 * a2) / (b1 * b2);
        const double inv_b1b2 = 1.0 / (b1 * b2);
        for (std::int64_t i = 0; i < k; ++i) {
          const double *xr = x.row(wy + i) + wx;
          const double *yr = y.row(wy + i) + wx;
          double *gr = grad.row(wy + i) + wx;
          const double gi = g[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < k; ++j) {
            const double w2 = gi * g[static_cast<std::size_t>(j)];
            gr[j] += coef * 2.0 * w2 *
                     ((my * a2 + a1 * (yr[j] - my)) * inv_b1b2 -
                      ss * (mx / b1 + (xr[j] - mx) / b2));
          }
        }
      }
    }
  }
}

} // namespace metrics_detail

// Mean windowed SSIM over all batches/channels; color handled per channel,
// then averaged. Gradient is w.r.t. the first argument.
template <typename T>
double ssim(const TensorT<T> &a, const TensorT<T> &b, const SsimParams &params = {},
            TensorT<T> *grad_a = nullptr) {
  using namespace metrics_detail;
  check_same_shape(a, b, "ssim");
  if (a.height() < params.window || a.width() < params.window)
    throw std::invalid_argument("ssim: image " + a.shape().str() +
                                " smaller than window " + std::to_string(params.window));
  const auto g = gauss_window(params);
  const double c1 = params.k1 * params.dynamic_range * params.k1 * params.dynamic_range;
  const double c2 = params.k2 * params.dynamic_range * params.k2 * params.dynamic_range;
  const std::int64_t planes = a.batch() * a.channels();
  const std::int64_t oh = a.height() - params.window + 1;
  const std::int64_t ow = a.width() - params.window + 1;
  const double norm = 1.0 / static_cast<double>(planes * oh * ow);

  std::vector<double> sums(static_cast<std::size_t>(planes), 0.0);
  if (grad_a)
    *grad_a = TensorT<T>(a.shape());
  parallel_for(planes, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      const std::int64_t n = p / a.channels(), c = p % a.channels();
      Plane x = extract_plane(a, n, c);
      Plane y = extract_plane(b, n, c);
      StatMaps s = window_stats(x, y, g);
      sums[static_cast<std::size_t>(p)] = window_term_sum(s, c1, c2, SsimMode::Full);
      if (grad_a) {
        Plane gp(x.h, x.w);
        window_term_grad(x, y, s, g, c1, c2, SsimMode::Full, norm, gp);
        T *dst = grad_a->plane(n, c);
        for (std::size_t i = 0; i < gp.v.size(); ++i)
          dst[i] = static_cast<T>(gp.v[i]);
      }
    }
  });
  double total = 0.0;
  for (double s : sums)
    total += s;
  return total * norm;
}

struct MsSsimResult {
  double value = 0.0;
  int scales_used = 0;
  std::vector<double> weights_used;
};

// Multi-scale SSIM: contrast-structure terms at every scale, luminance only
// at the coarsest, combined as a weighted product; 2x2 mean pooling between
// scales. Scales shrink automatically when the image cannot support the
// requested pyramid.
template <typename T>
MsSsimResult ms_ssim(const TensorT<T> &a, const TensorT<T> &b, const SsimParams &params = {},
                     TensorT<T> *grad_a = nullptr) {
  using namespace metrics_detail;
  check_same_shape(a, b, "ms_ssim");
  const std::int64_t min_dim = std::min(a.height(), a.width());
  if (min_dim < params.window)
    throw std::invalid_argument("ms_ssim: image " + a.shape().str() +
                                " smaller than window " + std::to_string(params.window));
  if (params.scales < 1 || params.scales > static_cast<int>(params.scale_weights.size()))
    throw std::invalid_argument("ms_ssim: scales out of range");

  int levels = 1;
  while (levels < params.scales &&
         (std::int64_t{params.window} << levels) <= min_dim)
    ++levels;

  MsSsimResult res;
  res.scales_used = levels;
  res.weights_used.assign(params.scale_weights.begin(),
                          params.scale_weights.begin() + levels);
  double wsum = 0.0;
  for (double w : res.weights_used)
    wsum += w;
  for (double &w : res.weights_used)
    w /= wsum;

  const auto g = gauss_window(params);
  const double c1 = params.k1 * params.dynamic_range * params.k1 * params.dynamic_range;
  const double c2 = params.k2 * params.dynamic_range * params.k2 * params.dynamic_range;
  const std::int64_t planes = a.batch() * a.channels();

  // Pyramid of per-(batch,channel) plane pairs, level 0 at native size.
  std::vector<std::vector<Plane>> px(static_cast<std::size_t>(levels));
  std::vector<std::vector<Plane>> py(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    px[static_cast<std::size_t>(l)].resize(static_cast<std::size_t>(planes));
    py[static_cast<std::size_t>(l)].resize(static_cast<std::size_t>(planes));
  }
  parallel_for(planes, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t p = lo; p < hi; ++p) {
      const std::size_t sp = static_cast<std::size_t>(p);
      px[0][sp] = extract_plane(a, p / a.channels(), p % a.channels());
      py[0][sp] = extract_plane(b, p / a.channels(), p % a.channels());
      for (int l = 1; l < levels; ++l) {
        px[static_cast<std::size_t>(l)][sp] = meanpool2(px[static_cast<std::size_t>(l - 1)][sp]);
        py[static_cast<std::size_t>(l)][sp] = meanpool2(py[static_cast<std::size_t>(l - 1)][sp]);
      }
    }
  });

  // Per-level mean terms.
  std::vector<double> level_value(static_cast<std::size_t>(levels), 0.0);
  std::vector<double> level_norm(static_cast<std::size_t>(levels), 0.0);
  for (int l = 0; l < levels; ++l) {
    const std::size_t sl = static_cast<std::size_t>(l);
    const SsimMode mode = (l == levels - 1) ? SsimMode::Full : SsimMode::ContrastStructure;
    const std::int64_t oh = px[sl][0].h - params.window + 1;
    const std::int64_t ow = px[sl][0].w - params.window + 1;
    level_norm[sl] = 1.0 / static_cast<double>(planes * oh * ow);
    std::vector<double> sums(static_cast<std::size_t>(planes), 0.0);
    parallel_for(planes, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t p = lo; p < hi; ++p) {
        StatMaps s = window_stats(px[sl][static_cast<std::size_t>(p)],
                                  py[sl][static_cast<std::size_t>(p)], g);
        sums[static_cast<std::size_t>(p)] = window_term_sum(s, c1, c2, mode);
      }
    });
    double total = 0.0;
    for (double s : sums)
      total += s;
    level_value[sl] = total * level_norm[sl];
  }

  // Weighted product with a small floor so a degenerate scale cannot produce
  // NaN through a fractional power of a negative mean.
  constexpr double kFloor = 1e-6;
  double value = 1.0;
  for (int l = 0; l < levels; ++l)
    value *= std::pow(std::max(level_value[static_cast<std::size_t>(l)], kFloor),
                      res.weights_used[static_cast<std::size_t>(l)]);
  res.value = value;

  if (grad_a) {
    *grad_a = TensorT<T>(a.shape());
    std::vector<double> coef(static_cast<std::size_t>(levels), 0.0);
    for (int l = 0; l < levels; ++l) {
      const std::size_t sl = static_cast<std::size_t>(l);
      if (level_value[sl] > kFloor)
        coef[sl] = value * res.weights_used[sl] / level_value[sl] * level_norm[sl];
    }
    parallel_for(planes, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t p = lo; p < hi; ++p) {
        const std::size_t sp = static_cast<std::size_t>(p);
        Plane total(px[0][sp].h, px[0][sp].w);
        for (int l = 0; l < levels; ++l) {
          const std::size_t sl = static_cast<std::size_t>(l);
          if (coef[sl] == 0.0)
            continue;
          const SsimMode mode =
              (l == levels - 1) ? SsimMode::Full : SsimMode::ContrastStructure;
          StatMaps s = window_stats(px[sl][sp], py[sl][sp], g);
          Plane gl(px[sl][sp].h, px[sl][sp].w);
          window_term_grad(px[sl][sp], py[sl][sp], s, g, c1, c2, mode, coef[sl], gl);
          for (int up = l; up > 0; --up)
            gl = meanpool2_backward(gl, px[static_cast<std::size_t>(up - 1)][sp].h,
                                    px[static_cast<std::size_t>(up - 1)][sp].w);
          for (std::size_t i = 0; i < total.v.size(); ++i)
            total.v[i] += gl.v[i];
        }
        T *dst = grad_a->plane(p / a.channels(), p % a.channels());
        for (std::size_t i = 0; i < total.v.size(); ++i)
          dst[i] = static_cast<T>(total.v[i]);
      }
    });
  }
  return res;
}

struct CompositeResult {
  double value = 0.0;
  double ms_ssim_value = 0.0;
  double l1_value = 0.0;
  int scales_used = 0;
};

// alpha * (1 - MS-SSIM) + (1 - alpha) * L1; zero at identity. Gradient is
// w.r.t. `output`. Inputs are expected in [0,1].
template <typename T>
CompositeResult composite_loss(const TensorT<T> &output, const TensorT<T> &target,
                               const LossConfig &cfg = {}, const SsimParams &params = {},
                               TensorT<T> *grad_output = nullptr) {
  check_same_shape(output, target, "composite_loss");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0)
    throw std::invalid_argument("composite_loss: alpha must be in [0,1]");
  CompositeResult r;
  TensorT<T> ms_grad, l1_grad;
  MsSsimResult ms = ms_ssim(output, target, params, grad_output ? &ms_grad : nullptr);
  r.ms_ssim_value = ms.value;
  r.scales_used = ms.scales_used;
  r.l1_value = l1_loss(output, target, grad_output ? &l1_grad : nullptr);
  r.value = cfg.alpha * (1.0 - ms.value) + (1.0 - cfg.alpha) * r.l1_value;
  if (grad_output) {
    *grad_output = TensorT<T>(output.shape());
    T *g = grad_output->data();
    const T *gm = ms_grad.data();
    const T *gl = l1_grad.data();
    const T am = static_cast<T>(cfg.alpha);
    for (std::int64_t i = 0; i < output.size(); ++i)
      g[i] = -am * gm[i] + (T(1) - am) * gl[i];
  }
  return r;
}

} // namespace udae
