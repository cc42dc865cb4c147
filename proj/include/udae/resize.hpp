#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "udae/tensor.hpp"

namespace udae {

namespace resize_detail {

// Each output pixel averages its (possibly fractional) source rectangle.
inline void area_plane(const float *src, std::int64_t ih, std::int64_t iw, float *dst,
                       std::int64_t oh, std::int64_t ow) {
  const double sy = static_cast<double>(ih) / static_cast<double>(oh);
  const double sx = static_cast<double>(iw) / static_cast<double>(ow);
  for (std::int64_t y = 0; y < oh; ++y) {
    const double y0 = y * sy, y1 = (y + 1) * sy;
    const std::int64_t ry0 = static_cast<std::int64_t>(std::floor(y0));
    const std::int64_t ry1 = std::min<std::int64_t>(ih, static_cast<std::int64_t>(std::ceil(y1)));
    for (std::int64_t x = 0; x < ow; ++x) {
      const double x0 = x * sx, x1 = (x + 1) * sx;
      const std::int64_t rx0 = static_cast<std::int64_t>(std::floor(x0));
      const std::int64_t rx1 = std::min<std::int64_t>(iw, static_cast<std::int64_t>(std::ceil(x1)));
      double acc = 0.0;
      for (std::int64_t yy = ry0; yy < ry1; ++yy) {
        const double wy = std::min(y1, static_cast<double>(yy + 1)) -
                          std::max(y0, static_cast<double>(yy));
        const float *row = src + yy * iw;
        for (std::int64_t xx = rx0; xx < rx1; ++xx) {
          const double wx = std::min(x1, static_cast<double>(xx + 1)) -
                            std::max(x0, static_cast<double>(xx));
          acc += wy * wx * row[xx];
        }
      }
      dst[y * ow + x] = static_cast<float>(acc / (sy * sx));
    }
  }
}

inline void bilinear_plane(const float *src, std::int64_t ih, std::int64_t iw, float *dst,
                           std::int64_t oh, std::int64_t ow) {
  const double sy = static_cast<double>(ih) / static_cast<double>(oh);
  const double sx = static_cast<double>(iw) / static_cast<double>(ow);
  for (std::int64_t y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(ih - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
    const std::int64_t y1 = std::min(y0 + 1, ih - 1);
    const double ty = fy - y0;
    for (std::int64_t x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(iw - 1));
      const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
      const std::int64_t x1 = std::min(x0 + 1, iw - 1);
      const double tx = fx - x0;
      const double v = (1 - ty) * ((1 - tx) * src[y0 * iw + x0] + tx * src[y0 * iw + x1]) +
                       ty * ((1 - tx) * src[y1 * iw + x0] + tx * src[y1 * iw + x1]);
      dst[y * ow + x] = static_cast<float>(v);
    }
  }
}

} // namespace resize_detail

// Area interpolation for downscaling; bilinear fallback when either output
// dimension grows.
inline Tensor resize_area(const Tensor &img, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("resize_area: output dims must be positive");
  if (out_h == img.height() && out_w == img.width())
    return img;
  Tensor out(img.batch(), img.channels(), out_h, out_w);
  const bool upscale = out_h > img.height() || out_w > img.width();
  for (std::int64_t n = 0; n < img.batch(); ++n) {
    for (std::int64_t c = 0; c < img.channels(); ++c) {
      if (upscale)
        resize_detail::bilinear_plane(img.plane(n, c), img.height(), img.width(),
                                      out.plane(n, c), out_h, out_w);
      else
        resize_detail::area_plane(img.plane(n, c), img.height(), img.width(),
                                  out.plane(n, c), out_h, out_w);
    }
  }
  return out;
}

} // namespace udae
