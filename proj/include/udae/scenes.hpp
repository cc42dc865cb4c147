#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "udae/rng.hpp"
#include "udae/tensor.hpp"

namespace udae {

// Procedural "clean" scenes for desk-scale runs and tests: color gradients,
// checkerboards, blurred color fields, and flat backgrounds with rectangles.
// Deterministic per seed, values in [0,1], enough edges and flats for the
// structural metrics to be meaningful. Keeps the repository free of
// photographic data.
inline Tensor generate_clean_scene(std::uint64_t seed, std::int64_t size) {
  if (size < 8)
    throw std::invalid_argument("generate_clean_scene: size must be >= 8");
  auto rng = make_rng(seed);
  Tensor img(1, 3, size, size);
  const std::uint32_t kind = rng() % 4;

  auto rand_color = [&rng]() {
    return std::array<float, 3>{static_cast<float>(uniform(rng, 0.05, 0.95)),
                                static_cast<float>(uniform(rng, 0.05, 0.95)),
                                static_cast<float>(uniform(rng, 0.05, 0.95))};
  };

  switch (kind) {
  case 0: { // directional two-color gradient
    const auto c0 = rand_color(), c1 = rand_color();
    const double angle = uniform(rng, 0.0, 2.0 * M_PI);
    const double dx = std::cos(angle), dy = std::sin(angle);
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        const double u = ((x * dx + y * dy) / size + 1.0) * 0.5;
        const float t = static_cast<float>(std::clamp(u, 0.0, 1.0));
        for (std::int64_t c = 0; c < 3; ++c)
          img.at(0, c, y, x) = c0[static_cast<std::size_t>(c)] * (1 - t) +
                               c1[static_cast<std::size_t>(c)] * t;
      }
    break;
  }
  case 1: { // checkerboard
    const auto c0 = rand_color(), c1 = rand_color();
    const std::int64_t cell = 2 + static_cast<std::int64_t>(rng() % 7);
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        const bool odd = ((x / cell) + (y / cell)) % 2 != 0;
        const auto &col = odd ? c1 : c0;
        for (std::int64_t c = 0; c < 3; ++c)
          img.at(0, c, y, x) = col[static_cast<std::size_t>(c)];
      }
    break;
  }
  case 2: { // box-blurred color noise (soft blobs)
    for (std::int64_t i = 0; i < img.size(); ++i)
      img.data()[i] = static_cast<float>(uniform01(rng));
    Tensor tmp(img.shape());
    for (int pass = 0; pass < 3; ++pass) {
      for (std::int64_t c = 0; c < 3; ++c) {
        const float *src = img.plane(0, c);
        float *dst = tmp.plane(0, c);
        for (std::int64_t y = 0; y < size; ++y)
          for (std::int64_t x = 0; x < size; ++x) {
            float acc = 0.0f;
            int cnt = 0;
            for (std::int64_t yy = std::max<std::int64_t>(0, y - 2);
                 yy <= std::min(size - 1, y + 2); ++yy)
              for (std::int64_t xx = std::max<std::int64_t>(0, x - 2);
                   xx <= std::min(size - 1, x + 2); ++xx) {
                acc += src[yy * size + xx];
                ++cnt;
              }
            dst[y * size + x] = acc / static_cast<float>(cnt);
          }
      }
      std::swap(img, tmp);
    }
    // restretch toward full range after blurring
    float lo = 1.0f, hi = 0.0f;
    for (std::int64_t i = 0; i < img.size(); ++i) {
      lo = std::min(lo, img.data()[i]);
      hi = std::max(hi, img.data()[i]);
    }
    const float span = hi - lo > 1e-6f ? hi - lo : 1.0f;
    for (std::int64_t i = 0; i < img.size(); ++i)
      img.data()[i] = (img.data()[i] - lo) / span;
    break;
  }
  default: { // flat background with colored rectangles
    const auto bg = rand_color();
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x)
        for (std::int64_t c = 0; c < 3; ++c)
          img.at(0, c, y, x) = bg[static_cast<std::size_t>(c)];
    const std::uint32_t count = 3 + rng() % 5;
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto col = rand_color();
      const std::int64_t w = 2 + static_cast<std::int64_t>(rng() % static_cast<std::uint32_t>(size / 2));
      const std::int64_t h = 2 + static_cast<std::int64_t>(rng() % static_cast<std::uint32_t>(size / 2));
      const std::int64_t x0 = static_cast<std::int64_t>(rng() % static_cast<std::uint32_t>(size));
      const std::int64_t y0 = static_cast<std::int64_t>(rng() % static_cast<std::uint32_t>(size));
      for (std::int64_t y = y0; y < std::min(size, y0 + h); ++y)
        for (std::int64_t x = x0; x < std::min(size, x0 + w); ++x)
          for (std::int64_t c = 0; c < 3; ++c)
            img.at(0, c, y, x) = col[static_cast<std::size_t>(c)];
    }
    break;
  }
  }
  return img;
}

} // namespace udae
