#pragma once

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "udae/tensor.hpp"

namespace udae {

struct RgbImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<unsigned char> pixels; // 3 * width * height, RGB interleaved

  RgbImage() = default;
  RgbImage(std::int64_t w, std::int64_t h)
      : width(w), height(h), pixels(static_cast<std::size_t>(3 * w * h), 0) {}
};

namespace png_detail {

struct MemReader {
  const unsigned char *data;
  std::size_t size;
  std::size_t pos;
};

inline void read_fn(png_structp png, png_bytep out, png_size_t n) {
  auto *r = static_cast<MemReader *>(png_get_io_ptr(png));
  if (r->pos + n > r->size)
    png_error(png, "read past end of stream");
  std::memcpy(out, r->data + r->pos, n);
  r->pos += n;
}

inline void write_fn(png_structp png, png_bytep data, png_size_t n) {
  auto *v = static_cast<std::vector<unsigned char> *>(png_get_io_ptr(png));
  v->insert(v->end(), data, data + n);
}

inline void flush_fn(png_structp) {}

inline void silent_warning(png_structp, png_const_charp) {}

} // namespace png_detail

// Decodes a PNG byte stream to 8-bit RGB. Grayscale and palette images are
// promoted, 16-bit depth is stripped to 8 (noted in *warning), alpha is
// dropped.
inline RgbImage decode_png(const std::vector<unsigned char> &bytes,
                           std::string *warning = nullptr) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw std::runtime_error("decode_png: not a PNG stream");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                           png_detail::silent_warning);
  if (!png)
    throw std::runtime_error("decode_png: failed to init libpng");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("decode_png: failed to init libpng info");
  }

  RgbImage img;
  std::vector<png_bytep> rows;
  png_detail::MemReader reader{bytes.data(), bytes.size(), 0};

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png: malformed PNG stream");
  }

  png_set_read_fn(png, &reader, png_detail::read_fn);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) {
    png_set_strip_16(png);
    if (warning)
      *warning = "16-bit PNG converted to 8-bit";
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(3 * w)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png: unexpected row layout after transforms");
  }

  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(3) * w * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.pixels.data() + static_cast<std::size_t>(3) * w * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::vector<unsigned char> encode_png(const RgbImage &img) {
  if (img.pixels.size() != static_cast<std::size_t>(3 * img.width * img.height))
    throw std::invalid_argument("encode_png: pixel buffer size mismatch");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                            png_detail::silent_warning);
  if (!png)
    throw std::runtime_error("encode_png: failed to init libpng");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("encode_png: failed to init libpng info");
  }

  std::vector<unsigned char> out;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("encode_png: libpng write failure");
  }

  png_set_write_fn(png, &out, png_detail::write_fn, png_detail::flush_fn);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  rows.resize(static_cast<std::size_t>(img.height));
  for (std::int64_t y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(img.pixels.data() + 3 * img.width * y);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline RgbImage load_png(const std::filesystem::path &path, std::string *warning = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error("load_png: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return decode_png(bytes, warning);
}

inline void save_png(const RgbImage &img, const std::filesystem::path &path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw std::runtime_error("save_png: cannot write " + path.string());
  f.write(reinterpret_cast<const char *>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f)
    throw std::runtime_error("save_png: short write to " + path.string());
}

// byte / 255 into [0,1], shape (1, 3, H, W)
inline Tensor to_tensor(const RgbImage &img) {
  Tensor t(1, 3, img.height, img.width);
  const std::int64_t hw = img.height * img.width;
  for (std::int64_t i = 0; i < hw; ++i) {
    const unsigned char *px = img.pixels.data() + 3 * i;
    t.data()[i] = px[0] / 255.0f;
    t.data()[hw + i] = px[1] / 255.0f;
    t.data()[2 * hw + i] = px[2] / 255.0f;
  }
  return t;
}

// clamp to [0,1], then round half up to a byte
inline RgbImage from_tensor(const Tensor &t) {
  if (t.batch() != 1 || t.channels() != 3)
    throw std::invalid_argument("from_tensor: expected shape (1,3,H,W), got " +
                                t.shape().str());
  RgbImage img(t.width(), t.height());
  const std::int64_t hw = t.height() * t.width();
  auto quantize = [](float v) {
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f));
  };
  for (std::int64_t i = 0; i < hw; ++i) {
    unsigned char *px = img.pixels.data() + 3 * i;
    px[0] = quantize(t.data()[i]);
    px[1] = quantize(t.data()[hw + i]);
    px[2] = quantize(t.data()[2 * hw + i]);
  }
  return img;
}

} // namespace udae
