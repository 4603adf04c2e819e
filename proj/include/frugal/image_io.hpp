#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "frugal/image.hpp"

namespace frugal {

namespace detail {
using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw std::runtime_error("cannot open " + path);
  return f;
}
}  // namespace detail

// 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA) to float [0,1].
inline Image read_png(const std::string& path) {
  detail::FilePtr file = detail::open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG " + path);
  }
  png_init_io(png, file.get());
  // EXPAND normalizes palettes and sub-byte gray; SWAP_ENDIAN gives host-order
  // 16-bit samples on little-endian machines.
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_SWAP_ENDIAN, nullptr);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);

  Image img(int(w), int(h), channels);
  const float scale = depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  for (png_uint_32 y = 0; y < h; ++y) {
    if (depth == 16) {
      const uint16_t* row = reinterpret_cast<const uint16_t*>(rows[y]);
      for (size_t i = 0; i < size_t(w) * channels; ++i)
        img.data[size_t(y) * w * channels + i] = float(row[i]) * scale;
    } else {
      const uint8_t* row = rows[y];
      for (size_t i = 0; i < size_t(w) * channels; ++i)
        img.data[size_t(y) * w * channels + i] = float(row[i]) * scale;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::string& path, const Image& img, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16)
    throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  int color_type;
  switch (img.channels) {
    case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
    case 2: color_type = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: color_type = PNG_COLOR_TYPE_RGB; break;
    case 4: color_type = PNG_COLOR_TYPE_RGBA; break;
    default: throw std::invalid_argument("write_png: unsupported channel count");
  }

  const size_t stride = size_t(img.width) * img.channels;
  std::vector<uint8_t> bytes;
  std::vector<uint16_t> words;
  std::vector<png_bytep> rows(img.height);
  if (bit_depth == 8) {
    bytes.resize(stride * img.height);
    for (size_t i = 0; i < bytes.size(); ++i)
      bytes[i] = uint8_t(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
    for (int y = 0; y < img.height; ++y) rows[y] = bytes.data() + size_t(y) * stride;
  } else {
    words.resize(stride * img.height);
    for (size_t i = 0; i < words.size(); ++i)
      words[i] = uint16_t(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 65535.0f));
    for (int y = 0; y < img.height; ++y)
      rows[y] = reinterpret_cast<png_bytep>(words.data() + size_t(y) * stride);
  }

  detail::FilePtr file = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, bit_depth == 16 ? PNG_TRANSFORM_SWAP_ENDIAN : PNG_TRANSFORM_IDENTITY,
                nullptr);
  png_destroy_write_struct(&png, &info);
}

// PFM: "PF"/"Pf", dims, scale (sign encodes endianness), rows bottom-to-top.
inline Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  if (!in || (magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale == 0)
    throw std::runtime_error("bad PFM header in " + path);
  in.get();  // single whitespace after the header
  const int channels = magic == "PF" ? 3 : 1;
  Image img(w, h, channels);
  const size_t stride = size_t(w) * channels;
  std::vector<float> row(stride);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(stride * sizeof(float)));
    if (!in) throw std::runtime_error("truncated PFM " + path);
    if (scale > 0) {  // big-endian payload
      for (float& f : row) {
        uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
    }
    std::copy(row.begin(), row.end(), img.data.begin() + size_t(y) * stride);
  }
  return img;
}

inline void write_pfm(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pfm: 1 or 3 channels only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n"
      << "-1.0\n";
  const size_t stride = size_t(img.width) * img.channels;
  for (int y = img.height - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(img.data.data() + size_t(y) * stride),
              std::streamsize(stride * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace frugal
