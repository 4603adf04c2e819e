#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "frugal/math.hpp"

namespace frugal {

// Row-major float image, arbitrary channel count (RGB = 3, depth = 1).
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.f)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  float* pixel(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * channels; }
  const float* pixel(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }

  float at(int x, int y, int c) const { return pixel(x, y)[c]; }
  float& at(int x, int y, int c) { return pixel(x, y)[c]; }

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  // Bilinear support: continuous (u, v) in texel-index space, integer values
  // land exactly on texels.
  bool can_sample(double u, double v) const {
    return u >= 0.0 && u <= width - 1.0 && v >= 0.0 && v <= height - 1.0;
  }

  Vec3d sample_rgb(double u, double v) const {
    if (channels > 4) throw std::invalid_argument("sample_rgb: too many channels");
    double out[4] = {0, 0, 0, 0};
    sample(u, v, out);
    return {out[0], out[1], out[2]};
  }

  void sample(double u, double v, double* out) const {
    const int x0 = std::clamp(static_cast<int>(std::floor(u)), 0, width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(v)), 0, height - 1);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = std::clamp(u - x0, 0.0, 1.0);
    const double fy = std::clamp(v - y0, 0.0, 1.0);
    const float* p00 = pixel(x0, y0);
    const float* p10 = pixel(x1, y0);
    const float* p01 = pixel(x0, y1);
    const float* p11 = pixel(x1, y1);
    for (int c = 0; c < channels; ++c) {
      const double top = p00[c] + (p10[c] - p00[c]) * fx;
      const double bot = p01[c] + (p11[c] - p01[c]) * fx;
      out[c] = top + (bot - top) * fy;
    }
  }

  double mse(const Image& other) const {
    if (width != other.width || height != other.height || channels != other.channels)
      throw std::invalid_argument("mse: image dims differ");
    double acc = 0;
    for (size_t i = 0; i < data.size(); ++i) acc += sqr(double(data[i]) - double(other.data[i]));
    return data.empty() ? 0.0 : acc / double(data.size());
  }
};

// Bilinear resize; pixel centers aligned across resolutions.
inline Image resample_bilinear(const Image& src, int tw, int th) {
  if (tw <= 0 || th <= 0) throw std::invalid_argument("resample: target dims must be > 0");
  Image dst(tw, th, src.channels);
  const double sx = double(src.width) / tw;
  const double sy = double(src.height) / th;
  std::vector<double> tmp(src.channels);
  for (int y = 0; y < th; ++y) {
    for (int x = 0; x < tw; ++x) {
      const double su = (x + 0.5) * sx - 0.5;
      const double sv = (y + 0.5) * sy - 0.5;
      src.sample(std::clamp(su, 0.0, src.width - 1.0), std::clamp(sv, 0.0, src.height - 1.0),
                 tmp.data());
      for (int c = 0; c < src.channels; ++c) dst.at(x, y, c) = static_cast<float>(tmp[c]);
    }
  }
  return dst;
}

}  // namespace frugal
