#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "frugal/image.hpp"

namespace frugal {

inline double psnr(const Image& a, const Image& b) {
  const double mse = a.mse(b);
  if (mse < 1e-10) return 99.0;
  return -10.0 * std::log10(mse);
}

namespace detail {

inline std::array<double, 11> gaussian_window11() {
  std::array<double, 11> k{};
  const double sigma = 1.5;
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable 11-tap filter, valid region only: output is (w-10) x (h-10).
inline std::vector<double> filter_valid11(const std::vector<double>& src, int w, int h) {
  static const std::array<double, 11> k = gaussian_window11();
  const int vw = w - 10, vh = h - 10;
  std::vector<double> tmp(size_t(vw) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[i] * src[size_t(y) * w + x + i];
      tmp[size_t(y) * vw + x] = s;
    }
  std::vector<double> out(size_t(vw) * vh, 0.0);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[i] * tmp[size_t(y + i) * vw + x];
      out[size_t(y) * vw + x] = s;
    }
  return out;
}

}  // namespace detail

// Mean local SSIM over fully interior 11x11 windows (sigma 1.5, K1 0.01,
// K2 0.03, dynamic range 1), averaged across channels.
inline double ssim(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument("ssim: shape mismatch");
  if (a.width < 11 || a.height < 11) throw std::invalid_argument("ssim: image smaller than window");
  const double c1 = 1e-4, c2 = 9e-4;
  const int w = a.width, h = a.height;
  const size_t n = size_t(w) * h;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  double total = 0;
  for (int ch = 0; ch < a.channels; ++ch) {
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const size_t i = size_t(py) * w + px;
        x[i] = a.at(px, py, ch);
        y[i] = b.at(px, py, ch);
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
    const std::vector<double> mx = detail::filter_valid11(x, w, h);
    const std::vector<double> my = detail::filter_valid11(y, w, h);
    const std::vector<double> mxx = detail::filter_valid11(xx, w, h);
    const std::vector<double> myy = detail::filter_valid11(yy, w, h);
    const std::vector<double> mxy = detail::filter_valid11(xy, w, h);
    double sum = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      sum += (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / double(mx.size());
  }
  return total / a.channels;
}

// Masked mean absolute depth error. Default mask: gt finite and positive.
inline double depth_mae(const Image& rendered, const Image& gt, const Image* mask = nullptr) {
  if (rendered.width != gt.width || rendered.height != gt.height)
    throw std::invalid_argument("depth_mae: shape mismatch");
  double sum = 0;
  size_t count = 0;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      const double g = gt.at(x, y, 0);
      if (mask ? mask->at(x, y, 0) == 0.0f : (!std::isfinite(g) || g <= 0)) continue;
      sum += std::abs(rendered.at(x, y, 0) - g);
      ++count;
    }
  return count ? sum / double(count) : 0.0;
}

struct ViewMetrics {
  int view_id = 0;
  double psnr = 0;
  double ssim = 0;
  double depth_mae = 0;
  bool has_depth = false;
};

struct EvalReport {
  std::vector<ViewMetrics> views;

  double mean_psnr() const {
    double s = 0;
    for (const auto& v : views) s += v.psnr;
    return views.empty() ? 0 : s / double(views.size());
  }
  double mean_ssim() const {
    double s = 0;
    for (const auto& v : views) s += v.ssim;
    return views.empty() ? 0 : s / double(views.size());
  }
  double mean_depth_mae() const {
    double s = 0;
    size_t n = 0;
    for (const auto& v : views)
      if (v.has_depth) {
        s += v.depth_mae;
        ++n;
      }
    return n ? s / double(n) : 0.0;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "view,psnr,ssim,depth_mae\n";
    for (const auto& v : views) {
      out << v.view_id << "," << v.psnr << "," << v.ssim << ",";
      if (v.has_depth) out << v.depth_mae;
      out << "\n";
    }
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["views"] = nlohmann::json::array();
    for (const auto& v : views) {
      nlohmann::json e{{"view", v.view_id}, {"psnr", v.psnr}, {"ssim", v.ssim}};
      if (v.has_depth) e["depth_mae"] = v.depth_mae;
      j["views"].push_back(e);
    }
    j["mean_psnr"] = mean_psnr();
    j["mean_ssim"] = mean_ssim();
    bool any_depth = false;
    for (const auto& v : views) any_depth = any_depth || v.has_depth;
    if (any_depth) j["mean_depth_mae"] = mean_depth_mae();
    return j;
  }
};

}  // namespace frugal
