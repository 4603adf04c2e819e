#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "frugal/geometry.hpp"

namespace frugal {

struct SpiralConfig {
  int n_poses = 60;
  double rotations = 1.0;
  double radius_scale = 1.0;
  double z_rate = 0.5;

  void validate() const {
    if (n_poses < 1) throw std::invalid_argument("spiral: n_poses must be >= 1");
    if (!(radius_scale >= 0)) throw std::invalid_argument("spiral: radius_scale must be >= 0");
  }
};

// Per-dataset values: LLFF 1 rotation / 1.0 / 0.5, DTU 4 / 0.5 / 0.5,
// RealEstate-10K 2 / 2.0 / 0.5, all with 60 poses.
inline SpiralConfig spiral_preset(const std::string& name) {
  if (name == "llff") return {60, 1.0, 1.0, 0.5};
  if (name == "dtu") return {60, 4.0, 0.5, 0.5};
  if (name == "realestate") return {60, 2.0, 2.0, 0.5};
  throw std::invalid_argument("unknown spiral preset: " + name);
}

// Linear-interpolated percentile (q in [0,100]) of a copied sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile: empty input");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * double(v.size() - 1);
  const size_t lo = size_t(pos);
  const double frac = pos - double(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

// Spiral trajectory around the average training pose: offsets in the average
// camera frame trace (r_x cos t, r_y sin t, r_z sin(t z_rate)) while every
// pose looks at a fixed focus point ahead of the average camera. Radii come
// from the 90th percentile of the per-axis camera spread.
inline std::vector<Camera> spiral_poses(const std::vector<Camera>& cams, const SpiralConfig& cfg) {
  cfg.validate();
  if (cams.empty()) throw std::invalid_argument("spiral_poses: need at least one camera");

  Vec3d center_avg, forward_avg, down_avg;
  double min_near = cams[0].near, max_far = cams[0].far;
  for (const Camera& c : cams) {
    center_avg += c.translation;
    forward_avg += c.rotation.col(2);
    down_avg += c.rotation.col(1);
    min_near = std::min(min_near, c.near);
    max_far = std::max(max_far, c.far);
  }
  center_avg = center_avg / double(cams.size());
  forward_avg = forward_avg.normalized();
  down_avg = down_avg.normalized();

  const double close = 0.9 * min_near;
  const double inf = 5.0 * max_far;
  const double dt = 0.75;
  const double focal = 1.0 / ((1.0 - dt) / close + dt / inf);
  const Vec3d focus = center_avg + focal * forward_avg;

  Vec3d rads;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> spread(cams.size());
    for (size_t i = 0; i < cams.size(); ++i)
      spread[i] = std::abs(cams[i].translation[axis] - center_avg[axis]);
    rads[axis] = percentile(spread, 90.0) * cfg.radius_scale;
  }

  const Vec3d right_avg = down_avg.cross(forward_avg).normalized();
  const Vec3d down_ortho = forward_avg.cross(right_avg);
  const Mat3d frame = Mat3d::from_cols(right_avg, down_ortho, forward_avg);

  std::vector<Camera> out;
  out.reserve(cfg.n_poses);
  for (int k = 0; k < cfg.n_poses; ++k) {
    const double theta = 2.0 * std::numbers::pi * cfg.rotations * double(k) / double(cfg.n_poses);
    const Vec3d offset{rads.x * std::cos(theta), rads.y * std::sin(theta),
                       rads.z * std::sin(theta * cfg.z_rate)};
    Camera cam = cams[0];  // intrinsics, size, near/far
    cam.translation = center_avg + frame * offset;
    const Vec3d fwd = (focus - cam.translation).normalized();
    const Vec3d right = down_avg.cross(fwd).normalized();
    const Vec3d down = fwd.cross(right);
    cam.rotation = Mat3d::from_cols(right, down, fwd);
    out.push_back(cam);
  }
  return out;
}

// Closest training view by camera-center distance; ties go to the lowest
// index. exclude skips one index (self-exclusion for training cameras).
inline int nearest_training_view(const Camera& cam, const std::vector<Camera>& cams,
                                 int exclude = -1) {
  return nearest_view(cams, cam.translation, exclude);
}

}  // namespace frugal
