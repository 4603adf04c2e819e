#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "frugal/math.hpp"

namespace frugal {

// Continuous pixel coordinate, origin at the top-left texel. Integer values
// address texel centers; the +0.5 offset to the optical center is applied
// inside the projection ops, not stored here.
struct PixelCoord {
  double u = 0, v = 0;
};

struct Ray {
  Vec3d origin;
  Vec3d dir;  // unit norm
  double near = 0, far = 0;
};

// Pinhole camera, OpenCV axes: +X right, +Y down, +Z forward.
// rotation/translation are world-from-camera (camera-to-world pose).
struct Camera {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat3d rotation = Mat3d::identity();
  Vec3d translation;  // camera center in world coordinates
  double near = 0, far = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("camera: focal lengths must be > 0");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image dims must be > 0");
    if (!(near > 0) || !(near < far)) throw std::invalid_argument("camera: require 0 < near < far");
    if (!is_rotation(rotation, 1e-9)) throw std::invalid_argument("camera: rotation not orthonormal with det 1");
  }

  Vec3d center() const { return translation; }
  Vec3d forward() const { return rotation.col(2); }
};

inline Ray ray_for_pixel(const Camera& cam, const PixelCoord& px) {
  if (px.u < 0 || px.u >= cam.width || px.v < 0 || px.v >= cam.height)
    throw std::out_of_range("ray_for_pixel: pixel outside image bounds");
  const Vec3d dir_cam{(px.u + 0.5 - cam.cx) / cam.fx, (px.v + 0.5 - cam.cy) / cam.fy, 1.0};
  return Ray{cam.translation, (cam.rotation * dir_cam).normalized(), cam.near, cam.far};
}

// x = o + depth * v, depth measured along the ray (not z-depth).
inline Vec3d lift_to_world(const PixelCoord& px, double depth, const Camera& cam) {
  if (!(depth > 0)) throw std::domain_error("lift_to_world: depth must be > 0");
  const Ray r = ray_for_pixel(cam, px);
  return r.origin + depth * r.dir;
}

struct Projection {
  PixelCoord px;
  double z = 0;  // camera-frame depth
  bool in_front = false;
};

inline Projection project_to_camera(const Vec3d& x, const Camera& cam) {
  const Vec3d x_cam = cam.rotation.transpose() * (x - cam.translation);
  Projection p;
  p.z = x_cam.z;
  if (x_cam.z <= 1e-9) return p;  // at/behind camera, caller must mask
  p.in_front = true;
  p.px.u = cam.fx * x_cam.x / x_cam.z + cam.cx - 0.5;
  p.px.v = cam.fy * x_cam.y / x_cam.z + cam.cy - 0.5;
  return p;
}

struct Warp {
  PixelCoord px;
  double z = 0;
  bool valid = false;
};

// Lift px at the given along-ray depth in cam_i, project into cam_j.
// margin shrinks the valid image region (patch support for reprojection errors).
inline Warp reproject(const PixelCoord& px, double depth, const Camera& cam_i,
                      const Camera& cam_j, double margin = 0.0) {
  const Vec3d x = lift_to_world(px, depth, cam_i);
  const Projection p = project_to_camera(x, cam_j);
  Warp w;
  w.px = p.px;
  w.z = p.z;
  w.valid = p.in_front && p.px.u >= margin && p.px.u <= cam_j.width - 1 - margin &&
            p.px.v >= margin && p.px.v <= cam_j.height - 1 - margin;
  return w;
}

// Along-ray distance per unit z-depth for the ray through px.
inline double depth_scale_for_pixel(const Camera& cam, const PixelCoord& px) {
  const Vec3d d{(px.u + 0.5 - cam.cx) / cam.fx, (px.v + 0.5 - cam.cy) / cam.fy, 1.0};
  return d.norm();
}

// Parameter interval along o + t d inside the axis-aligned box; empty when
// first >= second.
inline std::pair<double, double> ray_bbox_range(const Vec3d& o, const Vec3d& d, const Vec3d& lo,
                                                const Vec3d& hi) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return {1.0, 0.0};
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return {t0, t1};
}

// Index of the camera whose center is closest to `from`, skipping `exclude`.
inline int nearest_view(const std::vector<Camera>& cams, const Vec3d& from, int exclude = -1) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < cams.size(); ++i) {
    if (int(i) == exclude) continue;
    const double d = (cams[i].translation - from).norm();
    if (d < best_d) {
      best_d = d;
      best = int(i);
    }
  }
  if (best < 0) throw std::invalid_argument("nearest_view: no candidate views");
  return best;
}

}  // namespace frugal
