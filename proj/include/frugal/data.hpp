#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "frugal/geometry.hpp"
#include "frugal/image.hpp"
#include "frugal/image_io.hpp"
#include "frugal/losses.hpp"

namespace frugal {

struct SceneDataset {
  std::vector<Image> images;
  std::vector<Camera> cameras;
  std::vector<int> train_ids, test_ids;
  std::vector<SparseDepthPoint> sparse_depth;
  std::map<int, Image> mono_depth;  // per train view, 1 channel
  std::vector<Image> gt_depth;      // synthetic scenes only, along-ray, +inf = miss
  Vec3d bbox_min{-1, -1, -1}, bbox_max{1, 1, 1};

  void validate() const {
    if (images.size() != cameras.size())
      throw std::runtime_error("dataset: image/camera count mismatch");
    for (size_t i = 0; i < images.size(); ++i) {
      cameras[i].validate();
      if (images[i].width != cameras[i].width || images[i].height != cameras[i].height)
        throw std::runtime_error("dataset: image dims disagree with camera " + std::to_string(i));
      if (images[i].channels != 3)
        throw std::runtime_error("dataset: image " + std::to_string(i) + " is not RGB");
    }
    for (int id : train_ids)
      if (id < 0 || size_t(id) >= images.size())
        throw std::runtime_error("dataset: train id out of range");
    for (int id : test_ids) {
      if (id < 0 || size_t(id) >= images.size())
        throw std::runtime_error("dataset: test id out of range");
      if (std::find(train_ids.begin(), train_ids.end(), id) != train_ids.end())
        throw std::runtime_error("dataset: view in both train and test split");
    }
    for (const SparseDepthPoint& p : sparse_depth) {
      if (p.view_id < 0 || size_t(p.view_id) >= images.size())
        throw std::runtime_error("dataset: sparse depth view_id out of range");
      if (!(p.depth > 0)) throw std::runtime_error("dataset: sparse depth must be > 0");
      const Camera& c = cameras[size_t(p.view_id)];
      if (p.u < 0 || p.u >= c.width || p.v < 0 || p.v >= c.height)
        throw std::runtime_error("dataset: sparse depth pixel out of bounds");
    }
    if (!(bbox_min.x < bbox_max.x && bbox_min.y < bbox_max.y && bbox_min.z < bbox_max.z) ||
        !bbox_min.all_finite() || !bbox_max.all_finite())
      throw std::runtime_error("dataset: bad bbox");
  }

  std::vector<Camera> train_cameras() const {
    std::vector<Camera> out;
    for (int id : train_ids) out.push_back(cameras[size_t(id)]);
    return out;
  }
  std::vector<Image> train_images() const {
    std::vector<Image> out;
    for (int id : train_ids) out.push_back(images[size_t(id)]);
    return out;
  }
};

namespace detail {

inline std::string view_name(int index) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%03d", index);
  return buf;
}

inline nlohmann::json camera_to_json(const Camera& c, const std::string& file,
                                     const std::string& split) {
  nlohmann::json j;
  j["file"] = file;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  j["near"] = c.near;
  j["far"] = c.far;
  j["split"] = split;
  std::vector<double> m(16, 0.0);
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 3; ++col) m[size_t(r) * 4 + col] = c.rotation(r, col);
    m[size_t(r) * 4 + 3] = c.translation[r];
  }
  m[15] = 1.0;
  j["c2w"] = m;
  return j;
}

inline double require_number(const nlohmann::json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || !j[key].is_number())
    throw std::runtime_error("cameras.json: missing numeric field '" + std::string(key) + "' in " +
                             ctx);
  return j[key].get<double>();
}

inline Camera camera_from_json(const nlohmann::json& j, const std::string& ctx) {
  Camera c;
  c.fx = require_number(j, "fx", ctx);
  c.fy = require_number(j, "fy", ctx);
  c.cx = require_number(j, "cx", ctx);
  c.cy = require_number(j, "cy", ctx);
  c.width = int(require_number(j, "width", ctx));
  c.height = int(require_number(j, "height", ctx));
  c.near = require_number(j, "near", ctx);
  c.far = require_number(j, "far", ctx);
  if (!j.contains("c2w") || !j["c2w"].is_array() || j["c2w"].size() != 16)
    throw std::runtime_error("cameras.json: field 'c2w' must hold 16 numbers in " + ctx);
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 3; ++col) c.rotation(r, col) = j["c2w"][size_t(r) * 4 + col];
    c.translation[r] = j["c2w"][size_t(r) * 4 + 3];
  }
  return c;
}

inline Vec3d vec3_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    throw std::runtime_error(std::string("cameras.json: field '") + key + "' must hold 3 numbers");
  return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

}  // namespace detail

// Layout: cameras.json, images/NNN.png, optional sparse_depth.json,
// mono_depth/NNN.pfm (or .png), gt_depth/NNN.pfm.
inline void save_scene(const std::string& dir, const SceneDataset& ds) {
  namespace fs = std::filesystem;
  ds.validate();
  fs::create_directories(fs::path(dir) / "images");
  nlohmann::json root;
  root["bbox_min"] = {ds.bbox_min.x, ds.bbox_min.y, ds.bbox_min.z};
  root["bbox_max"] = {ds.bbox_max.x, ds.bbox_max.y, ds.bbox_max.z};
  root["images"] = nlohmann::json::array();
  for (size_t i = 0; i < ds.images.size(); ++i) {
    const std::string rel = "images/" + detail::view_name(int(i)) + ".png";
    const bool is_test = std::find(ds.test_ids.begin(), ds.test_ids.end(), int(i)) != ds.test_ids.end();
    root["images"].push_back(
        detail::camera_to_json(ds.cameras[i], rel, is_test ? "test" : "train"));
    write_png((fs::path(dir) / rel).string(), ds.images[i]);
  }
  std::ofstream out(fs::path(dir) / "cameras.json");
  out << root.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing cameras.json");

  if (!ds.sparse_depth.empty()) {
    nlohmann::json sd;
    sd["points"] = nlohmann::json::array();
    for (const SparseDepthPoint& p : ds.sparse_depth)
      sd["points"].push_back({{"view_id", p.view_id}, {"u", p.u}, {"v", p.v}, {"depth", p.depth}});
    std::ofstream sout(fs::path(dir) / "sparse_depth.json");
    sout << sd.dump(2) << "\n";
  }
  if (!ds.mono_depth.empty()) {
    fs::create_directories(fs::path(dir) / "mono_depth");
    for (const auto& [id, map] : ds.mono_depth)
      write_pfm((fs::path(dir) / "mono_depth" / (detail::view_name(id) + ".pfm")).string(), map);
  }
  if (!ds.gt_depth.empty()) {
    fs::create_directories(fs::path(dir) / "gt_depth");
    for (size_t i = 0; i < ds.gt_depth.size(); ++i)
      write_pfm((fs::path(dir) / "gt_depth" / (detail::view_name(int(i)) + ".pfm")).string(),
                ds.gt_depth[i]);
  }
}

inline SceneDataset load_scene(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root = dir;
  std::ifstream in(root / "cameras.json");
  if (!in) throw std::runtime_error("cannot open " + (root / "cameras.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("cameras.json: parse error: " + std::string(e.what()));
  }

  SceneDataset ds;
  ds.bbox_min = detail::vec3_from_json(j, "bbox_min");
  ds.bbox_max = detail::vec3_from_json(j, "bbox_max");
  if (!j.contains("images") || !j["images"].is_array() || j["images"].empty())
    throw std::runtime_error("cameras.json: field 'images' must be a non-empty array");
  for (size_t i = 0; i < j["images"].size(); ++i) {
    const nlohmann::json& e = j["images"][i];
    const std::string ctx = "images[" + std::to_string(i) + "]";
    if (!e.contains("file") || !e["file"].is_string())
      throw std::runtime_error("cameras.json: missing field 'file' in " + ctx);
    ds.cameras.push_back(detail::camera_from_json(e, ctx));
    ds.images.push_back(read_png((root / e["file"].get<std::string>()).string()));
    const std::string split = e.contains("split") ? e["split"].get<std::string>() : "train";
    if (split == "train")
      ds.train_ids.push_back(int(i));
    else if (split == "test")
      ds.test_ids.push_back(int(i));
    else
      throw std::runtime_error("cameras.json: field 'split' must be train or test in " + ctx);
  }

  if (fs::exists(root / "sparse_depth.json")) {
    std::ifstream sin(root / "sparse_depth.json");
    nlohmann::json sj;
    try {
      sin >> sj;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("sparse_depth.json: parse error: " + std::string(e.what()));
    }
    if (!sj.contains("points") || !sj["points"].is_array())
      throw std::runtime_error("sparse_depth.json: missing field 'points'");
    for (const auto& p : sj["points"]) {
      SparseDepthPoint pt;
      pt.view_id = int(detail::require_number(p, "view_id", "sparse_depth point"));
      pt.u = detail::require_number(p, "u", "sparse_depth point");
      pt.v = detail::require_number(p, "v", "sparse_depth point");
      pt.depth = detail::require_number(p, "depth", "sparse_depth point");
      ds.sparse_depth.push_back(pt);
    }
  }

  for (int id : ds.train_ids) {
    const fs::path pfm = root / "mono_depth" / (detail::view_name(id) + ".pfm");
    const fs::path png = root / "mono_depth" / (detail::view_name(id) + ".png");
    if (fs::exists(pfm)) {
      ds.mono_depth.emplace(id, read_pfm(pfm.string()));
    } else if (fs::exists(png)) {
      Image m = read_png(png.string());
      if (m.channels != 1) throw std::runtime_error("mono depth PNG must be grayscale: " + png.string());
      ds.mono_depth.emplace(id, std::move(m));
    }
  }
  for (size_t i = 0; i < ds.images.size(); ++i) {
    const fs::path pfm = root / "gt_depth" / (detail::view_name(int(i)) + ".pfm");
    if (!fs::exists(pfm)) {
      if (!ds.gt_depth.empty())
        throw std::runtime_error("gt_depth present for some views but missing " + pfm.string());
      break;
    }
    ds.gt_depth.push_back(read_pfm(pfm.string()));
  }

  ds.validate();
  return ds;
}

// Cameras on a horizontal circle of the given radius, all looking at the
// origin. elevation shifts them along world -Y (up, since +Y is down); phase
// rotates the whole ring.
inline std::vector<Camera> orbit_cameras(int n, int width, int height, double fov_deg,
                                         double radius, double elevation, double near, double far,
                                         double phase = 0.0) {
  if (n < 1) throw std::invalid_argument("orbit_cameras: n must be >= 1");
  if (!(radius > 0)) throw std::invalid_argument("orbit_cameras: radius must be > 0");
  std::vector<Camera> cams;
  const double f = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  for (int k = 0; k < n; ++k) {
    const double phi = phase + 2.0 * std::numbers::pi * double(k) / double(n);
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = f;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.near = near;
    cam.far = far;
    cam.translation = Vec3d{radius * std::cos(phi), -elevation, radius * std::sin(phi)};
    const Vec3d fwd = (-1.0 * cam.translation).normalized();
    const Vec3d right = Vec3d{0, 1, 0}.cross(fwd).normalized();
    const Vec3d down = fwd.cross(right);
    cam.rotation = Mat3d::from_cols(right, down, fwd);
    cam.validate();
    cams.push_back(cam);
  }
  return cams;
}

// Analytic test scenes: first-hit ray casting against spheres and boxes with a
// view-independent procedural texture, which is exactly the photoconsistency
// the reprojection machinery assumes.
enum class TextureKind { flat, checker, smooth };

struct SynthSphere {
  Vec3d center;
  double radius = 0;
  Vec3d albedo{1, 1, 1};
};

struct SynthBox {
  Vec3d min, max;
  Vec3d albedo{1, 1, 1};
};

struct SyntheticSceneSpec {
  std::vector<SynthSphere> spheres;
  std::vector<SynthBox> boxes;
  TextureKind texture = TextureKind::flat;
  double texture_freq = 8.0;
  Vec3d background{0, 0, 0};
  Vec3d bbox_min{-1, -1, -1}, bbox_max{1, 1, 1};

  void validate() const {
    for (const SynthSphere& s : spheres) {
      if (!(s.radius > 0)) throw std::runtime_error("synthetic: sphere radius must be > 0");
      for (int a = 0; a < 3; ++a)
        if (s.center[a] - s.radius < bbox_min[a] || s.center[a] + s.radius > bbox_max[a])
          throw std::runtime_error("synthetic: sphere outside bbox");
    }
    for (const SynthBox& b : boxes)
      for (int a = 0; a < 3; ++a) {
        if (!(b.min[a] < b.max[a])) throw std::runtime_error("synthetic: degenerate box");
        if (b.min[a] < bbox_min[a] || b.max[a] > bbox_max[a])
          throw std::runtime_error("synthetic: box outside bbox");
      }
  }
};

namespace detail {

// Smallest t >= eps with o + t d on the sphere, or +inf.
inline double ray_sphere(const Vec3d& o, const Vec3d& d, const Vec3d& c, double r) {
  const Vec3d oc = o - c;
  const double b = d.dot(oc);
  const double disc = b * b - (oc.dot(oc) - r * r);
  if (disc < 0) return std::numeric_limits<double>::infinity();
  const double s = std::sqrt(disc);
  const double eps = 1e-9;
  if (-b - s >= eps) return -b - s;
  if (-b + s >= eps) return -b + s;
  return std::numeric_limits<double>::infinity();
}

// Slab test; entry point (or exit if the origin is inside).
inline double ray_box(const Vec3d& o, const Vec3d& d, const Vec3d& lo, const Vec3d& hi) {
  double t0 = 0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::numeric_limits<double>::infinity();
  const double eps = 1e-9;
  if (t0 >= eps) return t0;
  if (t1 >= eps) return t1;
  return std::numeric_limits<double>::infinity();
}

inline double texture_factor(const SyntheticSceneSpec& spec, const Vec3d& p) {
  switch (spec.texture) {
    case TextureKind::flat:
      return 1.0;
    case TextureKind::checker: {
      const long s = long(std::floor(p.x * spec.texture_freq)) +
                     long(std::floor(p.y * spec.texture_freq)) +
                     long(std::floor(p.z * spec.texture_freq));
      return (s & 1) ? 0.4 : 1.0;
    }
    case TextureKind::smooth:
      return 0.55 + 0.45 * std::sin(spec.texture_freq * p.x + 1.3) *
                        std::sin(spec.texture_freq * p.y + 2.1) *
                        std::sin(spec.texture_freq * p.z + 0.7);
  }
  return 1.0;
}

}  // namespace detail

struct SynthHit {
  double t = std::numeric_limits<double>::infinity();
  Vec3d color;
  bool hit = false;
};

inline SynthHit trace_synthetic(const SyntheticSceneSpec& spec, const Vec3d& origin,
                                const Vec3d& dir) {
  SynthHit best;
  Vec3d albedo;
  for (const SynthSphere& s : spec.spheres) {
    const double t = detail::ray_sphere(origin, dir, s.center, s.radius);
    if (t < best.t) {
      best.t = t;
      albedo = s.albedo;
      best.hit = true;
    }
  }
  for (const SynthBox& b : spec.boxes) {
    const double t = detail::ray_box(origin, dir, b.min, b.max);
    if (t < best.t) {
      best.t = t;
      albedo = b.albedo;
      best.hit = true;
    }
  }
  if (best.hit) {
    const Vec3d p = origin + best.t * dir;
    best.color = albedo * detail::texture_factor(spec, p);
  } else {
    best.color = spec.background;
  }
  return best;
}

// Renders every camera by analytic intersection; gt_depth gets the exact
// along-ray depth with +inf where the ray misses.
inline SceneDataset generate_synthetic(const SyntheticSceneSpec& spec,
                                       const std::vector<Camera>& cams,
                                       const std::vector<int>& test_ids = {}) {
  spec.validate();
  SceneDataset ds;
  ds.bbox_min = spec.bbox_min;
  ds.bbox_max = spec.bbox_max;
  ds.cameras = cams;
  ds.test_ids = test_ids;
  for (size_t i = 0; i < cams.size(); ++i)
    if (std::find(test_ids.begin(), test_ids.end(), int(i)) == test_ids.end())
      ds.train_ids.push_back(int(i));
  for (const Camera& cam : cams) {
    Image img(cam.width, cam.height, 3);
    Image depth(cam.width, cam.height, 1);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const Ray ray = ray_for_pixel(cam, {double(x), double(y)});
        const SynthHit hit = trace_synthetic(spec, ray.origin, ray.dir);
        float* px = img.pixel(x, y);
        px[0] = float(std::clamp(hit.color.x, 0.0, 1.0));
        px[1] = float(std::clamp(hit.color.y, 0.0, 1.0));
        px[2] = float(std::clamp(hit.color.z, 0.0, 1.0));
        depth.at(x, y, 0) = float(hit.t);
      }
    ds.images.push_back(std::move(img));
    ds.gt_depth.push_back(std::move(depth));
  }
  ds.validate();
  return ds;
}

inline Image resample_depth(const Image& map, int width, int height) {
  return resample_bilinear(map, width, height);
}

// Fraction of non-occluded pixels whose ground-truth color survives the warp
// into view j. Occlusion decided by a z-buffer check against j's depth map.
struct PhotoStats {
  size_t tested = 0;
  size_t consistent = 0;
  double ratio() const { return tested ? double(consistent) / double(tested) : 1.0; }
};

inline PhotoStats check_photoconsistency(const SceneDataset& ds, int i, int j, double color_tol,
                                         double depth_tol) {
  const Camera& cam_i = ds.cameras[size_t(i)];
  const Camera& cam_j = ds.cameras[size_t(j)];
  const Image& depth_i = ds.gt_depth[size_t(i)];
  const Image& depth_j = ds.gt_depth[size_t(j)];
  PhotoStats stats;
  for (int y = 0; y < cam_i.height; ++y)
    for (int x = 0; x < cam_i.width; ++x) {
      const double d = depth_i.at(x, y, 0);
      if (!std::isfinite(d) || d <= 0) continue;
      const Warp w = reproject({double(x), double(y)}, d, cam_i, cam_j);
      if (!w.valid) continue;
      // along-ray depth of the same 3D point as seen from j
      const double along_j = w.z * depth_scale_for_pixel(cam_j, w.px);
      const int jx = int(std::lround(w.px.u));
      const int jy = int(std::lround(w.px.v));
      if (!depth_j.in_bounds(jx, jy)) continue;
      const double stored = depth_j.at(jx, jy, 0);
      if (!std::isfinite(stored) || std::abs(stored - along_j) > depth_tol) continue;  // occluded
      ++stats.tested;
      const Vec3d cj = ds.images[size_t(j)].sample_rgb(w.px.u, w.px.v);
      const float* ci = ds.images[size_t(i)].pixel(x, y);
      const double err = std::max({std::abs(cj.x - ci[0]), std::abs(cj.y - ci[1]),
                                   std::abs(cj.z - ci[2])});
      if (err <= color_tol) ++stats.consistent;
    }
  return stats;
}

}  // namespace frugal
