#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "frugal/field.hpp"
#include "frugal/geometry.hpp"
#include "frugal/image.hpp"
#include "frugal/render.hpp"

namespace frugal {

// Per-ray result of cross-scale selection. `errors` holds +inf where the warp
// could not be evaluated (behind camera, patch off-image). `selected` is the
// pre-threshold argmin (kept even when valid is false, for diagnostics);
// `valid` additionally requires the winning error to pass the threshold.
struct AdaptationRecord {
  std::vector<double> errors;
  int selected = -1;
  double pseudo_depth = 0;
  bool valid = false;
};

struct AdaptOptions {
  int patch = 5;
  double threshold = 0.5;
  int n_samples = 128;
  bool jitter = false;
  uint64_t seed = 0;
  // Novel-ray source patches are rendered at the scale being scored; set >= 0
  // to render the source once at a fixed scale instead.
  int novel_src_scale = -1;
};

inline constexpr double kNoError = std::numeric_limits<double>::infinity();

// Argmin over computable errors, ties broken toward the coarsest scale.
inline AdaptationRecord select_scale(const std::vector<double>& errors,
                                     const std::vector<double>& depths, double threshold) {
  if (errors.size() != depths.size())
    throw std::invalid_argument("select_scale: errors/depths size mismatch");
  AdaptationRecord rec;
  rec.errors = errors;
  for (size_t l = 0; l < errors.size(); ++l) {
    if (!std::isfinite(errors[l])) continue;
    if (rec.selected < 0 || errors[l] <= rec.errors[rec.selected]) rec.selected = int(l);
  }
  if (rec.selected >= 0) {
    rec.pseudo_depth = depths[rec.selected];
    rec.valid = rec.errors[rec.selected] <= threshold;
  }
  return rec;
}

// Mean squared RGB difference between a prefetched source patch and a
// bilinearly sampled destination patch centered at `warped`. Patch rows are
// (dy, dx) in row-major order. nullopt if any destination tap is off-image.
inline std::optional<double> patch_error_from_colors(const std::vector<Vec3d>& src,
                                                     const Image& dst, const PixelCoord& warped,
                                                     int patch) {
  if (patch < 1 || patch % 2 == 0) throw std::invalid_argument("patch size must be odd");
  if (src.size() != size_t(patch) * patch)
    throw std::invalid_argument("patch_error_from_colors: source patch size mismatch");
  if (dst.channels != 3) throw std::invalid_argument("patch_error_from_colors: expected RGB");
  const int r = patch / 2;
  double sum = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double u = warped.u + dx;
      const double v = warped.v + dy;
      if (!dst.can_sample(u, v)) return std::nullopt;
      const Vec3d d = dst.sample_rgb(u, v);
      const Vec3d s = src[size_t(dy + r) * patch + (dx + r)];
      sum += sqr(s.x - d.x) + sqr(s.y - d.y) + sqr(s.z - d.z);
    }
  }
  return sum / (double(patch) * patch * 3.0);
}

// Same, source taken from an image at integer offsets around px (which must be
// integer-centered). nullopt if either patch leaves its image.
inline std::optional<double> patch_reproj_error(const Image& src_img, const Image& dst_img,
                                                const PixelCoord& px, const PixelCoord& warped,
                                                int patch) {
  if (patch < 1 || patch % 2 == 0) throw std::invalid_argument("patch size must be odd");
  if (src_img.channels != 3) throw std::invalid_argument("patch_reproj_error: expected RGB");
  const int r = patch / 2;
  const int iu = int(std::lround(px.u));
  const int iv = int(std::lround(px.v));
  if (iu - r < 0 || iu + r >= src_img.width || iv - r < 0 || iv + r >= src_img.height)
    return std::nullopt;
  std::vector<Vec3d> src(size_t(patch) * patch);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const float* p = src_img.pixel(iu + dx, iv + dy);
      src[size_t(dy + r) * patch + (dx + r)] = {p[0], p[1], p[2]};
    }
  return patch_error_from_colors(src, dst_img, warped, patch);
}

// Error of one scale for a train ray: warp px from view i into view j at the
// rendered depth, compare input-image patches.
inline std::optional<double> train_scale_error(const Image& img_i, const Image& img_j,
                                               const Camera& cam_i, const Camera& cam_j,
                                               const PixelCoord& px, double depth, int patch) {
  if (!(depth > 0)) return std::nullopt;
  const Warp w = reproject(px, depth, cam_i, cam_j);
  if (!w.valid) return std::nullopt;
  return patch_reproj_error(img_i, img_j, px, w.px, patch);
}

// Error of one scale for a novel ray: the source patch was rendered, the
// destination is a training view's input image.
inline std::optional<double> rendered_scale_error(const std::vector<Vec3d>& src_patch,
                                                  const Image& img_j, const Camera& cam_n,
                                                  const Camera& cam_j, const PixelCoord& px,
                                                  double depth, int patch) {
  if (!(depth > 0)) return std::nullopt;
  const Warp w = reproject(px, depth, cam_n, cam_j);
  if (!w.valid) return std::nullopt;
  return patch_error_from_colors(src_patch, img_j, w.px, patch);
}

// Full adaptation for one training ray: render every scale, score each against
// the nearest other training view, select.
template <typename T>
AdaptationRecord adapt_train_ray(const VoxelField<T>& field, int view_i, const PixelCoord& px,
                                 const std::vector<Camera>& cams, const std::vector<Image>& images,
                                 const AdaptOptions& opt = {}) {
  if (cams.size() < 2)
    throw std::invalid_argument("adapt_train_ray: need at least two training views");
  const int j = nearest_view(cams, cams[view_i].translation, view_i);
  const Ray ray = ray_for_pixel(cams[view_i], px);
  const RaySamples samples = sample_points(ray, opt.n_samples, opt.jitter, opt.seed);
  const int L = field.config.num_coarse_levels;
  std::vector<double> errors(L + 1, kNoError), depths(L + 1, 0.0);
  for (int l = 0; l <= L; ++l) {
    const RenderOutput out = render_ray(field, ray, scale_lattice(field.config, l), samples);
    depths[l] = out.depth;
    const auto e = train_scale_error(images[view_i], images[j], cams[view_i], cams[j], px,
                                     out.depth, opt.patch);
    if (e) errors[l] = *e;
  }
  return select_scale(errors, depths, opt.threshold);
}

// Renders the patch x patch block of rays centered at integer px, one color
// per pixel, at the given scale. px must keep the whole block on-image.
template <typename T>
std::vector<Vec3d> render_patch_colors(const VoxelField<T>& field, const Camera& cam,
                                       const PixelCoord& px, int level, int patch, int n_samples,
                                       bool jitter, uint64_t seed) {
  const int r = patch / 2;
  const ScaleLattice lat = scale_lattice(field.config, level);
  std::vector<Vec3d> colors(size_t(patch) * patch);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const PixelCoord q{px.u + dx, px.v + dy};
      const Ray ray = ray_for_pixel(cam, q);
      const RaySamples s = sample_points(ray, n_samples, jitter, seed);
      colors[size_t(dy + r) * patch + (dx + r)] = render_ray(field, ray, lat, s).color;
    }
  return colors;
}

// Full adaptation for one novel ray. cam_n is not part of cams; exclude_view
// exists for diagnostics where the novel pose coincides with a training view.
template <typename T>
AdaptationRecord adapt_novel_ray(const VoxelField<T>& field, const Camera& cam_n,
                                 const PixelCoord& px, const std::vector<Camera>& cams,
                                 const std::vector<Image>& images, const AdaptOptions& opt = {},
                                 int exclude_view = -1) {
  if (cams.empty() || (exclude_view >= 0 && cams.size() < 2))
    throw std::invalid_argument("adapt_novel_ray: need at least one training view");
  const int j = nearest_view(cams, cam_n.translation, exclude_view);
  const int L = field.config.num_coarse_levels;
  std::vector<double> errors(L + 1, kNoError), depths(L + 1, 0.0);
  const int r = opt.patch / 2;
  if (px.u - r < 0 || px.u + r > cam_n.width - 1 || px.v - r < 0 || px.v + r > cam_n.height - 1)
    return select_scale(errors, depths, opt.threshold);  // source patch off-image
  const Ray ray = ray_for_pixel(cam_n, px);
  const RaySamples samples = sample_points(ray, opt.n_samples, opt.jitter, opt.seed);
  std::vector<Vec3d> fixed_src;
  if (opt.novel_src_scale >= 0)
    fixed_src = render_patch_colors(field, cam_n, px, opt.novel_src_scale, opt.patch,
                                    opt.n_samples, opt.jitter, opt.seed);
  for (int l = 0; l <= L; ++l) {
    const RenderOutput out = render_ray(field, ray, scale_lattice(field.config, l), samples);
    depths[l] = out.depth;
    const std::vector<Vec3d> src =
        opt.novel_src_scale >= 0 ? fixed_src
                                 : render_patch_colors(field, cam_n, px, l, opt.patch,
                                                       opt.n_samples, opt.jitter, opt.seed);
    const auto e = rendered_scale_error(src, images[j], cam_n, cams[j], px, out.depth, opt.patch);
    if (e) errors[l] = *e;
  }
  return select_scale(errors, depths, opt.threshold);
}

// Sum over scales of squared depth error against the detached pseudo depth,
// averaged over valid rays. depths[r][l] must line up with records[r].
// Gradients are accumulated into d_depths when given (same shape).
inline double geo_loss(const std::vector<AdaptationRecord>& records,
                       const std::vector<std::vector<double>>& depths,
                       std::vector<std::vector<double>>* d_depths = nullptr) {
  if (records.size() != depths.size())
    throw std::invalid_argument("geo_loss: records/depths size mismatch");
  size_t n_valid = 0;
  for (const auto& rec : records) n_valid += rec.valid ? 1 : 0;
  if (n_valid == 0) return 0.0;
  double loss = 0;
  const double inv = 1.0 / double(n_valid);
  for (size_t rix = 0; rix < records.size(); ++rix) {
    const AdaptationRecord& rec = records[rix];
    if (!rec.valid) continue;
    for (size_t l = 0; l < depths[rix].size(); ++l) {
      const double diff = depths[rix][l] - rec.pseudo_depth;
      loss += sqr(diff) * inv;
      if (d_depths) (*d_depths)[rix][l] += 2.0 * diff * inv;
    }
  }
  return loss;
}

}  // namespace frugal
