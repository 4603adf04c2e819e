#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "frugal/adapt.hpp"
#include "frugal/field.hpp"
#include "frugal/geometry.hpp"
#include "frugal/image.hpp"
#include "frugal/losses.hpp"
#include "frugal/render.hpp"
#include "frugal/rng.hpp"
#include "frugal/threading.hpp"

namespace frugal {

struct PipelineConfig {
  int n_samples = 192;
  bool jitter = true;
  int patch_k = 4;           // train rays come in k x k patches
  int adapt_patch = 5;
  double adapt_threshold = 0.5;
  int novel_src_scale = -1;  // -1: render novel source patches per scale
  double occ_fraction = 0.1;
  bool include_ms_color = true;
  bool composite_background = false;
  Vec3d background{0, 0, 0};
  bool force_records = false;  // compute adaptation records even at zero geo weight

  void validate() const {
    if (n_samples < 2) throw std::invalid_argument("pipeline: n_samples must be >= 2");
    if (patch_k < 1) throw std::invalid_argument("pipeline: patch_k must be >= 1");
    if (adapt_patch < 1 || adapt_patch % 2 == 0)
      throw std::invalid_argument("pipeline: adapt_patch must be odd");
    if (!(occ_fraction > 0 && occ_fraction <= 1))
      throw std::invalid_argument("pipeline: occ_fraction must be in (0,1]");
  }
};

// Everything the loss pipeline needs about the scene, with view ids already
// compacted to train-list indices.
struct PipelineScene {
  std::vector<Camera> train_cams;
  std::vector<Image> train_images;
  std::vector<Camera> novel_cams;
  std::map<int, Image> mono;  // train index -> depth map at view dims, 1 channel
  Vec3d bbox_min{-1, -1, -1}, bbox_max{1, 1, 1};
};

// One sampling unit: a k x k train patch anchored at (u0, v0), or a novel
// center pixel. seed feeds the per-ray stratified jitter.
struct RayUnit {
  int cam = 0;
  int u0 = 0, v0 = 0;
  uint64_t seed = 0;
};

struct Batch {
  std::vector<RayUnit> train_units;
  std::vector<RayUnit> novel_units;
  std::vector<SparseDepthPoint> sd;  // view_id indexes the train camera list
  uint64_t seed = 0;                 // keys the sparse-depth ray jitter
};

struct PipelineResult {
  LossTerms terms;
  double total = 0;
  std::vector<AdaptationRecord> train_records, novel_records;
  size_t train_argmin_any = 0;     // train rays with a computable argmin
  size_t train_argmin_coarse = 0;  // of those, rays picking the coarsest scale
  size_t valid_train = 0, valid_novel = 0;
};

namespace detail {

struct PipelineRay {
  Ray ray;
  RaySamples samples;
  int cam = 0;  // index into the owning camera list
  int u = 0, v = 0;
};

inline PipelineRay make_pipeline_ray(const Camera& cam, int cam_idx, double u, double v,
                                     const Vec3d& bb_min, const Vec3d& bb_max, int n_samples,
                                     bool jitter, uint64_t seed) {
  PipelineRay pr;
  pr.cam = cam_idx;
  pr.u = int(std::lround(u));
  pr.v = int(std::lround(v));
  pr.ray = ray_for_pixel(cam, {u, v});
  const auto [b0, b1] = ray_bbox_range(pr.ray.origin, pr.ray.dir, bb_min, bb_max);
  pr.ray.near = std::max(pr.ray.near, b0);
  pr.ray.far = std::min(pr.ray.far, b1);
  pr.samples = sample_points(pr.ray, n_samples, jitter, seed);
  return pr;
}

}  // namespace detail

// Forward pass, loss assembly, and (optionally) the full adjoint sweep for one
// batch. Passing `frozen` reuses its adaptation records instead of recomputing
// them, which pins the pseudo-depth targets and scale selection: that is the
// regime finite-difference checks and the detached-pseudo-GT contract assume.
template <typename T>
PipelineResult run_pipeline(const VoxelField<T>& field, const PipelineScene& scene,
                            const Batch& batch, const PipelineConfig& pc,
                            const LossWeights& weights, ThreadPool& pool,
                            GradBuffer* grads = nullptr, const PipelineResult* frozen = nullptr) {
  pc.validate();
  weights.validate();
  const GridConfig& gc = field.config;
  const int L = gc.num_coarse_levels;
  const int S = L + 1;
  const int k = pc.patch_k, kk = k * k;
  const int ap = pc.adapt_patch, app = ap * ap;
  const int ar = ap / 2;

  std::vector<ScaleLattice> lattices;
  for (int l = 0; l <= L; ++l) lattices.push_back(scale_lattice(gc, l));
  RenderOptions ro;
  ro.composite_background = pc.composite_background;
  ro.background = pc.background;

  const bool want_records =
      !frozen && (weights.lambda_geo > 0 || pc.force_records) &&
      (!batch.train_units.empty() || !batch.novel_units.empty());
  if (want_records && scene.train_cams.size() < 2)
    throw std::invalid_argument("geometric adaptation needs at least two training views");

  // ---- ray construction -------------------------------------------------
  const size_t n_train = batch.train_units.size() * size_t(kk);
  const size_t n_novel = batch.novel_units.size();
  const size_t n_nb = frozen ? 0 : n_novel * size_t(app);
  const size_t n_sd = batch.sd.size();

  std::vector<detail::PipelineRay> train_rays(n_train), novel_rays(n_novel), nb_rays(n_nb),
      sd_rays(n_sd);
  for (size_t u = 0; u < batch.train_units.size(); ++u) {
    const RayUnit& unit = batch.train_units[u];
    const Camera& cam = scene.train_cams.at(size_t(unit.cam));
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx) {
        const size_t ord = size_t(dy) * k + dx;
        train_rays[u * kk + ord] =
            detail::make_pipeline_ray(cam, unit.cam, unit.u0 + dx, unit.v0 + dy, scene.bbox_min,
                                      scene.bbox_max, pc.n_samples, pc.jitter,
                                      hash_mix(unit.seed, ord));
      }
  }
  for (size_t u = 0; u < n_novel; ++u) {
    const RayUnit& unit = batch.novel_units[u];
    const Camera& cam = scene.novel_cams.at(size_t(unit.cam));
    if (unit.u0 < ar || unit.u0 > cam.width - 1 - ar || unit.v0 < ar ||
        unit.v0 > cam.height - 1 - ar)
      throw std::logic_error("novel center leaves no room for its source patch");
    const size_t center_ord = size_t(ar) * ap + ar;
    novel_rays[u] = detail::make_pipeline_ray(cam, unit.cam, unit.u0, unit.v0, scene.bbox_min,
                                              scene.bbox_max, pc.n_samples, pc.jitter,
                                              hash_mix(unit.seed, center_ord));
    if (!frozen)
      for (int dy = -ar; dy <= ar; ++dy)
        for (int dx = -ar; dx <= ar; ++dx) {
          const size_t ord = size_t(dy + ar) * ap + (dx + ar);
          nb_rays[u * app + ord] = detail::make_pipeline_ray(
              cam, unit.cam, unit.u0 + dx, unit.v0 + dy, scene.bbox_min, scene.bbox_max,
              pc.n_samples, pc.jitter, hash_mix(unit.seed, ord));
        }
  }
  for (size_t i = 0; i < n_sd; ++i) {
    const SparseDepthPoint& p = batch.sd[i];
    const Camera& cam = scene.train_cams.at(size_t(p.view_id));
    sd_rays[i] = detail::make_pipeline_ray(cam, p.view_id, p.u, p.v, scene.bbox_min,
                                           scene.bbox_max, pc.n_samples, pc.jitter,
                                           hash_mix(batch.seed, 0x5dULL, i));
  }

  // ---- forward renders ---------------------------------------------------
  // Tapes are only needed for the adjoint sweep; forward-only calls (loss
  // evaluation, finite differences) skip them.
  std::vector<RenderOutput> train_out(n_train * S), novel_out(n_novel * S), sd_out(n_sd);
  std::vector<RenderTape> train_tape(grads ? n_train * S : 0),
      novel_tape(grads ? n_novel * S : 0), sd_tape(grads ? n_sd : 0);
  std::vector<Vec3d> nb_colors(n_nb * S);

  pool.parallel_for(n_train * S, [&](size_t b, size_t e, int) {
    for (size_t j = b; j < e; ++j) {
      const detail::PipelineRay& pr = train_rays[j / S];
      const int l = int(j % S);
      train_out[j] =
          render_ray(field, pr.ray, lattices[l], pr.samples, ro, grads ? &train_tape[j] : nullptr);
    }
  });
  pool.parallel_for(n_novel * S, [&](size_t b, size_t e, int) {
    for (size_t j = b; j < e; ++j) {
      const detail::PipelineRay& pr = novel_rays[j / S];
      const int l = int(j % S);
      novel_out[j] =
          render_ray(field, pr.ray, lattices[l], pr.samples, ro, grads ? &novel_tape[j] : nullptr);
    }
  });
  pool.parallel_for(n_nb * S, [&](size_t b, size_t e, int) {
    for (size_t j = b; j < e; ++j) {
      const detail::PipelineRay& pr = nb_rays[j / S];
      const int l = int(j % S);
      nb_colors[j] = render_ray(field, pr.ray, lattices[l], pr.samples, ro).color;
    }
  });
  pool.parallel_for(n_sd, [&](size_t b, size_t e, int) {
    for (size_t j = b; j < e; ++j)
      sd_out[j] = render_ray(field, sd_rays[j].ray, lattices[0], sd_rays[j].samples, ro,
                             grads ? &sd_tape[j] : nullptr);
  });

  // ---- adaptation records ------------------------------------------------
  PipelineResult res;
  std::vector<int> nearest_j(scene.train_cams.size(), -1);
  if (want_records && scene.train_cams.size() >= 2)
    for (size_t i = 0; i < scene.train_cams.size(); ++i)
      nearest_j[i] = nearest_view(scene.train_cams, scene.train_cams[i].translation, int(i));

  if (frozen) {
    res.train_records = frozen->train_records;
    res.novel_records = frozen->novel_records;
  } else if (want_records) {
    res.train_records.resize(n_train);
    for (size_t r = 0; r < n_train; ++r) {
      const detail::PipelineRay& pr = train_rays[r];
      const int j = nearest_j[size_t(pr.cam)];
      std::vector<double> errors(S, kNoError), depths(S, 0.0);
      for (int l = 0; l < S; ++l) {
        depths[l] = train_out[r * S + l].depth;
        const auto e = train_scale_error(scene.train_images[size_t(pr.cam)],
                                         scene.train_images[size_t(j)],
                                         scene.train_cams[size_t(pr.cam)],
                                         scene.train_cams[size_t(j)],
                                         {double(pr.u), double(pr.v)}, depths[l], ap);
        if (e) errors[l] = *e;
      }
      res.train_records[r] = select_scale(errors, depths, pc.adapt_threshold);
    }
    res.novel_records.resize(n_novel);
    for (size_t r = 0; r < n_novel; ++r) {
      const detail::PipelineRay& pr = novel_rays[r];
      const Camera& cam_n = scene.novel_cams[size_t(pr.cam)];
      const int j = nearest_view(scene.train_cams, cam_n.translation);
      std::vector<double> errors(S, kNoError), depths(S, 0.0);
      std::vector<Vec3d> src(app);
      for (int l = 0; l < S; ++l) {
        depths[l] = novel_out[r * S + l].depth;
        const int src_l = pc.novel_src_scale >= 0 ? pc.novel_src_scale : l;
        for (int p = 0; p < app; ++p) src[size_t(p)] = nb_colors[(r * app + p) * S + src_l];
        const auto e = rendered_scale_error(src, scene.train_images[size_t(j)], cam_n,
                                            scene.train_cams[size_t(j)],
                                            {double(pr.u), double(pr.v)}, depths[l], ap);
        if (e) errors[l] = *e;
      }
      res.novel_records[r] = select_scale(errors, depths, pc.adapt_threshold);
    }
  }
  for (const AdaptationRecord& rec : res.train_records) {
    if (rec.selected >= 0) {
      ++res.train_argmin_any;
      if (rec.selected == L) ++res.train_argmin_coarse;
    }
    res.valid_train += rec.valid ? 1 : 0;
  }
  for (const AdaptationRecord& rec : res.novel_records) res.valid_novel += rec.valid ? 1 : 0;

  // ---- losses and output-side adjoints ----------------------------------
  std::vector<Vec3d> dC(n_train * S + n_novel * S);
  std::vector<double> dD(n_train * S + n_novel * S + n_sd, 0.0);
  const size_t novel_base = n_train * S;
  const size_t sd_base = novel_base + n_novel * S;
  std::vector<std::vector<double>> dw_train, dw_novel;

  if (pc.include_ms_color && n_train > 0) {
    std::vector<std::vector<Vec3d>> rendered(S, std::vector<Vec3d>(n_train));
    std::vector<Vec3d> gt(n_train);
    for (size_t r = 0; r < n_train; ++r) {
      const detail::PipelineRay& pr = train_rays[r];
      const float* px = scene.train_images[size_t(pr.cam)].pixel(pr.u, pr.v);
      gt[r] = {px[0], px[1], px[2]};
      for (int l = 0; l < S; ++l) rendered[size_t(l)][r] = train_out[r * S + l].color;
    }
    std::vector<std::vector<Vec3d>> d_rendered(S, std::vector<Vec3d>(n_train));
    res.terms.ms_color = ms_color_loss(rendered, gt, &d_rendered);
    for (size_t r = 0; r < n_train; ++r)
      for (int l = 0; l < S; ++l) dC[r * S + l] += d_rendered[size_t(l)][r];
  }

  if (!res.train_records.empty() || !res.novel_records.empty()) {
    std::vector<std::vector<double>> depths_tr(n_train, std::vector<double>(S)),
        dd_tr(n_train, std::vector<double>(S, 0.0));
    for (size_t r = 0; r < n_train; ++r)
      for (int l = 0; l < S; ++l) depths_tr[r][size_t(l)] = train_out[r * S + l].depth;
    std::vector<std::vector<double>> depths_nv(n_novel, std::vector<double>(S)),
        dd_nv(n_novel, std::vector<double>(S, 0.0));
    for (size_t r = 0; r < n_novel; ++r)
      for (int l = 0; l < S; ++l) depths_nv[r][size_t(l)] = novel_out[r * S + l].depth;
    res.terms.geo = geo_loss(res.train_records, depths_tr, &dd_tr) +
                    geo_loss(res.novel_records, depths_nv, &dd_nv);
    if (weights.lambda_geo > 0) {
      for (size_t r = 0; r < n_train; ++r)
        for (int l = 0; l < S; ++l) dD[r * S + l] += weights.lambda_geo * dd_tr[r][size_t(l)];
      for (size_t r = 0; r < n_novel; ++r)
        for (int l = 0; l < S; ++l)
          dD[novel_base + r * S + l] += weights.lambda_geo * dd_nv[r][size_t(l)];
    }
  }

  if (k >= 2 && !batch.train_units.empty()) {
    std::vector<std::vector<double>> patches(batch.train_units.size(),
                                             std::vector<double>(kk));
    for (size_t u = 0; u < batch.train_units.size(); ++u)
      for (int p = 0; p < kk; ++p) patches[u][size_t(p)] = train_out[(u * kk + p) * S].depth;
    std::vector<std::vector<double>> dp(batch.train_units.size(), std::vector<double>(kk, 0.0));
    res.terms.ds = depth_smoothness_loss(patches, k, k, &dp);
    if (weights.lambda_ds > 0)
      for (size_t u = 0; u < batch.train_units.size(); ++u)
        for (int p = 0; p < kk; ++p) dD[(u * kk + p) * S] += weights.lambda_ds * dp[u][size_t(p)];
  }

  if (!scene.mono.empty() && kk >= 16) {
    size_t n_mono = 0;
    for (const RayUnit& unit : batch.train_units) n_mono += scene.mono.count(unit.cam);
    if (n_mono > 0) {
      res.terms.mono_present = true;
      const double unit_scale = 1.0 / double(n_mono);
      for (size_t u = 0; u < batch.train_units.size(); ++u) {
        const RayUnit& unit = batch.train_units[u];
        const auto it = scene.mono.find(unit.cam);
        if (it == scene.mono.end()) continue;
        std::vector<double> ext(kk);
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx)
            ext[size_t(dy) * k + dx] = it->second.at(unit.u0 + dx, unit.v0 + dy, 0);
        for (int l = 0; l < S; ++l) {
          std::vector<double> x(kk), dx(kk, 0.0);
          for (int p = 0; p < kk; ++p) x[size_t(p)] = train_out[(u * kk + p) * S + l].depth;
          res.terms.mono += pearson_loss(x, ext, &dx, unit_scale) * unit_scale;
          if (weights.lambda_d > 0)
            for (int p = 0; p < kk; ++p)
              dD[(u * kk + p) * S + l] += weights.lambda_d * dx[size_t(p)];
        }
      }
    }
  }

  const size_t n_reg_rays = n_train + n_novel;  // distortion and occlusion, finest scale
  if (n_reg_rays > 0) {
    const bool want_dw = grads && (weights.lambda_dist > 0 || weights.lambda_occ > 0);
    if (want_dw) {
      dw_train.assign(n_train, {});
      dw_novel.assign(n_novel, {});
    }
    const double inv_rays = 1.0 / double(n_reg_rays);
    auto reg_ray = [&](const detail::PipelineRay& pr, const RenderOutput& out,
                       std::vector<double>* dw) {
      const size_t n = out.weights.size();
      if (n == 0) return;
      double* dptr = nullptr;
      if (dw) {
        dw->assign(n, 0.0);
        dptr = dw->data();
      }
      // distortion midpoints normalized to the ray's clipped [near, far]
      const double span = pr.ray.far - pr.ray.near;
      std::vector<double> m(n);
      for (size_t i = 0; i < n; ++i) m[i] = (out.midpoints[i] - pr.ray.near) / span;
      res.terms.dist += distortion_loss_ray(out.weights.data(), m.data(),
                                            pr.samples.delta.data(), n, dptr,
                                            weights.lambda_dist * inv_rays) * inv_rays;
      res.terms.occ += occlusion_loss_ray(out.weights.data(), n, pc.occ_fraction, dptr,
                                          weights.lambda_occ * inv_rays) * inv_rays;
    };
    for (size_t r = 0; r < n_train; ++r)
      reg_ray(train_rays[r], train_out[r * S], want_dw ? &dw_train[r] : nullptr);
    for (size_t r = 0; r < n_novel; ++r)
      reg_ray(novel_rays[r], novel_out[r * S], want_dw ? &dw_novel[r] : nullptr);
  }

  if (n_sd > 0) {
    std::vector<double> rendered(n_sd), target(n_sd), dd(n_sd, 0.0);
    for (size_t i = 0; i < n_sd; ++i) {
      rendered[i] = sd_out[i].depth;
      target[i] = batch.sd[i].depth;
    }
    res.terms.sd = sparse_depth_loss(rendered, target, &dd);
    if (weights.lambda_sd > 0)
      for (size_t i = 0; i < n_sd; ++i) dD[sd_base + i] += weights.lambda_sd * dd[i];
  }

  {
    const TvLoss tv = tv_loss(field, grads, weights.lambda_tv_density,
                              weights.lambda_tv_appearance);
    res.terms.tv_density = tv.density;
    res.terms.tv_appearance = tv.appearance;
    res.terms.l1 = l1_sparsity_loss(field, grads, weights.lambda_l1);
  }
  res.total = total_loss(res.terms, weights);

  // ---- adjoint sweep -----------------------------------------------------
  if (grads) {
    const size_t n_jobs = n_train * S + n_novel * S + n_sd;
    std::vector<GradBuffer> wb(size_t(pool.workers()));
    for (auto& b : wb) b.resize_like(field.density_raw.size(), field.appearance_raw.size());
    pool.parallel_for(n_jobs, [&](size_t b, size_t e, int w) {
      for (size_t j = b; j < e; ++j) {
        const detail::PipelineRay* pr;
        const RenderTape* tape;
        OutputGrad og;
        if (j < novel_base) {
          const size_t r = j / S;
          pr = &train_rays[r];
          tape = &train_tape[j];
          og.d_color = dC[j];
          og.d_depth = dD[j];
          if (j % S == 0 && r < dw_train.size() && !dw_train[r].empty())
            og.d_weights = dw_train[r].data();
        } else if (j < sd_base) {
          const size_t jj = j - novel_base;
          const size_t r = jj / S;
          pr = &novel_rays[r];
          tape = &novel_tape[jj];
          og.d_color = dC[j];
          og.d_depth = dD[j];
          if (jj % S == 0 && r < dw_novel.size() && !dw_novel[r].empty())
            og.d_weights = dw_novel[r].data();
        } else {
          const size_t i = j - sd_base;
          pr = &sd_rays[i];
          tape = &sd_tape[i];
          og.d_depth = dD[j];
        }
        const bool zero = og.d_color.x == 0 && og.d_color.y == 0 && og.d_color.z == 0 &&
                          og.d_depth == 0 && og.d_weights == nullptr;
        if (!zero) render_ray_backward(field, pr->ray, pr->samples, *tape, ro, og, wb[size_t(w)]);
      }
    });
    for (const GradBuffer& b : wb) grads->add(b);
  }
  return res;
}

}  // namespace frugal
