// Release gate: each criterion prints one [PASS]/[FAIL] line with its measured
// numbers and the tolerance it was held to. Exit status 0 only if every line
// passed. Optional argv (criterion numbers) restricts the run to a subset.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "frugal/adapt.hpp"
#include "frugal/data.hpp"
#include "frugal/metrics.hpp"
#include "frugal/train.hpp"

using namespace frugal;

namespace {

// Pinned acceptance tolerances.
constexpr double kGradTol = 1e-5;           // finite-difference agreement, f64
constexpr double kRenderTol = 1e-4;         // constant-field closed form
constexpr double kWarpTol = 1e-9;           // reprojection identities
constexpr double kShareTol = 1e-12;         // strided vs materialized sampling
constexpr double kPhotoRatio = 0.99;        // photoconsistent fraction
constexpr double kPlantedFraction = 0.95;   // planted-scale selection rate
constexpr double kHeldOutPsnrFloor = 22.0;  // pinned from the first verified
                                            // run of the ablation fixture
constexpr double kGradTimeLimit = 60.0;
constexpr double kRenderTimeLimit = 30.0;
constexpr double kAblationRunLimit = 900.0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string str(const char* fmt, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

LossWeights zero_weights() {
  LossWeights lw;
  lw.lambda_geo = lw.lambda_sd = lw.lambda_d = lw.lambda_tv_density = lw.lambda_tv_appearance =
      lw.lambda_ds = lw.lambda_l1 = lw.lambda_dist = lw.lambda_occ = 0.0;
  return lw;
}

// Two textured spheres on a 3-camera orbit with sparse and mono depth; small
// enough that the f64 gradient battery stays fast.
SceneDataset small_orbit_dataset() {
  SyntheticSceneSpec spec;
  spec.spheres.push_back({{-0.3, 0.0, 0.0}, 0.35, {0.9, 0.55, 0.25}});
  spec.spheres.push_back({{0.35, 0.05, 0.1}, 0.25, {0.3, 0.6, 0.9}});
  spec.texture = TextureKind::smooth;
  const std::vector<Camera> cams = orbit_cameras(3, 24, 24, 55.0, 2.6, 0.4, 1.2, 4.5);
  SceneDataset ds = generate_synthetic(spec, cams, {});
  std::mt19937_64 rng(0xc6ULL);
  for (int id : ds.train_ids) {
    int collected = 0;
    for (int attempt = 0; collected < 4 && attempt < 400; ++attempt) {
      const int x = int(rng() % 24), y = int(rng() % 24);
      const double d = ds.gt_depth[size_t(id)].at(x, y, 0);
      if (!std::isfinite(d) || d <= 0) continue;
      ds.sparse_depth.push_back({id, double(x), double(y), d});
      ++collected;
    }
  }
  for (int id : {0, 1}) {
    Image mono(24, 24, 1);
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        const double d = ds.gt_depth[size_t(id)].at(x, y, 0);
        mono.at(x, y, 0) = float(1.2 * (std::isfinite(d) && d > 0 ? d : 4.5) + 0.1);
      }
    ds.mono_depth.emplace(id, std::move(mono));
  }
  return ds;
}

// ---- 1. gradient integrity ------------------------------------------------

bool crit_gradients(std::string& detail) {
  Timer timer;
  GridConfig gc;
  gc.base_res = 8;
  gc.downsample_ratio = 2;
  gc.num_coarse_levels = 2;
  const SceneDataset ds = small_orbit_dataset();
  SpiralConfig sc;
  sc.n_poses = 4;
  sc.radius_scale = 0.7;
  PipelineScene scene = build_pipeline_scene(ds, gc, spiral_poses(ds.train_cameras(), sc));

  VoxelField<double> field(gc);
  init_field(field, 7);
  // bias toward a semi-opaque volume so depth-driven terms have signal
  const double shift = softplus_inv(0.6) - softplus_inv(1e-2);
  for (double& v : field.density_raw) v += shift;
  std::mt19937_64 arng(11);
  std::uniform_real_distribution<double> ua(-0.6, 0.6);
  for (double& v : field.appearance_raw) v = ua(arng);

  Batch batch;
  batch.seed = 0xbeefULL;
  for (int i = 0; i < 2; ++i) {
    RayUnit u;
    u.cam = i;
    u.u0 = 9 + 2 * i;
    u.v0 = 10 - i;
    u.seed = hash_mix(batch.seed, uint64_t(i));
    batch.train_units.push_back(u);
  }
  for (int i = 0; i < 2; ++i) {
    RayUnit u;
    u.cam = i % int(scene.novel_cams.size());
    u.u0 = 10 + 3 * i;
    u.v0 = 11 - 2 * i;
    u.seed = hash_mix(batch.seed, uint64_t(100 + i));
    batch.novel_units.push_back(u);
  }
  batch.sd = compact_sparse_depth(ds);

  ThreadPool pool(worker_count());
  PipelineConfig pc;
  pc.n_samples = 48;

  struct Battery {
    const char* name;
    bool include_ms;
    double LossWeights::* weight;
    double threshold;  // huge keeps every computable adaptation record valid
  };
  const Battery batteries[] = {
      {"ms_color", true, nullptr, 0.5},
      {"geo", false, &LossWeights::lambda_geo, 1e9},
      {"tv_density", false, &LossWeights::lambda_tv_density, 0.5},
      {"tv_appearance", false, &LossWeights::lambda_tv_appearance, 0.5},
      {"ds", false, &LossWeights::lambda_ds, 0.5},
      {"l1", false, &LossWeights::lambda_l1, 0.5},
      {"dist", false, &LossWeights::lambda_dist, 0.5},
      {"occ", false, &LossWeights::lambda_occ, 0.5},
      {"sd", false, &LossWeights::lambda_sd, 0.5},
      {"mono", false, &LossWeights::lambda_d, 0.5},
  };
  double worst = 0;
  const char* worst_name = "none";
  for (const Battery& b : batteries) {
    LossWeights lw = zero_weights();
    if (b.weight) lw.*(b.weight) = 1.0;
    PipelineConfig bpc = pc;
    bpc.include_ms_color = b.include_ms;
    bpc.adapt_threshold = b.threshold;
    const GradCheckReport rep = grad_check(field, scene, batch, bpc, lw, pool, 64);
    if (rep.checked == 0) {
      detail = str("term %s produced no checkable gradients", b.name);
      return false;
    }
    if (rep.max_rel_err > worst) {
      worst = rep.max_rel_err;
      worst_name = b.name;
    }
  }
  const GradCheckReport all = grad_check(field, scene, batch, pc, LossWeights{}, pool, 96);
  if (all.max_rel_err > worst) {
    worst = all.max_rel_err;
    worst_name = "combined";
  }
  const double secs = timer.seconds();
  detail = str("max rel err %.2e (worst: %s, tol %.0e), combined checked %zu, %.1fs (limit %.0fs)",
               worst, worst_name, kGradTol, all.checked, secs, kGradTimeLimit);
  return worst < kGradTol && all.checked > 32 && secs < kGradTimeLimit;
}

// ---- 2. rendering oracle --------------------------------------------------

bool crit_render_oracle(std::string& detail) {
  Timer timer;
  // A constant field integrates exactly: C = c (1 - exp(-sigma (far - near))),
  // and the same value must come out of every lattice scale.
  GridConfig gc;
  gc.base_res = 8;
  gc.downsample_ratio = 2;
  gc.num_coarse_levels = 1;
  double worst_cf = 0;
  for (double sigma0 : {0.7, 2.5}) {
    VoxelField<double> field(gc);
    const Vec3d c0{0.8, 0.55, 0.3};
    const double zraw = softplus_inv(sigma0);
    for (size_t i = 0; i < field.density_raw.size(); ++i) {
      field.density_raw[i] = zraw;
      for (int ch = 0; ch < 3; ++ch)
        field.appearance_raw[i * 3 + ch] = std::log(c0[ch] / (1.0 - c0[ch]));
    }
    const Ray rays[] = {
        {{-0.9, 0.05, -0.1}, {1, 0, 0}, 0.05, 1.7},
        {{-0.7, -0.7, -0.4}, Vec3d{1, 1, 0.5}.normalized(), 0.1, 1.5},
    };
    for (const Ray& ray : rays)
      for (int l = 0; l <= 1; ++l) {
        const RaySamples s = sample_points(ray, 4096, false, 0);
        const RenderOutput out = render_ray(field, ray, scale_lattice(gc, l), s);
        const double om = 1.0 - std::exp(-sigma0 * (ray.far - ray.near));
        for (int ch = 0; ch < 3; ++ch)
          worst_cf = std::max(worst_cf, std::abs(out.color[ch] - c0[ch] * om));
        worst_cf = std::max(worst_cf, std::abs(out.opacity - om));
      }
  }

  // Weight invariants over random rays through a random field. w_i >= 0 with
  // every prefix sum <= 1 certifies a nonincreasing transmittance, because
  // T_{i+1} = T_i - w_i.
  GridConfig rc;
  rc.base_res = 16;
  rc.downsample_ratio = 2;
  rc.num_coarse_levels = 2;
  VoxelField<double> rf(rc);
  std::mt19937_64 rng(0x2e5ULL);
  std::uniform_real_distribution<double> ud(-2.0, 3.0), uapp(-1.0, 1.0), upt(-0.6, 0.6);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& v : rf.density_raw) v = ud(rng);
  for (auto& v : rf.appearance_raw) v = uapp(rng);

  size_t tested = 0, bad = 0;
  double max_sum = 0;
  while (tested < 100000) {
    Vec3d o{nd(rng), nd(rng), nd(rng)};
    const double on = o.norm();
    if (on < 1e-6) continue;
    o = (2.2 / on) * o;
    const Vec3d target{upt(rng), upt(rng), upt(rng)};
    const Vec3d dir = (target - o).normalized();
    const auto [t0, t1] = ray_bbox_range(o, dir, rc.bbox_min, rc.bbox_max);
    if (!(t1 > std::max(t0, 1e-3))) continue;
    const Ray ray{o, dir, std::max(t0, 1e-3), t1};
    const RaySamples s = sample_points(ray, 64, true, tested);
    const RenderOutput out = render_ray(rf, ray, scale_lattice(rc, int(tested % 3)), s);
    bool ok = std::isfinite(out.depth) && out.depth >= 0;
    double acc = 0;
    for (double w : out.weights) {
      if (w < 0) ok = false;
      acc += w;
      if (acc > 1.0 + 1e-9) ok = false;
    }
    max_sum = std::max(max_sum, acc);
    if (std::abs(acc - out.opacity) > 1e-9) ok = false;
    if (!ok) ++bad;
    ++tested;
  }
  const double secs = timer.seconds();
  detail = str("closed-form err %.2e (tol %.0e); %zu/%zu rays broke weight invariants, "
               "max sum(w) %.9f; %.1fs (limit %.0fs)",
               worst_cf, kRenderTol, bad, tested, max_sum, secs, kRenderTimeLimit);
  return worst_cf < kRenderTol && bad == 0 && secs < kRenderTimeLimit;
}

// ---- 3. reprojection oracle -----------------------------------------------

Mat3d axis_angle(const Vec3d& axis, double angle) {
  const Vec3d a = axis.normalized();
  const double c = std::cos(angle), s = std::sin(angle);
  Vec3d cols[3];
  for (int j = 0; j < 3; ++j) {
    Vec3d e;
    e[j] = 1.0;
    cols[j] = c * e + s * a.cross(e) + (1.0 - c) * a[j] * a;
  }
  return Mat3d::from_cols(cols[0], cols[1], cols[2]);
}

bool crit_reprojection(std::string& detail) {
  std::mt19937_64 rng(0x3aULL);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto random_rot = [&]() {
    return axis_angle({nd(rng), nd(rng), nd(rng)}, (2.0 * u01(rng) - 1.0) * std::numbers::pi);
  };
  auto random_cam = [&]() {
    Camera c;
    c.fx = 40 + 80 * u01(rng);
    c.fy = 40 + 80 * u01(rng);
    c.cx = 15.5 + u01(rng);
    c.cy = 15.5 + u01(rng);
    c.width = c.height = 32;
    c.near = 0.1;
    c.far = 50.0;
    c.rotation = random_rot();
    c.translation = {1.5 * nd(rng), 1.5 * nd(rng), 1.5 * nd(rng)};
    return c;
  };

  // warping a pixel into its own camera is the identity
  double worst_id = 0;
  for (int t = 0; t < 500; ++t) {
    const Camera cam = random_cam();
    const PixelCoord px{31 * u01(rng), 31 * u01(rng)};
    const double depth = 0.5 + 4.5 * u01(rng);
    const Warp w = reproject(px, depth, cam, cam);
    if (!w.valid) {
      worst_id = std::max(worst_id, 1.0);
      continue;
    }
    worst_id = std::max({worst_id, std::abs(w.px.u - px.u), std::abs(w.px.v - px.v)});
  }

  // a lateral baseline b at z-depth z shifts the column by the disparity f b / z
  double worst_st = 0;
  for (int t = 0; t < 500; ++t) {
    Camera ci;
    ci.fx = ci.fy = 30 + 60 * u01(rng);
    ci.cx = 16 + (u01(rng) - 0.5);
    ci.cy = 16 + (u01(rng) - 0.5);
    ci.width = ci.height = 32;
    ci.near = 0.1;
    ci.far = 50.0;
    Camera cj = ci;
    const double b = u01(rng) - 0.5;
    cj.translation = ci.translation + Vec3d{b, 0, 0};
    const PixelCoord px{4 + 24 * u01(rng), 4 + 24 * u01(rng)};
    const double z = 1.0 + 5.0 * u01(rng);
    const Warp w = reproject(px, z * depth_scale_for_pixel(ci, px), ci, cj);
    worst_st = std::max({worst_st, std::abs(w.px.u - (px.u - ci.fx * b / z)),
                         std::abs(w.px.v - px.v)});
  }

  // one rigid motion applied to both cameras leaves the warp unchanged
  double worst_rig = 0;
  for (int t = 0; t < 500; ++t) {
    Camera ci = random_cam(), cj = random_cam();
    const PixelCoord px{31 * u01(rng), 31 * u01(rng)};
    const double depth = 0.5 + 4.5 * u01(rng);
    const Warp w1 = reproject(px, depth, ci, cj);
    const Mat3d r0 = random_rot();
    const Vec3d t0{2.0 * nd(rng), 2.0 * nd(rng), 2.0 * nd(rng)};
    for (Camera* c : {&ci, &cj}) {
      c->rotation = r0 * c->rotation;
      c->translation = r0 * c->translation + t0;
    }
    const Warp w2 = reproject(px, depth, ci, cj);
    if (w1.valid != w2.valid) worst_rig = std::max(worst_rig, 1.0);
    if (w1.valid && w2.valid)
      worst_rig = std::max({worst_rig, std::abs(w1.px.u - w2.px.u),
                            std::abs(w1.px.v - w2.px.v), std::abs(w1.z - w2.z)});
  }

  // analytic views of a textured scene must agree wherever both see the surface
  SyntheticSceneSpec spec;
  spec.spheres.push_back({{0, 0, 0}, 0.5, {0.8, 0.4, 0.2}});
  spec.spheres.push_back({{0.45, 0.2, 0.35}, 0.18, {0.3, 0.7, 0.5}});
  spec.background = {0.1, 0.1, 0.3};
  spec.texture = TextureKind::smooth;
  spec.texture_freq = 4.0;
  const std::vector<Camera> ring = orbit_cameras(12, 128, 128, 60.0, 2.6, 0.4, 0.5, 6.0);
  const SceneDataset ds = generate_synthetic(spec, ring);
  double min_ratio = 1.0;
  size_t min_tested = size_t(-1);
  for (int j : {1, 11}) {
    const PhotoStats st = check_photoconsistency(ds, 0, j, 0.1, 0.02);
    min_ratio = std::min(min_ratio, st.ratio());
    min_tested = std::min(min_tested, st.tested);
  }

  detail = str("identity %.2e, stereo %.2e, rigid %.2e (tol %.0e); photoconsistent %.4f "
               "of %zu px (floor %.2f)",
               worst_id, worst_st, worst_rig, kWarpTol, min_ratio, min_tested, kPhotoRatio);
  return worst_id <= kWarpTol && worst_st <= kWarpTol && worst_rig <= kWarpTol &&
         min_tested > 500 && min_ratio >= kPhotoRatio;
}

// ---- 4. weight-sharing oracle ---------------------------------------------

bool crit_weight_sharing(std::string& detail) {
  GridConfig gc;
  gc.base_res = 32;
  gc.downsample_ratio = 2;
  gc.num_coarse_levels = 3;
  VoxelField<double> field(gc);
  std::mt19937_64 rng(0x45ULL);
  std::uniform_real_distribution<double> ud(-1.5, 2.0), ua(-1.0, 1.0), u01(0.0, 1.0);
  for (auto& v : field.density_raw) v = ud(rng);
  for (auto& v : field.appearance_raw) v = ua(rng);

  double worst = 0;
  for (int l = 0; l <= gc.num_coarse_levels; ++l) {
    const ScaleLattice lat = scale_lattice(gc, l);
    const int r = lat.res;
    // materialize the scale into its own dense grid by copying strided nodes
    std::vector<double> mat_d(size_t(r) * r * r), mat_a(size_t(r) * r * r * 3);
    for (int iz = 0; iz < r; ++iz)
      for (int iy = 0; iy < r; ++iy)
        for (int ix = 0; ix < r; ++ix) {
          const size_t small = (size_t(iz) * r + iy) * r + ix;
          const size_t big =
              field.node_index(ix * lat.stride, iy * lat.stride, iz * lat.stride);
          mat_d[small] = field.density_raw[big];
          for (int ch = 0; ch < 3; ++ch) mat_a[small * 3 + ch] = field.appearance_raw[big * 3 + ch];
        }
    // independent trilinear reference over the materialized copy; nodes sit
    // stride base-steps apart, queries past the last node clamp to the edge cell
    auto ref = [&](const Vec3d& p, const std::vector<double>& vals, int chans, int ch) {
      int c[3];
      double f[3];
      for (int a = 0; a < 3; ++a) {
        const double h = (gc.bbox_max[a] - gc.bbox_min[a]) / double(gc.base_res - 1);
        const double t = (p[a] - gc.bbox_min[a]) / (h * lat.stride);
        const int cc = std::clamp(int(std::floor(t)), 0, r - 2);
        c[a] = cc;
        f[a] = std::clamp(t - cc, 0.0, 1.0);
      }
      double acc = 0;
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
            const size_t idx = (size_t(c[2] + dz) * r + (c[1] + dy)) * r + (c[0] + dx);
            acc += w * vals[idx * chans + ch];
          }
      return acc;
    };
    for (int t = 0; t < 2000; ++t) {
      Vec3d p;
      for (int a = 0; a < 3; ++a) {
        double pick = u01(rng);
        if (t % 17 == 0) pick = std::round(pick);  // exercise the bbox faces
        p[a] = gc.bbox_min[a] + (gc.bbox_max[a] - gc.bbox_min[a]) * pick;
      }
      const double want_d = ref(p, mat_d, 1, 0);
      worst = std::max(worst, std::abs(field.density_preact(p, lat) - want_d));
      worst = std::max(worst, std::abs(field.sample_density(p, lat) - softplus(want_d)));
      const Vec3d got_a = field.sample_appearance(p, {0, 0, 1}, lat);
      for (int ch = 0; ch < 3; ++ch)
        worst = std::max(worst, std::abs(got_a[ch] - sigmoid(ref(p, mat_a, 3, ch))));
    }
  }

  // gradient support: scattering through a level-l stencil must hit exactly
  // the 8 cell corners, all on the stride-aligned sublattice
  const int n_grid = gc.base_res;
  auto on_sublattice = [&](size_t node, int stride) {
    const int ix = int(node % n_grid);
    const int iy = int((node / n_grid) % n_grid);
    const int iz = int(node / (size_t(n_grid) * n_grid));
    return ix % stride == 0 && iy % stride == 0 && iz % stride == 0;
  };
  bool support_ok = true;
  for (int l = 0; l <= gc.num_coarse_levels && support_ok; ++l) {
    const ScaleLattice lat = scale_lattice(gc, l);
    for (int t = 0; t < 50 && support_ok; ++t) {
      Vec3d p;
      for (int a = 0; a < 3; ++a) {
        // keep the point inside the span of the strided nodes so no trilinear
        // weight degenerates to zero
        const double h = (gc.bbox_max[a] - gc.bbox_min[a]) / double(gc.base_res - 1);
        const double span = h * lat.stride * (lat.res - 1);
        p[a] = gc.bbox_min[a] + span * (0.02 + 0.96 * u01(rng));
      }
      GradBuffer g;
      g.resize_like(field.density_raw.size(), field.appearance_raw.size());
      const InterpStencil st = field.stencil(p, lat);
      field.scatter_density(st, 1.0, g);
      const double d_app[3] = {1.0, -2.0, 0.5};
      field.scatter_appearance(st, d_app, g);
      size_t nd_cnt = 0, na_cnt = 0;
      double wsum = 0;
      for (size_t i = 0; i < g.density.size(); ++i)
        if (g.density[i] != 0.0) {
          ++nd_cnt;
          wsum += g.density[i];
          if (!on_sublattice(i, lat.stride)) support_ok = false;
        }
      for (size_t i = 0; i < g.appearance.size(); ++i)
        if (g.appearance[i] != 0.0) {
          ++na_cnt;
          if (!on_sublattice(i / 3, lat.stride)) support_ok = false;
        }
      if (nd_cnt != 8 || na_cnt != 24 || std::abs(wsum - 1.0) > 1e-12) support_ok = false;
    }
  }

  // the same exact-support property through a full rendered ray
  bool ray_ok = true;
  for (int l = 0; l <= gc.num_coarse_levels && ray_ok; ++l) {
    Ray ray{{-2.5, 0.2, 0.1}, Vec3d{1, -0.05, 0.02}.normalized(), 0, 0};
    const auto [t0, t1] = ray_bbox_range(ray.origin, ray.dir, gc.bbox_min, gc.bbox_max);
    ray.near = std::max(t0, 1e-3);
    ray.far = t1;
    const RaySamples s = sample_points(ray, 96, false, 0);
    RenderTape tape;
    render_ray(field, ray, scale_lattice(gc, l), s, {}, &tape);
    OutputGrad og;
    og.d_color = {1.0, -0.5, 0.25};
    og.d_depth = 0.75;
    og.d_opacity = -0.3;
    GradBuffer g;
    g.resize_like(field.density_raw.size(), field.appearance_raw.size());
    render_ray_backward(field, ray, s, tape, {}, og, g);
    const int stride = gc.stride_at(l);
    size_t touched = 0;
    for (size_t i = 0; i < g.density.size(); ++i)
      if (g.density[i] != 0.0) {
        ++touched;
        if (!on_sublattice(i, stride)) ray_ok = false;
      }
    for (size_t i = 0; i < g.appearance.size(); ++i)
      if (g.appearance[i] != 0.0 && !on_sublattice(i / 3, stride)) ray_ok = false;
    if (touched == 0) ray_ok = false;
  }

  detail = str("strided vs materialized err %.2e (tol %.0e); stencil support %s; "
               "rendered-ray support %s",
               worst, kShareTol, support_ok ? "exact" : "LEAKED", ray_ok ? "exact" : "LEAKED");
  return worst <= kShareTol && support_ok && ray_ok;
}

// ---- 5. adaptation correctness --------------------------------------------

// Opaque textured wall at z = 2 seen by a stereo pair; images are generated
// from the wall texture analytically, so reprojection at the true depth is
// photoconsistent by construction and the finest scale carries the least
// interpolation blur.
struct PlantedWall {
  VoxelField<double> field;
  std::vector<Camera> cams;
  std::vector<Image> images;
  double z0 = 2.0;

  static double tex(double x, double y) {
    return 0.55 + 0.25 * std::sin(2.1 * x + 0.7) + 0.15 * std::cos(1.7 * y - 0.3);
  }

  static PlantedWall build() {
    GridConfig g;
    g.base_res = 16;
    g.downsample_ratio = 2;
    g.num_coarse_levels = 2;
    g.bbox_min = {-1.5, -1.5, 0.4};
    g.bbox_max = {1.5, 1.5, 3.4};
    PlantedWall s{VoxelField<double>(g), {}, {}};
    const double h = 0.2;
    for (int iz = 0; iz < 16; ++iz)
      for (int iy = 0; iy < 16; ++iy)
        for (int ix = 0; ix < 16; ++ix) {
          const size_t idx = s.field.node_index(ix, iy, iz);
          s.field.density_raw[idx] = iz >= 8 ? 25.0 : -25.0;
          const double t = tex(-1.5 + h * ix, -1.5 + h * iy);
          const double y = std::log(t / (1.0 - t));
          for (int ch = 0; ch < 3; ++ch) s.field.appearance_raw[idx * 3 + ch] = y;
        }
    for (double bx : {0.0, 0.3}) {
      Camera c;
      c.fx = c.fy = 50;
      c.cx = c.cy = 32;
      c.width = c.height = 64;
      c.near = 1.0;
      c.far = 3.0;
      c.translation = {bx, 0, 0};
      s.cams.push_back(c);
      Image img(64, 64, 3);
      for (int v = 0; v < 64; ++v)
        for (int u = 0; u < 64; ++u) {
          const double x = bx + (u + 0.5 - 32.0) * s.z0 / 50.0;
          const double y = (v + 0.5 - 32.0) * s.z0 / 50.0;
          const float val = float(tex(x, y));
          for (int ch = 0; ch < 3; ++ch) img.at(u, v, ch) = val;
        }
      s.images.push_back(std::move(img));
    }
    return s;
  }
};

bool crit_adaptation(std::string& detail) {
  const PlantedWall s = PlantedWall::build();
  AdaptOptions opt;
  opt.n_samples = 128;
  int correct = 0, total = 0;
  std::vector<AdaptationRecord> records;
  for (int u = 12; u <= 54; u += 6)
    for (int v = 4; v <= 58; v += 6) {
      const PixelCoord px{double(u), double(v)};
      const AdaptationRecord rec = adapt_train_ray(s.field, 0, px, s.cams, s.images, opt);
      records.push_back(rec);
      ++total;
      if (rec.valid && rec.selected == 0) {
        const double z = rec.pseudo_depth / depth_scale_for_pixel(s.cams[0], px);
        if (std::abs(z - s.z0) < 0.15) ++correct;
      }
    }
  const double frac = double(correct) / double(total);

  // loosening the threshold can only grow the valid set
  const std::vector<double> dd{1.0, 2.0, 3.0};
  bool monotone = true;
  int prev = -1;
  for (double th : {0.005, 0.02, 0.05, 0.2, 0.5, 2.0}) {
    int n_valid = 0;
    for (const AdaptationRecord& rec : records)
      n_valid += select_scale(rec.errors, dd, th).valid ? 1 : 0;
    if (prev >= 0 && n_valid < prev) monotone = false;
    prev = n_valid;
  }

  // scaling every error by a positive constant keeps the argmin
  bool invariant = true;
  for (const AdaptationRecord& rec : records) {
    const int base = select_scale(rec.errors, dd, 1e18).selected;
    for (double c : {0.25, 3.0, 40.0}) {
      std::vector<double> scaled = rec.errors;
      for (double& e : scaled) e *= c;
      if (select_scale(scaled, dd, 1e18).selected != base) invariant = false;
    }
  }

  detail = str("planted scale recovered on %.3f of %d rays (floor %.2f); threshold "
               "monotone %s; rescale invariant %s",
               frac, total, kPlantedFraction, monotone ? "yes" : "NO", invariant ? "yes" : "NO");
  return frac >= kPlantedFraction && monotone && invariant;
}

// ---- 6-8. scaled ablation runs --------------------------------------------

// Forward-facing rig: three cameras on a line at z = -3 toed in at the
// origin, training on the outer pair and holding out the middle one. The
// scene is spheres and a ground slab in front of a backdrop slab that fills
// the whole frustum, so almost every ray lands on textured surface. That
// matters for the frequency-trend criterion: empty-background rays have no
// photometric signal, their cross-scale errors tie (broken toward coarse),
// and they would swamp the selection counters. Mono depth is a positive
// affine map of the analytic depth; sparse depth samples it directly.
Camera frontal_camera(double x_off) {
  Camera cam;
  cam.width = cam.height = 100;
  cam.fx = cam.fy = 0.5 * 100 / std::tan(0.5 * 25.0 * std::numbers::pi / 180.0);
  cam.cx = cam.cy = 50;
  cam.near = 1.0;
  cam.far = 6.0;
  cam.translation = {x_off, 0.0, -3.0};
  const Vec3d fwd = (-1.0 * cam.translation).normalized();
  const Vec3d right = Vec3d{0, 1, 0}.cross(fwd).normalized();
  const Vec3d down = fwd.cross(right);
  cam.rotation = Mat3d::from_cols(right, down, fwd);
  cam.validate();
  return cam;
}

SceneDataset ablation_dataset() {
  SyntheticSceneSpec spec;
  spec.spheres.push_back({{-0.3, 0.1, 0.1}, 0.35, {0.9, 0.55, 0.25}});
  spec.spheres.push_back({{0.35, -0.15, 0.35}, 0.25, {0.3, 0.6, 0.9}});
  spec.boxes.push_back({{-0.95, 0.45, -0.95}, {0.95, 0.8, 0.95}, {0.5, 0.8, 0.45}});
  spec.boxes.push_back({{-1.0, -1.0, 0.85}, {1.0, 1.0, 1.0}, {0.85, 0.75, 0.6}});
  spec.texture = TextureKind::smooth;
  std::vector<Camera> cams;
  for (double x_off : {-0.4, 0.0, 0.4}) cams.push_back(frontal_camera(x_off));
  SceneDataset ds = generate_synthetic(spec, cams, {1});
  std::mt19937_64 rng(0xab1ULL);
  for (int id : ds.train_ids) {
    int collected = 0;
    for (int attempt = 0; collected < 64 && attempt < 6400; ++attempt) {
      const int x = int(rng() % 100), y = int(rng() % 100);
      const double d = ds.gt_depth[size_t(id)].at(x, y, 0);
      if (!std::isfinite(d) || d <= 0) continue;
      ds.sparse_depth.push_back({id, double(x), double(y), d});
      ++collected;
    }
  }
  for (int id : ds.train_ids) {
    Image mono(100, 100, 1);
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 100; ++x) {
        const double d = ds.gt_depth[size_t(id)].at(x, y, 0);
        const double eff = std::isfinite(d) && d > 0 ? d : ds.cameras[size_t(id)].far;
        mono.at(x, y, 0) = float(1.25 * eff + 0.15);
      }
    ds.mono_depth.emplace(id, std::move(mono));
  }
  return ds;
}

struct AblationRun {
  double psnr_db = 0;
  double mae = 0;
  double coarse_early = -1;  // mean coarse-argmin fraction, iterations 91..100
  double coarse_late = -1;   // same over iterations 1991..2000
  double seconds = 0;
};

enum class Variant { full, geo_only, mono_only, single_scale };

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::geo_only: return "geo-only";
    case Variant::mono_only: return "no-geo";
    case Variant::single_scale: return "single-scale";
  }
  return "?";
}

AblationRun run_ablation(const SceneDataset& ds, Variant variant, uint64_t seed) {
  GridConfig gc;
  gc.base_res = 64;
  gc.downsample_ratio = 4;
  gc.num_coarse_levels = variant == Variant::single_scale ? 0 : 2;
  TrainConfig tc;
  tc.iterations = 2000;
  tc.batch_train = 512;
  tc.batch_novel = 16;
  tc.batch_sd = 64;
  tc.seed = seed;
  PipelineConfig pc;
  pc.n_samples = 96;
  LossWeights lw;
  if (variant == Variant::geo_only) lw.lambda_d = 0.0;
  if (variant == Variant::mono_only) lw.lambda_geo = 0.0;
  SpiralConfig sc;
  sc.n_poses = 20;
  sc.radius_scale = 0.5;

  Timer timer;
  Trainer trainer(ds, gc, tc, pc, lw, sc);
  double early = 0, late = 0;
  int early_n = 0, late_n = 0;
  for (int it = 0; it < tc.iterations; ++it) {
    const StepResult r = trainer.step();
    const double cf = r.coarse_fraction();
    if (cf >= 0) {
      if (it >= 90 && it < 100) {
        early += cf;
        ++early_n;
      }
      if (it >= 1990 && it < 2000) {
        late += cf;
        ++late_n;
      }
    }
  }
  AblationRun out;
  out.seconds = timer.seconds();
  const int test_id = ds.test_ids[0];
  const auto [rgb, depth] = trainer.render_view(ds.cameras[size_t(test_id)], 0);
  out.psnr_db = psnr(rgb, ds.images[size_t(test_id)]);
  out.mae = depth_mae(depth, ds.gt_depth[size_t(test_id)]);
  if (early_n) out.coarse_early = early / early_n;
  if (late_n) out.coarse_late = late / late_n;
  std::printf("  %-12s seed %llu: psnr %.2f dB, depth mae %.4f, coarse %.3f -> %.3f, %.0fs\n",
              variant_name(variant), (unsigned long long)seed, out.psnr_db, out.mae,
              out.coarse_early, out.coarse_late, out.seconds);
  std::fflush(stdout);
  return out;
}

const std::array<AblationRun, 3>& runs_for(Variant variant) {
  static std::map<Variant, std::array<AblationRun, 3>> cache;
  static std::optional<SceneDataset> ds;
  const auto it = cache.find(variant);
  if (it != cache.end()) return it->second;
  if (!ds) ds = ablation_dataset();
  std::array<AblationRun, 3> runs;
  for (uint64_t seed : {1, 2, 3}) runs[size_t(seed - 1)] = run_ablation(*ds, variant, seed);
  return cache.emplace(variant, runs).first->second;
}

double median3(double a, double b, double c) {
  std::array<double, 3> v{a, b, c};
  std::sort(v.begin(), v.end());
  return v[1];
}

double med_psnr(Variant v) {
  const auto& r = runs_for(v);
  return median3(r[0].psnr_db, r[1].psnr_db, r[2].psnr_db);
}

double med_mae(Variant v) {
  const auto& r = runs_for(v);
  return median3(r[0].mae, r[1].mae, r[2].mae);
}

double max_seconds(Variant v) {
  const auto& r = runs_for(v);
  return std::max({r[0].seconds, r[1].seconds, r[2].seconds});
}

bool crit_ablation_ordering(std::string& detail) {
  const double full = med_psnr(Variant::full);
  const double no_geo = med_psnr(Variant::mono_only);
  const double single = med_psnr(Variant::single_scale);
  const double slowest =
      std::max({max_seconds(Variant::full), max_seconds(Variant::mono_only),
                max_seconds(Variant::single_scale)});
  detail = str("held-out psnr medians: full %.2f > no-geo %.2f, > single-scale %.2f, "
               ">= floor %.1f dB; slowest run %.0fs (limit %.0fs)",
               full, no_geo, single, kHeldOutPsnrFloor, slowest, kAblationRunLimit);
  return full > no_geo && full > single && full >= kHeldOutPsnrFloor &&
         slowest < kAblationRunLimit;
}

bool crit_depth_ordering(std::string& detail) {
  const double both = med_mae(Variant::full);
  const double geo = med_mae(Variant::geo_only);
  const double none = med_mae(Variant::mono_only);
  detail = str("depth mae medians: geo+mono %.4f <= geo-only %.4f < no-geo %.4f", both, geo, none);
  return both <= geo && geo < none;
}

bool crit_frequency_trend(std::string& detail) {
  const auto& r = runs_for(Variant::full);
  const double early = median3(r[0].coarse_early, r[1].coarse_early, r[2].coarse_early);
  const double late = median3(r[0].coarse_late, r[1].coarse_late, r[2].coarse_late);
  detail = str("median coarsest-scale selection: iteration 100 %.3f > iteration 2000 %.3f",
               early, late);
  return early >= 0 && late >= 0 && early > late;
}

// ---- 9. determinism and persistence ---------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool crit_determinism(std::string& detail) {
  const char* prev = std::getenv("FRUGAL_THREADS");
  const std::string saved = prev ? prev : "";
  setenv("FRUGAL_THREADS", "1", 1);

  bool steps_ok = true, state_ok = true, ckpt_ok = true;
  {
    const SceneDataset ds = small_orbit_dataset();
    GridConfig gc;
    gc.base_res = 8;
    gc.downsample_ratio = 2;
    gc.num_coarse_levels = 2;
    TrainConfig tc;
    tc.iterations = 10;
    tc.batch_train = 64;
    tc.batch_novel = 4;
    tc.batch_sd = 8;
    tc.seed = 5;
    PipelineConfig pc;
    pc.n_samples = 48;
    SpiralConfig sc;
    sc.n_poses = 6;
    sc.radius_scale = 0.7;
    Trainer a(ds, gc, tc, pc, LossWeights{}, sc);
    Trainer b(ds, gc, tc, pc, LossWeights{}, sc);
    for (int i = 0; i < 10; ++i) {
      const StepResult ra = a.step();
      const StepResult rb = b.step();
      if (ra.pipeline.total != rb.pipeline.total) steps_ok = false;
    }
    state_ok = a.field().density_raw == b.field().density_raw &&
               a.field().appearance_raw == b.field().appearance_raw &&
               a.adam().m_density == b.adam().m_density &&
               a.adam().v_density == b.adam().v_density &&
               a.adam().m_appearance == b.adam().m_appearance &&
               a.adam().v_appearance == b.adam().v_appearance;

    const auto dir = std::filesystem::temp_directory_path() / "frugal_acceptance";
    std::filesystem::create_directories(dir);
    const std::string p1 = (dir / "a.ckpt").string();
    const std::string p2 = (dir / "b.ckpt").string();
    save_checkpoint(p1, a.field(), a.adam(), a.iteration());
    Checkpoint ck = load_checkpoint(p1);
    save_checkpoint(p2, ck.field, ck.state, ck.iteration);
    const std::string b1 = slurp(p1), b2 = slurp(p2);
    ckpt_ok = !b1.empty() && b1 == b2;
  }

  if (saved.empty())
    unsetenv("FRUGAL_THREADS");
  else
    setenv("FRUGAL_THREADS", saved.c_str(), 1);

  detail = str("10 single-worker steps bit-identical: %s; state identical: %s; "
               "checkpoint save/load/save byte-identical: %s",
               steps_ok ? "yes" : "NO", state_ok ? "yes" : "NO", ckpt_ok ? "yes" : "NO");
  return steps_ok && state_ok && ckpt_ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  struct CriterionDef {
    int id;
    const char* name;
    bool (*fn)(std::string&);
  };
  const CriterionDef defs[] = {
      {1, "gradient integrity", crit_gradients},
      {2, "rendering oracle", crit_render_oracle},
      {3, "reprojection oracle", crit_reprojection},
      {4, "weight-sharing oracle", crit_weight_sharing},
      {5, "adaptation correctness", crit_adaptation},
      {6, "ablation ordering", crit_ablation_ordering},
      {7, "depth-error ordering", crit_depth_ordering},
      {8, "frequency-adaptation trend", crit_frequency_trend},
      {9, "determinism and persistence", crit_determinism},
  };

  bool all = true;
  for (const CriterionDef& def : defs) {
    if (!wanted.empty() && !wanted.count(def.id)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = def.fn(detail);
    } catch (const std::exception& e) {
      detail = str("exception: %s", e.what());
    }
    std::printf("[%s] %d %s: %s\n", ok ? "PASS" : "FAIL", def.id, def.name, detail.c_str());
    std::fflush(stdout);
    all = all && ok;
  }
  return all ? 0 : 1;
}
