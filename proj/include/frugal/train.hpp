#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "frugal/data.hpp"
#include "frugal/field.hpp"
#include "frugal/pipeline.hpp"
#include "frugal/sample_poses.hpp"

namespace frugal {

// Thrown when a loss term stops being finite; carries the per-term dump.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int iterations = 5000;
  int batch_train = 4096;  // rays per iteration, grouped into patch_k^2 patches
  int batch_novel = 4096;  // supervised novel center rays per iteration
  int batch_sd = 1024;     // sparse depth constraints per iteration
  double lr_init = 0.08;
  double lr_final = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;
  int checkpoint_every = 1000;

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("train: iterations must be >= 1");
    if (batch_train < 1) throw std::invalid_argument("train: batch_train must be >= 1");
    if (batch_novel < 0 || batch_sd < 0) throw std::invalid_argument("train: negative batch");
    if (!(lr_final > 0 && lr_final <= lr_init))
      throw std::invalid_argument("train: need 0 < lr_final <= lr_init");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0))
      throw std::invalid_argument("train: bad adam constants");
  }
};

inline double lr_schedule(const TrainConfig& cfg, int iteration) {
  return cfg.lr_init *
         std::pow(cfg.lr_final / cfg.lr_init, double(iteration) / double(cfg.iterations));
}

struct AdamState {
  std::vector<float> m_density, v_density, m_appearance, v_appearance;
  int64_t step = 0;

  void init(size_t density_n, size_t appearance_n) {
    m_density.assign(density_n, 0.0f);
    v_density.assign(density_n, 0.0f);
    m_appearance.assign(appearance_n, 0.0f);
    v_appearance.assign(appearance_n, 0.0f);
    step = 0;
  }
};

namespace detail {

inline void adam_update_array(float* params, const double* grad, float* m, float* v, size_t n,
                              double lr, double beta1, double beta2, double eps, double bc1,
                              double bc2) {
  for (size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    const double mi = beta1 * double(m[i]) + (1.0 - beta1) * g;
    const double vi = beta2 * double(v[i]) + (1.0 - beta2) * g * g;
    m[i] = float(mi);
    v[i] = float(vi);
    const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
    params[i] = float(double(params[i]) - update);
  }
}

}  // namespace detail

inline void adam_step(VoxelField<float>& field, const GradBuffer& grads, AdamState& state,
                      double lr, const TrainConfig& cfg) {
  if (state.m_density.size() != field.density_raw.size() ||
      state.m_appearance.size() != field.appearance_raw.size())
    throw std::invalid_argument("adam_step: state shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  detail::adam_update_array(field.density_raw.data(), grads.density.data(),
                            state.m_density.data(), state.v_density.data(),
                            field.density_raw.size(), lr, cfg.beta1, cfg.beta2, cfg.eps, bc1, bc2);
  detail::adam_update_array(field.appearance_raw.data(), grads.appearance.data(),
                            state.m_appearance.data(), state.v_appearance.data(),
                            field.appearance_raw.size(), lr, cfg.beta1, cfg.beta2, cfg.eps, bc1,
                            bc2);
}

// ---- checkpoints ----------------------------------------------------------
// Layout: magic line, u64 header length, JSON header, then f32 little-endian
// arrays in fixed order (params, then Adam moments).

inline constexpr const char kCheckpointMagic[] = "FRUGAL_CKPT v1\n";

struct Checkpoint {
  VoxelField<float> field;
  AdamState state;
  int64_t iteration = 0;

  explicit Checkpoint(const GridConfig& gc) : field(gc) {}
};

namespace detail {

inline void write_f32(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            std::streamsize(v.size() * sizeof(float)));
}

inline void read_f32(std::ifstream& in, std::vector<float>& v, size_t n, const std::string& path) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const VoxelField<float>& field,
                            const AdamState& state, int64_t iteration) {
  nlohmann::json header;
  header["version"] = 1;
  header["iteration"] = iteration;
  header["adam_step"] = state.step;
  header["grid"] = {{"base_res", field.config.base_res},
                    {"downsample_ratio", field.config.downsample_ratio},
                    {"num_coarse_levels", field.config.num_coarse_levels},
                    {"sh_degree", field.config.sh_degree},
                    {"bbox_min", {field.config.bbox_min.x, field.config.bbox_min.y,
                                  field.config.bbox_min.z}},
                    {"bbox_max", {field.config.bbox_max.x, field.config.bbox_max.y,
                                  field.config.bbox_max.z}}};
  header["counts"] = {{"density", field.density_raw.size()},
                      {"appearance", field.appearance_raw.size()}};
  const std::string js = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(kCheckpointMagic, std::streamsize(std::strlen(kCheckpointMagic)));
  const uint64_t len = js.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(js.data(), std::streamsize(js.size()));
  detail::write_f32(out, field.density_raw);
  detail::write_f32(out, field.appearance_raw);
  detail::write_f32(out, state.m_density);
  detail::write_f32(out, state.v_density);
  detail::write_f32(out, state.m_appearance);
  detail::write_f32(out, state.v_appearance);
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[sizeof kCheckpointMagic - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error(path + " is not a checkpoint (bad magic or version)");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (64u << 20)) throw std::runtime_error("corrupt checkpoint header " + path);
  std::string js(len, '\0');
  in.read(js.data(), std::streamsize(len));
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header " + path + ": " + e.what());
  }
  if (!header.contains("version") || header["version"].get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);

  GridConfig gc;
  const auto& g = header.at("grid");
  gc.base_res = g.at("base_res").get<int>();
  gc.downsample_ratio = g.at("downsample_ratio").get<int>();
  gc.num_coarse_levels = g.at("num_coarse_levels").get<int>();
  gc.sh_degree = g.at("sh_degree").get<int>();
  for (int a = 0; a < 3; ++a) {
    gc.bbox_min[a] = g.at("bbox_min").at(size_t(a)).get<double>();
    gc.bbox_max[a] = g.at("bbox_max").at(size_t(a)).get<double>();
  }
  gc.validate();
  Checkpoint ck(gc);
  ck.iteration = header.at("iteration").get<int64_t>();
  ck.state.step = header.at("adam_step").get<int64_t>();
  const size_t dn = header.at("counts").at("density").get<size_t>();
  const size_t an = header.at("counts").at("appearance").get<size_t>();
  const size_t n3 = size_t(gc.base_res) * gc.base_res * gc.base_res;
  if (dn != n3 || an != n3 * gc.appearance_channels())
    throw std::runtime_error("checkpoint counts disagree with grid config in " + path);

  detail::read_f32(in, ck.field.density_raw, dn, path);
  detail::read_f32(in, ck.field.appearance_raw, an, path);
  detail::read_f32(in, ck.state.m_density, dn, path);
  detail::read_f32(in, ck.state.v_density, dn, path);
  detail::read_f32(in, ck.state.m_appearance, an, path);
  detail::read_f32(in, ck.state.v_appearance, an, path);
  return ck;
}

// ---- rendering whole frames -----------------------------------------------

// Deterministic full-frame render at one scale; returns {rgb, 1-channel depth}.
template <typename T>
std::pair<Image, Image> render_frame(const VoxelField<T>& field, const Camera& cam, int level,
                                     int n_samples, const Vec3d& bb_min, const Vec3d& bb_max,
                                     const RenderOptions& ro, ThreadPool& pool) {
  const ScaleLattice lat = scale_lattice(field.config, level);
  Image rgb(cam.width, cam.height, 3);
  Image depth(cam.width, cam.height, 1);
  pool.parallel_for(size_t(cam.height), [&](size_t b, size_t e, int) {
    for (size_t y = b; y < e; ++y)
      for (int x = 0; x < cam.width; ++x) {
        Ray ray = ray_for_pixel(cam, {double(x), double(y)});
        const auto [b0, b1] = ray_bbox_range(ray.origin, ray.dir, bb_min, bb_max);
        ray.near = std::max(ray.near, b0);
        ray.far = std::min(ray.far, b1);
        const RaySamples s = sample_points(ray, n_samples, false, 0);
        const RenderOutput o = render_ray(field, ray, lat, s, ro);
        float* px = rgb.pixel(x, int(y));
        px[0] = float(o.color.x);
        px[1] = float(o.color.y);
        px[2] = float(o.color.z);
        depth.at(x, int(y), 0) = float(o.depth);
      }
  });
  return {std::move(rgb), std::move(depth)};
}

// ---- trainer --------------------------------------------------------------

// Rays are clipped to the grid bbox (the lattice extent), not the dataset's.
inline PipelineScene build_pipeline_scene(const SceneDataset& ds, const GridConfig& gc,
                                          std::vector<Camera> novel_cams) {
  PipelineScene s;
  s.train_cams = ds.train_cameras();
  s.train_images = ds.train_images();
  s.novel_cams = std::move(novel_cams);
  s.bbox_min = gc.bbox_min;
  s.bbox_max = gc.bbox_max;
  for (size_t t = 0; t < ds.train_ids.size(); ++t) {
    const auto it = ds.mono_depth.find(ds.train_ids[t]);
    if (it == ds.mono_depth.end()) continue;
    const Camera& cam = s.train_cams[t];
    s.mono.emplace(int(t), it->second.width == cam.width && it->second.height == cam.height
                               ? it->second
                               : resample_depth(it->second, cam.width, cam.height));
  }
  return s;
}

// Sparse depth rewritten onto train-list indices; points on test views drop out.
inline std::vector<SparseDepthPoint> compact_sparse_depth(const SceneDataset& ds) {
  std::vector<SparseDepthPoint> out;
  for (const SparseDepthPoint& p : ds.sparse_depth)
    for (size_t t = 0; t < ds.train_ids.size(); ++t)
      if (ds.train_ids[t] == p.view_id) {
        SparseDepthPoint q = p;
        q.view_id = int(t);
        out.push_back(q);
        break;
      }
  return out;
}

struct StepResult {
  PipelineResult pipeline;
  double lr = 0;
  int iteration = 0;  // index of the step just taken

  // Pre-threshold fraction of train rays whose argmin picked the coarsest
  // scale; -1 when no ray had a computable argmin.
  double coarse_fraction() const {
    if (pipeline.train_argmin_any == 0) return -1.0;
    return double(pipeline.train_argmin_coarse) / double(pipeline.train_argmin_any);
  }
};

class Trainer {
 public:
  Trainer(const SceneDataset& ds, const GridConfig& gc, const TrainConfig& tc,
          const PipelineConfig& pc, const LossWeights& lw, const SpiralConfig& sc)
      : tc_(tc), pc_(pc), lw_(lw), field_(gc), pool_(worker_count()) {
    gc.validate();
    tc_.validate();
    pc_.validate();
    lw_.validate();
    ds.validate();
    if (ds.train_ids.empty()) throw std::runtime_error("trainer: dataset has no training views");

    scene_ = build_pipeline_scene(ds, gc,
                                  tc_.batch_novel > 0 ? spiral_poses(ds.train_cameras(), sc)
                                                      : std::vector<Camera>{});
    sd_points_ = compact_sparse_depth(ds);

    init_field(field_, tc_.seed);
    adam_.init(field_.density_raw.size(), field_.appearance_raw.size());
  }

  // Continue from a checkpoint (grid config must match the constructor's).
  void restore(Checkpoint&& ck) {
    ck.field.config.validate();
    if (ck.field.density_raw.size() != field_.density_raw.size() ||
        ck.field.appearance_raw.size() != field_.appearance_raw.size())
      throw std::runtime_error("checkpoint grid disagrees with configured grid");
    field_ = std::move(ck.field);
    adam_ = std::move(ck.state);
    iteration_ = int(ck.iteration);
  }

  Batch make_batch(int iteration) const {
    Batch batch;
    batch.seed = hash_mix(tc_.seed, uint64_t(iteration));
    std::mt19937_64 rng(hash_mix(tc_.seed, 0xb47c4ULL, uint64_t(iteration)));
    const int k = pc_.patch_k;
    const int n_patches = std::max(1, tc_.batch_train / (k * k));
    uint64_t unit_id = 0;
    for (int i = 0; i < n_patches; ++i) {
      RayUnit u;
      u.cam = int(rng() % scene_.train_cams.size());
      const Camera& cam = scene_.train_cams[size_t(u.cam)];
      u.u0 = int(rng() % uint64_t(cam.width - k + 1));
      u.v0 = int(rng() % uint64_t(cam.height - k + 1));
      u.seed = hash_mix(batch.seed, unit_id++);
      batch.train_units.push_back(u);
    }
    if (!scene_.novel_cams.empty()) {
      const int ar = pc_.adapt_patch / 2;
      for (int i = 0; i < tc_.batch_novel; ++i) {
        RayUnit u;
        u.cam = int(rng() % scene_.novel_cams.size());
        const Camera& cam = scene_.novel_cams[size_t(u.cam)];
        u.u0 = ar + int(rng() % uint64_t(cam.width - 2 * ar));
        u.v0 = ar + int(rng() % uint64_t(cam.height - 2 * ar));
        u.seed = hash_mix(batch.seed, unit_id++);
        batch.novel_units.push_back(u);
      }
    }
    if (!sd_points_.empty()) {
      if (int(sd_points_.size()) <= tc_.batch_sd) {
        batch.sd = sd_points_;
      } else {
        for (int i = 0; i < tc_.batch_sd; ++i)
          batch.sd.push_back(sd_points_[size_t(rng() % sd_points_.size())]);
      }
    }
    return batch;
  }

  StepResult step() {
    const Batch batch = make_batch(iteration_);
    GradBuffer grads;
    grads.resize_like(field_.density_raw.size(), field_.appearance_raw.size());
    StepResult out;
    out.pipeline = run_pipeline(field_, scene_, batch, pc_, lw_, pool_, &grads);
    out.iteration = iteration_;
    out.lr = lr_schedule(tc_, iteration_);
    check_finite(out.pipeline);
    adam_step(field_, grads, adam_, out.lr, tc_);
    ++iteration_;
    return out;
  }

  // Full-frame render of one camera at the given scale. Depth is 1-channel.
  std::pair<Image, Image> render_view(const Camera& cam, int level) const {
    RenderOptions ro;
    ro.composite_background = pc_.composite_background;
    ro.background = pc_.background;
    return render_frame(field_, cam, level, pc_.n_samples, scene_.bbox_min, scene_.bbox_max, ro,
                        pool_);
  }

  const VoxelField<float>& field() const { return field_; }
  VoxelField<float>& field() { return field_; }
  const AdamState& adam() const { return adam_; }
  const PipelineScene& scene() const { return scene_; }
  int iteration() const { return iteration_; }
  ThreadPool& pool() { return pool_; }

 private:
  static void check_finite(const PipelineResult& res) {
    const LossTerms& t = res.terms;
    const std::pair<const char*, double> entries[] = {
        {"ms_color", t.ms_color}, {"geo", t.geo},   {"tv_density", t.tv_density},
        {"tv_appearance", t.tv_appearance},         {"ds", t.ds},
        {"l1", t.l1},             {"dist", t.dist}, {"occ", t.occ},
        {"sd", t.sd},             {"mono", t.mono}, {"total", res.total}};
    for (const auto& [name, value] : entries)
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss term '" << name << "':";
        for (const auto& [n2, v2] : entries) msg << " " << n2 << "=" << v2;
        throw NumericError(msg.str());
      }
  }

  TrainConfig tc_;
  PipelineConfig pc_;
  LossWeights lw_;
  PipelineScene scene_;
  std::vector<SparseDepthPoint> sd_points_;
  VoxelField<float> field_;
  AdamState adam_;
  int iteration_ = 0;
  mutable ThreadPool pool_;
};

// ---- finite-difference verification ---------------------------------------

struct GradCheckReport {
  double max_rel_err = 0;
  size_t checked = 0;
};

// Central differences on a random parameter subset against the analytic
// adjoints, with adaptation records frozen from the analytic pass so both
// sides differentiate the same (detached) objective.
inline GradCheckReport grad_check(VoxelField<double>& field, const PipelineScene& scene,
                                  const Batch& batch, const PipelineConfig& pc,
                                  const LossWeights& lw, ThreadPool& pool, size_t n_params = 96,
                                  double h = 1e-4, uint64_t seed = 0) {
  GradBuffer grads;
  grads.resize_like(field.density_raw.size(), field.appearance_raw.size());
  const PipelineResult base = run_pipeline(field, scene, batch, pc, lw, pool, &grads);

  std::mt19937_64 rng(hash_mix(seed, 0xfdcULL));
  GradCheckReport report;
  for (size_t i = 0; i < n_params; ++i) {
    const bool density = i % 2 == 0 || field.appearance_raw.empty();
    std::vector<double>& params = density ? field.density_raw : field.appearance_raw;
    const size_t idx = size_t(rng() % params.size());
    const double saved = params[idx];
    params[idx] = saved + h;
    const double lp = run_pipeline(field, scene, batch, pc, lw, pool, nullptr, &base).total;
    params[idx] = saved - h;
    const double lm = run_pipeline(field, scene, batch, pc, lw, pool, nullptr, &base).total;
    params[idx] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = density ? grads.density[idx] : grads.appearance[idx];
    const double mag = std::max(std::abs(fd), std::abs(an));
    if (mag <= 1e-8) continue;
    report.max_rel_err = std::max(report.max_rel_err, std::abs(fd - an) / mag);
    ++report.checked;
  }
  return report;
}

}  // namespace frugal
