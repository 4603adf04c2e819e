#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "frugal/adapt.hpp"
#include "frugal/config.hpp"
#include "frugal/data.hpp"
#include "frugal/metrics.hpp"
#include "frugal/train.hpp"

namespace fs = std::filesystem;
using namespace frugal;

namespace {

struct CommonOpts {
  std::string config;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool seed_given = false;
};

RunConfig assemble_config(const CommonOpts& o) {
  RunConfig rc;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw std::runtime_error("cannot open config file " + o.config);
    nlohmann::json j;
    in >> j;
    apply_config_json(rc, j);
  }
  for (const std::string& kv : o.sets) apply_config_override(rc, kv);
  if (o.seed_given) rc.train.seed = o.seed;
  return rc;
}

bool bbox_overridden(const CommonOpts& o) {
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    nlohmann::json j;
    in >> j;
    if (j.contains("grid") && j["grid"].is_object() &&
        (j["grid"].contains("bbox_min") || j["grid"].contains("bbox_max")))
      return true;
  }
  for (const std::string& kv : o.sets)
    if (kv.rfind("grid.bbox", 0) == 0) return true;
  return false;
}

std::string view_png(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", id);
  return std::string(buf);
}

void write_view(const std::string& stem, const Image& rgb, const Image& depth,
                bool with_depth = true) {
  write_png(stem + ".png", rgb);
  if (with_depth) write_pfm(stem + "_depth.pfm", depth);
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
  CommonOpts common;
  std::string data, out, resume;
};

const char kCsvHeader[] =
    "iter,ms_color,geo,tv_density,tv_appearance,ds,l1,dist,occ,sd,mono,total,lr,coarse_frac\n";

void append_csv_row(std::ofstream& csv, const StepResult& r) {
  const LossTerms& t = r.pipeline.terms;
  csv << r.iteration << ',' << t.ms_color << ',' << t.geo << ',' << t.tv_density << ','
      << t.tv_appearance << ',' << t.ds << ',' << t.l1 << ',' << t.dist << ',' << t.occ << ','
      << t.sd << ',' << t.mono << ',' << r.pipeline.total << ',' << r.lr << ','
      << r.coarse_fraction() << '\n';
}

int cmd_train(const TrainOpts& o) {
  RunConfig rc = assemble_config(o.common);
  const SceneDataset ds = load_scene(o.data);
  if (!bbox_overridden(o.common)) {
    rc.grid.bbox_min = ds.bbox_min;
    rc.grid.bbox_max = ds.bbox_max;
  }
  rc.validate();
  fs::create_directories(o.out);
  fs::create_directories(fs::path(o.out) / "renders");

  Trainer trainer(ds, rc.grid, rc.train, rc.render, rc.loss, rc.novel);
  if (!o.resume.empty()) trainer.restore(load_checkpoint(o.resume));

  std::ofstream(fs::path(o.out) / "config.json") << config_to_json(rc).dump(2) << "\n";
  const fs::path csv_path = fs::path(o.out) / "losses.csv";
  const bool append = !o.resume.empty() && fs::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  if (!append) csv << kCsvHeader;

  const int log_every = std::max(1, rc.train.iterations / 20);
  auto render_test = [&](const std::string& stem) {
    if (ds.test_ids.empty()) return;
    const int id = ds.test_ids[0];
    const auto [rgb, depth] = trainer.render_view(ds.cameras[size_t(id)], 0);
    write_view((fs::path(o.out) / "renders" / stem).string() + "_view" + view_png(id), rgb, depth,
               false);
  };

  while (trainer.iteration() < rc.train.iterations) {
    const StepResult r = trainer.step();
    append_csv_row(csv, r);
    const int done = r.iteration + 1;
    if (done % log_every == 0 || done == rc.train.iterations)
      std::cout << "iter " << done << "/" << rc.train.iterations << " total=" << r.pipeline.total
                << " ms_color=" << r.pipeline.terms.ms_color << " lr=" << r.lr << "\n";
    if (rc.train.checkpoint_every > 0 && done % rc.train.checkpoint_every == 0 &&
        done < rc.train.iterations) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "ckpt_%06d.ckpt", done);
      save_checkpoint((fs::path(o.out) / buf).string(), trainer.field(), trainer.adam(),
                      trainer.iteration());
      std::snprintf(buf, sizeof buf, "iter%06d", done);
      render_test(buf);
    }
  }
  save_checkpoint((fs::path(o.out) / "final.ckpt").string(), trainer.field(), trainer.adam(),
                  trainer.iteration());
  render_test("final");
  std::cout << "wrote " << (fs::path(o.out) / "final.ckpt").string() << "\n";
  return 0;
}

// ---- render ---------------------------------------------------------------

struct RenderOpts {
  std::string checkpoint, data, out;
  std::string split = "test";
  std::string preset = "llff";
  int scale = 0;
  int samples = 192;
};

int cmd_render(const RenderOpts& o) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const SceneDataset ds = load_scene(o.data);
  if (o.scale < 0 || o.scale > ck.field.config.num_coarse_levels)
    throw std::invalid_argument("--scale out of range for this checkpoint");

  std::vector<Camera> cams;
  std::vector<int> labels;
  if (o.split == "train" || o.split == "all")
    for (int id : ds.train_ids) {
      cams.push_back(ds.cameras[size_t(id)]);
      labels.push_back(id);
    }
  if (o.split == "test" || o.split == "all")
    for (int id : ds.test_ids) {
      cams.push_back(ds.cameras[size_t(id)]);
      labels.push_back(id);
    }
  if (o.split == "spiral") {
    cams = spiral_poses(ds.train_cameras(), spiral_preset(o.preset));
    for (size_t i = 0; i < cams.size(); ++i) labels.push_back(int(i));
  }
  if (cams.empty()) {
    if (o.split != "train" && o.split != "test" && o.split != "all" && o.split != "spiral")
      throw std::invalid_argument("--split must be train, test, all, or spiral");
    throw std::runtime_error("no views in split '" + o.split + "'");
  }

  fs::create_directories(o.out);
  ThreadPool pool(worker_count());
  for (size_t i = 0; i < cams.size(); ++i) {
    const auto [rgb, depth] =
        render_frame(ck.field, cams[i], o.scale, o.samples, ck.field.config.bbox_min,
                     ck.field.config.bbox_max, RenderOptions{}, pool);
    write_view((fs::path(o.out) / view_png(labels[i])).string(), rgb, depth);
  }
  std::cout << "rendered " << cams.size() << " views to " << o.out << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalOpts {
  std::string checkpoint, data, out;
  int samples = 192;
};

int cmd_eval(const EvalOpts& o) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const SceneDataset ds = load_scene(o.data);
  if (ds.test_ids.empty()) throw std::runtime_error("scene has no test views to evaluate");

  ThreadPool pool(worker_count());
  EvalReport report;
  for (int id : ds.test_ids) {
    const auto [rgb, depth] =
        render_frame(ck.field, ds.cameras[size_t(id)], 0, o.samples, ck.field.config.bbox_min,
                     ck.field.config.bbox_max, RenderOptions{}, pool);
    ViewMetrics vm;
    vm.view_id = id;
    vm.psnr = psnr(rgb, ds.images[size_t(id)]);
    vm.ssim = ssim(rgb, ds.images[size_t(id)]);
    if (!ds.gt_depth.empty()) {
      vm.depth_mae = depth_mae(depth, ds.gt_depth[size_t(id)]);
      vm.has_depth = true;
    }
    report.views.push_back(vm);
  }
  fs::create_directories(o.out);
  std::ofstream(fs::path(o.out) / "eval.csv") << report.to_csv();
  std::ofstream(fs::path(o.out) / "eval.json") << report.to_json().dump(2) << "\n";
  std::cout << "mean_psnr=" << report.mean_psnr() << " mean_ssim=" << report.mean_ssim() << "\n";
  return 0;
}

// ---- synth ----------------------------------------------------------------

struct SynthOpts {
  std::string out;
  std::string preset = "spheres";
  std::string texture = "smooth";
  std::string mono = "affine";
  int views = 6, test = 1;
  int width = 100, height = 100;
  double fov = 50.0, radius = 3.2, elevation = 0.5, near = 1.0, far = 6.0;
  int sparse = 64;
  double mono_a = 1.25, mono_b = 0.15;
  double texture_freq = 8.0;
  uint64_t seed = 0;
};

SyntheticSceneSpec synth_spec(const SynthOpts& o) {
  SyntheticSceneSpec spec;
  if (o.preset == "sphere") {
    spec.spheres.push_back({{0, 0, 0}, 0.6, {0.9, 0.6, 0.3}});
  } else if (o.preset == "spheres") {
    spec.spheres.push_back({{-0.45, 0.1, 0.0}, 0.42, {0.9, 0.55, 0.25}});
    spec.spheres.push_back({{0.5, -0.05, 0.15}, 0.3, {0.3, 0.6, 0.9}});
    spec.boxes.push_back({{-0.95, 0.45, -0.95}, {0.95, 0.8, 0.95}, {0.5, 0.8, 0.45}});
  } else if (o.preset == "box") {
    spec.boxes.push_back({{-0.5, -0.4, -0.45}, {0.45, 0.5, 0.5}, {0.8, 0.7, 0.4}});
  } else {
    throw std::invalid_argument("--preset must be sphere, spheres, or box");
  }
  if (o.texture == "flat")
    spec.texture = TextureKind::flat;
  else if (o.texture == "checker")
    spec.texture = TextureKind::checker;
  else if (o.texture == "smooth")
    spec.texture = TextureKind::smooth;
  else
    throw std::invalid_argument("--texture must be flat, checker, or smooth");
  spec.texture_freq = o.texture_freq;
  return spec;
}

int cmd_synth(const SynthOpts& o) {
  if (o.test < 0 || o.test >= o.views)
    throw std::invalid_argument("--test must be in [0, views)");
  const SyntheticSceneSpec spec = synth_spec(o);
  const std::vector<Camera> cams =
      orbit_cameras(o.views, o.width, o.height, o.fov, o.radius, o.elevation, o.near, o.far);
  std::vector<int> test_ids;
  for (int i = o.views - o.test; i < o.views; ++i) test_ids.push_back(i);
  SceneDataset ds = generate_synthetic(spec, cams, test_ids);

  std::mt19937_64 rng(o.seed);
  for (int id : ds.train_ids) {
    const Image& depth = ds.gt_depth[size_t(id)];
    int collected = 0;
    for (int attempt = 0; collected < o.sparse && attempt < 50 * o.sparse; ++attempt) {
      const int x = int(rng() % uint64_t(o.width));
      const int y = int(rng() % uint64_t(o.height));
      const double d = depth.at(x, y, 0);
      if (!std::isfinite(d) || d <= 0) continue;
      ds.sparse_depth.push_back({id, double(x), double(y), d});
      ++collected;
    }
  }
  if (o.mono == "affine") {
    for (int id : ds.train_ids) {
      const Image& depth = ds.gt_depth[size_t(id)];
      Image mono(o.width, o.height, 1);
      for (int y = 0; y < o.height; ++y)
        for (int x = 0; x < o.width; ++x) {
          const double d = depth.at(x, y, 0);
          const double eff = std::isfinite(d) && d > 0 ? d : cams[size_t(id)].far;
          mono.at(x, y, 0) = float(o.mono_a * eff + o.mono_b);
        }
      ds.mono_depth.emplace(id, std::move(mono));
    }
  } else if (o.mono != "none") {
    throw std::invalid_argument("--mono must be affine or none");
  }
  save_scene(o.out, ds);
  std::cout << "wrote scene with " << ds.train_ids.size() << " train / " << ds.test_ids.size()
            << " test views to " << o.out << "\n";
  return 0;
}

// ---- check-grads ----------------------------------------------------------

struct CheckGradsOpts {
  CommonOpts common;
  int n_params = 64;
  double h = 1e-4;
  double tol = 1e-5;
};

int cmd_check_grads(const CheckGradsOpts& o) {
  // overrides land on defaults tuned for a fast f64 check
  RunConfig rc;
  rc.grid.base_res = 8;
  rc.grid.downsample_ratio = 2;
  rc.grid.num_coarse_levels = 2;
  rc.render.n_samples = 48;
  rc.render.jitter = true;
  if (!o.common.config.empty()) {
    std::ifstream in(o.common.config);
    if (!in) throw std::runtime_error("cannot open config file " + o.common.config);
    nlohmann::json j;
    in >> j;
    apply_config_json(rc, j);
  }
  for (const std::string& kv : o.common.sets) apply_config_override(rc, kv);
  if (o.common.seed_given) rc.train.seed = o.common.seed;
  rc.grid.validate();
  rc.render.validate();
  const uint64_t seed = rc.train.seed;

  SyntheticSceneSpec spec;
  spec.spheres.push_back({{-0.3, 0.0, 0.0}, 0.35, {0.9, 0.55, 0.25}});
  spec.spheres.push_back({{0.35, 0.05, 0.1}, 0.25, {0.3, 0.6, 0.9}});
  spec.texture = TextureKind::smooth;
  spec.bbox_min = rc.grid.bbox_min;
  spec.bbox_max = rc.grid.bbox_max;
  const std::vector<Camera> cams = orbit_cameras(3, 24, 24, 55.0, 2.6, 0.4, 1.2, 4.5);
  SceneDataset ds = generate_synthetic(spec, cams, {});
  std::mt19937_64 rng(hash_mix(seed, 0xc6ULL));
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

  SpiralConfig sc;
  sc.n_poses = 4;
  sc.radius_scale = 0.7;
  const PipelineScene scene =
      build_pipeline_scene(ds, rc.grid, spiral_poses(ds.train_cameras(), sc));

  // A near-transparent random init renders degenerate depths, which makes
  // warps land off-image and zeroes the depth-driven terms. Bias toward a
  // semi-opaque volume with visible color variation instead.
  VoxelField<double> field(rc.grid);
  init_field(field, seed);
  const double bias_shift = softplus_inv(0.6) - softplus_inv(1e-2);
  for (double& v : field.density_raw) v += bias_shift;
  std::uniform_real_distribution<double> ua(-0.6, 0.6);
  for (double& v : field.appearance_raw) v = ua(rng);

  // patches sit over the spheres so depth targets vary within each patch
  Batch batch;
  batch.seed = hash_mix(seed, 0xbaULL);
  const int k = rc.render.patch_k, ar = rc.render.adapt_patch / 2;
  for (int i = 0; i < 2; ++i) {
    RayUnit u;
    u.cam = i;
    u.u0 = std::min(24 - k, 9 + 2 * i);
    u.v0 = std::min(24 - k, 10 - i);
    u.seed = hash_mix(batch.seed, uint64_t(i));
    batch.train_units.push_back(u);
  }
  for (int i = 0; i < 2; ++i) {
    RayUnit u;
    u.cam = i % int(scene.novel_cams.size());
    u.u0 = std::clamp(10 + 3 * i, ar, 23 - ar);
    u.v0 = std::clamp(11 - 2 * i, ar, 23 - ar);
    u.seed = hash_mix(batch.seed, uint64_t(100 + i));
    batch.novel_units.push_back(u);
  }
  batch.sd = compact_sparse_depth(ds);

  struct Battery {
    const char* name;
    bool include_ms;
    double LossWeights::* weight;
    double threshold;  // pseudo-depth acceptance; huge keeps every computable record
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

  ThreadPool pool(worker_count());
  bool ok = true;
  for (const Battery& b : batteries) {
    LossWeights lw;
    lw.lambda_geo = lw.lambda_sd = lw.lambda_d = lw.lambda_tv_density = lw.lambda_tv_appearance =
        lw.lambda_ds = lw.lambda_l1 = lw.lambda_dist = lw.lambda_occ = 0.0;
    if (b.weight) lw.*(b.weight) = 1.0;
    PipelineConfig pc = rc.render;
    pc.include_ms_color = b.include_ms;
    pc.adapt_threshold = b.threshold;
    const GradCheckReport rep =
        grad_check(field, scene, batch, pc, lw, pool, size_t(o.n_params), o.h, seed);
    const bool pass = rep.max_rel_err < o.tol && rep.checked > 0;
    ok = ok && pass;
    std::printf("%-14s max_rel_err=%.3e checked=%zu %s\n", b.name, rep.max_rel_err, rep.checked,
                pass ? "PASS" : "FAIL");
  }
  if (!ok) {
    std::cout << "gradient check FAILED\n";
    return 3;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

// ---- warp-debug -----------------------------------------------------------

struct WarpDebugOpts {
  std::string checkpoint, data, out;
  int view = 0;
  int rays = 64;
  int samples = 128;
  int patch = 5;
  uint64_t seed = 0;
};

int cmd_warp_debug(const WarpDebugOpts& o) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const SceneDataset ds = load_scene(o.data);
  const std::vector<Camera> cams = ds.train_cameras();
  const std::vector<Image> images = ds.train_images();
  if (o.view < 0 || o.view >= int(cams.size()))
    throw std::invalid_argument("--view must index the training views");

  AdaptOptions ao;
  ao.patch = o.patch;
  ao.n_samples = o.samples;
  const int L = ck.field.config.num_coarse_levels;

  std::ostringstream csv;
  csv << "u,v";
  for (int l = 0; l <= L; ++l) csv << ",e_" << l;
  csv << ",selected,pseudo_depth,valid\n";
  std::mt19937_64 rng(o.seed);
  const Camera& cam = cams[size_t(o.view)];
  for (int i = 0; i < o.rays; ++i) {
    const double u = double(rng() % uint64_t(cam.width));
    const double v = double(rng() % uint64_t(cam.height));
    const AdaptationRecord rec = adapt_train_ray(ck.field, o.view, {u, v}, cams, images, ao);
    csv << u << ',' << v;
    for (int l = 0; l <= L; ++l) csv << ',' << rec.errors[size_t(l)];
    csv << ',' << rec.selected << ',' << rec.pseudo_depth << ',' << (rec.valid ? 1 : 0) << '\n';
  }
  if (o.out.empty() || o.out == "-") {
    std::cout << csv.str();
  } else {
    std::ofstream f(o.out);
    if (!f) throw std::runtime_error("cannot write " + o.out);
    f << csv.str();
    std::cout << "wrote " << o.rays << " rows to " << o.out << "\n";
  }
  return 0;
}

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--set", c.sets, "dotted override key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "override train.seed")->each([&c](const std::string&) {
    c.seed_given = true;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frugal: few-shot voxel radiance fields"};
  app.require_subcommand(1);

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "optimize a field on a scene directory");
  add_common(train, to.common);
  train->add_option("--data", to.data, "scene directory")->required();
  train->add_option("--out", to.out, "output directory")->required();
  train->add_option("--resume", to.resume, "checkpoint to continue from");
  train->footer("Unless grid.bbox_* is set explicitly, the grid adopts the scene bbox.\n\n" +
                config_help());

  RenderOpts ro;
  CLI::App* render = app.add_subcommand("render", "render views from a checkpoint");
  render->add_option("--checkpoint", ro.checkpoint, "checkpoint file")->required();
  render->add_option("--data", ro.data, "scene directory")->required();
  render->add_option("--out", ro.out, "output directory")->required();
  render->add_option("--split", ro.split, "train, test, all, or spiral (default test)");
  render->add_option("--preset", ro.preset, "spiral preset for --split spiral");
  render->add_option("--scale", ro.scale, "scale to render (0 = finest)");
  render->add_option("--samples", ro.samples, "samples per ray");

  EvalOpts eo;
  CLI::App* eval = app.add_subcommand("eval", "metrics on the test split");
  eval->add_option("--checkpoint", eo.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", eo.data, "scene directory")->required();
  eval->add_option("--out", eo.out, "output directory")->required();
  eval->add_option("--samples", eo.samples, "samples per ray");

  SynthOpts so;
  CLI::App* synth = app.add_subcommand("synth", "generate an analytic test scene");
  synth->add_option("--out", so.out, "output directory")->required();
  synth->add_option("--preset", so.preset, "sphere, spheres, or box");
  synth->add_option("--texture", so.texture, "flat, checker, or smooth");
  synth->add_option("--views", so.views, "total camera count");
  synth->add_option("--test", so.test, "trailing views held out for testing");
  synth->add_option("--width", so.width, "image width");
  synth->add_option("--height", so.height, "image height");
  synth->add_option("--fov", so.fov, "horizontal field of view, degrees");
  synth->add_option("--radius", so.radius, "orbit radius");
  synth->add_option("--elevation", so.elevation, "camera height above the origin");
  synth->add_option("--near", so.near, "near plane");
  synth->add_option("--far", so.far, "far plane");
  synth->add_option("--sparse", so.sparse, "sparse depth points per train view");
  synth->add_option("--mono", so.mono, "mono depth: affine or none");
  synth->add_option("--mono-a", so.mono_a, "mono depth scale");
  synth->add_option("--mono-b", so.mono_b, "mono depth offset");
  synth->add_option("--texture-freq", so.texture_freq, "procedural texture frequency");
  synth->add_option("--seed", so.seed, "sampling seed");

  CheckGradsOpts go;
  CLI::App* grads = app.add_subcommand("check-grads", "finite-difference gradient verification");
  add_common(grads, go.common);
  grads->add_option("--params", go.n_params, "parameters sampled per term");
  grads->add_option("--step", go.h, "central-difference step");
  grads->add_option("--tol", go.tol, "max relative error accepted");
  grads->footer(config_help());

  WarpDebugOpts wo;
  CLI::App* warp = app.add_subcommand("warp-debug", "per-ray cross-scale adaptation dump");
  warp->add_option("--checkpoint", wo.checkpoint, "checkpoint file")->required();
  warp->add_option("--data", wo.data, "scene directory")->required();
  warp->add_option("--view", wo.view, "train-view index to sample");
  warp->add_option("--rays", wo.rays, "rays to sample");
  warp->add_option("--samples", wo.samples, "samples per ray");
  warp->add_option("--patch", wo.patch, "comparison patch side (odd)");
  warp->add_option("--out", wo.out, "CSV path (default stdout)");
  warp->add_option("--seed", wo.seed, "pixel sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (train->parsed()) return cmd_train(to);
    if (render->parsed()) return cmd_render(ro);
    if (eval->parsed()) return cmd_eval(eo);
    if (synth->parsed()) return cmd_synth(so);
    if (grads->parsed()) return cmd_check_grads(go);
    if (warp->parsed()) return cmd_warp_debug(wo);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::logic_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
