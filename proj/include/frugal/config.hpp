#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "frugal/field.hpp"
#include "frugal/losses.hpp"
#include "frugal/pipeline.hpp"
#include "frugal/sample_poses.hpp"
#include "frugal/train.hpp"

namespace frugal {

// Everything a training run needs. JSON sections mirror the member names;
// overrides address leaves as dotted keys (e.g. grid.base_res=64).
struct RunConfig {
  GridConfig grid;
  TrainConfig train;
  PipelineConfig render;
  LossWeights loss;
  SpiralConfig novel;

  void validate() const {
    grid.validate();
    train.validate();
    render.validate();
    loss.validate();
    novel.validate();
  }
};

namespace detail {

inline double cfg_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw std::invalid_argument("config key '" + key + "' expects a number");
  return v.get<double>();
}

inline int cfg_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer())
    throw std::invalid_argument("config key '" + key + "' expects an integer");
  return v.get<int>();
}

inline uint64_t cfg_u64(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<int64_t>() < 0))
    throw std::invalid_argument("config key '" + key + "' expects a non-negative integer");
  return v.get<uint64_t>();
}

inline bool cfg_bool(const nlohmann::json& v, const std::string& key) {
  if (!v.is_boolean()) throw std::invalid_argument("config key '" + key + "' expects a bool");
  return v.get<bool>();
}

inline std::string cfg_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw std::invalid_argument("config key '" + key + "' expects a string");
  return v.get<std::string>();
}

inline Vec3d cfg_vec3(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 3)
    throw std::invalid_argument("config key '" + key + "' expects an array of 3 numbers");
  Vec3d out;
  for (size_t i = 0; i < 3; ++i) out[int(i)] = cfg_double(v[i], key);
  return out;
}

struct ConfigEntry {
  std::string key;
  std::string desc;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

inline const std::vector<ConfigEntry>& config_entries() {
  using J = nlohmann::json;
  auto vec3_json = [](const Vec3d& v) { return J::array({v.x, v.y, v.z}); };
  static const std::vector<ConfigEntry> entries = {
      {"grid.base_res", "nodes per axis of the finest lattice",
       [](RunConfig& c, const J& v) { c.grid.base_res = cfg_int(v, "grid.base_res"); },
       [](const RunConfig& c) { return J(c.grid.base_res); }},
      {"grid.downsample_ratio", "stride ratio s between adjacent scales",
       [](RunConfig& c, const J& v) {
         c.grid.downsample_ratio = cfg_int(v, "grid.downsample_ratio");
       },
       [](const RunConfig& c) { return J(c.grid.downsample_ratio); }},
      {"grid.num_coarse_levels", "coarse scales L on top of the finest (scales 0..L)",
       [](RunConfig& c, const J& v) {
         c.grid.num_coarse_levels = cfg_int(v, "grid.num_coarse_levels");
       },
       [](const RunConfig& c) { return J(c.grid.num_coarse_levels); }},
      {"grid.sh_degree", "spherical harmonics degree for appearance (0-2)",
       [](RunConfig& c, const J& v) { c.grid.sh_degree = cfg_int(v, "grid.sh_degree"); },
       [](const RunConfig& c) { return J(c.grid.sh_degree); }},
      {"grid.bbox_min", "scene bounding box lower corner [x,y,z]",
       [](RunConfig& c, const J& v) { c.grid.bbox_min = cfg_vec3(v, "grid.bbox_min"); },
       [vec3_json](const RunConfig& c) { return vec3_json(c.grid.bbox_min); }},
      {"grid.bbox_max", "scene bounding box upper corner [x,y,z]",
       [](RunConfig& c, const J& v) { c.grid.bbox_max = cfg_vec3(v, "grid.bbox_max"); },
       [vec3_json](const RunConfig& c) { return vec3_json(c.grid.bbox_max); }},

      {"train.iterations", "optimization steps",
       [](RunConfig& c, const J& v) { c.train.iterations = cfg_int(v, "train.iterations"); },
       [](const RunConfig& c) { return J(c.train.iterations); }},
      {"train.batch_train", "training rays per step (grouped into patches)",
       [](RunConfig& c, const J& v) { c.train.batch_train = cfg_int(v, "train.batch_train"); },
       [](const RunConfig& c) { return J(c.train.batch_train); }},
      {"train.batch_novel", "novel-view rays per step",
       [](RunConfig& c, const J& v) { c.train.batch_novel = cfg_int(v, "train.batch_novel"); },
       [](const RunConfig& c) { return J(c.train.batch_novel); }},
      {"train.batch_sd", "sparse depth constraints per step",
       [](RunConfig& c, const J& v) { c.train.batch_sd = cfg_int(v, "train.batch_sd"); },
       [](const RunConfig& c) { return J(c.train.batch_sd); }},
      {"train.lr_init", "initial learning rate",
       [](RunConfig& c, const J& v) { c.train.lr_init = cfg_double(v, "train.lr_init"); },
       [](const RunConfig& c) { return J(c.train.lr_init); }},
      {"train.lr_final", "learning rate at the last iteration",
       [](RunConfig& c, const J& v) { c.train.lr_final = cfg_double(v, "train.lr_final"); },
       [](const RunConfig& c) { return J(c.train.lr_final); }},
      {"train.beta1", "Adam first-moment decay",
       [](RunConfig& c, const J& v) { c.train.beta1 = cfg_double(v, "train.beta1"); },
       [](const RunConfig& c) { return J(c.train.beta1); }},
      {"train.beta2", "Adam second-moment decay",
       [](RunConfig& c, const J& v) { c.train.beta2 = cfg_double(v, "train.beta2"); },
       [](const RunConfig& c) { return J(c.train.beta2); }},
      {"train.eps", "Adam epsilon (added outside the square root)",
       [](RunConfig& c, const J& v) { c.train.eps = cfg_double(v, "train.eps"); },
       [](const RunConfig& c) { return J(c.train.eps); }},
      {"train.seed", "run seed (init, batches, jitter)",
       [](RunConfig& c, const J& v) { c.train.seed = cfg_u64(v, "train.seed"); },
       [](const RunConfig& c) { return J(c.train.seed); }},
      {"train.checkpoint_every", "iterations between periodic checkpoints (0 = only final)",
       [](RunConfig& c, const J& v) {
         c.train.checkpoint_every = cfg_int(v, "train.checkpoint_every");
       },
       [](const RunConfig& c) { return J(c.train.checkpoint_every); }},

      {"render.n_samples", "samples per ray",
       [](RunConfig& c, const J& v) { c.render.n_samples = cfg_int(v, "render.n_samples"); },
       [](const RunConfig& c) { return J(c.render.n_samples); }},
      {"render.jitter", "stratified jitter of sample positions during training",
       [](RunConfig& c, const J& v) { c.render.jitter = cfg_bool(v, "render.jitter"); },
       [](const RunConfig& c) { return J(c.render.jitter); }},
      {"render.patch_k", "side length of square training-ray patches",
       [](RunConfig& c, const J& v) { c.render.patch_k = cfg_int(v, "render.patch_k"); },
       [](const RunConfig& c) { return J(c.render.patch_k); }},
      {"render.adapt_patch", "odd side length of reprojection comparison patches",
       [](RunConfig& c, const J& v) { c.render.adapt_patch = cfg_int(v, "render.adapt_patch"); },
       [](const RunConfig& c) { return J(c.render.adapt_patch); }},
      {"render.adapt_threshold", "pseudo-depth acceptance threshold on patch-mean error",
       [](RunConfig& c, const J& v) {
         c.render.adapt_threshold = cfg_double(v, "render.adapt_threshold");
       },
       [](const RunConfig& c) { return J(c.render.adapt_threshold); }},
      {"render.novel_src_scale", "scale rendering novel source patches (-1 = per scale)",
       [](RunConfig& c, const J& v) {
         c.render.novel_src_scale = cfg_int(v, "render.novel_src_scale");
       },
       [](const RunConfig& c) { return J(c.render.novel_src_scale); }},
      {"render.occ_fraction", "near-camera fraction of samples the occlusion loss penalizes",
       [](RunConfig& c, const J& v) {
         c.render.occ_fraction = cfg_double(v, "render.occ_fraction");
       },
       [](const RunConfig& c) { return J(c.render.occ_fraction); }},
      {"render.include_ms_color", "include the multi-scale color term",
       [](RunConfig& c, const J& v) {
         c.render.include_ms_color = cfg_bool(v, "render.include_ms_color");
       },
       [](const RunConfig& c) { return J(c.render.include_ms_color); }},
      {"render.composite_background", "blend a constant background behind transparent rays",
       [](RunConfig& c, const J& v) {
         c.render.composite_background = cfg_bool(v, "render.composite_background");
       },
       [](const RunConfig& c) { return J(c.render.composite_background); }},
      {"render.background", "background color [r,g,b]",
       [](RunConfig& c, const J& v) { c.render.background = cfg_vec3(v, "render.background"); },
       [vec3_json](const RunConfig& c) { return vec3_json(c.render.background); }},
      {"render.force_records", "compute adaptation records even at zero geo weight",
       [](RunConfig& c, const J& v) {
         c.render.force_records = cfg_bool(v, "render.force_records");
       },
       [](const RunConfig& c) { return J(c.render.force_records); }},

      {"loss.geo", "cross-scale pseudo-depth weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_geo = cfg_double(v, "loss.geo"); },
       [](const RunConfig& c) { return J(c.loss.lambda_geo); }},
      {"loss.sd", "sparse depth weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_sd = cfg_double(v, "loss.sd"); },
       [](const RunConfig& c) { return J(c.loss.lambda_sd); }},
      {"loss.mono", "monocular depth ranking weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_d = cfg_double(v, "loss.mono"); },
       [](const RunConfig& c) { return J(c.loss.lambda_d); }},
      {"loss.tv_density", "density total-variation weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_tv_density = cfg_double(v, "loss.tv_density"); },
       [](const RunConfig& c) { return J(c.loss.lambda_tv_density); }},
      {"loss.tv_appearance", "appearance total-variation weight",
       [](RunConfig& c, const J& v) {
         c.loss.lambda_tv_appearance = cfg_double(v, "loss.tv_appearance");
       },
       [](const RunConfig& c) { return J(c.loss.lambda_tv_appearance); }},
      {"loss.ds", "rendered-depth patch smoothness weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_ds = cfg_double(v, "loss.ds"); },
       [](const RunConfig& c) { return J(c.loss.lambda_ds); }},
      {"loss.l1", "density sparsity weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_l1 = cfg_double(v, "loss.l1"); },
       [](const RunConfig& c) { return J(c.loss.lambda_l1); }},
      {"loss.dist", "distortion weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_dist = cfg_double(v, "loss.dist"); },
       [](const RunConfig& c) { return J(c.loss.lambda_dist); }},
      {"loss.occ", "near-camera occlusion weight",
       [](RunConfig& c, const J& v) { c.loss.lambda_occ = cfg_double(v, "loss.occ"); },
       [](const RunConfig& c) { return J(c.loss.lambda_occ); }},

      {"novel_poses.preset",
       "spiral preset: llff, dtu, or realestate (applied before other novel_poses.*)",
       [](RunConfig& c, const J& v) { c.novel = spiral_preset(cfg_string(v, "novel_poses.preset")); },
       [](const RunConfig&) { return J(); }},
      {"novel_poses.n_poses", "poses on the spiral",
       [](RunConfig& c, const J& v) { c.novel.n_poses = cfg_int(v, "novel_poses.n_poses"); },
       [](const RunConfig& c) { return J(c.novel.n_poses); }},
      {"novel_poses.rotations", "full turns of the spiral",
       [](RunConfig& c, const J& v) { c.novel.rotations = cfg_double(v, "novel_poses.rotations"); },
       [](const RunConfig& c) { return J(c.novel.rotations); }},
      {"novel_poses.radius_scale", "spiral radius multiplier",
       [](RunConfig& c, const J& v) {
         c.novel.radius_scale = cfg_double(v, "novel_poses.radius_scale");
       },
       [](const RunConfig& c) { return J(c.novel.radius_scale); }},
      {"novel_poses.z_rate", "frequency of the out-of-plane wobble",
       [](RunConfig& c, const J& v) { c.novel.z_rate = cfg_double(v, "novel_poses.z_rate"); },
       [](const RunConfig& c) { return J(c.novel.z_rate); }},
  };
  return entries;
}

inline const std::map<std::string, const ConfigEntry*>& config_registry() {
  static const std::map<std::string, const ConfigEntry*> reg = [] {
    std::map<std::string, const ConfigEntry*> m;
    for (const ConfigEntry& e : config_entries()) m.emplace(e.key, &e);
    return m;
  }();
  return reg;
}

}  // namespace detail

inline void apply_config_value(RunConfig& cfg, const std::string& key,
                               const nlohmann::json& value) {
  const auto& reg = detail::config_registry();
  const auto it = reg.find(key);
  if (it == reg.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second->set(cfg, value);
}

// Strict two-level walk: top-level sections of leaf values. The preset is
// applied first so explicit novel.* keys win regardless of JSON key order.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object");
  if (j.contains("novel_poses") && j["novel_poses"].is_object() &&
      j["novel_poses"].contains("preset"))
    apply_config_value(cfg, "novel_poses.preset", j["novel_poses"]["preset"]);
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object())
      throw std::invalid_argument("config section '" + section + "' must be a JSON object");
    for (const auto& [key, value] : body.items()) {
      const std::string dotted = section + "." + key;
      if (dotted == "novel_poses.preset") continue;
      apply_config_value(cfg, dotted, value);
    }
  }
}

// key=value with the value parsed as JSON; bare words fall back to strings so
// novel.preset=dtu works without quoting.
inline void apply_config_override(RunConfig& cfg, const std::string& kv) {
  const size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + kv + "' is not of the form key=value");
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  apply_config_value(cfg, key, value);
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json out;
  for (const detail::ConfigEntry& e : detail::config_entries()) {
    const nlohmann::json v = e.get(cfg);
    if (v.is_null()) continue;
    const size_t dot = e.key.find('.');
    out[e.key.substr(0, dot)][e.key.substr(dot + 1)] = v;
  }
  return out;
}

inline std::string config_help() {
  const RunConfig defaults;
  std::ostringstream out;
  out << "Config keys (JSON sections or dotted overrides):\n";
  for (const detail::ConfigEntry& e : detail::config_entries()) {
    out << "  " << e.key;
    const nlohmann::json v = e.get(defaults);
    if (!v.is_null()) out << " = " << v.dump();
    out << "\n      " << e.desc << "\n";
  }
  return out.str();
}

}  // namespace frugal
