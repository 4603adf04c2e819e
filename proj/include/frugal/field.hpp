#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "frugal/math.hpp"

namespace frugal {

struct GridConfig {
  int base_res = 128;         // N nodes per axis
  int downsample_ratio = 4;   // s
  int num_coarse_levels = 2;  // L; scale indices 0..L, 0 = finest
  Vec3d bbox_min{-1, -1, -1};
  Vec3d bbox_max{1, 1, 1};
  int sh_degree = 0;

  int appearance_channels() const { return 3 * (sh_degree + 1) * (sh_degree + 1); }

  int stride_at(int level) const {
    int s = 1;
    for (int i = 0; i < level; ++i) s *= downsample_ratio;
    return s;
  }

  int res_at(int level) const { return base_res / stride_at(level); }

  void validate() const {
    if (downsample_ratio < 2) throw std::invalid_argument("grid: downsample_ratio must be >= 2");
    if (num_coarse_levels < 0) throw std::invalid_argument("grid: num_coarse_levels must be >= 0");
    if (sh_degree < 0 || sh_degree > 2) throw std::invalid_argument("grid: sh_degree must be in [0, 2]");
    const int coarse_stride = stride_at(num_coarse_levels);
    if (base_res % coarse_stride != 0)
      throw std::invalid_argument("grid: base_res must be divisible by s^L");
    if (base_res / coarse_stride < 2)
      throw std::invalid_argument("grid: coarsest lattice needs at least 2 nodes per axis");
    for (int a = 0; a < 3; ++a)
      if (!(bbox_min[a] < bbox_max[a]))
        throw std::invalid_argument("grid: bbox_min must be < bbox_max componentwise");
  }
};

// Level-l read view of the base lattice: nodes at base indices {0, s^l, 2 s^l, ...}.
// Reads and gradient writes address base storage directly; no copies.
struct ScaleLattice {
  int level = 0;
  int stride = 1;
  int res = 0;  // nodes per axis at this level
};

inline ScaleLattice scale_lattice(const GridConfig& cfg, int level) {
  if (level < 0 || level > cfg.num_coarse_levels)
    throw std::out_of_range("scale_lattice: level out of range");
  return ScaleLattice{level, cfg.stride_at(level), cfg.res_at(level)};
}

// Unnormalized real spherical harmonics basis, degree <= 2.
// Order: 1 | y z x | xy yz (3z^2-1) xz (x^2-y^2).
inline int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

inline void sh_basis(int degree, const Vec3d& d, double* out) {
  out[0] = 1.0;
  if (degree >= 1) {
    out[1] = d.y;
    out[2] = d.z;
    out[3] = d.x;
  }
  if (degree >= 2) {
    out[4] = d.x * d.y;
    out[5] = d.y * d.z;
    out[6] = 3.0 * d.z * d.z - 1.0;
    out[7] = d.x * d.z;
    out[8] = d.x * d.x - d.y * d.y;
  }
}

// Addresses and trilinear weights of the <= 8 base nodes a query touches.
struct InterpStencil {
  size_t node[8];
  double weight[8];
  bool inside = false;
};

// Gradient accumulator matching a field's parameter arrays. Always double.
struct GradBuffer {
  std::vector<double> density;
  std::vector<double> appearance;

  void resize_like(size_t density_n, size_t appearance_n) {
    density.assign(density_n, 0.0);
    appearance.assign(appearance_n, 0.0);
  }
  void zero() {
    std::fill(density.begin(), density.end(), 0.0);
    std::fill(appearance.begin(), appearance.end(), 0.0);
  }
  void add(const GradBuffer& o) {
    for (size_t i = 0; i < density.size(); ++i) density[i] += o.density[i];
    for (size_t i = 0; i < appearance.size(); ++i) appearance[i] += o.appearance[i];
  }
};

template <typename T>
struct VoxelField {
  GridConfig config;
  std::vector<T> density_raw;     // N^3, pre-activation
  std::vector<T> appearance_raw;  // N^3 * C, pre-activation

  explicit VoxelField(const GridConfig& cfg) : config(cfg) {
    cfg.validate();
    const size_t n = static_cast<size_t>(cfg.base_res);
    density_raw.assign(n * n * n, T(0));
    appearance_raw.assign(n * n * n * cfg.appearance_channels(), T(0));
  }

  size_t node_index(int ix, int iy, int iz) const {
    const size_t n = static_cast<size_t>(config.base_res);
    return (static_cast<size_t>(iz) * n + iy) * n + ix;
  }

  bool inside_bbox(const Vec3d& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < config.bbox_min[a] || p[a] > config.bbox_max[a]) return false;
    return true;
  }

  // Node i sits at bbox_min + i * (extent / (N-1)); level-l cells span stride
  // base steps. Queries inside the bbox but beyond the last strided node
  // clamp to the edge cell (flat extension over the uncovered margin).
  InterpStencil stencil(const Vec3d& p, const ScaleLattice& lat) const {
    InterpStencil st;
    if (!inside_bbox(p)) return st;
    st.inside = true;
    const int n_base = config.base_res;
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
      const double h = (config.bbox_max[a] - config.bbox_min[a]) / double(n_base - 1);
      const double ub = (p[a] - config.bbox_min[a]) / h;
      const double ul = ub / double(lat.stride);
      int c = static_cast<int>(std::floor(ul));
      c = std::clamp(c, 0, lat.res - 2);
      i0[a] = c;
      f[a] = std::clamp(ul - c, 0.0, 1.0);
    }
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx, ++k) {
          st.node[k] = node_index((i0[0] + dx) * lat.stride, (i0[1] + dy) * lat.stride,
                                  (i0[2] + dz) * lat.stride);
          st.weight[k] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                         (dz ? f[2] : 1.0 - f[2]);
        }
    return st;
  }

  // Interpolated pre-activation density; 0 outside the bbox.
  double density_preact(const Vec3d& p, const ScaleLattice& lat, bool* inside = nullptr) const {
    const InterpStencil st = stencil(p, lat);
    if (inside) *inside = st.inside;
    if (!st.inside) return 0.0;
    double z = 0;
    for (int k = 0; k < 8; ++k) z += st.weight[k] * double(density_raw[st.node[k]]);
    return z;
  }

  double sample_density(const Vec3d& p, const ScaleLattice& lat) const {
    bool inside = false;
    const double z = density_preact(p, lat, &inside);
    return inside ? softplus(z) : 0.0;
  }

  // Interpolated pre-activation appearance coefficients (C values).
  void appearance_preact(const InterpStencil& st, double* out) const {
    const int c_count = config.appearance_channels();
    for (int c = 0; c < c_count; ++c) out[c] = 0.0;
    if (!st.inside) return;
    for (int k = 0; k < 8; ++k) {
      const T* base = appearance_raw.data() + st.node[k] * c_count;
      const double w = st.weight[k];
      for (int c = 0; c < c_count; ++c) out[c] += w * double(base[c]);
    }
  }

  // rgb = sigmoid(sum_k B_k(dir) * coef_k); view-independent at degree 0.
  Vec3d sample_appearance(const Vec3d& p, const Vec3d& view_dir, const ScaleLattice& lat) const {
    const InterpStencil st = stencil(p, lat);
    if (!st.inside) return {0, 0, 0};
    double basis[9];
    sh_basis(config.sh_degree, view_dir, basis);
    const int nb = sh_basis_count(config.sh_degree);
    const int c_count = config.appearance_channels();
    double coef[27];
    appearance_preact(st, coef);
    Vec3d rgb;
    for (int ch = 0; ch < 3; ++ch) {
      double y = 0;
      for (int k = 0; k < nb; ++k) y += basis[k] * coef[k * 3 + ch];
      rgb[ch] = sigmoid(y);
    }
    return rgb;
  }

  void scatter_density(const InterpStencil& st, double d_preact, GradBuffer& g) const {
    if (!st.inside) return;
    for (int k = 0; k < 8; ++k) g.density[st.node[k]] += d_preact * st.weight[k];
  }

  // d_preact has one entry per appearance channel.
  void scatter_appearance(const InterpStencil& st, const double* d_preact, GradBuffer& g) const {
    if (!st.inside) return;
    const int c_count = config.appearance_channels();
    for (int k = 0; k < 8; ++k) {
      double* base = g.appearance.data() + st.node[k] * c_count;
      const double w = st.weight[k];
      for (int c = 0; c < c_count; ++c) base[c] += w * d_preact[c];
    }
  }

  void check_finite() const {
    for (const T v : density_raw)
      if (!std::isfinite(double(v))) throw std::runtime_error("field: non-finite density value");
    for (const T v : appearance_raw)
      if (!std::isfinite(double(v))) throw std::runtime_error("field: non-finite appearance value");
  }
};

// Near-empty start: softplus(density) around 1e-2, colors around mid-gray.
template <typename T>
void init_field(VoxelField<T>& field, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-0.01, 0.01);
  std::uniform_real_distribution<double> ua(-0.1, 0.1);
  const double bias = softplus_inv(1e-2);
  for (auto& v : field.density_raw) v = T(ud(rng) + bias);
  for (auto& v : field.appearance_raw) v = T(ua(rng));
}

}  // namespace frugal
