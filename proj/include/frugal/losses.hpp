#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "frugal/field.hpp"
#include "frugal/geometry.hpp"
#include "frugal/math.hpp"
#include "frugal/render.hpp"

namespace frugal {

struct LossWeights {
  double lambda_geo = 0.01;
  double lambda_sd = 0.5;
  double lambda_d = 0.01;
  double lambda_tv_density = 0.01;
  double lambda_tv_appearance = 0.001;
  double lambda_ds = 0.001;
  double lambda_l1 = 1e-5;
  double lambda_dist = 0.001;
  double lambda_occ = 0.01;

  void validate() const {
    for (double w : {lambda_geo, lambda_sd, lambda_d, lambda_tv_density, lambda_tv_appearance,
                     lambda_ds, lambda_l1, lambda_dist, lambda_occ})
      if (!(w >= 0)) throw std::invalid_argument("loss weights must be >= 0");
  }
};

struct SparseDepthPoint {
  int view_id = 0;
  double u = 0, v = 0;   // pixel coordinates
  double depth = 0;      // along-ray, scene units
};

// Mean over scales of the per-ray mean squared color error. rendered[l][r],
// gradient accumulated into d_rendered if given (same shape).
inline double ms_color_loss(const std::vector<std::vector<Vec3d>>& rendered,
                            const std::vector<Vec3d>& gt,
                            std::vector<std::vector<Vec3d>>* d_rendered = nullptr) {
  const size_t scales = rendered.size();
  if (scales == 0) throw std::invalid_argument("ms_color_loss: no scales");
  const size_t n = gt.size();
  double loss = 0;
  for (size_t l = 0; l < scales; ++l) {
    if (rendered[l].size() != n) throw std::invalid_argument("ms_color_loss: batch size mismatch");
    if (n == 0) continue;
    const double inv = 1.0 / (double(n) * double(scales));
    for (size_t r = 0; r < n; ++r) {
      const Vec3d diff = rendered[l][r] - gt[r];
      loss += diff.dot(diff) * inv;
      if (d_rendered) (*d_rendered)[l][r] += 2.0 * inv * diff;
    }
  }
  return loss;
}

// Mean squared difference of axis-adjacent values on an (nx, ny, nz) grid with
// C interleaved channels, x fastest. Gradient (times gscale) is accumulated
// into grad when given.
template <typename T>
double tv_grid(const T* vals, int nx, int ny, int nz, int channels, std::vector<double>* grad,
               double gscale = 1.0) {
  const size_t pairs =
      size_t(channels) * (size_t(nx > 0 ? (nx - 1) : 0) * ny * nz + size_t(nx) * (ny > 0 ? ny - 1 : 0) * nz +
                          size_t(nx) * ny * (nz > 0 ? nz - 1 : 0));
  if (pairs == 0) return 0.0;
  auto idx = [&](int x, int y, int z) { return (size_t(z) * ny + y) * nx + x; };
  double sum = 0;
  const double inv = 1.0 / double(pairs);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const size_t a = idx(x, y, z) * channels;
        const size_t bx = x + 1 < nx ? idx(x + 1, y, z) * channels : 0;
        const size_t by = y + 1 < ny ? idx(x, y + 1, z) * channels : 0;
        const size_t bz = z + 1 < nz ? idx(x, y, z + 1) * channels : 0;
        for (int c = 0; c < channels; ++c) {
          const double va = double(vals[a + c]);
          if (x + 1 < nx) {
            const double d = double(vals[bx + c]) - va;
            sum += d * d * inv;
            if (grad) {
              (*grad)[bx + c] += 2.0 * d * inv * gscale;
              (*grad)[a + c] -= 2.0 * d * inv * gscale;
            }
          }
          if (y + 1 < ny) {
            const double d = double(vals[by + c]) - va;
            sum += d * d * inv;
            if (grad) {
              (*grad)[by + c] += 2.0 * d * inv * gscale;
              (*grad)[a + c] -= 2.0 * d * inv * gscale;
            }
          }
          if (z + 1 < nz) {
            const double d = double(vals[bz + c]) - va;
            sum += d * d * inv;
            if (grad) {
              (*grad)[bz + c] += 2.0 * d * inv * gscale;
              (*grad)[a + c] -= 2.0 * d * inv * gscale;
            }
          }
        }
      }
  return sum;
}

struct TvLoss {
  double density = 0;
  double appearance = 0;
};

template <typename T>
TvLoss tv_loss(const VoxelField<T>& field, GradBuffer* grad = nullptr, double gscale_density = 1.0,
               double gscale_appearance = 1.0) {
  const int n = field.config.base_res;
  TvLoss out;
  out.density = tv_grid(field.density_raw.data(), n, n, n, 1, grad ? &grad->density : nullptr,
                        gscale_density);
  out.appearance = tv_grid(field.appearance_raw.data(), n, n, n,
                           field.config.appearance_channels(), grad ? &grad->appearance : nullptr,
                           gscale_appearance);
  return out;
}

// Mean squared difference of adjacent rendered depths inside pw x ph patches.
// patches[p] is row-major, gradient accumulated into d_patches.
inline double depth_smoothness_loss(const std::vector<std::vector<double>>& patches, int pw,
                                    int ph, std::vector<std::vector<double>>* d_patches = nullptr) {
  if (pw < 1 || ph < 1) throw std::invalid_argument("depth_smoothness_loss: bad patch shape");
  const size_t per_patch = size_t(pw - 1) * ph + size_t(pw) * (ph - 1);
  const size_t pairs = per_patch * patches.size();
  if (pairs == 0) return 0.0;
  double sum = 0;
  const double inv = 1.0 / double(pairs);
  for (size_t p = 0; p < patches.size(); ++p) {
    const std::vector<double>& d = patches[p];
    if (d.size() != size_t(pw) * ph)
      throw std::invalid_argument("depth_smoothness_loss: patch size mismatch");
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        const size_t a = size_t(y) * pw + x;
        if (x + 1 < pw) {
          const double diff = d[a + 1] - d[a];
          sum += diff * diff * inv;
          if (d_patches) {
            (*d_patches)[p][a + 1] += 2.0 * diff * inv;
            (*d_patches)[p][a] -= 2.0 * diff * inv;
          }
        }
        if (y + 1 < ph) {
          const double diff = d[a + pw] - d[a];
          sum += diff * diff * inv;
          if (d_patches) {
            (*d_patches)[p][a + pw] += 2.0 * diff * inv;
            (*d_patches)[p][a] -= 2.0 * diff * inv;
          }
        }
      }
  }
  return sum;
}

// Mean activated density over the base grid (softplus is nonnegative, so this
// is the L1 mean). Gradient times gscale accumulated into grad.
template <typename T>
double l1_sparsity_loss(const VoxelField<T>& field, GradBuffer* grad = nullptr,
                        double gscale = 1.0) {
  const size_t n = field.density_raw.size();
  double sum = 0;
  const double inv = 1.0 / double(n);
  for (size_t i = 0; i < n; ++i) {
    const double z = double(field.density_raw[i]);
    sum += softplus(z) * inv;
    if (grad) grad->density[i] += sigmoid(z) * inv * gscale;
  }
  return sum;
}

// Mip-NeRF 360 distortion for one ray: sum over unordered pairs of
// w_i w_j |m_i - m_j| plus (1/3) sum w_i^2 delta_i. Midpoints are expected
// already normalized to [0,1]; gradient w.r.t. weights added to d_w.
inline double distortion_loss_ray(const double* w, const double* m, const double* delta, size_t n,
                                  double* d_w = nullptr, double gscale = 1.0) {
  double loss = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) loss += w[i] * w[j] * std::abs(m[i] - m[j]);
    loss += (1.0 / 3.0) * w[i] * w[i] * delta[i];
  }
  if (d_w) {
    for (size_t i = 0; i < n; ++i) {
      double g = (2.0 / 3.0) * w[i] * delta[i];
      for (size_t j = 0; j < n; ++j)
        if (j != i) g += w[j] * std::abs(m[i] - m[j]);
      d_w[i] += g * gscale;
    }
  }
  return loss;
}

// Mean of the first ceil-free 10% (at least one) of each ray's weights.
inline size_t occlusion_sample_count(size_t n, double fraction) {
  size_t k = size_t(double(n) * fraction);
  return k < 1 ? (n > 0 ? 1 : 0) : k;
}

inline double occlusion_loss_ray(const double* w, size_t n, double fraction,
                                 double* d_w = nullptr, double gscale = 1.0) {
  const size_t k = occlusion_sample_count(n, fraction);
  if (k == 0) return 0.0;
  double sum = 0;
  const double inv = 1.0 / double(k);
  for (size_t i = 0; i < k; ++i) {
    sum += w[i] * inv;
    if (d_w) d_w[i] += inv * gscale;
  }
  return sum;
}

// Mean squared error between rendered and target depths.
inline double sparse_depth_loss(const std::vector<double>& rendered,
                                const std::vector<double>& target,
                                std::vector<double>* d_rendered = nullptr) {
  if (rendered.size() != target.size())
    throw std::invalid_argument("sparse_depth_loss: size mismatch");
  const size_t n = rendered.size();
  if (n == 0) return 0.0;
  double loss = 0;
  const double inv = 1.0 / double(n);
  for (size_t i = 0; i < n; ++i) {
    const double diff = rendered[i] - target[i];
    loss += diff * diff * inv;
    if (d_rendered) (*d_rendered)[i] += 2.0 * diff * inv;
  }
  return loss;
}

// Convenience form: builds the ray through each keypoint and renders the depth
// at the finest scale.
template <typename T>
double sparse_depth_loss(const VoxelField<T>& field, const std::vector<SparseDepthPoint>& points,
                         const std::vector<Camera>& cams, int n_samples) {
  std::vector<double> rendered, target;
  rendered.reserve(points.size());
  target.reserve(points.size());
  const ScaleLattice lat = scale_lattice(field.config, 0);
  for (const SparseDepthPoint& p : points) {
    const Camera& cam = cams.at(size_t(p.view_id));
    const Ray ray = ray_for_pixel(cam, {p.u, p.v});
    const RaySamples s = sample_points(ray, n_samples, false, 0);
    rendered.push_back(render_ray(field, ray, lat, s).depth);
    target.push_back(p.depth);
  }
  return sparse_depth_loss(rendered, target);
}

// 1 - Pearson correlation between x and y, treating y as constant. Degenerate
// (near-zero variance on either side) contributes 0 with no gradient.
inline double pearson_loss(const std::vector<double>& x, const std::vector<double>& y,
                           std::vector<double>* d_x = nullptr, double gscale = 1.0) {
  const size_t n = x.size();
  if (n != y.size()) throw std::invalid_argument("pearson_loss: size mismatch");
  if (n < 16) throw std::invalid_argument("pearson_loss: need at least 16 samples");
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double a = x[i] - mx;
    const double b = y[i] - my;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  if (sxx < 1e-12 || syy < 1e-12) return 0.0;
  const double denom = std::sqrt(sxx * syy);
  const double r = sxy / denom;
  if (d_x) {
    for (size_t i = 0; i < n; ++i) {
      const double a = x[i] - mx;
      const double b = y[i] - my;
      const double dr = (b - (sxy / sxx) * a) / denom;
      (*d_x)[i] -= dr * gscale;  // d(1 - r)/dx_i
    }
  }
  return 1.0 - r;
}

// Sum over scales of (1 - pearson) for one pixel group against an external
// depth map resampled to the same pixels.
inline double mono_depth_loss(const std::vector<std::vector<double>>& rendered_per_scale,
                              const std::vector<double>& external,
                              std::vector<std::vector<double>>* d_rendered = nullptr) {
  double loss = 0;
  for (size_t l = 0; l < rendered_per_scale.size(); ++l)
    loss += pearson_loss(rendered_per_scale[l], external,
                         d_rendered ? &(*d_rendered)[l] : nullptr);
  return loss;
}

// Scalar summary of every term; `mono_present` gates the external-depth term.
struct LossTerms {
  double ms_color = 0;
  double geo = 0;
  double tv_density = 0;
  double tv_appearance = 0;
  double ds = 0;
  double l1 = 0;
  double dist = 0;
  double occ = 0;
  double sd = 0;
  double mono = 0;
  bool mono_present = false;
};

inline double total_loss(const LossTerms& t, const LossWeights& w) {
  double total = t.ms_color + w.lambda_geo * t.geo + w.lambda_tv_density * t.tv_density +
                 w.lambda_tv_appearance * t.tv_appearance + w.lambda_ds * t.ds +
                 w.lambda_l1 * t.l1 + w.lambda_dist * t.dist + w.lambda_occ * t.occ +
                 w.lambda_sd * t.sd;
  if (t.mono_present) total += w.lambda_d * t.mono;
  return total;
}

}  // namespace frugal
