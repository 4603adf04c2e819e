#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "frugal/field.hpp"
#include "frugal/geometry.hpp"
#include "frugal/rng.hpp"

namespace frugal {

struct RaySamples {
  std::vector<double> t;      // monotone, in [near, far]
  std::vector<double> delta;  // t[i+1]-t[i], last = far - t[n-1]

  size_t count() const { return t.size(); }
  double midpoint(size_t i) const { return t[i] + 0.5 * delta[i]; }
};

// Stratified sampling: one sample per bin of [near, far], bin centers when
// jitter is off. Deterministic for a given seed.
inline RaySamples sample_points(const Ray& ray, int n, bool jitter, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("sample_points: need n >= 2");
  RaySamples s;
  if (!(ray.near < ray.far)) return s;  // degenerate range renders empty
  s.t.resize(n);
  s.delta.resize(n);
  const double bin = (ray.far - ray.near) / n;
  SplitMix64 rng(seed);
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? rng.next_double() : 0.5;
    s.t[i] = ray.near + (i + u) * bin;
  }
  for (int i = 0; i < n - 1; ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  s.delta[n - 1] = ray.far - s.t[n - 1];
  return s;
}

struct RenderOutput {
  Vec3d color;
  double depth = 0;    // expected depth, sum w_i t_i
  double opacity = 0;  // sum w_i
  std::vector<double> weights;
  std::vector<double> midpoints;
};

struct RenderOptions {
  bool composite_background = false;
  Vec3d background{0, 0, 0};
  // Forward-only paths may stop once transmittance drops below this; the
  // differentiable path never terminates early.
  double early_stop_transmittance = 0.0;
};

// Per-sample values retained for the backward pass. Interpolation stencils are
// recomputed from the sample positions when scattering gradients.
struct SampleTape {
  double z = 0;             // density pre-activation (interpolated raw)
  double sigma = 0;         // softplus(z), 0 outside bbox
  double y[3] = {0, 0, 0};  // color pre-sigmoid
  Vec3d c;                  // sigmoid(y)
  bool inside = false;
};

struct RenderTape {
  ScaleLattice lattice;
  double basis[9] = {1, 0, 0, 0, 0, 0, 0, 0, 0};
  std::vector<SampleTape> samples;
};

template <typename T>
RenderOutput render_ray(const VoxelField<T>& field, const Ray& ray, const ScaleLattice& lat,
                        const RaySamples& samples, const RenderOptions& opts = {},
                        RenderTape* tape = nullptr) {
  RenderOutput out;
  const size_t n = samples.count();
  out.weights.assign(n, 0.0);
  out.midpoints.resize(n);
  for (size_t i = 0; i < n; ++i) out.midpoints[i] = samples.midpoint(i);

  double basis[9];
  sh_basis(field.config.sh_degree, ray.dir, basis);
  const int nb = sh_basis_count(field.config.sh_degree);
  if (tape) {
    tape->lattice = lat;
    for (int k = 0; k < nb; ++k) tape->basis[k] = basis[k];
    tape->samples.assign(n, SampleTape{});
  }

  double transmittance = 1.0;
  double coef[27];
  for (size_t i = 0; i < n; ++i) {
    const Vec3d pos = ray.origin + samples.t[i] * ray.dir;
    const InterpStencil st = field.stencil(pos, lat);
    SampleTape smp;
    smp.inside = st.inside;
    if (st.inside) {
      double z = 0;
      for (int k = 0; k < 8; ++k) z += st.weight[k] * double(field.density_raw[st.node[k]]);
      smp.z = z;
      smp.sigma = softplus(z);
      field.appearance_preact(st, coef);
      for (int ch = 0; ch < 3; ++ch) {
        double y = 0;
        for (int k = 0; k < nb; ++k) y += basis[k] * coef[k * 3 + ch];
        smp.y[ch] = y;
        smp.c[ch] = sigmoid(y);
      }
    }
    const double alpha = 1.0 - std::exp(-smp.sigma * samples.delta[i]);
    const double w = transmittance * alpha;
    out.weights[i] = w;
    out.color += w * smp.c;
    out.depth += w * samples.t[i];
    out.opacity += w;
    transmittance *= 1.0 - alpha;
    if (tape) (*tape).samples[i] = smp;
    if (!tape && opts.early_stop_transmittance > 0 && transmittance < opts.early_stop_transmittance)
      break;
  }
  if (opts.composite_background) out.color += (1.0 - out.opacity) * opts.background;
  return out;
}

// Gradients of a scalar loss with respect to the render outputs.
struct OutputGrad {
  Vec3d d_color;
  double d_depth = 0;
  double d_opacity = 0;
  const double* d_weights = nullptr;  // optional per-sample term, length = sample count
};

// Backpropagate one rendered ray into the field gradient buffer.
template <typename T>
void render_ray_backward(const VoxelField<T>& field, const Ray& ray, const RaySamples& samples,
                         const RenderTape& tape, const RenderOptions& opts, const OutputGrad& og,
                         GradBuffer& grad) {
  const size_t n = samples.count();
  if (n == 0) return;
  Vec3d d_color = og.d_color;
  double d_opacity = og.d_opacity;
  if (opts.composite_background) d_opacity -= d_color.dot(opts.background);

  // w_i = T_i alpha_i, T_{i+1} = T_i (1 - alpha_i). Backward recursion over
  // dL/dT with g_i = dL/dw_i.
  std::vector<double> t_chain(n);
  double transmittance = 1.0;
  for (size_t i = 0; i < n; ++i) {
    t_chain[i] = transmittance;
    const double alpha = 1.0 - std::exp(-tape.samples[i].sigma * samples.delta[i]);
    transmittance *= 1.0 - alpha;
  }

  const int nb = sh_basis_count(field.config.sh_degree);
  double dpre[27];
  double s_next = 0.0;  // dL/dT_{i+1} accumulated from later samples
  for (size_t ii = n; ii-- > 0;) {
    const SampleTape& smp = tape.samples[ii];
    const double g =
        d_color.dot(smp.c) + og.d_depth * samples.t[ii] + d_opacity +
        (og.d_weights ? og.d_weights[ii] : 0.0);
    if (smp.inside) {
      const double exp_term = std::exp(-smp.sigma * samples.delta[ii]);
      const double w = t_chain[ii] * (1.0 - exp_term);
      const double d_alpha = t_chain[ii] * (g - s_next);
      const double d_sigma = d_alpha * exp_term * samples.delta[ii];
      const double d_z = d_sigma * sigmoid(smp.z);  // softplus'

      const Vec3d pos = ray.origin + samples.t[ii] * ray.dir;
      const InterpStencil st = field.stencil(pos, tape.lattice);
      field.scatter_density(st, d_z, grad);

      bool any_color = false;
      for (int ch = 0; ch < 3; ++ch) {
        const double d_c = d_color[ch] * w;
        const double s = smp.c[ch];
        const double d_y = d_c * s * (1.0 - s);  // sigmoid'
        for (int k = 0; k < nb; ++k) {
          dpre[k * 3 + ch] = d_y * tape.basis[k];
          any_color = any_color || dpre[k * 3 + ch] != 0.0;
        }
      }
      if (any_color) field.scatter_appearance(st, dpre, grad);

      const double alpha = 1.0 - exp_term;
      s_next = g * alpha + s_next * (1.0 - alpha);
    }
    // outside-bbox samples: sigma identically 0, alpha 0; s_next unchanged
  }
}

}  // namespace frugal
