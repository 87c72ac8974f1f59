// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Noise schedule, forward corruption, ancestral reverse sampler and the
// extrapolation entry point that turns a measured frame into k-times wider eCSI.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nwb/channel_sim.hpp"
#include "nwb/csi_data.hpp"
#include "nwb/error.hpp"
#include "nwb/fredit_net.hpp"
#include "nwb/latent_codec.hpp"
#include "nwb/rfe.hpp"

namespace nwb {

/// Linear beta schedule. With reference_steps > 0 the endpoints describe a
/// schedule of that many steps and are rescaled by reference_steps / T, so a
/// short chain still ends close to pure noise.
struct ScheduleSpec {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int reference_steps = 1000;

  bool operator==(const ScheduleSpec&) const = default;
};

class NoiseSchedule {
 public:
  explicit NoiseSchedule(ScheduleSpec spec = {}) : spec_(spec) {
    detail::require(spec.steps >= 1, "NoiseSchedule: T must be >= 1");
    const double scale = spec.reference_steps > 0 ? static_cast<double>(spec.reference_steps) / spec.steps : 1.0;
    const double b0 = spec.beta_start * scale, b1 = spec.beta_end * scale;
    detail::require(b0 > 0.0 && b1 >= b0, "NoiseSchedule: need 0 < beta_start <= beta_end");
    beta_.resize(static_cast<std::size_t>(spec.steps));
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    double prod = 1.0;
    for (int t = 1; t <= spec.steps; ++t) {
      const double frac = spec.steps == 1 ? 0.0 : static_cast<double>(t - 1) / (spec.steps - 1);
      const double b = std::min(b0 + (b1 - b0) * frac, 0.999);
      beta_[t - 1] = b;
      alpha_[t - 1] = 1.0 - b;
      prod *= alpha_[t - 1];
      alpha_bar_[t - 1] = prod;
    }
  }

  /// Schedule from explicit betas (used by tests).
  static NoiseSchedule from_betas(const std::vector<double>& betas) {
    NoiseSchedule s;
    s.spec_.steps = static_cast<int>(betas.size());
    s.beta_ = betas;
    s.alpha_.resize(betas.size());
    s.alpha_bar_.resize(betas.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
      detail::require(betas[i] > 0.0 && betas[i] < 1.0, "NoiseSchedule: betas must lie in (0, 1)");
      s.alpha_[i] = 1.0 - betas[i];
      prod *= s.alpha_[i];
      s.alpha_bar_[i] = prod;
    }
    return s;
  }

  const ScheduleSpec& spec() const { return spec_; }
  int steps() const { return static_cast<int>(beta_.size()); }

  double beta(int t) const { return beta_[index(t)]; }
  double alpha(int t) const { return alpha_[index(t)]; }
  /// Cumulative product of alphas up to t; alpha_bar(0) == 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[index(t)]; }

 private:
  std::size_t index(int t) const {
    detail::require(t >= 1 && t <= steps(), "NoiseSchedule: timestep out of range");
    return static_cast<std::size_t>(t - 1);
  }

  ScheduleSpec spec_;
  std::vector<double> beta_, alpha_, alpha_bar_;
};

/// z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps
template <typename M>
M forward_sample(const M& z0, int t, const M& eps, const NoiseSchedule& s) {
  detail::require(z0.rows() == eps.rows() && z0.cols() == eps.cols(), "forward_sample: noise shape mismatch");
  using S = typename M::Scalar;
  const double ab = s.alpha_bar(t);
  return (static_cast<S>(std::sqrt(ab)) * z0 + static_cast<S>(std::sqrt(1.0 - ab)) * eps).eval();
}

/// One Markov transition z_t = sqrt(alpha_t) z_{t-1} + sqrt(beta_t) eps.
template <typename M>
M forward_step(const M& prev, int t, const M& eps, const NoiseSchedule& s) {
  using S = typename M::Scalar;
  return (static_cast<S>(std::sqrt(s.alpha(t))) * prev + static_cast<S>(std::sqrt(s.beta(t))) * eps).eval();
}

/// z_0 estimate from a noisy latent and a noise estimate (inverse of forward_sample).
template <typename M>
M estimate_z0(const M& zt, const M& eps_hat, int t, const NoiseSchedule& s) {
  detail::require(zt.rows() == eps_hat.rows() && zt.cols() == eps_hat.cols(), "estimate_z0: shape mismatch");
  using S = typename M::Scalar;
  const double ab = s.alpha_bar(t);
  return ((zt - static_cast<S>(std::sqrt(1.0 - ab)) * eps_hat) / static_cast<S>(std::sqrt(ab))).eval();
}

struct PosteriorCoefficients {
  double on_z0 = 0.0;  // weight of the z_0 estimate in the mean
  double on_zt = 0.0;  // weight of z_t in the mean
  double variance = 0.0;
};

/// Coefficients of q(z_{t-1} | z_t, z_0).
inline PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& s) {
  const double ab_t = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1), beta = s.beta(t);
  PosteriorCoefficients c;
  c.on_z0 = std::sqrt(ab_prev) * beta / (1.0 - ab_t);
  c.on_zt = std::sqrt(s.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab_t);
  c.variance = (1.0 - ab_prev) / (1.0 - ab_t) * beta;
  return c;
}

template <typename M>
struct ReverseStep {
  M mean;
  double variance = 0.0;
};

template <typename M>
ReverseStep<M> reverse_step(const M& zt, const M& z0_hat, int t, const NoiseSchedule& s) {
  detail::require(zt.rows() == z0_hat.rows() && zt.cols() == z0_hat.cols(), "reverse_step: shape mismatch");
  using S = typename M::Scalar;
  const auto c = posterior_coefficients(t, s);
  return {(static_cast<S>(c.on_z0) * z0_hat + static_cast<S>(c.on_zt) * zt).eval(), c.variance};
}

/// Condition inputs for one (anchor, observed band) pair.
struct Conditioning {
  LatentTensor z_a;  // anchor placed at its true position, zero elsewhere
  RowMatrix embed;   // pooled relative frequency embedding, one row per latent token
};

/// Encodes `anchor` (already normalized) inside the `observed` band and builds
/// the matching relative frequency embedding.
inline Conditioning make_conditioning(const LatentCodec& codec, const FrequencyGrid& observed, const CsiFrame& anchor,
                                      std::size_t anchor_start, long embed_dim) {
  const TensorLayout layout = codec.layout_for_band(observed.num_subcarriers);
  const CsiTensor tensor = to_tensor(anchor, observed, layout);
  Conditioning c;
  c.z_a = codec.encode(tensor);
  const auto coords = rfe::observed_coords(static_cast<long>(anchor_start), static_cast<long>(anchor.size()),
                                           static_cast<long>(observed.num_subcarriers));
  const auto cells = rfe::embed_cells(coords, observed, tensor.stride, layout.cells(), embed_dim);
  c.embed = codec.pool_cells(cells.values, layout);
  return c;
}

/// Latent of a full (normalized) frame over its own grid.
inline LatentTensor encode_frame(const LatentCodec& codec, const CsiFrame& frame) {
  return codec.encode(to_tensor(frame, frame.grid, codec.layout_for_band(frame.size())));
}

/// Decodes a latent back to a frame over its grid.
inline CsiFrame decode_frame(const LatentCodec& codec, const LatentTensor& z) {
  CsiFrame f = from_tensor(codec.decode(z));
  f.grid = z.grid;
  return f;
}

struct ExtrapolateOptions {
  /// Overwrite the measured band of the output with the (exact) input.
  bool clamp_measured = true;
  /// Clip each z_0 estimate to [-clip, clip] (patchify codec only; 0 disables).
  double z0_clip = 1.0;
};

struct ExtrapolationResult {
  CsiFrame ecsi;
  /// Mean squared component error between the generated measured band and the
  /// input, in normalized units, before clamping.
  double input_residual = 0.0;
};

/// Generates eCSI over the k-times expanded grid of `input`.
template <typename Real>
ExtrapolationResult extrapolate(const ModelParameters<Real>& params, const LatentCodec& codec,
                                const NoiseSchedule& sched, const CsiFrame& input, int k, std::uint64_t seed,
                                const ExtrapolateOptions& opts = {}) {
  detail::require(k >= 2, "extrapolate: k must be >= 2");
  input.validate();
  detail::require(params.config.latent_dim == codec.latent_dim(),
                  "extrapolate: checkpoint latent width does not match the codec");

  const NormalizedFrame norm = normalize(input);
  const FrequencyGrid wide = expand_grid(input.grid, k);
  const std::size_t left = expansion_left_pad(input.size(), k);
  const Conditioning cond = make_conditioning(codec, wide, norm.frame, left, params.config.embed_dim);

  using Mat = nn::Mat<Real>;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](long r, long c) {
    Mat m(r, c);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j) m(i, j) = static_cast<Real>(normal(rng));
    return m;
  };

  const long tokens = cond.z_a.tokens(), dim = cond.z_a.dim();
  fredit::Batch<Real> batch;
  batch.append(Mat::Zero(tokens, dim), cond.z_a.values, cond.embed, sched.steps());
  const Real clip = static_cast<Real>(codec.spec().type == CodecType::Patchify ? opts.z0_clip : 0.0);

  Mat z = gaussian(tokens, dim);
  for (int t = sched.steps(); t >= 1; --t) {
    batch.z_bt = z;
    batch.timesteps[0] = t;
    const Mat eps_hat = fredit::forward(params, batch);
    Mat z0 = estimate_z0(z, eps_hat, t, sched);
    if (clip > Real(0)) z0 = z0.cwiseMax(-clip).cwiseMin(clip);
    auto step = reverse_step(z, z0, t, sched);
    if (t > 1) {
      z = step.mean + static_cast<Real>(std::sqrt(step.variance)) * gaussian(tokens, dim);
    } else {
      z = step.mean;
    }
  }

  LatentTensor out = cond.z_a;
  out.values = z.template cast<double>();
  CsiFrame ecsi = decode_frame(codec, out);
  ecsi.antenna = input.antenna;
  ecsi.timestamp = input.timestamp;

  ExtrapolationResult result;
  double err = 0.0;
  for (std::size_t j = 0; j < input.size(); ++j) {
    const cplx d = ecsi.values[left + j] - norm.frame.values[j];
    err += d.real() * d.real() + d.imag() * d.imag();
  }
  result.input_residual = err / (2.0 * static_cast<double>(input.size()));
  if (opts.clamp_measured) {
    std::copy(norm.frame.values.begin(), norm.frame.values.end(), ecsi.values.begin() + static_cast<std::ptrdiff_t>(left));
  }
  result.ecsi = denormalize(std::move(ecsi), norm.factor);
  return result;
}

}  // namespace nwb
