// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nwb/diffusion.hpp"

using namespace nwb;
using Md = nn::Mat<double>;

namespace {

Md randn(long r, long c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Md m(r, c);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ModelConfig small_model() {
  ModelConfig c;
  c.model_dim = 16;
  c.num_blocks = 1;
  c.num_heads = 2;
  c.embed_dim = 16;
  c.timestep_embed_dim = 8;
  c.mlp_ratio = 2;
  return c;
}

ModelParameters<double> random_model(std::uint64_t seed) {
  auto p = init_parameters<double>(small_model(), seed);
  std::mt19937_64 rng(seed);
  p["out.conv"] = randn(p["out.conv"].rows(), p["out.conv"].cols(), rng, 0.05);
  return p;
}

CsiFrame narrow_frame(std::uint64_t seed) {
  const auto env = sample_environment(EnvironmentFamily{}, seed);
  return synthesize_csi(env, FrequencyGrid{5.21e9, 312.5e3, 64}, 0);
}

}  // namespace

TEST(Schedule, DefaultEndpointsAndProduct) {
  const NoiseSchedule s;
  EXPECT_EQ(s.steps(), 50);
  EXPECT_NEAR(s.beta(1), 0.002, 1e-15);
  EXPECT_NEAR(s.beta(2), 0.002 + 0.398 / 49, 1e-15);
  EXPECT_NEAR(s.beta(50), 0.4, 1e-15);
  long double prod = 1;
  for (int t = 1; t <= 50; ++t) {
    prod *= 1 - (0.002L + (0.4L - 0.002L) * (t - 1) / 49);
    EXPECT_NEAR(s.alpha_bar(t), static_cast<double>(prod), 1e-15);
  }
  EXPECT_NEAR(s.alpha_bar(50), 7.7447657e-06, 1e-12);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, ThousandStepsMatchesClassicSchedule) {
  const NoiseSchedule s(ScheduleSpec{1000, 1e-4, 0.02, 1000});
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(1000), 0.02);
  const NoiseSchedule raw(ScheduleSpec{50, 1e-4, 0.02, 0});
  EXPECT_DOUBLE_EQ(raw.beta(50), 0.02);
}

TEST(Schedule, MonotoneAndBounded) {
  for (int T : {1, 2, 10, 50, 200}) {
    const NoiseSchedule s(ScheduleSpec{T});
    for (int t = 1; t <= T; ++t) {
      EXPECT_GT(s.beta(t), 0.0);
      EXPECT_LE(s.beta(t), 0.999);
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      if (t > 1) EXPECT_GE(s.beta(t), s.beta(t - 1));
    }
  }
  EXPECT_THROW(NoiseSchedule(ScheduleSpec{0}), InvalidArgument);
  EXPECT_THROW(NoiseSchedule().beta(51), InvalidArgument);
  EXPECT_THROW(NoiseSchedule::from_betas({0.5, 1.0}), InvalidArgument);
}

TEST(Forward, EstimateInvertsSample) {
  std::mt19937_64 rng(1);
  const NoiseSchedule s;
  const Md z0 = randn(8, 48, rng), eps = randn(8, 48, rng);
  for (int t : {1, 25, 50}) {
    const Md zt = forward_sample(z0, t, eps, s);
    EXPECT_LT((estimate_z0(zt, eps, t, s) - z0).cwiseAbs().maxCoeff(), 1e-9 / std::sqrt(s.alpha_bar(t)) * 1e-3 + 1e-10);
  }
}

TEST(Forward, ChainMatchesClosedFormMarginal) {
  const auto s = NoiseSchedule::from_betas({0.1, 0.2, 0.3, 0.05});
  std::mt19937_64 rng(2);
  const long n = 200000;
  const Md z0 = Md::Constant(1, n, 0.7);
  Md z = z0;
  for (int t = 1; t <= 4; ++t) z = forward_step(z, t, randn(1, n, rng), s);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.7 * std::sqrt(s.alpha_bar(4)), 5e-3);
  EXPECT_NEAR(var, 1.0 - s.alpha_bar(4), 5e-3);
}

TEST(Posterior, MatchesBayesRule) {
  const NoiseSchedule s;
  for (int t = 2; t <= 50; t += 7) {
    const double ab_prev = s.alpha_bar(t - 1), a = s.alpha(t), b = s.beta(t);
    // q(z_{t-1}|z_0) = N(sqrt(ab_prev) z0, 1 - ab_prev); q(z_t|z_{t-1}) = N(sqrt(a) z_{t-1}, b)
    const double precision = 1.0 / (1.0 - ab_prev) + a / b;
    const auto c = posterior_coefficients(t, s);
    EXPECT_NEAR(c.variance, 1.0 / precision, 1e-14);
    EXPECT_NEAR(c.on_z0, std::sqrt(ab_prev) / (1.0 - ab_prev) / precision, 1e-13);
    EXPECT_NEAR(c.on_zt, std::sqrt(a) / b / precision, 1e-13);
  }
  const auto first = posterior_coefficients(1, s);
  EXPECT_NEAR(first.on_z0, 1.0, 1e-12);
  EXPECT_EQ(first.on_zt, 0.0);
  EXPECT_EQ(first.variance, 0.0);
}

TEST(Sampler, ExactDenoiserRecoversPointMass) {
  const NoiseSchedule s;
  std::mt19937_64 rng(3);
  const Md target = randn(4, 6, rng);
  Md z = randn(4, 6, rng);
  for (int t = 50; t >= 1; --t) {
    const auto st = reverse_step(z, target, t, s);
    z = st.mean + std::sqrt(st.variance) * randn(4, 6, rng);
  }
  EXPECT_LT((z - target).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampler, GaussianDataVarianceFollowsRecursion) {
  // For z0 ~ N(0, sigma^2) the MMSE noise estimate is linear in z_t, so each
  // ancestral step maps Var(z_t) to (a c_t + b)^2 Var(z_t) + v in closed form.
  const NoiseSchedule s;
  const double sigma2 = 0.25;
  std::mt19937_64 rng(4);
  const long n = 200000;
  Md z = randn(1, n, rng);
  double var = 1.0;
  for (int t = 50; t >= 1; --t) {
    const double ab = s.alpha_bar(t);
    const Md eps_hat = z * (std::sqrt(1 - ab) / (ab * sigma2 + 1 - ab));
    const auto st = reverse_step(z, estimate_z0(z, eps_hat, t, s), t, s);
    z = st.mean + std::sqrt(st.variance) * randn(1, n, rng);

    const double c_t = std::sqrt(ab) * sigma2 / (ab * sigma2 + 1 - ab);  // E[z0 | z_t] = c_t z_t
    const double ab_prev = s.alpha_bar(t - 1), beta = s.beta(t);
    const double a = std::sqrt(ab_prev) * beta / (1 - ab), b = std::sqrt(1 - beta) * (1 - ab_prev) / (1 - ab);
    var = (a * c_t + b) * (a * c_t + b) * var + (1 - ab_prev) / (1 - ab) * beta;
  }
  EXPECT_NEAR(z.mean(), 0.0, 0.01);
  EXPECT_NEAR(z.squaredNorm() / n, var, 0.01 * var);
  EXPECT_GT(var, 0.5 * sigma2);
  EXPECT_LT(var, sigma2);
}

TEST(Conditioning, AnchorSitsAtItsTruePosition) {
  const LatentCodec codec;
  const auto wide = expand_grid(FrequencyGrid{5.21e9, 312.5e3, 64}, 2);
  const auto anchor = normalize(narrow_frame(1)).frame;
  const auto c = make_conditioning(codec, wide, anchor, 32, 64);
  EXPECT_EQ(c.z_a.tokens(), 8);
  EXPECT_EQ(c.embed.rows(), 8);
  EXPECT_EQ(c.embed.cols(), 64);
  const auto t = codec.decode(c.z_a);
  for (std::size_t cell = 0; cell < 128; ++cell) {
    if (cell >= 32 && cell < 96) {
      EXPECT_EQ(t.at(0, cell), anchor.values[cell - 32].real());
    } else {
      EXPECT_EQ(t.at(0, cell), 0.0);
      EXPECT_EQ(t.at(1, cell), 0.0);
    }
  }
}

TEST(Extrapolate, OutputCoversExpandedGridAndKeepsMeasuredBand) {
  const LatentCodec codec;
  const NoiseSchedule sched(ScheduleSpec{10});
  const auto p = random_model(5);
  const auto input = narrow_frame(2);
  for (int k : {2, 4, 8}) {
    const auto r = extrapolate(p, codec, sched, input, k, 11);
    EXPECT_EQ(r.ecsi.grid, expand_grid(input.grid, k));
    const std::size_t left = expansion_left_pad(64, k);
    for (std::size_t j = 0; j < 64; ++j)
      EXPECT_LT(std::abs(r.ecsi.values[left + j] - input.values[j]), 1e-15 * (1 + std::abs(input.values[j])));
    EXPECT_TRUE(std::isfinite(r.input_residual));
    r.ecsi.validate();
  }
}

TEST(Extrapolate, DeterministicPerSeed) {
  const LatentCodec codec;
  const NoiseSchedule sched(ScheduleSpec{8});
  const auto p = random_model(6);
  const auto input = narrow_frame(3);
  const auto a = extrapolate(p, codec, sched, input, 2, 1), b = extrapolate(p, codec, sched, input, 2, 1);
  const auto c = extrapolate(p, codec, sched, input, 2, 2);
  EXPECT_EQ(a.ecsi.values, b.ecsi.values);
  EXPECT_NE(a.ecsi.values, c.ecsi.values);
}

TEST(Extrapolate, ScaleEquivariant) {
  const LatentCodec codec;
  const NoiseSchedule sched(ScheduleSpec{8});
  const auto p = random_model(7);
  const auto input = narrow_frame(4);
  const auto scaled = denormalize(input, 3.5);
  const auto a = extrapolate(p, codec, sched, input, 2, 9), b = extrapolate(p, codec, sched, scaled, 2, 9);
  for (std::size_t i = 0; i < a.ecsi.size(); ++i) EXPECT_LT(std::abs(b.ecsi.values[i] - 3.5 * a.ecsi.values[i]), 1e-9);
  EXPECT_NEAR(a.input_residual, b.input_residual, 1e-12);
}

TEST(Extrapolate, UnclampedOutputReportsResidual) {
  const LatentCodec codec;
  const NoiseSchedule sched(ScheduleSpec{8});
  const auto p = random_model(8);
  const auto input = narrow_frame(5);
  ExtrapolateOptions opts;
  opts.clamp_measured = false;
  const auto r = extrapolate(p, codec, sched, input, 2, 3, opts);
  const auto n = normalize(input);
  double err = 0;
  for (std::size_t j = 0; j < 64; ++j) err += std::norm(r.ecsi.values[32 + j] / n.factor - n.frame.values[j]);
  EXPECT_NEAR(r.input_residual, err / 128.0, 1e-12);
  EXPECT_GT(r.input_residual, 0.0);
}

TEST(Extrapolate, ClipBoundsPatchifyOutput) {
  const LatentCodec codec;
  const NoiseSchedule sched(ScheduleSpec{8});
  const auto p = random_model(9);
  ExtrapolateOptions opts;
  opts.clamp_measured = false;
  const auto r = extrapolate(p, codec, sched, narrow_frame(6), 4, 3, opts);
  const double factor = normalize(narrow_frame(6)).factor;
  for (auto v : r.ecsi.values) {
    EXPECT_LE(std::abs(v.real()), factor * (1 + 1e-12));
    EXPECT_LE(std::abs(v.imag()), factor * (1 + 1e-12));
  }
}

TEST(Extrapolate, Validation) {
  const LatentCodec codec;
  const NoiseSchedule sched(ScheduleSpec{4});
  const auto p = random_model(10);
  EXPECT_THROW(extrapolate(p, codec, sched, narrow_frame(7), 1, 0), InvalidArgument);
  const LatentCodec other(CodecSpec{CodecType::Patchify, 2, 0, 4});
  EXPECT_THROW(extrapolate(p, other, sched, narrow_frame(7), 2, 0), InvalidArgument);
  auto bad = narrow_frame(7);
  bad.values.pop_back();
  EXPECT_THROW(extrapolate(p, codec, sched, bad, 2, 0), InvalidArgument);
}
