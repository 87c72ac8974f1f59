// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Ready-made synthetic scenes: breathing subjects and extrapolation test sets.

#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "nwb/channel_sim.hpp"
#include "nwb/error.hpp"
#include "nwb/metrics.hpp"

namespace nwb {

struct BreathingSceneSpec {
  double direct_delay_s = 10e-9;
  double direct_gain = 1.0;
  std::vector<double> subject_delays_s{35e-9, 60e-9, 85e-9};
  std::vector<double> subject_gains{0.5, 0.45, 0.4};
  double rate_hz = 0.25;
  /// Peak one-way delay change from chest motion (about 5 mm of displacement).
  double amplitude_s = 0.03e-9;
  /// Per-subject hold intervals (empty = breathing throughout).
  std::vector<std::vector<std::pair<double, double>>> holds;
  std::uint64_t seed = 0;
};

struct BreathingScene {
  MultipathEnvironment env;
  std::vector<MotionProfile> motions;
};

/// Direct path plus one reflected path per subject, each subject modulating its own delay.
inline BreathingScene make_breathing_scene(const BreathingSceneSpec& spec) {
  detail::require(spec.subject_delays_s.size() == spec.subject_gains.size(),
                  "breathing scene: one gain per subject delay");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> aoa(0.0, std::numbers::pi);
  BreathingScene s;
  s.env.label = "breathing-" + std::to_string(spec.subject_delays_s.size());
  s.env.paths.push_back({spec.direct_gain, phase(rng), spec.direct_delay_s, aoa(rng)});
  for (std::size_t i = 0; i < spec.subject_delays_s.size(); ++i) {
    s.env.paths.push_back({spec.subject_gains[i], phase(rng), spec.subject_delays_s[i], aoa(rng)});
    MotionProfile m;
    m.path_index = i + 1;
    m.delay_amplitude_s = spec.amplitude_s;
    m.rate_hz = spec.rate_hz;
    m.phase0 = phase(rng);
    if (i < spec.holds.size()) m.holds = spec.holds[i];
    s.motions.push_back(m);
  }
  return s;
}

/// Narrowband inputs with their k-times wideband truths from sampled environments.
inline std::vector<EvalCase> make_extrapolation_cases(const EnvironmentFamily& family, const FrequencyGrid& narrow,
                                                      const std::vector<int>& ks, std::size_t count,
                                                      std::uint64_t seed) {
  std::vector<EvalCase> cases;
  for (int k : ks) {
    for (std::size_t i = 0; i < count; ++i) {
      const MultipathEnvironment env = sample_environment(family, seed + i);
      auto [input, truth] = synthesize_pair(env, narrow, k, 0);
      cases.push_back({k, std::move(input), std::move(truth)});
    }
  }
  return cases;
}

}  // namespace nwb
