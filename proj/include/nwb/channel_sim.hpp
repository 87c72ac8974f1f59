// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Multipath channel synthesis over OFDM subcarrier grids.
//
// A MultipathEnvironment is a set of propagation paths. Its CSI on antenna n
// of a half-wavelength uniform linear array at frequency f is
//
//   H_n(f) = sum_l |a_l| e^{j arg a_l} e^{-j 2 pi f tau_l} e^{-j pi n cos(theta_l)}
//
// The same environment evaluated on any two grids gives identical values on
// shared subcarrier frequencies, which is what makes it usable as the
// ground-truth wideband oracle for extrapolation.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nwb/error.hpp"

namespace nwb {

using cplx = std::complex<double>;

/// A contiguous subcarrier lattice symmetric about its center frequency.
struct FrequencyGrid {
  double center_hz = 0.0;
  double spacing_hz = 0.0;
  std::size_t num_subcarriers = 0;

  /// Offset of subcarrier k from the center, in units of spacing (a half-integer
  /// for even counts, exactly representable).
  double offset(std::size_t k) const {
    return static_cast<double>(k) - (static_cast<double>(num_subcarriers) - 1.0) / 2.0;
  }
  double frequency(std::size_t k) const { return center_hz + offset(k) * spacing_hz; }
  double bandwidth() const { return static_cast<double>(num_subcarriers) * spacing_hz; }

  std::vector<double> frequencies() const {
    std::vector<double> out(num_subcarriers);
    for (std::size_t k = 0; k < num_subcarriers; ++k) out[k] = frequency(k);
    return out;
  }

  void validate() const {
    detail::require(std::isfinite(center_hz), "FrequencyGrid: center frequency must be finite");
    detail::require(std::isfinite(spacing_hz) && spacing_hz > 0.0,
                    "FrequencyGrid: subcarrier spacing must be positive");
    detail::require(num_subcarriers > 0, "FrequencyGrid: num_subcarriers must be positive");
  }

  bool operator==(const FrequencyGrid&) const = default;
};

/// Grid with the given bandwidth and spacing, centered at center_hz.
inline FrequencyGrid make_grid(double center_hz, double bandwidth_hz, double spacing_hz) {
  detail::require(spacing_hz > 0.0 && bandwidth_hz > 0.0, "make_grid: positive bandwidth and spacing");
  const double count = std::round(bandwidth_hz / spacing_hz);
  detail::require(std::abs(count * spacing_hz - bandwidth_hz) <= 1e-9 * bandwidth_hz,
                  "make_grid: bandwidth is not a whole number of subcarriers");
  FrequencyGrid g{center_hz, spacing_hz, static_cast<std::size_t>(count)};
  g.validate();
  return g;
}

/// Number of subcarriers the expanded grid adds below the narrow grid.
inline std::size_t expansion_left_pad(std::size_t narrow_count, int k) {
  return static_cast<std::size_t>(k - 1) * narrow_count / 2;
}

/// The k-times wider grid sharing the narrow grid's lattice and center.
///
/// When (k-1)*count is odd the two lattices cannot share a center exactly; the
/// wide grid then keeps the lattice and places floor((k-1)*count/2) subcarriers
/// below the narrow band, so its center sits half a spacing higher.
inline FrequencyGrid expand_grid(const FrequencyGrid& narrow, int k) {
  narrow.validate();
  detail::require(k >= 2, "expand_grid: expansion factor k must be >= 2");
  FrequencyGrid wide{narrow.center_hz, narrow.spacing_hz,
                     narrow.num_subcarriers * static_cast<std::size_t>(k)};
  if (((static_cast<std::size_t>(k) - 1) * narrow.num_subcarriers) % 2 == 1) {
    wide.center_hz = narrow.center_hz + 0.5 * narrow.spacing_hz;
  }
  return wide;
}

struct PropagationPath {
  double gain_magnitude = 1.0;  // |alpha|
  double gain_phase = 0.0;      // arg alpha, radians in [-pi, pi)
  double delay_s = 0.0;         // tau
  double aoa_rad = std::numbers::pi / 2;  // theta in [0, pi]

  void validate() const {
    detail::require(std::isfinite(gain_magnitude) && std::isfinite(gain_phase) &&
                        std::isfinite(delay_s) && std::isfinite(aoa_rad),
                    "PropagationPath: parameters must be finite");
    detail::require(gain_magnitude >= 0.0, "PropagationPath: gain magnitude must be >= 0");
    detail::require(delay_s >= 0.0, "PropagationPath: delay must be >= 0");
    detail::require(aoa_rad >= 0.0 && aoa_rad <= std::numbers::pi,
                    "PropagationPath: angle of arrival must lie in [0, pi]");
  }

  bool operator==(const PropagationPath&) const = default;
};

struct MultipathEnvironment {
  std::vector<PropagationPath> paths;
  std::string label;

  void validate() const {
    detail::require(!paths.empty(), "MultipathEnvironment: at least one path is required");
    for (const auto& p : paths) p.validate();
  }
};

/// Complex channel samples over one grid for one antenna at one instant.
struct CsiFrame {
  FrequencyGrid grid;
  std::uint32_t antenna = 0;
  std::vector<cplx> values;
  double timestamp = 0.0;

  std::size_t size() const { return values.size(); }

  void validate() const {
    grid.validate();
    detail::require(values.size() == grid.num_subcarriers,
                    "CsiFrame: value count must equal grid.num_subcarriers");
    for (const auto& v : values) {
      detail::require(std::isfinite(v.real()) && std::isfinite(v.imag()),
                      "CsiFrame: values must be finite");
    }
  }
};

/// Sinusoidal delay modulation applied to one path (a breathing subject).
struct MotionProfile {
  std::size_t path_index = 0;
  double delay_amplitude_s = 0.0;
  double rate_hz = 0.0;
  double phase0 = 0.0;
  /// Time intervals [start, end) in seconds during which the modulation stops.
  std::vector<std::pair<double, double>> holds;

  bool held(double t) const {
    return std::any_of(holds.begin(), holds.end(),
                       [t](const auto& h) { return t >= h.first && t < h.second; });
  }
  double delay_offset(double t) const {
    if (held(t)) return 0.0;
    return delay_amplitude_s * std::sin(2.0 * std::numbers::pi * rate_hz * t + phase0);
  }
};

namespace detail {

// e^{-j 2 pi f tau} with the cycle count f*tau reduced exactly (two-product) so
// the phase stays accurate for thousands of cycles.
inline cplx delay_rotation(double f, double tau) {
  const double p = f * tau;
  const double err = std::fma(f, tau, -p);
  const double frac = (p - std::nearbyint(p)) + err;
  const double angle = -2.0 * std::numbers::pi * frac;
  return {std::cos(angle), std::sin(angle)};
}

// Canonical path order so synthesis does not depend on the caller's ordering.
inline std::vector<PropagationPath> canonical_paths(std::vector<PropagationPath> paths) {
  std::sort(paths.begin(), paths.end(), [](const PropagationPath& a, const PropagationPath& b) {
    if (a.delay_s != b.delay_s) return a.delay_s < b.delay_s;
    if (a.gain_magnitude != b.gain_magnitude) return a.gain_magnitude < b.gain_magnitude;
    if (a.gain_phase != b.gain_phase) return a.gain_phase < b.gain_phase;
    return a.aoa_rad < b.aoa_rad;
  });
  return paths;
}

inline std::vector<cplx> synthesize_values(const std::vector<PropagationPath>& paths,
                                           const FrequencyGrid& grid, std::uint32_t antenna) {
  const auto ordered = canonical_paths(paths);
  std::vector<cplx> coeff;
  coeff.reserve(ordered.size());
  for (const auto& p : ordered) {
    const double array_phase = -std::numbers::pi * static_cast<double>(antenna) * std::cos(p.aoa_rad);
    coeff.push_back(std::polar(p.gain_magnitude, p.gain_phase) *
                    cplx(std::cos(array_phase), std::sin(array_phase)));
  }
  std::vector<cplx> out(grid.num_subcarriers);
  for (std::size_t k = 0; k < grid.num_subcarriers; ++k) {
    const double f = grid.frequency(k);
    cplx acc{0.0, 0.0};
    for (std::size_t l = 0; l < ordered.size(); ++l) acc += coeff[l] * delay_rotation(f, ordered[l].delay_s);
    out[k] = acc;
  }
  return out;
}

}  // namespace detail

/// CSI of env on antenna `antenna` over every subcarrier of grid.
inline CsiFrame synthesize_csi(const MultipathEnvironment& env, const FrequencyGrid& grid,
                               std::uint32_t antenna, double timestamp = 0.0) {
  env.validate();
  grid.validate();
  CsiFrame frame;
  frame.grid = grid;
  frame.antenna = antenna;
  frame.timestamp = timestamp;
  frame.values = detail::synthesize_values(env.paths, grid, antenna);
  return frame;
}

/// Narrowband frame and its k-times wideband counterpart from the same env.
///
/// Requires (k-1)*count to be even so the wide grid is centered exactly on the
/// narrow one; the wide frame restricted to the narrow positions then equals the
/// narrow frame bit for bit.
inline std::pair<CsiFrame, CsiFrame> synthesize_pair(const MultipathEnvironment& env,
                                                     const FrequencyGrid& narrow, int k,
                                                     std::uint32_t antenna) {
  detail::require(k >= 2, "synthesize_pair: k must be >= 2");
  narrow.validate();
  detail::require(((static_cast<std::size_t>(k) - 1) * narrow.num_subcarriers) % 2 == 0,
                  "synthesize_pair: (k-1)*num_subcarriers must be even for a shared center");
  const FrequencyGrid wide = expand_grid(narrow, k);
  return {synthesize_csi(env, narrow, antenna), synthesize_csi(env, wide, antenna)};
}

/// Time series of frames at sample_rate_hz with per-path delay modulation.
inline std::vector<CsiFrame> synthesize_series(const MultipathEnvironment& env,
                                               const std::vector<MotionProfile>& motions,
                                               const FrequencyGrid& grid, std::uint32_t antenna,
                                               double sample_rate_hz, double duration_s) {
  env.validate();
  grid.validate();
  detail::require(duration_s > 0.0, "synthesize_series: duration must be positive");
  detail::require(sample_rate_hz > 0.0, "synthesize_series: sample rate must be positive");
  for (const auto& m : motions) {
    detail::require(m.path_index < env.paths.size(), "synthesize_series: motion path_index out of range");
    detail::require(m.delay_amplitude_s >= 0.0 && m.rate_hz >= 0.0,
                    "synthesize_series: motion amplitude and rate must be >= 0");
    detail::require(sample_rate_hz > 2.0 * m.rate_hz,
                    "synthesize_series: sampling rate violates Nyquist for the motion rate");
  }
  const auto count = static_cast<std::size_t>(std::floor(duration_s * sample_rate_hz + 1e-9));
  std::vector<CsiFrame> series;
  series.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    MultipathEnvironment at_t = env;
    for (const auto& m : motions) {
      at_t.paths[m.path_index].delay_s = std::max(0.0, env.paths[m.path_index].delay_s + m.delay_offset(t));
    }
    series.push_back(synthesize_csi(at_t, grid, antenna, t));
  }
  return series;
}

inline std::vector<CsiFrame> synthesize_series(const MultipathEnvironment& env, const MotionProfile& motion,
                                               const FrequencyGrid& grid, std::uint32_t antenna,
                                               double sample_rate_hz, double duration_s) {
  return synthesize_series(env, std::vector<MotionProfile>{motion}, grid, antenna, sample_rate_hz,
                           duration_s);
}

/// Randomness configuration of the synthetic environment family.
struct EnvironmentFamily {
  int min_paths = 1;
  int max_paths = 5;
  double min_delay_s = 0.0;
  double max_delay_s = 200e-9;
  double min_gain = 0.1;  // log-uniform magnitude range
  double max_gain = 1.0;
  /// Sort magnitudes so that later (longer-delay) paths are weaker.
  bool decaying_gains = false;

  void validate() const {
    detail::require(min_paths >= 1 && min_paths <= max_paths, "EnvironmentFamily: empty path-count range");
    detail::require(min_delay_s >= 0.0 && min_delay_s <= max_delay_s, "EnvironmentFamily: empty delay range");
    detail::require(min_gain > 0.0 && min_gain <= max_gain, "EnvironmentFamily: empty gain range");
  }
};

inline MultipathEnvironment sample_environment(const EnvironmentFamily& family, std::mt19937_64& rng) {
  family.validate();
  std::uniform_int_distribution<int> count_dist(family.min_paths, family.max_paths);
  std::uniform_real_distribution<double> delay_dist(family.min_delay_s, family.max_delay_s);
  std::uniform_real_distribution<double> log_gain(std::log(family.min_gain), std::log(family.max_gain));
  std::uniform_real_distribution<double> phase_dist(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> aoa_dist(0.0, std::numbers::pi);

  MultipathEnvironment env;
  const int count = count_dist(rng);
  for (int l = 0; l < count; ++l) {
    PropagationPath p;
    p.delay_s = delay_dist(rng);
    p.gain_magnitude = family.min_gain == family.max_gain ? family.min_gain : std::exp(log_gain(rng));
    p.gain_phase = phase_dist(rng);
    p.aoa_rad = aoa_dist(rng);
    env.paths.push_back(p);
  }
  if (family.decaying_gains) {
    std::vector<double> gains;
    for (const auto& p : env.paths) gains.push_back(p.gain_magnitude);
    std::sort(gains.begin(), gains.end(), std::greater<>());
    std::sort(env.paths.begin(), env.paths.end(),
              [](const auto& a, const auto& b) { return a.delay_s < b.delay_s; });
    for (std::size_t l = 0; l < gains.size(); ++l) env.paths[l].gain_magnitude = gains[l];
  }
  return env;
}

inline MultipathEnvironment sample_environment(const EnvironmentFamily& family, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto env = sample_environment(family, rng);
  env.label = "env-" + std::to_string(seed);
  return env;
}

/// Adds complex white Gaussian noise at the given SNR relative to the frame's mean power.
inline CsiFrame add_awgn(CsiFrame frame, double snr_db, std::uint64_t seed) {
  double power = 0.0;
  for (const auto& v : frame.values) power += std::norm(v);
  power /= static_cast<double>(std::max<std::size_t>(frame.values.size(), 1));
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0) / 2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : frame.values) v += cplx(sigma * n(rng), sigma * n(rng));
  return frame;
}

}  // namespace nwb
