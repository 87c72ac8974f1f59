// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Sensing on CSI or eCSI: first-path time of flight and per-path breathing rate.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "nwb/channel_sim.hpp"
#include "nwb/error.hpp"
#include "nwb/metrics.hpp"

namespace nwb {

/// Local maxima of a magnitude profile, in index order. End points count when
/// they are not below their single neighbour; plateaus report their first index.
inline std::vector<std::size_t> local_maxima(const std::vector<double>& mag) {
  std::vector<std::size_t> out;
  const std::size_t n = mag.size();
  if (n == 1) return {0};
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || mag[i] > mag[i - 1];
    std::size_t j = i;
    while (j + 1 < n && mag[j + 1] == mag[i]) ++j;
    const bool right_ok = j + 1 == n || mag[i] > mag[j + 1];
    if (left_ok && right_ok) out.push_back(i);
  }
  return out;
}

/// Local maxima whose magnitude is at least ratio * global maximum.
inline std::vector<std::size_t> dominant_peaks(const std::vector<double>& mag, double ratio) {
  const double peak = mag.empty() ? 0.0 : *std::max_element(mag.begin(), mag.end());
  std::vector<std::size_t> out;
  for (std::size_t i : local_maxima(mag))
    if (mag[i] >= ratio * peak) out.push_back(i);
  return out;
}

struct TofEstimate {
  double tof_s = 0.0;
  std::size_t peak_tap = 0;
  double peak_magnitude = 0.0;
};

inline TofEstimate estimate_tof(const CsiFrame& frame, double dominance_ratio = 0.5, std::size_t zero_pad_factor = 4) {
  detail::require(dominance_ratio > 0.0 && dominance_ratio <= 1.0, "estimate_tof: ratio must lie in (0, 1]");
  const CirProfile cir = cfr_to_cir(frame, zero_pad_factor);
  const auto mag = cir.magnitudes();
  const double peak = *std::max_element(mag.begin(), mag.end());
  if (!(peak > 0.0)) throw NumericError("estimate_tof: all-zero CIR");
  const auto peaks = dominant_peaks(mag, dominance_ratio);
  TofEstimate e;
  e.peak_tap = peaks.front();
  e.peak_magnitude = mag[e.peak_tap];
  e.tof_s = cir.delay(e.peak_tap);
  return e;
}

struct BreathConfig {
  double window_s = 8.0;
  double hop_s = 1.0;
  double sample_rate_hz = 100.0;
  double min_hz = 0.1;
  double max_hz = 0.5;
  std::size_t zero_pad_factor = 4;
  /// Path peaks: local maxima of the time-averaged |CIR| above this fraction of its maximum.
  double peak_ratio = 0.1;
  /// A path must be a local maximum (within one resolution bin) in this share of frames.
  double persistence = 0.8;
  /// Keep at most this many subject paths, strongest first (0 = all).
  std::size_t max_paths = 0;
  /// A window counts as breathing when its band peak power is at least this
  /// fraction of the path's strongest window.
  double presence_ratio = 0.1;
  /// Spectrum length per window (zero padding for finer peak search).
  std::size_t fft_size = 8192;
};

struct PathBreathing {
  std::size_t tap = 0;
  double delay_s = 0.0;
  std::vector<double> times_s;      // window centers
  std::vector<double> bpm;          // per window
  std::vector<double> band_power;   // peak band power per window
  std::vector<bool> detected;       // band power above the presence threshold
  std::vector<std::vector<double>> spectrogram;  // per window, band bins only
  std::vector<double> spectrogram_hz;
};

struct BreathEstimate {
  std::size_t direct_tap = 0;
  std::vector<PathBreathing> paths;

  nlohmann::json to_json() const {
    auto arr = nlohmann::json::array();
    for (const auto& p : paths) {
      arr.push_back({{"tap", p.tap}, {"delay_s", p.delay_s}, {"time_s", p.times_s}, {"bpm", p.bpm},
                     {"band_power", p.band_power}, {"detected", p.detected}});
    }
    return {{"direct_tap", direct_tap}, {"paths", arr}};
  }
};

/// Candidate path taps of a series: peaks of the mean |CIR| that persist across frames.
inline std::vector<std::size_t> persistent_paths(const std::vector<std::vector<double>>& mags, const BreathConfig& cfg) {
  const std::size_t taps = mags.front().size();
  std::vector<double> mean(taps, 0.0);
  for (const auto& m : mags)
    for (std::size_t q = 0; q < taps; ++q) mean[q] += m[q];
  std::vector<std::size_t> out;
  const long tol = static_cast<long>(cfg.zero_pad_factor);
  std::vector<std::vector<std::size_t>> frame_peaks;
  frame_peaks.reserve(mags.size());
  for (const auto& m : mags) frame_peaks.push_back(dominant_peaks(m, cfg.peak_ratio));
  for (std::size_t cand : dominant_peaks(mean, cfg.peak_ratio)) {
    std::size_t hits = 0;
    for (const auto& peaks : frame_peaks) {
      for (std::size_t p : peaks) {
        if (std::abs(static_cast<long>(p) - static_cast<long>(cand)) <= tol) {
          ++hits;
          break;
        }
      }
    }
    if (static_cast<double>(hits) >= cfg.persistence * static_cast<double>(mags.size())) out.push_back(cand);
  }
  return out;
}

/// Per-path breathing rate from a uniformly sampled CSI series.
inline BreathEstimate estimate_breathing(const std::vector<CsiFrame>& series, const BreathConfig& cfg = {}) {
  detail::require(cfg.sample_rate_hz > 0.0 && cfg.window_s > 0.0 && cfg.hop_s > 0.0, "estimate_breathing: bad timing");
  detail::require(cfg.min_hz >= 0.0 && cfg.max_hz > cfg.min_hz && cfg.max_hz < cfg.sample_rate_hz / 2.0,
                  "estimate_breathing: bad frequency band");
  const auto window = static_cast<std::size_t>(std::lround(cfg.window_s * cfg.sample_rate_hz));
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_s * cfg.sample_rate_hz));
  detail::require(window >= 2 && series.size() >= window, "estimate_breathing: series shorter than one window");
  detail::require(cfg.fft_size >= window, "estimate_breathing: fft_size must cover the window");

  std::vector<std::vector<cplx>> taps;
  std::vector<std::vector<double>> mags;
  taps.reserve(series.size());
  mags.reserve(series.size());
  double tap_spacing = 0.0;
  for (const auto& f : series) {
    CirProfile cir = cfr_to_cir(f, cfg.zero_pad_factor, CirWindow::Hann);
    detail::require(taps.empty() || cir.size() == taps.front().size(), "estimate_breathing: frames differ in size");
    tap_spacing = cir.tap_spacing_s;
    mags.push_back(cir.magnitudes());
    taps.push_back(std::move(cir.taps));
  }
  std::vector<std::size_t> peaks = persistent_paths(mags, cfg);
  if (peaks.size() < 2) throw InvalidArgument("estimate_breathing: no secondary CIR peaks found");

  BreathEstimate est;
  est.direct_tap = peaks.front();
  peaks.erase(peaks.begin());
  if (cfg.max_paths > 0 && peaks.size() > cfg.max_paths) {
    std::vector<double> mean(peaks.size(), 0.0);
    for (std::size_t i = 0; i < peaks.size(); ++i)
      for (const auto& m : mags) mean[i] += m[peaks[i]];
    std::vector<std::size_t> order(peaks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < cfg.max_paths; ++i) kept.push_back(peaks[order[i]]);
    std::sort(kept.begin(), kept.end());
    peaks = kept;
  }

  std::vector<double> taper(window);
  for (std::size_t i = 0; i < window; ++i)
    taper[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(window - 1));
  const double bin_hz = cfg.sample_rate_hz / static_cast<double>(cfg.fft_size);
  const auto lo_bin = static_cast<std::size_t>(std::ceil(cfg.min_hz / bin_hz));
  const auto hi_bin = static_cast<std::size_t>(std::floor(cfg.max_hz / bin_hz));

  Eigen::FFT<double> fft;
  std::vector<cplx> buf(cfg.fft_size), spec;
  for (std::size_t tap : peaks) {
    PathBreathing p;
    p.tap = tap;
    p.delay_s = static_cast<double>(tap) * tap_spacing / static_cast<double>(cfg.zero_pad_factor);
    for (std::size_t b = lo_bin; b <= hi_bin; ++b) p.spectrogram_hz.push_back(static_cast<double>(b) * bin_hz);
    // Static part of the tap, taken over the whole series.
    cplx mean(0.0, 0.0);
    for (const auto& frame_taps : taps) mean += frame_taps[tap];
    mean /= static_cast<double>(taps.size());
    for (std::size_t start = 0; start + window <= series.size(); start += hop) {
      std::fill(buf.begin(), buf.end(), cplx(0.0, 0.0));
      for (std::size_t i = 0; i < window; ++i) buf[i] = taper[i] * (taps[start + i][tap] - mean);
      fft.fwd(spec, buf);
      // A complex series carries the rate at both +f and -f.
      auto power = [&](std::size_t b) { return std::norm(spec[b]) + std::norm(spec[cfg.fft_size - b]); };
      std::vector<double> band;
      std::size_t best = lo_bin;
      for (std::size_t b = lo_bin; b <= hi_bin; ++b) {
        band.push_back(power(b));
        if (power(b) > power(best)) best = b;
      }
      double offset = 0.0;
      if (best > lo_bin && best < hi_bin) {
        const double a = power(best - 1), c = power(best), d = power(best + 1);
        const double denom = a - 2.0 * c + d;
        if (denom < 0.0) offset = 0.5 * (a - d) / denom;
      }
      p.times_s.push_back((static_cast<double>(start) + 0.5 * static_cast<double>(window)) / cfg.sample_rate_hz);
      p.bpm.push_back(60.0 * (static_cast<double>(best) + offset) * bin_hz);
      p.band_power.push_back(power(best));
      p.spectrogram.push_back(std::move(band));
    }
    const double strongest = *std::max_element(p.band_power.begin(), p.band_power.end());
    for (double bp : p.band_power) p.detected.push_back(bp >= cfg.presence_ratio * strongest);
    est.paths.push_back(std::move(p));
  }
  return est;
}

}  // namespace nwb
