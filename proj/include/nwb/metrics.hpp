// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// CFR <-> CIR transforms and the extrapolation quality metrics.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "nwb/channel_sim.hpp"
#include "nwb/csi_data.hpp"
#include "nwb/error.hpp"

namespace nwb {

struct CirProfile {
  std::vector<cplx> taps;
  double tap_spacing_s = 0.0;  // 1 / bandwidth
  std::size_t zero_pad_factor = 1;

  std::size_t size() const { return taps.size(); }
  double delay(std::size_t q) const { return static_cast<double>(q) * tap_spacing_s / static_cast<double>(zero_pad_factor); }
  std::vector<double> magnitudes() const {
    std::vector<double> m(taps.size());
    for (std::size_t i = 0; i < taps.size(); ++i) m[i] = std::abs(taps[i]);
    return m;
  }
};

enum class CirWindow { Rectangular, Hann };

/// Unitary inverse DFT of the ascending-frequency CFR, zero-padded to
/// zero_pad_factor * N points. A Hann taper trades resolution for sidelobes.
inline CirProfile cfr_to_cir(const CsiFrame& frame, std::size_t zero_pad_factor = 4,
                             CirWindow window = CirWindow::Rectangular) {
  detail::require(!frame.values.empty(), "cfr_to_cir: empty frame");
  detail::require(zero_pad_factor >= 1, "cfr_to_cir: zero_pad_factor must be >= 1");
  const std::size_t n = frame.size(), m = n * zero_pad_factor;
  std::vector<cplx> padded(m, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    double w = 1.0;
    if (window == CirWindow::Hann && n > 1) {
      w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n - 1));
    }
    padded[k] = w * frame.values[k];
  }
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  CirProfile cir;
  fft.inv(cir.taps, padded);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (auto& t : cir.taps) t *= scale;
  cir.tap_spacing_s = 1.0 / frame.grid.bandwidth();
  cir.zero_pad_factor = zero_pad_factor;
  return cir;
}

/// Forward unitary DFT; returns the first taps.size() / zero_pad_factor bins
/// (exact inverse of cfr_to_cir for rectangular windows).
inline std::vector<cplx> cir_to_cfr(const CirProfile& cir) {
  detail::require(!cir.taps.empty() && cir.zero_pad_factor >= 1, "cir_to_cfr: empty profile");
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<cplx> spectrum;
  fft.fwd(spectrum, cir.taps);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cir.taps.size()));
  spectrum.resize(cir.taps.size() / cir.zero_pad_factor);
  for (auto& v : spectrum) v *= scale;
  return spectrum;
}

namespace detail {

inline void require_same_grid(const CsiFrame& a, const CsiFrame& b, const char* who) {
  const auto& ga = a.grid;
  const auto& gb = b.grid;
  const bool same = ga.num_subcarriers == gb.num_subcarriers && a.size() == b.size() &&
                    std::abs(ga.spacing_hz - gb.spacing_hz) <= 1e-9 * std::abs(gb.spacing_hz) &&
                    std::abs(ga.center_hz - gb.center_hz) <= 1e-9 * std::max(1.0, std::abs(gb.center_hz));
  if (!same) throw InvalidArgument(std::string(who) + ": frames are on different grids");
}

}  // namespace detail

/// Mean of squared real/imaginary component errors.
inline double mse(const CsiFrame& a, const CsiFrame& b) {
  detail::require_same_grid(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a.values[i] - b.values[i]);
  return s / (2.0 * static_cast<double>(a.size()));
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size() && !x.empty(), "pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw NumericError("pearson: zero-variance profile");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pearson correlation of the |CIR| profiles of two frames on the same grid.
inline double acc_cir(const CsiFrame& ecsi, const CsiFrame& truth, std::size_t zero_pad_factor = 4) {
  detail::require_same_grid(ecsi, truth, "acc_cir");
  return pearson(cfr_to_cir(ecsi, zero_pad_factor).magnitudes(), cfr_to_cir(truth, zero_pad_factor).magnitudes());
}

/// Linear-interpolated percentile (q in [0, 100]).
inline double percentile(std::vector<double> v, double q) {
  detail::require(!v.empty(), "percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return percentile(std::move(v), 50.0); }

struct EvalCase {
  int k = 2;
  CsiFrame input;  // narrowband measurement
  CsiFrame truth;  // wideband ground truth over the expanded grid
};

/// Maps (input, k, case index) to an eCSI frame over the expanded grid.
using Extrapolator = std::function<CsiFrame(const CsiFrame&, int, std::size_t)>;

struct MetricRow {
  int k = 0;
  std::string metric;
  std::vector<double> values;  // per case, in case order
  double median = 0.0, p10 = 0.0, p90 = 0.0;
};

struct MetricTable {
  std::vector<MetricRow> rows;

  const MetricRow& row(int k, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.k == k && r.metric == metric) return r;
    throw InvalidArgument("MetricTable: no row for k=" + std::to_string(k) + " metric=" + metric);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "k,metric,median,p10,p90\n";
    for (const auto& r : rows) os << r.k << ',' << r.metric << ',' << r.median << ',' << r.p10 << ',' << r.p90 << '\n';
    return os.str();
  }

  nlohmann::json to_json() const {
    auto out = nlohmann::json::array();
    for (const auto& r : rows) {
      std::vector<double> cdf = r.values;
      std::sort(cdf.begin(), cdf.end());
      out.push_back({{"k", r.k}, {"metric", r.metric}, {"median", r.median}, {"p10", r.p10}, {"p90", r.p90},
                     {"count", r.values.size()}, {"cdf", cdf}});
    }
    return out;
  }
};

/// MSE (on the truth-normalized scale) and AccCIR of `model` per k.
inline MetricTable evaluate(const std::vector<EvalCase>& cases, const Extrapolator& model,
                            std::size_t zero_pad_factor = 4) {
  detail::require(!cases.empty(), "evaluate: empty test set");
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_k;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const NormalizedFrame truth = normalize(c.truth);
    const CsiFrame ecsi = denormalize(model(c.input, c.k, i), 1.0 / truth.factor);
    auto& [m, a] = by_k[c.k];
    m.push_back(mse(ecsi, truth.frame));
    a.push_back(acc_cir(ecsi, truth.frame, zero_pad_factor));
  }
  MetricTable table;
  for (auto& [k, vals] : by_k) {
    for (int which = 0; which < 2; ++which) {
      MetricRow r;
      r.k = k;
      r.metric = which == 0 ? "mse" : "acc_cir";
      r.values = which == 0 ? vals.first : vals.second;
      r.median = median(r.values);
      r.p10 = percentile(r.values, 10.0);
      r.p90 = percentile(r.values, 90.0);
      table.rows.push_back(std::move(r));
    }
  }
  return table;
}

}  // namespace nwb
