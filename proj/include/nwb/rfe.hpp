// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Relative frequency embedding.
//
// A sub-band of a CSI matrix (3 rows: real, imag, frequency) is the anchor;
// the band we observe or want to generate is expressed in the anchor's frame
// as (top, left, height, width) boxes. Each observed subcarrier becomes one
// token whose features are MAE-style sin/cos encodings of its position
// relative to the anchor start and of its absolute frequency.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "nwb/channel_sim.hpp"
#include "nwb/error.hpp"

namespace nwb::rfe {

struct Box {
  long top = 0;
  long left = 0;
  long height = 0;
  long width = 0;
  bool operator==(const Box&) const = default;
};

struct RfeCoordinates {
  Box anchor;
  Box observed;

  /// Number of subcarriers of the observed band.
  long observed_length() const { return -observed.left + anchor.width + observed.width; }
  /// Index of the anchor's first subcarrier within the observed band.
  long anchor_start() const { return -observed.left; }
};

/// Rows of the CSI matrix layout (real, imaginary, frequency).
inline constexpr long kCsiRows = 3;

/// The full band of length f expressed relative to the anchor [a, a + l).
inline RfeCoordinates observed_coords(long a, long l, long f) {
  detail::require(a >= 0 && l >= 1 && a + l <= f, "observed_coords: anchor must lie inside the band");
  return {{0, 0, kCsiRows, l}, {0, -a, kCsiRows, f - a - l}};
}

/// Coordinates of a k-times band centered on an input of length input_len.
inline RfeCoordinates extrapolation_coords(long input_len, int k) {
  detail::require(k >= 2, "extrapolation_coords: k must be >= 2");
  detail::require(input_len >= 1, "extrapolation_coords: empty input");
  const long left = (static_cast<long>(k) - 1) * input_len / 2;
  return observed_coords(left, input_len, static_cast<long>(k) * input_len);
}

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RfeEmbedding {
  Matrix values;  // tokens x embed_dim
  long embed_dim() const { return values.cols(); }
  long tokens() const { return values.rows(); }
};

namespace detail {

// sin block then cos block of x * 10000^{-2m/d} for m < d/2.
inline void sincos_features(double x, long d, double* out) {
  const long half = d / 2;
  for (long m = 0; m < half; ++m) {
    const double omega = std::pow(10000.0, -2.0 * static_cast<double>(m) / static_cast<double>(d));
    out[m] = std::sin(x * omega);
    out[half + m] = std::cos(x * omega);
  }
}

}  // namespace detail

/// Token features for explicit (relative position, frequency in MHz) pairs.
///
/// The first half of each token encodes the position, the second half the frequency.
inline RfeEmbedding embed_tokens(const std::vector<double>& rel_positions, const std::vector<double>& freqs_mhz,
                                 long embed_dim) {
  nwb::detail::require(embed_dim > 0 && embed_dim % 4 == 0, "rfe: embed_dim must be a positive multiple of 4");
  nwb::detail::require(rel_positions.size() == freqs_mhz.size(), "rfe: position/frequency count mismatch");
  RfeEmbedding e;
  e.values.resize(static_cast<long>(rel_positions.size()), embed_dim);
  const long half = embed_dim / 2;
  for (long q = 0; q < e.values.rows(); ++q) {
    double* row = e.values.row(q).data();
    detail::sincos_features(rel_positions[static_cast<std::size_t>(q)], half, row);
    detail::sincos_features(freqs_mhz[static_cast<std::size_t>(q)], half, row + half);
  }
  return e;
}

/// One token per observed subcarrier of `grid`, positioned relative to the anchor.
///
/// Positions are in units of the anchor's subcarrier spacing, so grids with a
/// different spacing land on fractional positions.
inline RfeEmbedding embed(const RfeCoordinates& coords, const FrequencyGrid& grid, long embed_dim,
                          double anchor_spacing_hz = 0.0) {
  grid.validate();
  nwb::detail::require(static_cast<long>(grid.num_subcarriers) == coords.observed_length(),
                       "rfe::embed: grid size does not match the observed band");
  const double unit = anchor_spacing_hz > 0.0 ? grid.spacing_hz / anchor_spacing_hz : 1.0;
  std::vector<double> pos(grid.num_subcarriers), freq(grid.num_subcarriers);
  for (std::size_t q = 0; q < grid.num_subcarriers; ++q) {
    pos[q] = (static_cast<double>(q) + static_cast<double>(coords.observed.left)) * unit;
    freq[q] = grid.frequency(q) * 1e-6;
  }
  return embed_tokens(pos, freq, embed_dim);
}

/// Embedding of every tensor cell: cell c holds subcarrier c * stride of `grid`;
/// cells past the grid continue its lattice.
inline RfeEmbedding embed_cells(const RfeCoordinates& coords, const FrequencyGrid& grid, std::size_t stride,
                                std::size_t cells, long embed_dim) {
  nwb::detail::require(static_cast<long>(grid.num_subcarriers) == coords.observed_length(),
                       "rfe::embed_cells: grid size does not match the observed band");
  std::vector<double> pos(cells), freq(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t q = c * stride;
    pos[c] = static_cast<double>(q) + static_cast<double>(coords.observed.left);
    freq[c] = grid.frequency(q) * 1e-6;
  }
  return embed_tokens(pos, freq, embed_dim);
}

}  // namespace nwb::rfe
