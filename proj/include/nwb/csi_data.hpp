// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Preprocessing between CSI frames and the network-facing tensor layout:
// amplitude normalization, the 3 x R x C (real, imag, frequency) tensor,
// and random sub-band selection for self-labeled training pairs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "nwb/channel_sim.hpp"
#include "nwb/error.hpp"

namespace nwb {

/// Scale applied to frequencies in MHz for the tensor's frequency channel.
inline constexpr double kFrequencyScale = 1e-4;

inline double normalized_frequency(double hz) { return hz * 1e-6 * kFrequencyScale; }

struct NormalizedFrame {
  CsiFrame frame;
  double factor = 1.0;  ///< original = frame * factor
};

/// Divides a frame by its maximum magnitude.
inline NormalizedFrame normalize(const CsiFrame& frame) {
  detail::require(!frame.values.empty(), "normalize: empty frame");
  double peak = 0.0;
  for (const auto& v : frame.values) peak = std::max(peak, std::abs(v));
  // A zero frame has nothing to scale; an already normalized one is left bit-identical.
  if (peak == 0.0 || std::abs(peak - 1.0) <= 4 * std::numeric_limits<double>::epsilon()) {
    return {frame, 1.0};
  }
  NormalizedFrame out{frame, peak};
  for (auto& v : out.frame.values) v /= peak;
  return out;
}

inline CsiFrame denormalize(CsiFrame frame, double factor) {
  for (auto& v : frame.values) v *= factor;
  return frame;
}

struct TensorLayout {
  std::size_t rows = 32;
  std::size_t cols = 32;
  std::size_t cells() const { return rows * cols; }
  bool operator==(const TensorLayout&) const = default;
};

/// Layout with `cols` columns and enough rows (a multiple of `row_multiple`) for `count` cells.
inline TensorLayout layout_for(std::size_t count, std::size_t cols, std::size_t row_multiple) {
  detail::require(cols > 0 && row_multiple > 0, "layout_for: positive cols and row multiple");
  std::size_t rows = (count + cols - 1) / cols;
  rows = (rows + row_multiple - 1) / row_multiple * row_multiple;
  return {std::max(rows, row_multiple), cols};
}

/// Channel 0 = real, 1 = imaginary, 2 = normalized frequency, each R x C row-major.
///
/// Cell c holds subcarrier c*stride of `grid`. Cells past the end of the grid
/// are padding; their frequency channel continues the lattice.
struct CsiTensor {
  TensorLayout layout;
  FrequencyGrid grid;
  std::size_t stride = 1;
  std::vector<double> data;        // 3 * cells
  std::vector<std::uint8_t> valid;  // cells
  std::uint32_t antenna = 0;
  double timestamp = 0.0;

  std::size_t cells() const { return layout.cells(); }
  double& at(std::size_t channel, std::size_t cell) { return data[channel * cells() + cell]; }
  double at(std::size_t channel, std::size_t cell) const { return data[channel * cells() + cell]; }
  double at(std::size_t channel, std::size_t row, std::size_t col) const {
    return at(channel, row * layout.cols + col);
  }
  double cell_frequency(std::size_t cell) const { return grid.frequency(cell * stride); }
};

namespace detail {

// Index of frame subcarrier 0 inside `target`; rejects misaligned lattices.
inline std::size_t aligned_offset(const FrequencyGrid& frame, const FrequencyGrid& target) {
  require(std::abs(frame.spacing_hz - target.spacing_hz) <= 1e-9 * target.spacing_hz,
          "to_tensor: frame and target grid spacings differ");
  const double raw = (frame.frequency(0) - target.frequency(0)) / target.spacing_hz;
  const double idx = std::round(raw);
  require(std::abs(raw - idx) <= 1e-6, "to_tensor: frame subcarriers are not on the target lattice");
  require(idx >= 0.0 && idx + static_cast<double>(frame.num_subcarriers) <=
                            static_cast<double>(target.num_subcarriers),
          "to_tensor: frame extends outside the target grid");
  return static_cast<std::size_t>(idx);
}

}  // namespace detail

/// Places `frame` at its true position inside the tensor representing `target`.
inline CsiTensor to_tensor(const CsiFrame& frame, const FrequencyGrid& target, const TensorLayout& layout) {
  frame.validate();
  target.validate();
  detail::require(layout.cells() > 0, "to_tensor: empty layout");
  const std::size_t offset = detail::aligned_offset(frame.grid, target);

  CsiTensor t;
  t.layout = layout;
  t.grid = target;
  t.stride = (target.num_subcarriers + layout.cells() - 1) / layout.cells();
  t.data.assign(3 * layout.cells(), 0.0);
  t.valid.assign(layout.cells(), 0);
  t.antenna = frame.antenna;
  t.timestamp = frame.timestamp;
  for (std::size_t c = 0; c < layout.cells(); ++c) t.at(2, c) = normalized_frequency(t.cell_frequency(c));
  for (std::size_t j = 0; j < frame.values.size(); ++j) {
    const std::size_t idx = offset + j;
    if (idx % t.stride != 0) continue;
    const std::size_t c = idx / t.stride;
    t.at(0, c) = frame.values[j].real();
    t.at(1, c) = frame.values[j].imag();
    t.valid[c] = 1;
  }
  return t;
}

/// The frame over the tensor's single contiguous run of valid cells.
inline CsiFrame from_tensor(const CsiTensor& t) {
  const std::size_t n = t.cells();
  detail::require(t.valid.size() == n && t.data.size() == 3 * n, "from_tensor: inconsistent tensor");
  const auto first = std::find(t.valid.begin(), t.valid.end(), std::uint8_t{1});
  detail::require(first != t.valid.end(), "from_tensor: tensor has no valid cells");
  const auto begin = static_cast<std::size_t>(first - t.valid.begin());
  std::size_t end = begin;
  while (end < n && t.valid[end]) ++end;
  detail::require(std::find(t.valid.begin() + static_cast<std::ptrdiff_t>(end), t.valid.end(),
                            std::uint8_t{1}) == t.valid.end(),
                  "from_tensor: valid mask is not one contiguous run");

  CsiFrame f;
  f.grid.spacing_hz = t.grid.spacing_hz * static_cast<double>(t.stride);
  f.grid.num_subcarriers = end - begin;
  f.grid.center_hz = 0.5 * (t.cell_frequency(begin) + t.cell_frequency(end - 1));
  f.antenna = t.antenna;
  f.timestamp = t.timestamp;
  f.values.reserve(end - begin);
  for (std::size_t c = begin; c < end; ++c) f.values.emplace_back(t.at(0, c), t.at(1, c));
  return f;
}

/// Contiguous sub-band [start, start + length) of a parent frame.
struct SubbandSelection {
  std::size_t start = 0;
  std::size_t length = 0;
};

inline std::size_t subband_min_length(std::size_t f) { return (f + 19) / 20; }  // ceil(0.05 f)
inline std::size_t subband_max_length(std::size_t f) { return f / 2; }         // floor(0.50 f)

inline SubbandSelection sample_subband(std::size_t frame_length, std::mt19937_64& rng) {
  detail::require(frame_length >= 20, "sample_subband: frame must have at least 20 subcarriers");
  std::uniform_int_distribution<std::size_t> len(subband_min_length(frame_length),
                                                 subband_max_length(frame_length));
  SubbandSelection s;
  s.length = len(rng);
  std::uniform_int_distribution<std::size_t> start(0, frame_length - s.length);
  s.start = start(rng);
  return s;
}

inline SubbandSelection sample_subband(const CsiFrame& frame, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_subband(frame.size(), rng);
}

/// The sub-band as a frame of its own (grid recentered on the selection).
inline CsiFrame extract_subband(const CsiFrame& frame, const SubbandSelection& sel) {
  detail::require(sel.length >= 1 && sel.start + sel.length <= frame.size(),
                  "extract_subband: selection outside the frame");
  CsiFrame sub;
  sub.grid.spacing_hz = frame.grid.spacing_hz;
  sub.grid.num_subcarriers = sel.length;
  sub.grid.center_hz = 0.5 * (frame.grid.frequency(sel.start) + frame.grid.frequency(sel.start + sel.length - 1));
  sub.antenna = frame.antenna;
  sub.timestamp = frame.timestamp;
  sub.values.assign(frame.values.begin() + static_cast<std::ptrdiff_t>(sel.start),
                    frame.values.begin() + static_cast<std::ptrdiff_t>(sel.start + sel.length));
  return sub;
}

struct DatasetRecord {
  CsiFrame frame;
  std::string env_label;
  std::uint32_t antenna = 0;
};

}  // namespace nwb
