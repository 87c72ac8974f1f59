// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Frozen compressor between CSI tensors and the latent token space.
//
// The default codec is a lossless patchify: non-overlapping p x p patches of
// the (3, R, C) tensor become tokens of 3*p*p features. The frozen-linear
// variant additionally multiplies every token by a fixed, seeded orthonormal
// matrix. Neither has trainable state.

#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "nwb/csi_data.hpp"
#include "nwb/error.hpp"

namespace nwb {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LatentTensor {
  RowMatrix values;  // tokens x latent_dim
  FrequencyGrid grid;
  TensorLayout layout;
  std::size_t stride = 1;
  std::uint32_t antenna = 0;
  double timestamp = 0.0;

  long tokens() const { return values.rows(); }
  long dim() const { return values.cols(); }
};

enum class CodecType { Patchify, FrozenLinear };

inline std::string to_string(CodecType t) { return t == CodecType::Patchify ? "patchify" : "frozen-linear"; }

inline CodecType codec_type_from_string(const std::string& s) {
  if (s == "patchify") return CodecType::Patchify;
  if (s == "frozen-linear") return CodecType::FrozenLinear;
  throw InvalidArgument("unknown codec type '" + s + "'");
}

struct CodecSpec {
  CodecType type = CodecType::Patchify;
  std::size_t patch = 4;
  std::uint64_t seed = 0;
  /// Tensor columns used when laying out a band; rows follow from the band size.
  std::size_t cols = 4;

  bool operator==(const CodecSpec&) const = default;
};

class LatentCodec {
 public:
  explicit LatentCodec(CodecSpec spec = {}) : spec_(spec) {
    detail::require(spec_.patch >= 1, "LatentCodec: patch size must be >= 1");
    detail::require(spec_.cols >= 1 && spec_.cols % spec_.patch == 0,
                    "LatentCodec: tensor columns must be a multiple of the patch size");
    if (spec_.type == CodecType::FrozenLinear) {
      const long d = latent_dim();
      std::mt19937_64 rng(spec_.seed);
      std::normal_distribution<double> n(0.0, 1.0);
      RowMatrix g(d, d);
      for (long i = 0; i < d; ++i)
        for (long j = 0; j < d; ++j) g(i, j) = n(rng);
      Eigen::HouseholderQR<RowMatrix> qr(g);
      projection_ = qr.householderQ() * RowMatrix::Identity(d, d);
    }
  }

  const CodecSpec& spec() const { return spec_; }
  long latent_dim() const { return static_cast<long>(3 * spec_.patch * spec_.patch); }
  const RowMatrix& projection() const { return projection_; }

  /// Tensor layout this codec uses for a band of `count` subcarriers.
  TensorLayout layout_for_band(std::size_t count) const { return layout_for(count, spec_.cols, spec_.patch); }

  long tokens_for(const TensorLayout& layout) const {
    return static_cast<long>((layout.rows / spec_.patch) * (layout.cols / spec_.patch));
  }

  /// Latent token that holds tensor cell `cell`.
  long token_of_cell(const TensorLayout& layout, std::size_t cell) const {
    const std::size_t r = cell / layout.cols, c = cell % layout.cols;
    return static_cast<long>((r / spec_.patch) * (layout.cols / spec_.patch) + c / spec_.patch);
  }

  LatentTensor encode(const CsiTensor& t) const {
    check_layout(t.layout);
    const std::size_t p = spec_.patch;
    LatentTensor z;
    z.grid = t.grid;
    z.layout = t.layout;
    z.stride = t.stride;
    z.antenna = t.antenna;
    z.timestamp = t.timestamp;
    z.values.resize(tokens_for(t.layout), latent_dim());
    const std::size_t tc = t.layout.cols / p;
    for (std::size_t r = 0; r < t.layout.rows; ++r) {
      for (std::size_t c = 0; c < t.layout.cols; ++c) {
        const long token = static_cast<long>((r / p) * tc + c / p);
        for (std::size_t ch = 0; ch < 3; ++ch) {
          z.values(token, feature(ch, r % p, c % p)) = t.at(ch, r * t.layout.cols + c);
        }
      }
    }
    if (spec_.type == CodecType::FrozenLinear) z.values = (z.values * projection_).eval();
    return z;
  }

  /// Inverse of encode; every cell that maps onto a grid subcarrier is marked valid.
  CsiTensor decode(const LatentTensor& z) const {
    check_layout(z.layout);
    detail::require(z.tokens() == tokens_for(z.layout) && z.dim() == latent_dim(),
                    "LatentCodec::decode: latent shape does not match its layout");
    const RowMatrix patches =
        spec_.type == CodecType::FrozenLinear ? RowMatrix(z.values * projection_.transpose()) : z.values;
    const std::size_t p = spec_.patch;
    CsiTensor t;
    t.layout = z.layout;
    t.grid = z.grid;
    t.stride = z.stride;
    t.antenna = z.antenna;
    t.timestamp = z.timestamp;
    t.data.assign(3 * z.layout.cells(), 0.0);
    t.valid.assign(z.layout.cells(), 0);
    const std::size_t tc = z.layout.cols / p;
    for (std::size_t r = 0; r < z.layout.rows; ++r) {
      for (std::size_t c = 0; c < z.layout.cols; ++c) {
        const long token = static_cast<long>((r / p) * tc + c / p);
        const std::size_t cell = r * z.layout.cols + c;
        for (std::size_t ch = 0; ch < 3; ++ch) t.at(ch, cell) = patches(token, feature(ch, r % p, c % p));
        t.valid[cell] = cell * z.stride < z.grid.num_subcarriers ? 1 : 0;
      }
    }
    return t;
  }

  /// Averages per-cell rows (cells x d) into per-token rows (tokens x d).
  RowMatrix pool_cells(const RowMatrix& per_cell, const TensorLayout& layout) const {
    detail::require(per_cell.rows() == static_cast<long>(layout.cells()), "pool_cells: row count != cells");
    RowMatrix out = RowMatrix::Zero(tokens_for(layout), per_cell.cols());
    for (std::size_t cell = 0; cell < layout.cells(); ++cell) out.row(token_of_cell(layout, cell)) += per_cell.row(static_cast<long>(cell));
    out /= static_cast<double>(spec_.patch * spec_.patch);
    return out;
  }

 private:
  long feature(std::size_t ch, std::size_t dr, std::size_t dc) const {
    return static_cast<long>(ch * spec_.patch * spec_.patch + dr * spec_.patch + dc);
  }

  void check_layout(const TensorLayout& layout) const {
    detail::require(layout.rows % spec_.patch == 0 && layout.cols % spec_.patch == 0,
                    "LatentCodec: tensor dimensions must be divisible by the patch size");
  }

  CodecSpec spec_;
  RowMatrix projection_;
};

}  // namespace nwb
