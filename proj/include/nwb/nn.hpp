// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Small dense-layer kernels with explicit backward passes.
//
// Activations are stacked row-major matrices (tokens x features) holding a
// whole batch; `Segments` marks which rows belong to which sample so that
// attention and the token-axis convolution never mix samples.

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace nwb::nn {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

/// Row offsets of each sample; offsets.back() is the total row count.
struct Segments {
  std::vector<long> offsets{0};
  long count() const { return static_cast<long>(offsets.size()) - 1; }
  long begin(long s) const { return offsets[static_cast<std::size_t>(s)]; }
  long length(long s) const { return offsets[static_cast<std::size_t>(s) + 1] - offsets[static_cast<std::size_t>(s)]; }
  long rows() const { return offsets.back(); }
};

// ---------------------------------------------------------------------------
// Layer norm over the feature axis with learnable gain and bias.

template <typename Real>
struct LayerNormCache {
  Mat<Real> xhat;
  Eigen::Matrix<Real, Eigen::Dynamic, 1> rstd;
};

template <typename Real>
Mat<Real> layer_norm(const Mat<Real>& x, const Mat<Real>& gain, const Mat<Real>& bias, LayerNormCache<Real>* cache,
                     Real eps = Real(1e-5)) {
  const long n = x.rows(), d = x.cols();
  Mat<Real> xhat(n, d);
  Eigen::Matrix<Real, Eigen::Dynamic, 1> rstd(n);
  for (long i = 0; i < n; ++i) {
    const Real mean = x.row(i).mean();
    const Real var = (x.row(i).array() - mean).square().mean();
    rstd(i) = Real(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  Mat<Real> y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename Real>
Mat<Real> layer_norm_backward(const Mat<Real>& dy, const Mat<Real>& gain, const LayerNormCache<Real>& c,
                              Mat<Real>& dgain, Mat<Real>& dbias) {
  dgain.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  Mat<Real> dxhat = dy.array().rowwise() * gain.row(0).array();
  Mat<Real> dx(dy.rows(), dy.cols());
  for (long i = 0; i < dy.rows(); ++i) {
    const Real m1 = dxhat.row(i).mean();
    const Real m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation).

template <typename Real>
Real gelu(Real x) {
  const Real k = std::sqrt(Real(2) / std::numbers::pi_v<Real>);
  return Real(0.5) * x * (Real(1) + std::tanh(k * (x + Real(0.044715) * x * x * x)));
}

template <typename Real>
Real gelu_grad(Real x) {
  const Real k = std::sqrt(Real(2) / std::numbers::pi_v<Real>);
  const Real th = std::tanh(k * (x + Real(0.044715) * x * x * x));
  return Real(0.5) * (Real(1) + th) +
         Real(0.5) * x * (Real(1) - th * th) * k * (Real(1) + Real(3) * Real(0.044715) * x * x);
}

/// Elementwise GELU; `tanh_out` keeps the inner tanh for the backward pass.
template <typename Real>
Mat<Real> gelu(const Mat<Real>& x, Mat<Real>* tanh_out) {
  const Real k = std::sqrt(Real(2) / std::numbers::pi_v<Real>);
  Mat<Real> th = (k * (x.array() + Real(0.044715) * x.array().cube())).tanh().matrix();
  Mat<Real> y = (Real(0.5) * x.array() * (Real(1) + th.array())).matrix();
  if (tanh_out) *tanh_out = std::move(th);
  return y;
}

template <typename Real>
Mat<Real> gelu_backward(const Mat<Real>& dy, const Mat<Real>& x, const Mat<Real>& th) {
  const Real k = std::sqrt(Real(2) / std::numbers::pi_v<Real>);
  const auto t = th.array();
  const auto xa = x.array();
  return (dy.array() * (Real(0.5) * (Real(1) + t) +
                        Real(0.5) * xa * (Real(1) - t.square()) * k * (Real(1) + Real(3 * 0.044715) * xa.square())))
      .matrix();
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention within segments.

template <typename Real>
struct AttentionWeights {
  const Mat<Real>* wq;
  const Mat<Real>* wk;
  const Mat<Real>* wv;
  const Mat<Real>* wo;  // may be null (heads are concatenated as-is)
};

template <typename Real>
struct AttentionGrads {
  Mat<Real>* wq;
  Mat<Real>* wk;
  Mat<Real>* wv;
  Mat<Real>* wo;
};

template <typename Real>
struct AttentionCache {
  Mat<Real> xq, xkv, q, k, v, heads;
  std::vector<Mat<Real>> probs;  // segment-major, head-minor
};

/// Softmax(Q K^T / sqrt(head_dim)) V per segment and head, Q from xq and K/V from xkv.
template <typename Real>
Mat<Real> attention(const Mat<Real>& xq, const Mat<Real>& xkv, const Segments& seg, long num_heads,
                    const AttentionWeights<Real>& w, AttentionCache<Real>* cache) {
  Mat<Real> q = xq * *w.wq;
  Mat<Real> k = xkv * *w.wk;
  Mat<Real> v = xkv * *w.wv;
  const long d = q.cols(), dh = d / num_heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  Mat<Real> heads(q.rows(), d);
  std::vector<Mat<Real>> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(seg.count() * num_heads));
  for (long s = 0; s < seg.count(); ++s) {
    const long o = seg.begin(s), t = seg.length(s);
    for (long h = 0; h < num_heads; ++h) {
      Mat<Real> p = (q.block(o, h * dh, t, dh) * k.block(o, h * dh, t, dh).transpose()) * scale;
      for (long i = 0; i < t; ++i) {
        const Real mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      heads.block(o, h * dh, t, dh).noalias() = p * v.block(o, h * dh, t, dh);
      if (cache) probs.push_back(std::move(p));
    }
  }
  Mat<Real> out = w.wo ? Mat<Real>(heads * *w.wo) : heads;
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads = std::move(heads);
    cache->probs = std::move(probs);
  }
  return out;
}

/// Returns (d xq, d xkv) and accumulates weight gradients.
template <typename Real>
std::pair<Mat<Real>, Mat<Real>> attention_backward(const Mat<Real>& dout, const Segments& seg, long num_heads,
                                                   const AttentionWeights<Real>& w, const AttentionCache<Real>& c,
                                                   AttentionGrads<Real> g) {
  Mat<Real> dheads;
  if (w.wo) {
    g.wo->noalias() += c.heads.transpose() * dout;
    dheads = dout * w.wo->transpose();
  } else {
    dheads = dout;
  }
  const long d = c.q.cols(), dh = d / num_heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  Mat<Real> dq = Mat<Real>::Zero(c.q.rows(), d), dk = Mat<Real>::Zero(c.k.rows(), d),
            dv = Mat<Real>::Zero(c.v.rows(), d);
  std::size_t idx = 0;
  for (long s = 0; s < seg.count(); ++s) {
    const long o = seg.begin(s), t = seg.length(s);
    for (long h = 0; h < num_heads; ++h, ++idx) {
      const Mat<Real>& p = c.probs[idx];
      const auto dblk = dheads.block(o, h * dh, t, dh);
      Mat<Real> dp = dblk * c.v.block(o, h * dh, t, dh).transpose();
      dv.block(o, h * dh, t, dh).noalias() += p.transpose() * dblk;
      Eigen::Matrix<Real, Eigen::Dynamic, 1> rowdot = (dp.array() * p.array()).rowwise().sum();
      Mat<Real> ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix() * scale;
      dq.block(o, h * dh, t, dh).noalias() += ds * c.k.block(o, h * dh, t, dh);
      dk.block(o, h * dh, t, dh).noalias() += ds.transpose() * c.q.block(o, h * dh, t, dh);
    }
  }
  g.wq->noalias() += c.xq.transpose() * dq;
  g.wk->noalias() += c.xkv.transpose() * dk;
  g.wv->noalias() += c.xkv.transpose() * dv;
  Mat<Real> dxq = dq * w.wq->transpose();
  Mat<Real> dxkv = dk * w.wk->transpose();
  dxkv.noalias() += dv * w.wv->transpose();
  return {std::move(dxq), std::move(dxkv)};
}

// ---------------------------------------------------------------------------
// Width-3 convolution along the token axis with zero-padded segment ends.
// The kernel is stored as (3 * in) x out: rows for the previous, current and
// next token in that order.

template <typename Real>
Mat<Real> shift_rows(const Mat<Real>& x, const Segments& seg, int direction) {
  // direction -1: row q takes x[q-1]; +1: row q takes x[q+1].
  Mat<Real> out = Mat<Real>::Zero(x.rows(), x.cols());
  for (long s = 0; s < seg.count(); ++s) {
    const long o = seg.begin(s), t = seg.length(s);
    if (t < 2) continue;
    if (direction < 0) {
      out.block(o + 1, 0, t - 1, x.cols()) = x.block(o, 0, t - 1, x.cols());
    } else {
      out.block(o, 0, t - 1, x.cols()) = x.block(o + 1, 0, t - 1, x.cols());
    }
  }
  return out;
}

template <typename Real>
Mat<Real> token_conv3(const Mat<Real>& x, const Segments& seg, const Mat<Real>& kernel) {
  const long in = x.cols();
  Mat<Real> out = x * kernel.middleRows(in, in);
  out.noalias() += shift_rows(x, seg, -1) * kernel.topRows(in);
  out.noalias() += shift_rows(x, seg, +1) * kernel.bottomRows(in);
  return out;
}

template <typename Real>
Mat<Real> token_conv3_backward(const Mat<Real>& dout, const Mat<Real>& x, const Segments& seg,
                               const Mat<Real>& kernel, Mat<Real>& dkernel) {
  const long in = x.cols();
  dkernel.topRows(in).noalias() += shift_rows(x, seg, -1).transpose() * dout;
  dkernel.middleRows(in, in).noalias() += x.transpose() * dout;
  dkernel.bottomRows(in).noalias() += shift_rows(x, seg, +1).transpose() * dout;
  Mat<Real> dx = dout * kernel.middleRows(in, in).transpose();
  // x[r] reached output r+1 through the "previous" tap and r-1 through the "next" tap.
  dx += shift_rows(Mat<Real>(dout * kernel.topRows(in).transpose()), seg, +1);
  dx += shift_rows(Mat<Real>(dout * kernel.bottomRows(in).transpose()), seg, -1);
  return dx;
}

/// Sinusoidal embedding of an integer timestep.
template <typename Real>
RowVec<Real> timestep_features(int t, long dim) {
  RowVec<Real> out(dim);
  const long half = dim / 2;
  for (long m = 0; m < half; ++m) {
    const double omega = std::exp(-std::log(10000.0) * static_cast<double>(m) / static_cast<double>(half));
    out(m) = static_cast<Real>(std::sin(t * omega));
    out(half + m) = static_cast<Real>(std::cos(t * omega));
  }
  return out;
}

}  // namespace nwb::nn
