// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Frequency-aware transformer noise predictor.
//
//   z_g = Blocks( [z_bt | z_a] W_reduce + time_embed(t) )
//   z_d = z_g + softmax(Q_E K^T / sqrt(D)) V,  Q_E = E W_q, K = LN(z_g) W_k, V = LN(z_g) W_v
//   eps_hat = Conv3( LN( DecoderBlock(z_d) ) )
//
// The token count of the query stream E equals the token count of the noisy
// container z_bt, so one pass predicts noise for a band of any size.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nwb/error.hpp"
#include "nwb/nn.hpp"

namespace nwb {

struct ModelConfig {
  long latent_dim = 48;
  long model_dim = 128;
  long num_blocks = 4;
  long num_heads = 4;
  long embed_dim = 64;
  long timestep_embed_dim = 64;
  long mlp_ratio = 4;

  void validate() const {
    detail::require(latent_dim >= 1, "ModelConfig: latent_dim must be positive");
    detail::require(model_dim >= 1 && num_heads >= 1 && model_dim % num_heads == 0,
                    "ModelConfig: model_dim must be divisible by num_heads");
    detail::require(num_blocks >= 1, "ModelConfig: num_blocks must be >= 1");
    detail::require(embed_dim >= 4 && embed_dim % 4 == 0, "ModelConfig: embed_dim must be a multiple of 4");
    detail::require(timestep_embed_dim >= 2 && timestep_embed_dim % 2 == 0,
                    "ModelConfig: timestep_embed_dim must be even");
    detail::require(mlp_ratio >= 1, "ModelConfig: mlp_ratio must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Named parameter arrays in a fixed order.
template <typename Real>
struct ModelParameters {
  using Mat = nn::Mat<Real>;

  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Mat> arrays;

  Mat& operator[](const std::string& name) { return arrays[index(name)]; }
  const Mat& operator[](const std::string& name) const { return arrays[index(name)]; }

  std::size_t index(const std::string& name) const {
    const auto it = lookup_.find(name);
    if (it == lookup_.end()) throw InvalidArgument("ModelParameters: no array named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return lookup_.count(name) != 0; }

  void add(const std::string& name, long rows, long cols) {
    lookup_[name] = names.size();
    names.push_back(name);
    arrays.push_back(Mat::Zero(rows, cols));
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& a : arrays) n += static_cast<std::size_t>(a.size());
    return n;
  }

  void set_zero() {
    for (auto& a : arrays) a.setZero();
  }

  template <typename Other>
  ModelParameters<Other> cast() const {
    ModelParameters<Other> out = ModelParameters<Other>::layout(config);
    for (std::size_t i = 0; i < arrays.size(); ++i) out.arrays[i] = arrays[i].template cast<Other>();
    return out;
  }

  /// Zero-valued arrays with the shapes implied by `config`.
  static ModelParameters layout(const ModelConfig& config) {
    config.validate();
    ModelParameters p;
    p.config = config;
    const long d = config.model_dim, l = config.latent_dim, hidden = config.mlp_ratio * d;
    p.add("reduce.w", 2 * l, d);
    p.add("time.w", config.timestep_embed_dim, d);
    p.add("time.b", 1, d);
    auto block = [&](const std::string& prefix) {
      p.add(prefix + ".ln1.g", 1, d);
      p.add(prefix + ".ln1.b", 1, d);
      p.add(prefix + ".attn.wq", d, d);
      p.add(prefix + ".attn.wk", d, d);
      p.add(prefix + ".attn.wv", d, d);
      p.add(prefix + ".attn.wo", d, d);
      p.add(prefix + ".ln2.g", 1, d);
      p.add(prefix + ".ln2.b", 1, d);
      p.add(prefix + ".mlp.w1", d, hidden);
      p.add(prefix + ".mlp.b1", 1, hidden);
      p.add(prefix + ".mlp.w2", hidden, d);
      p.add(prefix + ".mlp.b2", 1, d);
    };
    for (long b = 0; b < config.num_blocks; ++b) block("block" + std::to_string(b));
    p.add("cross.ln.g", 1, d);
    p.add("cross.ln.b", 1, d);
    p.add("cross.wq", config.embed_dim, d);
    p.add("cross.wk", d, d);
    p.add("cross.wv", d, d);
    block("decoder");
    p.add("out.ln.g", 1, d);
    p.add("out.ln.b", 1, d);
    p.add("out.conv", 3 * d, l);
    return p;
  }

 private:
  std::map<std::string, std::size_t> lookup_;
};

/// Closed-form parameter count for a configuration.
inline std::size_t parameter_count(const ModelConfig& c) {
  const long d = c.model_dim, l = c.latent_dim, h = c.mlp_ratio * d;
  const long block = 4 * d + 4 * d * d + d * h + h + h * d + d;
  return static_cast<std::size_t>(2 * l * d + c.timestep_embed_dim * d + d + (c.num_blocks + 1) * block + 2 * d +
                                  c.embed_dim * d + 2 * d * d + 2 * d + 3 * d * l);
}

/// Seeded initialization; the output convolution starts at zero so an untrained
/// model predicts zero noise.
template <typename Real>
ModelParameters<Real> init_parameters(const ModelConfig& config, std::uint64_t seed) {
  auto p = ModelParameters<Real>::layout(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < p.arrays.size(); ++i) {
    const std::string& name = p.names[i];
    auto& a = p.arrays[i];
    const std::string leaf = name.substr(name.rfind('.') + 1);
    const bool is_gain = leaf == "g";
    const bool is_bias = leaf == "b" || leaf == "b1" || leaf == "b2";
    if (is_gain) {
      a.setOnes();
    } else if (is_bias || name == "out.conv") {
      a.setZero();
    } else {
      const double std = 1.0 / std::sqrt(static_cast<double>(a.rows()));
      for (long r = 0; r < a.rows(); ++r)
        for (long c = 0; c < a.cols(); ++c) a(r, c) = static_cast<Real>(std * n(rng));
    }
  }
  return p;
}

namespace fredit {

/// A stacked batch of network inputs. Row blocks given by `segments` belong to one sample.
template <typename Real>
struct Batch {
  nn::Mat<Real> z_bt;   // tokens x latent_dim
  nn::Mat<Real> z_a;    // tokens x latent_dim (zero where the condition is absent)
  nn::Mat<Real> embed;  // tokens x embed_dim
  std::vector<int> timesteps;
  nn::Segments segments;

  /// Appends one sample (all three inputs must have the same token count).
  template <typename A, typename B, typename C>
  void append(const A& zbt, const B& za, const C& e, int t) {
    detail::require(zbt.rows() == za.rows() && zbt.rows() == e.rows() && zbt.cols() == za.cols(),
                    "fredit::Batch: z_bt, z_a and E must be token-aligned");
    const long n = z_bt.rows(), add = zbt.rows();
    if (n == 0) {
      z_bt.resize(0, zbt.cols());
      z_a.resize(0, za.cols());
      embed.resize(0, e.cols());
    }
    detail::require(z_bt.cols() == zbt.cols() && embed.cols() == e.cols(), "fredit::Batch: width mismatch");
    z_bt.conservativeResize(n + add, Eigen::NoChange);
    z_a.conservativeResize(n + add, Eigen::NoChange);
    embed.conservativeResize(n + add, Eigen::NoChange);
    z_bt.bottomRows(add) = zbt.template cast<Real>();
    z_a.bottomRows(add) = za.template cast<Real>();
    embed.bottomRows(add) = e.template cast<Real>();
    timesteps.push_back(t);
    segments.offsets.push_back(n + add);
  }

  long samples() const { return segments.count(); }
};

template <typename Real>
struct BlockCache {
  nn::LayerNormCache<Real> ln1, ln2;
  nn::AttentionCache<Real> attn;
  nn::Mat<Real> ln2_out, pre_act, act_tanh, act;
};

template <typename Real>
struct ForwardCache {
  nn::Mat<Real> input;  // [z_bt | z_a]
  std::vector<nn::RowVec<Real>> time_features;
  std::vector<BlockCache<Real>> blocks;
  nn::LayerNormCache<Real> cross_ln;
  nn::AttentionCache<Real> cross;
  BlockCache<Real> decoder;
  nn::LayerNormCache<Real> out_ln;
  nn::Mat<Real> out_ln_out;
};

namespace detail {

template <typename Real>
nn::AttentionWeights<Real> block_attention(const ModelParameters<Real>& p, const std::string& prefix) {
  return {&p[prefix + ".attn.wq"], &p[prefix + ".attn.wk"], &p[prefix + ".attn.wv"], &p[prefix + ".attn.wo"]};
}

template <typename Real>
nn::Mat<Real> block_forward(const ModelParameters<Real>& p, const std::string& prefix, const nn::Mat<Real>& x,
                            const nn::Segments& seg, BlockCache<Real>* c) {
  using Mat = nn::Mat<Real>;
  Mat a = nn::layer_norm<Real>(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"], c ? &c->ln1 : nullptr);
  Mat h = x + nn::attention<Real>(a, a, seg, p.config.num_heads, block_attention(p, prefix), c ? &c->attn : nullptr);
  Mat b = nn::layer_norm<Real>(h, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"], c ? &c->ln2 : nullptr);
  Mat u = b * p[prefix + ".mlp.w1"];
  u.rowwise() += p[prefix + ".mlp.b1"].row(0);
  Mat th;
  Mat g = nn::gelu<Real>(u, c ? &th : nullptr);
  Mat y = h + g * p[prefix + ".mlp.w2"];
  y.rowwise() += p[prefix + ".mlp.b2"].row(0);
  if (c) {
    c->ln2_out = std::move(b);
    c->pre_act = std::move(u);
    c->act_tanh = std::move(th);
    c->act = std::move(g);
  }
  return y;
}

template <typename Real>
nn::Mat<Real> block_backward(const ModelParameters<Real>& p, ModelParameters<Real>& g, const std::string& prefix,
                             const nn::Mat<Real>& dy, const nn::Segments& seg, const BlockCache<Real>& c) {
  using Mat = nn::Mat<Real>;
  g[prefix + ".mlp.b2"].row(0) += dy.colwise().sum();
  g[prefix + ".mlp.w2"].noalias() += c.act.transpose() * dy;
  Mat dact = dy * p[prefix + ".mlp.w2"].transpose();
  Mat du = nn::gelu_backward<Real>(dact, c.pre_act, c.act_tanh);
  g[prefix + ".mlp.b1"].row(0) += du.colwise().sum();
  g[prefix + ".mlp.w1"].noalias() += c.ln2_out.transpose() * du;
  Mat db = du * p[prefix + ".mlp.w1"].transpose();
  Mat dh = dy + nn::layer_norm_backward<Real>(db, p[prefix + ".ln2.g"], c.ln2, g[prefix + ".ln2.g"], g[prefix + ".ln2.b"]);
  nn::AttentionGrads<Real> ag{&g[prefix + ".attn.wq"], &g[prefix + ".attn.wk"], &g[prefix + ".attn.wv"],
                              &g[prefix + ".attn.wo"]};
  auto [dq, dkv] = nn::attention_backward<Real>(dh, seg, p.config.num_heads, block_attention(p, prefix), c.attn, ag);
  Mat da = dq + dkv;
  return dh + nn::layer_norm_backward<Real>(da, p[prefix + ".ln1.g"], c.ln1, g[prefix + ".ln1.g"], g[prefix + ".ln1.b"]);
}

}  // namespace detail

/// Noise prediction for every sample of the batch (tokens x latent_dim).
template <typename Real>
nn::Mat<Real> forward(const ModelParameters<Real>& p, const Batch<Real>& batch, ForwardCache<Real>* cache = nullptr) {
  using Mat = nn::Mat<Real>;
  const ModelConfig& cfg = p.config;
  const auto& seg = batch.segments;
  nwb::detail::require(batch.z_bt.cols() == cfg.latent_dim && batch.z_a.cols() == cfg.latent_dim,
                       "fredit::forward: latent width does not match the model");
  nwb::detail::require(batch.embed.cols() == cfg.embed_dim, "fredit::forward: embedding width does not match the model");
  nwb::detail::require(batch.z_bt.rows() == seg.rows() && batch.z_a.rows() == seg.rows() &&
                           batch.embed.rows() == seg.rows(),
                       "fredit::forward: inputs are not token-aligned");

  Mat input(seg.rows(), 2 * cfg.latent_dim);
  input << batch.z_bt, batch.z_a;
  Mat h = input * p["reduce.w"];
  std::vector<nn::RowVec<Real>> tfeat;
  for (long s = 0; s < seg.count(); ++s) {
    auto f = nn::timestep_features<Real>(batch.timesteps[static_cast<std::size_t>(s)], cfg.timestep_embed_dim);
    nn::RowVec<Real> te = f * p["time.w"] + p["time.b"].row(0);
    h.middleRows(seg.begin(s), seg.length(s)).rowwise() += te;
    tfeat.push_back(std::move(f));
  }
  if (cache) {
    cache->input = std::move(input);
    cache->time_features = std::move(tfeat);
    cache->blocks.resize(static_cast<std::size_t>(cfg.num_blocks));
  }
  for (long b = 0; b < cfg.num_blocks; ++b) {
    h = detail::block_forward(p, "block" + std::to_string(b), h, seg,
                              cache ? &cache->blocks[static_cast<std::size_t>(b)] : nullptr);
  }
  Mat kv = nn::layer_norm<Real>(h, p["cross.ln.g"], p["cross.ln.b"], cache ? &cache->cross_ln : nullptr);
  nn::AttentionWeights<Real> cw{&p["cross.wq"], &p["cross.wk"], &p["cross.wv"], nullptr};
  Mat zd = h + nn::attention<Real>(batch.embed, kv, seg, cfg.num_heads, cw, cache ? &cache->cross : nullptr);
  Mat y = detail::block_forward(p, "decoder", zd, seg, cache ? &cache->decoder : nullptr);
  Mat yo = nn::layer_norm<Real>(y, p["out.ln.g"], p["out.ln.b"], cache ? &cache->out_ln : nullptr);
  Mat out = nn::token_conv3<Real>(yo, seg, p["out.conv"]);
  if (cache) cache->out_ln_out = std::move(yo);
  return out;
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
template <typename Real>
void backward(const ModelParameters<Real>& p, const Batch<Real>& batch, const ForwardCache<Real>& c,
              const nn::Mat<Real>& dout, ModelParameters<Real>& grads) {
  using Mat = nn::Mat<Real>;
  const ModelConfig& cfg = p.config;
  const auto& seg = batch.segments;
  Mat dyo = nn::token_conv3_backward<Real>(dout, c.out_ln_out, seg, p["out.conv"], grads["out.conv"]);
  Mat dy = nn::layer_norm_backward<Real>(dyo, p["out.ln.g"], c.out_ln, grads["out.ln.g"], grads["out.ln.b"]);
  Mat dzd = detail::block_backward(p, grads, "decoder", dy, seg, c.decoder);
  nn::AttentionWeights<Real> cw{&p["cross.wq"], &p["cross.wk"], &p["cross.wv"], nullptr};
  nn::AttentionGrads<Real> cg{&grads["cross.wq"], &grads["cross.wk"], &grads["cross.wv"], nullptr};
  auto [dembed, dkv] = nn::attention_backward<Real>(dzd, seg, cfg.num_heads, cw, c.cross, cg);
  Mat dh = dzd + nn::layer_norm_backward<Real>(dkv, p["cross.ln.g"], c.cross_ln, grads["cross.ln.g"], grads["cross.ln.b"]);
  for (long b = cfg.num_blocks - 1; b >= 0; --b) {
    dh = detail::block_backward(p, grads, "block" + std::to_string(b), dh, seg, c.blocks[static_cast<std::size_t>(b)]);
  }
  for (long s = 0; s < seg.count(); ++s) {
    nn::RowVec<Real> dte = dh.middleRows(seg.begin(s), seg.length(s)).colwise().sum();
    grads["time.b"].row(0) += dte;
    grads["time.w"].noalias() += c.time_features[static_cast<std::size_t>(s)].transpose() * dte;
  }
  grads["reduce.w"].noalias() += c.input.transpose() * dh;
}

/// Mean squared error between predicted and true noise, with its parameter gradient.
template <typename Real>
Real loss_and_gradient(const ModelParameters<Real>& p, const Batch<Real>& batch, const nn::Mat<Real>& eps,
                       ModelParameters<Real>* grads) {
  ForwardCache<Real> cache;
  const nn::Mat<Real> pred = forward(p, batch, grads ? &cache : nullptr);
  nwb::detail::require(pred.rows() == eps.rows() && pred.cols() == eps.cols(), "loss: noise shape mismatch");
  const nn::Mat<Real> diff = pred - eps;
  const Real n = static_cast<Real>(diff.size());
  const Real loss = diff.squaredNorm() / n;
  if (grads) {
    const nn::Mat<Real> dout = diff * (Real(2) / n);
    backward(p, batch, cache, dout, *grads);
  }
  return loss;
}

}  // namespace fredit
}  // namespace nwb
