// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Self-labeled training loop: random sub-bands of each frame condition the
// denoising of the whole frame's latent.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nwb/checkpoint.hpp"
#include "nwb/csi_data.hpp"
#include "nwb/diffusion.hpp"
#include "nwb/error.hpp"
#include "nwb/fredit_net.hpp"
#include "nwb/latent_codec.hpp"

namespace nwb {

struct TrainConfig {
  long epochs = 100;
  long total_steps = 20000;
  long batch_size = 1024;
  long subband_augment = 4;
  double learning_rate = 0.02;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  long warmup_epochs = 10;
  double min_lr = 0.0;
  std::uint64_t seed = 0;
  /// Write a checkpoint every this many epochs (and always at the end).
  long checkpoint_every = 1;
  /// Stop once this many steps are done (0 = run the full schedule).
  long stop_at_step = 0;

  static TrainConfig full() { return {}; }

  static TrainConfig desk() {
    TrainConfig c;
    c.epochs = 500;
    c.total_steps = 2000;
    c.batch_size = 64;
    c.learning_rate = 1e-3;
    return c;
  }

  void validate() const {
    detail::require(epochs >= 1 && total_steps >= 1 && batch_size >= 1, "TrainConfig: epochs, steps, batch must be >= 1");
    detail::require(subband_augment >= 1, "TrainConfig: subband_augment must be >= 1");
    detail::require(learning_rate >= 0.0 && min_lr >= 0.0 && weight_decay >= 0.0, "TrainConfig: negative rate");
    detail::require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "TrainConfig: betas must lie in [0, 1)");
    detail::require(warmup_epochs >= 0 && checkpoint_every >= 1 && stop_at_step >= 0, "TrainConfig: bad epoch counts");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline long steps_per_epoch(std::size_t dataset_size, const TrainConfig& c) {
  return static_cast<long>((dataset_size + static_cast<std::size_t>(c.batch_size) - 1) /
                           static_cast<std::size_t>(c.batch_size));
}

/// Number of optimizer steps of the whole schedule (the step cap wins over epochs).
inline long schedule_steps(const TrainConfig& c, long per_epoch) { return std::min(c.total_steps, c.epochs * per_epoch); }

/// Linear warmup from 0, then cosine decay to min_lr at the end of the schedule.
inline double lr_at(long step, const TrainConfig& c, long per_epoch = 1) {
  const long total = schedule_steps(c, per_epoch);
  const long warmup = std::min(c.warmup_epochs * per_epoch, total);
  if (step < warmup) return c.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return c.min_lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return c.min_lr + 0.5 * (c.learning_rate - c.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamState {
  std::vector<nn::Mat<float>> m, v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ModelParameters<float>& p) {
    AdamState s;
    for (const auto& a : p.arrays) {
      s.m.push_back(nn::Mat<float>::Zero(a.rows(), a.cols()));
      s.v.push_back(nn::Mat<float>::Zero(a.rows(), a.cols()));
    }
    return s;
  }
};

/// Decoupled weight-decay Adam update.
inline void adamw_update(ModelParameters<float>& p, const ModelParameters<float>& g, AdamState& s, double lr,
                         const TrainConfig& c) {
  ++s.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  const float b1 = static_cast<float>(c.beta1), b2 = static_cast<float>(c.beta2);
  const float step_size = static_cast<float>(lr / bc1), inv_bc2 = static_cast<float>(1.0 / bc2);
  const float eps = static_cast<float>(c.adam_eps), decay = static_cast<float>(lr * c.weight_decay);
  for (std::size_t i = 0; i < p.arrays.size(); ++i) {
    auto& m = s.m[i];
    auto& v = s.v[i];
    const auto& gi = g.arrays[i];
    m = b1 * m + (1.0f - b1) * gi;
    v = b2 * v + (1.0f - b2) * gi.cwiseProduct(gi);
    auto& w = p.arrays[i];
    w.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps) + decay * w.array();
  }
}

/// Inputs and target noise for one optimizer step.
struct TrainingBatch {
  fredit::Batch<float> batch;
  nn::Mat<float> eps;
};

/// Assembles `subband_augment` (condition, target) pairs per frame. Frames are
/// normalized here; each pair shares the frame's timestep and latent but draws
/// its own sub-band and noise.
inline TrainingBatch make_training_batch(const std::vector<const CsiFrame*>& frames, const LatentCodec& codec,
                                         const NoiseSchedule& sched, long subband_augment, long embed_dim,
                                         std::mt19937_64& rng) {
  detail::require(!frames.empty(), "train_step: empty batch");
  std::uniform_int_distribution<int> tdist(1, sched.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LatentTensor> targets, conds_z;
  std::vector<RowMatrix> conds_e;
  std::vector<int> ts;
  long rows = 0;
  for (const CsiFrame* f : frames) {
    const CsiFrame frame = normalize(*f).frame;
    const LatentTensor zb = encode_frame(codec, frame);
    const int t = tdist(rng);
    for (long a = 0; a < subband_augment; ++a) {
      const SubbandSelection sel = sample_subband(frame.size(), rng);
      Conditioning c = make_conditioning(codec, frame.grid, extract_subband(frame, sel), sel.start, embed_dim);
      targets.push_back(zb);
      conds_z.push_back(std::move(c.z_a));
      conds_e.push_back(std::move(c.embed));
      ts.push_back(t);
      rows += zb.tokens();
    }
  }
  const long dim = codec.latent_dim();
  TrainingBatch out;
  auto& b = out.batch;
  b.z_bt.resize(rows, dim);
  b.z_a.resize(rows, dim);
  b.embed.resize(rows, embed_dim);
  out.eps.resize(rows, dim);
  long off = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const long n = targets[i].tokens();
    RowMatrix eps(n, dim);
    for (long r = 0; r < n; ++r)
      for (long c = 0; c < dim; ++c) eps(r, c) = normal(rng);
    b.z_bt.middleRows(off, n) = forward_sample(targets[i].values, ts[i], eps, sched).cast<float>();
    b.z_a.middleRows(off, n) = conds_z[i].values.cast<float>();
    b.embed.middleRows(off, n) = conds_e[i].cast<float>();
    out.eps.middleRows(off, n) = eps.cast<float>();
    b.timesteps.push_back(ts[i]);
    off += n;
    b.segments.offsets.push_back(off);
  }
  return out;
}

inline std::mt19937_64 step_rng(std::uint64_t seed, std::int64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32)};
  return std::mt19937_64(seq);
}

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
};

/// One optimizer step on `frames` at learning rate `lr`; randomness comes only from `seed`.
inline StepResult train_step(ModelParameters<float>& params, AdamState& opt, const std::vector<const CsiFrame*>& frames,
                             const LatentCodec& codec, const NoiseSchedule& sched, const TrainConfig& cfg, double lr,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const TrainingBatch tb =
      make_training_batch(frames, codec, sched, cfg.subband_augment, params.config.embed_dim, rng);
  ModelParameters<float> grads = ModelParameters<float>::layout(params.config);
  const float loss = fredit::loss_and_gradient(params, tb.batch, tb.eps, &grads);
  if (!std::isfinite(loss)) {
    throw NumericError("trainer: non-finite loss at step " + std::to_string(opt.step) + " (lr " + std::to_string(lr) +
                       ")");
  }
  adamw_update(params, grads, opt, lr, cfg);
  return {static_cast<double>(loss), lr};
}

struct TrainReport {
  std::vector<double> losses;
  std::vector<double> learning_rates;
  double wall_clock_s = 0.0;
  std::filesystem::path checkpoint;
  long steps_per_epoch = 0;

  nlohmann::json to_json() const {
    return {{"steps", losses.size()},
            {"steps_per_epoch", steps_per_epoch},
            {"loss", losses},
            {"learning_rate", learning_rates}};
  }
};

struct TrainOptions {
  bool resume = true;
  /// Called after every step with (step index, loss, lr).
  std::function<void(long, double, double)> on_step;
};

/// Frame indices of the batch for `step`: a fresh seeded permutation each epoch.
inline std::vector<std::size_t> batch_indices(std::size_t dataset_size, long step, const TrainConfig& cfg) {
  const long per_epoch = steps_per_epoch(dataset_size, cfg);
  const long epoch = step / per_epoch, slot = step % per_epoch;
  std::vector<std::size_t> perm(dataset_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x7065726du};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t begin = static_cast<std::size_t>(slot * cfg.batch_size);
  const std::size_t end = std::min(dataset_size, begin + static_cast<std::size_t>(cfg.batch_size));
  return {perm.begin() + static_cast<std::ptrdiff_t>(begin), perm.begin() + static_cast<std::ptrdiff_t>(end)};
}

/// Trains on `frames`, checkpointing into out_dir/checkpoint and writing out_dir/report.json.
inline TrainReport run_training(const std::vector<CsiFrame>& frames, const ModelConfig& model, const CodecSpec& codec_spec,
                                const ScheduleSpec& schedule_spec, const TrainConfig& cfg,
                                const std::filesystem::path& out_dir, const TrainOptions& opts = {}) {
  cfg.validate();
  detail::require(!frames.empty(), "run_training: empty dataset");
  const LatentCodec codec(codec_spec);
  detail::require(model.latent_dim == codec.latent_dim(), "run_training: model latent_dim must match the codec");
  const NoiseSchedule sched(schedule_spec);
  const auto ck_dir = out_dir / "checkpoint";
  const auto history_path = ck_dir / "history.json";

  ModelParameters<float> params;
  AdamState opt;
  TrainReport report;
  report.steps_per_epoch = steps_per_epoch(frames.size(), cfg);
  report.checkpoint = ck_dir;

  if (opts.resume && has_checkpoint(ck_dir)) {
    Checkpoint ck = load_checkpoint(ck_dir);
    detail::require(ck.params.config == model && ck.codec == codec_spec && ck.schedule == schedule_spec,
                    "run_training: existing checkpoint was written with a different configuration");
    params = std::move(ck.params);
    if (ck.adam_m.empty()) {
      opt = AdamState::zeros_like(params);
    } else {
      opt.m = std::move(ck.adam_m);
      opt.v = std::move(ck.adam_v);
    }
    opt.step = ck.step;
    const auto history = nlohmann::json::parse(detail::read_file(history_path));
    report.losses = history.at("loss").get<std::vector<double>>();
    report.learning_rates = history.at("learning_rate").get<std::vector<double>>();
    detail::require(static_cast<std::int64_t>(report.losses.size()) == ck.step,
                    "run_training: checkpoint history does not match its step count");
  } else {
    params = init_parameters<float>(model, cfg.seed);
    opt = AdamState::zeros_like(params);
  }

  auto save = [&]() {
    Checkpoint ck{params, codec_spec, schedule_spec, opt.step, opt.m, opt.v};
    save_checkpoint(ck_dir, ck);
    nlohmann::json h{{"loss", report.losses}, {"learning_rate", report.learning_rates}};
    detail::write_file(history_path, h.dump() + "\n");
  };

  const long per_epoch = report.steps_per_epoch;
  long last = schedule_steps(cfg, per_epoch);
  if (cfg.stop_at_step > 0) last = std::min(last, cfg.stop_at_step);
  const auto start = std::chrono::steady_clock::now();
  std::vector<const CsiFrame*> batch;
  for (long step = opt.step; step < last; ++step) {
    batch.clear();
    for (std::size_t i : batch_indices(frames.size(), step, cfg)) batch.push_back(&frames[i]);
    const double lr = lr_at(step, cfg, per_epoch);
    const auto r = train_step(params, opt, batch, codec, sched, cfg, lr, step_rng(cfg.seed, step)());
    report.losses.push_back(r.loss);
    report.learning_rates.push_back(lr);
    if (opts.on_step) opts.on_step(step, r.loss, lr);
    const bool epoch_end = (step + 1) % per_epoch == 0;
    if (epoch_end && ((step + 1) / per_epoch) % cfg.checkpoint_every == 0) save();
  }
  save();
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  detail::write_file(out_dir / "report.json", report.to_json().dump(2) + "\n");
  return report;
}

}  // namespace nwb
