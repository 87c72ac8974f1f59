// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
//   acceptance <work_dir> [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nwb/channel_sim.hpp"
#include "nwb/checkpoint.hpp"
#include "nwb/dataset_io.hpp"
#include "nwb/diffusion.hpp"
#include "nwb/metrics.hpp"
#include "nwb/scenes.hpp"
#include "nwb/sensing.hpp"
#include "nwb/trainer.hpp"
#include "oracles.hpp"

using namespace nwb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const FrequencyGrid kTrainGrid{5.21e9, 312.5e3, 128};
const FrequencyGrid kNarrowGrid{5.21e9, 312.5e3, 64};
constexpr std::uint64_t kDataSeed = 7;
constexpr std::uint64_t kHeldOutSeed = 7 + 1000003;

EnvironmentFamily two_path_family() {
  EnvironmentFamily f;
  f.min_paths = f.max_paths = 2;
  return f;
}

std::vector<CsiFrame> training_frames() {
  std::vector<CsiFrame> out;
  for (std::size_t i = 0; i < 256; ++i)
    out.push_back(synthesize_csi(sample_environment(two_path_family(), kDataSeed + i), kTrainGrid, 0));
  return out;
}

// ---------------------------------------------------------------------------

Outcome channel_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> center(2.4e9, 6.0e9);
  std::uniform_int_distribution<int> size(16, 512), antenna(0, 3);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto env = sample_environment(EnvironmentFamily{}, rng);
    const FrequencyGrid g{center(rng), 312.5e3, static_cast<std::size_t>(size(rng))};
    const auto ant = static_cast<std::uint32_t>(antenna(rng));
    const auto got = synthesize_csi(env, g, ant).values;
    const auto want = oracle::brute_force_csi(env, g, ant);
    long double num = 0, den = 0;
    for (std::size_t k = 0; k < got.size(); ++k) {
      num = std::max(num, std::abs(oracle::cld(got[k].real(), got[k].imag()) - want[k]));
      den = std::max(den, std::abs(want[k]));
    }
    worst = std::max(worst, static_cast<double>(num / den));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0,
          "max relative error " + fmt("%.2e", worst) + " over 1000 environments in " + fmt("%.2f", secs) + " s"};
}

Outcome pair_consistency() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> center(2.4e9, 6.0e9);
  std::uniform_int_distribution<int> size(8, 128), kdist(2, 8);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto env = sample_environment(EnvironmentFamily{}, rng);
    const int k = kdist(rng);
    std::size_t n = static_cast<std::size_t>(size(rng));
    if (((k - 1) * n) % 2 == 1) ++n;
    const FrequencyGrid narrow{center(rng), 312.5e3, n};
    const auto [nf, wf] = synthesize_pair(env, narrow, k, 0);
    const std::size_t left = expansion_left_pad(n, k);
    for (std::size_t j = 0; j < n; ++j) {
      if (wf.values[left + j] != nf.values[j]) {
        ++mismatches;
        break;
      }
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 1000 triples differ from the narrow frame"};
}

Outcome diffusion_algebra() {
  const NoiseSchedule s;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> n(0.0, 1.0);
  const int samples = 10000;
  bool ok = true;
  double worst_sigma = 0;
  for (int t : {1, 5, 20, 50}) {
    const double z0 = 0.8;
    double sum = 0, sq = 0;
    for (int i = 0; i < samples; ++i) {
      Eigen::Matrix<double, 1, 1> z;
      z(0) = z0;
      for (int u = 1; u <= t; ++u) {
        Eigen::Matrix<double, 1, 1> e;
        e(0) = n(rng);
        z = forward_step(z, u, e, s);
      }
      sum += z(0);
      sq += z(0) * z(0);
    }
    const double mean = sum / samples, var = sq / samples - mean * mean;
    const double want_mean = std::sqrt(s.alpha_bar(t)) * z0, want_var = 1.0 - s.alpha_bar(t);
    const double mean_sigma = std::abs(mean - want_mean) / std::sqrt(want_var / samples);
    const double var_sigma = std::abs(var - want_var) / (want_var * std::sqrt(2.0 / (samples - 1)));
    worst_sigma = std::max({worst_sigma, mean_sigma, var_sigma});
    ok = ok && mean_sigma <= 3.0 && var_sigma <= 3.0;
  }

  double inv_err = 0;
  for (int t = 1; t <= s.steps(); ++t) {
    RowMatrix z0(8, 48), eps(8, 48);
    for (long i = 0; i < z0.size(); ++i) z0.data()[i] = n(rng), eps.data()[i] = n(rng);
    const RowMatrix back = estimate_z0(forward_sample(z0, t, eps, s), eps, t, s);
    inv_err = std::max(inv_err, (back - z0).cwiseAbs().maxCoeff());
  }
  ok = ok && inv_err <= 1e-12;

  double coef_err = 0;
  for (int t = 2; t <= s.steps(); ++t) {
    const double ab_prev = s.alpha_bar(t - 1), a = s.alpha(t), b = s.beta(t);
    const double precision = 1.0 / (1.0 - ab_prev) + a / b;
    const auto c = posterior_coefficients(t, s);
    coef_err = std::max({coef_err, std::abs(c.variance - 1.0 / precision),
                         std::abs(c.on_z0 - std::sqrt(ab_prev) / (1.0 - ab_prev) / precision),
                         std::abs(c.on_zt - std::sqrt(a) / b / precision)});
  }
  ok = ok && coef_err <= 1e-12;
  return {ok, "marginal within " + fmt("%.2f", worst_sigma) + " sigma, inversion error " + fmt("%.1e", inv_err) +
                  ", posterior coefficient error " + fmt("%.1e", coef_err)};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig c;
  c.latent_dim = 6;
  c.model_dim = 8;
  c.num_blocks = 2;
  c.num_heads = 2;
  c.embed_dim = 8;
  c.timestep_embed_dim = 6;
  c.mlp_ratio = 2;
  auto p = init_parameters<double>(c, 1);
  std::mt19937_64 rng(404);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& a : p.arrays)
    for (long i = 0; i < a.size(); ++i) a.data()[i] += 0.2 * n(rng);
  auto randn = [&](long r, long cols) {
    nn::Mat<double> m(r, cols);
    for (long i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  fredit::Batch<double> batch;
  batch.append(randn(5, 6), randn(5, 6), randn(5, 8), 3);
  batch.append(randn(4, 6), randn(4, 6), randn(4, 8), 40);
  const auto eps = randn(9, 6);
  auto grads = ModelParameters<double>::layout(c);
  fredit::loss_and_gradient(p, batch, eps, &grads);
  double worst = 0;
  std::string worst_name;
  for (std::size_t i = 0; i < p.arrays.size(); ++i) {
    auto& a = p.arrays[i];
    nn::Mat<double> fd(a.rows(), a.cols());
    for (long j = 0; j < a.size(); ++j) {
      const double orig = a.data()[j], h = 1e-6;
      a.data()[j] = orig + h;
      const double up = fredit::loss_and_gradient<double>(p, batch, eps, nullptr);
      a.data()[j] = orig - h;
      const double dn = fredit::loss_and_gradient<double>(p, batch, eps, nullptr);
      a.data()[j] = orig;
      fd.data()[j] = (up - dn) / (2 * h);
    }
    const double err = (fd - grads.arrays[i]).norm() / std::max({fd.norm(), grads.arrays[i].norm(), 1e-12});
    if (err > worst) worst = err, worst_name = p.names[i];
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 120.0, "worst group relative error " + fmt("%.2e", worst) + " (" + worst_name + ") over " +
                                             std::to_string(p.arrays.size()) + " groups in " + fmt("%.1f", secs) + " s"};
}

TrainConfig desk_config() { return TrainConfig::desk(); }

Outcome training_progress(const fs::path& work, const std::vector<CsiFrame>& frames) {
  auto cfg = desk_config();
  cfg.stop_at_step = 500;
  const auto t0 = std::chrono::steady_clock::now();
  TrainOptions opts;
  opts.on_step = [](long step, double loss, double lr) {
    if ((step + 1) % 100 == 0) std::cerr << "  step " << step + 1 << " loss " << loss << " lr " << lr << "\n";
  };
  const auto r = run_training(frames, ModelConfig{}, CodecSpec{}, ScheduleSpec{}, cfg, work / "train", opts);
  const double secs = seconds_since(t0);
  if (r.losses.size() < 500) return {false, "training stopped after " + std::to_string(r.losses.size()) + " steps"};
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) first += r.losses[i] / 50, last += r.losses[450 + i] / 50;
  return {last <= 0.5 * first && secs < 900.0, "first-50 mean " + fmt("%.4f", first) + ", last-50 mean " + fmt("%.4f", last) +
                                                   " (ratio " + fmt("%.3f", last / first) + ") in " + fmt("%.0f", secs) + " s"};
}

Outcome extrapolation_quality(const fs::path& work, const std::vector<CsiFrame>& frames) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_training(frames, ModelConfig{}, CodecSpec{}, ScheduleSpec{}, desk_config(), work / "train");
  if (r.losses.size() != 2000) return {false, "training ended at " + std::to_string(r.losses.size()) + " steps"};
  const Checkpoint ck = load_checkpoint(work / "train" / "checkpoint");
  const auto trained = ck.params;
  const auto fresh = init_parameters<float>(ModelConfig{}, desk_config().seed);
  const LatentCodec codec(ck.codec);
  const NoiseSchedule sched(ck.schedule);

  const auto cases = make_extrapolation_cases(two_path_family(), kNarrowGrid, {2}, 100, kHeldOutSeed);
  auto model = [&](const ModelParameters<float>& p) {
    return [&](const CsiFrame& in, int k, std::size_t i) { return extrapolate(p, codec, sched, in, k, 5000 + i).ecsi; };
  };
  Extrapolator noise = [&](const CsiFrame& in, int k, std::size_t i) {
    const auto norm = normalize(in);
    double power = 0;
    for (auto v : norm.frame.values) power += std::norm(v);
    const double sigma = std::sqrt(power / (2.0 * static_cast<double>(in.size())));
    std::mt19937_64 rng(9000 + i);
    std::normal_distribution<double> n(0.0, sigma);
    CsiFrame out;
    out.grid = expand_grid(in.grid, k);
    for (std::size_t j = 0; j < out.grid.num_subcarriers; ++j) out.values.emplace_back(n(rng), n(rng));
    const std::size_t left = expansion_left_pad(in.size(), k);
    for (std::size_t j = 0; j < in.size(); ++j) out.values[left + j] = norm.frame.values[j];
    return denormalize(out, norm.factor);
  };
  const auto ours = evaluate(cases, model(trained));
  const auto base_fresh = evaluate(cases, model(fresh));
  const auto base_noise = evaluate(cases, noise);
  const double m = ours.row(2, "mse").median, mf = base_fresh.row(2, "mse").median, mn = base_noise.row(2, "mse").median;
  const double a = ours.row(2, "acc_cir").median, af = base_fresh.row(2, "acc_cir").median,
               an = base_noise.row(2, "acc_cir").median;
  detail::write_file(work / "eval_trained.csv", ours.to_csv());
  detail::write_file(work / "eval_fresh.csv", base_fresh.to_csv());
  detail::write_file(work / "eval_noise.csv", base_noise.to_csv());
  const bool ok = m < 0.5 * mf && m < 0.5 * mn && a >= af + 0.1 && a >= an + 0.1;
  return {ok, "median MSE " + fmt("%.4f", m) + " vs fresh " + fmt("%.4f", mf) + " / noise " + fmt("%.4f", mn) +
                  "; median AccCIR " + fmt("%.3f", a) + " vs fresh " + fmt("%.3f", af) + " / noise " + fmt("%.3f", an) +
                  " (" + fmt("%.0f", seconds_since(t0)) + " s incl. training to 2000 steps)"};
}

// Both true delays are matched by distinct dominant peaks of the oracle CIR.
bool resolves_two(const CsiFrame& f, double tau1, double tau2) {
  const auto cir = cfr_to_cir(f, 4);
  const auto mag = cir.magnitudes();
  auto peaks = dominant_peaks(mag, 0.5);
  if (peaks.size() < 2) return false;
  std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
  const double p1 = cir.delay(peaks[0]), p2 = cir.delay(peaks[1]);
  const double tol = cir.tap_spacing_s;
  const bool direct = std::abs(p1 - tau1) <= tol && std::abs(p2 - tau2) <= tol;
  const bool swapped = std::abs(p1 - tau2) <= tol && std::abs(p2 - tau1) <= tol;
  return direct || swapped;
}

Outcome multipath_resolution() {
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> first(0.0, 100e-9), gap(10e-9, 60e-9), gain(0.7, 1.0),
      phase(-std::numbers::pi, std::numbers::pi);
  const double bands[] = {20e6, 40e6, 80e6, 160e6};
  int detected[4] = {0, 0, 0, 0};
  int wide_needed = 0, wide_ok = 0;
  for (int s = 0; s < 200; ++s) {
    const double t1 = first(rng), dt = gap(rng);
    MultipathEnvironment env;
    env.paths.push_back({gain(rng), phase(rng), t1, std::numbers::pi / 2});
    env.paths.push_back({gain(rng), phase(rng), t1 + dt, std::numbers::pi / 2});
    for (int b = 0; b < 4; ++b) {
      const bool ok = resolves_two(synthesize_csi(env, make_grid(5.25e9, bands[b], 312.5e3), 0), t1, t1 + dt);
      detected[b] += ok;
      if (b == 3 && dt >= 12.5e-9) {
        ++wide_needed;
        wide_ok += ok;
      }
    }
  }
  const bool monotone = detected[0] <= detected[1] && detected[1] <= detected[2] && detected[2] <= detected[3];
  std::ostringstream os;
  os << "two-peak rate 20/40/80/160 MHz = " << detected[0] / 2.0 << "% / " << detected[1] / 2.0 << "% / "
     << detected[2] / 2.0 << "% / " << detected[3] / 2.0 << "%; " << wide_ok << " of " << wide_needed
     << " scenes with gap >= 12.5 ns resolve at 160 MHz";
  return {monotone && wide_ok == wide_needed, os.str()};
}

Outcome tof_accuracy() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> tau(0.0, 150e-9), phase(-std::numbers::pi, std::numbers::pi);
  const auto grid = make_grid(5.25e9, 160e6, 312.5e3);
  int within = 0;
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    MultipathEnvironment env;
    const double t = tau(rng);
    env.paths.push_back({1.0, phase(rng), t, std::numbers::pi / 2});
    const double err = std::abs(estimate_tof(synthesize_csi(env, grid, 0)).tof_s - t);
    worst = std::max(worst, err);
    within += err <= 6.25e-9;
  }
  return {within == 100, std::to_string(within) + "/100 within 6.25 ns, worst error " + fmt("%.3f", worst * 1e9) + " ns"};
}

Outcome breathing() {
  BreathingSceneSpec spec;
  spec.seed = 909;
  const auto scene = make_breathing_scene(spec);
  const auto wide = make_grid(5.25e9, 160e6, 312.5e3), narrow = make_grid(5.25e9, 20e6, 312.5e3);
  const auto est = estimate_breathing(synthesize_series(scene.env, scene.motions, wide, 0, 100.0, 60.0));
  std::set<std::size_t> matched;
  double worst_share = 1.0;
  for (const auto& p : est.paths) {
    std::size_t good = 0;
    for (double b : p.bpm) good += std::abs(b - 15.0) <= 1.0;
    worst_share = std::min(worst_share, static_cast<double>(good) / static_cast<double>(p.bpm.size()));
    for (std::size_t s = 0; s < spec.subject_delays_s.size(); ++s)
      if (std::abs(p.delay_s - spec.subject_delays_s[s]) <= 3e-9) matched.insert(s);
  }
  std::size_t narrow_paths = 0;
  std::string narrow_note;
  try {
    narrow_paths = estimate_breathing(synthesize_series(scene.env, scene.motions, narrow, 0, 100.0, 60.0)).paths.size();
  } catch (const InvalidArgument& e) {
    narrow_note = " (" + std::string(e.what()) + ")";
  }
  const bool ok = est.paths.size() >= 3 && matched.size() == 3 && worst_share >= 0.9 && narrow_paths < 3;
  return {ok, "160 MHz: " + std::to_string(est.paths.size()) + " paths, " + std::to_string(matched.size()) +
                  "/3 subjects matched, worst in-band window share " + fmt("%.1f", 100 * worst_share) + "%; 20 MHz: " +
                  std::to_string(narrow_paths) + " paths" + narrow_note};
}

std::string files_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + detail::read_file(f);
  return std::to_string(content_hash(all));
}

Outcome reproducibility(const fs::path& work) {
  std::vector<std::string> failures;
  auto check = [&](const std::string& stage, const std::string& a, const std::string& b) {
    if (content_hash(a) != content_hash(b)) failures.push_back(stage);
  };

  auto dataset = [] {
    std::vector<DatasetRecord> recs;
    for (const auto& f : training_frames()) recs.push_back(make_record(f, "train"));
    return recs;
  };
  const auto d1 = dataset(), d2 = dataset();
  check("simulate", encode_dataset(d1), encode_dataset(d2));

  auto train = [&](const std::string& name) {
    auto cfg = desk_config();
    cfg.stop_at_step = 8;
    std::vector<CsiFrame> frames;
    for (const auto& r : d1) frames.push_back(r.frame);
    fs::remove_all(work / name);
    run_training(frames, ModelConfig{}, CodecSpec{}, ScheduleSpec{}, cfg, work / name);
    return files_digest(work / name);
  };
  check("train", train("repro_a"), train("repro_b"));

  const Checkpoint ck = load_checkpoint(work / "repro_a" / "checkpoint");
  const LatentCodec codec(ck.codec);
  const NoiseSchedule sched(ck.schedule);
  const auto cases = make_extrapolation_cases(two_path_family(), kNarrowGrid, {2}, 5, kHeldOutSeed);
  auto extrapolated = [&] {
    std::vector<DatasetRecord> recs;
    for (std::size_t i = 0; i < cases.size(); ++i)
      recs.push_back(make_record(extrapolate(ck.params, codec, sched, cases[i].input, 2, i).ecsi, "ecsi"));
    return encode_dataset(recs);
  };
  check("extrapolate", extrapolated(), extrapolated());

  auto eval = [&] {
    return evaluate(cases, [&](const CsiFrame& in, int k, std::size_t i) {
             return extrapolate(ck.params, codec, sched, in, k, i).ecsi;
           }).to_csv();
  };
  check("eval", eval(), eval());

  BreathingSceneSpec spec;
  const auto scene = make_breathing_scene(spec);
  auto sensing = [&] {
    const auto series = synthesize_series(scene.env, scene.motions, make_grid(5.25e9, 160e6, 312.5e3), 0, 100.0, 20.0);
    nlohmann::json j = estimate_breathing(series).to_json();
    j["tof_s"] = estimate_tof(series.front()).tof_s;
    return j.dump();
  };
  check("sensing", sensing(), sensing());

  // Lossless round trips.
  if (encode_dataset(decode_dataset(encode_dataset(d1))) != encode_dataset(d1)) failures.push_back("dataset binary round trip");
  if (encode_dataset(decode_dataset_jsonl(encode_dataset_jsonl(d1))) != encode_dataset(d1))
    failures.push_back("dataset jsonl round trip");
  fs::remove_all(work / "repro_copy");
  fs::remove_all(work / "repro_copy2");
  save_checkpoint(work / "repro_copy", ck);
  save_checkpoint(work / "repro_copy2", load_checkpoint(work / "repro_copy"));
  if (files_digest(work / "repro_copy") != files_digest(work / "repro_copy2"))
    failures.push_back("checkpoint round trip");

  std::string detail = "stages simulate, train, extrapolate, eval, sensing; dataset and checkpoint round trips";
  if (!failures.empty()) {
    detail = "mismatch in:";
    for (const auto& f : failures) detail += " " + f;
  }
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "nwb_acceptance";
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  fs::remove_all(work);
  fs::create_directories(work);
  auto wanted = [&](int n) { return only.empty() || only.count(n) != 0; };

  const auto frames = training_frames();
  int failed = 0;
  auto run = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "CRITERION " << n << " " << (o.pass ? "PASS" : "FAIL") << " [" << name << "] " << o.detail << std::endl;
  };
  run(1, "channel oracle", channel_oracle);
  run(2, "narrow/wide consistency", pair_consistency);
  run(3, "diffusion algebra", diffusion_algebra);
  run(4, "gradient check", gradient_check);
  run(5, "training progress", [&] { return training_progress(work, frames); });
  run(6, "extrapolation vs baselines", [&] { return extrapolation_quality(work, frames); });
  run(7, "multipath resolution", multipath_resolution);
  run(8, "time of flight", tof_accuracy);
  run(9, "breathing", breathing);
  run(10, "reproducibility", [&] { return reproducibility(work); });
  return failed == 0 ? 0 : 1;
}
