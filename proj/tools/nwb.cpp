// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// nwb: simulate -> make-dataset -> train -> extrapolate -> eval, plus tof, breath and config.

#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "nwb/checkpoint.hpp"
#include "nwb/dataset_io.hpp"
#include "nwb/diffusion.hpp"
#include "nwb/metrics.hpp"
#include "nwb/scenes.hpp"
#include "nwb/sensing.hpp"
#include "nwb/trainer.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json default_config() {
  const auto desk = nwb::TrainConfig::desk();
  return {
      {"simulation",
       {{"scene", "random"},
        {"count", 256},
        {"seed", 1},
        {"center_mhz", 5210.0},
        {"bandwidth_mhz", 40.0},
        {"spacing_khz", 312.5},
        {"min_paths", 2},
        {"max_paths", 2},
        {"min_delay_ns", 0.0},
        {"max_delay_ns", 200.0},
        {"min_gain", 0.1},
        {"max_gain", 1.0},
        {"snr_db", 0.0},
        {"noise", false},
        {"duration_s", 60.0},
        {"sample_rate_hz", 100.0},
        {"rate_bpm", 15.0},
        {"subject_delays_ns", {35.0, 60.0, 85.0}},
        {"subject_gains", {0.5, 0.45, 0.4}}}},
      {"data", {{"train_count", 256}, {"test_count", 100}, {"seed", 7}, {"train_k", 2}}},
      {"model",
       {{"codec", "patchify"},
        {"patch", 4},
        {"codec_seed", 0},
        {"cols", 4},
        {"model_dim", 128},
        {"num_blocks", 4},
        {"num_heads", 4},
        {"embed_dim", 64},
        {"timestep_embed_dim", 64},
        {"mlp_ratio", 4}}},
      {"schedule", {{"steps", 50}, {"beta_start", 1e-4}, {"beta_end", 0.02}, {"reference_steps", 1000}}},
      {"training",
       {{"preset", "desk"},
        {"epochs", desk.epochs},
        {"total_steps", desk.total_steps},
        {"batch_size", desk.batch_size},
        {"subband_augment", desk.subband_augment},
        {"learning_rate", desk.learning_rate},
        {"weight_decay", desk.weight_decay},
        {"beta1", desk.beta1},
        {"beta2", desk.beta2},
        {"warmup_epochs", desk.warmup_epochs},
        {"min_lr", desk.min_lr},
        {"seed", desk.seed},
        {"checkpoint_every", desk.checkpoint_every},
        {"stop_at_step", desk.stop_at_step}}},
      {"evaluation", {{"k", {2}}, {"seed", 11}, {"clamp", true}, {"z0_clip", 1.0}, {"zero_pad_factor", 4}}},
      {"sensing",
       {{"rho", 0.5},
        {"zero_pad_factor", 4},
        {"window_s", 8.0},
        {"hop_s", 1.0},
        {"sample_rate_hz", 100.0},
        {"subjects", 0},
        {"peak_ratio", 0.1},
        {"persistence", 0.8}}},
  };
}

struct ConfigError : nwb::InvalidArgument {
  explicit ConfigError(const std::string& what) : nwb::InvalidArgument(what) {}
  const char* kind() const noexcept override { return "config"; }
};

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
  return a.type() == b.type();
}

// Merges `user` into `base`, rejecting unknown keys and mistyped values.
void merge_checked(json& base, const json& user, const std::string& path, std::set<std::string>& set_keys) {
  if (!user.is_object()) throw ConfigError("config: '" + (path.empty() ? "/" : path) + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string p = path + "/" + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + p + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), p, set_keys);
      continue;
    }
    if (!same_kind(slot, it.value())) {
      throw ConfigError("config: '" + p + "' expects " + std::string(slot.type_name()) + ", got " +
                        it.value().type_name());
    }
    if (slot.is_array()) {
      for (const auto& e : it.value()) {
        if (!slot.empty() && !same_kind(slot.front(), e)) throw ConfigError("config: bad element type in '" + p + "'");
      }
    }
    slot = it.value();
    set_keys.insert(p);
  }
}

// A command-line flag mirroring one config key.
struct Binding {
  std::string pointer;
  std::string value;
  CLI::Option* option = nullptr;
};

class Config {
 public:
  json doc = default_config();
  std::set<std::string> explicit_keys;

  void load(const std::string& path) {
    json user;
    try {
      user = json::parse(nwb::detail::read_file(path));
    } catch (const json::parse_error& e) {
      throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    merge_checked(doc, user, "", explicit_keys);
  }

  void apply(const Binding& b) {
    const json::json_pointer ptr(b.pointer);
    json& slot = doc.at(ptr);
    try {
      if (slot.is_boolean()) {
        if (b.value != "true" && b.value != "false") throw std::invalid_argument("expected true/false");
        slot = b.value == "true";
      } else if (slot.is_number_integer()) {
        slot = std::stoll(b.value);
      } else if (slot.is_number()) {
        slot = std::stod(b.value);
      } else if (slot.is_array()) {
        json arr = json::array();
        std::stringstream ss(b.value);
        std::string item;
        const bool ints = !slot.empty() && slot.front().is_number_integer();
        while (std::getline(ss, item, ',')) {
          if (ints) {
            arr.push_back(std::stoll(item));
          } else {
            arr.push_back(std::stod(item));
          }
        }
        slot = arr;
      } else {
        slot = b.value;
      }
    } catch (const std::logic_error& e) {
      throw ConfigError("flag for '" + b.pointer + "': cannot parse '" + b.value + "' (" + e.what() + ")");
    }
    explicit_keys.insert(b.pointer);
  }

  const json& at(const std::string& pointer) const { return doc.at(json::json_pointer(pointer)); }
  template <typename T>
  T get(const std::string& pointer) const {
    return at(pointer).get<T>();
  }
};

struct Cli {
  Config config;
  std::string config_path;
  int threads = 1;
  bool plots = false;
  std::deque<Binding> bindings;  // stable addresses for CLI11

  void bind(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    bindings.push_back({pointer, "", nullptr});
    bindings.back().option = app->add_option(flag, bindings.back().value, help + " [config " + pointer + "]");
  }

  void finalize() {
    if (!config_path.empty()) config.load(config_path);
    for (const auto& b : bindings)
      if (b.option && b.option->count() > 0) config.apply(b);
    Eigen::setNbThreads(threads);
  }
};

nwb::FrequencyGrid simulation_grid(const Config& c) {
  return nwb::make_grid(c.get<double>("/simulation/center_mhz") * 1e6, c.get<double>("/simulation/bandwidth_mhz") * 1e6,
                        c.get<double>("/simulation/spacing_khz") * 1e3);
}

nwb::EnvironmentFamily family(const Config& c) {
  nwb::EnvironmentFamily f;
  f.min_paths = c.get<int>("/simulation/min_paths");
  f.max_paths = c.get<int>("/simulation/max_paths");
  f.min_delay_s = c.get<double>("/simulation/min_delay_ns") * 1e-9;
  f.max_delay_s = c.get<double>("/simulation/max_delay_ns") * 1e-9;
  f.min_gain = c.get<double>("/simulation/min_gain");
  f.max_gain = c.get<double>("/simulation/max_gain");
  return f;
}

nwb::ModelConfig model_config(const Config& c, const nwb::LatentCodec& codec) {
  nwb::ModelConfig m;
  m.latent_dim = codec.latent_dim();
  m.model_dim = c.get<long>("/model/model_dim");
  m.num_blocks = c.get<long>("/model/num_blocks");
  m.num_heads = c.get<long>("/model/num_heads");
  m.embed_dim = c.get<long>("/model/embed_dim");
  m.timestep_embed_dim = c.get<long>("/model/timestep_embed_dim");
  m.mlp_ratio = c.get<long>("/model/mlp_ratio");
  return m;
}

nwb::CodecSpec codec_spec(const Config& c) {
  nwb::CodecSpec s;
  s.type = nwb::codec_type_from_string(c.get<std::string>("/model/codec"));
  s.patch = c.get<std::size_t>("/model/patch");
  s.seed = c.get<std::uint64_t>("/model/codec_seed");
  s.cols = c.get<std::size_t>("/model/cols");
  return s;
}

nwb::ScheduleSpec schedule_spec(const Config& c) {
  nwb::ScheduleSpec s;
  s.steps = c.get<int>("/schedule/steps");
  s.beta_start = c.get<double>("/schedule/beta_start");
  s.beta_end = c.get<double>("/schedule/beta_end");
  s.reference_steps = c.get<int>("/schedule/reference_steps");
  return s;
}

nwb::TrainConfig train_config(const Config& c) {
  const std::string preset = c.get<std::string>("/training/preset");
  nwb::TrainConfig t;
  if (preset == "desk") {
    t = nwb::TrainConfig::desk();
  } else if (preset == "full") {
    t = nwb::TrainConfig::full();
  } else {
    throw ConfigError("config: /training/preset must be 'desk' or 'full'");
  }
  auto pick = [&](const char* key, auto& field) {
    const std::string p = std::string("/training/") + key;
    if (c.explicit_keys.count(p)) field = c.get<std::decay_t<decltype(field)>>(p);
  };
  pick("epochs", t.epochs);
  pick("total_steps", t.total_steps);
  pick("batch_size", t.batch_size);
  pick("subband_augment", t.subband_augment);
  pick("learning_rate", t.learning_rate);
  pick("weight_decay", t.weight_decay);
  pick("beta1", t.beta1);
  pick("beta2", t.beta2);
  pick("warmup_epochs", t.warmup_epochs);
  pick("min_lr", t.min_lr);
  pick("seed", t.seed);
  pick("checkpoint_every", t.checkpoint_every);
  pick("stop_at_step", t.stop_at_step);
  return t;
}

std::vector<nwb::DatasetRecord> frames_to_records(const std::vector<nwb::CsiFrame>& frames, const std::string& label) {
  std::vector<nwb::DatasetRecord> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(nwb::make_record(f, label));
  return out;
}

std::vector<nwb::CsiFrame> records_to_frames(const std::vector<nwb::DatasetRecord>& records) {
  std::vector<nwb::CsiFrame> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.frame);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nwb::detail::write_file(path, text);
}

// ---------------------------------------------------------------------------

int run_simulate(Cli& cli, const std::string& out) {
  const Config& c = cli.config;
  const auto grid = simulation_grid(c);
  const auto seed = c.get<std::uint64_t>("/simulation/seed");
  std::vector<nwb::DatasetRecord> records;
  const std::string scene = c.get<std::string>("/simulation/scene");
  if (scene == "random") {
    const auto fam = family(c);
    const auto count = c.get<std::size_t>("/simulation/count");
    for (std::size_t i = 0; i < count; ++i) {
      const auto env = nwb::sample_environment(fam, seed + i);
      auto frame = nwb::synthesize_csi(env, grid, 0);
      if (c.get<bool>("/simulation/noise")) frame = nwb::add_awgn(frame, c.get<double>("/simulation/snr_db"), seed + i);
      records.push_back(nwb::make_record(std::move(frame), env.label));
    }
  } else if (scene == "breathing") {
    nwb::BreathingSceneSpec spec;
    spec.seed = seed;
    spec.rate_hz = c.get<double>("/simulation/rate_bpm") / 60.0;
    spec.subject_delays_s.clear();
    for (double d : c.get<std::vector<double>>("/simulation/subject_delays_ns")) spec.subject_delays_s.push_back(d * 1e-9);
    spec.subject_gains = c.get<std::vector<double>>("/simulation/subject_gains");
    const auto scene_def = nwb::make_breathing_scene(spec);
    const auto series =
        nwb::synthesize_series(scene_def.env, scene_def.motions, grid, 0, c.get<double>("/simulation/sample_rate_hz"),
                               c.get<double>("/simulation/duration_s"));
    records = frames_to_records(series, scene_def.env.label);
  } else {
    throw ConfigError("config: /simulation/scene must be 'random' or 'breathing'");
  }
  nwb::save_dataset(out, records);
  std::cout << json{{"records", records.size()}, {"out", out}}.dump() << "\n";
  return 0;
}

int run_make_dataset(Cli& cli, const std::string& out_dir) {
  const Config& c = cli.config;
  const auto narrow = simulation_grid(c);
  const auto fam = family(c);
  const auto seed = c.get<std::uint64_t>("/data/seed");
  const int train_k = c.get<int>("/data/train_k");
  const auto train_count = c.get<std::size_t>("/data/train_count");
  const auto test_count = c.get<std::size_t>("/data/test_count");
  fs::create_directories(out_dir);

  std::vector<nwb::DatasetRecord> train;
  const auto wide = nwb::expand_grid(narrow, train_k);
  for (std::size_t i = 0; i < train_count; ++i) {
    const auto env = nwb::sample_environment(fam, seed + i);
    train.push_back(nwb::make_record(nwb::synthesize_csi(env, wide, 0), env.label));
  }
  nwb::save_dataset(fs::path(out_dir) / "train.nwbd", train);

  json manifest{{"train", "train.nwbd"}, {"tests", json::array()}};
  // Test environments use seeds disjoint from the training ones.
  const auto test_seed = seed + 1000003ull + train_count;
  for (int k : c.get<std::vector<int>>("/evaluation/k")) {
    const auto cases = nwb::make_extrapolation_cases(fam, narrow, {k}, test_count, test_seed);
    std::vector<nwb::DatasetRecord> in, truth;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      in.push_back(nwb::make_record(cases[i].input, "test-" + std::to_string(i)));
      truth.push_back(nwb::make_record(cases[i].truth, "test-" + std::to_string(i)));
    }
    const std::string in_name = "test_k" + std::to_string(k) + "_input.nwbd";
    const std::string truth_name = "test_k" + std::to_string(k) + "_truth.nwbd";
    nwb::save_dataset(fs::path(out_dir) / in_name, in);
    nwb::save_dataset(fs::path(out_dir) / truth_name, truth);
    manifest["tests"].push_back({{"k", k}, {"input", in_name}, {"truth", truth_name}});
  }
  write_text(fs::path(out_dir) / "dataset.json", manifest.dump(2) + "\n");
  std::cout << manifest.dump() << "\n";
  return 0;
}

int run_train(Cli& cli, const std::string& data, const std::string& out_dir, bool fresh) {
  const Config& c = cli.config;
  const auto frames = records_to_frames(nwb::load_dataset(data));
  const auto cs = codec_spec(c);
  const nwb::LatentCodec codec(cs);
  const auto tc = train_config(c);
  nwb::TrainOptions opts;
  opts.resume = !fresh;
  opts.on_step = [](long step, double loss, double lr) {
    if (step % 50 == 0) std::cerr << "step " << step << " loss " << loss << " lr " << lr << "\n";
  };
  fs::create_directories(out_dir);
  const auto report = nwb::run_training(frames, model_config(c, codec), cs, schedule_spec(c), tc, out_dir, opts);
  write_text(fs::path(out_dir) / "timing.json", json{{"wall_clock_s", report.wall_clock_s}}.dump() + "\n");
  if (cli.plots) {
    nwb::plot::Series s{"loss", {}, report.losses};
    for (std::size_t i = 0; i < report.losses.size(); ++i) s.x.push_back(static_cast<double>(i));
    nwb::plot::write_svg(fs::path(out_dir) / "loss.svg", "training loss", "step", "loss", {s});
  }
  std::cout << json{{"steps", report.losses.size()},
                    {"final_loss", report.losses.empty() ? 0.0 : report.losses.back()},
                    {"checkpoint", report.checkpoint.string()}}
                   .dump()
            << "\n";
  return 0;
}

struct Model {
  nwb::Checkpoint ck;
  nwb::LatentCodec codec;
  nwb::NoiseSchedule sched;
};

Model load_model(const std::string& dir) {
  auto ck = nwb::load_checkpoint(dir);
  nwb::LatentCodec codec(ck.codec);
  nwb::NoiseSchedule sched(ck.schedule);
  return {std::move(ck), std::move(codec), std::move(sched)};
}

nwb::ExtrapolateOptions extrapolate_options(const Config& c) {
  nwb::ExtrapolateOptions o;
  o.clamp_measured = c.get<bool>("/evaluation/clamp");
  o.z0_clip = c.get<double>("/evaluation/z0_clip");
  return o;
}

std::uint64_t frame_seed(std::uint64_t seed, std::size_t i) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i)};
  return std::mt19937_64(seq)();
}

int run_extrapolate(Cli& cli, const std::string& input, const std::string& ckpt, const std::string& out) {
  const Config& c = cli.config;
  const auto ks = c.get<std::vector<int>>("/evaluation/k");
  if (ks.size() != 1) throw ConfigError("extrapolate: give exactly one --k");
  const int k = ks.front();
  const auto seed = c.get<std::uint64_t>("/evaluation/seed");
  const Model m = load_model(ckpt);
  const auto opts = extrapolate_options(c);
  const auto records = nwb::load_dataset(input);
  std::vector<nwb::DatasetRecord> outputs;
  json residuals = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto r = nwb::extrapolate(m.ck.params, m.codec, m.sched, records[i].frame, k, frame_seed(seed, i), opts);
    residuals.push_back(r.input_residual);
    outputs.push_back(nwb::make_record(std::move(r.ecsi), records[i].env_label));
  }
  nwb::save_dataset(out, outputs);
  std::cout << json{{"records", outputs.size()}, {"k", k}, {"out", out}, {"input_residual", residuals}}.dump() << "\n";
  return 0;
}

int run_eval(Cli& cli, const std::string& input, const std::string& truth_path, const std::string& ckpt,
             const std::string& ecsi_path, const std::string& out_prefix) {
  const Config& c = cli.config;
  const auto ks = c.get<std::vector<int>>("/evaluation/k");
  if (ks.size() != 1) throw ConfigError("eval: give exactly one --k per input/truth pair");
  const int k = ks.front();
  const auto truth = nwb::load_dataset(truth_path);
  std::vector<nwb::EvalCase> cases;
  std::vector<nwb::DatasetRecord> inputs, ecsi;
  if (!ecsi_path.empty()) {
    ecsi = nwb::load_dataset(ecsi_path);
    if (ecsi.size() != truth.size()) throw nwb::InvalidArgument("eval: eCSI and truth record counts differ");
  } else {
    if (ckpt.empty() || input.empty()) throw nwb::InvalidArgument("eval: need --ecsi, or --checkpoint with --input");
    inputs = nwb::load_dataset(input);
    if (inputs.size() != truth.size()) throw nwb::InvalidArgument("eval: input and truth record counts differ");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    cases.push_back({k, inputs.empty() ? nwb::CsiFrame{} : inputs[i].frame, truth[i].frame});
  }
  nwb::Extrapolator model;
  std::optional<Model> m;
  if (!ecsi.empty()) {
    model = [&](const nwb::CsiFrame&, int, std::size_t i) { return ecsi[i].frame; };
  } else {
    m = load_model(ckpt);
    const auto seed = c.get<std::uint64_t>("/evaluation/seed");
    const auto opts = extrapolate_options(c);
    model = [&, seed, opts](const nwb::CsiFrame& in, int kk, std::size_t i) {
      return nwb::extrapolate(m->ck.params, m->codec, m->sched, in, kk, frame_seed(seed, i), opts).ecsi;
    };
  }
  const auto table = nwb::evaluate(cases, model, c.get<std::size_t>("/evaluation/zero_pad_factor"));
  write_text(out_prefix + ".csv", table.to_csv());
  write_text(out_prefix + ".json", table.to_json().dump(2) + "\n");
  if (cli.plots) {
    for (const auto& r : table.rows) {
      auto v = r.values;
      std::sort(v.begin(), v.end());
      nwb::plot::Series s{r.metric, v, {}};
      for (std::size_t i = 0; i < v.size(); ++i) s.y.push_back(static_cast<double>(i + 1) / static_cast<double>(v.size()));
      nwb::plot::write_svg(out_prefix + "_" + r.metric + "_k" + std::to_string(r.k) + ".svg", r.metric + " CDF",
                           r.metric, "CDF", {s});
    }
  }
  std::cout << table.to_json().dump() << "\n";
  return 0;
}

int run_tof(Cli& cli, const std::string& input, const std::string& out_prefix) {
  const Config& c = cli.config;
  const auto records = nwb::load_dataset(input);
  const double rho = c.get<double>("/sensing/rho");
  const auto zp = c.get<std::size_t>("/sensing/zero_pad_factor");
  std::ostringstream csv;
  csv.precision(17);
  csv << "index,label,tof_ns,peak_tap,peak_magnitude\n";
  json arr = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto e = nwb::estimate_tof(records[i].frame, rho, zp);
    csv << i << ',' << records[i].env_label << ',' << e.tof_s * 1e9 << ',' << e.peak_tap << ',' << e.peak_magnitude
        << '\n';
    arr.push_back({{"index", i}, {"label", records[i].env_label}, {"tof_ns", e.tof_s * 1e9}, {"peak_tap", e.peak_tap},
                   {"peak_magnitude", e.peak_magnitude}});
  }
  write_text(out_prefix + ".csv", csv.str());
  write_text(out_prefix + ".json", arr.dump(2) + "\n");
  std::cout << json{{"frames", records.size()}, {"out", out_prefix + ".csv"}}.dump() << "\n";
  return 0;
}

int run_breath(Cli& cli, const std::string& input, const std::string& out_prefix) {
  const Config& c = cli.config;
  nwb::BreathConfig b;
  b.window_s = c.get<double>("/sensing/window_s");
  b.hop_s = c.get<double>("/sensing/hop_s");
  b.sample_rate_hz = c.get<double>("/sensing/sample_rate_hz");
  b.zero_pad_factor = c.get<std::size_t>("/sensing/zero_pad_factor");
  b.max_paths = c.get<std::size_t>("/sensing/subjects");
  b.peak_ratio = c.get<double>("/sensing/peak_ratio");
  b.persistence = c.get<double>("/sensing/persistence");
  const auto est = nwb::estimate_breathing(records_to_frames(nwb::load_dataset(input)), b);
  std::ostringstream csv;
  csv.precision(17);
  csv << "path,delay_ns,time_s,bpm,band_power,detected\n";
  for (std::size_t p = 0; p < est.paths.size(); ++p) {
    const auto& path = est.paths[p];
    for (std::size_t w = 0; w < path.bpm.size(); ++w) {
      csv << p << ',' << path.delay_s * 1e9 << ',' << path.times_s[w] << ',' << path.bpm[w] << ','
          << path.band_power[w] << ',' << (path.detected[w] ? 1 : 0) << '\n';
    }
  }
  write_text(out_prefix + ".csv", csv.str());
  write_text(out_prefix + ".json", est.to_json().dump(2) + "\n");
  if (cli.plots) {
    std::vector<nwb::plot::Series> series;
    for (std::size_t p = 0; p < est.paths.size(); ++p)
      series.push_back({"path " + std::to_string(p), est.paths[p].times_s, est.paths[p].bpm});
    nwb::plot::write_svg(out_prefix + ".svg", "breathing rate per path", "time (s)", "bpm", series);
  }
  std::cout << json{{"paths", est.paths.size()}, {"out", out_prefix + ".json"}}.dump() << "\n";
  return 0;
}

int exit_code_for(const std::string& kind) {
  if (kind == "config" || kind == "invalid_argument") return 2;
  if (kind == "io") return 3;
  if (kind == "numeric") return 4;
  return 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Narrowband to wideband CSI extrapolation toolkit"};
  app.require_subcommand(1);
  Cli cli;
  app.add_option("--config", cli.config_path, "JSON config file (see docs/config.schema.json)");
  app.add_option("--threads", cli.threads, "Worker threads for dense math")->check(CLI::PositiveNumber);
  app.add_flag("--plots", cli.plots, "Also write SVG figures next to the outputs");

  std::string out, data, input, truth, ckpt, ecsi;
  bool fresh = false;

  auto* sim = app.add_subcommand("simulate", "Synthesize CSI frames (random environments or a breathing scene)");
  sim->add_option("--out", out, "Output dataset (.nwbd or .jsonl)")->required();
  cli.bind(sim, "--scene", "/simulation/scene", "random | breathing");
  cli.bind(sim, "--count", "/simulation/count", "Number of random environments");
  cli.bind(sim, "--seed", "/simulation/seed", "Environment seed");
  cli.bind(sim, "--center-mhz", "/simulation/center_mhz", "Grid center frequency");
  cli.bind(sim, "--bandwidth-mhz", "/simulation/bandwidth_mhz", "Grid bandwidth");
  cli.bind(sim, "--spacing-khz", "/simulation/spacing_khz", "Subcarrier spacing");
  cli.bind(sim, "--min-paths", "/simulation/min_paths", "Fewest paths per environment");
  cli.bind(sim, "--max-paths", "/simulation/max_paths", "Most paths per environment");
  cli.bind(sim, "--max-delay-ns", "/simulation/max_delay_ns", "Largest path delay");
  cli.bind(sim, "--snr-db", "/simulation/snr_db", "AWGN SNR when noise is on");
  cli.bind(sim, "--noise", "/simulation/noise", "Add white noise (true/false)");
  cli.bind(sim, "--duration-s", "/simulation/duration_s", "Breathing series duration");
  cli.bind(sim, "--rate-bpm", "/simulation/rate_bpm", "Breathing rate of every subject");

  auto* mk = app.add_subcommand("make-dataset", "Write training frames and narrow/wide test pairs");
  mk->add_option("--out", out, "Output directory")->required();
  cli.bind(mk, "--train-count", "/data/train_count", "Training frames");
  cli.bind(mk, "--test-count", "/data/test_count", "Test pairs per k");
  cli.bind(mk, "--seed", "/data/seed", "Dataset seed");
  cli.bind(mk, "--train-k", "/data/train_k", "Training frames span this multiple of the simulation grid");
  cli.bind(mk, "--k", "/evaluation/k", "Comma-separated test multiples");
  cli.bind(mk, "--bandwidth-mhz", "/simulation/bandwidth_mhz", "Narrowband bandwidth");

  auto* tr = app.add_subcommand("train", "Train the noise predictor");
  tr->add_option("--data", data, "Training dataset")->required();
  tr->add_option("--out", out, "Run directory (checkpoint/, report.json)")->required();
  tr->add_flag("--fresh", fresh, "Ignore an existing checkpoint instead of resuming");
  cli.bind(tr, "--preset", "/training/preset", "desk | full");
  cli.bind(tr, "--steps", "/training/total_steps", "Step cap of the schedule");
  cli.bind(tr, "--epochs", "/training/epochs", "Epochs of the schedule");
  cli.bind(tr, "--batch-size", "/training/batch_size", "Frames per step");
  cli.bind(tr, "--lr", "/training/learning_rate", "Peak learning rate");
  cli.bind(tr, "--seed", "/training/seed", "Training seed");
  cli.bind(tr, "--stop-at", "/training/stop_at_step", "Stop after this many steps (0 = full schedule)");
  cli.bind(tr, "--checkpoint-every", "/training/checkpoint_every", "Epochs between checkpoints");

  auto* ex = app.add_subcommand("extrapolate", "Generate k-times wider eCSI for every input frame");
  ex->add_option("--input", input, "Narrowband dataset")->required();
  ex->add_option("--checkpoint", ckpt, "Checkpoint directory")->required();
  ex->add_option("--out", out, "Output eCSI dataset")->required();
  cli.bind(ex, "--k", "/evaluation/k", "Expansion factor");
  cli.bind(ex, "--seed", "/evaluation/seed", "Sampling seed");
  cli.bind(ex, "--clamp", "/evaluation/clamp", "Keep the measured band verbatim (true/false)");

  auto* ev = app.add_subcommand("eval", "MSE and AccCIR of eCSI against ground truth");
  ev->add_option("--truth", truth, "Wideband ground-truth dataset")->required();
  ev->add_option("--input", input, "Narrowband dataset (with --checkpoint)");
  ev->add_option("--checkpoint", ckpt, "Checkpoint directory");
  ev->add_option("--ecsi", ecsi, "Already extrapolated dataset");
  ev->add_option("--out", out, "Output prefix for .csv/.json")->required();
  cli.bind(ev, "--k", "/evaluation/k", "Expansion factor of the truth set");
  cli.bind(ev, "--seed", "/evaluation/seed", "Sampling seed");

  auto* tf = app.add_subcommand("tof", "First-path time of flight per frame");
  tf->add_option("--input", input, "CSI or eCSI dataset")->required();
  tf->add_option("--out", out, "Output prefix for .csv/.json")->required();
  cli.bind(tf, "--rho", "/sensing/rho", "Dominance ratio");

  auto* br = app.add_subcommand("breath", "Per-path breathing rate from a CSI series");
  br->add_option("--input", input, "CSI series dataset")->required();
  br->add_option("--out", out, "Output prefix for .csv/.json")->required();
  cli.bind(br, "--window-s", "/sensing/window_s", "STFT window");
  cli.bind(br, "--subjects", "/sensing/subjects", "Paths to keep (0 = all)");

  auto* cf = app.add_subcommand("config", "Print the effective configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string module = "cli";
  try {
    cli.finalize();
    if (cf->parsed()) {
      std::cout << cli.config.doc.dump(2) << "\n";
      return 0;
    }
    if (sim->parsed()) {
      module = "channel-sim";
      return run_simulate(cli, out);
    }
    if (mk->parsed()) {
      module = "csi-data";
      return run_make_dataset(cli, out);
    }
    if (tr->parsed()) {
      module = "trainer";
      return run_train(cli, data, out, fresh);
    }
    if (ex->parsed()) {
      module = "diffusion";
      return run_extrapolate(cli, input, ckpt, out);
    }
    if (ev->parsed()) {
      module = "metrics";
      return run_eval(cli, input, truth, ckpt, ecsi, out);
    }
    if (tf->parsed()) {
      module = "sensing";
      return run_tof(cli, input, out);
    }
    if (br->parsed()) {
      module = "sensing";
      return run_breath(cli, input, out);
    }
  } catch (const nwb::Error& e) {
    std::cerr << json{{"error", e.kind()}, {"module", module}, {"message", e.what()}}.dump() << "\n";
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    std::cerr << json{{"error", "schema"}, {"module", module}, {"message", e.what()}}.dump() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"module", module}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
