// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint directories.
//
//   manifest.json   format version, model config, codec spec, schedule spec,
//                   training step and one entry {name, dtype, shape, file}
//                   per stored array
//   <name>.bin      raw little-endian array data, row-major
//
// Optimizer moments are stored as additional arrays named "adam.m/<name>" and
// "adam.v/<name>" so that training can resume exactly.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nwb/dataset_io.hpp"
#include "nwb/diffusion.hpp"
#include "nwb/error.hpp"
#include "nwb/fredit_net.hpp"
#include "nwb/latent_codec.hpp"

namespace nwb {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"latent_dim", c.latent_dim},       {"model_dim", c.model_dim}, {"num_blocks", c.num_blocks},
          {"num_heads", c.num_heads},         {"embed_dim", c.embed_dim}, {"timestep_embed_dim", c.timestep_embed_dim},
          {"mlp_ratio", c.mlp_ratio}};
}

inline nlohmann::json to_json(const CodecSpec& c) {
  return {{"type", to_string(c.type)}, {"patch", c.patch}, {"seed", c.seed}, {"cols", c.cols}};
}

inline nlohmann::json to_json(const ScheduleSpec& s) {
  return {{"steps", s.steps},
          {"beta_start", s.beta_start},
          {"beta_end", s.beta_end},
          {"reference_steps", s.reference_steps},
          {"shape", "linear"}};
}

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw SchemaViolation(std::string("checkpoint: missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("checkpoint: bad value for '") + key + "': " + e.what());
  }
}

// Array names may contain '/', which is not a valid file name character.
inline std::string array_file_name(std::string name) {
  for (auto& c : name)
    if (c == '/') c = '~';
  return name + ".bin";
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.latent_dim = detail::json_get<long>(j, "latent_dim");
  c.model_dim = detail::json_get<long>(j, "model_dim");
  c.num_blocks = detail::json_get<long>(j, "num_blocks");
  c.num_heads = detail::json_get<long>(j, "num_heads");
  c.embed_dim = detail::json_get<long>(j, "embed_dim");
  c.timestep_embed_dim = detail::json_get<long>(j, "timestep_embed_dim");
  c.mlp_ratio = detail::json_get<long>(j, "mlp_ratio");
  return c;
}

inline CodecSpec codec_spec_from_json(const nlohmann::json& j) {
  CodecSpec c;
  c.type = codec_type_from_string(detail::json_get<std::string>(j, "type"));
  c.patch = detail::json_get<std::size_t>(j, "patch");
  c.seed = detail::json_get<std::uint64_t>(j, "seed");
  c.cols = detail::json_get<std::size_t>(j, "cols");
  return c;
}

inline ScheduleSpec schedule_spec_from_json(const nlohmann::json& j) {
  ScheduleSpec s;
  s.steps = detail::json_get<int>(j, "steps");
  s.beta_start = detail::json_get<double>(j, "beta_start");
  s.beta_end = detail::json_get<double>(j, "beta_end");
  s.reference_steps = detail::json_get<int>(j, "reference_steps");
  if (j.contains("shape") && j.at("shape") != "linear") throw SchemaViolation("checkpoint: unsupported schedule shape");
  return s;
}

struct Checkpoint {
  ModelParameters<float> params;
  CodecSpec codec;
  ScheduleSpec schedule;
  std::int64_t step = 0;
  /// Optimizer first/second moments, same layout as params (empty when absent).
  std::vector<nn::Mat<float>> adam_m, adam_v;
};

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory '" + dir.string() + "': " + ec.message());

  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["model"] = to_json(ck.params.config);
  manifest["codec"] = to_json(ck.codec);
  manifest["schedule"] = to_json(ck.schedule);
  manifest["step"] = ck.step;
  manifest["arrays"] = nlohmann::json::array();

  auto store = [&](const std::string& name, const nn::Mat<float>& a) {
    std::string bytes;
    bytes.reserve(static_cast<std::size_t>(a.size()) * sizeof(float));
    for (long i = 0; i < a.size(); ++i) detail::put_le<float>(bytes, a.data()[i]);
    const std::string file = detail::array_file_name(name);
    detail::write_file(dir / file, bytes);
    manifest["arrays"].push_back({{"name", name}, {"dtype", "f32"}, {"shape", {a.rows(), a.cols()}}, {"file", file}});
  };
  for (std::size_t i = 0; i < ck.params.arrays.size(); ++i) store(ck.params.names[i], ck.params.arrays[i]);
  for (std::size_t i = 0; i < ck.adam_m.size(); ++i) store("adam.m/" + ck.params.names[i], ck.adam_m[i]);
  for (std::size_t i = 0; i < ck.adam_v.size(); ++i) store("adam.v/" + ck.params.names[i], ck.adam_v[i]);
  // Manifest last, so a directory with a manifest is always complete.
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline bool has_checkpoint(const std::filesystem::path& dir) { return std::filesystem::exists(dir / "manifest.json"); }

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaViolation("checkpoint: manifest is not valid JSON: " + std::string(e.what()));
  }
  const int version = detail::json_get<int>(manifest, "format_version");
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint: format version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  ck.params = ModelParameters<float>::layout(model_config_from_json(manifest.at("model")));
  ck.codec = codec_spec_from_json(manifest.at("codec"));
  ck.schedule = schedule_spec_from_json(manifest.at("schedule"));
  ck.step = detail::json_get<std::int64_t>(manifest, "step");

  std::vector<bool> seen(ck.params.arrays.size(), false);
  for (const auto& entry : manifest.at("arrays")) {
    const auto name = detail::json_get<std::string>(entry, "name");
    if (detail::json_get<std::string>(entry, "dtype") != "f32") throw SchemaViolation("checkpoint: unsupported dtype");
    const auto shape = detail::json_get<std::vector<long>>(entry, "shape");
    if (shape.size() != 2) throw SchemaViolation("checkpoint: array '" + name + "' is not 2-D");
    const std::string bytes = detail::read_file(dir / detail::json_get<std::string>(entry, "file"));
    if (bytes.size() != static_cast<std::size_t>(shape[0] * shape[1]) * sizeof(float)) {
      throw TruncatedFile("checkpoint: array '" + name + "' has the wrong byte size");
    }
    nn::Mat<float> a(shape[0], shape[1]);
    detail::ByteReader r(bytes);
    for (long i = 0; i < a.size(); ++i) a.data()[i] = r.get<float>();

    std::string base = name;
    std::vector<nn::Mat<float>>* moments = nullptr;
    if (name.rfind("adam.m/", 0) == 0) {
      base = name.substr(7);
      moments = &ck.adam_m;
    } else if (name.rfind("adam.v/", 0) == 0) {
      base = name.substr(7);
      moments = &ck.adam_v;
    }
    if (!ck.params.contains(base)) throw SchemaViolation("checkpoint: unknown array '" + name + "'");
    const std::size_t idx = ck.params.index(base);
    const auto& ref = ck.params.arrays[idx];
    if (a.rows() != ref.rows() || a.cols() != ref.cols()) {
      throw SchemaViolation("checkpoint: array '" + name + "' has a shape inconsistent with the model config");
    }
    if (moments) {
      if (moments->empty()) {
        moments->resize(ck.params.arrays.size());
        for (std::size_t i = 0; i < moments->size(); ++i)
          (*moments)[i] = nn::Mat<float>::Zero(ck.params.arrays[i].rows(), ck.params.arrays[i].cols());
      }
      (*moments)[idx] = std::move(a);
    } else {
      ck.params.arrays[idx] = std::move(a);
      seen[idx] = true;
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw SchemaViolation("checkpoint: missing array '" + ck.params.names[i] + "'");
  }
  return ck;
}

}  // namespace nwb
