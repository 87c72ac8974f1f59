// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

// NWBD binary dataset container and its JSON-lines mirror.
//
// Binary layout, all little-endian:
//   "NWBD" | u32 version | u64 record_count
//   per record:
//     f64 center_hz | f64 spacing_hz | u64 num_subcarriers
//     u32 antenna | f64 timestamp | u32 label_bytes | label (UTF-8)
//     num_subcarriers x (f64 re, f64 im)

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nwb/csi_data.hpp"
#include "nwb/error.hpp"

namespace nwb {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr char kDatasetMagic[4] = {'N', 'W', 'B', 'D'};

/// FNV-1a over raw bytes; used for reproducibility checks.
inline std::uint64_t content_hash(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (bytes_.size() - pos_ < sizeof(T)) throw TruncatedFile("dataset: unexpected end of data");
    char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw TruncatedFile("dataset: unexpected end of data");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void check_record_schema(const DatasetRecord& r) {
  const auto& g = r.frame.grid;
  if (!std::isfinite(g.center_hz) || !std::isfinite(g.spacing_hz) || g.spacing_hz <= 0.0 ||
      g.num_subcarriers == 0 || r.frame.values.size() != g.num_subcarriers) {
    throw SchemaViolation("dataset: invalid grid in record '" + r.env_label + "'");
  }
  for (const auto& v : r.frame.values) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw SchemaViolation("dataset: non-finite CSI value in record '" + r.env_label + "'");
    }
  }
  if (!std::isfinite(r.frame.timestamp)) throw SchemaViolation("dataset: non-finite timestamp");
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::string encode_dataset(const std::vector<DatasetRecord>& records) {
  std::string out(kDatasetMagic, 4);
  detail::put_le<std::uint32_t>(out, kDatasetVersion);
  detail::put_le<std::uint64_t>(out, records.size());
  for (const auto& r : records) {
    detail::check_record_schema(r);
    const auto& g = r.frame.grid;
    detail::put_le<double>(out, g.center_hz);
    detail::put_le<double>(out, g.spacing_hz);
    detail::put_le<std::uint64_t>(out, g.num_subcarriers);
    detail::put_le<std::uint32_t>(out, r.antenna);
    detail::put_le<double>(out, r.frame.timestamp);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.env_label.size()));
    out.append(r.env_label);
    for (const auto& v : r.frame.values) {
      detail::put_le<double>(out, v.real());
      detail::put_le<double>(out, v.imag());
    }
  }
  return out;
}

inline std::vector<DatasetRecord> decode_dataset(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (in.remaining() < 4) throw TruncatedFile("dataset: missing header");
  if (in.take(4) != std::string_view(kDatasetMagic, 4)) throw SchemaViolation("dataset: bad magic (not an NWBD file)");
  const auto version = in.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw VersionMismatch("dataset: format version " + std::to_string(version) + " (expected " +
                          std::to_string(kDatasetVersion) + ")");
  }
  const auto count = in.get<std::uint64_t>();
  std::vector<DatasetRecord> records;
  for (std::uint64_t i = 0; i < count; ++i) {
    DatasetRecord r;
    r.frame.grid.center_hz = in.get<double>();
    r.frame.grid.spacing_hz = in.get<double>();
    const auto n = in.get<std::uint64_t>();
    r.antenna = in.get<std::uint32_t>();
    r.frame.antenna = r.antenna;
    r.frame.timestamp = in.get<double>();
    const auto label_len = in.get<std::uint32_t>();
    r.env_label = std::string(in.take(label_len));
    if (n == 0) throw SchemaViolation("dataset: record with zero subcarriers");
    if (n > in.remaining() / 16) throw TruncatedFile("dataset: record values extend past end of data");
    r.frame.grid.num_subcarriers = static_cast<std::size_t>(n);
    r.frame.values.resize(static_cast<std::size_t>(n));
    for (auto& v : r.frame.values) {
      const double re = in.get<double>();
      const double im = in.get<double>();
      v = {re, im};
    }
    detail::check_record_schema(r);
    records.push_back(std::move(r));
  }
  if (in.remaining() != 0) throw SchemaViolation("dataset: trailing bytes after last record");
  return records;
}

inline void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  detail::write_file(path, encode_dataset(records));
}

inline std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  return decode_dataset(detail::read_file(path));
}

// JSON-lines mirror: a header line, then one object per record.

inline std::string encode_dataset_jsonl(const std::vector<DatasetRecord>& records) {
  std::ostringstream out;
  out << nlohmann::json{{"format", "NWBD-JSONL"}, {"version", kDatasetVersion}, {"count", records.size()}}.dump()
      << '\n';
  for (const auto& r : records) {
    detail::check_record_schema(r);
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (const auto& v : r.frame.values) {
      re.push_back(v.real());
      im.push_back(v.imag());
    }
    nlohmann::json j{{"label", r.env_label},
                     {"antenna", r.antenna},
                     {"timestamp", r.frame.timestamp},
                     {"grid",
                      {{"center_hz", r.frame.grid.center_hz},
                       {"spacing_hz", r.frame.grid.spacing_hz},
                       {"count", r.frame.grid.num_subcarriers}}},
                     {"re", re},
                     {"im", im}};
    out << j.dump() << '\n';
  }
  return out.str();
}

inline std::vector<DatasetRecord> decode_dataset_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw TruncatedFile("dataset jsonl: missing header line");
  std::vector<DatasetRecord> records;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "NWBD-JSONL") throw SchemaViolation("dataset jsonl: bad format tag");
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kDatasetVersion) throw VersionMismatch("dataset jsonl: unsupported version " + std::to_string(version));
    const auto count = header.at("count").get<std::uint64_t>();
    while (records.size() < count) {
      if (!std::getline(in, line)) throw TruncatedFile("dataset jsonl: fewer records than declared");
      const auto j = nlohmann::json::parse(line);
      DatasetRecord r;
      r.env_label = j.at("label").get<std::string>();
      r.antenna = j.at("antenna").get<std::uint32_t>();
      r.frame.antenna = r.antenna;
      r.frame.timestamp = j.at("timestamp").get<double>();
      r.frame.grid.center_hz = j.at("grid").at("center_hz").get<double>();
      r.frame.grid.spacing_hz = j.at("grid").at("spacing_hz").get<double>();
      r.frame.grid.num_subcarriers = j.at("grid").at("count").get<std::size_t>();
      const auto& re = j.at("re");
      const auto& im = j.at("im");
      if (re.size() != im.size()) throw SchemaViolation("dataset jsonl: re/im length mismatch");
      for (std::size_t i = 0; i < re.size(); ++i) r.frame.values.emplace_back(re[i].get<double>(), im[i].get<double>());
      detail::check_record_schema(r);
      records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(std::string("dataset jsonl: ") + e.what());
  }
  return records;
}

inline void write_dataset_jsonl(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  detail::write_file(path, encode_dataset_jsonl(records));
}

inline std::vector<DatasetRecord> read_dataset_jsonl(const std::filesystem::path& path) {
  return decode_dataset_jsonl(detail::read_file(path));
}

/// Reads either format, chosen by the ".jsonl" extension.
inline std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  return path.extension() == ".jsonl" ? read_dataset_jsonl(path) : read_dataset(path);
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  if (path.extension() == ".jsonl") {
    write_dataset_jsonl(path, records);
  } else {
    write_dataset(path, records);
  }
}

inline DatasetRecord make_record(CsiFrame frame, std::string label) {
  DatasetRecord r;
  r.antenna = frame.antenna;
  r.frame = std::move(frame);
  r.env_label = std::move(label);
  return r;
}

}  // namespace nwb
