// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include <gtest/gtest.h>

#include "nwb/channel_sim.hpp"
#include "nwb/dataset_io.hpp"

using namespace nwb;

namespace {

std::vector<DatasetRecord> sample_records(std::size_t count) {
  std::vector<DatasetRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto env = sample_environment(EnvironmentFamily{}, i);
    auto frame = synthesize_csi(env, FrequencyGrid{5.2e9 + i * 1e6, 312.5e3, 16 + i}, static_cast<std::uint32_t>(i % 3),
                                0.01 * static_cast<double>(i));
    out.push_back(make_record(frame, env.label));
  }
  return out;
}

void expect_same(const std::vector<DatasetRecord>& a, const std::vector<DatasetRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].env_label, b[i].env_label);
    EXPECT_EQ(a[i].antenna, b[i].antenna);
    EXPECT_EQ(a[i].frame.grid, b[i].frame.grid);
    EXPECT_EQ(a[i].frame.values, b[i].frame.values);
    EXPECT_EQ(a[i].frame.timestamp, b[i].frame.timestamp);
  }
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() /
           ("nwb_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Binary, RoundTripIsBitExact) { expect_same(decode_dataset(encode_dataset(sample_records(7))), sample_records(7)); }

TEST(Binary, EmptyDataset) { EXPECT_TRUE(decode_dataset(encode_dataset({})).empty()); }

TEST(Binary, HeaderLayout) {
  const auto bytes = encode_dataset(sample_records(1));
  EXPECT_EQ(bytes.substr(0, 4), "NWBD");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(bytes.size(), 4u + 4 + 8 + (8 + 8 + 8 + 4 + 8 + 4 + 5 + 16 * 16));
}

TEST(Binary, EncodingIsDeterministic) {
  EXPECT_EQ(content_hash(encode_dataset(sample_records(5))), content_hash(encode_dataset(sample_records(5))));
}

TEST(Binary, VersionMismatch) {
  auto bytes = encode_dataset(sample_records(2));
  bytes[4] = 9;
  EXPECT_THROW(decode_dataset(bytes), VersionMismatch);
}

TEST(Binary, BadMagicIsSchemaViolation) {
  auto bytes = encode_dataset(sample_records(2));
  bytes[0] = 'X';
  EXPECT_THROW(decode_dataset(bytes), SchemaViolation);
}

TEST(Binary, EveryTruncationIsDetected) {
  const auto bytes = encode_dataset(sample_records(3));
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    try {
      decode_dataset(std::string_view(bytes).substr(0, cut));
      ADD_FAILURE() << "no error at " << cut;
    } catch (const TruncatedFile&) {
    } catch (const SchemaViolation&) {
    }
  }
}

TEST(Binary, TrailingBytesRejected) {
  EXPECT_THROW(decode_dataset(encode_dataset(sample_records(1)) + "x"), SchemaViolation);
}

TEST(Binary, NonFiniteValuesRejected) {
  auto recs = sample_records(1);
  recs[0].frame.values[3] = {std::nan(""), 0.0};
  EXPECT_THROW(encode_dataset(recs), SchemaViolation);
}

TEST(Jsonl, RoundTripIsBitExact) {
  expect_same(decode_dataset_jsonl(encode_dataset_jsonl(sample_records(6))), sample_records(6));
}

TEST(Jsonl, Errors) {
  EXPECT_THROW(decode_dataset_jsonl(""), TruncatedFile);
  EXPECT_THROW(decode_dataset_jsonl("{\"format\":\"other\",\"version\":1,\"count\":0}\n"), SchemaViolation);
  EXPECT_THROW(decode_dataset_jsonl("{\"format\":\"NWBD-JSONL\",\"version\":2,\"count\":0}\n"), VersionMismatch);
  auto text = encode_dataset_jsonl(sample_records(3));
  text = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  EXPECT_THROW(decode_dataset_jsonl(text), TruncatedFile);
  EXPECT_THROW(decode_dataset_jsonl("not json\n"), SchemaViolation);
}

TEST(Files, ExtensionSelectsFormat) {
  const auto dir = temp_dir();
  const auto recs = sample_records(4);
  save_dataset(dir / "a.nwbd", recs);
  save_dataset(dir / "a.jsonl", recs);
  expect_same(load_dataset(dir / "a.nwbd"), recs);
  expect_same(load_dataset(dir / "a.jsonl"), recs);
  EXPECT_EQ(detail::read_file(dir / "a.nwbd").substr(0, 4), "NWBD");
  EXPECT_EQ(detail::read_file(dir / "a.jsonl").front(), '{');
}

TEST(Files, MissingFileIsIoError) { EXPECT_THROW(load_dataset("/nonexistent/x.nwbd"), IoError); }
