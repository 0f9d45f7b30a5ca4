// Copyright 2026 The IS2C Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "is2c/io.hpp"

#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

namespace is2c::io {
namespace {

FeatureDataset Sample(bool labelled) {
  Matrix x(3, 2);
  x << 0.1, -2.5, 1e-300, 3.0, 7.25, -0.0;
  return FeatureDataset(x, labelled ? std::optional<Labels>(Labels{0, 2, 1}) : std::nullopt, 3);
}

std::uint64_t U64At(const std::vector<char>& b, size_t off) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[off + static_cast<size_t>(i)]);
  return v;
}

TEST(FeatureFileTest, ByteLayout) {
  const auto b = EncodeFeatures(Sample(true));
  ASSERT_EQ(b.size(), 16u + 24u + 6u * 8u + 3u * 4u);
  EXPECT_EQ(std::memcmp(b.data(), "IS2CFEAT", 8), 0);
  EXPECT_EQ(U64At(b, 8), std::uint64_t{1} << 32);  // zero word then version 1
  EXPECT_EQ(U64At(b, 16), 3u);
  EXPECT_EQ(U64At(b, 24), 2u);
  EXPECT_EQ(U64At(b, 32), 1u);
  double second;
  const std::uint64_t bits = U64At(b, 48);
  std::memcpy(&second, &bits, 8);
  EXPECT_EQ(second, -2.5);  // row-major
  EXPECT_EQ(static_cast<unsigned char>(b[88]), 0u);
  EXPECT_EQ(static_cast<unsigned char>(b[92]), 2u);
}

TEST(FeatureFileTest, RoundTrip) {
  for (bool labelled : {true, false}) {
    const FeatureDataset ds = Sample(labelled);
    const FeatureDataset back = DecodeFeatures(EncodeFeatures(ds), 3, "mem");
    EXPECT_EQ(back.features(), ds.features());
    EXPECT_EQ(back.has_labels(), labelled);
    if (labelled) EXPECT_EQ(back.labels(), ds.labels());
    EXPECT_EQ(EncodeFeatures(back), EncodeFeatures(ds));
  }
}

TEST(FeatureFileTest, CorruptInputs) {
  const auto good = EncodeFeatures(Sample(true));
  auto expect_io = [](std::vector<char> b, int k = 3) {
    try {
      DecodeFeatures(std::move(b), k, "mem");
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kIo);
    }
  };
  auto bad = good;
  bad[0] = 'X';
  expect_io(bad);
  bad = good;
  bad[12] = 2;
  expect_io(bad);
  expect_io(std::vector<char>(good.begin(), good.end() - 1));
  bad = good;
  bad.push_back(0);
  expect_io(bad);
  expect_io(good, 2);  // label 2 out of range
  expect_io({});
}

TEST(FeatureFileTest, CsvRoundTripIsExact) {
  for (bool labelled : {true, false}) {
    const FeatureDataset ds = Sample(labelled);
    const std::string text = EncodeFeaturesCsv(ds);
    const FeatureDataset back = DecodeFeaturesCsv(text, 3, "mem");
    EXPECT_EQ(back.features(), ds.features());
    EXPECT_EQ(back.has_labels(), labelled);
  }
  EXPECT_EQ(EncodeFeaturesCsv(Sample(true)).substr(0, 12), "f0,f1,label\n");
}

TEST(FeatureFileTest, CsvErrors) {
  EXPECT_THROW(DecodeFeaturesCsv("", 2, "m"), Error);
  EXPECT_THROW(DecodeFeaturesCsv("a,b\n1,2\n", 2, "m"), Error);
  EXPECT_THROW(DecodeFeaturesCsv("f0,f1\n1\n", 2, "m"), Error);
  EXPECT_THROW(DecodeFeaturesCsv("f0,label\n1,5\n", 2, "m"), Error);
  EXPECT_THROW(DecodeFeaturesCsv("f0\nx\n", 2, "m"), Error);
  EXPECT_THROW(DecodeFeaturesCsv("f0\n", 2, "m"), Error);
}

TEST(FeatureFileTest, FileDispatch) {
  const auto dir = std::filesystem::temp_directory_path() / "is2c_io_test";
  std::filesystem::remove_all(dir);
  WriteFeatures(dir / "a" / "x.is2c", Sample(true));
  WriteText(dir / "x.csv", EncodeFeaturesCsv(Sample(true)));
  EXPECT_EQ(ReadFeaturesAny(dir / "a" / "x.is2c", 3).features(), Sample(true).features());
  EXPECT_EQ(ReadFeaturesAny(dir / "x.csv", 3).labels(), Sample(true).labels());
  EXPECT_THROW(ReadFeatures(dir / "missing.is2c", 3), Error);
  std::filesystem::remove_all(dir);
}

TEST(SnapshotTest, RoundTrip) {
  RandomSource rng(1);
  for (auto act : {HiddenActivation::kRelu, HiddenActivation::kIdentity}) {
    const MlpParams p = init_model(3, 5, 4, 2, rng, act);
    const auto bytes = EncodeSnapshot(p, R"({"seed":1})");
    EXPECT_EQ(std::memcmp(bytes.data(), "IS2CSNAP", 8), 0);
    const Snapshot s = DecodeSnapshot(bytes, "mem");
    EXPECT_EQ(s.params, p);
    EXPECT_EQ(s.provenance_json, R"({"seed":1})");
    EXPECT_EQ(EncodeSnapshot(s.params, s.provenance_json), bytes);
  }
}

TEST(SnapshotTest, CorruptInputs) {
  RandomSource rng(2);
  const auto good = EncodeSnapshot(init_model(2, 3, 3, 2, rng), "{}");
  EXPECT_THROW(DecodeSnapshot(std::vector<char>(good.begin(), good.begin() + 40), "m"), Error);
  auto bad = good;
  bad[3] = 'X';
  EXPECT_THROW(DecodeSnapshot(bad, "m"), Error);
  bad = good;
  bad.push_back(1);
  EXPECT_THROW(DecodeSnapshot(bad, "m"), Error);
  EXPECT_THROW(DecodeSnapshot(EncodeFeatures(Sample(true)), "m"), Error);
}

TEST(UtilTest, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0, 0.0}) {
    const std::string s = FormatDouble(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  EXPECT_EQ(FormatDouble(0.5), "0.5");
}

TEST(UtilTest, Fnv1a64KnownValues) {
  EXPECT_EQ(Fnv1a64({}), 0xcbf29ce484222325ULL);
  EXPECT_EQ(Fnv1a64({'a'}), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(Hex64(0xabcULL), "0000000000000abc");
}

}  // namespace
}  // namespace is2c::io
