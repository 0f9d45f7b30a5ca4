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

// On-disk formats.
//
// Feature container (little endian):
//   bytes  0..7   "IS2CFEAT"
//   bytes  8..11  zero
//   bytes 12..15  u32 version (1)
//   u64 n, u64 d, u64 label_flag
//   n * d f64, row-major
//   n u32 labels, present iff label_flag == 1
//
// Parameter snapshot:
//   "IS2CSNAP", 4 zero bytes, u32 version (1)
//   u64 provenance length, provenance JSON (UTF-8)
//   u64 tensor count, then per tensor:
//     u64 name length, name, u64 rank, rank * u64 dims, prod(dims) f64

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "is2c/core.hpp"
#include "is2c/model.hpp"

namespace is2c::io {

inline constexpr char kFeatureMagic[8] = {'I', 'S', '2', 'C', 'F', 'E', 'A', 'T'};
inline constexpr char kSnapshotMagic[8] = {'I', 'S', '2', 'C', 'S', 'N', 'A', 'P'};
inline constexpr std::uint32_t kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Byte helpers
// ---------------------------------------------------------------------------

class ByteWriter {
 public:
  void Raw(const void* p, size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }
  void Str(const std::string& s) {
    U64(s.size());
    Raw(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string what) : buf_(std::move(bytes)), what_(std::move(what)) {}

  void Raw(void* p, size_t n) {
    Need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t U32() {
    Need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t U64() {
    Need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double F64() { return std::bit_cast<double>(U64()); }
  std::string Str() {
    const std::uint64_t n = U64();
    Need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool AtEnd() const { return pos_ == buf_.size(); }

 private:
  void Need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) throw Error(ErrorKind::kIo, what_ + ": truncated file");
  }
  std::vector<char> buf_;
  size_t pos_ = 0;
  std::string what_;
};

inline std::vector<char> ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void WriteFile(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

inline void WriteText(const std::filesystem::path& path, const std::string& text) {
  WriteFile(path, std::vector<char>(text.begin(), text.end()));
}

inline std::uint64_t Fnv1a64(const std::vector<char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string Hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Shortest round-trip decimal form.
inline std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that parses back exactly.
  for (int prec = 1; prec <= 17; ++prec) {
    char tmp[32];
    std::snprintf(tmp, sizeof tmp, "%.*g", prec, v);
    if (std::strtod(tmp, nullptr) == v) return tmp;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Feature container
// ---------------------------------------------------------------------------

inline std::vector<char> EncodeFeatures(const FeatureDataset& ds) {
  ByteWriter w;
  w.Raw(kFeatureMagic, 8);
  w.U32(0);
  w.U32(kFormatVersion);
  w.U64(static_cast<std::uint64_t>(ds.size()));
  w.U64(static_cast<std::uint64_t>(ds.dim()));
  w.U64(ds.has_labels() ? 1 : 0);
  const Matrix& x = ds.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) w.F64(x(i, j));
  if (ds.has_labels())
    for (int y : ds.labels()) w.U32(static_cast<std::uint32_t>(y));
  return w.bytes();
}

inline FeatureDataset DecodeFeatures(std::vector<char> bytes, int num_classes, const std::string& what) {
  ByteReader r(std::move(bytes), what);
  char magic[8];
  r.Raw(magic, 8);
  if (std::memcmp(magic, kFeatureMagic, 8) != 0) throw Error(ErrorKind::kIo, what + ": bad magic");
  if (r.U32() != 0) throw Error(ErrorKind::kIo, what + ": bad header padding");
  const std::uint32_t version = r.U32();
  if (version != kFormatVersion) throw Error(ErrorKind::kIo, what + ": unsupported version " + std::to_string(version));
  const std::uint64_t n = r.U64(), d = r.U64(), flag = r.U64();
  if (flag > 1) throw Error(ErrorKind::kIo, what + ": bad label flag");
  if (n == 0 || d == 0 || n > (1ULL << 31) || d > (1ULL << 31)) throw Error(ErrorKind::kIo, what + ": bad shape");
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = r.F64();
  std::optional<Labels> labels;
  if (flag == 1) {
    labels.emplace(static_cast<size_t>(n));
    for (auto& y : *labels) {
      const std::uint32_t v = r.U32();
      if (v >= static_cast<std::uint32_t>(num_classes)) throw Error(ErrorKind::kIo, what + ": label out of range");
      y = static_cast<int>(v);
    }
  }
  if (!r.AtEnd()) throw Error(ErrorKind::kIo, what + ": trailing bytes");
  return FeatureDataset(std::move(x), std::move(labels), num_classes);
}

inline void WriteFeatures(const std::filesystem::path& path, const FeatureDataset& ds) {
  WriteFile(path, EncodeFeatures(ds));
}

inline FeatureDataset ReadFeatures(const std::filesystem::path& path, int num_classes) {
  return DecodeFeatures(ReadFile(path), num_classes, path.string());
}

// Header row f0,...,f{d-1}[,label].
inline std::string EncodeFeaturesCsv(const FeatureDataset& ds) {
  std::ostringstream os;
  for (int j = 0; j < ds.dim(); ++j) os << (j ? "," : "") << 'f' << j;
  if (ds.has_labels()) os << ",label";
  os << '\n';
  const Matrix& x = ds.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) os << (j ? "," : "") << FormatDouble(x(i, j));
    if (ds.has_labels()) os << ',' << ds.labels()[static_cast<size_t>(i)];
    os << '\n';
  }
  return os.str();
}

inline std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline FeatureDataset DecodeFeaturesCsv(const std::string& text, int num_classes, const std::string& what) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::kIo, what + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = SplitCsv(line);
  const bool labelled = !header.empty() && header.back() == "label";
  const size_t d = header.size() - (labelled ? 1 : 0);
  for (size_t j = 0; j < d; ++j)
    if (header[j] != "f" + std::to_string(j)) throw Error(ErrorKind::kIo, what + ": bad header");
  if (d == 0) throw Error(ErrorKind::kIo, what + ": no feature columns");
  std::vector<double> values;
  Labels labels;
  size_t rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = SplitCsv(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::kIo, what + ": row " + std::to_string(rows + 1) + " has wrong column count");
    for (size_t j = 0; j < d; ++j) {
      char* end = nullptr;
      const double v = std::strtod(cells[j].c_str(), &end);
      if (end == cells[j].c_str() || *end != '\0') throw Error(ErrorKind::kIo, what + ": bad number '" + cells[j] + "'");
      values.push_back(v);
    }
    if (labelled) {
      const int y = std::stoi(cells.back());
      if (y < 0 || y >= num_classes) throw Error(ErrorKind::kIo, what + ": label out of range");
      labels.push_back(y);
    }
    ++rows;
  }
  if (rows == 0) throw Error(ErrorKind::kIo, what + ": no rows");
  Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  std::copy(values.begin(), values.end(), x.data());
  return FeatureDataset(std::move(x), labelled ? std::optional<Labels>(std::move(labels)) : std::nullopt,
                        num_classes);
}

// Dispatches on extension: ".csv" is text, anything else the binary container.
inline FeatureDataset ReadFeaturesAny(const std::filesystem::path& path, int num_classes) {
  if (path.extension() == ".csv") {
    const auto bytes = ReadFile(path);
    return DecodeFeaturesCsv(std::string(bytes.begin(), bytes.end()), num_classes, path.string());
  }
  return ReadFeatures(path, num_classes);
}

// ---------------------------------------------------------------------------
// Parameter snapshot
// ---------------------------------------------------------------------------

inline std::vector<char> EncodeSnapshot(const MlpParams& p, const std::string& provenance_json) {
  ByteWriter w;
  w.Raw(kSnapshotMagic, 8);
  w.U32(0);
  w.U32(kFormatVersion);
  w.Str(provenance_json);
  const auto tensors = p.tensors();
  w.U64(tensors.size() + 1);
  for (size_t i = 0; i < tensors.size(); ++i) {
    w.Str(MlpParams::kNames[i]);
    w.U64(2);
    w.U64(static_cast<std::uint64_t>(tensors[i]->rows()));
    w.U64(static_cast<std::uint64_t>(tensors[i]->cols()));
    for (Eigen::Index r = 0; r < tensors[i]->rows(); ++r)
      for (Eigen::Index c = 0; c < tensors[i]->cols(); ++c) w.F64((*tensors[i])(r, c));
  }
  // Activation flag as a rank-0 tensor: 1 = rectifier, 0 = identity.
  w.Str("g.activation");
  w.U64(0);
  w.F64(p.activation == HiddenActivation::kRelu ? 1.0 : 0.0);
  return w.bytes();
}

struct Snapshot {
  MlpParams params;
  std::string provenance_json;
};

inline Snapshot DecodeSnapshot(std::vector<char> bytes, const std::string& what) {
  ByteReader r(std::move(bytes), what);
  char magic[8];
  r.Raw(magic, 8);
  if (std::memcmp(magic, kSnapshotMagic, 8) != 0) throw Error(ErrorKind::kIo, what + ": bad magic");
  if (r.U32() != 0) throw Error(ErrorKind::kIo, what + ": bad header padding");
  if (r.U32() != kFormatVersion) throw Error(ErrorKind::kIo, what + ": unsupported version");
  Snapshot s;
  s.provenance_json = r.Str();
  const std::uint64_t count = r.U64();
  auto tensors = s.params.tensors();
  std::vector<bool> seen(tensors.size(), false);
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::string name = r.Str();
    const std::uint64_t rank = r.U64();
    if (rank > 2) throw Error(ErrorKind::kIo, what + ": tensor " + name + " has rank " + std::to_string(rank));
    std::vector<std::uint64_t> dims(rank);
    std::uint64_t total = 1;
    for (auto& d : dims) {
      d = r.U64();
      if (d > (1ULL << 31)) throw Error(ErrorKind::kIo, what + ": bad dims");
      total *= d;
    }
    if (name == "g.activation") {
      if (rank != 0) throw Error(ErrorKind::kIo, what + ": bad activation entry");
      s.params.activation = r.F64() != 0.0 ? HiddenActivation::kRelu : HiddenActivation::kIdentity;
      continue;
    }
    size_t slot = tensors.size();
    for (size_t i = 0; i < tensors.size(); ++i)
      if (name == MlpParams::kNames[i]) slot = i;
    if (slot == tensors.size() || rank != 2) throw Error(ErrorKind::kIo, what + ": unexpected tensor " + name);
    Matrix m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    for (std::uint64_t i = 0; i < total; ++i) m.data()[i] = r.F64();
    *tensors[slot] = std::move(m);
    seen[slot] = true;
  }
  if (!r.AtEnd()) throw Error(ErrorKind::kIo, what + ": trailing bytes");
  for (size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw Error(ErrorKind::kIo, what + ": missing tensor " + MlpParams::kNames[i]);
  const MlpParams& p = s.params;
  if (p.b1.rows() != 1 || p.b1.cols() != p.w1.cols() || p.w2.rows() != p.w1.cols() || p.b2.rows() != 1 ||
      p.b2.cols() != p.w2.cols() || p.w3.rows() != p.w2.cols() || p.b3.rows() != 1 || p.b3.cols() != p.w3.cols())
    throw Error(ErrorKind::kIo, what + ": inconsistent tensor shapes");
  return s;
}

inline void WriteSnapshot(const std::filesystem::path& path, const MlpParams& p, const std::string& provenance) {
  WriteFile(path, EncodeSnapshot(p, provenance));
}

inline Snapshot ReadSnapshot(const std::filesystem::path& path) {
  return DecodeSnapshot(ReadFile(path), path.string());
}

}  // namespace is2c::io
