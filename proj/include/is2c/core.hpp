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

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace is2c {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

enum class ErrorKind {
  kLabelsRequired,
  kDimension,
  kConfig,
  kInvalidSource,
  kDegenerateEstimate,
  kUnsatisfiableClass,
  kNumericalFailure,
  kDegenerateClass,
  kUndefinedInput,
  kContract,
  kInput,
  kIo,
};

inline const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kLabelsRequired: return "labels-required";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInvalidSource: return "invalid-source";
    case ErrorKind::kDegenerateEstimate: return "degenerate-estimate";
    case ErrorKind::kUnsatisfiableClass: return "unsatisfiable-class";
    case ErrorKind::kNumericalFailure: return "numerical-failure";
    case ErrorKind::kDegenerateClass: return "degenerate-class";
    case ErrorKind::kUndefinedInput: return "undefined-input";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// ---------------------------------------------------------------------------
// RandomSource
//
// Counter-based generator: the i-th 64-bit draw is splitmix64(seed + i*gamma),
// so a stream is fully determined by (seed, number of draws taken). Normal and
// Gamma/Beta variates are generated here rather than through <random>
// distributions, whose algorithms differ between standard libraries.
// ---------------------------------------------------------------------------
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t NextU64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); used where a log is taken.
  double UniformOpen() {
    return (static_cast<double>(NextU64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t Below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorKind::kContract, "RandomSource::Below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = NextU64();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller; both variates of a pair are not cached so that the draw count
  // per call is constant (2 words).
  double Normal() {
    const double u1 = UniformOpen();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Marsaglia-Tsang; shape < 1 via the Gamma(a+1) * U^(1/a) boost.
  double Gamma(double shape) {
    if (!(shape > 0)) throw Error(ErrorKind::kContract, "Gamma shape must be > 0");
    if (shape < 1.0) {
      const double g = Gamma(shape + 1.0);
      return g * std::pow(UniformOpen(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = Normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = UniformOpen();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double Beta(double a, double b) {
    const double x = Gamma(a);
    const double y = Gamma(b);
    const double s = x + y;
    // Both gammas can underflow to zero for very small shapes.
    if (s == 0.0) return Uniform() < a / (a + b) ? 1.0 : 0.0;
    return x / s;
  }

  // Independent child stream, e.g. one per shard or per class.
  RandomSource Split() { return RandomSource(NextU64()); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// LabelDistribution
// ---------------------------------------------------------------------------
class LabelDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  LabelDistribution() = default;
  explicit LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw Error(ErrorKind::kDimension, "empty label distribution");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw Error(ErrorKind::kInput, "label distribution has a negative or non-finite entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance)
      throw Error(ErrorKind::kInput,
                  "label distribution sums to " + std::to_string(sum) + ", not 1");
  }

  static LabelDistribution Uniform(int k) {
    return LabelDistribution(std::vector<double>(static_cast<size_t>(k), 1.0 / k));
  }

  int size() const { return static_cast<int>(probs_.size()); }
  double operator[](int j) const { return probs_[static_cast<size_t>(j)]; }
  const std::vector<double>& probs() const { return probs_; }

  friend bool operator==(const LabelDistribution&, const LabelDistribution&) = default;

 private:
  std::vector<double> probs_;
};

// l1 distance between two label distributions (twice the total variation).
inline double tv_distance(const LabelDistribution& p, const LabelDistribution& q) {
  if (p.size() != q.size())
    throw Error(ErrorKind::kDimension, "tv_distance: K mismatch (" + std::to_string(p.size()) +
                                           " vs " + std::to_string(q.size()) + ")");
  double s = 0.0;
  for (int i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return s;
}

// ---------------------------------------------------------------------------
// FeatureDataset
// ---------------------------------------------------------------------------
class FeatureDataset {
 public:
  FeatureDataset(Matrix features, std::optional<Labels> labels, int num_classes)
      : features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (features_.rows() < 1) throw Error(ErrorKind::kInput, "dataset needs n >= 1 rows");
    if (features_.cols() < 1) throw Error(ErrorKind::kInput, "dataset needs d >= 1 columns");
    if (num_classes_ < 1) throw Error(ErrorKind::kInput, "num_classes must be positive");
    if (labels_) {
      if (static_cast<Eigen::Index>(labels_->size()) != features_.rows())
        throw Error(ErrorKind::kDimension, "label count does not match row count");
      for (size_t i = 0; i < labels_->size(); ++i) {
        const int y = (*labels_)[i];
        if (y < 0 || y >= num_classes_)
          throw Error(ErrorKind::kInput, "label " + std::to_string(y) + " at row " +
                                             std::to_string(i) + " outside [0, " +
                                             std::to_string(num_classes_) + ")");
      }
    }
  }

  int size() const { return static_cast<int>(features_.rows()); }
  int dim() const { return static_cast<int>(features_.cols()); }
  int num_classes() const { return num_classes_; }
  const Matrix& features() const { return features_; }
  bool has_labels() const { return labels_.has_value(); }
  const Labels& labels() const {
    if (!labels_) throw Error(ErrorKind::kLabelsRequired, "dataset carries no labels");
    return *labels_;
  }
  const std::optional<Labels>& maybe_labels() const { return labels_; }

  // Row indices grouped by class.
  std::vector<std::vector<int>> IndicesByClass() const {
    std::vector<std::vector<int>> out(static_cast<size_t>(num_classes_));
    const auto& y = labels();
    for (int i = 0; i < size(); ++i) out[static_cast<size_t>(y[static_cast<size_t>(i)])].push_back(i);
    return out;
  }

  friend bool operator==(const FeatureDataset& a, const FeatureDataset& b) {
    return a.num_classes_ == b.num_classes_ && a.labels_ == b.labels_ &&
           a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
           a.features_ == b.features_;
  }

 private:
  Matrix features_;
  std::optional<Labels> labels_;
  int num_classes_;
};

inline LabelDistribution empirical_label_distribution(const FeatureDataset& dataset) {
  if (!dataset.has_labels())
    throw Error(ErrorKind::kLabelsRequired, "empirical_label_distribution needs labels");
  std::vector<double> counts(static_cast<size_t>(dataset.num_classes()), 0.0);
  for (int y : dataset.labels()) counts[static_cast<size_t>(y)] += 1.0;
  const double n = dataset.size();
  for (double& c : counts) c /= n;
  return LabelDistribution(std::move(counts));
}

// ---------------------------------------------------------------------------
// PdaTask
// ---------------------------------------------------------------------------
struct PdaTask {
  FeatureDataset source;
  FeatureDataset target;
  int num_classes = 0;
  std::optional<std::set<int>> shared_classes;
};

struct Violation {
  std::string message;
  int class_index = -1;
  int row_index = -1;
};

inline std::vector<Violation> validate_task(const PdaTask& task) {
  std::vector<Violation> out;
  const int k = task.num_classes;
  if (k < 1) out.push_back({"num_classes must be positive"});
  if (task.source.num_classes() != k || task.target.num_classes() != k)
    out.push_back({"dataset num_classes disagrees with task num_classes"});
  if (!task.source.has_labels()) {
    out.push_back({"source labels missing"});
  } else if (k >= 1) {
    std::vector<int> seen(static_cast<size_t>(k), 0);
    for (int y : task.source.labels())
      if (y >= 0 && y < k) seen[static_cast<size_t>(y)] = 1;
    for (int j = 0; j < k; ++j)
      if (!seen[static_cast<size_t>(j)])
        out.push_back({"source lacks class " + std::to_string(j), j, -1});
  }
  if (task.source.dim() != task.target.dim())
    out.push_back({"feature dim mismatch: source " + std::to_string(task.source.dim()) +
                   ", target " + std::to_string(task.target.dim())});
  if (task.shared_classes) {
    if (task.shared_classes->empty()) out.push_back({"shared_classes is empty"});
    for (int j : *task.shared_classes)
      if (j < 0 || j >= k)
        out.push_back({"shared class " + std::to_string(j) + " outside [0, K)", j, -1});
  }
  return out;
}

inline int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (int i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

}  // namespace is2c
