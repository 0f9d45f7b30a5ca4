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

// Controlled partial-domain-adaptation tasks: Gaussian classes, an outlier
// label set absent from the target, and a per-class translation of the target
// class-conditionals.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "is2c/core.hpp"

namespace is2c {

struct GaussianPdaConfig {
  int num_classes = 6;
  int num_target_classes = 3;
  int feature_dim = 16;
  int n_source = 600;
  int n_target = 300;
  double class_separation = 4.0;
  double conditional_shift = 0.0;
  std::optional<LabelDistribution> target_proportions;  // over the shared classes
  std::uint64_t seed = 0;
};

struct ConvexStudyConfig {
  double sigma = 10.0;
  int n = 200;
  std::uint64_t seed = 0;
};

inline void validate(const GaussianPdaConfig& cfg) {
  auto fail = [](const std::string& field) {
    throw Error(ErrorKind::kConfig, "invalid config: " + field);
  };
  if (cfg.num_classes < 1) fail("num_classes");
  if (cfg.num_target_classes < 1 || cfg.num_target_classes > cfg.num_classes)
    fail("num_target_classes");
  if (cfg.feature_dim < 2) fail("feature_dim");
  if (cfg.n_source < cfg.num_classes) fail("n_source");
  if (cfg.n_target < 1) fail("n_target");
  if (!(cfg.class_separation > 0)) fail("class_separation");
  if (!(cfg.conditional_shift >= 0)) fail("conditional_shift");
  if (cfg.target_proportions && cfg.target_proportions->size() != cfg.num_target_classes)
    fail("target_proportions");
}

inline void validate(const ConvexStudyConfig& cfg) {
  if (!(cfg.sigma > 0)) throw Error(ErrorKind::kConfig, "invalid config: sigma");
  if (cfg.n < 4) throw Error(ErrorKind::kConfig, "invalid config: n");
}

namespace detail {

// Haar-ish random rotation from QR of a Gaussian matrix, signs fixed so the
// result depends only on the draws.
inline Matrix RandomRotation(int d, RandomSource& rng) {
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.Normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

inline Vector RandomUnit(int d, RandomSource& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.Normal();
  const double norm = v.norm();
  return norm > 0 ? Vector(v / norm) : Vector(Vector::Unit(d, 0));
}

inline int SampleCategorical(const std::vector<double>& probs, RandomSource& rng) {
  const double u = rng.Uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0) continue;
    last_positive = static_cast<int>(j);
    acc += probs[j];
    if (u < acc) return static_cast<int>(j);
  }
  return last_positive;
}

// Unrotated class means with adjacent spacing `sep`: simplex vertices when
// K <= d, otherwise a square grid in the first two coordinates.
inline Matrix GridMeans(int k, int d, double sep) {
  Matrix means = Matrix::Zero(k, d);
  if (k <= d) {
    for (int j = 0; j < k; ++j) means(j, j) = sep / std::sqrt(2.0);
  } else {
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
    for (int j = 0; j < k; ++j) {
      means(j, 0) = sep * (j % side);
      means(j, 1) = sep * (j / side);
    }
  }
  return means;
}

}  // namespace detail

struct GaussianPdaTruth {
  Matrix source_means;  // K x d
  Matrix target_means;  // K x d (rows for outlier classes are unused)
};

inline PdaTask generate_gaussian_pda(const GaussianPdaConfig& cfg,
                                     GaussianPdaTruth* truth = nullptr) {
  validate(cfg);
  const int k = cfg.num_classes;
  const int kt = cfg.num_target_classes;
  const int d = cfg.feature_dim;
  RandomSource rng(cfg.seed);

  const Matrix rotation = detail::RandomRotation(d, rng);
  const Matrix source_means = detail::GridMeans(k, d, cfg.class_separation) * rotation.transpose();
  Matrix target_means = source_means;
  for (int j = 0; j < k; ++j) {
    const Vector dir = detail::RandomUnit(d, rng);
    target_means.row(j) += cfg.conditional_shift * dir.transpose();
  }

  std::vector<double> source_props(static_cast<size_t>(k), 1.0 / k);
  std::vector<double> target_props(static_cast<size_t>(k), 0.0);
  for (int j = 0; j < kt; ++j)
    target_props[static_cast<size_t>(j)] =
        cfg.target_proportions ? (*cfg.target_proportions)[j] : 1.0 / kt;

  auto draw = [&](int n, const Matrix& means, const std::vector<double>& props, bool cover) {
    Matrix x(n, d);
    Labels y(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int label = (cover && i < k) ? i : detail::SampleCategorical(props, rng);
      y[static_cast<size_t>(i)] = label;
      for (int c = 0; c < d; ++c) x(i, c) = means(label, c) + rng.Normal();
    }
    return FeatureDataset(std::move(x), std::move(y), k);
  };

  FeatureDataset source = draw(cfg.n_source, source_means, source_props, true);
  FeatureDataset target = draw(cfg.n_target, target_means, target_props, false);

  std::set<int> shared;
  for (int j = 0; j < kt; ++j)
    if (target_props[static_cast<size_t>(j)] > 0) shared.insert(j);

  if (truth) *truth = GaussianPdaTruth{source_means, target_means};
  return PdaTask{std::move(source), std::move(target), k, std::move(shared)};
}

struct ConvexStudyData {
  FeatureDataset data;
  Eigen::Vector2d w;
  double b = 0.0;
};

inline int LinearBoundaryLabel(const Eigen::Vector2d& w, double b, double x0, double x1) {
  return w[0] * x0 + w[1] * x1 + b > 0 ? 1 : 0;
}

// n points from N(0, sigma^2 I) in the plane, labelled by a seeded line whose
// offset scales with sigma so the boundary always cuts through the cloud.
inline ConvexStudyData generate_convex_study(const ConvexStudyConfig& cfg) {
  validate(cfg);
  RandomSource rng(cfg.seed);
  const double angle = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  const Eigen::Vector2d w(std::cos(angle), std::sin(angle));
  const double b = 0.25 * cfg.sigma * rng.Uniform(-1.0, 1.0);
  Matrix x(cfg.n, 2);
  Labels y(static_cast<size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    x(i, 0) = cfg.sigma * rng.Normal();
    x(i, 1) = cfg.sigma * rng.Normal();
    y[static_cast<size_t>(i)] = LinearBoundaryLabel(w, b, x(i, 0), x(i, 1));
  }
  return ConvexStudyData{FeatureDataset(std::move(x), std::move(y), 2), w, b};
}

}  // namespace is2c
