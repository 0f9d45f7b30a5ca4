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

#include "is2c/sampling.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace is2c {
namespace {

FeatureDataset SmallSource() {
  Matrix x(5, 2);
  x << 0, 0, 2, 2, 10, 10, 12, 14, -5, 3;
  return FeatureDataset(x, Labels{0, 0, 1, 1, 2}, 3);
}

TEST(DrawMixRatioTest, Fixed) {
  SamplingConfig cfg;
  cfg.fixed_theta = 0.5;
  RandomSource rng(0);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(draw_mix_ratio(cfg, rng), 0.5);
}

TEST(DrawMixRatioTest, BetaMoments) {
  SamplingConfig cfg;
  RandomSource rng(1);
  const int n = 100000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double t = draw_mix_ratio(cfg, rng);
    ASSERT_GE(t, 0.0);
    ASSERT_LE(t, 1.0);
    s += t;
    s2 += t * t;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  const double a = cfg.alpha;
  EXPECT_NEAR(mean, 0.5, 0.01);
  EXPECT_NEAR(var, a * a / ((2 * a) * (2 * a) * (2 * a + 1)), 0.005);
}

TEST(SamplingConfigTest, Invalid) {
  SamplingConfig c;
  c.alpha = 0;
  EXPECT_THROW(validate(c), Error);
  c = {};
  c.n_c = 0;
  EXPECT_THROW(validate(c), Error);
  c = {};
  c.fixed_theta = 1.5;
  EXPECT_THROW(validate(c), Error);
}

TEST(SamplingDomainTest, ThetaZeroCopiesSourcePoints) {
  const FeatureDataset src = SmallSource();
  SamplingConfig cfg;
  cfg.fixed_theta = 0.0;
  cfg.n_c = 200;
  RandomSource rng(3);
  const SamplingDomain d = build_sampling_domain(src, LabelDistribution({0.4, 0.4, 0.2}), cfg, rng);
  for (int i = 0; i < d.data.size(); ++i) {
    const int l = d.pairs[static_cast<size_t>(i)].second;
    EXPECT_EQ(d.data.features().row(i), src.features().row(l));
    EXPECT_EQ(src.labels()[static_cast<size_t>(l)], d.data.labels()[static_cast<size_t>(i)]);
  }
}

TEST(SamplingDomainTest, HalfThetaTwoPointClass) {
  const FeatureDataset src = SmallSource();
  SamplingConfig cfg;
  cfg.fixed_theta = 0.5;
  cfg.n_c = 300;
  RandomSource rng(4);
  const SamplingDomain d = build_sampling_domain(src, LabelDistribution({1.0, 0.0, 0.0}), cfg, rng);
  const Eigen::RowVector2d u(0, 0), v(2, 2), mid(1, 1);
  int mids = 0;
  for (int i = 0; i < d.data.size(); ++i) {
    const Eigen::RowVector2d p = d.data.features().row(i);
    EXPECT_TRUE(p == u || p == v || p == mid);
    mids += p == mid;
  }
  EXPECT_GT(mids, 0);
}

TEST(SamplingDomainTest, LabelLawAndNullClasses) {
  GaussianPdaConfig g;
  g.num_classes = 3;
  g.num_target_classes = 3;
  g.feature_dim = 3;
  g.n_source = 60;
  const PdaTask t = generate_gaussian_pda(g);
  SamplingConfig cfg;
  cfg.n_c = 100000;
  RandomSource rng(8);
  const LabelDistribution pt({0.8, 0.2, 0.0});
  const SamplingDomain d = build_sampling_domain(t.source, pt, cfg, rng);
  const auto emp = empirical_label_distribution(d.data);
  EXPECT_NEAR(emp[0], 0.8, 0.01);
  EXPECT_NEAR(emp[1], 0.2, 0.01);
  EXPECT_EQ(emp[2], 0.0);
}

TEST(SamplingDomainTest, PointsLieOnSameClassSegments) {
  GaussianPdaConfig g;
  g.feature_dim = 5;
  const PdaTask t = generate_gaussian_pda(g);
  SamplingConfig cfg;
  cfg.n_c = 2000;
  RandomSource rng(9);
  const SamplingDomain d = build_sampling_domain(t.source, LabelDistribution::Uniform(6), cfg, rng);
  const Matrix& xs = t.source.features();
  for (int i = 0; i < d.data.size(); ++i) {
    const auto [k, l] = d.pairs[static_cast<size_t>(i)];
    const int y = d.data.labels()[static_cast<size_t>(i)];
    EXPECT_EQ(t.source.labels()[static_cast<size_t>(k)], y);
    EXPECT_EQ(t.source.labels()[static_cast<size_t>(l)], y);
    const double th = d.thetas[static_cast<size_t>(i)];
    EXPECT_LE((d.data.features().row(i) - (th * xs.row(k) + (1 - th) * xs.row(l))).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SamplingDomainTest, DefaultSizeIsTwiceSource) {
  const FeatureDataset src = SmallSource();
  RandomSource rng(1);
  EXPECT_EQ(build_sampling_domain(src, LabelDistribution::Uniform(3), {}, rng).data.size(), 10);
}

TEST(SamplingDomainTest, UnsatisfiableClass) {
  const FeatureDataset src(Matrix::Zero(3, 2), Labels{0, 0, 1}, 3);
  RandomSource rng(1);
  try {
    build_sampling_domain(src, LabelDistribution({0.5, 0.0, 0.5}), {}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsatisfiableClass);
  }
  EXPECT_NO_THROW(build_sampling_domain(src, LabelDistribution({0.5, 0.5, 0.0}), {}, rng));
}

TEST(SamplingDomainTest, Deterministic) {
  const FeatureDataset src = SmallSource();
  RandomSource a(5), b(5);
  const auto da = build_sampling_domain(src, LabelDistribution::Uniform(3), {}, a);
  const auto db = build_sampling_domain(src, LabelDistribution::Uniform(3), {}, b);
  EXPECT_TRUE(da.data == db.data);
}

}  // namespace
}  // namespace is2c
