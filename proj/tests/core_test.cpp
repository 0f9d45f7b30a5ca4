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

#include "is2c/core.hpp"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

namespace is2c {
namespace {

FeatureDataset Labelled(const Labels& y, int k, int d = 2) {
  return FeatureDataset(Matrix::Zero(static_cast<Eigen::Index>(y.size()), d), y, k);
}

TEST(LabelDistributionTest, EmpiricalCounts) {
  EXPECT_EQ(empirical_label_distribution(Labelled({0, 0, 1, 1}, 2)).probs(), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(empirical_label_distribution(Labelled({0, 0, 0, 1}, 2)).probs(), (std::vector<double>{0.75, 0.25}));
  EXPECT_EQ(empirical_label_distribution(Labelled({2, 2, 2, 2}, 3)).probs(), (std::vector<double>{0, 0, 1}));
}

TEST(LabelDistributionTest, MissingLabelsRejected) {
  FeatureDataset unlabelled(Matrix::Zero(3, 2), std::nullopt, 2);
  try {
    empirical_label_distribution(unlabelled);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLabelsRequired);
  }
}

TEST(LabelDistributionTest, RejectsBadMass) {
  EXPECT_THROW(LabelDistribution({0.5, 0.6}), Error);
  EXPECT_THROW(LabelDistribution({1.5, -0.5}), Error);
  EXPECT_NO_THROW(LabelDistribution({0.5, 0.5 + 1e-12}));
}

TEST(TvDistanceTest, Values) {
  const LabelDistribution a({0.75, 0.25}), b({0.5, 0.5});
  EXPECT_DOUBLE_EQ(tv_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(tv_distance(LabelDistribution({1, 0}), LabelDistribution({0, 1})), 2.0);
  EXPECT_DOUBLE_EQ(tv_distance(a, b), 0.5);
  try {
    tv_distance(a, LabelDistribution::Uniform(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(ValidateTaskTest, WellFormed) {
  PdaTask t{Labelled({0, 1, 2}, 3), Labelled({0, 1}, 3), 3, std::set<int>{0, 1}};
  EXPECT_TRUE(validate_task(t).empty());
}

TEST(ValidateTaskTest, MissingSourceClass) {
  PdaTask t{Labelled({0, 1, 1}, 3), Labelled({0}, 3), 3, std::nullopt};
  const auto v = validate_task(t);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].message, "source lacks class 2");
  EXPECT_EQ(v[0].class_index, 2);
}

TEST(ValidateTaskTest, DimensionMismatch) {
  PdaTask t{Labelled({0, 1}, 2, 4), Labelled({0}, 2, 5), 2, std::nullopt};
  const auto v = validate_task(t);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].message.rfind("feature dim mismatch", 0), 0u);
}

TEST(FeatureDatasetTest, RejectsOutOfRangeLabel) {
  EXPECT_THROW(Labelled({0, 3}, 3), Error);
  EXPECT_THROW(FeatureDataset(Matrix::Zero(2, 2), Labels{0}, 2), Error);
}

TEST(ArgmaxTest, TiesGoLow) {
  Eigen::RowVectorXd r(3);
  r << 0.2, 0.5, 0.3;
  EXPECT_EQ(argmax_row(r), 1);
  Eigen::RowVectorXd t(2);
  t << 0.5, 0.5;
  EXPECT_EQ(argmax_row(t), 0);
}

TEST(RandomSourceTest, Deterministic) {
  RandomSource a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.NextU64();
    EXPECT_EQ(x, b.NextU64());
    EXPECT_NE(x, c.NextU64());
  }
}

TEST(RandomSourceTest, NormalMoments) {
  RandomSource rng(1);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.Normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(RandomSourceTest, GammaMean) {
  RandomSource rng(2);
  for (double shape : {0.2, 1.0, 3.5}) {
    double s = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += rng.Gamma(shape);
    EXPECT_NEAR(s / n, shape, 0.03 * std::max(1.0, shape)) << shape;
  }
}

TEST(RandomSourceTest, BelowIsInRangeAndCoversAll) {
  RandomSource rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.Below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

}  // namespace
}  // namespace is2c
