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

#include "is2c/synthetic.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace is2c {
namespace {

TEST(GaussianPdaTest, ZeroShiftTargetSubset) {
  GaussianPdaConfig cfg;
  cfg.num_classes = 3;
  cfg.num_target_classes = 2;
  cfg.feature_dim = 4;
  cfg.n_source = 300;
  cfg.n_target = 400;
  cfg.seed = 5;
  GaussianPdaTruth truth;
  const PdaTask t = generate_gaussian_pda(cfg, &truth);
  for (int y : t.target.labels()) EXPECT_LT(y, 2);
  EXPECT_TRUE(validate_task(t).empty());
  EXPECT_EQ(*t.shared_classes, (std::set<int>{0, 1}));
  // Class-0 empirical target mean within 3 sigma / sqrt(n) of the source mean.
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(4);
  int n0 = 0;
  for (int i = 0; i < t.target.size(); ++i)
    if (t.target.labels()[static_cast<size_t>(i)] == 0) {
      mean += t.target.features().row(i);
      ++n0;
    }
  mean /= n0;
  const double tol = 3.0 / std::sqrt(static_cast<double>(n0));
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(mean[c], truth.source_means(0, c), tol);
  EXPECT_EQ(truth.source_means, truth.target_means);
}

TEST(GaussianPdaTest, UniformProportionsConcentrate) {
  GaussianPdaConfig cfg;
  cfg.num_classes = 4;
  cfg.num_target_classes = 4;
  cfg.n_source = 2000;
  cfg.n_target = 2000;
  cfg.seed = 9;
  const PdaTask t = generate_gaussian_pda(cfg);
  EXPECT_LE(tv_distance(empirical_label_distribution(t.source), empirical_label_distribution(t.target)), 0.1);
}

TEST(GaussianPdaTest, Deterministic) {
  GaussianPdaConfig cfg;
  cfg.conditional_shift = 1.0;
  cfg.seed = 3;
  const PdaTask a = generate_gaussian_pda(cfg), b = generate_gaussian_pda(cfg);
  EXPECT_TRUE(a.source == b.source);
  EXPECT_TRUE(a.target == b.target);
  cfg.seed = 4;
  EXPECT_FALSE(generate_gaussian_pda(cfg).source == a.source);
}

TEST(GaussianPdaTest, ShiftMovesMeans) {
  GaussianPdaConfig cfg;
  cfg.conditional_shift = 2.0;
  GaussianPdaTruth truth;
  generate_gaussian_pda(cfg, &truth);
  for (int j = 0; j < cfg.num_classes; ++j)
    EXPECT_NEAR((truth.target_means.row(j) - truth.source_means.row(j)).norm(), 2.0, 1e-12);
}

TEST(GaussianPdaTest, ConfigErrors) {
  GaussianPdaConfig cfg;
  cfg.num_target_classes = 7;
  try {
    generate_gaussian_pda(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    EXPECT_STREQ(e.what(), "config: invalid config: num_target_classes");
  }
  cfg = {};
  cfg.feature_dim = 1;
  EXPECT_THROW(generate_gaussian_pda(cfg), Error);
  cfg = {};
  cfg.n_source = 5;
  EXPECT_THROW(generate_gaussian_pda(cfg), Error);
}

TEST(GaussianPdaTest, MoreClassesThanDims) {
  GaussianPdaConfig cfg;
  cfg.num_classes = 9;
  cfg.num_target_classes = 4;
  cfg.feature_dim = 3;
  GaussianPdaTruth truth;
  const PdaTask t = generate_gaussian_pda(cfg, &truth);
  EXPECT_TRUE(validate_task(t).empty());
  for (int a = 0; a < 9; ++a)
    for (int b = a + 1; b < 9; ++b) EXPECT_GT((truth.source_means.row(a) - truth.source_means.row(b)).norm(), 1.0);
}

TEST(ConvexStudyTest, ShapeAndBoundary) {
  ConvexStudyConfig cfg{10.0, 200, 4};
  const ConvexStudyData s = generate_convex_study(cfg);
  EXPECT_EQ(s.data.size(), 200);
  EXPECT_EQ(s.data.dim(), 2);
  std::set<int> classes(s.data.labels().begin(), s.data.labels().end());
  EXPECT_EQ(classes.size(), 2u);
  for (int i = 0; i < 200; ++i)
    EXPECT_EQ(LinearBoundaryLabel(s.w, s.b, s.data.features()(i, 0), s.data.features()(i, 1)),
              s.data.labels()[static_cast<size_t>(i)]);
}

TEST(ConvexStudyTest, SmallSigmaNearOrigin) {
  const ConvexStudyData s = generate_convex_study({1e-6, 50, 1});
  EXPECT_LT(s.data.features().cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE(std::abs(s.b), 0.25e-6);
}

TEST(ConvexStudyTest, ConfigErrors) {
  EXPECT_THROW(generate_convex_study({0.0, 200, 0}), Error);
  EXPECT_THROW(generate_convex_study({1.0, 3, 0}), Error);
}

}  // namespace
}  // namespace is2c
