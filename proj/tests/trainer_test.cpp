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

#include "is2c/trainer.hpp"

#include <gtest/gtest.h>

#include "is2c/synthetic.hpp"

namespace is2c {
namespace {

PdaTask SmallTask(std::uint64_t seed = 3) {
  GaussianPdaConfig g;
  g.num_classes = 4;
  g.num_target_classes = 2;
  g.feature_dim = 6;
  g.n_source = 120;
  g.n_target = 60;
  g.conditional_shift = 1.0;
  g.seed = seed;
  return generate_gaussian_pda(g);
}

TrainConfig SmallConfig(Variant v = Variant::kIs2c) {
  TrainConfig c;
  c.epochs = 4;
  c.warmup_epochs = 10;
  c.hidden1 = c.hidden2 = 16;
  c.seed = 5;
  c.variant = v;
  return c;
}

void ExpectSameReports(const TrainReport& a, const TrainReport& b) {
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    EXPECT_EQ(a.epochs[i].risk, b.epochs[i].risk);
    EXPECT_EQ(a.epochs[i].align, b.epochs[i].align);
    EXPECT_EQ(a.epochs[i].p_t, b.epochs[i].p_t);
    EXPECT_EQ(a.epochs[i].target_accuracy, b.epochs[i].target_accuracy);
  }
}

TEST(WarmStartTest, ZeroEpochsIsIdentity) {
  const PdaTask task = SmallTask();
  RandomSource rng(1);
  const MlpParams p = init_model(6, 8, 8, 4, rng);
  EXPECT_EQ(warm_start(p, task.source, 0, 1e-3), p);
}

TEST(WarmStartTest, SeparableSourceIsFitted) {
  RandomSource data(2);
  Matrix x(200, 2);
  Labels y(200);
  for (int i = 0; i < 200; ++i) {
    y[static_cast<size_t>(i)] = i % 2;
    x(i, 0) = (i % 2 == 0 ? -2.0 : 2.0) + 0.5 * data.Normal();
    x(i, 1) = data.Normal();
  }
  const FeatureDataset src(x, y, 2);
  RandomSource rng(3);
  const MlpParams p = warm_start(init_model(2, 16, 16, 2, rng), src, 200, 1e-3);
  EXPECT_GE(accuracy(predict(p, x), y), 0.95);
  RandomSource rng2(3);
  EXPECT_EQ(warm_start(init_model(2, 16, 16, 2, rng2), src, 200, 1e-3), p);
}

TEST(WarmStartTest, RequiresLabels) {
  const FeatureDataset unlabeled(Matrix::Zero(3, 2), std::nullopt, 2);
  RandomSource rng(1);
  EXPECT_THROW(warm_start(init_model(2, 4, 4, 2, rng), unlabeled, 5, 1e-3), Error);
}

// Reproduces the sampling-only loop from public pieces: pseudo-label, BBSE,
// sample, source ERM step on the sampled points.
TEST(TrainTest, SamplingOnlyMatchesManualLoopAtThetaZero) {
  const PdaTask task = SmallTask();
  TrainConfig cfg = SmallConfig(Variant::kSamplingOnly);
  cfg.sampling.fixed_theta = 0.0;
  const auto [params, report] = train_baseline(task, cfg);

  const int k = task.num_classes;
  RandomSource rng(cfg.seed);
  RandomSource init_rng = rng.Split();
  RandomSource loop_rng = rng.Split();
  MlpParams p = warm_start(init_model(6, 16, 16, k, init_rng), task.source, cfg.warmup_epochs, cfg.lr);
  AdamState adam = AdamState::For(p, cfg.lr);
  const LabelDistribution p_s = empirical_label_distribution(task.source);
  for (int e = 0; e < cfg.epochs; ++e) {
    const Labels ps = predict(p, task.source.features());
    const Labels pt = predict(p, task.target.features());
    const LabelDistribution p_t = target_label_distribution(
        p_s, bbse_estimate(confusion_matrix(ps, task.source.labels(), k), pseudo_label_marginal(pt, k), p_s));
    EXPECT_EQ(report.epochs[static_cast<size_t>(e)].p_t, p_t.probs());
    const SamplingDomain dom = build_sampling_domain(task.source, p_t, cfg.sampling, loop_rng);
    for (Eigen::Index i = 0; i < dom.data.features().rows(); ++i) {
      const int src_row = dom.pairs[static_cast<size_t>(i)].second;
      ASSERT_EQ(dom.data.features().row(i), task.source.features().row(src_row));
    }
    const ForwardCache c = forward(p, dom.data.features());
    const RiskAndGradient r = soft_target_risk(c.probs, one_hot(dom.data.labels(), k));
    EXPECT_NEAR(report.epochs[static_cast<size_t>(e)].risk, r.value, 1e-12);
    adam_step(p, backward(p, c, Upstream{&r.dlogits, nullptr, 0.0}), adam);
  }
  EXPECT_EQ(p, params);
}

TEST(TrainTest, LossDecomposition) {
  const PdaTask task = SmallTask();
  TrainConfig cfg = SmallConfig(Variant::kEticOnly);
  cfg.mu = 0.3;
  const auto [params, report] = train_baseline(task, cfg);
  for (const auto& rec : report.epochs) {
    EXPECT_NEAR(rec.total, rec.risk + 0.3 * rec.align, 1e-12);
    EXPECT_GT(rec.align, 0.0);
  }
  // Epoch 0 risk is the source cross-entropy of the warm-started model.
  RandomSource rng(cfg.seed);
  RandomSource init_rng = rng.Split();
  const MlpParams p0 =
      warm_start(init_model(6, 16, 16, 4, init_rng), task.source, cfg.warmup_epochs, cfg.lr);
  EXPECT_NEAR(report.epochs[0].risk,
              cross_entropy_risk(forward(p0, task.source.features()).probs, task.source.labels()), 1e-12);
}

TEST(TrainTest, Deterministic) {
  const PdaTask task = SmallTask();
  const auto a = train_is2c(task, SmallConfig());
  const auto b = train_is2c(task, SmallConfig());
  EXPECT_EQ(a.first, b.first);
  ExpectSameReports(a.second, b.second);
}

TEST(TrainTest, TargetLabelsNeverReachGradients) {
  const PdaTask task = SmallTask();
  PdaTask blind = task;
  blind.target = FeatureDataset(task.target.features(), std::nullopt, task.num_classes);
  blind.shared_classes.reset();
  for (Variant v : {Variant::kIs2c, Variant::kMixupEtic}) {
    const auto a = train_baseline(task, SmallConfig(v));
    const auto b = train_baseline(blind, SmallConfig(v));
    EXPECT_EQ(a.first, b.first) << VariantName(v);
    EXPECT_TRUE(a.second.final_target_accuracy.has_value());
    EXPECT_FALSE(b.second.final_target_accuracy.has_value());
  }
}

TEST(TrainTest, AllVariantsRun) {
  const PdaTask task = SmallTask();
  for (Variant v : {Variant::kIs2c, Variant::kSourceOnly, Variant::kSamplingOnly, Variant::kEticOnly,
                    Variant::kWermEtic, Variant::kMixupEtic, Variant::kIs2cHsic}) {
    const auto [params, report] = train_baseline(task, SmallConfig(v));
    ASSERT_EQ(report.epochs.size(), 4u) << VariantName(v);
    EXPECT_EQ(report.variant, v);
    for (const auto& rec : report.epochs) {
      double sum = 0.0;
      for (double q : rec.p_t) sum += q;
      EXPECT_NEAR(sum, 1.0, 1e-9);
      EXPECT_TRUE(rec.target_accuracy.has_value());
      EXPECT_TRUE(std::isfinite(rec.total));
    }
    const bool no_align = v == Variant::kSourceOnly || v == Variant::kSamplingOnly;
    EXPECT_EQ(report.mu, no_align ? 0.0 : 1.0);
    if (no_align) EXPECT_EQ(report.epochs.back().align, 0.0);
    EXPECT_EQ(ParseVariant(VariantName(v)), v);
  }
}

TEST(TrainTest, MinibatchRuns) {
  const PdaTask task = SmallTask();
  TrainConfig cfg = SmallConfig();
  cfg.batch_size = 50;
  const auto [params, report] = train_is2c(task, cfg);
  EXPECT_EQ(report.epochs.size(), 4u);
  EXPECT_NE(params, train_is2c(task, SmallConfig()).first);
}

TEST(TrainTest, Errors) {
  const PdaTask task = SmallTask();
  TrainConfig cfg = SmallConfig();
  cfg.epochs = 0;
  EXPECT_THROW(train_is2c(task, cfg), Error);
  cfg = SmallConfig();
  cfg.mu = -1;
  EXPECT_THROW(train_is2c(task, cfg), Error);
  EXPECT_THROW(ParseVariant("dann"), Error);
  PdaTask bad = task;
  bad.source = FeatureDataset(task.source.features(), std::nullopt, task.num_classes);
  EXPECT_THROW(train_is2c(bad, SmallConfig()), Error);
}

}  // namespace
}  // namespace is2c
