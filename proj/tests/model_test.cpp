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

#include "is2c/model.hpp"

#include <cmath>

#include <gtest/gtest.h>

namespace is2c {
namespace {

Matrix RandomMatrix(RandomSource& rng, int r, int c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Normal();
  return m;
}

TEST(InitTest, DeterministicAndScaled) {
  RandomSource a(3), b(3);
  const MlpParams p = init_model(5, 7, 4, 3, a);
  EXPECT_EQ(p, init_model(5, 7, 4, 3, b));
  EXPECT_LE(p.w1.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(5.0));
  EXPECT_LE(p.w2.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(7.0));
  EXPECT_EQ(p.b1.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(p.b3.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(init_model(0, 1, 1, 1, a), Error);
}

TEST(ForwardTest, RowsSumToOneAndZeroInputIsUniform) {
  RandomSource rng(4);
  const MlpParams p = init_model(6, 8, 5, 4, rng);
  const ForwardCache c = forward(p, RandomMatrix(rng, 10, 6));
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_NEAR(c.probs.row(i).sum(), 1.0, 1e-9);
  EXPECT_EQ(c.features.rows(), 10);
  EXPECT_EQ(c.features.cols(), 5);
  EXPECT_EQ(c.z1.cols(), 8);
  const ForwardCache z = forward(p, Matrix::Zero(2, 6));
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(z.probs(0, k), 0.25, 1e-15);
}

TEST(ForwardTest, DuplicateRows) {
  RandomSource rng(5);
  const MlpParams p = init_model(3, 4, 4, 2, rng);
  Matrix x = RandomMatrix(rng, 3, 3);
  x.row(2) = x.row(0);
  const ForwardCache c = forward(p, x);
  EXPECT_EQ(c.probs.row(0), c.probs.row(2));
  EXPECT_EQ(c.features.row(0), c.features.row(2));
}

TEST(ForwardTest, Errors) {
  RandomSource rng(6);
  const MlpParams p = init_model(3, 4, 4, 2, rng);
  try {
    forward(p, Matrix::Zero(2, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
  Matrix x = Matrix::Zero(2, 3);
  x(1, 1) = std::nan("");
  try {
    forward(p, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInput);
  }
}

TEST(RiskTest, Examples) {
  Matrix onehot(2, 3);
  onehot << 0, 1, 0, 1, 0, 0;
  EXPECT_EQ(cross_entropy_risk(onehot, Labels{1, 0}), 0.0);
  EXPECT_NEAR(cross_entropy_risk(Matrix::Constant(3, 4, 0.25), Labels{0, 3, 2}), std::log(4.0), 1e-15);
  Matrix p(1, 2);
  p << 0.8, 0.2;
  EXPECT_NEAR(cross_entropy_risk(p, Labels{0}), 0.22314355131, 1e-10);
  Matrix q(1, 2);
  q << 1.0, 0.0;
  EXPECT_NEAR(cross_entropy_risk(q, Labels{1}), -std::log(1e-12), 1e-9);
}

TEST(PredictTest, ArgmaxAndTies) {
  Matrix p(2, 3);
  p << 0.2, 0.5, 0.3, 0.5, 0.5, 0.0;
  EXPECT_EQ(predict_from_probs(p), (Labels{1, 0}));
}

TEST(PredictTest, MonotoneLogitTransform) {
  RandomSource rng(7);
  const Matrix logits = RandomMatrix(rng, 20, 5);
  const Matrix cubed = logits.array().cube().matrix();
  EXPECT_EQ(predict_from_probs(softmax_rows(logits)), predict_from_probs(softmax_rows(cubed)));
}

// Total loss: soft-target risk plus mu * <F, g(X)> for a fixed feature upstream F.
double TotalLoss(const MlpParams& p, const Matrix& x, const Matrix& t, const Matrix& f, double mu) {
  const ForwardCache c = forward(p, x);
  return soft_target_risk(c.probs, t).value + mu * c.features.cwiseProduct(f).sum();
}

class GradientTest : public ::testing::TestWithParam<HiddenActivation> {};

TEST_P(GradientTest, MatchesCentralDifferences) {
  RandomSource rng(8);
  MlpParams p = init_model(4, 6, 5, 3, rng, GetParam());
  for (Matrix* t : p.tensors()) *t += 0.1 * RandomMatrix(rng, static_cast<int>(t->rows()), static_cast<int>(t->cols()));
  const Matrix x = RandomMatrix(rng, 7, 4);
  Matrix t = Matrix::Zero(7, 3);
  for (int i = 0; i < 7; ++i) t(i, i % 3) = 1.0;
  const Matrix f = RandomMatrix(rng, 7, 5);
  const double mu = 0.7;
  const ForwardCache c = forward(p, x);
  const RiskAndGradient r = soft_target_risk(c.probs, t);
  const MlpGradients g = backward(p, c, Upstream{&r.dlogits, &f, mu});
  auto params = p.tensors();
  auto grads = g.tensors();
  const double h = 1e-5;
  for (size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index i = 0; i < params[k]->size(); ++i) {
      const double orig = params[k]->data()[i];
      params[k]->data()[i] = orig + h;
      const double up = TotalLoss(p, x, t, f, mu);
      params[k]->data()[i] = orig - h;
      const double down = TotalLoss(p, x, t, f, mu);
      params[k]->data()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = grads[k]->data()[i];
      EXPECT_LE(std::abs(fd - an), 1e-5 * std::max(1.0, std::abs(fd))) << MlpParams::kNames[k] << " " << i;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, GradientTest,
                         ::testing::Values(HiddenActivation::kRelu, HiddenActivation::kIdentity));

TEST(BackwardTest, MuZeroAndHeadIsolation) {
  RandomSource rng(9);
  const MlpParams p = init_model(3, 4, 4, 2, rng);
  const Matrix x = RandomMatrix(rng, 5, 3);
  const ForwardCache c = forward(p, x);
  const RiskAndGradient r = soft_target_risk(c.probs, one_hot(Labels{0, 1, 0, 1, 1}, 2));
  const Matrix f = RandomMatrix(rng, 5, 4);
  const MlpGradients pure = backward(p, c, Upstream{&r.dlogits, nullptr, 1.0});
  EXPECT_EQ(backward(p, c, Upstream{&r.dlogits, &f, 0.0}), pure);
  const MlpGradients aligned = backward(p, c, Upstream{&r.dlogits, &f, 3.0});
  EXPECT_EQ(aligned.w3, pure.w3);
  EXPECT_EQ(aligned.b3, pure.b3);
  EXPECT_NE(aligned.w1, pure.w1);
}

TEST(BackwardTest, StaleCache) {
  RandomSource rng(10);
  MlpParams p = init_model(3, 4, 4, 2, rng);
  const ForwardCache c = forward(p, RandomMatrix(rng, 2, 3));
  AdamState s = AdamState::For(p);
  adam_step(p, ZeroGradients(p), s);
  const Matrix d = Matrix::Zero(2, 2);
  try {
    backward(p, c, Upstream{&d, nullptr, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(AdamTest, ZeroGradient) {
  RandomSource rng(11);
  MlpParams p = init_model(3, 4, 4, 2, rng);
  const MlpParams before = p;
  AdamState s = AdamState::For(p);
  adam_step(p, ZeroGradients(p), s);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1u);
}

TEST(AdamTest, ConstantGradientStepsApproachLr) {
  RandomSource rng(12);
  MlpParams p = init_model(2, 3, 3, 2, rng);
  MlpGradients g = ZeroGradients(p);
  for (Matrix* t : g.tensors())
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = (i % 2 == 0 ? 1.0 : -0.5) * (1 + i);
  AdamState s = AdamState::For(p, 1e-3);
  for (int k = 0; k < 200; ++k) {
    const MlpParams before = p;
    adam_step(p, g, s);
    auto now = p.tensors();
    auto was = before.tensors();
    auto gr = g.tensors();
    for (size_t j = 0; j < now.size(); ++j) {
      const Matrix step = *was[j] - *now[j];
      // Bias-corrected moments of a constant gradient equal the gradient, so
      // each step is lr * g / (|g| + eps_hat).
      const Matrix want = (1e-3 * gr[j]->array() / (gr[j]->array().abs() + 1e-8)).matrix();
      EXPECT_LT((step - want).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(AdamTest, Deterministic) {
  auto run = [] {
    RandomSource rng(13);
    MlpParams p = init_model(3, 5, 4, 2, rng);
    const Matrix x = RandomMatrix(rng, 8, 3);
    const Labels y{0, 1, 1, 0, 1, 0, 0, 1};
    AdamState s = AdamState::For(p);
    for (int k = 0; k < 20; ++k) {
      const ForwardCache c = forward(p, x);
      const RiskAndGradient r = soft_target_risk(c.probs, one_hot(y, 2));
      adam_step(p, backward(p, c, Upstream{&r.dlogits, nullptr, 1.0}), s);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace is2c
