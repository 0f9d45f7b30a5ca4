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

// Feature transform g (dense -> rectifier -> dense) and softmax classifier h
// (dense), with hand-written reverse mode and Adam.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "is2c/core.hpp"

namespace is2c {

enum class HiddenActivation { kRelu, kIdentity };

struct MlpParams {
  Matrix w1, b1;  // d x h1, 1 x h1
  Matrix w2, b2;  // h1 x h2, 1 x h2
  Matrix w3, b3;  // h2 x K, 1 x K
  HiddenActivation activation = HiddenActivation::kRelu;
  std::uint64_t version = 0;  // bumped by every optimizer step

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int feature_dim() const { return static_cast<int>(w2.cols()); }
  int num_classes() const { return static_cast<int>(w3.cols()); }

  static constexpr const char* kNames[6] = {"g.layer1.weight", "g.layer1.bias",
                                            "g.layer2.weight", "g.layer2.bias",
                                            "h.weight",        "h.bias"};
  std::vector<Matrix*> tensors() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
  std::vector<const Matrix*> tensors() const { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

  bool operator==(const MlpParams& o) const {
    return activation == o.activation && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2 &&
           w3 == o.w3 && b3 == o.b3;
  }
};

// Same layout as MlpParams; the activation/version fields are unused.
using MlpGradients = MlpParams;

inline MlpGradients ZeroGradients(const MlpParams& p) {
  MlpGradients g = p;
  for (Matrix* t : g.tensors()) t->setZero();
  return g;
}

inline MlpParams init_model(int d, int h1, int h2, int k, RandomSource& rng,
                            HiddenActivation activation = HiddenActivation::kRelu) {
  if (d < 1 || h1 < 1 || h2 < 1 || k < 1)
    throw Error(ErrorKind::kConfig, "init_model: dimensions must be positive");
  auto dense = [&](int fan_in, int fan_out) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.Uniform(-s, s);
    return w;
  };
  MlpParams p;
  p.w1 = dense(d, h1);
  p.b1 = Matrix::Zero(1, h1);
  p.w2 = dense(h1, h2);
  p.b2 = Matrix::Zero(1, h2);
  p.w3 = dense(h2, k);
  p.b3 = Matrix::Zero(1, k);
  p.activation = activation;
  return p;
}

struct ForwardCache {
  Matrix x, z1, a1, features, logits, probs;
  std::uint64_t version = 0;
};

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

inline ForwardCache forward(const MlpParams& p, const Matrix& x) {
  if (x.cols() != p.input_dim())
    throw Error(ErrorKind::kDimension, "forward: input has " + std::to_string(x.cols()) +
                                           " columns, model expects " +
                                           std::to_string(p.input_dim()));
  if (!x.allFinite()) throw Error(ErrorKind::kInput, "forward: non-finite input");
  ForwardCache c;
  c.version = p.version;
  c.x = x;
  c.z1 = (x * p.w1).rowwise() + p.b1.row(0);
  c.a1 = p.activation == HiddenActivation::kRelu ? Matrix(c.z1.cwiseMax(0.0)) : c.z1;
  c.features = (c.a1 * p.w2).rowwise() + p.b2.row(0);
  c.logits = (c.features * p.w3).rowwise() + p.b3.row(0);
  c.probs = softmax_rows(c.logits);
  return c;
}

inline Labels predict_from_probs(const Matrix& probs) {
  Labels out(static_cast<size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out[static_cast<size_t>(i)] = argmax_row(probs.row(i));
  return out;
}

inline Labels predict(const MlpParams& p, const Matrix& x) {
  return predict_from_probs(forward(p, x).probs);
}

// ---------------------------------------------------------------------------
// Risk
// ---------------------------------------------------------------------------

inline constexpr double kLogFloor = 1e-12;

inline Matrix one_hot(const Labels& labels, int k) {
  Matrix t = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw Error(ErrorKind::kInput, "label out of range");
    t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return t;
}

struct RiskAndGradient {
  double value = 0.0;
  Matrix dlogits;
};

// (1/n) sum_i w_i sum_k -T(i,k) log max(p(i,k), 1e-12), with its exact
// gradient through the softmax. Floored entries are constant in the logits.
inline RiskAndGradient soft_target_risk(const Matrix& probs, const Matrix& targets,
                                        const std::vector<double>* weights = nullptr) {
  const Eigen::Index n = probs.rows(), k = probs.cols();
  if (targets.rows() != n || targets.cols() != k)
    throw Error(ErrorKind::kDimension, "soft_target_risk: shape mismatch");
  if (weights && static_cast<Eigen::Index>(weights->size()) != n)
    throw Error(ErrorKind::kDimension, "soft_target_risk: weight count mismatch");
  RiskAndGradient r;
  r.dlogits = Matrix::Zero(n, k);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights ? (*weights)[static_cast<size_t>(i)] : 1.0;
    double active_mass = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double t = targets(i, c);
      if (t == 0.0) continue;
      const double p = probs(i, c);
      if (p > kLogFloor) {
        r.value -= w * inv_n * t * std::log(p);
        active_mass += t;
        r.dlogits(i, c) -= w * inv_n * t;
      } else {
        r.value -= w * inv_n * t * std::log(kLogFloor);
      }
    }
    if (active_mass != 0.0) r.dlogits.row(i) += (w * inv_n * active_mass) * probs.row(i);
  }
  return r;
}

inline double cross_entropy_risk(const Matrix& probs, const Labels& labels) {
  return soft_target_risk(probs, one_hot(labels, static_cast<int>(probs.cols()))).value;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct Upstream {
  const Matrix* dlogits = nullptr;    // gradient of the risk w.r.t. logits
  const Matrix* dfeatures = nullptr;  // gradient of the alignment loss w.r.t. g(x)
  double mu = 1.0;                    // weight on dfeatures
};

// Gradients of risk + mu * alignment. The alignment term reaches g only.
inline MlpGradients backward(const MlpParams& p, const ForwardCache& c, const Upstream& up) {
  if (c.version != p.version)
    throw Error(ErrorKind::kContract, "backward: cache was produced by a different parameter version");
  const Eigen::Index n = c.x.rows();
  MlpGradients g = ZeroGradients(p);
  Matrix dfeat = Matrix::Zero(n, p.feature_dim());
  if (up.dlogits) {
    if (up.dlogits->rows() != n || up.dlogits->cols() != p.num_classes())
      throw Error(ErrorKind::kDimension, "backward: dlogits shape");
    g.w3 = c.features.transpose() * (*up.dlogits);
    g.b3 = up.dlogits->colwise().sum();
    dfeat = (*up.dlogits) * p.w3.transpose();
  }
  if (up.dfeatures && up.mu != 0.0) {
    if (up.dfeatures->rows() != n || up.dfeatures->cols() != p.feature_dim())
      throw Error(ErrorKind::kDimension, "backward: dfeatures shape");
    dfeat += up.mu * (*up.dfeatures);
  }
  g.w2 = c.a1.transpose() * dfeat;
  g.b2 = dfeat.colwise().sum();
  Matrix dz1 = dfeat * p.w2.transpose();
  if (p.activation == HiddenActivation::kRelu)
    dz1 = dz1.cwiseProduct((c.z1.array() > 0.0).cast<double>().matrix());
  g.w1 = c.x.transpose() * dz1;
  g.b1 = dz1.colwise().sum();
  return g;
}

inline void accumulate(MlpGradients& into, const MlpGradients& g) {
  auto dst = into.tensors();
  auto src = g.tensors();
  for (size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Matrix> m, v;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  static AdamState For(const MlpParams& p, double lr = 1e-3) {
    AdamState s;
    s.lr = lr;
    for (const Matrix* t : p.tensors()) {
      s.m.push_back(Matrix::Zero(t->rows(), t->cols()));
      s.v.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
    return s;
  }
};

inline void adam_step(MlpParams& p, const MlpGradients& g, AdamState& s) {
  auto params = p.tensors();
  auto grads = g.tensors();
  if (s.m.size() != params.size()) throw Error(ErrorKind::kContract, "adam_step: state shape");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (size_t i = 0; i < params.size(); ++i) {
    if (grads[i]->rows() != params[i]->rows() || grads[i]->cols() != params[i]->cols())
      throw Error(ErrorKind::kDimension, "adam_step: gradient shape");
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * (*grads[i]);
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i]->cwiseAbs2();
    *params[i] -= (s.lr * (s.m[i] / c1).array() / ((s.v[i] / c2).array().sqrt() + s.eps_hat)).matrix();
  }
  ++p.version;
}

}  // namespace is2c
