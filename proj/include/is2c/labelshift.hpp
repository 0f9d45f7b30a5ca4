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

// Black-box shift estimation: recover the label ratio a = p_t(Y) / p_s(Y)
// from the source joint confusion matrix and the target pseudo-label
// marginal by
//
//   min_a || p_hat_t - M a ||^2   s.t.  a >= 0,  a^T p_s = 1.
//
// With b = a .* p_s the feasible set is the probability simplex, so the
// problem is solved by projected gradient descent with step 1/L.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "is2c/core.hpp"

namespace is2c {

// M(i, j) = p_s(Y_hat = i, Y = j).
struct ConfusionMatrix {
  Eigen::MatrixXd joint;

  int num_classes() const { return static_cast<int>(joint.rows()); }
  // Column sums, i.e. the source label marginal implied by M.
  Vector label_marginal() const { return joint.colwise().sum().transpose(); }
};

struct ImportanceWeights {
  Vector a;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;              // projected-gradient residual, sup norm
  std::vector<double> objective_trace;  // ||p_hat_t - M a_k||^2 for k = 0..iterations
};

struct BbseOptions {
  int max_iters = 5000;
  double tol = 1e-8;
};

inline ConfusionMatrix confusion_matrix(const Labels& preds, const Labels& labels, int k) {
  if (preds.size() != labels.size())
    throw Error(ErrorKind::kDimension, "confusion_matrix: length mismatch");
  if (preds.empty()) throw Error(ErrorKind::kInput, "confusion_matrix: empty input");
  ConfusionMatrix m{Eigen::MatrixXd::Zero(k, k)};
  const double w = 1.0 / static_cast<double>(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i], y = labels[i];
    if (p < 0 || p >= k || y < 0 || y >= k)
      throw Error(ErrorKind::kInput, "confusion_matrix: label out of range at " + std::to_string(i));
    m.joint(p, y) += w;
  }
  return m;
}

inline LabelDistribution pseudo_label_marginal(const Labels& preds, int k) {
  if (preds.empty()) throw Error(ErrorKind::kInput, "pseudo_label_marginal: empty input");
  std::vector<double> probs(static_cast<size_t>(k), 0.0);
  for (size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    if (p < 0 || p >= k)
      throw Error(ErrorKind::kInput, "pseudo_label_marginal: label out of range at " + std::to_string(i));
    probs[static_cast<size_t>(p)] += 1.0;
  }
  for (double& p : probs) p /= static_cast<double>(preds.size());
  return LabelDistribution(std::move(probs));
}

// Euclidean projection onto { x >= 0, sum x = 1 }.
inline Vector project_to_simplex(const Vector& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, tau = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumsum += u[static_cast<size_t>(i)];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<size_t>(i)] - t > 0) tau = t;
  }
  return (v.array() - tau).max(0.0).matrix();
}

inline ImportanceWeights bbse_estimate(const ConfusionMatrix& m, const LabelDistribution& p_hat_t,
                                       const LabelDistribution& p_s, BbseOptions opts = {}) {
  const int k = m.num_classes();
  if (p_hat_t.size() != k || p_s.size() != k)
    throw Error(ErrorKind::kDimension, "bbse_estimate: K mismatch");
  Vector ps(k), pt(k);
  for (int j = 0; j < k; ++j) {
    ps[j] = p_s[j];
    pt[j] = p_hat_t[j];
    if (!(ps[j] > 0))
      throw Error(ErrorKind::kInvalidSource,
                  "bbse_estimate: source has no mass on class " + std::to_string(j));
  }
  const Vector col = m.label_marginal();
  if ((col - ps).cwiseAbs().maxCoeff() > 1e-6)
    throw Error(ErrorKind::kContract, "bbse_estimate: confusion columns do not sum to p_s");

  // G = M diag(1/p_s): the conditional confusion p(Y_hat = i | Y = j).
  const Eigen::MatrixXd g = m.joint * ps.cwiseInverse().asDiagonal();
  const double sigma_max = Eigen::JacobiSVD<Eigen::MatrixXd>(g).singularValues()(0);
  const double lip = std::max(sigma_max * sigma_max, 1e-300);
  const double step = 1.0 / lip;

  auto objective = [&](const Vector& b) { return (pt - g * b).squaredNorm(); };

  ImportanceWeights out;
  Vector b = ps;  // a = 1
  out.objective_trace.push_back(objective(b));
  for (int it = 0; it < opts.max_iters; ++it) {
    const Vector grad = g.transpose() * (g * b - pt);
    const Vector next = project_to_simplex(b - step * grad);
    const double residual = (next - b).cwiseAbs().maxCoeff() * lip;
    b = next;
    out.iterations = it + 1;
    out.residual = residual;
    out.objective_trace.push_back(objective(b));
    if (residual <= opts.tol) {
      out.converged = true;
      break;
    }
  }
  if (opts.max_iters == 0) {
    const Vector grad = g.transpose() * (g * b - pt);
    out.residual = (project_to_simplex(b - step * grad) - b).cwiseAbs().maxCoeff() * lip;
    out.converged = out.residual <= opts.tol;
  }
  out.a = b.cwiseQuotient(ps);
  return out;
}

inline LabelDistribution target_label_distribution(const LabelDistribution& p_s,
                                                   const ImportanceWeights& w,
                                                   double floor_threshold = 1e-4) {
  if (w.a.size() != p_s.size())
    throw Error(ErrorKind::kDimension, "target_label_distribution: K mismatch");
  std::vector<double> probs(static_cast<size_t>(p_s.size()));
  double sum = 0.0;
  for (int j = 0; j < p_s.size(); ++j) {
    double v = p_s[j] * w.a[j];
    if (!(v >= floor_threshold)) v = 0.0;
    probs[static_cast<size_t>(j)] = v;
    sum += v;
  }
  if (!(sum > 0))
    throw Error(ErrorKind::kDegenerateEstimate, "every class fell below the floor threshold");
  for (double& p : probs) p /= sum;
  return LabelDistribution(std::move(probs));
}

}  // namespace is2c
