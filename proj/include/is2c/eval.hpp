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

// Diagnostics: prediction errors, the sampling-domain generalization bound,
// Lipschitz estimates, class-wise A-distance and the convex-model risk study.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "is2c/core.hpp"
#include "is2c/etic.hpp"
#include "is2c/labelshift.hpp"
#include "is2c/model.hpp"
#include "is2c/sampling.hpp"
#include "is2c/synthetic.hpp"

namespace is2c {

inline double model_error(const Labels& preds, const Labels& labels, int /*k*/ = 0) {
  if (preds.size() != labels.size()) throw Error(ErrorKind::kDimension, "model_error: length mismatch");
  if (preds.empty()) throw Error(ErrorKind::kUndefinedInput, "model_error: empty input");
  size_t wrong = 0;
  for (size_t i = 0; i < preds.size(); ++i) wrong += preds[i] != labels[i];
  return static_cast<double>(wrong) / static_cast<double>(preds.size());
}

inline double accuracy(const Labels& preds, const Labels& labels) {
  return 1.0 - model_error(preds, labels);
}

// Per-class rates p(Y_hat = i | Y = j) as a K x K matrix (column j), with the
// number of samples of each class.
struct ConditionalRates {
  Eigen::MatrixXd rates;
  std::vector<int> counts;
};

inline ConditionalRates conditional_rates(const Labels& preds, const Labels& labels, int k) {
  if (preds.size() != labels.size())
    throw Error(ErrorKind::kDimension, "conditional_rates: length mismatch");
  ConditionalRates r{Eigen::MatrixXd::Zero(k, k), std::vector<int>(static_cast<size_t>(k), 0)};
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k || preds[i] < 0 || preds[i] >= k)
      throw Error(ErrorKind::kInput, "conditional_rates: label out of range");
    r.rates(preds[i], labels[i]) += 1.0;
    r.counts[static_cast<size_t>(labels[i])]++;
  }
  for (int j = 0; j < k; ++j)
    if (r.counts[static_cast<size_t>(j)] > 0) r.rates.col(j) /= r.counts[static_cast<size_t>(j)];
  return r;
}

// max over represented classes j of p(Y_hat != j | Y = j).
inline double balanced_prediction_error(const Labels& preds, const Labels& labels, int k) {
  const auto r = conditional_rates(preds, labels, k);
  double worst = -1.0;
  for (int j = 0; j < k; ++j)
    if (r.counts[static_cast<size_t>(j)] > 0) worst = std::max(worst, 1.0 - r.rates(j, j));
  if (worst < 0) throw Error(ErrorKind::kUndefinedInput, "balanced_prediction_error: no labelled samples");
  return worst;
}

namespace detail {

inline double ConditionalGapFromRates(const Eigen::MatrixXd& rs, const Eigen::MatrixXd& rt,
                                      const LabelDistribution& p_t) {
  const int k = p_t.size();
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    if (!(p_t[j] > 0)) continue;
    double worst = 0.0;
    for (int i = 0; i < k; ++i)
      if (i != j) worst = std::max(worst, std::abs(rs(i, j) - rt(i, j)));
    sum += p_t[j] * worst;
  }
  return sum;
}

}  // namespace detail

// sum_j p_t[j] * max_{i != j} | p_s(Y_hat = i | Y = j) - p_t(Y_hat = i | Y = j) |.
inline double conditional_error_gap(const Labels& preds_s, const Labels& labels_s,
                                    const Labels& preds_t, const Labels& labels_t,
                                    const LabelDistribution& p_t, int k) {
  if (p_t.size() != k) throw Error(ErrorKind::kDimension, "conditional_error_gap: K mismatch");
  const auto rs = conditional_rates(preds_s, labels_s, k);
  const auto rt = conditional_rates(preds_t, labels_t, k);
  for (int j = 0; j < k; ++j) {
    if (!(p_t[j] > 0)) continue;
    if (rs.counts[static_cast<size_t>(j)] == 0)
      throw Error(ErrorKind::kUndefinedInput, "conditional_error_gap: class " + std::to_string(j) +
                                                  " missing from source labels");
    if (rt.counts[static_cast<size_t>(j)] == 0)
      throw Error(ErrorKind::kUndefinedInput, "conditional_error_gap: class " + std::to_string(j) +
                                                  " missing from target labels");
  }
  return detail::ConditionalGapFromRates(rs.rates, rt.rates, p_t);
}

// max_j E[ ||x|| | y = j ] over the source classes.
inline double source_norm_constant(const FeatureDataset& source) {
  const auto groups = source.IndicesByClass();
  double best = 0.0;
  for (const auto& idx : groups) {
    if (idx.empty()) continue;
    double s = 0.0;
    for (int i : idx) s += source.features().row(i).norm();
    best = std::max(best, s / static_cast<double>(idx.size()));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Lipschitz constants
// ---------------------------------------------------------------------------

using VectorMap = std::function<Matrix(const Matrix&)>;

// Empirical lower estimate of the l2 -> l2 Lipschitz constant of f: running
// max of ||f(x) - f(x')|| / ||x - x'|| over random row pairs, each followed by
// a pair (x, x + delta u) with a small random direction u.
inline double estimate_lipschitz(const VectorMap& f, const Matrix& x, int num_pairs, RandomSource& rng) {
  if (num_pairs < 1) throw Error(ErrorKind::kConfig, "estimate_lipschitz: num_pairs must be >= 1");
  const Eigen::Index n = x.rows(), d = x.cols();
  const double scale = std::max(1e-12, x.cwiseAbs().maxCoeff());
  double best = 0.0;
  Matrix pair(2, d);
  auto ratio = [&](const Matrix& p) {
    const double dx = (p.row(0) - p.row(1)).norm();
    if (!(dx > 0)) return 0.0;
    const Matrix out = f(p);
    return (out.row(0) - out.row(1)).norm() / dx;
  };
  for (int t = 0; t < num_pairs; ++t) {
    const auto i = static_cast<Eigen::Index>(rng.Below(static_cast<std::uint64_t>(n)));
    const auto j = static_cast<Eigen::Index>(rng.Below(static_cast<std::uint64_t>(n)));
    pair.row(0) = x.row(i);
    pair.row(1) = x.row(j);
    best = std::max(best, ratio(pair));
    Eigen::RowVectorXd u(d);
    for (Eigen::Index c = 0; c < d; ++c) u[c] = rng.Normal();
    if (u.norm() > 0) u /= u.norm();
    pair.row(1) = x.row(i) + 1e-4 * scale * u;
    best = std::max(best, ratio(pair));
  }
  return best;
}

inline double estimate_lipschitz(const MlpParams& p, const Matrix& x, int num_pairs, RandomSource& rng) {
  return estimate_lipschitz([&p](const Matrix& m) { return forward(p, m).probs; }, x, num_pairs, rng);
}

inline double spectral_norm(const Matrix& w) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(Eigen::MatrixXd(w)).singularValues()(0);
}

// Upper bound: product of layer operator norms. The rectifier and the softmax
// are both 1-Lipschitz in l2.
inline double certified_lipschitz(const MlpParams& p) {
  return spectral_norm(p.w1) * spectral_norm(p.w2) * spectral_norm(p.w3);
}

// ---------------------------------------------------------------------------
// Bound report
// ---------------------------------------------------------------------------

enum class LipschitzMode { kEmpirical, kCertified };

struct BoundOptions {
  LipschitzMode lipschitz = LipschitzMode::kEmpirical;
  int lipschitz_pairs = 2000;
  // Classes with at most this many ordered source pairs are evaluated on the
  // exact mixing law; larger ones fall back to the drawn sampling domain.
  long long max_enumerated_pairs = 4'000'000;
};

struct BoundReport {
  double eps_c = 0.0;
  double eps_t = 0.0;
  double delta_be = 0.0;
  double delta_ce = 0.0;
  double label_l1 = 0.0;
  double term_label = 0.0;
  double term_cond = 0.0;
  double term_mix = 0.0;
  double lipschitz_estimate = 0.0;
  bool lipschitz_certified = false;
  double theta = 0.0;
  double c_s = 0.0;
  double rhs_total = 0.0;
  double gap = 0.0;
  double slack = 0.0;
  bool holds = false;
  int num_classes = 0;
  std::vector<double> p_c, p_t;
  bool exact_sampling_law = true;
};

namespace detail {

// p(Y_hat = i | Y = j) under the sampling law of class j: theta x_k +
// (1 - theta) x_l with k, l uniform over the class, enumerated exactly.
inline Eigen::MatrixXd SamplingLawRates(const MlpParams& p, const FeatureDataset& source,
                                        const SamplingDomain& sampling, double theta,
                                        long long max_pairs, bool* exact) {
  const int k = source.num_classes();
  Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(k, k);
  const auto groups = source.IndicesByClass();
  const Matrix& xs = source.features();
  for (int j = 0; j < k; ++j) {
    const auto& idx = groups[static_cast<size_t>(j)];
    const long long m = static_cast<long long>(idx.size());
    if (m == 0) continue;
    if (m * m <= max_pairs) {
      const Eigen::Index block = std::max<Eigen::Index>(1, 65536 / std::max<long long>(1, m));
      for (Eigen::Index start = 0; start < m; start += block) {
        const Eigen::Index rows_k = std::min<Eigen::Index>(block, m - start);
        Matrix batch(rows_k * m, xs.cols());
        for (Eigen::Index a = 0; a < rows_k; ++a)
          for (Eigen::Index b = 0; b < m; ++b)
            batch.row(a * m + b) = theta * xs.row(idx[static_cast<size_t>(start + a)]) +
                                   (1.0 - theta) * xs.row(idx[static_cast<size_t>(b)]);
        for (int y : predict(p, batch)) rates(y, j) += 1.0;
      }
      rates.col(j) /= static_cast<double>(m * m);
    } else {
      *exact = false;
      std::vector<int> rows;
      const auto& ys = sampling.data.labels();
      for (int i = 0; i < sampling.data.size(); ++i)
        if (ys[static_cast<size_t>(i)] == j) rows.push_back(i);
      if (rows.empty()) continue;
      Matrix batch(static_cast<Eigen::Index>(rows.size()), xs.cols());
      for (size_t r = 0; r < rows.size(); ++r)
        batch.row(static_cast<Eigen::Index>(r)) = sampling.data.features().row(rows[r]);
      for (int y : predict(p, batch)) rates(y, j) += 1.0;
      rates.col(j) /= static_cast<double>(rows.size());
    }
  }
  return rates;
}

}  // namespace detail

// Terms of |eps_t - eps_c| <= ||p_c - p_t||_1 * D_BE(P_c) + (K-1) D_CE
//                               + 2 l (K-1) sqrt(theta (1 - theta)) C_s.
//
// P_c is the law the sampling domain was drawn from: label marginal = the
// drawn domain's label frequencies, class-conditionals = the exact pair
// mixture over source points. Target quantities use the target's true labels.
inline BoundReport bound_report(const MlpParams& p, const PdaTask& task, const SamplingDomain& sampling,
                                double theta_fixed, RandomSource& rng, const BoundOptions& opts = {}) {
  if (!task.target.has_labels())
    throw Error(ErrorKind::kLabelsRequired, "bound report requires labeled target");
  if (!(theta_fixed >= 0.0 && theta_fixed <= 1.0))
    throw Error(ErrorKind::kConfig, "bound report: theta must lie in [0, 1]");
  for (double t : sampling.thetas)
    if (t != theta_fixed)
      throw Error(ErrorKind::kConfig, "bound report requires a fixed-theta sampling domain");
  const int k = task.num_classes;
  BoundReport r;
  r.num_classes = k;
  r.theta = theta_fixed;

  const LabelDistribution p_c = empirical_label_distribution(sampling.data);
  const LabelDistribution p_t = empirical_label_distribution(task.target);
  r.p_c = p_c.probs();
  r.p_t = p_t.probs();

  const Eigen::MatrixXd rates_c = detail::SamplingLawRates(p, task.source, sampling, theta_fixed,
                                                           opts.max_enumerated_pairs, &r.exact_sampling_law);
  r.eps_c = 0.0;
  r.delta_be = 0.0;
  const auto groups = task.source.IndicesByClass();
  for (int j = 0; j < k; ++j) {
    if (groups[static_cast<size_t>(j)].empty()) continue;
    const double err = 1.0 - rates_c(j, j);
    r.eps_c += p_c[j] * err;
    r.delta_be = std::max(r.delta_be, err);
  }

  const Labels preds_s = predict(p, task.source.features());
  const Labels preds_t = predict(p, task.target.features());
  r.eps_t = model_error(preds_t, task.target.labels());
  r.delta_ce = conditional_error_gap(preds_s, task.source.labels(), preds_t, task.target.labels(), p_t, k);
  r.label_l1 = tv_distance(p_c, p_t);
  r.c_s = source_norm_constant(task.source);

  if (opts.lipschitz == LipschitzMode::kCertified) {
    r.lipschitz_estimate = certified_lipschitz(p);
    r.lipschitz_certified = true;
  } else {
    Matrix both(task.source.size() + task.target.size(), task.source.dim());
    both << task.source.features(), task.target.features();
    r.lipschitz_estimate = estimate_lipschitz(p, both, opts.lipschitz_pairs, rng);
  }

  r.term_label = r.label_l1 * r.delta_be;
  r.term_cond = (k - 1) * r.delta_ce;
  r.term_mix = 2.0 * r.lipschitz_estimate * (k - 1) * std::sqrt(theta_fixed * (1.0 - theta_fixed)) * r.c_s;
  r.rhs_total = r.term_label + r.term_cond + r.term_mix;
  r.gap = std::abs(r.eps_t - r.eps_c);
  r.slack = r.rhs_total - r.gap;
  r.holds = r.slack >= 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Class-conditional A-distance
// ---------------------------------------------------------------------------

struct ADistanceReport {
  double value = 0.0;  // mean over evaluated classes
  std::vector<std::pair<int, double>> per_class;
  std::vector<SkippedClass> skipped;
};

namespace detail {

// Rows sorted lexicographically, so that the split depends on the multiset
// of feature vectors only.
inline std::vector<int> CanonicalOrder(const Matrix& x, const std::vector<int>& rows) {
  std::vector<int> out = rows;
  std::sort(out.begin(), out.end(), [&](int a, int b) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(a, c) < x(b, c)) return true;
      if (x(a, c) > x(b, c)) return false;
    }
    return false;
  });
  return out;
}

inline void ShuffleInPlace(std::vector<int>& v, RandomSource& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.Below(i)]);
}

// Balanced held-out error of a logistic probe separating domain 0 from 1.
inline double ProbeError(const Matrix& train_x, const std::vector<int>& train_z, const Matrix& test_x,
                         const std::vector<int>& test_z, int steps) {
  const Eigen::Index d = train_x.cols();
  const Eigen::RowVectorXd mean = train_x.colwise().mean();
  Eigen::RowVectorXd sd = ((train_x.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index c = 0; c < d; ++c)
    if (!(sd[c] > 1e-12)) sd[c] = 1.0;
  auto standardize = [&](const Matrix& x) {
    return Matrix((x.rowwise() - mean).array().rowwise() / sd.array());
  };
  const Matrix xtr = standardize(train_x), xte = standardize(test_x);
  double n0 = 0, n1 = 0;
  for (int z : train_z) (z == 0 ? n0 : n1) += 1;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  const double lr = 0.5;
  for (int s = 0; s < steps; ++s) {
    Eigen::VectorXd gw = Eigen::VectorXd::Zero(d);
    double gb = 0.0;
    for (Eigen::Index i = 0; i < xtr.rows(); ++i) {
      const double z = xtr.row(i).dot(w) + b;
      const double prob = 1.0 / (1.0 + std::exp(-z));
      const int y = train_z[static_cast<size_t>(i)];
      const double weight = 0.5 / (y == 0 ? n0 : n1);
      const double g = weight * (prob - y);
      gw += g * xtr.row(i).transpose();
      gb += g;
    }
    w -= lr * gw;
    b -= lr * gb;
  }
  double wrong[2] = {0, 0}, count[2] = {0, 0};
  for (Eigen::Index i = 0; i < xte.rows(); ++i) {
    const int y = test_z[static_cast<size_t>(i)];
    const int pred = xte.row(i).dot(w) + b > 0 ? 1 : 0;
    count[y] += 1;
    wrong[y] += pred != y;
  }
  return 0.5 * (wrong[0] / count[0] + wrong[1] / count[1]);
}

}  // namespace detail

struct ADistanceOptions {
  int probe_steps = 200;
  std::uint64_t seed = 0;
  int min_per_domain = 4;
};

// Mean over shared classes of A = 2 (1 - 2 err), clamped to [0, 2], where err
// is the balanced held-out error of a linear domain probe on a 50/50 split.
inline ADistanceReport class_conditional_a_distance(const Matrix& features_s, const Labels& labels_s,
                                                    const Matrix& features_t, const Labels& labels_t,
                                                    const std::set<int>& shared_classes,
                                                    const ADistanceOptions& opts = {}) {
  if (features_s.cols() != features_t.cols())
    throw Error(ErrorKind::kDimension, "a_distance: feature dimension mismatch");
  ADistanceReport out;
  double sum = 0.0;
  for (int j : shared_classes) {
    std::vector<int> rs, rt;
    for (size_t i = 0; i < labels_s.size(); ++i)
      if (labels_s[i] == j) rs.push_back(static_cast<int>(i));
    for (size_t i = 0; i < labels_t.size(); ++i)
      if (labels_t[i] == j) rt.push_back(static_cast<int>(i));
    if (static_cast<int>(rs.size()) < opts.min_per_domain || static_cast<int>(rt.size()) < opts.min_per_domain) {
      out.skipped.push_back({j, "fewer than " + std::to_string(opts.min_per_domain) + " samples in a domain"});
      continue;
    }
    rs = detail::CanonicalOrder(features_s, rs);
    rt = detail::CanonicalOrder(features_t, rt);
    RandomSource rng_s(opts.seed * 1000003ULL + static_cast<std::uint64_t>(j) * 2 + 1);
    RandomSource rng_t = rs.size() == rt.size() ? rng_s : RandomSource(opts.seed * 1000003ULL + static_cast<std::uint64_t>(j) * 2 + 2);
    detail::ShuffleInPlace(rs, rng_s);
    detail::ShuffleInPlace(rt, rng_t);
    const size_t hs = rs.size() / 2, ht = rt.size() / 2;
    const auto ntr = static_cast<Eigen::Index>(hs + ht);
    const auto nte = static_cast<Eigen::Index>(rs.size() - hs + rt.size() - ht);
    Matrix xtr(ntr, features_s.cols()), xte(nte, features_s.cols());
    std::vector<int> ztr, zte;
    Eigen::Index a = 0, b = 0;
    for (size_t i = 0; i < rs.size(); ++i) {
      if (i < hs) { xtr.row(a++) = features_s.row(rs[i]); ztr.push_back(0); }
      else { xte.row(b++) = features_s.row(rs[i]); zte.push_back(0); }
    }
    for (size_t i = 0; i < rt.size(); ++i) {
      if (i < ht) { xtr.row(a++) = features_t.row(rt[i]); ztr.push_back(1); }
      else { xte.row(b++) = features_t.row(rt[i]); zte.push_back(1); }
    }
    const double err = detail::ProbeError(xtr, ztr, xte, zte, opts.probe_steps);
    const double value = std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
    out.per_class.emplace_back(j, value);
    sum += value;
  }
  out.value = out.per_class.empty() ? 0.0 : sum / static_cast<double>(out.per_class.size());
  return out;
}

// ---------------------------------------------------------------------------
// Convex-model risk study
// ---------------------------------------------------------------------------

enum class ConvexModelKind {
  kConvex,  // p(x) = clamp(relu(w.x + b), 0, 1); predict 1 iff p > 1/2
  kLinear,  // z = w.x + b trained with the logistic loss; predict 1 iff z > 0
};

struct ConvexityOptions {
  ConvexModelKind model = ConvexModelKind::kConvex;
  double lr = 1e-2;
};

struct ConvexityCurves {
  std::vector<double> eps_source;
  std::vector<double> eps_sampling;
  double mean_gap() const {
    double s = 0.0;
    for (size_t i = 0; i < eps_source.size(); ++i) s += eps_source[i] - eps_sampling[i];
    return eps_source.empty() ? 0.0 : s / static_cast<double>(eps_source.size());
  }
};

// Trains a scalar model on the first half of the study data with Adam and
// records, before every update, the error on the full source and on the
// theta-sampling domain. The sampling domain is evaluated on its exact law:
// every ordered same-class pair (k, l) mixed as theta x_k + (1 - theta) x_l,
// with class weights equal to the source class frequencies.
inline ConvexityCurves convexity_experiment(const ConvexStudyConfig& cfg, double theta, int epochs,
                                            const ConvexityOptions& opts = {}) {
  if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorKind::kConfig, "convexity_experiment: theta in (0,1)");
  if (epochs < 1) throw Error(ErrorKind::kConfig, "convexity_experiment: epochs >= 1");
  const ConvexStudyData study = generate_convex_study(cfg);
  const Matrix& x = study.data.features();
  const Labels& y = study.data.labels();
  const Eigen::Index n = x.rows();
  const Eigen::Index n_train = n / 2;

  const bool convex = opts.model == ConvexModelKind::kConvex;
  Eigen::Vector3d params(0.0, 0.0, convex ? 0.5 : 0.0);  // w0, w1, b
  Eigen::Vector3d m = Eigen::Vector3d::Zero(), v = Eigen::Vector3d::Zero();

  auto predict_one = [&](double x0, double x1) {
    const double z = params[0] * x0 + params[1] * x1 + params[2];
    return convex ? (std::clamp(z, 0.0, 1.0) > 0.5 ? 1 : 0) : (z > 0.0 ? 1 : 0);
  };

  std::vector<std::vector<int>> groups(2);
  for (Eigen::Index i = 0; i < n; ++i) groups[static_cast<size_t>(y[static_cast<size_t>(i)])].push_back(static_cast<int>(i));

  ConvexityCurves curves;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double wrong_s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) wrong_s += predict_one(x(i, 0), x(i, 1)) != y[static_cast<size_t>(i)];
    double eps_c = 0.0;
    for (int c = 0; c < 2; ++c) {
      const auto& idx = groups[static_cast<size_t>(c)];
      if (idx.empty()) continue;
      double wrong = 0.0;
      for (int a : idx)
        for (int b : idx)
          wrong += predict_one(theta * x(a, 0) + (1 - theta) * x(b, 0),
                               theta * x(a, 1) + (1 - theta) * x(b, 1)) != c;
      const double m2 = static_cast<double>(idx.size()) * static_cast<double>(idx.size());
      eps_c += (static_cast<double>(idx.size()) / static_cast<double>(n)) * (wrong / m2);
    }
    curves.eps_source.push_back(wrong_s / static_cast<double>(n));
    curves.eps_sampling.push_back(eps_c);

    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    for (Eigen::Index i = 0; i < n_train; ++i) {
      const double z = params[0] * x(i, 0) + params[1] * x(i, 1) + params[2];
      const double t = y[static_cast<size_t>(i)];
      double dz = 0.0;
      if (convex) {
        if (z > 0.0 && z < 1.0) {
          const double p = z;
          const double dp = (p > kLogFloor ? -t / p : 0.0) + (1.0 - p > kLogFloor ? (1.0 - t) / (1.0 - p) : 0.0);
          dz = dp;
        }
      } else {
        dz = 1.0 / (1.0 + std::exp(-z)) - t;
      }
      dz /= static_cast<double>(n_train);
      grad += dz * Eigen::Vector3d(x(i, 0), x(i, 1), 1.0);
    }
    const double step = epoch + 1.0;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad.cwiseAbs2();
    const Eigen::Vector3d mh = m / (1.0 - std::pow(0.9, step));
    const Eigen::Vector3d vh = v / (1.0 - std::pow(0.999, step));
    params -= (opts.lr * mh.array() / (vh.array().sqrt() + 1e-8)).matrix();
  }
  return curves;
}

}  // namespace is2c
