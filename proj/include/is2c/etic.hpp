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

// Entropic optimal-transport independence criterion between the features of
// one class and the binary domain label.
//
// For class j with n samples (features f_i, domain z_i) the joint measure
// P_XZ and the product P_X (x) P_Z live on the n x 2 grid {f_i} x {z_s, z_t}
// and are stored as n x 2 matrices A and B (column 0 = source, column 1 =
// target). The additive cost c = ||f - f'|| + ||z - z'|| gives the kernels
// K1 = exp(-C1 / (lambda1 eps)) (n x n) and K2 = exp(-C2 / (lambda2 eps))
// (2 x 2), and the Sinkhorn scalings solve
//
//   U <- A ./ (K1 V K2^T),   V <- B ./ (K1 U K2^T)
//
// at 4n^2 + 12n flops per iteration. The transport cost of the resulting plan
// gamma(i,c; l,d) = U(i,c) K1(i,l) K2(c,d) V(l,d) is
//
//   S = sum(U .* [K1 V (K2 .* C2)^T] + U .* [(K1 .* C1) V K2^T])
//
// and the criterion is S(A,B) - S(A,A)/2 - S(B,B)/2.
//
// tensor_sinkhorn_reference() evaluates the same quantity with n x n scaling
// matrices over the full product support (4n^3 + 2n^2 flops per iteration).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "is2c/core.hpp"

namespace is2c {

enum class Domain : std::uint8_t { kSource = 0, kTarget = 1 };

enum class GradientMode { kEnvelope, kUnrolled };

struct EticConfig {
  double epsilon = 1.0;
  double lambda2 = 1.0;
  double lambda1_median_scale = 4.0;  // lambda1 = scale * median(C1)
  int max_iters = 100;
  double tol = 1e-9;
  double kernel_floor = 1e-30;
  GradientMode gradient = GradientMode::kEnvelope;
};

inline void validate(const EticConfig& cfg) {
  if (!(cfg.epsilon > 0)) throw Error(ErrorKind::kConfig, "invalid config: epsilon");
  if (!(cfg.lambda2 > 0)) throw Error(ErrorKind::kConfig, "invalid config: lambda2");
  if (!(cfg.lambda1_median_scale > 0))
    throw Error(ErrorKind::kConfig, "invalid config: lambda1_median_scale");
  if (cfg.max_iters < 1) throw Error(ErrorKind::kConfig, "invalid config: max_iters");
  if (!(cfg.tol >= 0)) throw Error(ErrorKind::kConfig, "invalid config: tol");
}

struct NullFlopCounter {
  void Add(std::uint64_t) {}
};

struct FlopCounter {
  std::uint64_t flops = 0;
  void Add(std::uint64_t n) { flops += n; }
};

// ---------------------------------------------------------------------------
// Costs, kernels, marginals
// ---------------------------------------------------------------------------

// Plain (not squared) Euclidean distances between rows.
inline Matrix pairwise_cost(const Matrix& features) {
  const Eigen::Index n = features.rows();
  Matrix c = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = i + 1; l < n; ++l) {
      const double d = (features.row(i) - features.row(l)).norm();
      c(i, l) = d;
      c(l, i) = d;
    }
  return c;
}

inline Eigen::Matrix2d domain_cost() {
  Eigen::Matrix2d c;
  c << 0.0, std::numbers::sqrt2, std::numbers::sqrt2, 0.0;
  return c;
}

struct Marginals {
  Matrix a;  // n x 2, joint
  Matrix b;  // n x 2, product of marginals
  int n_source = 0;
  int n_target = 0;
};

inline Marginals build_marginals(std::span<const Domain> flags) {
  const auto n = static_cast<Eigen::Index>(flags.size());
  if (n < 1) throw Error(ErrorKind::kDegenerateClass, "build_marginals: empty class");
  Marginals m;
  for (Domain z : flags) (z == Domain::kSource ? m.n_source : m.n_target)++;
  if (m.n_source == 0 || m.n_target == 0)
    throw Error(ErrorKind::kDegenerateClass, "build_marginals: class present in one domain only");
  const double nd = static_cast<double>(n);
  m.a = Matrix::Zero(n, 2);
  m.b = Matrix(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.a(i, flags[static_cast<size_t>(i)] == Domain::kSource ? 0 : 1) = 1.0 / nd;
    m.b(i, 0) = m.n_source / (nd * nd);
    m.b(i, 1) = m.n_target / (nd * nd);
  }
  return m;
}

// Median of all n^2 entries of C1. Falls back to the median of the positive
// entries when at least half the entries are zero, and to 1 when all are.
inline double cost_median(const Matrix& c1) {
  auto median = [](std::vector<double> v) {
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
  };
  std::vector<double> all(c1.data(), c1.data() + c1.size());
  const double m = median(all);
  if (m > 0) return m;
  std::vector<double> positive;
  for (double v : all)
    if (v > 0) positive.push_back(v);
  return positive.empty() ? 1.0 : median(std::move(positive));
}

struct EticWorkspace {
  Matrix c1;
  Eigen::Matrix2d c2;
  Matrix k1;
  Eigen::Matrix2d k2;
  Matrix a, b;
  double lambda1 = 1.0;
  int n_source = 0;
  int n_target = 0;

  int size() const { return static_cast<int>(c1.rows()); }
};

inline Matrix feature_kernel(const Matrix& c1, double lambda1, const EticConfig& cfg) {
  const double scale = 1.0 / (lambda1 * cfg.epsilon);
  return (-c1.array() * scale).exp().max(cfg.kernel_floor).matrix();
}

inline Eigen::Matrix2d domain_kernel(const EticConfig& cfg) {
  return (-domain_cost().array() / (cfg.lambda2 * cfg.epsilon)).exp().max(cfg.kernel_floor).matrix();
}

inline EticWorkspace make_workspace(const Matrix& features, std::span<const Domain> flags,
                                    const EticConfig& cfg) {
  validate(cfg);
  if (static_cast<size_t>(features.rows()) != flags.size())
    throw Error(ErrorKind::kDimension, "make_workspace: flag count does not match rows");
  EticWorkspace ws;
  auto m = build_marginals(flags);
  ws.a = std::move(m.a);
  ws.b = std::move(m.b);
  ws.n_source = m.n_source;
  ws.n_target = m.n_target;
  ws.c1 = pairwise_cost(features);
  ws.c2 = domain_cost();
  ws.lambda1 = cfg.lambda1_median_scale * cost_median(ws.c1);
  ws.k1 = feature_kernel(ws.c1, ws.lambda1, cfg);
  ws.k2 = domain_kernel(cfg);
  return ws;
}

// ---------------------------------------------------------------------------
// Two-column Sinkhorn
// ---------------------------------------------------------------------------

namespace detail {

// out = K1 * X * K2^T for X of shape n x 2.
template <typename Counter>
inline void ApplyKernels(const Matrix& k1, const Matrix& x, const Eigen::Matrix2d& k2, Matrix& out,
                         Counter& counter) {
  const Eigen::Index n = k1.rows();
  out.resize(n, 2);
  const double* xp = x.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* row = k1.data() + i * n;
    double s0 = 0.0, s1 = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      s0 += row[l] * xp[2 * l];
      s1 += row[l] * xp[2 * l + 1];
    }
    out(i, 0) = s0 * k2(0, 0) + s1 * k2(0, 1);
    out(i, 1) = s0 * k2(1, 0) + s1 * k2(1, 1);
  }
  counter.Add(static_cast<std::uint64_t>(n) * n * 2 + static_cast<std::uint64_t>(n) * 2 * 2);
}

template <typename Counter>
inline void DivideInto(const Matrix& num, const Matrix& den, Matrix& out, Counter& counter) {
  out = num.cwiseQuotient(den);
  counter.Add(static_cast<std::uint64_t>(num.size()));
}

inline bool AllFinite(const Matrix& m) { return m.allFinite(); }

}  // namespace detail

struct SinkhornResult {
  Matrix u;
  Matrix v;
  int iterations = 0;
  bool converged = false;
};

inline std::string ClassContext(int class_index) {
  return class_index >= 0 ? " (class " + std::to_string(class_index) + ")" : "";
}

// Scalings for marginals (row_marginal, col_marginal), starting from
// sup-norm of A - U .* (K1 V K2^T).
inline double sinkhorn_residual(const Matrix& row_marginal, const SinkhornResult& r,
                                const Matrix& k1, const Eigen::Matrix2d& k2) {
  Matrix prod;
  NullFlopCounter nc;
  detail::ApplyKernels(k1, r.v, k2, prod, nc);
  return (row_marginal - r.u.cwiseProduct(prod)).cwiseAbs().maxCoeff();
}

// U = V = ones. Stops when max |U_k - U_{k-1}| <= tol and the row residual is
// within 10 tol, or after max_iters.
template <typename Counter = NullFlopCounter>
SinkhornResult sinkhorn_scaling(const Matrix& row_marginal, const Matrix& col_marginal,
                                const Matrix& k1, const Eigen::Matrix2d& k2, const EticConfig& cfg,
                                Counter&& counter = Counter{}, int class_index = -1) {
  const Eigen::Index n = k1.rows();
  SinkhornResult r;
  r.u = Matrix::Ones(n, 2);
  r.v = Matrix::Ones(n, 2);
  Matrix prod(n, 2), next(n, 2);
  for (int it = 0; it < cfg.max_iters; ++it) {
    detail::ApplyKernels(k1, r.v, k2, prod, counter);
    detail::DivideInto(row_marginal, prod, next, counter);
    const double change = (next - r.u).cwiseAbs().maxCoeff();
    r.u.swap(next);
    detail::ApplyKernels(k1, r.u, k2, prod, counter);
    detail::DivideInto(col_marginal, prod, r.v, counter);
    r.iterations = it + 1;
    if (!detail::AllFinite(r.u) || !detail::AllFinite(r.v))
      throw Error(ErrorKind::kNumericalFailure,
                  "non-finite Sinkhorn scaling" + ClassContext(class_index));
    // The residual check is not part of the iteration cost and is skipped by
    // the counter.
    if (change <= cfg.tol && sinkhorn_residual(row_marginal, r, k1, k2) <= 10.0 * cfg.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

inline double sinkhorn_cost_estimate(const Matrix& u, const Matrix& v, const Matrix& k1,
                                     const Eigen::Matrix2d& k2, const Matrix& c1,
                                     const Eigen::Matrix2d& c2) {
  NullFlopCounter nc;
  Matrix t1, t2;
  const Eigen::Matrix2d k2c2 = k2.cwiseProduct(c2);
  detail::ApplyKernels(k1, v, k2c2, t1, nc);
  const Matrix k1c1 = k1.cwiseProduct(c1);
  detail::ApplyKernels(k1c1, v, k2, t2, nc);
  return u.cwiseProduct(t1).sum() + u.cwiseProduct(t2).sum();
}

// ---------------------------------------------------------------------------
// Per-class criterion
// ---------------------------------------------------------------------------

struct EticTerms {
  double value = 0.0;  // s_ab - s_aa / 2 - s_bb / 2
  double s_ab = 0.0, s_aa = 0.0, s_bb = 0.0;
  SinkhornResult ab, aa, bb;
  double lambda1 = 0.0;
};

inline EticTerms etic_terms(const EticWorkspace& ws, const EticConfig& cfg, int class_index = -1) {
  EticTerms t;
  t.lambda1 = ws.lambda1;
  t.ab = sinkhorn_scaling(ws.a, ws.b, ws.k1, ws.k2, cfg, NullFlopCounter{}, class_index);
  t.aa = sinkhorn_scaling(ws.a, ws.a, ws.k1, ws.k2, cfg, NullFlopCounter{}, class_index);
  t.bb = sinkhorn_scaling(ws.b, ws.b, ws.k1, ws.k2, cfg, NullFlopCounter{}, class_index);
  t.s_ab = sinkhorn_cost_estimate(t.ab.u, t.ab.v, ws.k1, ws.k2, ws.c1, ws.c2);
  t.s_aa = sinkhorn_cost_estimate(t.aa.u, t.aa.v, ws.k1, ws.k2, ws.c1, ws.c2);
  t.s_bb = sinkhorn_cost_estimate(t.bb.u, t.bb.v, ws.k1, ws.k2, ws.c1, ws.c2);
  t.value = t.s_ab - 0.5 * t.s_aa - 0.5 * t.s_bb;
  return t;
}

inline double etic_per_class(const Matrix& features, std::span<const Domain> flags,
                             const EticConfig& cfg) {
  return etic_terms(make_workspace(features, flags, cfg), cfg).value;
}

// Criterion value with the scalings and lambda1 of `frozen` held fixed while
// the features move. This is the function whose gradient the envelope
// convention computes.
inline double etic_frozen_value(const Matrix& features, const EticTerms& frozen,
                                const EticConfig& cfg) {
  const Matrix c1 = pairwise_cost(features);
  const Matrix k1 = feature_kernel(c1, frozen.lambda1, cfg);
  const Eigen::Matrix2d c2 = domain_cost();
  const Eigen::Matrix2d k2 = domain_kernel(cfg);
  return sinkhorn_cost_estimate(frozen.ab.u, frozen.ab.v, k1, k2, c1, c2) -
         0.5 * sinkhorn_cost_estimate(frozen.aa.u, frozen.aa.v, k1, k2, c1, c2) -
         0.5 * sinkhorn_cost_estimate(frozen.bb.u, frozen.bb.v, k1, k2, c1, c2);
}

// ---------------------------------------------------------------------------
// Gradients with respect to C1, then features
// ---------------------------------------------------------------------------

namespace detail {

// d K1 / d C1, zero where the floor is active.
inline Matrix KernelSlope(const EticWorkspace& ws, const EticConfig& cfg) {
  const double scale = 1.0 / (ws.lambda1 * cfg.epsilon);
  Matrix slope(ws.k1.rows(), ws.k1.cols());
  for (Eigen::Index i = 0; i < slope.size(); ++i) {
    const double raw = std::exp(-ws.c1.data()[i] * scale);
    slope.data()[i] = raw > cfg.kernel_floor ? -raw * scale : 0.0;
  }
  return slope;
}

// dS/dC1 with (U, V) held fixed.
inline Matrix EnvelopeCostGradient(const EticWorkspace& ws, const SinkhornResult& r,
                                   const Matrix& slope) {
  const Eigen::Matrix2d k2c2 = ws.k2.cwiseProduct(ws.c2);
  const Matrix m = r.u * ws.k2 * r.v.transpose();   // multiplies C1 .* K1
  const Matrix nn = r.u * k2c2 * r.v.transpose();   // multiplies K1
  return ws.k1.cwiseProduct(m) + (ws.c1.cwiseProduct(m) + nn).cwiseProduct(slope);
}

// dS/dC1 differentiating through every Sinkhorn iteration from U = V = ones.
inline Matrix UnrolledCostGradient(const EticWorkspace& ws, const Matrix& row_marginal,
                                   const Matrix& col_marginal, const EticConfig& cfg,
                                   const Matrix& slope) {
  const Eigen::Index n = ws.size();
  NullFlopCounter nc;
  std::vector<Matrix> us, vs, ps, qs;  // us[t], vs[t] for t = 0..T; ps[t], qs[t] for t = 1..T
  us.push_back(Matrix::Ones(n, 2));
  vs.push_back(Matrix::Ones(n, 2));
  ps.emplace_back();
  qs.emplace_back();
  for (int it = 0; it < cfg.max_iters; ++it) {
    Matrix p, q, u, v;
    detail::ApplyKernels(ws.k1, vs.back(), ws.k2, p, nc);
    u = row_marginal.cwiseQuotient(p);
    const double change = (u - us.back()).cwiseAbs().maxCoeff();
    detail::ApplyKernels(ws.k1, u, ws.k2, q, nc);
    v = col_marginal.cwiseQuotient(q);
    us.push_back(std::move(u));
    vs.push_back(std::move(v));
    ps.push_back(std::move(p));
    qs.push_back(std::move(q));
    if (change <= cfg.tol) break;
  }
  const size_t steps = us.size() - 1;
  const Eigen::Matrix2d k2c2 = ws.k2.cwiseProduct(ws.c2);
  const Matrix k1c1 = ws.k1.cwiseProduct(ws.c1);
  const Matrix& ut = us[steps];
  const Matrix& vt = vs[steps];

  Matrix g_u = ws.k1 * vt * k2c2.transpose() + k1c1 * vt * ws.k2.transpose();
  Matrix g_v = ws.k1 * ut * k2c2 + k1c1 * ut * ws.k2;
  Matrix g_k1 = ut * k2c2 * vt.transpose();
  const Matrix g_k1c1 = ut * ws.k2 * vt.transpose();
  for (size_t t = steps; t >= 1; --t) {
    const Matrix g_q = -g_v.cwiseProduct(vs[t]).cwiseQuotient(qs[t]);
    g_k1.noalias() += g_q * ws.k2 * us[t].transpose();
    g_u.noalias() += ws.k1 * g_q * ws.k2;
    Matrix g_p = -g_u.cwiseProduct(us[t]).cwiseQuotient(ps[t]);
    // Rows with zero marginal have U = 0 and P possibly tiny: the product is 0.
    for (Eigen::Index i = 0; i < g_p.size(); ++i)
      if (us[t].data()[i] == 0.0) g_p.data()[i] = 0.0;
    g_k1.noalias() += g_p * ws.k2 * vs[t - 1].transpose();
    g_v = ws.k1 * g_p * ws.k2;
    g_u.setZero();
  }
  return g_k1c1.cwiseProduct(ws.k1) + (g_k1 + g_k1c1.cwiseProduct(ws.c1)).cwiseProduct(slope);
}

// Chain dL/dC1 through C1(k,l) = ||f_k - f_l||. Coincident points get a zero
// subgradient.
inline Matrix CostToFeatureGradient(const Matrix& features, const Matrix& c1, const Matrix& g) {
  const Eigen::Index n = features.rows();
  Matrix out = Matrix::Zero(n, features.cols());
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l == k || c1(k, l) <= 0.0) continue;
      const double w = (g(k, l) + g(l, k)) / c1(k, l);
      out.row(k) += w * (features.row(k) - features.row(l));
    }
  return out;
}

}  // namespace detail

struct EticValueAndGradient {
  double value = 0.0;
  Matrix gradient;  // n x d
};

inline EticValueAndGradient etic_per_class_with_gradient(const Matrix& features,
                                                         std::span<const Domain> flags,
                                                         const EticConfig& cfg,
                                                         int class_index = -1) {
  const EticWorkspace ws = make_workspace(features, flags, cfg);
  const EticTerms terms = etic_terms(ws, cfg, class_index);
  const Matrix slope = detail::KernelSlope(ws, cfg);
  Matrix g;
  if (cfg.gradient == GradientMode::kEnvelope) {
    g = detail::EnvelopeCostGradient(ws, terms.ab, slope) -
        0.5 * detail::EnvelopeCostGradient(ws, terms.aa, slope) -
        0.5 * detail::EnvelopeCostGradient(ws, terms.bb, slope);
  } else {
    g = detail::UnrolledCostGradient(ws, ws.a, ws.b, cfg, slope) -
        0.5 * detail::UnrolledCostGradient(ws, ws.a, ws.a, cfg, slope) -
        0.5 * detail::UnrolledCostGradient(ws, ws.b, ws.b, cfg, slope);
  }
  return {terms.value, detail::CostToFeatureGradient(features, ws.c1, g)};
}

// ---------------------------------------------------------------------------
// Reference: Tensor Sinkhorn over the full n x n product support
// ---------------------------------------------------------------------------

struct ReferenceSinkhornResult {
  Matrix u;  // n x n, u(i, k) scales support point (f_i, z_k)
  Matrix v;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// Collapse an n x n scaling onto the two-column support by summing the
// columns that carry the same domain atom.
inline Matrix CollapseColumns(const Matrix& m, std::span<const Domain> flags) {
  Matrix out = Matrix::Zero(m.rows(), 2);
  for (Eigen::Index k = 0; k < m.cols(); ++k)
    out.col(flags[static_cast<size_t>(k)] == Domain::kSource ? 0 : 1) += m.col(k);
  return out;
}

}  // namespace detail

struct ReferenceWorkspace {
  Matrix c1, k1;
  Matrix c2, k2;  // n x n over the domain labels z_k
  Matrix a, b;    // n x n
  Matrix v0;      // initial V; collapses to ones on the two-column support
  double lambda1 = 1.0;
};

inline ReferenceWorkspace make_reference_workspace(const Matrix& features,
                                                   std::span<const Domain> flags,
                                                   const EticConfig& cfg) {
  validate(cfg);
  const auto n = static_cast<Eigen::Index>(flags.size());
  const Marginals m = build_marginals(flags);
  ReferenceWorkspace ws;
  ws.c1 = pairwise_cost(features);
  ws.lambda1 = cfg.lambda1_median_scale * cost_median(ws.c1);
  ws.k1 = feature_kernel(ws.c1, ws.lambda1, cfg);
  const Eigen::Matrix2d c2 = domain_cost();
  const Eigen::Matrix2d k2 = domain_kernel(cfg);
  ws.c2.resize(n, n);
  ws.k2.resize(n, n);
  ws.a = Matrix::Zero(n, n);
  ws.b = Matrix::Constant(n, n, 1.0 / static_cast<double>(n * n));
  ws.v0.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const int dk = static_cast<int>(flags[static_cast<size_t>(k)]);
    ws.a(k, k) = 1.0 / static_cast<double>(n);
    for (Eigen::Index mm = 0; mm < n; ++mm) {
      const int dm = static_cast<int>(flags[static_cast<size_t>(mm)]);
      ws.c2(k, mm) = c2(dk, dm);
      ws.k2(k, mm) = k2(dk, dm);
      ws.v0(k, mm) = 1.0 / (dm == 0 ? m.n_source : m.n_target);
    }
  }
  return ws;
}

template <typename Counter = NullFlopCounter>
ReferenceSinkhornResult reference_sinkhorn_scaling(const ReferenceWorkspace& ws,
                                                   const Matrix& row_marginal,
                                                   const Matrix& col_marginal,
                                                   std::span<const Domain> flags,
                                                   const EticConfig& cfg,
                                                   Counter&& counter = Counter{}) {
  const Eigen::Index n = ws.k1.rows();
  const auto n3 = static_cast<std::uint64_t>(n) * n * n;
  const auto n2 = static_cast<std::uint64_t>(n) * n;
  ReferenceSinkhornResult r;
  r.u = Matrix::Ones(n, n);
  r.v = ws.v0;
  Matrix collapsed_prev = detail::CollapseColumns(r.u, flags);
  Matrix tmp(n, n), prod(n, n);
  for (int it = 0; it < cfg.max_iters; ++it) {
    tmp.noalias() = ws.k1 * r.v;
    prod.noalias() = tmp * ws.k2.transpose();
    r.u = row_marginal.cwiseQuotient(prod);
    tmp.noalias() = ws.k1 * r.u;
    prod.noalias() = tmp * ws.k2.transpose();
    r.v = col_marginal.cwiseQuotient(prod);
    counter.Add(4 * n3 + 2 * n2);
    r.iterations = it + 1;
    if (!r.u.allFinite() || !r.v.allFinite())
      throw Error(ErrorKind::kNumericalFailure, "non-finite reference Sinkhorn scaling");
    const Matrix collapsed = detail::CollapseColumns(r.u, flags);
    const double change = (collapsed - collapsed_prev).cwiseAbs().maxCoeff();
    collapsed_prev = collapsed;
    if (change > cfg.tol) continue;
    tmp.noalias() = ws.k1 * r.v;
    prod.noalias() = tmp * ws.k2.transpose();
    const Matrix resid = detail::CollapseColumns(row_marginal - r.u.cwiseProduct(prod), flags);
    if (resid.cwiseAbs().maxCoeff() <= 10.0 * cfg.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

inline double reference_cost_estimate(const ReferenceWorkspace& ws, const ReferenceSinkhornResult& r) {
  const Matrix k2c2 = ws.k2.cwiseProduct(ws.c2);
  const Matrix k1c1 = ws.k1.cwiseProduct(ws.c1);
  const Matrix t1 = ws.k1 * r.v * k2c2.transpose();
  const Matrix t2 = k1c1 * r.v * ws.k2.transpose();
  return r.u.cwiseProduct(t1).sum() + r.u.cwiseProduct(t2).sum();
}

struct ReferenceEticTerms {
  double value = 0.0;
  double s_ab = 0.0, s_aa = 0.0, s_bb = 0.0;
  ReferenceSinkhornResult ab, aa, bb;
};

inline ReferenceEticTerms tensor_sinkhorn_reference_terms(const Matrix& features,
                                                          std::span<const Domain> flags,
                                                          const EticConfig& cfg) {
  const ReferenceWorkspace ws = make_reference_workspace(features, flags, cfg);
  ReferenceEticTerms t;
  t.ab = reference_sinkhorn_scaling(ws, ws.a, ws.b, flags, cfg);
  t.aa = reference_sinkhorn_scaling(ws, ws.a, ws.a, flags, cfg);
  t.bb = reference_sinkhorn_scaling(ws, ws.b, ws.b, flags, cfg);
  t.s_ab = reference_cost_estimate(ws, t.ab);
  t.s_aa = reference_cost_estimate(ws, t.aa);
  t.s_bb = reference_cost_estimate(ws, t.bb);
  t.value = t.s_ab - 0.5 * t.s_aa - 0.5 * t.s_bb;
  return t;
}

inline double tensor_sinkhorn_reference(const Matrix& features, std::span<const Domain> flags,
                                        const EticConfig& cfg) {
  return tensor_sinkhorn_reference_terms(features, flags, cfg).value;
}

// ---------------------------------------------------------------------------
// HSIC baseline
// ---------------------------------------------------------------------------

struct HsicValueAndGradient {
  double value = 0.0;
  Matrix gradient;
  double bandwidth = 1.0;
};

// Biased HSIC (1/n^2) tr(K H L H): Gaussian kernel on features with the
// median-heuristic bandwidth (held fixed for the gradient), linear kernel on
// one-hot domain labels.
inline HsicValueAndGradient hsic_per_class_with_gradient(const Matrix& features,
                                                         std::span<const Domain> flags) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw Error(ErrorKind::kDegenerateClass, "hsic needs at least two samples");
  if (static_cast<size_t>(n) != flags.size())
    throw Error(ErrorKind::kDimension, "hsic: flag count does not match rows");
  const Matrix dist = pairwise_cost(features);
  std::vector<double> positive;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = i + 1; l < n; ++l)
      if (dist(i, l) > 0) positive.push_back(dist(i, l));
  double sigma = 1.0;
  if (!positive.empty()) {
    const size_t mid = positive.size() / 2;
    std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(mid),
                     positive.end());
    sigma = positive[mid];
  }
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const Matrix kx = (-dist.array().square() * inv2s2).exp().matrix();
  Matrix lz(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < n; ++l) lz(i, l) = flags[static_cast<size_t>(i)] == flags[static_cast<size_t>(l)] ? 1.0 : 0.0;
  const Matrix h = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  const Matrix hlh = h * lz * h;
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  HsicValueAndGradient out;
  out.bandwidth = sigma;
  out.value = kx.cwiseProduct(hlh).sum() / nn;
  // d/d f_k of sum_{i,l} Kx(i,l) HLH(i,l) / n^2 with Kx symmetric.
  out.gradient = Matrix::Zero(n, features.cols());
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l == k) continue;
      const double w = 2.0 * hlh(k, l) / nn * kx(k, l) * (-2.0 * inv2s2);
      out.gradient.row(k) += w * (features.row(k) - features.row(l));
    }
  return out;
}

inline double hsic_per_class(const Matrix& features, std::span<const Domain> flags) {
  return hsic_per_class_with_gradient(features, flags).value;
}

// ---------------------------------------------------------------------------
// Alignment loss over classes
// ---------------------------------------------------------------------------

enum class AlignmentCriterion { kEtic, kHsic };

struct SkippedClass {
  int class_index = 0;
  std::string reason;
};

struct AlignmentResult {
  double value = 0.0;
  std::vector<double> per_class;  // criterion value per class, 0 when skipped
  std::vector<SkippedClass> skipped;
  Matrix gradient;  // n x d; empty unless requested
};

// sum_j p_t[j] * criterion(features of class j, domain flags). Source rows
// carry true labels, target rows carry pseudo-labels. Classes with zero target
// mass, or without samples in both domains, contribute 0 and are reported.
inline AlignmentResult alignment_loss_and_gradient(const Matrix& features, const Labels& labels,
                                                   std::span<const Domain> flags,
                                                   const LabelDistribution& p_t,
                                                   const EticConfig& cfg, bool with_gradient,
                                                   AlignmentCriterion criterion = AlignmentCriterion::kEtic) {
  const auto n = static_cast<size_t>(features.rows());
  if (labels.size() != n || flags.size() != n)
    throw Error(ErrorKind::kDimension, "alignment_loss: labels/flags do not match rows");
  const int k = p_t.size();
  AlignmentResult out;
  out.per_class.assign(static_cast<size_t>(k), 0.0);
  if (with_gradient) out.gradient = Matrix::Zero(features.rows(), features.cols());

  std::vector<std::vector<int>> members(static_cast<size_t>(k));
  for (size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= k) throw Error(ErrorKind::kInput, "alignment_loss: label out of range");
    members[static_cast<size_t>(y)].push_back(static_cast<int>(i));
  }
  for (int j = 0; j < k; ++j) {
    const auto& idx = members[static_cast<size_t>(j)];
    if (!(p_t[j] > 0)) {
      out.skipped.push_back({j, "no target mass"});
      continue;
    }
    int ns = 0, nt = 0;
    for (int i : idx) (flags[static_cast<size_t>(i)] == Domain::kSource ? ns : nt)++;
    if (ns == 0 || nt == 0) {
      out.skipped.push_back({j, ns == 0 ? "no source samples" : "no target samples"});
      continue;
    }
    Matrix fj(static_cast<Eigen::Index>(idx.size()), features.cols());
    std::vector<Domain> zj(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) {
      fj.row(static_cast<Eigen::Index>(r)) = features.row(idx[r]);
      zj[r] = flags[static_cast<size_t>(idx[r])];
    }
    double value = 0.0;
    Matrix grad;
    try {
      if (criterion == AlignmentCriterion::kHsic) {
        if (idx.size() < 2) {
          out.skipped.push_back({j, "fewer than two samples"});
          continue;
        }
        auto h = hsic_per_class_with_gradient(fj, zj);
        value = h.value;
        grad = std::move(h.gradient);
      } else if (with_gradient) {
        auto e = etic_per_class_with_gradient(fj, zj, cfg, j);
        value = e.value;
        grad = std::move(e.gradient);
      } else {
        value = etic_terms(make_workspace(fj, zj, cfg), cfg, j).value;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumericalFailure) throw;
      out.skipped.push_back({j, "numerical-failure"});
      continue;
    }
    out.per_class[static_cast<size_t>(j)] = value;
    out.value += p_t[j] * value;
    if (with_gradient)
      for (size_t r = 0; r < idx.size(); ++r)
        out.gradient.row(idx[r]) += p_t[j] * grad.row(static_cast<Eigen::Index>(r));
  }
  return out;
}

inline AlignmentResult alignment_loss(const Matrix& features, const Labels& labels,
                                      std::span<const Domain> flags, const LabelDistribution& p_t,
                                      const EticConfig& cfg) {
  return alignment_loss_and_gradient(features, labels, flags, p_t, cfg, false);
}

inline Matrix etic_gradient(const Matrix& features, const Labels& labels,
                            std::span<const Domain> flags, const LabelDistribution& p_t,
                            const EticConfig& cfg) {
  return alignment_loss_and_gradient(features, labels, flags, p_t, cfg, true).gradient;
}

}  // namespace is2c
