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

// The sampling domain: labelled points drawn class-by-class from the
// estimated target label distribution, each a convex combination of two
// source points of the drawn class.

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "is2c/core.hpp"
#include "is2c/synthetic.hpp"

namespace is2c {

struct SamplingConfig {
  double alpha = 0.2;
  std::optional<int> n_c;            // defaults to 2 * n_s
  std::optional<double> fixed_theta;  // unset: theta ~ Beta(alpha, alpha) per point

  bool is_fixed() const { return fixed_theta.has_value(); }
};

inline void validate(const SamplingConfig& cfg) {
  if (!(cfg.alpha > 0)) throw Error(ErrorKind::kConfig, "invalid config: alpha");
  if (cfg.n_c && *cfg.n_c < 1) throw Error(ErrorKind::kConfig, "invalid config: n_c");
  if (cfg.fixed_theta && !(*cfg.fixed_theta >= 0.0 && *cfg.fixed_theta <= 1.0))
    throw Error(ErrorKind::kConfig, "invalid config: theta");
}

inline double draw_mix_ratio(const SamplingConfig& cfg, RandomSource& rng) {
  if (cfg.fixed_theta) return *cfg.fixed_theta;
  return rng.Beta(cfg.alpha, cfg.alpha);
}

struct SamplingDomain {
  FeatureDataset data;
  std::vector<std::pair<int, int>> pairs;  // source row indices (k, l)
  std::vector<double> thetas;              // x = theta * x_k + (1 - theta) * x_l
};

inline SamplingDomain build_sampling_domain(const FeatureDataset& source, const LabelDistribution& p_t,
                                            const SamplingConfig& cfg, RandomSource& rng) {
  validate(cfg);
  if (p_t.size() != source.num_classes())
    throw Error(ErrorKind::kDimension, "build_sampling_domain: K mismatch");
  const auto by_class = source.IndicesByClass();
  for (int j = 0; j < p_t.size(); ++j)
    if (p_t[j] > 0 && by_class[static_cast<size_t>(j)].empty())
      throw Error(ErrorKind::kUnsatisfiableClass,
                  "class " + std::to_string(j) + " has target mass but no source samples");

  const int n_c = cfg.n_c.value_or(2 * source.size());
  const Matrix& xs = source.features();
  Matrix x(n_c, source.dim());
  Labels y(static_cast<size_t>(n_c));
  SamplingDomain out{FeatureDataset(Matrix::Zero(1, 1), std::nullopt, 1), {}, {}};
  out.pairs.reserve(static_cast<size_t>(n_c));
  out.thetas.reserve(static_cast<size_t>(n_c));
  for (int i = 0; i < n_c; ++i) {
    const int j = detail::SampleCategorical(p_t.probs(), rng);
    const auto& members = by_class[static_cast<size_t>(j)];
    const int k = members[rng.Below(members.size())];
    const int l = members[rng.Below(members.size())];
    const double theta = draw_mix_ratio(cfg, rng);
    x.row(i) = theta * xs.row(k) + (1.0 - theta) * xs.row(l);
    y[static_cast<size_t>(i)] = j;
    out.pairs.emplace_back(k, l);
    out.thetas.push_back(theta);
  }
  out.data = FeatureDataset(std::move(x), std::move(y), source.num_classes());
  return out;
}

}  // namespace is2c
