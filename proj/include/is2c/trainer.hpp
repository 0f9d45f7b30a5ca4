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

// Training loop. Per epoch: pseudo-label the target, estimate the label ratio,
// draw a fresh sampling domain, then take one step on
//
//   L = L_risk(sampling domain) + mu * L_align(source, target),
//
// plus the ablation variants that drop or replace one of the pieces.

#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "is2c/core.hpp"
#include "is2c/etic.hpp"
#include "is2c/eval.hpp"
#include "is2c/labelshift.hpp"
#include "is2c/model.hpp"
#include "is2c/sampling.hpp"

namespace is2c {

enum class Variant { kIs2c, kSourceOnly, kSamplingOnly, kEticOnly, kWermEtic, kMixupEtic, kIs2cHsic };

inline const char* VariantName(Variant v) {
  switch (v) {
    case Variant::kIs2c: return "is2c";
    case Variant::kSourceOnly: return "source_only";
    case Variant::kSamplingOnly: return "sampling_only";
    case Variant::kEticOnly: return "etic_only";
    case Variant::kWermEtic: return "werm_etic";
    case Variant::kMixupEtic: return "mixup_etic";
    case Variant::kIs2cHsic: return "is2c_hsic";
  }
  return "unknown";
}

inline Variant ParseVariant(const std::string& name) {
  for (Variant v : {Variant::kIs2c, Variant::kSourceOnly, Variant::kSamplingOnly, Variant::kEticOnly,
                    Variant::kWermEtic, Variant::kMixupEtic, Variant::kIs2cHsic})
    if (name == VariantName(v)) return v;
  throw Error(ErrorKind::kConfig, "invalid config: variant");
}

struct TrainConfig {
  double mu = 1.0;
  int epochs = 100;
  int warmup_epochs = 100;
  SamplingConfig sampling;
  EticConfig etic;
  double lr = 1e-3;
  int batch_size = 0;  // 0: full batch
  Variant variant = Variant::kIs2c;
  int hidden1 = 256;
  int hidden2 = 256;
  HiddenActivation activation = HiddenActivation::kRelu;
  std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& f) { throw Error(ErrorKind::kConfig, "invalid config: " + f); };
  if (!(cfg.mu >= 0) || !std::isfinite(cfg.mu)) fail("mu");
  if (cfg.epochs < 1) fail("epochs");
  if (cfg.warmup_epochs < 0) fail("warmup_epochs");
  if (!(cfg.lr > 0)) fail("lr");
  if (cfg.batch_size < 0) fail("batch_size");
  if (cfg.hidden1 < 1) fail("hidden1");
  if (cfg.hidden2 < 1) fail("hidden2");
  validate(cfg.sampling);
  validate(cfg.etic);
}

struct EpochRecord {
  int epoch = 0;
  double risk = 0.0;
  double align = 0.0;
  double total = 0.0;  // risk + mu * align
  std::vector<double> p_t;
  std::vector<SkippedClass> skipped;
  bool bbse_fallback = false;
  std::optional<double> target_accuracy;
  double wall_seconds = 0.0;
};

struct TrainReport {
  Variant variant = Variant::kIs2c;
  double mu = 0.0;
  std::vector<EpochRecord> epochs;
  std::optional<double> final_target_accuracy;
};

// Full-batch cross-entropy on the labelled source.
inline MlpParams warm_start(MlpParams params, const FeatureDataset& source, int warmup_epochs, double lr) {
  if (!source.has_labels()) throw Error(ErrorKind::kLabelsRequired, "warm_start: source must be labelled");
  if (warmup_epochs <= 0) return params;
  AdamState adam = AdamState::For(params, lr);
  const Matrix targets = one_hot(source.labels(), params.num_classes());
  for (int e = 0; e < warmup_epochs; ++e) {
    const ForwardCache c = forward(params, source.features());
    const RiskAndGradient r = soft_target_risk(c.probs, targets);
    adam_step(params, backward(params, c, Upstream{&r.dlogits, nullptr, 0.0}), adam);
  }
  return params;
}

namespace detail {

struct RiskPart {
  double value = 0.0;
  MlpGradients grad;
};

inline RiskPart RiskStep(const MlpParams& p, const Matrix& x, const Matrix& targets,
                         const std::vector<double>* weights) {
  const ForwardCache c = forward(p, x);
  const RiskAndGradient r = soft_target_risk(c.probs, targets, weights);
  return {r.value, backward(p, c, Upstream{&r.dlogits, nullptr, 0.0})};
}

struct AlignPart {
  double value = 0.0;
  std::vector<SkippedClass> skipped;
  MlpGradients grad;
};

// Alignment over [source rows; target rows]; source rows carry true labels,
// target rows the current pseudo-labels.
inline AlignPart AlignStep(const MlpParams& p, const Matrix& xs, const Labels& ys, const Matrix& xt,
                           const Labels& yt_pseudo, const LabelDistribution& weights, double mu,
                           const EticConfig& etic, AlignmentCriterion criterion) {
  Matrix x(xs.rows() + xt.rows(), xs.cols());
  x << xs, xt;
  Labels y = ys;
  y.insert(y.end(), yt_pseudo.begin(), yt_pseudo.end());
  std::vector<Domain> flags(static_cast<size_t>(xs.rows()), Domain::kSource);
  flags.resize(static_cast<size_t>(x.rows()), Domain::kTarget);
  const ForwardCache c = forward(p, x);
  AlignmentResult a = alignment_loss_and_gradient(c.features, y, flags, weights, etic, true, criterion);
  return {a.value, std::move(a.skipped), backward(p, c, Upstream{nullptr, &a.gradient, mu})};
}

inline std::vector<int> Permutation(int n, RandomSource& rng) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.Below(i)]);
  return idx;
}

inline Matrix Rows(const Matrix& m, const std::vector<int>& idx, size_t begin, size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (size_t r = begin; r < end; ++r) out.row(static_cast<Eigen::Index>(r - begin)) = m.row(idx[r]);
  return out;
}

template <typename T>
std::vector<T> Pick(const std::vector<T>& v, const std::vector<int>& idx, size_t begin, size_t end) {
  std::vector<T> out;
  out.reserve(end - begin);
  for (size_t r = begin; r < end; ++r) out.push_back(v[static_cast<size_t>(idx[r])]);
  return out;
}

// Cross-domain mixup: both endpoints drawn from source and target together,
// target points carrying pseudo-labels, labels mixed as convex vectors.
inline std::pair<Matrix, Matrix> MixupBatch(const Matrix& xs, const Labels& ys, const Matrix& xt,
                                            const Labels& yt_pseudo, int k, int count, double alpha,
                                            RandomSource& rng) {
  const auto ns = static_cast<std::uint64_t>(xs.rows());
  const std::uint64_t total = ns + static_cast<std::uint64_t>(xt.rows());
  Matrix x(count, xs.cols()), t = Matrix::Zero(count, k);
  auto row = [&](std::uint64_t i) { return i < ns ? xs.row(static_cast<Eigen::Index>(i)) : xt.row(static_cast<Eigen::Index>(i - ns)); };
  auto label = [&](std::uint64_t i) { return i < ns ? ys[i] : yt_pseudo[i - ns]; };
  for (int r = 0; r < count; ++r) {
    const std::uint64_t a = rng.Below(total), b = rng.Below(total);
    const double theta = rng.Beta(alpha, alpha);
    x.row(r) = theta * row(a) + (1.0 - theta) * row(b);
    t(r, label(a)) += theta;
    t(r, label(b)) += 1.0 - theta;
  }
  return {std::move(x), std::move(t)};
}

}  // namespace detail

// Runs warm_start followed by cfg.epochs epochs of the configured variant.
inline std::pair<MlpParams, TrainReport> train_baseline(const PdaTask& task, const TrainConfig& cfg) {
  validate(cfg);
  const auto violations = validate_task(task);
  if (!violations.empty()) {
    std::string msg = "task validation failed:";
    for (const auto& v : violations) msg += " " + v.message + ";";
    throw Error(ErrorKind::kInput, msg);
  }
  const int k = task.num_classes;
  const FeatureDataset& src = task.source;
  const FeatureDataset& tgt = task.target;
  const Matrix& xs = src.features();
  const Matrix& xt = tgt.features();
  const Labels& ys = src.labels();

  RandomSource rng(cfg.seed);
  RandomSource init_rng = rng.Split();
  RandomSource loop_rng = rng.Split();
  MlpParams params = init_model(src.dim(), cfg.hidden1, cfg.hidden2, k, init_rng, cfg.activation);
  params = warm_start(std::move(params), src, cfg.warmup_epochs, cfg.lr);
  AdamState adam = AdamState::For(params, cfg.lr);

  const LabelDistribution p_s = empirical_label_distribution(src);
  const Matrix ys_onehot = one_hot(ys, k);
  LabelDistribution p_t = p_s;
  const double mu = cfg.variant == Variant::kSamplingOnly || cfg.variant == Variant::kSourceOnly ? 0.0 : cfg.mu;
  const AlignmentCriterion criterion =
      cfg.variant == Variant::kIs2cHsic ? AlignmentCriterion::kHsic : AlignmentCriterion::kEtic;

  TrainReport report;
  report.variant = cfg.variant;
  report.mu = mu;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;

    // Pseudo-labels and label-ratio estimate.
    const Labels preds_s = predict(params, xs);
    const Labels preds_t = predict(params, xt);
    const ImportanceWeights w =
        bbse_estimate(confusion_matrix(preds_s, ys, k), pseudo_label_marginal(preds_t, k), p_s);
    try {
      p_t = target_label_distribution(p_s, w);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerateEstimate) throw;
      rec.bbse_fallback = true;
    }
    rec.p_t = p_t.probs();

    // Risk part.
    const int n_c = cfg.sampling.n_c.value_or(2 * src.size());
    Matrix risk_x, risk_t;
    std::vector<double> risk_w;
    bool weighted = false;
    switch (cfg.variant) {
      case Variant::kIs2c:
      case Variant::kSamplingOnly:
      case Variant::kIs2cHsic: {
        const SamplingDomain dom = build_sampling_domain(src, p_t, cfg.sampling, loop_rng);
        risk_x = dom.data.features();
        risk_t = one_hot(dom.data.labels(), k);
        break;
      }
      case Variant::kSourceOnly:
      case Variant::kEticOnly:
        risk_x = xs;
        risk_t = ys_onehot;
        break;
      case Variant::kWermEtic:
        risk_x = xs;
        risk_t = ys_onehot;
        weighted = true;
        risk_w.reserve(ys.size());
        for (int y : ys) risk_w.push_back(w.a[y]);
        break;
      case Variant::kMixupEtic: {
        auto [mx, mt] = detail::MixupBatch(xs, ys, xt, preds_t, k, n_c, cfg.sampling.alpha, loop_rng);
        risk_x = std::move(mx);
        risk_t = std::move(mt);
        break;
      }
    }
    const LabelDistribution align_weights =
        cfg.variant == Variant::kMixupEtic ? pseudo_label_marginal(preds_t, k) : p_t;

    auto apply = [&](const Matrix& rx, const Matrix& rt, const std::vector<double>* rw, const Matrix& axs,
                     const Labels& ays, const Matrix& axt, const Labels& ayt, double scale) {
      detail::RiskPart risk = detail::RiskStep(params, rx, rt, rw);
      MlpGradients total = std::move(risk.grad);
      rec.risk += scale * risk.value;
      if (mu != 0.0) {
        detail::AlignPart al = detail::AlignStep(params, axs, ays, axt, ayt, align_weights, mu, cfg.etic, criterion);
        accumulate(total, al.grad);
        rec.align += scale * al.value;
        for (auto& s : al.skipped)
          if (s.reason == "numerical-failure") rec.skipped.push_back(std::move(s));
      }
      adam_step(params, total, adam);
    };

    if (cfg.batch_size == 0) {
      apply(risk_x, risk_t, weighted ? &risk_w : nullptr, xs, ys, xt, preds_t, 1.0);
    } else {
      const auto bs = static_cast<size_t>(cfg.batch_size);
      const std::vector<int> perm = detail::Permutation(static_cast<int>(risk_x.rows()), loop_rng);
      const std::vector<int> perm_s = detail::Permutation(src.size(), loop_rng);
      const std::vector<int> perm_t = detail::Permutation(tgt.size(), loop_rng);
      const size_t steps = (perm.size() + bs - 1) / bs;
      for (size_t s = 0; s < steps; ++s) {
        const size_t b = s * bs, e = std::min(perm.size(), b + bs);
        const size_t bs_s = (s * bs) % perm_s.size(), bs_t = (s * bs) % perm_t.size();
        const size_t es_s = std::min(perm_s.size(), bs_s + bs), es_t = std::min(perm_t.size(), bs_t + bs);
        std::vector<double> rw;
        if (weighted) rw = detail::Pick(risk_w, perm, b, e);
        apply(detail::Rows(risk_x, perm, b, e), detail::Rows(risk_t, perm, b, e), weighted ? &rw : nullptr,
              detail::Rows(xs, perm_s, bs_s, es_s), detail::Pick(ys, perm_s, bs_s, es_s),
              detail::Rows(xt, perm_t, bs_t, es_t), detail::Pick(preds_t, perm_t, bs_t, es_t),
              1.0 / static_cast<double>(steps));
      }
    }
    rec.total = rec.risk + mu * rec.align;
    if (tgt.has_labels()) rec.target_accuracy = accuracy(predict(params, xt), tgt.labels());
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(std::move(rec));
  }
  if (tgt.has_labels()) report.final_target_accuracy = accuracy(predict(params, xt), tgt.labels());
  return {std::move(params), std::move(report)};
}

inline std::pair<MlpParams, TrainReport> train_is2c(const PdaTask& task, TrainConfig cfg) {
  cfg.variant = Variant::kIs2c;
  return train_baseline(task, cfg);
}

}  // namespace is2c
