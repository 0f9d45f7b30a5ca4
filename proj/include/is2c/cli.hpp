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

// Command implementations behind tools/is2c. Every command returns a process
// exit code and writes diagnostics to the given stream:
//
//   0 success, 1 runtime failure, 2 config or usage, 3 task validation or
//   unreadable inputs, 4 shape mismatch, 5 diagnostics that need labels.

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "is2c/core.hpp"
#include "is2c/etic.hpp"
#include "is2c/eval.hpp"
#include "is2c/io.hpp"
#include "is2c/labelshift.hpp"
#include "is2c/model.hpp"
#include "is2c/sampling.hpp"
#include "is2c/synthetic.hpp"
#include "is2c/trainer.hpp"

namespace is2c::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kRuntime = 1,
  kUsage = 2,
  kTaskInvalid = 3,
  kShapeMismatch = 4,
  kLabelsMissing = 5,
};

class CliError : public std::runtime_error {
 public:
  CliError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

inline int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kUsage;
    case ErrorKind::kIo: return kTaskInvalid;
    case ErrorKind::kDimension: return kShapeMismatch;
    case ErrorKind::kLabelsRequired: return kLabelsMissing;
    default: return kRuntime;
  }
}

// Runs body, mapping exceptions to exit codes and messages on err.
template <typename F>
int Guard(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const CliError& e) {
    err << "error: " << e.what() << '\n';
    return e.code();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return ExitCodeFor(e.kind());
  } catch (const json::exception& e) {
    err << "error: invalid config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

// ---------------------------------------------------------------------------
// Config document
// ---------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<fs::path> task;  // manifest
  std::optional<GaussianPdaConfig> generate;
  std::optional<fs::path> output_dir;
  TrainConfig train;
  std::optional<fs::path> report;
  std::optional<fs::path> snapshot;
  json resolved;  // every field with defaults filled in, embedded in outputs
};

namespace detail {

inline void CheckKeys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw CliError(kUsage, "invalid config: " + section + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw CliError(kUsage, "invalid config: unknown key '" + (section.empty() ? key : section + "." + key) + "'");
}

template <typename T>
void Read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline fs::path Resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline std::string ActivationName(HiddenActivation a) { return a == HiddenActivation::kRelu ? "relu" : "identity"; }

inline json GenerateJson(const GaussianPdaConfig& g) {
  json j = {{"num_classes", g.num_classes},
            {"num_target_classes", g.num_target_classes},
            {"feature_dim", g.feature_dim},
            {"n_source", g.n_source},
            {"n_target", g.n_target},
            {"class_separation", g.class_separation},
            {"conditional_shift", g.conditional_shift}};
  if (g.target_proportions) j["target_proportions"] = g.target_proportions->probs();
  return j;
}

inline json TrainJson(const TrainConfig& t) {
  json sampling = {{"alpha", t.sampling.alpha}};
  if (t.sampling.n_c) sampling["n_c"] = *t.sampling.n_c;
  if (t.sampling.fixed_theta) sampling["theta"] = *t.sampling.fixed_theta;
  return {{"train",
           {{"variant", VariantName(t.variant)},
            {"mu", t.mu},
            {"epochs", t.epochs},
            {"warmup_epochs", t.warmup_epochs},
            {"lr", t.lr},
            {"batch_size", t.batch_size},
            {"hidden1", t.hidden1},
            {"hidden2", t.hidden2},
            {"activation", ActivationName(t.activation)}}},
          {"sampling", sampling},
          {"etic",
           {{"epsilon", t.etic.epsilon},
            {"lambda2", t.etic.lambda2},
            {"lambda1_median_scale", t.etic.lambda1_median_scale},
            {"max_iters", t.etic.max_iters},
            {"tol", t.etic.tol},
            {"kernel_floor", t.etic.kernel_floor},
            {"gradient", t.etic.gradient == GradientMode::kEnvelope ? "envelope" : "unrolled"}}}};
}

}  // namespace detail

// Parses a config document; relative paths resolve against base_dir.
inline RunConfig ParseRunConfig(const json& doc, const fs::path& base_dir, std::optional<std::uint64_t> seed_override) {
  using detail::CheckKeys;
  using detail::Read;
  CheckKeys(doc, "", {"seed", "task", "generate", "train", "sampling", "etic", "output"});
  RunConfig rc;
  Read(doc, "seed", rc.seed);
  if (seed_override) rc.seed = *seed_override;
  if (doc.contains("task")) rc.task = detail::Resolve(base_dir, doc.at("task").get<std::string>());

  if (doc.contains("generate")) {
    const json& g = doc.at("generate");
    CheckKeys(g, "generate", {"num_classes", "num_target_classes", "feature_dim", "n_source", "n_target",
                              "class_separation", "conditional_shift", "target_proportions", "output_dir"});
    GaussianPdaConfig cfg;
    Read(g, "num_classes", cfg.num_classes);
    Read(g, "num_target_classes", cfg.num_target_classes);
    Read(g, "feature_dim", cfg.feature_dim);
    Read(g, "n_source", cfg.n_source);
    Read(g, "n_target", cfg.n_target);
    Read(g, "class_separation", cfg.class_separation);
    Read(g, "conditional_shift", cfg.conditional_shift);
    if (g.contains("target_proportions")) {
      try {
        cfg.target_proportions = LabelDistribution(g.at("target_proportions").get<std::vector<double>>());
      } catch (const Error&) {
        throw CliError(kUsage, "invalid config: target_proportions");
      }
    }
    if (g.contains("output_dir")) rc.output_dir = detail::Resolve(base_dir, g.at("output_dir").get<std::string>());
    cfg.seed = rc.seed;
    rc.generate = cfg;
  }

  TrainConfig& t = rc.train;
  if (doc.contains("train")) {
    const json& j = doc.at("train");
    CheckKeys(j, "train", {"variant", "mu", "epochs", "warmup_epochs", "lr", "batch_size", "hidden1", "hidden2",
                           "activation"});
    if (j.contains("variant")) t.variant = ParseVariant(j.at("variant").get<std::string>());
    Read(j, "mu", t.mu);
    Read(j, "epochs", t.epochs);
    Read(j, "warmup_epochs", t.warmup_epochs);
    Read(j, "lr", t.lr);
    Read(j, "batch_size", t.batch_size);
    Read(j, "hidden1", t.hidden1);
    Read(j, "hidden2", t.hidden2);
    if (j.contains("activation")) {
      const auto a = j.at("activation").get<std::string>();
      if (a == "relu") t.activation = HiddenActivation::kRelu;
      else if (a == "identity") t.activation = HiddenActivation::kIdentity;
      else throw CliError(kUsage, "invalid config: activation");
    }
  }
  if (doc.contains("sampling")) {
    const json& j = doc.at("sampling");
    CheckKeys(j, "sampling", {"alpha", "n_c", "theta"});
    Read(j, "alpha", t.sampling.alpha);
    if (j.contains("n_c")) t.sampling.n_c = j.at("n_c").get<int>();
    if (j.contains("theta")) t.sampling.fixed_theta = j.at("theta").get<double>();
  }
  if (doc.contains("etic")) {
    const json& j = doc.at("etic");
    CheckKeys(j, "etic", {"epsilon", "lambda2", "lambda1_median_scale", "max_iters", "tol", "kernel_floor", "gradient"});
    Read(j, "epsilon", t.etic.epsilon);
    Read(j, "lambda2", t.etic.lambda2);
    Read(j, "lambda1_median_scale", t.etic.lambda1_median_scale);
    Read(j, "max_iters", t.etic.max_iters);
    Read(j, "tol", t.etic.tol);
    Read(j, "kernel_floor", t.etic.kernel_floor);
    if (j.contains("gradient")) {
      const auto g = j.at("gradient").get<std::string>();
      if (g == "envelope") t.etic.gradient = GradientMode::kEnvelope;
      else if (g == "unrolled") t.etic.gradient = GradientMode::kUnrolled;
      else throw CliError(kUsage, "invalid config: gradient");
    }
  }
  t.seed = rc.seed;
  if (doc.contains("output")) {
    const json& j = doc.at("output");
    CheckKeys(j, "output", {"report", "snapshot"});
    if (j.contains("report")) rc.report = detail::Resolve(base_dir, j.at("report").get<std::string>());
    if (j.contains("snapshot")) rc.snapshot = detail::Resolve(base_dir, j.at("snapshot").get<std::string>());
  }

  validate(t);
  if (rc.generate) validate(*rc.generate);

  rc.resolved = detail::TrainJson(t);
  rc.resolved["seed"] = rc.seed;
  if (rc.generate) rc.resolved["generate"] = detail::GenerateJson(*rc.generate);
  if (rc.task) rc.resolved["task"] = rc.task->filename().string();
  return rc;
}

inline RunConfig LoadRunConfig(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::vector<char> bytes;
  try {
    bytes = io::ReadFile(path);
  } catch (const Error&) {
    throw CliError(kUsage, "cannot read config " + path.string());
  }
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw CliError(kUsage, std::string("invalid config: ") + e.what());
  }
  return ParseRunConfig(doc, path.parent_path(), seed_override);
}

// "# key: value" lines that open every CSV output.
inline std::string ProvenanceHeader(const json& provenance) {
  return "# provenance: " + provenance.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Task manifest
// ---------------------------------------------------------------------------

struct LoadedTask {
  PdaTask task;
  json manifest;
};

inline json ManifestEntry(const fs::path& file, const std::vector<char>& bytes, const FeatureDataset& ds) {
  return {{"path", file.filename().string()},
          {"fnv1a64", io::Hex64(io::Fnv1a64(bytes))},
          {"rows", ds.size()},
          {"dim", ds.dim()},
          {"labelled", ds.has_labels()}};
}

inline json MakeManifest(const PdaTask& task, const json& source_entry, const json& target_entry,
                         const json& provenance) {
  json m = {{"format", "is2c-task"},
            {"version", io::kFormatVersion},
            {"num_classes", task.num_classes},
            {"source", source_entry},
            {"target", target_entry},
            {"provenance", provenance}};
  if (task.shared_classes) m["shared_classes"] = std::vector<int>(task.shared_classes->begin(), task.shared_classes->end());
  return m;
}

inline LoadedTask LoadTask(const fs::path& manifest_path) {
  std::vector<char> bytes;
  try {
    bytes = io::ReadFile(manifest_path);
  } catch (const Error& e) {
    throw CliError(kTaskInvalid, e.what());
  }
  json m;
  try {
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw CliError(kTaskInvalid, "task manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (m.value("format", "") != "is2c-task") throw CliError(kTaskInvalid, "task manifest: bad format tag");
    const int k = m.at("num_classes").get<int>();
    if (k < 1) throw CliError(kTaskInvalid, "task manifest: num_classes must be positive");
    auto load = [&](const char* key) {
      const json& e = m.at(key);
      const fs::path file = detail::Resolve(manifest_path.parent_path(), e.at("path").get<std::string>());
      std::vector<char> data;
      try {
        data = io::ReadFile(file);
      } catch (const Error& err) {
        throw CliError(kTaskInvalid, err.what());
      }
      if (e.contains("fnv1a64") && e.at("fnv1a64").get<std::string>() != io::Hex64(io::Fnv1a64(data)))
        throw CliError(kTaskInvalid, "checksum mismatch for " + file.string());
      try {
        if (file.extension() == ".csv")
          return io::DecodeFeaturesCsv(std::string(data.begin(), data.end()), k, file.string());
        return io::DecodeFeatures(std::move(data), k, file.string());
      } catch (const Error& err) {
        throw CliError(kTaskInvalid, err.what());
      }
    };
    PdaTask task{load("source"), load("target"), k, std::nullopt};
    if (m.contains("shared_classes")) {
      const auto v = m.at("shared_classes").get<std::vector<int>>();
      task.shared_classes = std::set<int>(v.begin(), v.end());
    }
    return LoadedTask{std::move(task), std::move(m)};
  } catch (const json::exception& e) {
    throw CliError(kTaskInvalid, "task manifest " + manifest_path.string() + ": " + e.what());
  }
}

inline void RequireValidTask(const PdaTask& task) {
  const auto violations = validate_task(task);
  if (violations.empty()) return;
  std::string msg = "task validation failed:";
  for (const auto& v : violations) msg += "\n  - " + v.message;
  throw CliError(kTaskInvalid, msg);
}

// Shared classes for diagnostics: the manifest's list, otherwise the
// classes present in the target labels.
inline std::set<int> SharedClasses(const PdaTask& task) {
  if (task.shared_classes) return *task.shared_classes;
  std::set<int> out;
  if (task.target.has_labels())
    for (int y : task.target.labels()) out.insert(y);
  return out;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

inline int cmd_generate(const fs::path& config_path, std::optional<std::uint64_t> seed, std::ostream& out,
                        std::ostream& err) {
  return Guard(err, [&] {
    const RunConfig rc = LoadRunConfig(config_path, seed);
    if (!rc.generate) throw CliError(kUsage, "invalid config: missing 'generate' section");
    const fs::path dir = rc.output_dir.value_or(config_path.parent_path());
    const PdaTask task = generate_gaussian_pda(*rc.generate);
    const auto src = io::EncodeFeatures(task.source);
    const auto tgt = io::EncodeFeatures(task.target);
    io::WriteFile(dir / "source.is2c", src);
    io::WriteFile(dir / "target.is2c", tgt);
    json provenance = {{"command", "generate"}, {"config", rc.resolved}, {"seed", rc.seed}};
    const json manifest = MakeManifest(task, ManifestEntry(dir / "source.is2c", src, task.source),
                                       ManifestEntry(dir / "target.is2c", tgt, task.target), provenance);
    io::WriteText(dir / "task.json", manifest.dump(2) + "\n");
    out << "wrote " << (dir / "task.json").string() << '\n';
    return static_cast<int>(kOk);
  });
}

// Converts CSV feature files into a binary task with manifest.
inline int cmd_ingest(const fs::path& source_csv, const fs::path& target_csv, int num_classes,
                      const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    if (num_classes < 1) throw CliError(kUsage, "--num-classes must be positive");
    auto read = [&](const fs::path& p) {
      try {
        return io::ReadFeaturesAny(p, num_classes);
      } catch (const Error& e) {
        throw CliError(kTaskInvalid, e.what());
      }
    };
    const PdaTask task{read(source_csv), read(target_csv), num_classes, std::nullopt};
    RequireValidTask(task);
    const auto src = io::EncodeFeatures(task.source);
    const auto tgt = io::EncodeFeatures(task.target);
    io::WriteFile(out_dir / "source.is2c", src);
    io::WriteFile(out_dir / "target.is2c", tgt);
    json provenance = {{"command", "ingest"},
                       {"source", source_csv.filename().string()},
                       {"target", target_csv.filename().string()},
                       {"num_classes", num_classes}};
    const json manifest = MakeManifest(task, ManifestEntry(out_dir / "source.is2c", src, task.source),
                                       ManifestEntry(out_dir / "target.is2c", tgt, task.target), provenance);
    io::WriteText(out_dir / "task.json", manifest.dump(2) + "\n");
    out << "wrote " << (out_dir / "task.json").string() << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline std::string TrainReportCsv(const TrainReport& r, int k, const json& provenance, bool timing) {
  std::ostringstream os;
  os << ProvenanceHeader(provenance);
  os << "epoch,risk,align,total";
  for (int j = 0; j < k; ++j) os << ",p_t_" << j;
  os << ",bbse_fallback,skipped,target_accuracy";
  if (timing) os << ",wall_seconds";
  os << '\n';
  for (const auto& e : r.epochs) {
    os << e.epoch << ',' << io::FormatDouble(e.risk) << ',' << io::FormatDouble(e.align) << ','
       << io::FormatDouble(e.total);
    for (double p : e.p_t) os << ',' << io::FormatDouble(p);
    os << ',' << (e.bbse_fallback ? 1 : 0) << ',';
    for (size_t i = 0; i < e.skipped.size(); ++i) os << (i ? ";" : "") << e.skipped[i].class_index;
    os << ',';
    if (e.target_accuracy) os << io::FormatDouble(*e.target_accuracy);
    if (timing) os << ',' << io::FormatDouble(e.wall_seconds);
    os << '\n';
  }
  return os.str();
}

inline int cmd_train(const fs::path& config_path, std::optional<std::uint64_t> seed, bool timing,
                     std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    const RunConfig rc = LoadRunConfig(config_path, seed);
    if (!rc.task) throw CliError(kUsage, "invalid config: missing 'task'");
    const LoadedTask lt = LoadTask(*rc.task);
    RequireValidTask(lt.task);
    auto [params, report] = train_baseline(lt.task, rc.train);
    const json provenance = {{"command", "train"},
                             {"config", rc.resolved},
                             {"seed", rc.seed},
                             {"task_checksums",
                              {lt.manifest.at("source").value("fnv1a64", ""),
                               lt.manifest.at("target").value("fnv1a64", "")}}};
    const fs::path report_path = rc.report.value_or(config_path.parent_path() / "train_report.csv");
    const fs::path snapshot_path = rc.snapshot.value_or(config_path.parent_path() / "model.snapshot");
    io::WriteText(report_path, TrainReportCsv(report, lt.task.num_classes, provenance, timing));
    io::WriteSnapshot(snapshot_path, params, provenance.dump());
    if (report.final_target_accuracy)
      out << "final target accuracy: " << io::FormatDouble(*report.final_target_accuracy) << '\n';
    out << "wrote " << report_path.string() << " and " << snapshot_path.string() << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------
// evaluate / bound-report
// ---------------------------------------------------------------------------

inline json BoundJson(const BoundReport& b) {
  return {{"eps_c", b.eps_c},
          {"eps_t", b.eps_t},
          {"delta_be", b.delta_be},
          {"delta_ce", b.delta_ce},
          {"label_l1", b.label_l1},
          {"term_label", b.term_label},
          {"term_cond", b.term_cond},
          {"term_mix", b.term_mix},
          {"lipschitz_estimate", b.lipschitz_estimate},
          {"lipschitz_mode", b.lipschitz_certified ? "certified" : "empirical_lower_bound"},
          {"theta", b.theta},
          {"c_s", b.c_s},
          {"rhs_total", b.rhs_total},
          {"gap", b.gap},
          {"slack", b.slack},
          {"holds", b.holds},
          {"asserted", b.lipschitz_certified},
          {"exact_sampling_law", b.exact_sampling_law},
          {"p_c", b.p_c},
          {"p_t", b.p_t}};
}

inline void RequireCompatible(const MlpParams& p, const PdaTask& task) {
  if (p.input_dim() != task.source.dim())
    throw CliError(kShapeMismatch, "snapshot expects " + std::to_string(p.input_dim()) +
                                       " input features, task has " + std::to_string(task.source.dim()));
  if (p.num_classes() != task.num_classes)
    throw CliError(kShapeMismatch, "snapshot has " + std::to_string(p.num_classes()) + " classes, task has " +
                                       std::to_string(task.num_classes));
}

// Sampling domain at fixed theta, drawn from the model's own label-ratio
// estimate, as the training loop would draw it.
inline BoundReport ComputeBound(const MlpParams& p, const PdaTask& task, double theta, std::uint64_t seed,
                                LipschitzMode mode) {
  if (!task.target.has_labels()) throw CliError(kLabelsMissing, "bound report requires labeled target");
  const int k = task.num_classes;
  const LabelDistribution p_s = empirical_label_distribution(task.source);
  const Labels preds_s = predict(p, task.source.features());
  const Labels preds_t = predict(p, task.target.features());
  const ImportanceWeights w =
      bbse_estimate(confusion_matrix(preds_s, task.source.labels(), k), pseudo_label_marginal(preds_t, k), p_s);
  LabelDistribution p_t = p_s;
  try {
    p_t = target_label_distribution(p_s, w);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerateEstimate) throw;
  }
  RandomSource rng(seed);
  RandomSource draw_rng = rng.Split();
  RandomSource lip_rng = rng.Split();
  SamplingConfig sc;
  sc.fixed_theta = theta;
  const SamplingDomain dom = build_sampling_domain(task.source, p_t, sc, draw_rng);
  BoundOptions opts;
  opts.lipschitz = mode;
  return bound_report(p, task, dom, theta, lip_rng, opts);
}

struct EvaluateOptions {
  fs::path snapshot, task, out;
  bool bound = false;
  std::optional<double> theta;
  bool certified = false;
  std::uint64_t seed = 0;
};

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    if (o.bound && !o.theta) throw CliError(kUsage, "--bound requires --theta");
    if (o.theta && !(*o.theta >= 0.0 && *o.theta <= 1.0)) throw CliError(kUsage, "--theta must lie in [0, 1]");
    io::Snapshot snap;
    try {
      snap = io::ReadSnapshot(o.snapshot);
    } catch (const Error& e) {
      throw CliError(kTaskInvalid, e.what());
    }
    const LoadedTask lt = LoadTask(o.task);
    RequireValidTask(lt.task);
    RequireCompatible(snap.params, lt.task);
    const PdaTask& task = lt.task;
    const int k = task.num_classes;
    const MlpParams& p = snap.params;
    json metrics;
    metrics["provenance"] = {{"command", "evaluate"},
                             {"seed", o.seed},
                             {"bound", o.bound},
                             {"certified", o.certified},
                             {"snapshot", json::parse(snap.provenance_json.empty() ? "{}" : snap.provenance_json)}};
    if (o.theta) metrics["provenance"]["theta"] = *o.theta;
    const Labels preds_s = predict(p, task.source.features());
    const Labels preds_t = predict(p, task.target.features());
    metrics["source_model_error"] = model_error(preds_s, task.source.labels());
    if (task.target.has_labels()) {
      const Labels& yt = task.target.labels();
      const double err_t = model_error(preds_t, yt);
      metrics["target_accuracy"] = 1.0 - err_t;
      metrics["target_model_error"] = err_t;
      metrics["delta_be"] = balanced_prediction_error(preds_t, yt, k);
      const LabelDistribution p_t = empirical_label_distribution(task.target);
      metrics["delta_ce"] = conditional_error_gap(preds_s, task.source.labels(), preds_t, yt, p_t, k);
      const Matrix fs_ = forward(p, task.source.features()).features;
      const Matrix ft_ = forward(p, task.target.features()).features;
      ADistanceOptions ao;
      ao.seed = o.seed;
      const ADistanceReport a =
          class_conditional_a_distance(fs_, task.source.labels(), ft_, yt, SharedClasses(task), ao);
      metrics["a_distance"] = a.value;
      json per = json::object();
      for (const auto& [j, v] : a.per_class) per[std::to_string(j)] = v;
      metrics["a_distance_per_class"] = per;
      json skipped = json::array();
      for (const auto& s : a.skipped) skipped.push_back({{"class", s.class_index}, {"reason", s.reason}});
      metrics["a_distance_skipped"] = skipped;
    }
    if (o.bound)
      metrics["bound"] = BoundJson(ComputeBound(p, task, *o.theta, o.seed,
                                                o.certified ? LipschitzMode::kCertified : LipschitzMode::kEmpirical));
    io::WriteText(o.out, metrics.dump(2) + "\n");
    if (metrics.contains("target_accuracy"))
      out << "target accuracy: " << io::FormatDouble(metrics["target_accuracy"].get<double>()) << '\n';
    out << "wrote " << o.out.string() << '\n';
    return static_cast<int>(kOk);
  });
}

struct BoundReportOptions {
  fs::path snapshot, task, out;
  double theta = 0.0;
  bool certified = false;
  std::uint64_t seed = 0;
};

inline int cmd_bound_report(const BoundReportOptions& o, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    if (!(o.theta >= 0.0 && o.theta <= 1.0)) throw CliError(kUsage, "--theta must lie in [0, 1]");
    io::Snapshot snap;
    try {
      snap = io::ReadSnapshot(o.snapshot);
    } catch (const Error& e) {
      throw CliError(kTaskInvalid, e.what());
    }
    const LoadedTask lt = LoadTask(o.task);
    RequireValidTask(lt.task);
    RequireCompatible(snap.params, lt.task);
    const BoundReport b = ComputeBound(snap.params, lt.task, o.theta, o.seed,
                                       o.certified ? LipschitzMode::kCertified : LipschitzMode::kEmpirical);
    json doc = BoundJson(b);
    doc["provenance"] = {{"command", "bound-report"},
                         {"seed", o.seed},
                         {"theta", o.theta},
                         {"certified", o.certified},
                         {"snapshot", json::parse(snap.provenance_json.empty() ? "{}" : snap.provenance_json)}};
    io::WriteText(o.out, doc.dump(2) + "\n");
    out << "gap " << io::FormatDouble(b.gap) << " rhs " << io::FormatDouble(b.rhs_total)
        << (b.holds ? " (holds)" : " (violated)") << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------
// bench-etic
// ---------------------------------------------------------------------------

struct BenchRow {
  int n = 0;
  double fast_mean = 0, fast_std = 0, ref_mean = 0, ref_std = 0;
  std::uint64_t fast_flops = 0, ref_flops = 0;
  std::optional<double> rel_diff;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  double fast_slope = 0.0, ref_slope = 0.0;
};

// Least-squares slope of log(t) against log(n).
inline double LogLogSlope(const std::vector<double>& n, const std::vector<double>& t) {
  const size_t m = n.size();
  if (m < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < m; ++i) {
    const double x = std::log(n[i]), y = std::log(t[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double md = static_cast<double>(m);
  return (md * sxy - sx * sy) / (md * sxx - sx * sx);
}

// Times the Sinkhorn scaling loops per iteration on one random two-domain
// class of size n (d = 16), fixed iteration counts, tol = 0.
inline BenchResult RunEticBench(const std::vector<int>& sizes, int repeats, int fast_iters, int ref_iters,
                                std::uint64_t seed) {
  if (sizes.empty()) throw CliError(kUsage, "--sizes must not be empty");
  for (size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 4) throw CliError(kUsage, "benchmark sizes must be >= 4");
    if (i && sizes[i] <= sizes[i - 1]) throw CliError(kUsage, "benchmark sizes must be ascending");
  }
  if (repeats < 1 || fast_iters < 1 || ref_iters < 1) throw CliError(kUsage, "repeats and iterations must be >= 1");
  BenchResult out;
  RandomSource rng(seed);
  std::vector<double> ns, tf, tr;
  for (int n : sizes) {
    Matrix x(n, 16);
    std::vector<Domain> flags(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      flags[static_cast<size_t>(i)] = i % 2 == 0 ? Domain::kSource : Domain::kTarget;
      const double shift = i % 2 == 0 ? 0.0 : 0.5;
      for (int c = 0; c < 16; ++c) x(i, c) = rng.Normal() + shift;
    }
    EticConfig cfg;
    cfg.tol = 0.0;
    const EticWorkspace ws = make_workspace(x, flags, cfg);
    const ReferenceWorkspace rws = make_reference_workspace(x, flags, cfg);
    auto time_it = [&](auto&& body, int iters) {
      std::vector<double> samples;
      for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        samples.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / iters);
      }
      double mean = 0, var = 0;
      for (double s : samples) mean += s;
      mean /= static_cast<double>(samples.size());
      for (double s : samples) var += (s - mean) * (s - mean);
      return std::pair{mean, samples.size() > 1 ? std::sqrt(var / static_cast<double>(samples.size() - 1)) : 0.0};
    };
    BenchRow row;
    row.n = n;
    EticConfig fc = cfg;
    fc.max_iters = fast_iters;
    FlopCounter fast_counter;
    sinkhorn_scaling(ws.a, ws.b, ws.k1, ws.k2, fc, fast_counter);
    row.fast_flops = fast_counter.flops / static_cast<std::uint64_t>(fast_iters);
    std::tie(row.fast_mean, row.fast_std) =
        time_it([&] { sinkhorn_scaling(ws.a, ws.b, ws.k1, ws.k2, fc); }, fast_iters);
    EticConfig rc = cfg;
    rc.max_iters = ref_iters;
    FlopCounter ref_counter;
    reference_sinkhorn_scaling(rws, rws.a, rws.b, flags, rc, ref_counter);
    row.ref_flops = ref_counter.flops / static_cast<std::uint64_t>(ref_iters);
    std::tie(row.ref_mean, row.ref_std) =
        time_it([&] { reference_sinkhorn_scaling(rws, rws.a, rws.b, flags, rc); }, ref_iters);
    if (n <= 64) {
      EticConfig vc;
      const double f = etic_per_class(x, flags, vc);
      const double r = tensor_sinkhorn_reference(x, flags, vc);
      row.rel_diff = std::abs(f - r) / std::max(std::abs(r), 1e-300);
    }
    ns.push_back(n);
    tf.push_back(row.fast_mean);
    tr.push_back(row.ref_mean);
    out.rows.push_back(row);
  }
  out.fast_slope = LogLogSlope(ns, tf);
  out.ref_slope = LogLogSlope(ns, tr);
  return out;
}

struct BenchOptions {
  std::vector<int> sizes = {128, 256, 512, 1024};
  int repeats = 3;
  int fast_iters = 20;
  int ref_iters = 2;
  std::uint64_t seed = 0;
  fs::path out;
};

inline int cmd_bench_etic(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    const BenchResult r = RunEticBench(o.sizes, o.repeats, o.fast_iters, o.ref_iters, o.seed);
    std::ostringstream os;
    json sizes = o.sizes;
    os << ProvenanceHeader({{"command", "bench-etic"},
                            {"sizes", sizes},
                            {"repeats", o.repeats},
                            {"fast_iters", o.fast_iters},
                            {"ref_iters", o.ref_iters},
                            {"seed", o.seed}});
    os << "n,fast_mean_s,fast_std_s,ref_mean_s,ref_std_s,fast_flops_per_iter,ref_flops_per_iter,rel_diff\n";
    for (const auto& row : r.rows) {
      os << row.n << ',' << io::FormatDouble(row.fast_mean) << ',' << io::FormatDouble(row.fast_std) << ','
         << io::FormatDouble(row.ref_mean) << ',' << io::FormatDouble(row.ref_std) << ',' << row.fast_flops << ','
         << row.ref_flops << ',';
      if (row.rel_diff) os << io::FormatDouble(*row.rel_diff);
      os << '\n';
    }
    os << "# slope_fast: " << io::FormatDouble(r.fast_slope) << '\n';
    os << "# slope_reference: " << io::FormatDouble(r.ref_slope) << '\n';
    io::WriteText(o.out, os.str());
    out << "slope fast " << io::FormatDouble(r.fast_slope) << ", reference " << io::FormatDouble(r.ref_slope)
        << '\n';
    return static_cast<int>(kOk);
  });
}

// ---------------------------------------------------------------------------
// convexity
// ---------------------------------------------------------------------------

struct ConvexityCmdOptions {
  double sigma = 10.0;
  int n = 200;
  int seeds = 5;
  int epochs = 200;
  double theta = 0.5;
  bool linear = false;
  std::uint64_t seed = 0;
  fs::path out;
};

inline int cmd_convexity(const ConvexityCmdOptions& o, std::ostream& out, std::ostream& err) {
  return Guard(err, [&] {
    if (o.seeds < 1) throw CliError(kUsage, "--seeds must be >= 1");
    std::ostringstream os;
    os << ProvenanceHeader({{"command", "convexity"},
                            {"sigma", o.sigma},
                            {"n", o.n},
                            {"seeds", o.seeds},
                            {"epochs", o.epochs},
                            {"theta", o.theta},
                            {"model", o.linear ? "linear" : "convex"},
                            {"seed", o.seed}});
    os << "seed,epoch,eps_source,eps_sampling\n";
    ConvexityOptions opts;
    opts.model = o.linear ? ConvexModelKind::kLinear : ConvexModelKind::kConvex;
    double gap = 0.0;
    for (int s = 0; s < o.seeds; ++s) {
      ConvexStudyConfig cfg{o.sigma, o.n, o.seed + static_cast<std::uint64_t>(s)};
      validate(cfg);
      const ConvexityCurves c = convexity_experiment(cfg, o.theta, o.epochs, opts);
      for (size_t e = 0; e < c.eps_source.size(); ++e)
        os << cfg.seed << ',' << e << ',' << io::FormatDouble(c.eps_source[e]) << ','
           << io::FormatDouble(c.eps_sampling[e]) << '\n';
      gap += c.mean_gap() / o.seeds;
    }
    io::WriteText(o.out, os.str());
    out << "mean gap eps_source - eps_sampling: " << io::FormatDouble(gap) << '\n';
    return static_cast<int>(kOk);
  });
}

}  // namespace is2c::cli
