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

// is2c: task generation, ingestion, training, evaluation and diagnostics.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "is2c/cli.hpp"

int main(int argc, char** argv) {
  using namespace is2c::cli;
  CLI::App app{"Partial domain adaptation on feature vectors"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  bool timing = false;

  auto* gen = app.add_subcommand("generate", "write a synthetic task (feature files + manifest)");
  gen->add_option("--config", config, "JSON config with a 'generate' section")->required();
  gen->add_option("--seed", seed, "overrides the config seed");

  std::string src_csv, tgt_csv, ingest_dir;
  int num_classes = 0;
  auto* ingest = app.add_subcommand("ingest", "convert CSV feature files into a task");
  ingest->add_option("--source", src_csv, "source CSV (f0,...,label)")->required();
  ingest->add_option("--target", tgt_csv, "target CSV (labels optional)")->required();
  ingest->add_option("--num-classes", num_classes, "K")->required();
  ingest->add_option("--out-dir", ingest_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a variant, write report CSV and snapshot");
  train->add_option("--config", config, "JSON run config")->required();
  train->add_option("--seed", seed, "overrides the config seed");
  train->add_flag("--timing", timing, "add a wall-time column to the report");

  EvaluateOptions ev;
  std::string ev_snapshot, ev_task, ev_out;
  std::optional<double> ev_theta;
  std::uint64_t ev_seed = 0;
  auto* evaluate = app.add_subcommand("evaluate", "metrics JSON for a snapshot on a task");
  evaluate->add_option("--snapshot", ev_snapshot)->required();
  evaluate->add_option("--task", ev_task, "task manifest")->required();
  evaluate->add_option("--out", ev_out, "metrics JSON path")->required();
  evaluate->add_flag("--bound", ev.bound, "include the bound report (needs --theta)");
  evaluate->add_option("--theta", ev_theta);
  evaluate->add_flag("--certified", ev.certified, "use the operator-norm Lipschitz constant");
  evaluate->add_option("--seed", ev_seed);

  BenchOptions bench;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("bench-etic", "time fast vs reference Sinkhorn iterations");
  bench_cmd->add_option("--sizes", bench.sizes)->delimiter(',');
  bench_cmd->add_option("--repeats", bench.repeats);
  bench_cmd->add_option("--fast-iters", bench.fast_iters);
  bench_cmd->add_option("--ref-iters", bench.ref_iters);
  bench_cmd->add_option("--seed", bench.seed);
  bench_cmd->add_option("--out", bench_out)->required();

  BoundReportOptions br;
  std::string br_snapshot, br_task, br_out;
  auto* bound = app.add_subcommand("bound-report", "generalization bound terms as JSON");
  bound->add_option("--snapshot", br_snapshot)->required();
  bound->add_option("--task", br_task)->required();
  bound->add_option("--theta", br.theta)->required();
  bound->add_option("--out", br_out)->required();
  bound->add_flag("--certified", br.certified, "use the operator-norm Lipschitz constant");
  bound->add_option("--seed", br.seed);

  ConvexityCmdOptions cx;
  std::string cx_out;
  auto* convex = app.add_subcommand("convexity", "source vs sampling-domain error curves");
  convex->add_option("--sigma", cx.sigma);
  convex->add_option("--n", cx.n);
  convex->add_option("--seeds", cx.seeds);
  convex->add_option("--epochs", cx.epochs);
  convex->add_option("--theta", cx.theta);
  convex->add_flag("--linear", cx.linear, "linear model with sign predictions");
  convex->add_option("--seed", cx.seed);
  convex->add_option("--out", cx_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  if (*gen) return cmd_generate(config, seed, std::cout, std::cerr);
  if (*ingest) return cmd_ingest(src_csv, tgt_csv, num_classes, ingest_dir, std::cout, std::cerr);
  if (*train) return cmd_train(config, seed, timing, std::cout, std::cerr);
  if (*evaluate) {
    ev.snapshot = ev_snapshot;
    ev.task = ev_task;
    ev.out = ev_out;
    ev.theta = ev_theta;
    ev.seed = ev_seed;
    return cmd_evaluate(ev, std::cout, std::cerr);
  }
  if (*bench_cmd) {
    bench.out = bench_out;
    return cmd_bench_etic(bench, std::cout, std::cerr);
  }
  if (*bound) {
    br.snapshot = br_snapshot;
    br.task = br_task;
    br.out = br_out;
    return cmd_bound_report(br, std::cout, std::cerr);
  }
  if (*convex) {
    cx.out = cx_out;
    return cmd_convexity(cx, std::cout, std::cerr);
  }
  return kUsage;
}
