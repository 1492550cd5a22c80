// Copyright 2026 The powersgd-sim Authors. All Rights Reserved.
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
// =============================================================================

#pragma once

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "powersgd/models.hpp"
#include "powersgd/report.hpp"
#include "powersgd/train.hpp"
#include "powersgd/verify.hpp"

namespace powersgd::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kVerificationFailed = 2, kDiverged = 3 };

namespace detail {

// Writes to --out when given, otherwise to `fallback`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw ContractViolation("cannot open output file '" + path + "'");
      os_ = &file_;
    }
  }
  std::ostream& stream() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

inline void add_common(CLI::App& cmd, RunConfig& cfg) {
  cmd.add_option("--compressor", cfg.compressor, "compressor id")
      ->check(CLI::IsMember(compressor_ids()))
      ->capture_default_str();
  cmd.add_option("--rank", cfg.rank, "rank (or rank-matched budget)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd.add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  cmd.add_option("--out", cfg.out, "output file (default: stdout)");
  cmd.add_option("--format", cfg.format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
}

}  // namespace detail

inline int cmd_ratio(const RunConfig& cfg, std::ostream& out) {
  const ModelCatalog catalog = load_catalog(cfg.catalog);
  const RatioReport report = compression_ratio(catalog, {cfg.compressor, cfg.rank, cfg.seed});
  detail::Sink sink(cfg.out, out);
  if (cfg.format == "json")
    report::write_ratio_json(sink.stream(), report);
  else
    report::write_ratio_csv(sink.stream(), report);
  return kOk;
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const TrainResult result = run_training(cfg);
  detail::Sink sink(cfg.out, out);
  if (cfg.format == "json")
    report::write_train_json(sink.stream(), cfg, result);
  else
    report::write_train_csv(sink.stream(), result);
  if (result.diverged) {
    err << "training diverged after " << result.rows.size() << " of " << cfg.steps << " steps\n";
    return kDiverged;
  }
  return kOk;
}

inline int cmd_verify(const std::vector<std::string>& suites, const RunConfig& cfg,
                      std::ostream& out) {
  std::vector<verify::SuiteResult> results;
  for (const std::string& id : suites) results.push_back(verify::run_suite(id));
  detail::Sink sink(cfg.out, out);
  bool ok = true;
  if (cfg.format == "json") {
    report::write_verify_json(sink.stream(), results);
  }
  for (const auto& r : results) {
    if (cfg.format != "json") report::write_verify_text(sink.stream(), r);
    ok = ok && r.passed();
  }
  return ok ? kOk : kVerificationFailed;
}

// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Simulated low-rank gradient compression for data-parallel SGD"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto* ratio = app.add_subcommand("ratio", "per-parameter and total compression ratios");
  detail::add_common(*ratio, cfg);
  ratio->add_option("--catalog", cfg.catalog, "resnet18 | lstm | path to a catalog file")
      ->capture_default_str();

  auto* train = app.add_subcommand("train", "simulated EF-SGD training run");
  detail::add_common(*train, cfg);
  train->add_option("--task", cfg.task, "least-squares | mlp")
      ->check(CLI::IsMember({"least-squares", "mlp", "catalog-only"}))
      ->capture_default_str();
  train->add_option("--workers", cfg.workers, "number of workers W")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--steps", cfg.steps, "iterations")->capture_default_str();
  train->add_option("--lr", cfg.lr, "learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--momentum", cfg.momentum, "momentum coefficient")
      ->check(CLI::Range(0.0, 0.999999))
      ->capture_default_str();
  train->add_option("--batch", cfg.batch, "global minibatch per step (0 = full data)")
      ->capture_default_str();
  train->add_option("--noise", cfg.noise, "label noise of the least-squares task")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train->add_option("--threads", cfg.threads, "threads for worker gradients")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_flag("!--no-error-feedback", cfg.error_feedback, "disable error feedback");
  train->add_option("--catalog", cfg.catalog, "unused by train; accepted for uniformity");

  std::vector<std::string> suites;
  auto* verify_cmd = app.add_subcommand("verify", "run verification suites");
  verify_cmd->add_option("suite", suites, "suite ids (default: all)")
      ->check(CLI::IsMember(verify::suite_ids()));
  verify_cmd->add_option("--out", cfg.out, "output file (default: stdout)");
  verify_cmd->add_option("--format", cfg.format, "text | json")
      ->check(CLI::IsMember({"csv", "text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*ratio) return cmd_ratio(cfg, out);
    if (*train) return cmd_train(cfg, out, err);
    if (suites.empty()) suites = verify::suite_ids();
    return cmd_verify(suites, cfg, out);
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace powersgd::cli
