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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "powersgd/commsim.hpp"
#include "powersgd/compressors.hpp"
#include "powersgd/efsgd.hpp"
#include "powersgd/error.hpp"
#include "powersgd/problems.hpp"
#include "powersgd/random.hpp"

namespace powersgd {

// Everything that determines a simulated training run. Identical configs give
// bit-identical results.
struct RunConfig {
  std::string task = "least-squares";  // least-squares | mlp | catalog-only
  std::string compressor = "powersgd";
  std::size_t rank = 2;
  std::size_t workers = 4;
  std::size_t steps = 500;
  double lr = 0.005;
  double momentum = 0.9;
  std::uint64_t seed = 42;
  // Global minibatch per step, split evenly across workers; 0 = full data.
  std::size_t batch = 32;
  double noise = 0.1;  // label noise of the least-squares task
  bool error_feedback = true;
  std::size_t threads = 1;
  std::string catalog = "resnet18";
  std::string out;
  std::string format = "csv";
};

struct TrainRow {
  std::size_t step = 0;
  double loss = 0.0;
  std::uint64_t bits_cumulative = 0;
  std::uint64_t decode_ops = 0;
};

struct TrainResult {
  std::vector<TrainRow> rows;
  bool diverged = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  CommStats totals;
  TensorList final_params;
};

inline std::unique_ptr<Problem> make_problem(const RunConfig& cfg) {
  if (cfg.task == "least-squares") {
    LeastSquaresConfig ls;
    ls.seed = cfg.seed;
    ls.noise = cfg.noise;
    return std::make_unique<LeastSquaresProblem>(ls);
  }
  if (cfg.task == "mlp") {
    MlpConfig mlp;
    mlp.seed = cfg.seed;
    return std::make_unique<MlpProblem>(mlp);
  }
  throw ContractViolation("task '" + cfg.task + "' has no trainable problem");
}

// Sample indices per worker for one step. The global batch is drawn from a
// stream keyed by (seed, step) and cut into W contiguous, equal chunks, so
// the union over workers does not depend on W.
inline std::vector<std::vector<std::size_t>> worker_batches(const Problem& problem,
                                                            const RunConfig& cfg,
                                                            std::uint64_t step) {
  const std::size_t n = problem.num_samples();
  std::vector<std::size_t> global;
  if (cfg.batch == 0) {
    POWERSGD_REQUIRE(n % cfg.workers == 0, "full-batch mode needs the ", n,
                     " samples to split evenly over ", cfg.workers, " workers");
    global = problem.all_samples();
  } else {
    POWERSGD_REQUIRE(cfg.batch % cfg.workers == 0, "batch ", cfg.batch,
                     " does not split evenly over ", cfg.workers, " workers");
    Rng rng = make_rng(cfg.seed, Stream::kBatch, {step});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    global.resize(cfg.batch);
    for (std::size_t& i : global) i = pick(rng);
  }
  std::vector<std::vector<std::size_t>> out(cfg.workers);
  for (std::size_t w = 0; w < cfg.workers; ++w)
    for (std::size_t k : shard_indices(global.size(), cfg.workers, w)) out[w].push_back(global[k]);
  return out;
}

inline std::vector<TensorList> worker_gradients(const Problem& problem, const TensorList& params,
                                                const std::vector<std::vector<std::size_t>>& batches,
                                                std::size_t threads) {
  std::vector<TensorList> grads(batches.size());
  const std::size_t pool = std::clamp<std::size_t>(threads, 1, batches.size());
  if (pool == 1) {
    for (std::size_t w = 0; w < batches.size(); ++w) grads[w] = problem.gradient(params, batches[w]);
    return grads;
  }
  std::vector<std::jthread> team;
  for (std::size_t t = 0; t < pool; ++t)
    team.emplace_back([&, t] {
      for (std::size_t w = t; w < batches.size(); w += pool)
        grads[w] = problem.gradient(params, batches[w]);
    });
  return grads;
}

// Runs EF-SGD (or plain momentum for Signum/Atomo) over the simulated
// communicator and records the full-data loss after every step. A non-finite
// loss stops the run and marks it diverged.
inline TrainResult run_training(const RunConfig& cfg, const Problem& problem) {
  POWERSGD_REQUIRE(cfg.workers >= 1, "workers must be positive");
  POWERSGD_REQUIRE(cfg.threads >= 1, "threads must be positive");
  const auto& specs = problem.specs();
  auto compressor = make_compressor({cfg.compressor, cfg.rank, cfg.seed});
  Communicator comm(cfg.workers);
  auto opt = efsgd::OptimizerState::create(problem.initial_params(), cfg.lr, cfg.momentum);
  auto workers = efsgd::make_workers(specs, cfg.workers);
  const efsgd::StepOptions options{.error_feedback = cfg.error_feedback};

  TrainResult result;
  result.initial_loss = problem.full_loss(opt.params);
  result.final_loss = result.initial_loss;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto batches = worker_batches(problem, cfg, t);
    const auto grads = worker_gradients(problem, opt.params, batches, cfg.threads);
    CommStats stats;
    try {
      stats = compressor->error_feedback()
                  ? efsgd::step(grads, specs, opt, workers, *compressor, comm, options)
                  : efsgd::step_plain_momentum(grads, specs, opt, workers, *compressor, comm);
    } catch (const NonFiniteGradient&) {
      result.diverged = true;
      result.final_loss = std::numeric_limits<double>::infinity();
      break;
    }
    const double loss = problem.full_loss(opt.params);
    result.rows.push_back({t + 1, loss, comm.cumulative().total_bits(), stats.decode_ops});
    result.final_loss = loss;
    if (!std::isfinite(loss)) {
      result.diverged = true;
      break;
    }
  }
  result.totals = comm.cumulative();
  result.final_params = std::move(opt.params);
  return result;
}

inline TrainResult run_training(const RunConfig& cfg) {
  const auto problem = make_problem(cfg);
  return run_training(cfg, *problem);
}

}  // namespace powersgd
