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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "powersgd/commsim.hpp"
#include "powersgd/compressors.hpp"
#include "powersgd/efsgd.hpp"
#include "powersgd/linalg.hpp"
#include "powersgd/models.hpp"
#include "powersgd/problems.hpp"
#include "powersgd/random.hpp"
#include "powersgd/train.hpp"

namespace powersgd::verify {

struct Check {
  std::string what;
  bool pass = false;
  std::string observed;
  std::string expected;
  // Diagnostic only; never decides the outcome.
  bool informational = false;
};

struct SuiteResult {
  std::string id;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) {
             return c.pass || c.informational;
           });
  }
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

class Recorder {
 public:
  explicit Recorder(std::string id) { result_.id = std::move(id); }

  void check(std::string what, bool pass, std::string observed, std::string expected) {
    result_.checks.push_back({std::move(what), pass, std::move(observed), std::move(expected)});
  }
  void note(std::string what, bool pass, std::string observed, std::string expected) {
    result_.checks.push_back(
        {std::move(what), pass, std::move(observed), std::move(expected), true});
  }
  // Compares an integer-valued quantity exactly.
  void equal(std::string what, std::uint64_t observed, std::uint64_t expected) {
    check(std::move(what), observed == expected, str(observed), str(expected));
  }
  void at_most(std::string what, double observed, double limit) {
    check(std::move(what), observed <= limit, fmt(observed), "<= " + fmt(limit));
  }

  SuiteResult finish(std::chrono::steady_clock::time_point start, double time_limit_s) {
    result_.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (time_limit_s > 0.0) at_most("runtime (s)", result_.seconds, time_limit_s);
    return std::move(result_);
  }

 private:
  SuiteResult result_;
};

// n x m matrix with prescribed singular values and random singular vectors.
inline Matrix matrix_with_spectrum(std::size_t rows, std::size_t cols,
                                   const std::vector<double>& sigma, Rng& rng) {
  const Matrix u = orthogonalize(gaussian_matrix(rows, sigma.size(), rng));
  Matrix v = orthogonalize(gaussian_matrix(cols, sigma.size(), rng));
  for (std::size_t j = 0; j < sigma.size(); ++j)
    for (std::size_t i = 0; i < cols; ++i) v(i, j) *= sigma[j];
  return matmul_nt(u, v);
}

// Entrywise Monte Carlo test of E[estimate] = target: every entry's sample
// mean must sit within `z` standard errors of the target.
struct MonteCarloOutcome {
  double worst_z = 0.0;
  std::size_t draws = 0;
};

inline MonteCarloOutcome monte_carlo_mean(const Matrix& target, std::size_t draws,
                                          const std::function<Matrix()>& estimate) {
  Matrix sum(target.rows(), target.cols()), sum_sq(target.rows(), target.cols());
  for (std::size_t d = 0; d < draws; ++d) {
    const Matrix x = estimate();
    for (std::size_t k = 0; k < x.size(); ++k) {
      sum[k] += x[k];
      sum_sq[k] += x[k] * x[k];
    }
  }
  const double n = static_cast<double>(draws);
  MonteCarloOutcome out{0.0, draws};
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double mean = sum[k] / n;
    const double var = std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double gap = std::abs(mean - target[k]);
    // Entries with (numerically) zero variance must match to rounding.
    const double z = se > 1e-12 * (1.0 + std::abs(target[k])) ? gap / se
                     : gap <= 1e-9 * (1.0 + std::abs(target[k])) ? 0.0
                                                                  : HUGE_VAL;
    out.worst_z = std::max(out.worst_z, z);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Suites

// Repeated warm-started single-step PowerSGD on a fixed matrix converges to
// the best rank-r approximation when the spectrum has a gap.
inline SuiteResult warmstart(std::uint64_t seed = 7) {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("warmstart");
  constexpr std::size_t kMatrices = 20, kRows = 64, kCols = 48, kRank = 2, kMaxIters = 50;
  constexpr double kTol = 1e-6;

  std::size_t worst_iters = 0, failures = 0;
  double worst_gap = 0.0, worst_oracle_disagreement = 0.0;
  for (std::size_t t = 0; t < kMatrices; ++t) {
    Rng rng = make_rng(seed, Stream::kOracle, {t});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Tail in (0, 1], σ_2 ≥ 1.5, σ_1 ≥ σ_2: gap σ_2/σ_3 ≥ 1.5.
    std::vector<double> sigma(kCols);
    sigma[2] = 1.0;
    for (std::size_t i = 3; i < kCols; ++i) sigma[i] = unit(rng);
    std::sort(sigma.begin() + 3, sigma.end(), std::greater<>());
    sigma[1] = 1.5 + 0.5 * unit(rng);
    sigma[0] = sigma[1] + unit(rng);
    const Matrix m = detail::matrix_with_spectrum(kRows, kCols, sigma, rng);

    double tail = 0.0;
    for (std::size_t i = kRank; i < kCols; ++i) tail += sigma[i] * sigma[i];
    const double oracle = reconstruction_error_sq(m, best_rank_r(m, kRank));
    worst_oracle_disagreement = std::max(worst_oracle_disagreement, std::abs(oracle - tail) / tail);

    Communicator solo(1);
    Matrix q = gaussian_matrix(kCols, kRank, rng);
    std::size_t reached = 0;
    for (std::size_t it = 1; it <= kMaxIters; ++it) {
      const PowerSgdRound round =
          powersgd_compress_aggregate(std::span<const Matrix>(&m, 1), q, solo);
      const double err = frobenius_sq(m - decompress(round.aggregate));
      const double gap = std::abs(err - oracle) / oracle;
      if (gap <= kTol) {
        reached = it;
        break;
      }
      if (it == kMaxIters) worst_gap = std::max(worst_gap, gap);
    }
    if (reached == 0) ++failures;
    worst_iters = std::max(worst_iters, reached);
  }
  rec.at_most("best_rank_r oracle vs analytic spectral tail (rel)", worst_oracle_disagreement,
              1e-9);
  rec.check("matrices reaching 1e-6 of the oracle within 50 iterations",
            failures == 0, detail::str(kMatrices - failures) + "/" + detail::str(kMatrices),
            detail::str(kMatrices) + "/" + detail::str(kMatrices));
  rec.at_most("worst iterations needed", static_cast<double>(worst_iters), kMaxIters);
  if (failures) rec.at_most("worst relative gap after 50 iterations", worst_gap, kTol);
  return rec.finish(start, 1.0);
}

namespace detail {

inline double max_param_diff(const TensorList& a, const TensorList& b) {
  double d = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) d = std::max(d, max_abs_diff(a[p], b[p]));
  return d;
}

// One EF-SGD run driven step by step, so that two runs can be compared or
// re-synchronized between steps.
struct Trajectory {
  RunConfig cfg;
  std::unique_ptr<Compressor> compressor;
  Communicator comm;
  efsgd::OptimizerState opt;
  std::vector<efsgd::WorkerState> workers;

  Trajectory(const RunConfig& c, const Problem& problem)
      : cfg(c),
        compressor(make_compressor({c.compressor, c.rank, c.seed})),
        comm(c.workers),
        opt(efsgd::OptimizerState::create(problem.initial_params(), c.lr, c.momentum)),
        workers(efsgd::make_workers(problem.specs(), c.workers)) {}

  void advance(const Problem& problem) {
    const auto grads = worker_gradients(problem, opt.params,
                                        worker_batches(problem, cfg, opt.step), 1);
    efsgd::step(grads, problem.specs(), opt, workers, *compressor, comm);
  }
};

}  // namespace detail

// EF-SGD with a linear compressor is the same algorithm on W workers as on
// one worker fed the average gradient: compare W=4 and W=1 at equal total
// batch. The free-running comparison decides the outcome; the notes separate
// the one-step identity from the growth of rounding differences along the
// trajectory.
inline SuiteResult linearity(std::uint64_t seed = 42) {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("linearity");
  constexpr std::size_t kSteps = 200;
  constexpr double kTol = 1e-9;
  RunConfig cfg;
  cfg.compressor = "powersgd";
  cfg.rank = 2;
  cfg.steps = kSteps;
  cfg.seed = seed;
  const auto problem = make_problem(cfg);

  RunConfig multi_cfg = cfg, single_cfg = cfg;
  multi_cfg.workers = 4;
  single_cfg.workers = 1;
  detail::Trajectory multi(multi_cfg, *problem), single(single_cfg, *problem);
  double free_running = 0.0, one_step = 0.0;
  for (std::size_t t = 0; t < kSteps; ++t) {
    // Single worker restarted from the multi-worker state: mean error
    // memory, same warm-start Q.
    detail::Trajectory synced(single_cfg, *problem);
    synced.opt = multi.opt;
    for (std::size_t p = 0; p < problem->specs().size(); ++p) {
      Matrix mean(multi.workers[0].error[p].rows(), multi.workers[0].error[p].cols());
      for (const auto& w : multi.workers) mean += w.error[p];
      mean *= 1.0 / static_cast<double>(multi.workers.size());
      synced.workers[0].error[p] = std::move(mean);
    }
    static_cast<PowerSgdCompressor&>(*synced.compressor).state().q_memory =
        static_cast<PowerSgdCompressor&>(*multi.compressor).state().q_memory;

    multi.advance(*problem);
    single.advance(*problem);
    synced.advance(*problem);
    one_step = std::max(one_step, detail::max_param_diff(multi.opt.params, synced.opt.params));
    free_running =
        std::max(free_running, detail::max_param_diff(multi.opt.params, single.opt.params));
  }
  rec.at_most("powersgd r=2: max |x_W=4 - x_W=1| over 200 steps", free_running, kTol);

  rec.note("one step from a shared state, max over 200 steps", one_step <= kTol,
           detail::fmt(one_step), "<= " + detail::fmt(kTol));
  {
    RunConfig id_cfg = cfg;
    id_cfg.compressor = "none";
    id_cfg.workers = 4;
    const TrainResult a = run_training(id_cfg, *problem);
    id_cfg.workers = 1;
    const TrainResult b = run_training(id_cfg, *problem);
    const double d = detail::max_param_diff(a.final_params, b.final_params);
    rec.note("identity compressor: W=4 vs W=1 after 200 steps", d <= kTol, detail::fmt(d),
             "<= " + detail::fmt(kTol));
  }
  {
    // Same single-worker run twice, one weight nudged by 1e-15 at the start.
    detail::Trajectory base(single_cfg, *problem), nudged(single_cfg, *problem);
    nudged.opt.params[0][0] += 1e-15;
    for (std::size_t t = 0; t < kSteps; ++t) {
      base.advance(*problem);
      nudged.advance(*problem);
    }
    const double d = detail::max_param_diff(base.opt.params, nudged.opt.params);
    rec.note("W=1 vs W=1 with a 1e-15 initial nudge, after 200 steps", d <= kTol,
             detail::fmt(d), "<= " + detail::fmt(kTol));
  }
  return rec.finish(start, 5.0);
}

struct TableRow {
  const char* name;
  const char* tensor_shape;
  const char* matrix_shape;
  std::uint64_t kib;
  std::uint64_t per_rank;
};

// Published per-tensor tables.
inline const std::vector<TableRow>& resnet18_table() {
  static const std::vector<TableRow> rows = {
      {"layer4.1.conv2", "512x512x3x3", "512x4608", 9216, 461},
      {"layer4.0.conv2", "512x512x3x3", "512x4608", 9216, 461},
      {"layer4.1.conv1", "512x512x3x3", "512x4608", 9216, 461},
      {"layer4.0.conv1", "512x256x3x3", "512x2304", 4608, 419},
      {"layer3.1.conv2", "256x256x3x3", "256x2304", 2304, 230},
      {"layer3.1.conv1", "256x256x3x3", "256x2304", 2304, 230},
      {"layer3.0.conv2", "256x256x3x3", "256x2304", 2304, 230},
      {"layer3.0.conv1", "256x128x3x3", "256x1152", 1152, 209},
      {"layer2.1.conv2", "128x128x3x3", "128x1152", 576, 115},
      {"layer2.1.conv1", "128x128x3x3", "128x1152", 576, 115},
      {"layer2.0.conv2", "128x128x3x3", "128x1152", 576, 115},
      {"layer4.0.shortcut.0", "512x256x1x1", "512x256", 512, 171},
      {"layer2.0.conv1", "128x64x3x3", "128x576", 288, 105},
      {"layer1.1.conv1", "64x64x3x3", "64x576", 144, 58},
      {"layer1.1.conv2", "64x64x3x3", "64x576", 144, 58},
      {"layer1.0.conv2", "64x64x3x3", "64x576", 144, 58},
      {"layer1.0.conv1", "64x64x3x3", "64x576", 144, 58},
      {"layer3.0.shortcut.0", "256x128x1x1", "256x128", 128, 85},
      {"layer2.0.shortcut.0", "128x64x1x1", "128x64", 32, 43},
      {"linear", "10x512", "10x512", 20, 10},
      {"conv1", "64x3x3x3", "64x27", 7, 19},
  };
  return rows;
}

inline const std::vector<TableRow>& lstm_table() {
  static const std::vector<TableRow> rows = {
      {"encoder", "28869x650", "28869x650", 73300, 636},
      {"rnn-ih-l0", "2600x650", "2600x650", 6602, 520},
      {"rnn-hh-l0", "2600x650", "2600x650", 6602, 520},
      {"rnn-ih-l1", "2600x650", "2600x650", 6602, 520},
      {"rnn-hh-l1", "2600x650", "2600x650", 6602, 520},
      {"rnn-ih-l2", "2600x650", "2600x650", 6602, 520},
      {"rnn-hh-l2", "2600x650", "2600x650", 6602, 520},
  };
  return rows;
}

struct EpochRow {
  std::size_t rank;  // 0 = uncompressed
  double mib;
  std::uint64_t ratio;
};

struct CatalogExpectation {
  const std::vector<TableRow>* rows;
  std::uint64_t bias_kib;
  std::uint64_t total_mib;
  std::uint64_t total_per_rank;
  std::vector<EpochRow> epoch;  // data sent per epoch and ratio at rank r
};

// Regenerates both per-tensor tables, their totals, and the epoch-level
// ratios and volumes.
inline SuiteResult ratios() {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("ratios");
  const std::vector<std::pair<ModelCatalog, CatalogExpectation>> cases = {
      {resnet18_catalog(),
       {&resnet18_table(), 38, 43, 243, {{0, 1023, 1}, {1, 4, 243}, {2, 8, 136}, {4, 14, 72}}}},
      {lstm_catalog(),
       {&lstm_table(), 174, 110, 310, {{0, 7730, 1}, {1, 25, 310}, {2, 38, 203}, {4, 64, 120}}}},
  };

  for (const auto& [catalog, want] : cases) {
    const RatioReport report = compression_ratio(catalog, {"powersgd", 1, 0});
    std::size_t matched = 0;
    std::string first_mismatch;
    for (const TableRow& row : *want.rows) {
      const auto it = std::find_if(report.rows.begin(), report.rows.end(),
                                   [&](const RatioRow& r) { return r.spec.name == row.name; });
      if (it == report.rows.end()) {
        if (first_mismatch.empty()) first_mismatch = std::string(row.name) + " missing";
        continue;
      }
      const std::string tensor = format_shape(it->spec.tensor_shape);
      const std::string matrix = format_shape({it->spec.rows, it->spec.cols});
      const std::uint64_t kib = kib_rounded(it->uncompressed_bits);
      const std::uint64_t coef = it->per_rank_coefficient();
      if (tensor == row.tensor_shape && matrix == row.matrix_shape && kib == row.kib &&
          coef == row.per_rank) {
        ++matched;
      } else if (first_mismatch.empty()) {
        first_mismatch = std::string(row.name) + ": " + tensor + " " + matrix + " " +
                         detail::str(kib) + " KB " + detail::str(coef) + "/r";
      }
    }
    const std::string tag = catalog.name + ": ";
    rec.check(tag + "per-tensor rows (shape, matrix shape, KB, c/r)",
              matched == want.rows->size() && report.rows.size() == want.rows->size(),
              detail::str(matched) + "/" + detail::str(report.rows.size()) +
                  (first_mismatch.empty() ? "" : " (" + first_mismatch + ")"),
              detail::str(want.rows->size()) + "/" + detail::str(want.rows->size()));
    rec.equal(tag + "bias vectors (KB)", kib_rounded(report.bias_bits), want.bias_kib);
    rec.equal(tag + "total (MB)",
              round_ratio(report.total_uncompressed_bits, 8ull * 1024 * 1024), want.total_mib);
    rec.equal(tag + "total c/r", report.total_per_rank_coefficient(), want.total_per_rank);

    // Batches per epoch are not published; take them from the uncompressed
    // row and predict the compressed rows from it.
    const double batches =
        want.epoch.front().mib / data_per_epoch_mib(report.total_uncompressed_bits, 1.0);
    for (const EpochRow& e : want.epoch) {
      if (e.rank == 0) continue;
      const RatioReport at_rank = compression_ratio(catalog, {"powersgd", e.rank, 0});
      rec.equal(tag + "rank " + detail::str(e.rank) + " total ratio",
                at_rank.total_ratio_rounded(), e.ratio);
      const double mib = data_per_epoch_mib(at_rank.total_payload_bits, batches);
      // Published volumes are whole MB: allow 5% or the display resolution.
      const double slack = std::max(0.05 * e.mib, 0.5);
      rec.check(tag + "rank " + detail::str(e.rank) + " data per epoch (MB)",
                std::abs(mib - e.mib) <= slack && std::llround(mib) == std::llround(e.mib),
                detail::fmt(mib), detail::fmt(e.mib) + " +- " + detail::fmt(slack));
    }
  }
  return rec.finish(start, 0.1);
}

// With the identity compressor, EF-SGD is plain momentum SGD bit for bit.
inline SuiteResult ef_identity(std::uint64_t seed = 42) {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("ef-identity");
  RunConfig cfg;
  cfg.compressor = "none";
  cfg.workers = 1;
  cfg.steps = 100;
  cfg.seed = seed;
  const auto problem = make_problem(cfg);
  const TrainResult run = run_training(cfg, *problem);

  // Reference: m = λm + g; x = x − γ(g + m).
  TensorList x = problem->initial_params();
  TensorList m = zeros_like(problem->specs());
  bool losses_equal = run.rows.size() == cfg.steps;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto batch = worker_batches(*problem, cfg, t).front();
    const TensorList g = problem->gradient(x, batch);
    for (std::size_t p = 0; p < x.size(); ++p)
      for (std::size_t k = 0; k < x[p].size(); ++k) {
        m[p][k] = cfg.momentum * m[p][k] + g[p][k];
        x[p][k] = x[p][k] - cfg.lr * (g[p][k] + m[p][k]);
      }
    if (losses_equal && problem->full_loss(x) != run.rows[t].loss) losses_equal = false;
  }
  std::size_t differing = 0;
  for (std::size_t p = 0; p < x.size(); ++p)
    for (std::size_t k = 0; k < x[p].size(); ++k)
      if (x[p][k] != run.final_params[p][k]) ++differing;
  rec.equal("parameters differing bitwise after 100 steps", differing, 0);
  rec.check("loss curve bitwise equal", losses_equal, losses_equal ? "equal" : "differs", "equal");
  return rec.finish(start, 0.0);
}

// Decode work and traffic as the world grows.
inline SuiteResult scaling(std::uint64_t seed = 42) {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("scaling");
  constexpr std::size_t kRows = 16, kCols = 24, kRank = 2;
  const std::vector<std::size_t> worlds = {2, 4, 8, 16};
  const std::vector<std::string> kinds = {"powersgd", "signum", "topk", "signnorm", "atomo"};

  for (const std::string& kind : kinds) {
    std::vector<CommStats> stats;
    std::uint64_t payload = 0;
    for (std::size_t world : worlds) {
      auto compressor = make_compressor({kind, kRank, seed});
      payload = compressor->payload_bits(kRows, kCols);
      std::vector<Matrix> locals;
      for (std::size_t w = 0; w < world; ++w) {
        Rng rng = make_rng(seed, Stream::kOracle, {w});
        locals.push_back(gaussian_matrix(kRows, kCols, rng));
      }
      Communicator comm(world);
      comm.begin_step();
      compressor->compress_aggregate(locals, {0, 0, false}, comm);
      stats.push_back(comm.step_stats());
    }
    const std::string tag = kind + ": ";
    std::string observed;
    for (const CommStats& s : stats) observed += (observed.empty() ? "" : ",") + detail::str(s.decode_ops);
    if (kind == "powersgd") {
      const bool flat = std::all_of(stats.begin(), stats.end(), [&](const CommStats& s) {
        return s.decode_ops == stats.front().decode_ops;
      });
      rec.check(tag + "decode_ops constant in W", flat, observed, "constant");
      const bool bits_flat = std::all_of(stats.begin(), stats.end(), [&](const CommStats& s) {
        return s.bits_allreduced == payload && s.bits_gathered == 0;
      });
      rec.check(tag + "all-reduced bits = one payload for every W", bits_flat,
                detail::str(stats.back().bits_allreduced), detail::str(payload));
      continue;
    }
    // Gather-based: decode W payloads and receive W payloads.
    const std::uint64_t per = stats.front().decode_ops / worlds.front();
    bool proportional = per > 0, bits_ok = true;
    for (std::size_t i = 0; i < worlds.size(); ++i) {
      proportional = proportional && stats[i].decode_ops == per * worlds[i];
      bits_ok = bits_ok && stats[i].bits_gathered == payload * worlds[i] &&
                stats[i].bits_allreduced == 0;
    }
    rec.check(tag + "decode_ops exactly proportional to W", proportional, observed,
              detail::str(per) + "*W");
    rec.check(tag + "gathered bits = W x payload", bits_ok,
              detail::str(stats.back().bits_gathered), detail::str(payload * worlds.back()));
  }

  // Compression cost on the ResNet18 shapes at rank 2.
  const auto power = make_compressor({"powersgd", 2, seed});
  const auto atomo = make_compressor({"atomo", 2, seed});
  std::uint64_t power_flops = 0, atomo_flops = 0;
  for (const ParamSpec& p : resnet18_catalog().params) {
    if (p.is_bias()) continue;
    power_flops += power->compress_flops(p.rows, p.cols);
    atomo_flops += atomo->compress_flops(p.rows, p.cols);
  }
  const double ratio = static_cast<double>(atomo_flops) / power_flops;
  rec.check("atomo/powersgd compression flops on resnet18 (r=2)", ratio >= 10.0,
            detail::fmt(ratio), ">= 10");
  return rec.finish(start, 0.0);
}

// Monte Carlo unbiasedness of the random sketch and of Atomo.
inline SuiteResult unbiasedness(std::uint64_t seed = 42) {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("unbiasedness");
  constexpr double kZ = 3.0;
  {
    Rng data = make_rng(seed, Stream::kOracle, {1});
    const Matrix m = gaussian_matrix(8, 6, data);
    Rng rng = make_rng(seed, Stream::kUnbiased, {0});
    const auto out = detail::monte_carlo_mean(m, 10000, [&] {
      return decompress(unbiased_rank_r_compress(m, unbiased_sketch_matrix(m.cols(), 2, rng)));
    });
    rec.at_most("unbiased rank-2, 10000 draws: worst |mean - M| / SE", out.worst_z, kZ);
  }
  {
    Rng data = make_rng(seed, Stream::kOracle, {2});
    const Matrix m = detail::matrix_with_spectrum(6, 5, {5.0, 3.0, 2.0, 1.0, 0.5}, data);
    Rng rng = make_rng(seed, Stream::kAtomo, {0});
    const auto out = detail::monte_carlo_mean(
        m, 20000, [&] { return decompress(atomo_compress(m, 2, rng)); });
    rec.at_most("atomo rank-2 on 6x5, 20000 draws: worst |mean - M| / SE", out.worst_z, kZ);
  }
  return rec.finish(start, 30.0);
}

// Fixed settings for the error-feedback comparison: noise-free least squares,
// full batch, so the with-EF run can reach the optimum.
inline RunConfig ef_necessity_config(std::uint64_t seed = 42) {
  RunConfig cfg;
  cfg.compressor = "powersgd";
  cfg.rank = 1;
  cfg.workers = 4;
  cfg.steps = 500;
  cfg.lr = 0.005;
  cfg.noise = 0.0;
  cfg.batch = 0;
  cfg.seed = seed;
  return cfg;
}

inline SuiteResult ef_necessity(std::uint64_t seed = 42) {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("ef-necessity");
  RunConfig cfg = ef_necessity_config(seed);
  const auto problem = make_problem(cfg);
  const TrainResult with_ef = run_training(cfg, *problem);
  cfg.error_feedback = false;
  const TrainResult without_ef = run_training(cfg, *problem);
  const double ratio = without_ef.final_loss / with_ef.final_loss;
  rec.check("final loss without EF / with EF (rank 1, 500 steps)",
            !with_ef.diverged && ratio >= 10.0,
            detail::fmt(without_ef.final_loss) + " / " + detail::fmt(with_ef.final_loss) + " = " +
                detail::fmt(ratio),
            ">= 10");
  return rec.finish(start, 0.0);
}

// Rank-1 PowerSGD (with EF) against the unbiased rank-3 sketch (without EF):
// on the 16x32 weight both transmit 48 floats per step.
inline SuiteResult quality_ordering() {
  const auto start = std::chrono::steady_clock::now();
  detail::Recorder rec("quality-ordering");
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    const auto problem = make_problem(cfg);
    cfg.compressor = "powersgd";
    cfg.rank = 1;
    const TrainResult biased = run_training(cfg, *problem);
    cfg.compressor = "unbiased";
    cfg.rank = 3;
    cfg.error_feedback = false;
    const TrainResult unbiased = run_training(cfg, *problem);
    const std::string tag = "seed " + detail::str(seed) + ": ";
    rec.equal(tag + "bits sent (matched budget)", biased.totals.total_bits(),
              unbiased.totals.total_bits());
    rec.check(tag + "powersgd final loss < unbiased final loss",
              !biased.diverged && biased.final_loss < unbiased.final_loss,
              detail::fmt(biased.final_loss), "< " + detail::fmt(unbiased.final_loss));
  }
  return rec.finish(start, 0.0);
}

inline const std::vector<std::string>& suite_ids() {
  static const std::vector<std::string> ids = {"linearity", "warmstart",    "ef-identity",
                                               "ratios",    "scaling",      "unbiasedness",
                                               "ef-necessity", "quality-ordering"};
  return ids;
}

inline SuiteResult run_suite(const std::string& id) {
  if (id == "linearity") return linearity();
  if (id == "warmstart") return warmstart();
  if (id == "ef-identity") return ef_identity();
  if (id == "ratios") return ratios();
  if (id == "scaling") return scaling();
  if (id == "unbiasedness") return unbiasedness();
  if (id == "ef-necessity") return ef_necessity();
  if (id == "quality-ordering") return quality_ordering();
  throw ContractViolation("unknown verification suite '" + id + "'");
}

}  // namespace powersgd::verify
