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

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "powersgd/commsim.hpp"
#include "powersgd/compressors.hpp"
#include "powersgd/error.hpp"
#include "powersgd/models.hpp"
#include "powersgd/problems.hpp"

namespace powersgd::efsgd {

// Replicated optimizer state: parameters x, momentum m, step size γ and
// momentum coefficient λ.
struct OptimizerState {
  TensorList params;
  TensorList momentum;
  double learning_rate = 0.1;
  double momentum_coef = 0.9;
  std::uint64_t step = 0;

  static OptimizerState create(TensorList params, double learning_rate, double momentum_coef) {
    POWERSGD_REQUIRE(learning_rate > 0.0, "learning rate must be positive");
    POWERSGD_REQUIRE(momentum_coef >= 0.0 && momentum_coef < 1.0,
                     "momentum coefficient must lie in [0, 1)");
    OptimizerState s{std::move(params), {}, learning_rate, momentum_coef, 0};
    for (const Matrix& p : s.params) s.momentum.emplace_back(p.rows(), p.cols());
    return s;
  }
};

// Per-worker memory: the error-feedback residual e_w, and a local momentum
// buffer used only by the plain-momentum mode.
struct WorkerState {
  TensorList error;
  TensorList momentum;

  static WorkerState create(std::span<const ParamSpec> specs) {
    return {zeros_like(specs), zeros_like(specs)};
  }
};

inline std::vector<WorkerState> make_workers(std::span<const ParamSpec> specs, std::size_t count) {
  return std::vector<WorkerState>(count, WorkerState::create(specs));
}

struct StepOptions {
  bool error_feedback = true;
#ifdef NDEBUG
  bool verify_error_identity = false;
#else
  bool verify_error_identity = true;
#endif
};

namespace detail {

inline void validate(std::span<const TensorList> grads, std::span<const ParamSpec> specs,
                     const OptimizerState& opt, std::span<const WorkerState> workers,
                     const Communicator& comm) {
  POWERSGD_REQUIRE(grads.size() == comm.world_size() && workers.size() == comm.world_size(),
                   "step: ", grads.size(), " gradients and ", workers.size(),
                   " workers for world size ", comm.world_size());
  POWERSGD_REQUIRE(opt.params.size() == specs.size(), "step: parameter count mismatch");
  for (std::size_t w = 0; w < grads.size(); ++w) {
    POWERSGD_REQUIRE(grads[w].size() == specs.size(), "step: worker ", w, " sent ",
                     grads[w].size(), " tensors, expected ", specs.size());
    for (std::size_t p = 0; p < specs.size(); ++p) {
      const Matrix& g = grads[w][p];
      POWERSGD_REQUIRE(g.rows() == specs[p].rows && g.cols() == specs[p].cols, "step: gradient '",
                       specs[p].name, "' is ", g.rows(), "x", g.cols(), ", expected ",
                       specs[p].rows, "x", specs[p].cols);
      if (!all_finite(g)) throw NonFiniteGradient(specs[p].name, w);
    }
  }
}

// Checks g + e_old = decompress(C(Δ)) + e_new to a few ulps.
inline void check_error_identity(const Matrix& delta, const Matrix& local, const Matrix& error,
                                 const std::string& name) {
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t k = 0; k < delta.size(); ++k) {
    const double lhs = delta[k], rhs = local[k] + error[k];
    const double tol = 4 * eps * (std::abs(delta[k]) + std::abs(local[k]));
    if (std::abs(lhs - rhs) > tol)
      throw std::logic_error("error-feedback identity broken in '" + name + "'");
  }
}

inline void apply_update(OptimizerState& opt, std::size_t p, const Matrix& aggregated) {
  Matrix& m = opt.momentum[p];
  Matrix& x = opt.params[p];
  const double lambda = opt.momentum_coef, gamma = opt.learning_rate;
  for (std::size_t k = 0; k < x.size(); ++k) {
    m[k] = lambda * m[k] + aggregated[k];
    x[k] = x[k] - gamma * (aggregated[k] + m[k]);
  }
}

}  // namespace detail

// One iteration of distributed error-feedback SGD with momentum:
//   Δ_w = g_w + e_w;  e_w = Δ_w − decompress(C(Δ_w));
//   Δ′ = decompress(aggregate(C(Δ_1..Δ_W)));  m = λm + Δ′;  x = x − γ(Δ′ + m).
// Bias vectors skip the compressor and are averaged with a plain all-reduce.
// With error_feedback off, e_w stays zero.
inline CommStats step(std::span<const TensorList> grads, std::span<const ParamSpec> specs,
                      OptimizerState& opt, std::span<WorkerState> workers,
                      Compressor& compressor, Communicator& comm,
                      const StepOptions& options = {}) {
  detail::validate(grads, specs, opt, workers, comm);
  comm.begin_step();
  const std::size_t world = comm.world_size();

  for (std::size_t p = 0; p < specs.size(); ++p) {
    std::vector<Matrix> deltas;
    deltas.reserve(world);
    for (std::size_t w = 0; w < world; ++w) {
      deltas.push_back(grads[w][p]);
      if (options.error_feedback && !specs[p].is_bias()) deltas.back() += workers[w].error[p];
    }

    if (specs[p].is_bias()) {
      detail::apply_update(opt, p, comm.all_reduce_mean(deltas));
      continue;
    }

    AggregateResult res = compressor.compress_aggregate(deltas, {p, opt.step, false}, comm);
    if (options.error_feedback) {
      for (std::size_t w = 0; w < world; ++w) {
        workers[w].error[p] = deltas[w] - res.local[w];
        if (options.verify_error_identity)
          detail::check_error_identity(deltas[w], res.local[w], workers[w].error[p],
                                       specs[p].name);
      }
    }
    detail::apply_update(opt, p, res.aggregate);
  }
  ++opt.step;
  return comm.step_stats();
}

// Compressors run without error feedback: each worker keeps its own momentum
// m_w = λ m_w + g_w, the compressed m_w are aggregated, and x = x − γ·agg.
inline CommStats step_plain_momentum(std::span<const TensorList> grads,
                                     std::span<const ParamSpec> specs, OptimizerState& opt,
                                     std::span<WorkerState> workers, Compressor& compressor,
                                     Communicator& comm) {
  detail::validate(grads, specs, opt, workers, comm);
  comm.begin_step();
  const std::size_t world = comm.world_size();
  const double lambda = opt.momentum_coef, gamma = opt.learning_rate;

  for (std::size_t p = 0; p < specs.size(); ++p) {
    std::vector<Matrix> local_momenta;
    local_momenta.reserve(world);
    for (std::size_t w = 0; w < world; ++w) {
      Matrix& m = workers[w].momentum[p];
      const Matrix& g = grads[w][p];
      for (std::size_t k = 0; k < m.size(); ++k) m[k] = lambda * m[k] + g[k];
      local_momenta.push_back(m);
    }
    const Matrix aggregated =
        specs[p].is_bias()
            ? comm.all_reduce_mean(local_momenta)
            : compressor.compress_aggregate(local_momenta, {p, opt.step, false}, comm).aggregate;
    Matrix& x = opt.params[p];
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = x[k] - gamma * aggregated[k];
  }
  ++opt.step;
  return comm.step_stats();
}

}  // namespace powersgd::efsgd
