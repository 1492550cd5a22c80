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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "powersgd/efsgd.hpp"
#include "test_util.hpp"

namespace powersgd {
namespace {

using testing::random_matrix;

const std::vector<ParamSpec>& small_specs() {
  static const std::vector<ParamSpec> specs = {ParamSpec::from_shape("w", {6, 2, 2}),
                                               ParamSpec::from_shape("b", {6})};
  return specs;
}

std::vector<TensorList> random_grads(std::size_t world, std::uint64_t seed) {
  std::vector<TensorList> out;
  for (std::size_t w = 0; w < world; ++w)
    out.push_back({random_matrix(6, 4, seed * 100 + w), random_matrix(1, 6, seed * 100 + 50 + w)});
  return out;
}

TEST(EfSgdTest, IdentityCompressorIsPlainMomentumSgd) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create({random_matrix(6, 4, 1), random_matrix(1, 6, 2)}, 0.1,
                                           0.9);
  auto workers = efsgd::make_workers(specs, 1);
  IdentityCompressor none;
  Communicator solo(1);
  TensorList x = opt.params, m = zeros_like(specs);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto grads = random_grads(1, t);
    efsgd::step(grads, specs, opt, workers, none, solo);
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t k = 0; k < x[p].size(); ++k) {
        m[p][k] = 0.9 * m[p][k] + grads[0][p][k];
        x[p][k] = x[p][k] - 0.1 * (grads[0][p][k] + m[p][k]);
      }
    ASSERT_EQ(opt.params, x) << "step " << t;
    EXPECT_EQ(max_abs(workers[0].error[0]), 0.0);
  }
  EXPECT_EQ(opt.step, 20u);
}

TEST(EfSgdTest, ZeroGradientsLeaveEverythingAtRest) {
  const auto& specs = small_specs();
  const TensorList x0 = {random_matrix(6, 4, 3), random_matrix(1, 6, 4)};
  auto opt = efsgd::OptimizerState::create(x0, 0.1, 0.9);
  auto workers = efsgd::make_workers(specs, 3);
  PowerSgdCompressor power(2, 5);
  Communicator comm(3);
  const std::vector<TensorList> zero(3, zeros_like(specs));
  for (int t = 0; t < 5; ++t) efsgd::step(zero, specs, opt, workers, power, comm);
  EXPECT_EQ(opt.params, x0);
  for (const auto& w : workers) EXPECT_EQ(max_abs(w.error[0]), 0.0);
}

TEST(EfSgdTest, ErrorFeedbackIdentityHolds) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create(zeros_like(specs), 0.05, 0.9);
  auto workers = efsgd::make_workers(specs, 3);
  PowerSgdCompressor power(1, 6);
  Communicator comm(3);
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto grads = random_grads(3, t + 10);
    const auto before = workers;
    // Recompute the local reconstruction from a copy of the compressor state.
    PowerSgdCompressor shadow = power;
    std::vector<Matrix> deltas;
    for (std::size_t w = 0; w < 3; ++w) deltas.push_back(grads[w][0] + before[w].error[0]);
    Communicator scratch(3);
    const auto res = shadow.compress_aggregate(deltas, {0, opt.step, false}, scratch);
    efsgd::step(grads, specs, opt, workers, power, comm, {.verify_error_identity = true});
    for (std::size_t w = 0; w < 3; ++w)
      for (std::size_t k = 0; k < 24; ++k) {
        const double lhs = grads[w][0][k] + before[w].error[0][k];
        const double rhs = res.local[w][k] + workers[w].error[0][k];
        EXPECT_LE(std::abs(lhs - rhs), 4 * eps * (std::abs(lhs) + std::abs(res.local[w][k])));
      }
    // Bias vectors carry no error.
    for (const auto& w : workers) EXPECT_EQ(max_abs(w.error[1]), 0.0);
  }
}

TEST(EfSgdTest, BiasIsAveragedUncompressed) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create(zeros_like(specs), 1.0, 0.0);
  auto workers = efsgd::make_workers(specs, 4);
  PowerSgdCompressor power(1, 7);
  Communicator comm(4);
  const auto grads = random_grads(4, 20);
  efsgd::step(grads, specs, opt, workers, power, comm);
  std::vector<Matrix> biases;
  for (const auto& g : grads) biases.push_back(g[1]);
  Communicator oracle(4);
  // λ = 0, γ = 1: x = −2·mean.
  EXPECT_EQ(opt.params[1], -2.0 * oracle.all_reduce_mean(biases));
}

TEST(EfSgdTest, DisabledErrorFeedbackKeepsErrorsZero) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create(zeros_like(specs), 0.05, 0.9);
  auto workers = efsgd::make_workers(specs, 2);
  PowerSgdCompressor power(1, 8);
  Communicator comm(2);
  for (std::uint64_t t = 0; t < 3; ++t)
    efsgd::step(random_grads(2, t), specs, opt, workers, power, comm, {.error_feedback = false});
  for (const auto& w : workers) EXPECT_EQ(max_abs(w.error[0]), 0.0);
}

TEST(PlainMomentumTest, SignumScalarOracle) {
  const std::vector<ParamSpec> specs = {ParamSpec::from_shape("w", {1, 1})};
  auto opt = efsgd::OptimizerState::create({Matrix(1, 1, 0.0)}, 0.5, 0.5);
  auto workers = efsgd::make_workers(specs, 3);
  SignumCompressor signum;
  Communicator comm(3);
  const double g[2][3] = {{1.0, 2.0, -1.0}, {-4.0, -4.0, 1.0}};
  double m[3] = {0, 0, 0}, x = 0.0;
  for (int t = 0; t < 2; ++t) {
    std::vector<TensorList> grads;
    int votes = 0;
    for (int w = 0; w < 3; ++w) {
      grads.push_back({Matrix(1, 1, g[t][w])});
      m[w] = 0.5 * m[w] + g[t][w];
      votes += m[w] < 0 ? -1 : 1;
    }
    x -= 0.5 * (votes >= 0 ? 1.0 : -1.0);
    efsgd::step_plain_momentum(grads, specs, opt, workers, signum, comm);
    EXPECT_EQ(opt.params[0][0], x) << "step " << t;
  }
  // Step 2 momenta: {-3.5, -3, 0.5} → vote −1.
  EXPECT_EQ(x, 0.0);
}

TEST(PlainMomentumTest, AllPositiveGradientsMoveEveryCoordinateDown) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create(zeros_like(specs), 0.1, 0.9);
  auto workers = efsgd::make_workers(specs, 5);
  SignumCompressor signum;
  Communicator comm(5);
  std::vector<TensorList> grads;
  for (std::uint64_t w = 0; w < 5; ++w) {
    Matrix g = random_matrix(6, 4, w);
    for (double& v : g.values()) v = std::abs(v) + 1e-3;
    grads.push_back({g, Matrix(1, 6, 1.0)});
  }
  efsgd::step_plain_momentum(grads, specs, opt, workers, signum, comm);
  for (double v : opt.params[0].values()) EXPECT_DOUBLE_EQ(v, -0.1);
}

TEST(PlainMomentumTest, IdentityCompressorAveragesLocalMomenta) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create(zeros_like(specs), 0.1, 0.5);
  auto workers = efsgd::make_workers(specs, 2);
  IdentityCompressor none;
  Communicator comm(2);
  const auto g0 = random_grads(2, 30), g1 = random_grads(2, 31);
  efsgd::step_plain_momentum(g0, specs, opt, workers, none, comm);
  efsgd::step_plain_momentum(g1, specs, opt, workers, none, comm);
  for (std::size_t k = 0; k < 24; ++k) {
    double x = 0.0;
    double m[2] = {g0[0][0][k], g0[1][0][k]};
    x -= 0.1 * ((m[0] + m[1]) / 2.0);
    for (int w = 0; w < 2; ++w) m[w] = 0.5 * m[w] + g1[w][0][k];
    x -= 0.1 * ((m[0] + m[1]) / 2.0);
    EXPECT_EQ(opt.params[0][k], x);
  }
}

TEST(EfSgdTest, NonFiniteGradientThrowsBeforeAnyMutation) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create({random_matrix(6, 4, 9), random_matrix(1, 6, 10)},
                                           0.1, 0.9);
  auto workers = efsgd::make_workers(specs, 2);
  PowerSgdCompressor power(1, 9);
  Communicator comm(2);
  efsgd::step(random_grads(2, 40), specs, opt, workers, power, comm);
  const auto params = opt.params;
  const auto momentum = opt.momentum;
  const auto errors = workers;
  const auto q = power.state().q_memory;
  const CommStats totals = comm.cumulative();

  auto grads = random_grads(2, 41);
  grads[1][0](3, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(efsgd::step(grads, specs, opt, workers, power, comm), NonFiniteGradient);
  grads[1][0](3, 2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(efsgd::step_plain_momentum(grads, specs, opt, workers, power, comm),
               NonFiniteGradient);
  EXPECT_EQ(opt.params, params);
  EXPECT_EQ(opt.momentum, momentum);
  EXPECT_EQ(opt.step, 1u);
  for (std::size_t w = 0; w < 2; ++w) {
    EXPECT_EQ(workers[w].error, errors[w].error);
    EXPECT_EQ(workers[w].momentum, errors[w].momentum);
  }
  EXPECT_EQ(power.state().q_memory, q);
  EXPECT_EQ(comm.cumulative(), totals);
}

TEST(EfSgdTest, RejectsMismatchedInputs) {
  const auto& specs = small_specs();
  auto opt = efsgd::OptimizerState::create(zeros_like(specs), 0.1, 0.9);
  auto workers = efsgd::make_workers(specs, 2);
  IdentityCompressor none;
  Communicator comm(2);
  EXPECT_THROW(efsgd::step(random_grads(3, 1), specs, opt, workers, none, comm), ContractViolation);
  auto grads = random_grads(2, 1);
  grads[0][0] = Matrix(4, 6);
  EXPECT_THROW(efsgd::step(grads, specs, opt, workers, none, comm), ContractViolation);
  EXPECT_THROW(efsgd::OptimizerState::create({}, 0.0, 0.9), ContractViolation);
  EXPECT_THROW(efsgd::OptimizerState::create({}, 0.1, 1.0), ContractViolation);
}

}  // namespace
}  // namespace powersgd
