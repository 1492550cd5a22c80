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
#include <set>
#include <sstream>

#include "powersgd/models.hpp"
#include "powersgd/problems.hpp"
#include "powersgd/train.hpp"
#include "test_util.hpp"

namespace powersgd {
namespace {

TEST(ParamSpecTest, ReshapeRules) {
  const auto conv = ParamSpec::from_shape("c", {512, 512, 3, 3});
  EXPECT_EQ(conv.rows, 512u);
  EXPECT_EQ(conv.cols, 4608u);
  EXPECT_FALSE(conv.is_bias());
  const auto fc = ParamSpec::from_shape("f", {10, 512});
  EXPECT_EQ(fc.rows, 10u);
  EXPECT_EQ(fc.cols, 512u);
  const auto bias = ParamSpec::from_shape("b", {64});
  EXPECT_TRUE(bias.is_bias());
  EXPECT_EQ(bias.numel(), 64u);
  EXPECT_THROW(ParamSpec::from_shape("z", {}), ContractViolation);
  EXPECT_THROW(ParamSpec::from_shape("z", {3, 0}), ContractViolation);
}

TEST(CatalogTest, ResNet18) {
  const auto cat = resnet18_catalog();
  std::size_t matrices = 0;
  std::set<std::string> names;
  for (const auto& p : cat.params) {
    matrices += !p.is_bias();
    names.insert(p.name);
  }
  EXPECT_EQ(names.size(), cat.params.size());
  EXPECT_EQ(matrices, 21u);
  EXPECT_EQ(cat.numel(), 11173962u);
}

TEST(CatalogTest, Lstm) {
  const auto cat = lstm_catalog();
  std::size_t matrices = 0;
  for (const auto& p : cat.params) matrices += !p.is_bias();
  EXPECT_EQ(matrices, 7u);
  EXPECT_EQ(cat.params.front().rows, 28869u);
}

TEST(RatioTest, RoundingIsHalfUp) {
  EXPECT_EQ(round_ratio(5, 2), 3u);
  EXPECT_EQ(round_ratio(7, 2), 4u);
  EXPECT_EQ(round_ratio(4, 3), 1u);
  EXPECT_EQ(round_ratio(5, 3), 2u);
  EXPECT_THROW(round_ratio(1, 0), ContractViolation);
}

TEST(RatioTest, PerTensorExamples) {
  const auto resnet = compression_ratio(resnet18_catalog(), {"powersgd", 1, 0});
  EXPECT_EQ(resnet.rows.back().spec.name, "linear");
  bool saw_big_conv = false;
  for (const auto& r : resnet.rows)
    if (r.spec.rows == 512 && r.spec.cols == 4608) {
      EXPECT_EQ(r.per_rank_coefficient(), 461u);
      saw_big_conv = true;
    }
  EXPECT_TRUE(saw_big_conv);
  EXPECT_EQ(resnet.total_per_rank_coefficient(), 243u);
  EXPECT_EQ(kib_rounded(resnet.bias_bits), 38u);

  const auto lstm = compression_ratio(lstm_catalog(), {"powersgd", 1, 0});
  EXPECT_EQ(lstm.rows.front().per_rank_coefficient(), 636u);
  EXPECT_EQ(lstm.total_per_rank_coefficient(), 310u);
  EXPECT_EQ(kib_rounded(lstm.bias_bits), 174u);
}

TEST(RatioTest, SquareFullRankIsHalf) {
  std::istringstream in("w 8x8\n");
  const auto r = compression_ratio(parse_catalog(in, "sq"), {"powersgd", 8, 0});
  EXPECT_DOUBLE_EQ(r.rows[0].ratio(), 0.5);
}

TEST(RatioTest, NonRankCompressors) {
  const auto none = compression_ratio(resnet18_catalog(), {"none", 1, 0});
  EXPECT_EQ(none.total_ratio_rounded(), 1u);
  EXPECT_FALSE(none.rank_based);
  // One sign bit per entry plus a 32-bit norm per tensor; biases stay dense.
  const auto cat = resnet18_catalog();
  const auto sn = compression_ratio(cat, {"signnorm", 1, 0});
  std::uint64_t raw = 0, sent = 0;
  for (const auto& p : cat.params) {
    raw += 32 * p.numel();
    sent += p.is_bias() ? 32 * p.numel() : 32 + p.numel();
  }
  EXPECT_EQ(sn.total_payload_bits, sent);
  EXPECT_DOUBLE_EQ(sn.total_ratio(), double(raw) / double(sent));
  for (const auto& r : sn.rows) EXPECT_NEAR(r.ratio(), 32.0, 32.0 * 32.0 / r.spec.numel());
}

TEST(CatalogParseTest, AcceptsCommentsAndBlankLines) {
  std::istringstream in("# header\n\nfc 10x20\n  b 10\n");
  const auto cat = parse_catalog(in, "mini");
  ASSERT_EQ(cat.params.size(), 2u);
  EXPECT_EQ(cat.params[0].cols, 20u);
  EXPECT_TRUE(cat.params[1].is_bias());
}

TEST(CatalogParseTest, Errors) {
  for (const char* text : {"fc\n", "fc 10x\n", "fc 10xa\n", "fc 10 extra\n", "# nothing\n", "fc 0x3\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(parse_catalog(in, "bad"), ContractViolation) << text;
  }
  EXPECT_THROW(load_catalog("/nonexistent/catalog.txt"), ContractViolation);
}

TEST(DataPerEpochTest, Units) {
  EXPECT_DOUBLE_EQ(data_per_epoch_mib(8ull * 1024 * 1024, 3.0), 3.0);
}

// Central differences against the analytic gradient.
void check_gradient(const Problem& problem, const TensorList& at, std::uint64_t seed) {
  const auto samples = problem.all_samples();
  const TensorList g = problem.gradient(at, samples);
  Rng rng(seed);
  int checked = 0;
  while (checked < 20) {
    const std::size_t p = std::uniform_int_distribution<std::size_t>(0, at.size() - 1)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, at[p].size() - 1)(rng);
    const double h = 1e-5;
    TensorList plus = at, minus = at;
    plus[p][k] += h;
    minus[p][k] -= h;
    const double fd = (problem.loss(plus, samples) - problem.loss(minus, samples)) / (2 * h);
    EXPECT_NEAR(g[p][k], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "param " << p << " entry " << k;
    ++checked;
  }
}

TensorList perturbed(const Problem& problem, std::uint64_t seed) {
  TensorList x = problem.initial_params();
  Rng rng(seed);
  for (Matrix& m : x) m += gaussian_matrix(m.rows(), m.cols(), rng, 0.3);
  return x;
}

TEST(LeastSquaresTest, GradientMatchesFiniteDifferences) {
  LeastSquaresProblem problem({.noise = 0.1});
  check_gradient(problem, perturbed(problem, 1), 2);
}

TEST(MlpTest, GradientMatchesFiniteDifferences) {
  MlpProblem problem({});
  check_gradient(problem, perturbed(problem, 3), 4);
}

TEST(LeastSquaresTest, NoiselessTeacherIsExactOptimum) {
  LeastSquaresProblem problem({});
  EXPECT_EQ(problem.optimal_loss(), 0.0);
  EXPECT_GT(problem.full_loss(problem.initial_params()), 0.0);
}

TEST(LeastSquaresTest, NoisyOptimumIsALowerBound) {
  LeastSquaresProblem problem({.noise = 0.1});
  const auto opt = problem.optimal_loss();
  ASSERT_TRUE(opt.has_value());
  EXPECT_GT(*opt, 0.0);
  EXPECT_LT(*opt, 0.1 * 0.1 * 16 / 2);
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_GT(problem.full_loss(perturbed(problem, s)), *opt);
}

TEST(LeastSquaresTest, UnderdeterminedOptimumIsUnknown) {
  LeastSquaresProblem problem({.inputs = 32, .samples = 16, .noise = 0.1});
  EXPECT_FALSE(problem.optimal_loss().has_value());
}

TEST(LeastSquaresTest, TeacherSpectrumDecays) {
  LeastSquaresProblem problem({.teacher_decay = 0.5});
  const auto s = singular_values(problem.teacher_weight());
  ASSERT_GE(s.size(), 3u);
  EXPECT_NEAR(s[0], 1.0, 1e-9);
  EXPECT_NEAR(s[1], 0.5, 1e-9);
  EXPECT_NEAR(s[2], 0.25, 1e-9);
}

TEST(ProblemTest, DegenerateDimensionsThrow) {
  EXPECT_THROW(LeastSquaresProblem({.outputs = 0}), ContractViolation);
  EXPECT_THROW(LeastSquaresProblem({.noise = -1.0}), ContractViolation);
  EXPECT_THROW(MlpProblem({.hidden = 0}), ContractViolation);
}

TEST(ShardTest, ContiguousDisjointCovering) {
  for (std::size_t n : {0u, 1u, 7u, 64u})
    for (std::size_t parts : {1u, 3u, 8u}) {
      std::size_t next = 0;
      for (std::size_t w = 0; w < parts; ++w)
        for (std::size_t i : shard_indices(n, parts, w)) EXPECT_EQ(i, next++);
      EXPECT_EQ(next, n);
    }
  EXPECT_THROW(shard_indices(4, 2, 2), ContractViolation);
}

TEST(BatchTest, UnionDoesNotDependOnWorkerCount) {
  LeastSquaresProblem problem({});
  RunConfig cfg;
  cfg.batch = 32;
  std::vector<std::size_t> reference;
  for (std::size_t w : {1u, 2u, 4u, 8u}) {
    cfg.workers = w;
    std::vector<std::size_t> flat;
    for (const auto& b : worker_batches(problem, cfg, 3)) flat.insert(flat.end(), b.begin(), b.end());
    if (reference.empty()) reference = flat;
    EXPECT_EQ(flat, reference);
  }
  cfg.workers = 5;
  EXPECT_THROW(worker_batches(problem, cfg, 0), ContractViolation);
}

TEST(BatchTest, WorkerGradientsIndependentOfThreads) {
  LeastSquaresProblem problem({.noise = 0.1});
  RunConfig cfg;
  const auto batches = worker_batches(problem, cfg, 0);
  const auto x = perturbed(problem, 5);
  EXPECT_EQ(worker_gradients(problem, x, batches, 1), worker_gradients(problem, x, batches, 3));
}

TEST(TrainTest, DeterministicAndThreadIndependent) {
  RunConfig cfg;
  cfg.steps = 30;
  const auto a = run_training(cfg);
  cfg.threads = 4;
  const auto b = run_training(cfg);
  ASSERT_EQ(a.rows.size(), 30u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].loss, b.rows[i].loss);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_LT(a.final_loss, a.initial_loss);
}

TEST(TrainTest, DivergenceIsReported) {
  RunConfig cfg;
  cfg.compressor = "none";
  cfg.lr = 50.0;
  cfg.steps = 200;
  const auto r = run_training(cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_LT(r.rows.size(), 200u);
}

}  // namespace
}  // namespace powersgd
