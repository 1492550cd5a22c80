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
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "powersgd/error.hpp"
#include "powersgd/linalg.hpp"
#include "powersgd/models.hpp"
#include "powersgd/random.hpp"

namespace powersgd {

// One Matrix per ParamSpec, in catalog order. Bias vectors are 1 x len.
using TensorList = std::vector<Matrix>;

inline TensorList zeros_like(std::span<const ParamSpec> specs) {
  TensorList out;
  out.reserve(specs.size());
  for (const ParamSpec& s : specs) out.emplace_back(s.rows, s.cols);
  return out;
}

// Contiguous, disjoint, covering split of [0, n) into `parts` pieces; the
// first n % parts pieces get one extra element.
inline std::vector<std::size_t> shard_indices(std::size_t n, std::size_t parts,
                                              std::size_t which) {
  POWERSGD_REQUIRE(parts >= 1 && which < parts, "shard_indices: bad shard ", which, "/", parts);
  const std::size_t base = n / parts, extra = n % parts;
  const std::size_t begin = which * base + std::min(which, extra);
  const std::size_t len = base + (which < extra ? 1 : 0);
  std::vector<std::size_t> out(len);
  std::iota(out.begin(), out.end(), begin);
  return out;
}

// A differentiable objective f(x) = mean over samples of a per-sample loss.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual const std::vector<ParamSpec>& specs() const = 0;
  virtual std::size_t num_samples() const = 0;
  virtual TensorList initial_params() const = 0;
  virtual double loss(const TensorList& params, std::span<const std::size_t> samples) const = 0;
  virtual TensorList gradient(const TensorList& params,
                              std::span<const std::size_t> samples) const = 0;
  // Minimum of the full-data loss when known in closed form.
  virtual std::optional<double> optimal_loss() const { return std::nullopt; }

  double full_loss(const TensorList& params) const { return loss(params, all_samples()); }
  TensorList full_gradient(const TensorList& params) const {
    return gradient(params, all_samples());
  }

  std::vector<std::size_t> all_samples() const {
    std::vector<std::size_t> out(num_samples());
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
};

struct LeastSquaresConfig {
  std::size_t outputs = 16;   // weight rows
  std::size_t inputs = 32;    // weight cols
  std::size_t samples = 256;
  double noise = 0.0;
  std::uint64_t seed = 1;
  // Singular values of the teacher weight decay geometrically by this factor.
  double teacher_decay = 0.8;
};

// Multi-output linear regression y = W a + b with a teacher (W*, b*) of
// decaying spectrum. Loss (1/2N) Σ ‖W a_i + b − y_i‖².
class LeastSquaresProblem final : public Problem {
 public:
  explicit LeastSquaresProblem(const LeastSquaresConfig& cfg) : cfg_(cfg) {
    POWERSGD_REQUIRE(cfg.outputs >= 1 && cfg.inputs >= 1 && cfg.samples >= 1,
                     "least squares: degenerate dimensions ", cfg.outputs, "x", cfg.inputs,
                     " with ", cfg.samples, " samples");
    POWERSGD_REQUIRE(cfg.noise >= 0.0, "least squares: negative noise");
    specs_ = {ParamSpec::from_shape("weight", {cfg.outputs, cfg.inputs}),
              ParamSpec::from_shape("bias", {cfg.outputs})};

    Rng rng = make_rng(cfg.seed, Stream::kData);
    features_ = gaussian_matrix(cfg.samples, cfg.inputs, rng);
    const std::size_t k = std::min(cfg.outputs, cfg.inputs);
    const Matrix left = orthogonalize(gaussian_matrix(cfg.outputs, k, rng));
    const Matrix right = orthogonalize(gaussian_matrix(cfg.inputs, k, rng));
    Matrix scaled = left;
    double s = 1.0;
    for (std::size_t j = 0; j < k; ++j, s *= cfg.teacher_decay)
      for (std::size_t i = 0; i < cfg.outputs; ++i) scaled(i, j) *= s;
    teacher_weight_ = matmul_nt(scaled, right);
    teacher_bias_ = gaussian_matrix(1, cfg.outputs, rng, 0.5);

    targets_ = matmul_nt(features_, teacher_weight_);
    std::normal_distribution<double> noise(0.0, cfg.noise > 0.0 ? cfg.noise : 1.0);
    for (std::size_t i = 0; i < cfg.samples; ++i)
      for (std::size_t o = 0; o < cfg.outputs; ++o) {
        targets_(i, o) += teacher_bias_[o];
        if (cfg.noise > 0.0) targets_(i, o) += noise(rng);
      }
  }

  std::string name() const override { return "least-squares"; }
  const std::vector<ParamSpec>& specs() const override { return specs_; }
  std::size_t num_samples() const override { return cfg_.samples; }
  TensorList initial_params() const override { return zeros_like(specs_); }

  double loss(const TensorList& params, std::span<const std::size_t> samples) const override {
    double acc = 0.0;
    for (std::size_t i : samples) {
      for (std::size_t o = 0; o < cfg_.outputs; ++o) {
        const double r = residual(params, i, o);
        acc += r * r;
      }
    }
    return acc / (2.0 * static_cast<double>(samples.size()));
  }

  TensorList gradient(const TensorList& params,
                      std::span<const std::size_t> samples) const override {
    TensorList grad = zeros_like(specs_);
    Matrix& gw = grad[0];
    Matrix& gb = grad[1];
    for (std::size_t i : samples) {
      for (std::size_t o = 0; o < cfg_.outputs; ++o) {
        const double r = residual(params, i, o);
        for (std::size_t j = 0; j < cfg_.inputs; ++j) gw(o, j) += r * features_(i, j);
        gb[o] += r;
      }
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    gw *= inv;
    gb *= inv;
    return grad;
  }

  // Closed form via the normal equations on [A 1].
  std::optional<double> optimal_loss() const override {
    if (cfg_.noise == 0.0) return 0.0;
    const std::size_t d = cfg_.inputs + 1;
    if (cfg_.samples < d) return std::nullopt;
    Matrix design(cfg_.samples, d, 1.0);
    for (std::size_t i = 0; i < cfg_.samples; ++i)
      for (std::size_t j = 0; j < cfg_.inputs; ++j) design(i, j) = features_(i, j);
    const Matrix normal = matmul_tn(design, design);
    const Matrix coef = cholesky_solve(normal, matmul_tn(design, targets_));  // d x outputs
    TensorList best = zeros_like(specs_);
    for (std::size_t o = 0; o < cfg_.outputs; ++o) {
      for (std::size_t j = 0; j < cfg_.inputs; ++j) best[0](o, j) = coef(j, o);
      best[1][o] = coef(cfg_.inputs, o);
    }
    return full_loss(best);
  }

  const Matrix& teacher_weight() const { return teacher_weight_; }

 private:
  double residual(const TensorList& params, std::size_t i, std::size_t o) const {
    double pred = params[1][o];
    for (std::size_t j = 0; j < cfg_.inputs; ++j) pred += params[0](o, j) * features_(i, j);
    return pred - targets_(i, o);
  }

  LeastSquaresConfig cfg_;
  std::vector<ParamSpec> specs_;
  Matrix features_;  // N x inputs
  Matrix targets_;   // N x outputs
  Matrix teacher_weight_;
  Matrix teacher_bias_;
};

struct MlpConfig {
  std::size_t inputs = 16;
  std::size_t hidden = 32;
  std::size_t outputs = 8;
  std::size_t samples = 256;
  std::uint64_t seed = 1;
};

// Two-layer tanh network fit to a random teacher of the same architecture.
// Loss (1/2N) Σ ‖W2 tanh(W1 a + b1) + b2 − y‖².
class MlpProblem final : public Problem {
 public:
  explicit MlpProblem(const MlpConfig& cfg) : cfg_(cfg) {
    POWERSGD_REQUIRE(cfg.inputs >= 1 && cfg.hidden >= 1 && cfg.outputs >= 1 && cfg.samples >= 1,
                     "mlp: degenerate dimensions");
    specs_ = {ParamSpec::from_shape("fc1.weight", {cfg.hidden, cfg.inputs}),
              ParamSpec::from_shape("fc1.bias", {cfg.hidden}),
              ParamSpec::from_shape("fc2.weight", {cfg.outputs, cfg.hidden}),
              ParamSpec::from_shape("fc2.bias", {cfg.outputs})};
    Rng rng = make_rng(cfg.seed, Stream::kData);
    features_ = gaussian_matrix(cfg.samples, cfg.inputs, rng);
    const TensorList teacher = random_params(rng, 1.0);
    targets_ = Matrix(cfg.samples, cfg.outputs);
    std::vector<double> h(cfg.hidden);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      forward(teacher, i, h);
      for (std::size_t o = 0; o < cfg.outputs; ++o) targets_(i, o) = output(teacher, h, o);
    }
    Rng init = make_rng(cfg.seed, Stream::kParamInit);
    initial_ = random_params(init, 0.5);
  }

  std::string name() const override { return "mlp"; }
  const std::vector<ParamSpec>& specs() const override { return specs_; }
  std::size_t num_samples() const override { return cfg_.samples; }
  TensorList initial_params() const override { return initial_; }

  double loss(const TensorList& params, std::span<const std::size_t> samples) const override {
    std::vector<double> h(cfg_.hidden);
    double acc = 0.0;
    for (std::size_t i : samples) {
      forward(params, i, h);
      for (std::size_t o = 0; o < cfg_.outputs; ++o) {
        const double r = output(params, h, o) - targets_(i, o);
        acc += r * r;
      }
    }
    return acc / (2.0 * static_cast<double>(samples.size()));
  }

  TensorList gradient(const TensorList& params,
                      std::span<const std::size_t> samples) const override {
    TensorList grad = zeros_like(specs_);
    std::vector<double> h(cfg_.hidden), dh(cfg_.hidden), r(cfg_.outputs);
    for (std::size_t i : samples) {
      forward(params, i, h);
      for (std::size_t o = 0; o < cfg_.outputs; ++o) r[o] = output(params, h, o) - targets_(i, o);
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t o = 0; o < cfg_.outputs; ++o) {
        for (std::size_t k = 0; k < cfg_.hidden; ++k) {
          grad[2](o, k) += r[o] * h[k];
          dh[k] += r[o] * params[2](o, k);
        }
        grad[3][o] += r[o];
      }
      for (std::size_t k = 0; k < cfg_.hidden; ++k) {
        const double dz = dh[k] * (1.0 - h[k] * h[k]);
        for (std::size_t j = 0; j < cfg_.inputs; ++j) grad[0](k, j) += dz * features_(i, j);
        grad[1][k] += dz;
      }
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (Matrix& g : grad) g *= inv;
    return grad;
  }

 private:
  TensorList random_params(Rng& rng, double gain) const {
    TensorList p = zeros_like(specs_);
    p[0] = gaussian_matrix(cfg_.hidden, cfg_.inputs, rng, gain / std::sqrt(double(cfg_.inputs)));
    p[1] = gaussian_matrix(1, cfg_.hidden, rng, 0.1 * gain);
    p[2] = gaussian_matrix(cfg_.outputs, cfg_.hidden, rng, gain / std::sqrt(double(cfg_.hidden)));
    p[3] = gaussian_matrix(1, cfg_.outputs, rng, 0.1 * gain);
    return p;
  }

  void forward(const TensorList& p, std::size_t i, std::vector<double>& h) const {
    for (std::size_t k = 0; k < cfg_.hidden; ++k) {
      double z = p[1][k];
      for (std::size_t j = 0; j < cfg_.inputs; ++j) z += p[0](k, j) * features_(i, j);
      h[k] = std::tanh(z);
    }
  }

  double output(const TensorList& p, const std::vector<double>& h, std::size_t o) const {
    double y = p[3][o];
    for (std::size_t k = 0; k < cfg_.hidden; ++k) y += p[2](o, k) * h[k];
    return y;
  }

  MlpConfig cfg_;
  std::vector<ParamSpec> specs_;
  Matrix features_;
  Matrix targets_;
  TensorList initial_;
};

}  // namespace powersgd
