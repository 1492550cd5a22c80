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
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "powersgd/commsim.hpp"
#include "powersgd/error.hpp"
#include "powersgd/linalg.hpp"
#include "powersgd/payload.hpp"
#include "powersgd/random.hpp"

namespace powersgd {

namespace detail {

inline void require_same_shapes(std::span<const Matrix> locals, const char* who) {
  POWERSGD_REQUIRE(!locals.empty(), who, ": no worker inputs");
  for (const Matrix& m : locals)
    POWERSGD_REQUIRE(m.same_shape(locals.front()), who, ": worker shape ", m.rows(), "x",
                     m.cols(), " != ", locals.front().rows(), "x", locals.front().cols());
}

inline Matrix row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Matrix(1, n, std::move(values));
}

}  // namespace detail

// Budget b = (n + m)·r used by the sparsifiers to match rank-r PowerSGD,
// clamped to the tensor size.
inline std::size_t matched_budget(std::size_t rows, std::size_t cols, std::size_t rank) {
  return std::min((rows + cols) * rank, rows * cols);
}

inline std::size_t effective_rank(std::size_t rows, std::size_t cols, std::size_t rank) {
  return std::min({rank, rows, cols});
}

// ---------------------------------------------------------------------------
// PowerSGD

// Warm-start memory: one Q per compressed parameter, initialized i.i.d.
// standard normal from the shared seed so every worker holds the same Q.
struct PowerSgdState {
  std::size_t rank = 1;
  std::uint64_t seed = 0;
  std::map<std::size_t, Matrix> q_memory;

  Matrix& q_for(std::size_t param, std::size_t rows, std::size_t cols) {
    const std::size_t r = effective_rank(rows, cols, rank);
    auto it = q_memory.find(param);
    if (it == q_memory.end() || it->second.rows() != cols || it->second.cols() != r) {
      Rng rng = make_rng(seed, Stream::kPowerSgdInit, {param});
      it = q_memory.insert_or_assign(param, gaussian_matrix(cols, r, rng)).first;
    }
    return it->second;
  }
};

struct PowerSgdRound {
  LowRankPayload aggregate;     // (P̂, mean Q)
  std::vector<Matrix> local_q;  // each worker's Mᵀ·P̂ before the reduction
};

// One step of subspace iteration fused with aggregation. On return `q` holds
// the reduced Q, ready to warm-start the next call.
inline PowerSgdRound powersgd_compress_aggregate(std::span<const Matrix> locals, Matrix& q,
                                                 Communicator& comm) {
  detail::require_same_shapes(locals, "powersgd_compress_aggregate");
  POWERSGD_REQUIRE(q.rows() == locals.front().cols(), "powersgd_compress_aggregate: Q has ",
                   q.rows(), " rows, matrix has ", locals.front().cols(), " columns");

  std::vector<Matrix> ps;
  ps.reserve(locals.size());
  for (const Matrix& m : locals) ps.push_back(matmul(m, q));
  Matrix p_hat = orthogonalize(comm.all_reduce_mean(ps));

  std::vector<Matrix> qs;
  qs.reserve(locals.size());
  for (const Matrix& m : locals) qs.push_back(matmul_tn(m, p_hat));
  q = comm.all_reduce_mean(qs);

  return {LowRankPayload{std::move(p_hat), q}, std::move(qs)};
}

// Fresh-start variant with several subspace iterations and no memory.
inline PowerSgdRound best_approx_compress_aggregate(std::span<const Matrix> locals,
                                                    std::size_t rank, Rng& shared_rng,
                                                    Communicator& comm,
                                                    std::size_t iterations = 4) {
  detail::require_same_shapes(locals, "best_approx_compress_aggregate");
  const std::size_t r = effective_rank(locals.front().rows(), locals.front().cols(), rank);
  Matrix q = gaussian_matrix(locals.front().cols(), r, shared_rng);
  PowerSgdRound round;
  for (std::size_t it = 0; it < iterations; ++it)
    round = powersgd_compress_aggregate(locals, q, comm);
  return round;
}

inline LowRankPayload best_approx_compress(const Matrix& m, std::size_t rank, Rng& rng) {
  Communicator solo(1);
  return best_approx_compress_aggregate(std::span<const Matrix>(&m, 1), rank, rng, solo)
      .aggregate;
}

// ---------------------------------------------------------------------------
// Unbiased rank-r sketch

// U with i.i.d. N(0, 1/r) entries, so E[U·Uᵀ] = I.
inline Matrix unbiased_sketch_matrix(std::size_t cols, std::size_t rank, Rng& rng) {
  POWERSGD_REQUIRE(rank >= 1, "unbiased_sketch_matrix: rank must be positive");
  return gaussian_matrix(cols, rank, rng, 1.0 / std::sqrt(static_cast<double>(rank)));
}

inline SketchPayload unbiased_rank_r_compress(const Matrix& m, const Matrix& u) {
  POWERSGD_REQUIRE(u.rows() == m.cols(), "unbiased_rank_r_compress: U has ", u.rows(),
                   " rows, matrix has ", m.cols(), " columns");
  return {matmul(m, u), u};
}

// ---------------------------------------------------------------------------
// Sign + norm

inline SignNormPayload sign_norm_compress(const Matrix& m) {
  SignNormPayload out{m.rows(), m.cols(), 0.0, std::vector<bool>(m.size())};
  for (std::size_t k = 0; k < m.size(); ++k) {
    out.l1_norm += std::abs(m[k]);
    out.negative[k] = m[k] < 0.0;
  }
  return out;
}

// (1/W) Σ (ℓ_i / nm) S_i
inline Matrix sign_norm_aggregate(std::span<const SignNormPayload> payloads) {
  POWERSGD_REQUIRE(!payloads.empty(), "sign_norm_aggregate: no payloads");
  const auto& first = payloads.front();
  Matrix out(first.rows, first.cols);
  const double w = static_cast<double>(payloads.size());
  for (const SignNormPayload& p : payloads) out += decompress(p);
  for (double& v : out.values()) v /= w;
  return out;
}

// ---------------------------------------------------------------------------
// Sparsifiers

// Largest |value| first; ties go to the lower flat index. Indices are
// returned ascending.
inline TopKPayload topk_compress(const Matrix& m, std::size_t budget) {
  const std::size_t b = std::min(budget, m.size());
  std::vector<std::uint32_t> order(m.size());
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(b), order.end(),
                    [&](std::uint32_t a, std::uint32_t c) {
                      const double fa = std::abs(m[a]), fc = std::abs(m[c]);
                      return fa != fc ? fa > fc : a < c;
                    });
  order.resize(b);
  std::sort(order.begin(), order.end());
  TopKPayload out{m.rows(), m.cols(), std::move(order), {}};
  out.values.reserve(b);
  for (std::uint32_t idx : out.indices) out.values.push_back(m[idx]);
  return out;
}

// Per-worker scatter-add of values / W.
inline Matrix topk_aggregate(std::span<const TopKPayload> payloads) {
  POWERSGD_REQUIRE(!payloads.empty(), "topk_aggregate: no payloads");
  Matrix out(payloads.front().rows, payloads.front().cols);
  const double w = static_cast<double>(payloads.size());
  for (const TopKPayload& p : payloads)
    for (std::size_t k = 0; k < p.indices.size(); ++k) out[p.indices[k]] += p.values[k] / w;
  return out;
}

// b distinct indices in [0, size), ascending, drawn from the shared stream.
inline std::vector<std::uint32_t> random_k_indices(std::size_t size, std::size_t budget,
                                                   Rng& shared_rng) {
  const std::size_t b = std::min(budget, size);
  std::vector<std::uint32_t> all(size);
  std::iota(all.begin(), all.end(), 0u);
  std::vector<std::uint32_t> out;
  out.reserve(b);
  std::sample(all.begin(), all.end(), std::back_inserter(out), b, shared_rng);
  return out;
}

inline RandomKPayload random_k_compress(const Matrix& m, std::vector<std::uint32_t> indices) {
  RandomKPayload out{m.rows(), m.cols(), std::move(indices), {}};
  out.values.reserve(out.indices.size());
  for (std::uint32_t idx : out.indices) {
    POWERSGD_REQUIRE(idx < m.size(), "random_k_compress: index ", idx, " out of range");
    out.values.push_back(m[idx]);
  }
  return out;
}

// Start drawn so that the whole block [s, s+b) lies inside the tensor.
inline std::size_t random_block_start(std::size_t size, std::size_t budget, Rng& shared_rng) {
  const std::size_t b = std::min(budget, size);
  std::uniform_int_distribution<std::size_t> dist(0, size - b);
  return dist(shared_rng);
}

inline BlockPayload random_block_compress(const Matrix& m, std::size_t start,
                                          std::size_t budget) {
  const std::size_t b = std::min(budget, m.size());
  POWERSGD_REQUIRE(start + b <= m.size(), "random_block_compress: block [", start, ", ",
                   start + b, ") exceeds ", m.size());
  BlockPayload out{m.rows(), m.cols(), start, {}};
  out.values.assign(m.values().begin() + static_cast<std::ptrdiff_t>(start),
                    m.values().begin() + static_cast<std::ptrdiff_t>(start + b));
  return out;
}

// ---------------------------------------------------------------------------
// Signum

inline SignsPayload signum_compress(const Matrix& m) {
  SignsPayload out{m.rows(), m.cols(), std::vector<bool>(m.size())};
  for (std::size_t k = 0; k < m.size(); ++k) out.negative[k] = m[k] < 0.0;
  return out;
}

// Elementwise majority vote; a tie votes +1.
inline Matrix majority_vote(std::span<const SignsPayload> payloads) {
  POWERSGD_REQUIRE(!payloads.empty(), "majority_vote: no payloads");
  const auto& first = payloads.front();
  std::vector<long> tally(first.negative.size(), 0);
  for (const SignsPayload& p : payloads)
    for (std::size_t k = 0; k < tally.size(); ++k) tally[k] += p.negative[k] ? -1 : 1;
  Matrix out(first.rows, first.cols);
  for (std::size_t k = 0; k < tally.size(); ++k) out[k] = tally[k] >= 0 ? 1.0 : -1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Spectral Atomo

// Water-filling: p_i = min(1, λ·σ_i) with Σ p_i = r. When at most r singular
// values are positive they are all kept with probability one.
inline std::vector<double> atomo_probabilities(std::span<const double> sigma, std::size_t rank) {
  std::vector<std::size_t> order(sigma.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });
  std::vector<double> p(sigma.size(), 0.0);
  const auto positive = static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [](double s) { return s > 0.0; }));
  if (positive <= rank) {
    for (std::size_t i = 0; i < sigma.size(); ++i) p[i] = sigma[i] > 0.0 ? 1.0 : 0.0;
    return p;
  }
  // Saturate the largest `sat` components and spread the rest of the budget
  // proportionally over the remainder; take the smallest consistent `sat`.
  for (std::size_t sat = 0; sat < rank; ++sat) {
    double tail = 0.0;
    for (std::size_t c = sat; c < order.size(); ++c) tail += sigma[order[c]];
    const double lambda = static_cast<double>(rank - sat) / tail;
    if (lambda * sigma[order[sat]] <= 1.0) {
      for (std::size_t c = 0; c < order.size(); ++c)
        p[order[c]] = c < sat ? 1.0 : lambda * sigma[order[c]];
      return p;
    }
  }
  for (std::size_t c = 0; c < rank; ++c) p[order[c]] = 1.0;
  return p;
}

// Probability that component i is in the sample, given independent
// Bernoulli(p_i) draws conditioned on exactly r successes.
inline std::vector<double> atomo_inclusion_probabilities(std::span<const double> p,
                                                         std::size_t rank) {
  const std::size_t k = p.size();
  // dist[c] = P(exactly c successes among the components in `keep`).
  auto count_distribution = [&](std::size_t skip) {
    std::vector<double> dist(rank + 1, 0.0);
    dist[0] = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (i == skip) continue;
      for (std::size_t c = rank; c > 0; --c) dist[c] = dist[c] * (1.0 - p[i]) + dist[c - 1] * p[i];
      dist[0] *= 1.0 - p[i];
    }
    return dist;
  };
  const std::vector<double> all = count_distribution(k);
  std::vector<double> pi(k, 0.0);
  if (all[rank] <= 0.0) return pi;
  for (std::size_t i = 0; i < k; ++i) {
    if (p[i] <= 0.0) continue;
    pi[i] = p[i] * count_distribution(i)[rank - 1] / all[rank];
  }
  return pi;
}

// Samples exactly r singular components (resampling until the draw has size
// r) and rescales each by its inclusion probability so that E[U′V′ᵀ] = M.
// If fewer than r components are nonzero the factors are padded with zero
// columns.
inline AtomoPayload atomo_compress(const Matrix& m, std::size_t rank, Rng& shared_rng) {
  const std::size_t r = effective_rank(m.rows(), m.cols(), rank);
  const SpectralDecomposition svd = spectral_decomposition(m);
  const std::vector<double> p = atomo_probabilities(svd.sigma, r);
  const auto candidates = static_cast<std::size_t>(
      std::count_if(p.begin(), p.end(), [](double v) { return v > 0.0; }));

  std::vector<std::size_t> chosen;
  std::vector<double> scale(p.size(), 1.0);
  if (candidates <= r) {
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) chosen.push_back(i);
  } else {
    const std::vector<double> pi = atomo_inclusion_probabilities(p, r);
    for (std::size_t i = 0; i < p.size(); ++i) scale[i] = pi[i];
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    do {
      chosen.clear();
      for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0 && coin(shared_rng) < p[i]) chosen.push_back(i);
    } while (chosen.size() != r);
  }

  AtomoPayload out{Matrix(m.rows(), r), Matrix(m.cols(), r)};
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    const std::size_t i = chosen[c];
    const double factor = svd.sigma[i] / scale[i];
    for (std::size_t row = 0; row < m.rows(); ++row) out.u_scaled(row, c) = svd.u(row, i) * factor;
    for (std::size_t row = 0; row < m.cols(); ++row) out.v(row, c) = svd.v(row, i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Common interface

// Identifies the parameter being compressed; drives the shared-seed splits.
struct ParamSlot {
  std::size_t index = 0;
  std::uint64_t step = 0;
  bool is_bias = false;
};

struct AggregateResult {
  Matrix aggregate;           // Δ′, identical on every worker
  std::vector<Matrix> local;  // decompress(C(Δ_w)) for each worker w
};

class Compressor {
 public:
  virtual ~Compressor() = default;

  virtual std::string name() const = 0;
  // Linear compressors aggregate through all-reduce, the others through
  // all-gather.
  virtual bool linear() const = 0;
  // Signum and Atomo run without error feedback, using local momentum.
  virtual bool error_feedback() const { return true; }
  // Bits one worker transmits for an n x m tensor.
  virtual std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const = 0;
  virtual std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const = 0;

  AggregateResult compress_aggregate(std::span<const Matrix> locals, const ParamSlot& slot,
                                     Communicator& comm) {
    POWERSGD_REQUIRE(!slot.is_bias, name(), ": bias parameter ", slot.index,
                     " must bypass compression");
    POWERSGD_REQUIRE(locals.size() == comm.world_size(), name(), ": got ", locals.size(),
                     " worker tensors for world size ", comm.world_size());
    detail::require_same_shapes(locals, "compress_aggregate");
    compressed_elements_ += locals.front().size();
    comm.charge_compress(compress_flops(locals.front().rows(), locals.front().cols()));
    return do_compress_aggregate(locals, slot, comm);
  }

  // Total elements ever routed through this compressor (per worker).
  std::uint64_t compressed_elements() const { return compressed_elements_; }

 protected:
  virtual AggregateResult do_compress_aggregate(std::span<const Matrix> locals,
                                                const ParamSlot& slot, Communicator& comm) = 0;

 private:
  std::uint64_t compressed_elements_ = 0;
};

namespace detail {

inline std::uint64_t gram_schmidt_flops(std::size_t rows, std::size_t r) {
  return 4ull * rows * r * r;
}

inline std::uint64_t power_step_flops(std::size_t rows, std::size_t cols, std::size_t r) {
  return 4ull * rows * cols * r + gram_schmidt_flops(rows, r);
}

// Gather-based aggregation: every worker decodes all W payloads.
template <typename Payload>
std::vector<Payload> gather(const std::vector<Payload>& payloads, Communicator& comm) {
  auto received = comm.all_gather(std::span<const Payload>(payloads));
  comm.charge_decode(decode_ops(received.front()), received.size());
  return received;
}

}  // namespace detail

class IdentityCompressor final : public Compressor {
 public:
  std::string name() const override { return "none"; }
  bool linear() const override { return true; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return kFloatBits * rows * cols;
  }
  std::uint64_t compress_flops(std::size_t, std::size_t) const override { return 0; }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot&,
                                        Communicator& comm) override {
    return {comm.all_reduce_mean(locals), std::vector<Matrix>(locals.begin(), locals.end())};
  }
};

class PowerSgdCompressor final : public Compressor {
 public:
  PowerSgdCompressor(std::size_t rank, std::uint64_t seed) : state_{rank, seed, {}} {
    POWERSGD_REQUIRE(rank >= 1, "powersgd: rank must be positive");
  }

  std::string name() const override { return "powersgd"; }
  bool linear() const override { return true; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return kFloatBits * effective_rank(rows, cols, state_.rank) * (rows + cols);
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    return detail::power_step_flops(rows, cols, effective_rank(rows, cols, state_.rank));
  }

  PowerSgdState& state() { return state_; }
  const PowerSgdState& state() const { return state_; }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot& slot,
                                        Communicator& comm) override {
    const Matrix& m0 = locals.front();
    Matrix& q = state_.q_for(slot.index, m0.rows(), m0.cols());
    PowerSgdRound round = powersgd_compress_aggregate(locals, q, comm);
    comm.charge_decode(decode_ops(round.aggregate));
    AggregateResult out{decompress(round.aggregate), {}};
    out.local.reserve(locals.size());
    for (const Matrix& q_w : round.local_q) out.local.push_back(matmul_nt(round.aggregate.p_hat, q_w));
    return out;
  }

 private:
  PowerSgdState state_;
};

class BestApproxCompressor final : public Compressor {
 public:
  BestApproxCompressor(std::size_t rank, std::uint64_t seed, std::size_t iterations = 4)
      : rank_(rank), seed_(seed), iterations_(iterations) {
    POWERSGD_REQUIRE(rank >= 1, "best-approx: rank must be positive");
  }

  std::string name() const override { return "best-approx"; }
  bool linear() const override { return true; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return iterations_ * kFloatBits * effective_rank(rows, cols, rank_) * (rows + cols);
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    return iterations_ * detail::power_step_flops(rows, cols, effective_rank(rows, cols, rank_));
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot& slot,
                                        Communicator& comm) override {
    Rng rng = make_rng(seed_, Stream::kBestApprox, {slot.index, slot.step});
    PowerSgdRound round = best_approx_compress_aggregate(locals, rank_, rng, comm, iterations_);
    comm.charge_decode(decode_ops(round.aggregate));
    AggregateResult out{decompress(round.aggregate), {}};
    for (const Matrix& q_w : round.local_q) out.local.push_back(matmul_nt(round.aggregate.p_hat, q_w));
    return out;
  }

 private:
  std::size_t rank_;
  std::uint64_t seed_;
  std::size_t iterations_;
};

class UnbiasedRankCompressor final : public Compressor {
 public:
  UnbiasedRankCompressor(std::size_t rank, std::uint64_t seed) : rank_(rank), seed_(seed) {
    POWERSGD_REQUIRE(rank >= 1, "unbiased: rank must be positive");
  }

  std::string name() const override { return "unbiased"; }
  bool linear() const override { return true; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t) const override {
    return kFloatBits * rows * rank_;
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    return 2ull * rows * cols * rank_;
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot& slot,
                                        Communicator& comm) override {
    Rng rng = make_rng(seed_, Stream::kUnbiased, {slot.index, slot.step});
    const Matrix u = unbiased_sketch_matrix(locals.front().cols(), rank_, rng);
    std::vector<Matrix> mus;
    for (const Matrix& m : locals) mus.push_back(unbiased_rank_r_compress(m, u).mu);
    SketchPayload reduced{comm.all_reduce_mean(mus), u};
    comm.charge_decode(decode_ops(reduced));
    AggregateResult out{decompress(reduced), {}};
    for (const Matrix& mu : mus) out.local.push_back(matmul_nt(mu, u));
    return out;
  }

 private:
  std::size_t rank_;
  std::uint64_t seed_;
};

class SignNormCompressor final : public Compressor {
 public:
  std::string name() const override { return "signnorm"; }
  bool linear() const override { return false; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return kFloatBits + rows * cols;
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    return 2ull * rows * cols;
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot&,
                                        Communicator& comm) override {
    std::vector<SignNormPayload> payloads;
    for (const Matrix& m : locals) payloads.push_back(sign_norm_compress(m));
    const auto received = detail::gather(payloads, comm);
    AggregateResult out{sign_norm_aggregate(received), {}};
    for (const auto& p : payloads) out.local.push_back(decompress(p));
    return out;
  }
};

class TopKCompressor final : public Compressor {
 public:
  explicit TopKCompressor(std::size_t rank) : rank_(rank) {}

  std::string name() const override { return "topk"; }
  bool linear() const override { return false; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return (kFloatBits + kIndexBits) * matched_budget(rows, cols, rank_);
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    const auto b = static_cast<double>(std::max<std::size_t>(matched_budget(rows, cols, rank_), 2));
    return rows * cols * static_cast<std::uint64_t>(std::ceil(std::log2(b)));
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot&,
                                        Communicator& comm) override {
    const std::size_t b = matched_budget(locals.front().rows(), locals.front().cols(), rank_);
    std::vector<TopKPayload> payloads;
    for (const Matrix& m : locals) payloads.push_back(topk_compress(m, b));
    const auto received = detail::gather(payloads, comm);
    AggregateResult out{topk_aggregate(received), {}};
    for (const auto& p : payloads) out.local.push_back(decompress(p));
    return out;
  }

 private:
  std::size_t rank_;
};

class RandomKCompressor final : public Compressor {
 public:
  RandomKCompressor(std::size_t rank, std::uint64_t seed) : rank_(rank), seed_(seed) {}

  std::string name() const override { return "randomk"; }
  bool linear() const override { return true; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return kFloatBits * matched_budget(rows, cols, rank_);
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    return matched_budget(rows, cols, rank_);
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot& slot,
                                        Communicator& comm) override {
    const Matrix& m0 = locals.front();
    Rng rng = make_rng(seed_, Stream::kRandomK, {slot.index, slot.step});
    const auto indices = random_k_indices(m0.size(), matched_budget(m0.rows(), m0.cols(), rank_), rng);
    std::vector<RandomKPayload> payloads;
    std::vector<Matrix> slices;
    for (const Matrix& m : locals) {
      payloads.push_back(random_k_compress(m, indices));
      slices.push_back(detail::row_vector(payloads.back().values));
    }
    const Matrix mean = comm.all_reduce_mean(slices);
    RandomKPayload reduced{m0.rows(), m0.cols(), indices,
                           std::vector<double>(mean.values().begin(), mean.values().end())};
    comm.charge_decode(decode_ops(reduced));
    AggregateResult out{decompress(reduced), {}};
    for (const auto& p : payloads) out.local.push_back(decompress(p));
    return out;
  }

 private:
  std::size_t rank_;
  std::uint64_t seed_;
};

class RandomBlockCompressor final : public Compressor {
 public:
  RandomBlockCompressor(std::size_t rank, std::uint64_t seed) : rank_(rank), seed_(seed) {}

  std::string name() const override { return "randomblock"; }
  bool linear() const override { return true; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return kFloatBits * matched_budget(rows, cols, rank_);
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    return matched_budget(rows, cols, rank_);
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot& slot,
                                        Communicator& comm) override {
    const Matrix& m0 = locals.front();
    const std::size_t b = matched_budget(m0.rows(), m0.cols(), rank_);
    Rng rng = make_rng(seed_, Stream::kRandomBlock, {slot.index, slot.step});
    const std::size_t start = random_block_start(m0.size(), b, rng);
    std::vector<BlockPayload> payloads;
    std::vector<Matrix> slices;
    for (const Matrix& m : locals) {
      payloads.push_back(random_block_compress(m, start, b));
      slices.push_back(detail::row_vector(payloads.back().values));
    }
    const Matrix mean = comm.all_reduce_mean(slices);
    BlockPayload reduced{m0.rows(), m0.cols(), start,
                         std::vector<double>(mean.values().begin(), mean.values().end())};
    comm.charge_decode(decode_ops(reduced));
    AggregateResult out{decompress(reduced), {}};
    for (const auto& p : payloads) out.local.push_back(decompress(p));
    return out;
  }

 private:
  std::size_t rank_;
  std::uint64_t seed_;
};

class SignumCompressor final : public Compressor {
 public:
  std::string name() const override { return "signum"; }
  bool linear() const override { return false; }
  bool error_feedback() const override { return false; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return rows * cols;
  }
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    return rows * cols;
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot&,
                                        Communicator& comm) override {
    std::vector<SignsPayload> payloads;
    for (const Matrix& m : locals) payloads.push_back(signum_compress(m));
    const auto received = detail::gather(payloads, comm);
    AggregateResult out{majority_vote(received), {}};
    for (const auto& p : payloads) out.local.push_back(decompress(p));
    return out;
  }
};

class AtomoCompressor final : public Compressor {
 public:
  AtomoCompressor(std::size_t rank, std::uint64_t seed) : rank_(rank), seed_(seed) {
    POWERSGD_REQUIRE(rank >= 1, "atomo: rank must be positive");
  }

  std::string name() const override { return "atomo"; }
  bool linear() const override { return false; }
  bool error_feedback() const override { return false; }
  std::uint64_t payload_bits(std::size_t rows, std::size_t cols) const override {
    return kFloatBits * effective_rank(rows, cols, rank_) * (rows + cols);
  }
  // Full thin SVD (Golub-Van Loan R-SVD count) plus rescaling.
  std::uint64_t compress_flops(std::size_t rows, std::size_t cols) const override {
    const std::uint64_t big = std::max(rows, cols), small = std::min(rows, cols);
    return 6 * big * small * small + 20 * small * small * small +
           effective_rank(rows, cols, rank_) * rows;
  }

 protected:
  AggregateResult do_compress_aggregate(std::span<const Matrix> locals, const ParamSlot& slot,
                                        Communicator& comm) override {
    std::vector<AtomoPayload> payloads;
    for (std::size_t w = 0; w < locals.size(); ++w) {
      Rng rng = make_rng(seed_, Stream::kAtomo, {slot.index, slot.step, w});
      payloads.push_back(atomo_compress(locals[w], rank_, rng));
    }
    const auto received = detail::gather(payloads, comm);
    AggregateResult out{Matrix(locals.front().rows(), locals.front().cols()), {}};
    for (const auto& p : received) out.aggregate += decompress(p);
    out.aggregate *= 1.0 / static_cast<double>(received.size());
    for (const auto& p : payloads) out.local.push_back(decompress(p));
    return out;
  }

 private:
  std::size_t rank_;
  std::uint64_t seed_;
};

struct CompressorConfig {
  std::string kind = "powersgd";
  std::size_t rank = 2;
  std::uint64_t seed = 42;
};

inline const std::vector<std::string>& compressor_ids() {
  static const std::vector<std::string> ids = {"none",     "powersgd", "best-approx",
                                               "unbiased", "signnorm", "topk",
                                               "randomk",  "randomblock", "signum",
                                               "atomo"};
  return ids;
}

inline std::unique_ptr<Compressor> make_compressor(const CompressorConfig& cfg) {
  const auto& k = cfg.kind;
  if (k == "none") return std::make_unique<IdentityCompressor>();
  if (k == "powersgd") return std::make_unique<PowerSgdCompressor>(cfg.rank, cfg.seed);
  if (k == "best-approx") return std::make_unique<BestApproxCompressor>(cfg.rank, cfg.seed);
  if (k == "unbiased") return std::make_unique<UnbiasedRankCompressor>(cfg.rank, cfg.seed);
  if (k == "signnorm") return std::make_unique<SignNormCompressor>();
  if (k == "topk") return std::make_unique<TopKCompressor>(cfg.rank);
  if (k == "randomk") return std::make_unique<RandomKCompressor>(cfg.rank, cfg.seed);
  if (k == "randomblock") return std::make_unique<RandomBlockCompressor>(cfg.rank, cfg.seed);
  if (k == "signum") return std::make_unique<SignumCompressor>();
  if (k == "atomo") return std::make_unique<AtomoCompressor>(cfg.rank, cfg.seed);
  throw ContractViolation("unknown compressor '" + k + "'");
}

}  // namespace powersgd
