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

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "powersgd/error.hpp"
#include "powersgd/linalg.hpp"

namespace powersgd {

// Floats travel as 32-bit values on the simulated wire.
inline constexpr std::uint64_t kFloatBits = 32;
inline constexpr std::uint64_t kIndexBits = 32;

// Bit and operation counters. All counts follow the per-worker logical
// convention: an all-reduce charges the payload once, an all-gather charges
// the W payloads a worker receives.
struct CommStats {
  std::uint64_t bits_allreduced = 0;
  std::uint64_t bits_gathered = 0;
  std::uint64_t decode_ops = 0;
  std::uint64_t compress_flops = 0;

  std::uint64_t total_bits() const { return bits_allreduced + bits_gathered; }

  CommStats& operator+=(const CommStats& o) {
    bits_allreduced += o.bits_allreduced;
    bits_gathered += o.bits_gathered;
    decode_ops += o.decode_ops;
    compress_flops += o.compress_flops;
    return *this;
  }

  friend bool operator==(const CommStats&, const CommStats&) = default;
};

// In-process stand-in for W workers. Reductions fold worker contributions in
// a binary tree whose shape depends only on W, so results never depend on
// arrival order or thread count.
class Communicator {
 public:
  explicit Communicator(std::size_t world_size) : world_size_(world_size) {
    POWERSGD_REQUIRE(world_size >= 1, "Communicator: world size must be positive");
  }

  std::size_t world_size() const { return world_size_; }

  // Pairs (dst, src) in fold order: at stride s, worker i absorbs worker i+s.
  std::vector<std::pair<std::size_t, std::size_t>> reduction_order() const {
    std::vector<std::pair<std::size_t, std::size_t>> order;
    for (std::size_t stride = 1; stride < world_size_; stride *= 2)
      for (std::size_t i = 0; i + stride < world_size_; i += 2 * stride)
        order.emplace_back(i, i + stride);
    return order;
  }

  Matrix all_reduce_sum(std::span<const Matrix> parts) {
    check_parts(parts);
    std::vector<Matrix> acc(parts.begin(), parts.end());
    for (const auto& [dst, src] : reduction_order()) acc[dst] += acc[src];
    charge_allreduce(parts.front().size() * kFloatBits);
    return std::move(acc.front());
  }

  Matrix all_reduce_mean(std::span<const Matrix> parts) {
    Matrix sum = all_reduce_sum(parts);
    if (world_size_ > 1) {
      const double w = static_cast<double>(world_size_);
      for (double& v : sum.values()) v /= w;
    }
    return sum;
  }

  // Every worker receives every payload. bit_size(payload) is found by ADL.
  template <typename Payload>
  std::vector<Payload> all_gather(std::span<const Payload> parts) {
    POWERSGD_REQUIRE(parts.size() == world_size_, "all_gather: expected ",
                     world_size_, " payloads, got ", parts.size());
    if (world_size_ > 1) {
      CommStats delta;
      for (const Payload& p : parts) delta.bits_gathered += bit_size(p);
      add(delta);
    }
    return std::vector<Payload>(parts.begin(), parts.end());
  }

  void charge_allreduce(std::uint64_t bits) {
    if (world_size_ > 1) add({.bits_allreduced = bits});
  }

  // Decoding `copies` payloads of `ops_per_payload` scalar operations each.
  void charge_decode(std::uint64_t ops_per_payload, std::uint64_t copies = 1) {
    add({.decode_ops = ops_per_payload * copies});
  }

  void charge_compress(std::uint64_t flops) {
    add({.compress_flops = flops});
  }

  void begin_step() { step_ = {}; }

  const CommStats& step_stats() const { return step_; }
  const CommStats& cumulative() const { return cumulative_; }

 private:
  void check_parts(std::span<const Matrix> parts) const {
    POWERSGD_REQUIRE(parts.size() == world_size_, "all_reduce: expected ",
                     world_size_, " tensors, got ", parts.size());
    for (const Matrix& p : parts)
      POWERSGD_REQUIRE(p.same_shape(parts.front()), "all_reduce: shape mismatch ",
                       p.rows(), "x", p.cols(), " vs ", parts.front().rows(), "x",
                       parts.front().cols());
  }

  void add(const CommStats& delta) {
    step_ += delta;
    cumulative_ += delta;
  }

  std::size_t world_size_;
  CommStats step_;
  CommStats cumulative_;
};

}  // namespace powersgd
