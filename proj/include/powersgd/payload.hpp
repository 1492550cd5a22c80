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
#include <string_view>
#include <variant>
#include <vector>

#include "powersgd/commsim.hpp"
#include "powersgd/linalg.hpp"

namespace powersgd {

// Wire formats of every compressor. Fields that every worker can rebuild
// from the shared seed (shapes, Random-K indices, block starts, the unbiased
// sketch matrix) are carried for convenience but cost zero bits.

struct LowRankPayload {
  Matrix p_hat;  // n x r, orthonormal columns
  Matrix q;      // m x r
};

struct SketchPayload {
  Matrix mu;  // n x r
  Matrix u;   // m x r, shared seed
};

struct SignNormPayload {
  std::size_t rows = 0, cols = 0;
  double l1_norm = 0.0;
  std::vector<bool> negative;  // sign(0) encodes as +1
};

struct SignsPayload {
  std::size_t rows = 0, cols = 0;
  std::vector<bool> negative;
};

struct TopKPayload {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint32_t> indices;  // ascending
  std::vector<double> values;
};

struct RandomKPayload {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint32_t> indices;  // shared seed, ascending
  std::vector<double> values;
};

struct BlockPayload {
  std::size_t rows = 0, cols = 0;
  std::size_t start = 0;  // shared seed
  std::vector<double> values;
};

struct AtomoPayload {
  Matrix u_scaled;  // n x r
  Matrix v;         // m x r
};

struct DensePayload {
  Matrix m;
};

using CompressedPayload =
    std::variant<LowRankPayload, SketchPayload, SignNormPayload, SignsPayload, TopKPayload,
                 RandomKPayload, BlockPayload, AtomoPayload, DensePayload>;

inline std::uint64_t bit_size(const LowRankPayload& p) {
  return kFloatBits * (p.p_hat.size() + p.q.size());
}
inline std::uint64_t bit_size(const SketchPayload& p) { return kFloatBits * p.mu.size(); }
inline std::uint64_t bit_size(const SignNormPayload& p) {
  return kFloatBits + p.negative.size();
}
inline std::uint64_t bit_size(const SignsPayload& p) { return p.negative.size(); }
inline std::uint64_t bit_size(const TopKPayload& p) {
  return (kFloatBits + kIndexBits) * p.values.size();
}
inline std::uint64_t bit_size(const RandomKPayload& p) {
  return kFloatBits * p.values.size();
}
inline std::uint64_t bit_size(const BlockPayload& p) { return kFloatBits * p.values.size(); }
inline std::uint64_t bit_size(const AtomoPayload& p) {
  return kFloatBits * (p.u_scaled.size() + p.v.size());
}
inline std::uint64_t bit_size(const DensePayload& p) { return kFloatBits * p.m.size(); }

inline std::uint64_t bit_size(const CompressedPayload& p) {
  return std::visit([](const auto& v) { return bit_size(v); }, p);
}

namespace detail {

inline Matrix scatter(std::size_t rows, std::size_t cols,
                      const std::vector<std::uint32_t>& indices,
                      const std::vector<double>& values) {
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < indices.size(); ++k) out[indices[k]] = values[k];
  return out;
}

inline Matrix signs_to_matrix(std::size_t rows, std::size_t cols,
                              const std::vector<bool>& negative, double magnitude) {
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < negative.size(); ++k)
    out[k] = negative[k] ? -magnitude : magnitude;
  return out;
}

}  // namespace detail

// Decompression of a single payload into an n x m update.
inline Matrix decompress(const LowRankPayload& p) { return matmul_nt(p.p_hat, p.q); }
inline Matrix decompress(const SketchPayload& p) { return matmul_nt(p.mu, p.u); }
inline Matrix decompress(const SignNormPayload& p) {
  const double n = static_cast<double>(p.rows * p.cols);
  return detail::signs_to_matrix(p.rows, p.cols, p.negative, p.l1_norm / n);
}
inline Matrix decompress(const SignsPayload& p) {
  return detail::signs_to_matrix(p.rows, p.cols, p.negative, 1.0);
}
inline Matrix decompress(const TopKPayload& p) {
  return detail::scatter(p.rows, p.cols, p.indices, p.values);
}
inline Matrix decompress(const RandomKPayload& p) {
  return detail::scatter(p.rows, p.cols, p.indices, p.values);
}
inline Matrix decompress(const BlockPayload& p) {
  Matrix out(p.rows, p.cols);
  for (std::size_t k = 0; k < p.values.size(); ++k) out[p.start + k] = p.values[k];
  return out;
}
inline Matrix decompress(const AtomoPayload& p) { return matmul_nt(p.u_scaled, p.v); }
inline Matrix decompress(const DensePayload& p) { return p.m; }

inline Matrix decompress(const CompressedPayload& p) {
  return std::visit([](const auto& v) { return decompress(v); }, p);
}

// Scalar operations to decode one payload.
inline std::uint64_t decode_ops(const LowRankPayload& p) {
  return p.p_hat.rows() * p.q.rows() * p.q.cols();
}
inline std::uint64_t decode_ops(const SketchPayload& p) {
  return p.mu.rows() * p.u.rows() * p.u.cols();
}
inline std::uint64_t decode_ops(const SignNormPayload& p) { return p.negative.size(); }
inline std::uint64_t decode_ops(const SignsPayload& p) { return p.negative.size(); }
inline std::uint64_t decode_ops(const TopKPayload& p) { return p.values.size(); }
inline std::uint64_t decode_ops(const RandomKPayload& p) { return p.values.size(); }
inline std::uint64_t decode_ops(const BlockPayload& p) { return p.values.size(); }
inline std::uint64_t decode_ops(const AtomoPayload& p) {
  return p.u_scaled.rows() * p.v.rows() * p.v.cols();
}
inline std::uint64_t decode_ops(const DensePayload&) { return 0; }

inline std::uint64_t decode_ops(const CompressedPayload& p) {
  return std::visit([](const auto& v) { return decode_ops(v); }, p);
}

inline std::string_view variant_name(const CompressedPayload& p) {
  static constexpr std::string_view kNames[] = {"LowRank", "Sketch",  "SignNorm",
                                                "Signs",   "TopK",    "RandomK",
                                                "Block",   "Atomo",   "Dense"};
  return kNames[p.index()];
}

}  // namespace powersgd
