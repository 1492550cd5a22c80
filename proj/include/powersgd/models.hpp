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
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "powersgd/compressors.hpp"
#include "powersgd/error.hpp"

namespace powersgd {

enum class ParamKind { kMatrix, kBias };

// A model parameter and the matrix it is compressed as: rows = first tensor
// dimension, cols = product of the remaining ones.
struct ParamSpec {
  std::string name;
  std::vector<std::size_t> tensor_shape;
  ParamKind kind = ParamKind::kMatrix;
  std::size_t rows = 0;
  std::size_t cols = 0;

  static ParamSpec from_shape(std::string name, std::vector<std::size_t> shape) {
    POWERSGD_REQUIRE(!shape.empty(), "ParamSpec '", name, "': empty shape");
    for (std::size_t d : shape) POWERSGD_REQUIRE(d > 0, "ParamSpec '", name, "': zero dimension");
    ParamSpec spec{std::move(name), std::move(shape), ParamKind::kMatrix, 0, 0};
    if (spec.tensor_shape.size() == 1) {
      spec.kind = ParamKind::kBias;
      spec.rows = 1;
      spec.cols = spec.tensor_shape[0];
    } else {
      spec.rows = spec.tensor_shape[0];
      spec.cols = std::accumulate(spec.tensor_shape.begin() + 1, spec.tensor_shape.end(),
                                  std::size_t{1}, std::multiplies<>());
    }
    return spec;
  }

  bool is_bias() const { return kind == ParamKind::kBias; }
  std::size_t numel() const { return rows * cols; }
};

inline std::string format_shape(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(dims[i]);
  }
  return out;
}

struct ModelCatalog {
  std::string name;
  std::vector<ParamSpec> params;

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Built-in catalogs

// ResNet18 for 32x32 inputs with 10 classes. Batch-norm scales and shifts are
// one-dimensional and therefore aggregated uncompressed with the biases.
inline ModelCatalog resnet18_catalog() {
  ModelCatalog cat{"resnet18", {}};
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    cat.params.push_back(ParamSpec::from_shape(std::move(name), std::move(shape)));
  };
  auto add_bn = [&](const std::string& prefix, std::size_t ch) {
    add(prefix + ".weight", {ch});
    add(prefix + ".bias", {ch});
  };
  add("conv1", {64, 3, 3, 3});
  add_bn("bn1", 64);
  std::size_t in = 64;
  const std::size_t widths[] = {64, 128, 256, 512};
  for (std::size_t layer = 0; layer < 4; ++layer) {
    const std::size_t out = widths[layer];
    for (std::size_t block = 0; block < 2; ++block) {
      const std::string p = "layer" + std::to_string(layer + 1) + "." + std::to_string(block);
      const std::size_t block_in = block == 0 ? in : out;
      add(p + ".conv1", {out, block_in, 3, 3});
      add_bn(p + ".bn1", out);
      add(p + ".conv2", {out, out, 3, 3});
      add_bn(p + ".bn2", out);
      if (block == 0 && block_in != out) {
        add(p + ".shortcut.0", {out, block_in, 1, 1});
        add_bn(p + ".shortcut.1", out);
      }
    }
    in = out;
  }
  add("linear", {10, 512});
  add("linear.bias", {10});
  return cat;
}

// Three-layer LSTM language model (650 hidden units, 28869-word vocabulary)
// with the decoder weight tied to the encoder.
inline ModelCatalog lstm_catalog() {
  ModelCatalog cat{"lstm", {}};
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    cat.params.push_back(ParamSpec::from_shape(std::move(name), std::move(shape)));
  };
  add("encoder", {28869, 650});
  for (int l = 0; l < 3; ++l) {
    const std::string s = std::to_string(l);
    add("rnn-ih-l" + s, {2600, 650});
    add("rnn-hh-l" + s, {2600, 650});
    add("rnn-bias-ih-l" + s, {2600});
    add("rnn-bias-hh-l" + s, {2600});
  }
  add("decoder.bias", {28869});
  return cat;
}

// One parameter per line: `name dim1xdim2x...`. Blank lines and lines
// starting with '#' are ignored.
inline ModelCatalog parse_catalog(std::istream& in, std::string name) {
  ModelCatalog cat{std::move(name), {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string pname, dims;
    if (!(ls >> pname) || pname.front() == '#') continue;
    POWERSGD_REQUIRE(static_cast<bool>(ls >> dims), "catalog line ", lineno,
                     ": missing shape for '", pname, "'");
    std::string extra;
    POWERSGD_REQUIRE(!(ls >> extra), "catalog line ", lineno, ": trailing text '", extra, "'");
    POWERSGD_REQUIRE(dims.back() != 'x', "catalog line ", lineno, ": bad shape '", dims, "'");
    std::vector<std::size_t> shape;
    std::istringstream ds(dims);
    std::string tok;
    while (std::getline(ds, tok, 'x')) {
      POWERSGD_REQUIRE(!tok.empty() && tok.find_first_not_of("0123456789") == std::string::npos,
                       "catalog line ", lineno, ": bad dimension '", tok, "'");
      shape.push_back(std::stoull(tok));
    }
    cat.params.push_back(ParamSpec::from_shape(pname, shape));
  }
  POWERSGD_REQUIRE(!cat.params.empty(), "catalog '", cat.name, "' has no parameters");
  return cat;
}

// Built-in name or path to a catalog file.
inline ModelCatalog load_catalog(const std::string& name_or_path) {
  if (name_or_path == "resnet18") return resnet18_catalog();
  if (name_or_path == "lstm") return lstm_catalog();
  std::ifstream in(name_or_path);
  POWERSGD_REQUIRE(in.good(), "unknown catalog '", name_or_path, "'");
  return parse_catalog(in, name_or_path);
}

// ---------------------------------------------------------------------------
// Compression ratios

// Nearest integer of num/den, halves rounded up, in exact integer arithmetic.
inline std::uint64_t round_ratio(std::uint64_t num, std::uint64_t den) {
  POWERSGD_REQUIRE(den > 0, "round_ratio: zero denominator");
  return (2 * num + den) / (2 * den);
}

struct RatioRow {
  ParamSpec spec;
  std::uint64_t uncompressed_bits = 0;
  std::uint64_t payload_bits = 0;
  std::uint64_t rank1_payload_bits = 0;

  double ratio() const { return static_cast<double>(uncompressed_bits) / payload_bits; }
  // Coefficient c of the "c/r" display for rank-based compressors.
  std::uint64_t per_rank_coefficient() const {
    return round_ratio(uncompressed_bits, rank1_payload_bits);
  }
};

struct RatioReport {
  std::string catalog;
  std::string compressor;
  std::size_t rank = 1;
  bool rank_based = false;
  std::vector<RatioRow> rows;  // matrix parameters, catalog order
  std::uint64_t bias_bits = 0;
  std::uint64_t total_uncompressed_bits = 0;
  std::uint64_t total_payload_bits = 0;
  std::uint64_t total_rank1_payload_bits = 0;

  double total_ratio() const {
    return static_cast<double>(total_uncompressed_bits) / total_payload_bits;
  }
  std::uint64_t total_ratio_rounded() const {
    return round_ratio(total_uncompressed_bits, total_payload_bits);
  }
  std::uint64_t total_per_rank_coefficient() const {
    return round_ratio(total_uncompressed_bits, total_rank1_payload_bits);
  }
};

inline bool is_rank_based(const std::string& kind) {
  return kind == "powersgd" || kind == "best-approx" || kind == "unbiased" || kind == "atomo";
}

// Per-tensor and total uncompressed/payload bit ratios. Bias vectors are
// counted uncompressed in both numerator and denominator.
inline RatioReport compression_ratio(const ModelCatalog& catalog, const CompressorConfig& cfg) {
  POWERSGD_REQUIRE(cfg.rank >= 1, "compression_ratio: rank must be positive");
  const auto compressor = make_compressor(cfg);
  CompressorConfig rank1 = cfg;
  rank1.rank = 1;
  const auto compressor1 = make_compressor(rank1);

  RatioReport report{catalog.name, cfg.kind, cfg.rank, is_rank_based(cfg.kind), {}, 0, 0, 0, 0};
  for (const ParamSpec& p : catalog.params) {
    const std::uint64_t raw = kFloatBits * p.numel();
    report.total_uncompressed_bits += raw;
    if (p.is_bias()) {
      report.bias_bits += raw;
      report.total_payload_bits += raw;
      report.total_rank1_payload_bits += raw;
      continue;
    }
    RatioRow row{p, raw, compressor->payload_bits(p.rows, p.cols),
                 compressor1->payload_bits(p.rows, p.cols)};
    report.total_payload_bits += row.payload_bits;
    report.total_rank1_payload_bits += row.rank1_payload_bits;
    report.rows.push_back(row);
  }
  return report;
}

// Data one worker sends per epoch in MiB.
inline double data_per_epoch_mib(std::uint64_t bits_per_step, double batches_per_epoch) {
  return static_cast<double>(bits_per_step) / 8.0 / (1024.0 * 1024.0) * batches_per_epoch;
}

inline std::uint64_t kib_rounded(std::uint64_t bits) { return round_ratio(bits, 8 * 1024); }

}  // namespace powersgd
