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

#include <cstdio>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "powersgd/models.hpp"
#include "powersgd/train.hpp"
#include "powersgd/verify.hpp"

// Table and curve serialization. CSV files open with a `# schema` comment
// line followed by a header row; JSON documents carry the same schema tag.
// Doubles are printed round-trip exact so outputs are byte-stable.
namespace powersgd::report {

inline constexpr const char* kTrainSchema = "powersgd-sim/train/v1";
inline constexpr const char* kRatioSchema = "powersgd-sim/ratio/v1";
inline constexpr const char* kVerifySchema = "powersgd-sim/verify/v1";

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Display form of a ratio: "461/r" for rank-based compressors, "32x" for the
// others.
inline std::string display_ratio(const RatioReport& report, std::uint64_t per_rank,
                                 std::uint64_t rounded) {
  return report.rank_based ? std::to_string(per_rank) + "/r" : std::to_string(rounded) + "x";
}

// ---------------------------------------------------------------------------
// Training curves

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
  return {{"task", cfg.task},         {"compressor", cfg.compressor}, {"rank", cfg.rank},
          {"workers", cfg.workers},   {"steps", cfg.steps},           {"lr", cfg.lr},
          {"momentum", cfg.momentum}, {"seed", cfg.seed},             {"batch", cfg.batch},
          {"noise", cfg.noise},       {"error_feedback", cfg.error_feedback}};
}

inline void write_train_csv(std::ostream& os, const TrainResult& result) {
  os << "# schema " << kTrainSchema << '\n';
  os << "step,loss,bits_sent_cumulative,decode_ops\n";
  for (const TrainRow& r : result.rows)
    os << r.step << ',' << fmt_double(r.loss) << ',' << r.bits_cumulative << ',' << r.decode_ops
       << '\n';
}

inline void write_train_json(std::ostream& os, const RunConfig& cfg, const TrainResult& result) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const TrainRow& r : result.rows)
    rows.push_back({{"step", r.step},
                    {"loss", r.loss},
                    {"bits_sent_cumulative", r.bits_cumulative},
                    {"decode_ops", r.decode_ops}});
  nlohmann::ordered_json doc = {{"schema", kTrainSchema},
                                {"config", config_json(cfg)},
                                {"diverged", result.diverged},
                                {"rows", std::move(rows)}};
  os << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Ratio tables

inline void write_ratio_csv(std::ostream& os, const RatioReport& report) {
  os << "# schema " << kRatioSchema << " catalog=" << report.catalog
     << " compressor=" << report.compressor << " rank=" << report.rank << '\n';
  os << "name,tensor_shape,matrix_shape,uncompressed_kb,payload_bits,ratio,display\n";
  for (const RatioRow& r : report.rows) {
    os << r.spec.name << ',' << format_shape(r.spec.tensor_shape) << ','
       << format_shape({r.spec.rows, r.spec.cols}) << ',' << kib_rounded(r.uncompressed_bits)
       << ',' << r.payload_bits << ',' << fmt_double(r.ratio()) << ','
       << display_ratio(report, r.per_rank_coefficient(),
                        round_ratio(r.uncompressed_bits, r.payload_bits))
       << '\n';
  }
  os << "bias vectors (total),,," << kib_rounded(report.bias_bits) << ',' << report.bias_bits
     << ",1,none\n";
  // The total is emitted both at the requested rank and in c/r form.
  os << "total,,," << kib_rounded(report.total_uncompressed_bits) << ','
     << report.total_payload_bits << ',' << fmt_double(report.total_ratio()) << ','
     << report.total_ratio_rounded() << 'x' << '\n';
  if (report.rank_based)
    os << "total per rank,,," << kib_rounded(report.total_uncompressed_bits) << ','
       << report.total_rank1_payload_bits << ','
       << fmt_double(static_cast<double>(report.total_uncompressed_bits) /
                     report.total_rank1_payload_bits)
       << ',' << report.total_per_rank_coefficient() << "/r\n";
}

inline void write_ratio_json(std::ostream& os, const RatioReport& report) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const RatioRow& r : report.rows)
    rows.push_back({{"name", r.spec.name},
                    {"tensor_shape", format_shape(r.spec.tensor_shape)},
                    {"matrix_shape", format_shape({r.spec.rows, r.spec.cols})},
                    {"uncompressed_kb", kib_rounded(r.uncompressed_bits)},
                    {"uncompressed_bits", r.uncompressed_bits},
                    {"payload_bits", r.payload_bits},
                    {"ratio", r.ratio()},
                    {"display", display_ratio(report, r.per_rank_coefficient(),
                                              round_ratio(r.uncompressed_bits, r.payload_bits))}});
  nlohmann::ordered_json total = {{"uncompressed_bits", report.total_uncompressed_bits},
                                  {"payload_bits", report.total_payload_bits},
                                  {"ratio", report.total_ratio()},
                                  {"display", std::to_string(report.total_ratio_rounded()) + "x"}};
  if (report.rank_based)
    total["per_rank_display"] = std::to_string(report.total_per_rank_coefficient()) + "/r";
  nlohmann::ordered_json doc = {{"schema", kRatioSchema},
                                {"catalog", report.catalog},
                                {"compressor", report.compressor},
                                {"rank", report.rank},
                                {"rows", std::move(rows)},
                                {"bias_bits", report.bias_bits},
                                {"bias_kb", kib_rounded(report.bias_bits)},
                                {"total", std::move(total)}};
  os << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Verification reports

inline void write_verify_text(std::ostream& os, const verify::SuiteResult& suite) {
  os << (suite.passed() ? "PASS " : "FAIL ") << suite.id << '\n';
  for (const verify::Check& c : suite.checks) {
    const char* tag = c.informational ? "info" : c.pass ? "ok  " : "FAIL";
    os << "  [" << tag << "] " << c.what << ": observed " << c.observed << ", expected "
       << c.expected << '\n';
  }
}

inline void write_verify_json(std::ostream& os, const std::vector<verify::SuiteResult>& suites) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : suites) {
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    for (const auto& c : s.checks)
      checks.push_back({{"what", c.what},
                        {"pass", c.pass},
                        {"informational", c.informational},
                        {"observed", c.observed},
                        {"expected", c.expected}});
    arr.push_back({{"suite", s.id}, {"passed", s.passed()}, {"checks", std::move(checks)}});
  }
  os << nlohmann::ordered_json{{"schema", kVerifySchema}, {"suites", std::move(arr)}}.dump(2)
     << '\n';
}

}  // namespace powersgd::report
