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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace powersgd::cli {
namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "powersgd-cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  for (std::string f; std::getline(is, f, ',');) out.push_back(f);
  return out;
}

double final_loss(const std::string& csv) {
  return std::stod(fields(lines(csv).back())[1]);
}

TEST(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"bogus"}).code, kUsage);
  EXPECT_EQ(invoke({"ratio", "--compressor", "qsgd"}).code, kUsage);
  EXPECT_EQ(invoke({"train", "--rank", "0"}).code, kUsage);
  EXPECT_EQ(invoke({"train", "--format", "xml"}).code, kUsage);
  EXPECT_EQ(invoke({"verify", "nope"}).code, kUsage);
  const auto bad_catalog = invoke({"ratio", "--catalog", "/nonexistent"});
  EXPECT_EQ(bad_catalog.code, kUsage);
  EXPECT_NE(bad_catalog.err.find("unknown catalog"), std::string::npos);
  const auto uneven = invoke({"train", "--workers", "5", "--steps", "1"});
  EXPECT_EQ(uneven.code, kUsage);
}

TEST(CliTest, HelpExitsZero) {
  const auto r = invoke({"--help"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("train"), std::string::npos);
  EXPECT_EQ(invoke({"train", "--help"}).code, kOk);
}

TEST(CliTest, TrainCsvShapeAndStability) {
  const std::vector<std::string> args = {"train", "--steps", "25", "--seed", "3"};
  const auto a = invoke(args), b = invoke(args);
  ASSERT_EQ(a.code, kOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto ls = lines(a.out);
  ASSERT_EQ(ls.size(), 27u);
  EXPECT_EQ(ls[0], "# schema powersgd-sim/train/v1");
  EXPECT_EQ(ls[1], "step,loss,bits_sent_cumulative,decode_ops");
  EXPECT_EQ(fields(ls[2])[0], "1");
  EXPECT_EQ(fields(ls.back())[0], "25");
  // rank 2 on 16x32 plus a 16-float bias: 32*(2*48 + 16) bits per step.
  EXPECT_EQ(std::stoull(fields(ls.back())[2]), 25ull * 32 * (2 * 48 + 16));
}

TEST(CliTest, TrainJson) {
  const auto r = invoke({"train", "--steps", "3", "--format", "json", "--compressor", "topk"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc["schema"], "powersgd-sim/train/v1");
  EXPECT_EQ(doc["config"]["compressor"], "topk");
  EXPECT_EQ(doc["rows"].size(), 3u);
  EXPECT_FALSE(doc["diverged"].get<bool>());
}

TEST(CliTest, TrainWritesOutFile) {
  const auto path = std::filesystem::temp_directory_path() / "powersgd_cli_test.csv";
  const auto r = invoke({"train", "--steps", "2", "--out", path.string()});
  ASSERT_EQ(r.code, kOk);
  EXPECT_TRUE(r.out.empty());
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  EXPECT_EQ(lines(buf.str()).size(), 4u);
  std::filesystem::remove(path);
}

TEST(CliTest, DivergenceExitsThree) {
  const auto r = invoke({"train", "--compressor", "none", "--lr", "50", "--steps", "200"});
  EXPECT_EQ(r.code, kDiverged);
  EXPECT_NE(r.err.find("diverged"), std::string::npos);
  EXPECT_GE(lines(r.out).size(), 3u);
}

TEST(CliTest, IdentityCompressorIndependentOfWorkers) {
  const auto one = invoke({"train", "--compressor", "none", "--workers", "1", "--steps", "100"});
  const auto four = invoke({"train", "--compressor", "none", "--workers", "4", "--steps", "100"});
  ASSERT_EQ(one.code, kOk);
  ASSERT_EQ(four.code, kOk);
  const double a = final_loss(one.out), b = final_loss(four.out);
  EXPECT_LE(std::abs(a - b), 1e-12 * std::abs(a));
}

TEST(CliTest, PowerSgdTracksUncompressedAndBeatsUnbiased) {
  const auto none = invoke({"train", "--compressor", "none", "--steps", "500"});
  const auto power = invoke({"train", "--compressor", "powersgd", "--rank", "2", "--steps", "500"});
  const auto p1 = invoke({"train", "--compressor", "powersgd", "--rank", "1", "--steps", "500"});
  const auto u1 = invoke({"train", "--compressor", "unbiased", "--rank", "1", "--steps", "500",
                          "--no-error-feedback"});
  for (const auto* r : {&none, &power, &p1, &u1}) ASSERT_EQ(r->code, kOk) << r->err;
  EXPECT_LE(final_loss(power.out), 1.05 * final_loss(none.out));
  EXPECT_LT(final_loss(p1.out), final_loss(u1.out));
}

TEST(CliTest, RatioTableResNet) {
  const auto r = invoke({"ratio", "--compressor", "powersgd", "--rank", "1"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto ls = lines(r.out);
  EXPECT_EQ(ls[1], "name,tensor_shape,matrix_shape,uncompressed_kb,payload_bits,ratio,display");
  EXPECT_EQ(ls.size(), 2u + 21u + 3u);
  EXPECT_NE(r.out.find(",461/r\n"), std::string::npos);
  EXPECT_EQ(fields(ls[ls.size() - 3])[0], "bias vectors (total)");
  EXPECT_EQ(fields(ls[ls.size() - 3])[3], "38");
  EXPECT_EQ(fields(ls.back()).back(), "243/r");
  EXPECT_EQ(invoke({"ratio", "--compressor", "powersgd", "--rank", "1"}).out, r.out);
}

TEST(CliTest, RatioTotalsAtRankTwo) {
  const auto r = invoke({"ratio", "--rank", "2"});
  ASSERT_EQ(r.code, kOk);
  const auto ls = lines(r.out);
  EXPECT_EQ(fields(ls[ls.size() - 2]).back(), "136x");
  EXPECT_EQ(fields(ls.back()).back(), "243/r");
}

TEST(CliTest, RatioNonRankCompressors) {
  const auto none = invoke({"ratio", "--compressor", "none"});
  EXPECT_EQ(fields(lines(none.out).back()).back(), "1x");
  const auto sn = invoke({"ratio", "--compressor", "signnorm", "--format", "json"});
  const auto doc = nlohmann::json::parse(sn.out);
  // Close to 32x; the dense bias vectors pull the total slightly below.
  EXPECT_EQ(doc["total"]["display"], "31x");
  EXPECT_NEAR(doc["rows"][0]["ratio"].get<double>(), 32.0, 32.0 * 32.0 / 1728);
  EXPECT_FALSE(doc["total"].contains("per_rank_display"));
}

TEST(CliTest, RatioLstmAndCustomCatalog) {
  const auto lstm = invoke({"ratio", "--catalog", "lstm", "--rank", "1"});
  EXPECT_NE(lstm.out.find("encoder,28869x650,28869x650,"), std::string::npos);
  EXPECT_EQ(fields(lines(lstm.out).back()).back(), "310/r");

  const auto path = std::filesystem::temp_directory_path() / "powersgd_cli_catalog.txt";
  std::ofstream(path) << "# toy\nfc 8x8\nb 8\n";
  const auto custom = invoke({"ratio", "--catalog", path.string(), "--rank", "8"});
  ASSERT_EQ(custom.code, kOk) << custom.err;
  EXPECT_NE(custom.out.find("fc,8x8,8x8,"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(CliTest, VerifySingleSuite) {
  const auto r = invoke({"verify", "ratios"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_EQ(lines(r.out)[0], "PASS ratios");
  const auto j = invoke({"verify", "ef-identity", "--format", "json"});
  EXPECT_EQ(j.code, kOk);
  EXPECT_TRUE(nlohmann::json::parse(j.out)["suites"][0]["passed"].get<bool>());
}

}  // namespace
}  // namespace powersgd::cli
