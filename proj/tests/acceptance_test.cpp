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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <cstdio>
#include <string>
#include <vector>

#include "powersgd/verify.hpp"

namespace {

struct Criterion {
  int number;
  const char* title;
  const char* suite;
};

constexpr Criterion kCriteria[] = {
    {1, "warm-start recovery of the best rank-r approximation", "warmstart"},
    {2, "multi-worker vs single-worker linearity", "linearity"},
    {3, "compression-ratio tables", "ratios"},
    {4, "error feedback with identity compressor equals momentum SGD", "ef-identity"},
    {5, "decode work and bit counters vs number of workers", "scaling"},
    {6, "unbiased compressors have the right Monte Carlo mean", "unbiasedness"},
    {7, "error feedback is necessary for rank-1 PowerSGD", "ef-necessity"},
    {8, "PowerSGD beats the unbiased sketch at matched bits", "quality-ordering"},
};

}  // namespace

int main() {
  int failures = 0;
  for (const Criterion& c : kCriteria) {
    const auto result = powersgd::verify::run_suite(c.suite);
    const bool ok = result.passed();
    failures += !ok;
    std::printf("%s criterion %d: %s (%.2f s)\n", ok ? "PASS" : "FAIL", c.number, c.title,
                result.seconds);
    for (const auto& check : result.checks) {
      const char* tag = check.informational ? "info" : check.pass ? "ok  " : "FAIL";
      std::printf("    [%s] %s: observed %s, expected %s\n", tag, check.what.c_str(),
                  check.observed.c_str(), check.expected.c_str());
    }
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(kCriteria)) - failures,
              std::size(kCriteria));
  return failures == 0 ? 0 : 1;
}
