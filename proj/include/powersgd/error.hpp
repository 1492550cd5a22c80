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

#include <sstream>
#include <stdexcept>
#include <string>

namespace powersgd {

// Raised when a caller breaks a documented precondition (shape mismatch,
// rank out of range, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised by the optimizer when a gradient entry is NaN or Inf.
class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& param, std::size_t worker)
      : std::runtime_error("non-finite gradient in parameter '" + param +
                           "' on worker " + std::to_string(worker)),
        param_(param),
        worker_(worker) {}

  const std::string& param() const { return param_; }
  std::size_t worker() const { return worker_; }

 private:
  std::string param_;
  std::size_t worker_;
};

namespace detail {

template <typename... Args>
[[noreturn]] void contract_failure(const Args&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  throw ContractViolation(oss.str());
}

}  // namespace detail

#define POWERSGD_REQUIRE(cond, ...)                          \
  do {                                                       \
    if (!(cond)) ::powersgd::detail::contract_failure(__VA_ARGS__); \
  } while (0)

}  // namespace powersgd
