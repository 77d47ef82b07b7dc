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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace riskaware {

enum class ErrorCode {
  DimensionMismatch,
  NegativeSE,
  MissingSE,
  MissingColumn,
  DuplicateLabel,
  EmptyInput,
  InvalidCorrelation,
  NonPSDCorrelation,
  InfeasiblePolytope,
  InvalidArgument,
  IterationLimit,
  FactorizationFailure,
  SolverFailure,
  OverlapViolation,
  CapExceeded,
  InsufficientUnits,
  ParseError,
  IoError,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NegativeSE: return "NegativeSE";
    case ErrorCode::MissingSE: return "MissingSE";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DuplicateLabel: return "DuplicateLabel";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidCorrelation: return "InvalidCorrelation";
    case ErrorCode::NonPSDCorrelation: return "NonPSDCorrelation";
    case ErrorCode::InfeasiblePolytope: return "InfeasiblePolytope";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::OverlapViolation: return "OverlapViolation";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::InsufficientUnits: return "InsufficientUnits";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace riskaware
