// Copyright 2026 The eefl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEFL_ERRORS_H_
#define EEFL_ERRORS_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace eefl {

enum class ErrorCode {
    kInvalidArgument,
    kCycle,
    kMultipleRoots,
    kExitOrderViolation,
    kMissingExit,
    kUnknownNode,
    kDuplicateNode,
    kNonConvergence,
    kInfeasibleSplit,
    kZeroTraffic,
    kAllZero,
    kInvalidK,
    kEmptyPool,
    kEmptyDataset,
    kEmptyClientDataset,
    kZeroProbability,
    kNotNormalized,
    kZeroProbabilityWithWeight,
    kSingularSystem,
    kConfigParse,
    kMissingRows,
};

/// Stable name of an error code, e.g. "ExitOrderViolation".
std::string_view error_code_name(ErrorCode code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
   public:
    Error(ErrorCode code, const std::string &message);

    ErrorCode code() const noexcept { return code_; }

   private:
    ErrorCode code_;
};

}  // namespace eefl

#endif  // EEFL_ERRORS_H_
