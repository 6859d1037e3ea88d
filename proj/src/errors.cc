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

#include "eefl/errors.h"

namespace eefl {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument:
            return "InvalidArgument";
        case ErrorCode::kCycle:
            return "CycleError";
        case ErrorCode::kMultipleRoots:
            return "MultipleRoots";
        case ErrorCode::kExitOrderViolation:
            return "ExitOrderViolation";
        case ErrorCode::kMissingExit:
            return "MissingExit";
        case ErrorCode::kUnknownNode:
            return "UnknownNode";
        case ErrorCode::kDuplicateNode:
            return "DuplicateNode";
        case ErrorCode::kNonConvergence:
            return "NonConvergence";
        case ErrorCode::kInfeasibleSplit:
            return "InfeasibleSplit";
        case ErrorCode::kZeroTraffic:
            return "ZeroTraffic";
        case ErrorCode::kAllZero:
            return "AllZero";
        case ErrorCode::kInvalidK:
            return "InvalidK";
        case ErrorCode::kEmptyPool:
            return "EmptyPool";
        case ErrorCode::kEmptyDataset:
            return "EmptyDataset";
        case ErrorCode::kEmptyClientDataset:
            return "EmptyClientDataset";
        case ErrorCode::kZeroProbability:
            return "ZeroProbability";
        case ErrorCode::kNotNormalized:
            return "NotNormalized";
        case ErrorCode::kZeroProbabilityWithWeight:
            return "ZeroProbabilityWithWeight";
        case ErrorCode::kSingularSystem:
            return "SingularSystem";
        case ErrorCode::kConfigParse:
            return "ConfigParse";
        case ErrorCode::kMissingRows:
            return "MissingRows";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string &message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

}  // namespace eefl
