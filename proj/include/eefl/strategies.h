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

#ifndef EEFL_STRATEGIES_H_
#define EEFL_STRATEGIES_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eefl/topology.h"

namespace eefl {

/// Per-exit aggregation weights (indexed by exit-1).
struct ExitWeights {
    std::vector<double> weights;
    bool normalized = true;

    std::size_t size() const { return weights.size(); }
    double operator[](std::size_t i) const { return weights[i]; }
};

ExitWeights equal_weight(int num_exits);

enum class FlopsWeighting { kDirect, kInverse };

/// Weights proportional to per-exit FLOPS. kInverse weights by 1/FLOPS.
ExitWeights flops_prop(std::span<const double> flops,
                       FlopsWeighting mode = FlopsWeighting::kDirect);

/// Normalized per-exit serving rates of a plan. Throws kZeroTraffic.
ExitWeights serving_rate_weights(const RatePlan &plan);

/// Normalizes nonnegative shares (e.g. an "80-15-5" serving setting).
ExitWeights weights_from_shares(std::span<const double> shares);

/// Lambda_e * |S_e| / FLOPS_e, normalized. Throws kAllZero.
ExitWeights gen_error_adjusted(const RatePlan &plan, std::span<const std::size_t> pool_sizes,
                               std::span<const double> flops);

/// Same adjustment applied to explicit anticipated rates.
ExitWeights gen_error_adjusted(const ExitWeights &lambda, std::span<const std::size_t> pool_sizes,
                               std::span<const double> flops);

/// Per-client categorical distribution over the exit trained in a round.
/// Rows are clients (topology node order), columns exits 1..E.
class SamplingMatrix {
   public:
    SamplingMatrix() = default;
    SamplingMatrix(std::size_t num_clients, int num_exits);

    std::size_t num_clients() const { return num_clients_; }
    int num_exits() const { return num_exits_; }

    double prob(std::size_t client, int exit) const {
        return probs_[client * static_cast<std::size_t>(num_exits_) + static_cast<std::size_t>(exit - 1)];
    }
    void set(std::size_t client, int exit, double p) {
        probs_[client * static_cast<std::size_t>(num_exits_) + static_cast<std::size_t>(exit - 1)] = p;
    }
    std::span<const double> row(std::size_t client) const {
        return {probs_.data() + client * static_cast<std::size_t>(num_exits_),
                static_cast<std::size_t>(num_exits_)};
    }

   private:
    std::size_t num_clients_ = 0;
    int num_exits_ = 0;
    std::vector<double> probs_;
};

/// Checks the matrix against the topology: zero beyond each client's exit,
/// rows summing to 1, and a positive probability on the client's own exit.
void validate_sampling_matrix(const Topology &topology, const SamplingMatrix &p);

/// p[c][e] = k for e < E_c and 1 - k (E_c - 1) for e = E_c. Throws kInvalidK.
SamplingMatrix build_sampling_matrix(const Topology &topology, double k);

struct ExitPools {
    /// |S_{e,p}| per exit.
    std::vector<std::size_t> sizes;
    /// C_{e,p}: clients with p[c][e] > 0, ascending.
    std::vector<std::vector<std::size_t>> clients;
};

/// Throws kEmptyPool when an exit has no contributing client or no samples.
ExitPools exit_pools(const Topology &topology, const SamplingMatrix &p);

/// Strategy names accepted in experiment configs.
enum class StrategyKind { kEqual, kFlopsProp, kServingRate, kGenErrorAdj };

StrategyKind parse_strategy(std::string_view name);
std::string_view strategy_name(StrategyKind kind);

}  // namespace eefl

#endif  // EEFL_STRATEGIES_H_
