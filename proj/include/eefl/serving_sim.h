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

#ifndef EEFL_SERVING_SIM_H_
#define EEFL_SERVING_SIM_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eefl/models.h"
#include "eefl/topology.h"

namespace eefl {

/// Shannon entropy (nats) of softmax(logits).
double softmax_entropy(const Eigen::Ref<const Eigen::VectorXd> &logits);

enum class Ranking {
    /// Lowest softmax entropy first.
    kEntropy,
    /// Uniformly random order; the ablation baseline.
    kRandom,
};

struct ServingOptions {
    Ranking ranking = Ranking::kEntropy;
    /// Only used by kRandom.
    std::uint64_t seed = 0;
};

struct ServingOutcome {
    /// Test-sample indices served at each node, in ranking order.
    std::vector<std::vector<std::size_t>> served;
    std::vector<std::size_t> arrivals;
    std::vector<std::size_t> inflow;
    /// Per exit (indexed exit-1), over the samples that exit served.
    std::vector<std::size_t> exit_count;
    std::vector<double> exit_accuracy;
    std::vector<double> exit_loss;
    /// Per exit accuracy on the whole test set, and served minus i.i.d.
    std::vector<double> iid_accuracy;
    std::vector<double> iid_gap;
    /// Lambda-weighted over exits that served at least one sample.
    double system_accuracy = 0.0;
    double system_loss = 0.0;
};

/// Splits n test samples across nodes in proportion to their exogenous
/// arrival rates (largest remainder, ties to the lower node index).
std::vector<std::size_t> assign_arrivals(const Topology &topology, std::size_t n);

/// Bottom-up serving: every non-root node ranks its pooled inflow at its own
/// exit and serves the round-half-even of f_i * inflow easiest samples; the
/// root serves all it receives.
ServingOutcome simulate_serving(const Topology &topology, const RatePlan &plan,
                                const MlpNetwork &network, const Params &w, const Dataset &test,
                                const ServingOptions &options = {});

/// sum_e metric_e Lambda_e / sum_e Lambda_e. Throws kInvalidArgument when the
/// rates sum to zero.
double weighted_quality(std::span<const double> metrics, std::span<const double> lambda);

}  // namespace eefl

#endif  // EEFL_SERVING_SIM_H_
