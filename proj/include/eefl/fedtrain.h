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

#ifndef EEFL_FEDTRAIN_H_
#define EEFL_FEDTRAIN_H_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eefl/models.h"
#include "eefl/rng.h"
#include "eefl/strategies.h"
#include "eefl/topology.h"

namespace eefl {

enum class LrSchedule { kTheory, kConstant, kCosine };

LrSchedule parse_lr_schedule(std::string_view name);
std::string_view lr_schedule_name(LrSchedule schedule);

struct TrainConfig {
    int rounds = 1;
    int local_steps = 1;
    std::size_t batch_size = 1;
    double server_lr = 1.0;
    LrSchedule lr_schedule = LrSchedule::kTheory;
    /// Step size of the constant schedule and peak of the cosine schedule.
    double base_lr = 0.1;
    /// Curvature constants for the theory schedule.
    double mu = 1.0;
    double smoothness = 1.0;
    /// Defaults to max{8 L/mu, J} - 1.
    std::optional<double> gamma;
    /// Radius of the origin-centred feasible ball; infinity disables projection.
    double projection_radius = std::numeric_limits<double>::infinity();
    /// Heavy-ball coefficient for local SGD; buffers restart every round.
    double momentum = 0.0;
    std::uint64_t seed = 0;
    /// Worker threads for the local updates of a round.
    int threads = 1;
};

/// Throws kInvalidArgument when a field is out of range.
void validate(const TrainConfig &cfg);

/// max{8 kappa, J} - 1.
double schedule_gamma(double mu, double smoothness, int local_steps);

/// Step size for round t (1-based) and local step j (0-based).
double learning_rate(const TrainConfig &cfg, int round, int step);

/// Exit drawn by each client this round, indexed by client.
struct RoundSample {
    std::vector<int> exits;
};

/// Each client draws one exit from its row of p, from the stream keyed by
/// (seed, round, client).
RoundSample sample_round(const SamplingMatrix &p, std::uint64_t seed, int round);

/// J steps of mini-batch SGD on exit `exit` of `client`, starting from w_t.
/// Throws kEmptyClientDataset.
Params local_update(const Task &task, const Params &w_t, std::size_t client, int exit,
                    const TrainConfig &cfg, int round, Stream &rng);

struct ClientUpdate {
    std::size_t client = 0;
    int exit = 1;
    Params model;
};

/// eta_s Lambda~_e |S_c| / |S_{e,p}| for one (client, exit) pair; zero when
/// the client is outside the exit's pool.
double aggregation_coefficient(const ExitWeights &lambda, const ExitPools &pools,
                               std::span<const std::size_t> client_sizes, std::size_t client,
                               int exit, double server_lr);

/// w_t + sum over updates of coefficient / p_{c,e} (w^{(c,e)} - w_t), reduced in
/// ascending client order. Throws kZeroProbability.
Params aggregate_unprojected(const Params &w_t, std::span<const ClientUpdate> updates,
                             const ExitWeights &lambda, const SamplingMatrix &p,
                             const ExitPools &pools, std::span<const std::size_t> client_sizes,
                             double server_lr);

/// Euclidean projection onto the origin-centred ball of radius r.
Params project_to_ball(Params w, double radius);

Params aggregate(const Params &w_t, std::span<const ClientUpdate> updates, const ExitWeights &lambda,
                 const SamplingMatrix &p, const ExitPools &pools,
                 std::span<const std::size_t> client_sizes, double server_lr, double radius);

struct Trajectory {
    /// F_{Lambda~,S} of the global model after each round; entry 0 is w_1.
    std::vector<double> objective;
    std::vector<double> norm;
};

struct RunResult {
    Params final_model;
    Params initial_model;
    Trajectory trajectory;
};

/// Algorithm loop: sample, local updates, aggregate, project; T rounds.
RunResult run(const Topology &topology, const Task &task, const ExitWeights &lambda,
              const SamplingMatrix &p, const TrainConfig &cfg);

}  // namespace eefl

#endif  // EEFL_FEDTRAIN_H_
