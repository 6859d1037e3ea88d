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

#ifndef EEFL_TOPOLOGY_H_
#define EEFL_TOPOLOGY_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eefl {

/// One node of the cooperative inference tree.
///
/// `exit` is 1-based: a node deploying exit e serves with the model up to
/// early exit e. `budget` caps the request rate forwarded to the parent and
/// may be +infinity.
struct NodeSpec {
    std::string id;
    std::optional<std::string> parent;
    int exit = 1;
    double arrival_rate = 0.0;
    double budget = 0.0;
    std::size_t dataset_size = 0;
};

struct Topology {
    std::vector<NodeSpec> nodes;
    int num_exits = 1;
};

/// Index form of a validated tree. All indices refer to Topology::nodes.
struct TreeIndex {
    std::size_t root = 0;
    std::vector<std::optional<std::size_t>> parent;
    std::vector<std::vector<std::size_t>> children;
    /// Children before parents.
    std::vector<std::size_t> post_order;
    std::vector<int> depth;
};

/// Checks every structural invariant and returns the resolved tree.
/// Throws Error with kCycle, kMultipleRoots, kExitOrderViolation, kMissingExit,
/// kUnknownNode, kDuplicateNode or kInvalidArgument.
TreeIndex validate(const Topology &topology);

/// Per-node and per-exit request flows. Per-exit vectors are indexed by exit-1.
struct RatePlan {
    std::vector<double> transmit;
    std::vector<double> serve;
    std::vector<double> fraction;
    std::vector<double> lambda_exit;
    std::vector<double> lambda_exit_normalized;
};

/// Saturating plan: every node forwards min(budget, inflow); the root forwards
/// nothing.
RatePlan compute_rate_plan(const Topology &topology);

/// Independent fixed-point evaluation of the same flows (Jacobi sweeps over
/// the parent relation until the largest per-node change drops below
/// `tolerance`). Throws kNonConvergence after `max_iterations` sweeps.
RatePlan brute_force_rate_plan(const Topology &topology, int max_iterations = 100000,
                               double tolerance = 1e-13);

/// Inverse problem for layered topologies: per-node budgets such that the
/// saturating plan serves `split[e-1]` of all traffic at exit e, with each
/// layer's share divided equally among its nodes. Throws kInfeasibleSplit.
std::vector<double> budgets_for_split(const Topology &topology, std::span<const double> split);

/// Returns a copy of `topology` with budgets replaced.
Topology with_budgets(Topology topology, std::span<const double> budgets);

/// Objective sum_i loss(E_i) * serve_i of a plan, for constant per-exit losses.
double p1_objective(const Topology &topology, std::span<const double> serve,
                    std::span<const double> exit_losses);

struct P1Solution {
    std::vector<double> fraction;
    double objective = 0.0;
};

/// Exhaustive search over serving fractions on a grid of the given step,
/// subject to the budget constraints. Only for tiny trees (at most 4 nodes);
/// used as an optimality oracle for the saturating plan.
P1Solution grid_search_p1(const Topology &topology, std::span<const double> exit_losses,
                          double step);

/// The 7-node cloud/edge/device tree: one cloud (exit 3), two edges (exit 2),
/// four devices (exit 1), with requests arriving only at devices.
Topology cloud_edge_device_topology(double device_arrival_rate = 1.0);

}  // namespace eefl

#endif  // EEFL_TOPOLOGY_H_
