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

#include "eefl/topology.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "eefl/errors.h"

namespace eefl {
namespace {

std::string node_label(const NodeSpec &n) { return "'" + n.id + "'"; }

std::vector<double> normalize(const std::vector<double> &v) {
    double total = 0.0;
    for (double x : v) total += x;
    std::vector<double> out(v.size(), 0.0);
    if (total > 0.0) {
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / total;
    }
    return out;
}

RatePlan finish_plan(const Topology &topology, const std::vector<double> &inflow,
                     std::vector<double> transmit, std::span<const std::size_t> order) {
    const std::size_t n = topology.nodes.size();
    RatePlan plan;
    plan.transmit = std::move(transmit);
    plan.serve.assign(n, 0.0);
    plan.fraction.assign(n, 1.0);
    plan.lambda_exit.assign(static_cast<std::size_t>(topology.num_exits), 0.0);
    for (std::size_t i : order) {
        plan.serve[i] = inflow[i] - plan.transmit[i];
        plan.fraction[i] = inflow[i] > 0.0 ? plan.serve[i] / inflow[i] : 1.0;
        plan.lambda_exit[static_cast<std::size_t>(topology.nodes[i].exit - 1)] += plan.serve[i];
    }
    plan.lambda_exit_normalized = normalize(plan.lambda_exit);
    return plan;
}

}  // namespace

TreeIndex validate(const Topology &topology) {
    const std::size_t n = topology.nodes.size();
    if (topology.num_exits < 1) {
        throw Error(ErrorCode::kInvalidArgument, "num_exits must be at least 1");
    }
    if (n == 0) {
        throw Error(ErrorCode::kInvalidArgument, "topology has no nodes");
    }
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < n; ++i) {
        const NodeSpec &node = topology.nodes[i];
        if (!by_id.emplace(node.id, i).second) {
            throw Error(ErrorCode::kDuplicateNode, "node id " + node_label(node) + " appears twice");
        }
        if (node.exit < 1 || node.exit > topology.num_exits) {
            throw Error(ErrorCode::kInvalidArgument,
                        "node " + node_label(node) + " has exit outside 1.." +
                            std::to_string(topology.num_exits));
        }
        if (!(node.arrival_rate >= 0.0) || !(node.budget >= 0.0)) {
            throw Error(ErrorCode::kInvalidArgument,
                        "node " + node_label(node) + " has a negative or NaN rate");
        }
    }

    TreeIndex tree;
    tree.parent.assign(n, std::nullopt);
    tree.children.assign(n, {});
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < n; ++i) {
        const NodeSpec &node = topology.nodes[i];
        if (!node.parent) {
            roots.push_back(i);
            continue;
        }
        auto it = by_id.find(*node.parent);
        if (it == by_id.end()) {
            throw Error(ErrorCode::kUnknownNode,
                        "node " + node_label(node) + " names unknown parent '" + *node.parent + "'");
        }
        tree.parent[i] = it->second;
        tree.children[it->second].push_back(i);
    }
    if (roots.empty()) {
        throw Error(ErrorCode::kCycle, "no root: the parent relation contains a cycle");
    }
    if (roots.size() > 1) {
        throw Error(ErrorCode::kMultipleRoots,
                    std::to_string(roots.size()) + " nodes have no parent");
    }
    tree.root = roots.front();

    // Iterative DFS; nodes never reached sit on a cycle detached from the root.
    tree.depth.assign(n, -1);
    tree.post_order.reserve(n);
    std::vector<std::pair<std::size_t, std::size_t>> stack{{tree.root, 0}};
    tree.depth[tree.root] = 0;
    while (!stack.empty()) {
        auto &[node, next_child] = stack.back();
        if (next_child < tree.children[node].size()) {
            const std::size_t child = tree.children[node][next_child++];
            tree.depth[child] = tree.depth[node] + 1;
            stack.emplace_back(child, 0);
        } else {
            tree.post_order.push_back(node);
            stack.pop_back();
        }
    }
    if (tree.post_order.size() != n) {
        for (std::size_t i = 0; i < n; ++i) {
            if (tree.depth[i] < 0) {
                throw Error(ErrorCode::kCycle, "node " + node_label(topology.nodes[i]) +
                                                   " is not reachable from the root");
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (tree.parent[i]) {
            const NodeSpec &child = topology.nodes[i];
            const NodeSpec &parent = topology.nodes[*tree.parent[i]];
            if (child.exit >= parent.exit) {
                throw Error(ErrorCode::kExitOrderViolation,
                            "node " + node_label(child) + " (exit " + std::to_string(child.exit) +
                                ") is not below its parent " + node_label(parent) + " (exit " +
                                std::to_string(parent.exit) + ")");
            }
        }
    }

    std::vector<bool> seen(static_cast<std::size_t>(topology.num_exits), false);
    for (const NodeSpec &node : topology.nodes) seen[static_cast<std::size_t>(node.exit - 1)] = true;
    for (std::size_t e = 0; e < seen.size(); ++e) {
        if (!seen[e]) {
            throw Error(ErrorCode::kMissingExit,
                        "no node deploys exit " + std::to_string(e + 1));
        }
    }
    return tree;
}

RatePlan compute_rate_plan(const Topology &topology) {
    const TreeIndex tree = validate(topology);
    const std::size_t n = topology.nodes.size();
    std::vector<double> inflow(n, 0.0);
    std::vector<double> transmit(n, 0.0);
    for (std::size_t i : tree.post_order) {
        double in = topology.nodes[i].arrival_rate;
        for (std::size_t child : tree.children[i]) in += transmit[child];
        inflow[i] = in;
        transmit[i] = (i == tree.root) ? 0.0 : std::min(topology.nodes[i].budget, in);
    }
    return finish_plan(topology, inflow, std::move(transmit), tree.post_order);
}

RatePlan brute_force_rate_plan(const Topology &topology, int max_iterations, double tolerance) {
    const TreeIndex tree = validate(topology);
    const std::size_t n = topology.nodes.size();
    std::vector<double> transmit(n, 0.0);
    std::vector<double> inflow(n, 0.0);
    for (int iter = 0; iter < max_iterations; ++iter) {
        // Greedy forwarding given the children's current outflows.
        for (std::size_t i = 0; i < n; ++i) inflow[i] = topology.nodes[i].arrival_rate;
        for (std::size_t j = 0; j < n; ++j) {
            if (tree.parent[j]) inflow[*tree.parent[j]] += transmit[j];
        }
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double next = tree.parent[i] ? std::min(topology.nodes[i].budget, inflow[i]) : 0.0;
            change = std::max(change, std::abs(next - transmit[i]));
            transmit[i] = next;
        }
        if (change < tolerance) {
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            return finish_plan(topology, inflow, std::move(transmit), order);
        }
    }
    throw Error(ErrorCode::kNonConvergence,
                "flows did not settle after " + std::to_string(max_iterations) + " sweeps");
}

std::vector<double> budgets_for_split(const Topology &topology, std::span<const double> split) {
    const TreeIndex tree = validate(topology);
    const std::size_t n = topology.nodes.size();
    const int num_exits = topology.num_exits;
    if (split.size() != static_cast<std::size_t>(num_exits)) {
        throw Error(ErrorCode::kInvalidArgument, "split has " + std::to_string(split.size()) +
                                                     " entries for " + std::to_string(num_exits) +
                                                     " exits");
    }
    double split_total = 0.0;
    for (double s : split) {
        if (!(s >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "split entries must be >= 0");
        split_total += s;
    }
    if (std::abs(split_total - 1.0) > 1e-9) {
        throw Error(ErrorCode::kInvalidArgument, "split must sum to 1");
    }

    std::vector<std::size_t> layer_size(static_cast<std::size_t>(num_exits), 0);
    double total_arrivals = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const NodeSpec &node = topology.nodes[i];
        if (tree.depth[i] != num_exits - node.exit) {
            throw Error(ErrorCode::kInvalidArgument,
                        "topology is not layered: node '" + node.id + "' at depth " +
                            std::to_string(tree.depth[i]) + " deploys exit " +
                            std::to_string(node.exit));
        }
        if (!tree.children[i].empty() && node.arrival_rate > 0.0) {
            throw Error(ErrorCode::kInvalidArgument,
                        "arrivals must be on leaves; internal node '" + node.id + "' has some");
        }
        ++layer_size[static_cast<std::size_t>(node.exit - 1)];
        total_arrivals += node.arrival_rate;
    }

    const double slack = 1e-12 * std::max(1.0, total_arrivals);
    std::vector<double> budgets(n, 0.0);
    std::vector<double> transmit(n, 0.0);
    for (std::size_t i : tree.post_order) {
        const NodeSpec &node = topology.nodes[i];
        double inflow = node.arrival_rate;
        for (std::size_t child : tree.children[i]) inflow += transmit[child];
        const std::size_t layer = static_cast<std::size_t>(node.exit - 1);
        const double target = total_arrivals * split[layer] / static_cast<double>(layer_size[layer]);
        if (i == tree.root) {
            if (std::abs(inflow - target) > 1e-9 * std::max(1.0, total_arrivals)) {
                throw Error(ErrorCode::kInfeasibleSplit,
                            "root receives " + std::to_string(inflow) + " but must serve " +
                                std::to_string(target));
            }
            continue;
        }
        const double budget = inflow - target;
        if (budget < -slack) {
            throw Error(ErrorCode::kInfeasibleSplit,
                        "node '" + node.id + "' must serve " + std::to_string(target) +
                            " but only receives " + std::to_string(inflow));
        }
        budgets[i] = std::max(0.0, budget);
        transmit[i] = budgets[i];
    }
    return budgets;
}

Topology with_budgets(Topology topology, std::span<const double> budgets) {
    if (budgets.size() != topology.nodes.size()) {
        throw Error(ErrorCode::kInvalidArgument, "one budget per node is required");
    }
    for (std::size_t i = 0; i < budgets.size(); ++i) topology.nodes[i].budget = budgets[i];
    return topology;
}

double p1_objective(const Topology &topology, std::span<const double> serve,
                    std::span<const double> exit_losses) {
    double total = 0.0;
    for (std::size_t i = 0; i < topology.nodes.size(); ++i) {
        total += exit_losses[static_cast<std::size_t>(topology.nodes[i].exit - 1)] * serve[i];
    }
    return total;
}

P1Solution grid_search_p1(const Topology &topology, std::span<const double> exit_losses,
                          double step) {
    const TreeIndex tree = validate(topology);
    const std::size_t n = topology.nodes.size();
    if (n > 4) throw Error(ErrorCode::kInvalidArgument, "grid search is limited to 4 nodes");
    if (!(step > 0.0 && step <= 0.2)) {
        throw Error(ErrorCode::kInvalidArgument, "grid step must lie in (0, 0.2]");
    }
    if (exit_losses.size() != static_cast<std::size_t>(topology.num_exits)) {
        throw Error(ErrorCode::kInvalidArgument, "one loss per exit is required");
    }

    std::vector<double> grid;
    for (int k = 0; k * step < 1.0 - 1e-9; ++k) grid.push_back(k * step);
    grid.push_back(1.0);

    std::vector<std::size_t> free_nodes;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != tree.root) free_nodes.push_back(i);
    }

    P1Solution best;
    best.objective = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> digit(free_nodes.size(), 0);
    std::vector<double> fraction(n, 1.0), inflow(n), transmit(n), serve(n);
    while (true) {
        for (std::size_t k = 0; k < free_nodes.size(); ++k) fraction[free_nodes[k]] = grid[digit[k]];
        bool feasible = true;
        for (std::size_t i : tree.post_order) {
            double in = topology.nodes[i].arrival_rate;
            for (std::size_t child : tree.children[i]) in += transmit[child];
            inflow[i] = in;
            serve[i] = in * fraction[i];
            transmit[i] = in * (1.0 - fraction[i]);
            if (transmit[i] > topology.nodes[i].budget + 1e-12) feasible = false;
        }
        if (feasible) {
            const double objective = p1_objective(topology, serve, exit_losses);
            if (objective < best.objective) {
                best.objective = objective;
                best.fraction = fraction;
            }
        }
        std::size_t k = 0;
        while (k < digit.size() && ++digit[k] == grid.size()) digit[k++] = 0;
        if (k == digit.size()) break;
    }
    return best;
}

Topology cloud_edge_device_topology(double device_arrival_rate) {
    Topology t;
    t.num_exits = 3;
    t.nodes.push_back({"cloud", std::nullopt, 3, 0.0, 0.0, 0});
    t.nodes.push_back({"edge1", "cloud", 2, 0.0, 0.0, 0});
    t.nodes.push_back({"edge2", "cloud", 2, 0.0, 0.0, 0});
    t.nodes.push_back({"device1", "edge1", 1, device_arrival_rate, 0.0, 0});
    t.nodes.push_back({"device2", "edge1", 1, device_arrival_rate, 0.0, 0});
    t.nodes.push_back({"device3", "edge2", 1, device_arrival_rate, 0.0, 0});
    t.nodes.push_back({"device4", "edge2", 1, device_arrival_rate, 0.0, 0});
    return t;
}

}  // namespace eefl
