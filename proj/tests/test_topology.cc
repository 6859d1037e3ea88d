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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "eefl/errors.h"
#include "test_util.h"

namespace eefl {
namespace {

Topology with_device_and_edge_budgets(double device, double edge) {
    Topology t = cloud_edge_device_topology(1.0);
    for (NodeSpec &n : t.nodes) n.budget = n.exit == 1 ? device : (n.exit == 2 ? edge : 0.0);
    return t;
}

TEST(Validate, AcceptsCloudEdgeDeviceTree) {
    const TreeIndex tree = validate(cloud_edge_device_topology());
    EXPECT_EQ(tree.root, 0u);
    EXPECT_EQ(tree.post_order.size(), 7u);
    EXPECT_EQ(tree.post_order.back(), 0u);
}

TEST(Validate, AcceptsSingleNode) {
    Topology t;
    t.num_exits = 1;
    t.nodes.push_back({"only", std::nullopt, 1, 1.0, 0.0, 5});
    EXPECT_NO_THROW(validate(t));
}

TEST(Validate, RejectsEqualExitUnderParent) {
    Topology t = cloud_edge_device_topology();
    t.nodes[1].exit = 3;
    EXPECT_EQ(testing::code_of([&] { validate(t); }), ErrorCode::kExitOrderViolation);
}

TEST(Validate, RejectsStructuralErrors) {
    Topology cycle;
    cycle.num_exits = 2;
    cycle.nodes.push_back({"a", "b", 2, 0.0, 0.0, 0});
    cycle.nodes.push_back({"b", "a", 1, 0.0, 0.0, 0});
    EXPECT_EQ(testing::code_of([&] { validate(cycle); }), ErrorCode::kCycle);

    Topology detached = cloud_edge_device_topology();
    detached.nodes.push_back({"x", "y", 1, 0.0, 0.0, 0});
    detached.nodes.push_back({"y", "x", 2, 0.0, 0.0, 0});
    EXPECT_EQ(testing::code_of([&] { validate(detached); }), ErrorCode::kCycle);

    Topology two_roots = cloud_edge_device_topology();
    two_roots.nodes[1].parent.reset();
    EXPECT_EQ(testing::code_of([&] { validate(two_roots); }), ErrorCode::kMultipleRoots);

    Topology missing = cloud_edge_device_topology();
    missing.num_exits = 4;
    EXPECT_EQ(testing::code_of([&] { validate(missing); }), ErrorCode::kMissingExit);

    Topology unknown = cloud_edge_device_topology();
    unknown.nodes[3].parent = "nowhere";
    EXPECT_EQ(testing::code_of([&] { validate(unknown); }), ErrorCode::kUnknownNode);

    Topology dup = cloud_edge_device_topology();
    dup.nodes[4].id = dup.nodes[3].id;
    EXPECT_EQ(testing::code_of([&] { validate(dup); }), ErrorCode::kDuplicateNode);

    Topology negative = cloud_edge_device_topology();
    negative.nodes[3].arrival_rate = -1.0;
    EXPECT_EQ(testing::code_of([&] { validate(negative); }), ErrorCode::kInvalidArgument);
}

TEST(RatePlan, ZeroBudgetsServeLocally) {
    const RatePlan plan = compute_rate_plan(with_device_and_edge_budgets(0.0, 0.0));
    EXPECT_EQ(plan.lambda_exit, (std::vector<double>{4.0, 0.0, 0.0}));
    for (double f : plan.fraction) EXPECT_EQ(f, 1.0);
}

TEST(RatePlan, HandEvaluatedRecurrence) {
    const Topology t = with_device_and_edge_budgets(0.6, 0.8);
    for (const RatePlan &plan : {compute_rate_plan(t), brute_force_rate_plan(t)}) {
        for (std::size_t i = 3; i < 7; ++i) {
            EXPECT_NEAR(plan.transmit[i], 0.6, 1e-12);
            EXPECT_NEAR(plan.serve[i], 0.4, 1e-12);
        }
        for (std::size_t i = 1; i < 3; ++i) {
            EXPECT_NEAR(plan.transmit[i], 0.8, 1e-12);
            EXPECT_NEAR(plan.serve[i], 0.4, 1e-12);
        }
        EXPECT_EQ(plan.transmit[0], 0.0);
        EXPECT_NEAR(plan.serve[0], 1.6, 1e-12);
        EXPECT_NEAR(plan.lambda_exit[0], 1.6, 1e-12);
        EXPECT_NEAR(plan.lambda_exit[1], 0.8, 1e-12);
        EXPECT_NEAR(plan.lambda_exit[2], 1.6, 1e-12);
    }
}

TEST(RatePlan, UnboundedBudgetsReachTheRoot) {
    const RatePlan plan = compute_rate_plan(with_device_and_edge_budgets(1e300, 1e300));
    EXPECT_EQ(plan.lambda_exit, (std::vector<double>{0.0, 0.0, 4.0}));
    EXPECT_EQ(plan.lambda_exit_normalized, (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(RatePlan, RootBudgetIsIgnored) {
    Topology t = with_device_and_edge_budgets(0.6, 0.8);
    t.nodes[0].budget = 5.0;
    EXPECT_EQ(compute_rate_plan(t).transmit[0], 0.0);
}

TEST(BruteForce, ChainAndZeroTraffic) {
    const RatePlan plan = brute_force_rate_plan(testing::chain3(0.5, 0.25));
    EXPECT_NEAR(plan.lambda_exit[0], 0.5, 1e-12);
    EXPECT_NEAR(plan.lambda_exit[1], 0.25, 1e-12);
    EXPECT_NEAR(plan.lambda_exit[2], 0.25, 1e-12);

    const RatePlan idle = brute_force_rate_plan(testing::chain3(0.5, 0.25, 0.0));
    for (double x : idle.lambda_exit) EXPECT_EQ(x, 0.0);
    for (double f : idle.fraction) EXPECT_EQ(f, 1.0);
}

TEST(RatePlanProperty, MatchesOracleAndConservesFlow) {
    Stream rng(20260101);
    for (int trial = 0; trial < 200; ++trial) {
        const Topology t = testing::random_tree(rng);
        const RatePlan fast = compute_rate_plan(t);
        const RatePlan slow = brute_force_rate_plan(t);
        const TreeIndex tree = validate(t);
        double arrivals = 0.0;
        for (const NodeSpec &n : t.nodes) arrivals += n.arrival_rate;
        double served = 0.0;
        for (double x : fast.lambda_exit) {
            EXPECT_GE(x, 0.0);
            served += x;
        }
        EXPECT_NEAR(served, arrivals, 1e-12 * std::max(1.0, arrivals));
        for (std::size_t i = 0; i < t.nodes.size(); ++i) {
            EXPECT_NEAR(fast.transmit[i], slow.transmit[i], 1e-12);
            EXPECT_NEAR(fast.serve[i], slow.serve[i], 1e-12);
            EXPECT_LE(fast.transmit[i], t.nodes[i].budget);
            double inflow = t.nodes[i].arrival_rate;
            for (std::size_t c : tree.children[i]) inflow += fast.transmit[c];
            EXPECT_NEAR(fast.serve[i] + fast.transmit[i], inflow, 1e-12);
            EXPECT_GE(fast.fraction[i], 0.0);
            EXPECT_LE(fast.fraction[i], 1.0);
        }
        for (std::size_t e = 0; e < fast.lambda_exit.size(); ++e) {
            EXPECT_NEAR(fast.lambda_exit[e], slow.lambda_exit[e], 1e-12);
        }
    }
}

TEST(RatePlanProperty, RaisingABudgetPushesTrafficUp) {
    Stream rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        Topology t = testing::random_tree(rng);
        const std::size_t i = rng.index(t.nodes.size());
        const int layer = t.nodes[i].exit;
        const RatePlan before = compute_rate_plan(t);
        t.nodes[i].budget += rng.uniform();
        const RatePlan after = compute_rate_plan(t);
        double up_before = 0.0, up_after = 0.0;
        for (int e = layer + 1; e <= t.num_exits; ++e) {
            up_before += before.lambda_exit[static_cast<std::size_t>(e - 1)];
            up_after += after.lambda_exit[static_cast<std::size_t>(e - 1)];
        }
        EXPECT_GE(up_after, up_before - 1e-12);
    }
}

TEST(BudgetsForSplit, EqualThirds) {
    const Topology t = cloud_edge_device_topology(1.0);
    const std::vector<double> split = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const std::vector<double> budgets = budgets_for_split(t, split);
    for (std::size_t i = 1; i < 7; ++i) EXPECT_NEAR(budgets[i], 2.0 / 3, 1e-12);
    const RatePlan plan = compute_rate_plan(with_budgets(t, budgets));
    for (std::size_t e = 0; e < 3; ++e) EXPECT_NEAR(plan.lambda_exit_normalized[e], split[e], 1e-9);
}

TEST(BudgetsForSplit, ExtremesRoundTrip) {
    const Topology t = cloud_edge_device_topology(1.0);
    const std::vector<double> local = {1.0, 0.0, 0.0};
    const std::vector<double> budgets = budgets_for_split(t, local);
    for (std::size_t i = 3; i < 7; ++i) EXPECT_EQ(budgets[i], 0.0);

    const std::vector<double> offload = {0.0, 0.0, 1.0};
    const std::vector<double> up = budgets_for_split(t, offload);
    for (std::size_t i = 3; i < 7; ++i) EXPECT_GE(up[i], 1.0);
    for (std::size_t i = 1; i < 3; ++i) EXPECT_GE(up[i], 2.0);
    const RatePlan plan = compute_rate_plan(with_budgets(t, up));
    EXPECT_NEAR(plan.lambda_exit_normalized[2], 1.0, 1e-12);
}

TEST(BudgetsForSplit, PaperSplitsRoundTrip) {
    const Topology t = cloud_edge_device_topology(1.0);
    for (const std::vector<double> &split : std::vector<std::vector<double>>{
             {0.05, 0.15, 0.80}, {0.10, 0.30, 0.60}, {0.20, 0.35, 0.45}, {0.45, 0.35, 0.20},
             {0.60, 0.30, 0.10}, {0.80, 0.15, 0.05}}) {
        const RatePlan plan = compute_rate_plan(with_budgets(t, budgets_for_split(t, split)));
        for (std::size_t e = 0; e < 3; ++e) EXPECT_NEAR(plan.lambda_exit_normalized[e], split[e], 1e-9);
    }
}

TEST(BudgetsForSplit, UnevenLeavesCanBeInfeasible) {
    Topology t = cloud_edge_device_topology(1.0);
    t.nodes[3].arrival_rate = 0.1;
    const std::vector<double> split = {0.8, 0.15, 0.05};
    EXPECT_EQ(testing::code_of([&] { budgets_for_split(t, split); }), ErrorCode::kInfeasibleSplit);
}

TEST(BudgetsForSplit, RejectsUnlayeredTopology) {
    Topology t = cloud_edge_device_topology(1.0);
    t.nodes[3].parent = "cloud";
    const std::vector<double> split = {0.5, 0.25, 0.25};
    EXPECT_EQ(testing::code_of([&] { budgets_for_split(t, split); }), ErrorCode::kInvalidArgument);
}

TEST(GridSearchP1, ChainMatchesSaturatingPlan) {
    const Topology t = testing::chain3(0.5, 0.25);
    const std::vector<double> losses = {1.0, 0.5, 0.2};
    const P1Solution best = grid_search_p1(t, losses, 0.05);
    EXPECT_NEAR(best.objective, 0.675, 1e-12);
    const RatePlan plan = compute_rate_plan(t);
    EXPECT_NEAR(p1_objective(t, plan.serve, losses), 0.675, 1e-12);
}

TEST(GridSearchP1, FlatLossesAndZeroBudgets) {
    const std::vector<double> flat = {0.7, 0.7, 0.7};
    EXPECT_NEAR(grid_search_p1(testing::chain3(0.5, 0.25), flat, 0.1).objective, 0.7, 1e-12);

    const std::vector<double> losses = {1.0, 0.5, 0.2};
    const P1Solution pinned = grid_search_p1(testing::chain3(0.0, 0.0), losses, 0.1);
    EXPECT_NEAR(pinned.objective, 1.0, 1e-12);
    EXPECT_EQ(pinned.fraction[2], 1.0);
}

TEST(GridSearchP1, RejectsLargeTreesAndBadSteps) {
    const std::vector<double> losses = {1.0, 0.5, 0.2};
    EXPECT_EQ(testing::code_of([&] { grid_search_p1(cloud_edge_device_topology(), losses, 0.1); }),
              ErrorCode::kInvalidArgument);
    EXPECT_EQ(testing::code_of([&] { grid_search_p1(testing::chain3(0.5, 0.25), losses, 0.3); }),
              ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace eefl
