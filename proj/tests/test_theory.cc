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

#include "eefl/theory.h"

#include <gtest/gtest.h>

#include <cmath>

#include "eefl/fedtrain.h"
#include "test_util.h"

namespace eefl {
namespace {

using testing::code_of;

Topology seven_node(std::size_t device, std::size_t edge, std::size_t cloud) {
    Topology t = cloud_edge_device_topology();
    for (NodeSpec &n : t.nodes) n.dataset_size = n.exit == 1 ? device : n.exit == 2 ? edge : cloud;
    return t;
}

QuadraticTask scalar_clients(std::vector<double> centers, double curvature = 1.0) {
    std::vector<int> exits(centers.size(), 1);
    std::vector<std::size_t> sizes(centers.size(), 10);
    std::vector<std::vector<QuadraticPair>> pairs;
    for (double a : centers) {
        pairs.push_back({{Eigen::MatrixXd::Constant(1, 1, curvature), Eigen::VectorXd::Constant(1, a), 0.0}});
    }
    return QuadraticTask(exits, sizes, pairs);
}

ExitPools single_exit_pool(std::size_t n) {
    ExitPools pools{{10 * n}, {{}}};
    for (std::size_t c = 0; c < n; ++c) pools.clients[0].push_back(c);
    return pools;
}

ExitWeights random_simplex(Stream &rng, std::size_t n) {
    std::vector<double> w(n);
    double total = 0.0;
    for (double &x : w) total += (x = -std::log(1.0 - rng.uniform()));
    for (double &x : w) x /= total;
    return {w};
}

// ---------------------------------------------------------------------------
// Total variation

TEST(TvDistance, Examples) {
    const ExitWeights third{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    EXPECT_EQ(tv_distance(third, third), 0.0);
    EXPECT_NEAR(tv_distance(third, ExitWeights{{0.80, 0.15, 0.05}}), 0.4667, 1e-4);
    EXPECT_DOUBLE_EQ(tv_distance(ExitWeights{{1.0, 0.0}}, ExitWeights{{0.0, 1.0}}), 1.0);
    EXPECT_EQ(code_of([] { tv_distance(ExitWeights{{0.5, 0.6}}, ExitWeights{{0.5, 0.5}}); }),
              ErrorCode::kNotNormalized);
}

TEST(TvDistance, IsAMetricOnTheSimplex) {
    Stream rng(4);
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = 1 + rng.index(5);
        const ExitWeights a = random_simplex(rng, n), b = random_simplex(rng, n), c = random_simplex(rng, n);
        EXPECT_EQ(tv_distance(a, b), tv_distance(b, a));
        EXPECT_LE(tv_distance(a, c), tv_distance(a, b) + tv_distance(b, c) + 1e-15);
        EXPECT_EQ(tv_distance(a, a), 0.0);
        if (a.weights != b.weights) EXPECT_GT(tv_distance(a, b), 0.0);
        EXPECT_LE(tv_distance(a, b), 1.0 + 1e-15);
    }
}

// ---------------------------------------------------------------------------
// Heterogeneity and second moments

TEST(Heterogeneity, Examples) {
    EXPECT_EQ(heterogeneity(scalar_clients({0.4, 0.4, 0.4}), ExitWeights{{1.0}}, single_exit_pool(3)), 0.0);
    EXPECT_NEAR(heterogeneity(scalar_clients({0.0, 2.0}), ExitWeights{{1.0}}, single_exit_pool(2)), 0.5, 1e-12);
    const double base = heterogeneity(scalar_clients({0.0, 0.5, 2.0}), ExitWeights{{1.0}}, single_exit_pool(3));
    const double doubled =
        heterogeneity(scalar_clients({0.0, 0.5, 2.0}, 2.0), ExitWeights{{1.0}}, single_exit_pool(3));
    EXPECT_NEAR(doubled, 2.0 * base, 1e-12);
}

TEST(SecondMoment, Examples) {
    EXPECT_DOUBLE_EQ(grad_second_moment({{0.0}}, 1.0, 0.5).max, 1.0);
    EXPECT_DOUBLE_EQ(grad_second_moment({{3.0}}, 0.0, 0.5).max, 9.0);
    const SecondMoments m = grad_second_moment({{0.1, 0.2}, {0.3}}, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(m.per_pair[0][1], 0.04 + 4.0);
    EXPECT_DOUBLE_EQ(m.max, 0.09 + 4.0);
}

TEST(SecondMoment, BoundsNoisyGradientsOnTheBall) {
    const Topology t = seven_node(10, 10, 10);
    const QuadraticTask task = QuadraticTask::generate(QuadraticSpec{}, t, 6);
    const double radius = 1.0;
    const SecondMoments m = grad_second_moment(quadratic_sigmas(task), task.smoothness(), radius);
    Stream rng(2);
    Eigen::VectorXd g(task.dim());
    for (std::size_t c = 0; c < task.num_clients(); ++c) {
        for (int e = 1; e <= task.client_exit(c); ++e) {
            double total = 0.0;
            const int n = 2000;
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd w(task.dim());
                for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = rng.normal();
                w *= radius * rng.uniform() / w.norm();
                task.stochastic_gradient(w, c, e, 1, rng, g);
                total += g.squaredNorm();
            }
            EXPECT_LE(total / n, m.per_pair[c][static_cast<std::size_t>(e - 1)]);
        }
    }
}

// ---------------------------------------------------------------------------
// B and the optimization bound

SamplingMatrix one_pair_matrix(double prob) {
    SamplingMatrix p(1, 1);
    p.set(0, 1, prob);
    return p;
}

TEST(BoundB, Examples) {
    BoundInputs zero{{{1.0}}, {{0.0}}, grad_second_moment({{0.0}}, 0.0, 1.0), 1.0, 0.0};
    EXPECT_EQ(bound_B(zero, one_pair_matrix(1.0), 1), 0.0);

    BoundInputs nine{{{1.0}}, {{1.0}}, SecondMoments{{{1.0}}, 1.0}, 1.0, 0.0};
    EXPECT_DOUBLE_EQ(bound_B(nine, one_pair_matrix(1.0), 2), 9.0);
}

TEST(BoundB, MonotoneInEveryInput) {
    const Topology t = seven_node(10, 20, 30);
    const QuadraticTask task = QuadraticTask::generate(QuadraticSpec{}, t, 3);
    const std::vector<std::size_t> sizes{30, 20, 20, 10, 10, 10, 10};
    const std::vector<int> exits{3, 2, 2, 1, 1, 1, 1};
    const ExitWeights lambda{{0.3, 0.3, 0.4}};
    double previous = -1.0;
    const SamplingMatrix p = build_sampling_matrix(t, 0.2);
    const ExitPools pools = exit_pools(t, p);
    const PairTable alpha = alpha_table(lambda, pools, sizes, exits, 1.0);
    const PairTable sigma = quadratic_sigmas(task);
    auto B = [&](const SamplingMatrix &pm, const PairTable &s, int J, double gamma) {
        return bound_B({alpha, s, grad_second_moment(s, task.smoothness(), 1.0), task.smoothness(), gamma}, pm, J);
    };
    const double base = B(p, sigma, 3, 0.1);
    for (std::size_t c = 0; c < 7; ++c) {
        for (int e = 1; e <= exits[c]; ++e) {
            SamplingMatrix lower = p;
            lower.set(c, e, p.prob(c, e) * 0.5);
            const double a = alpha[c][static_cast<std::size_t>(e - 1)];
            if (a > 0.0) EXPECT_GT(B(lower, sigma, 3, 0.1), base);
            PairTable noisier = sigma;
            noisier[c][static_cast<std::size_t>(e - 1)] += 0.1;
            EXPECT_GE(B(p, noisier, 3, 0.1), base);
        }
    }
    for (int J = 1; J <= 6; ++J) {
        const double b = B(p, sigma, J, 0.1);
        EXPECT_GE(b, previous);
        previous = b;
    }
    EXPECT_GT(B(p, sigma, 3, 0.2), base);

    SamplingMatrix dead = p;
    dead.set(0, 1, 0.0);
    EXPECT_EQ(code_of([&] { B(dead, sigma, 3, 0.1); }), ErrorCode::kZeroProbabilityWithWeight);
}

TEST(OptBound, Examples) {
    EXPECT_DOUBLE_EQ(opt_error_bound(1.0, 1.0, 9.0, 1, 4, 1.0), 2.0);
    EXPECT_EQ(opt_error_bound(1.0, 1.0, 0.0, 10, 4, 0.0), 0.0);
    // gamma = 7 with J = 1: T = 9 gives 16, T = 25 gives 32.
    EXPECT_DOUBLE_EQ(opt_error_bound(1.0, 1.0, 5.0, 25, 1, 2.0), 0.5 * opt_error_bound(1.0, 1.0, 5.0, 9, 1, 2.0));
    // The rounds-only denominator: gamma + T = 7 + 1 with J = 4.
    EXPECT_DOUBLE_EQ(opt_error_bound(1.0, 1.0, 9.0, 1, 4, 1.0, BoundDenominator::kRounds), 22.0 / 8.0);
    EXPECT_EQ(code_of([] { opt_error_bound(1.0, 1.0, 1.0, 0, 1, 1.0); }), ErrorCode::kInvalidArgument);
}

TEST(VarianceBound, ScalesWithEtaSquaredAndVanishesAtFullParticipation) {
    const PairTable alpha{{0.5}};
    const PairTable g{{2.0}};
    EXPECT_EQ(participation_variance_bound(alpha, one_pair_matrix(1.0), g, 0.3, 4), 0.0);
    // 4 eta^2 J^2 alpha^2 (1-p)/p G = 4 * 0.09 * 16 * 0.25 * 1 * 2.
    EXPECT_NEAR(participation_variance_bound(alpha, one_pair_matrix(0.5), g, 0.3, 4), 2.88, 1e-12);
}

// ---------------------------------------------------------------------------
// Bias

TEST(Bias, Examples) {
    const ExitWeights third{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    const ExitWeights served{{0.80, 0.15, 0.05}};
    EXPECT_EQ(bias_bound(5.0, third, third), 0.0);
    EXPECT_NEAR(bias_bound(1.0, third, served), 0.9333, 1e-4);
    const QuadraticTask task = QuadraticTask::generate(QuadraticSpec{}, seven_node(10, 10, 10), 1);
    EXPECT_EQ(empirical_bias(task, third, third, 1.0, task.loss_cap(1.0), 100, 1), 0.0);
}

TEST(Bias, EmpiricalNeverExceedsTheBound) {
    const Topology t = seven_node(10, 20, 30);
    Stream rng(8);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        QuadraticSpec spec;
        spec.center_radius = 2.0;
        const QuadraticTask task = QuadraticTask::generate(spec, t, seed);
        for (double radius : {0.5, 1.5}) {
            const double cap = task.loss_cap(radius);
            for (int k = 0; k < 4; ++k) {
                const ExitWeights a = random_simplex(rng, 3), b = random_simplex(rng, 3);
                const double emp = empirical_bias(task, a, b, radius, cap, 1000, seed);
                EXPECT_LE(emp, bias_bound(cap, a, b));
                EXPECT_GT(emp, 0.0);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Generalization proxy and empirical optimization error

TEST(GenProxy, Examples) {
    const ExitWeights third{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    const std::vector<double> ones{1, 1, 1};
    const std::vector<std::size_t> unit{1, 1, 1};
    EXPECT_DOUBLE_EQ(gen_proxy(third, ones, unit), 1.0);
    const std::vector<double> flops{78316160, 694682880, 1770787840};
    const std::vector<std::size_t> pools{400, 200, 100};
    const std::vector<std::size_t> doubled{800, 400, 200};
    // (sqrt(195790.4) + sqrt(3473414.4) + sqrt(17707878.4)) / 3, evaluated independently.
    EXPECT_NEAR(gen_proxy(third, flops, pools), 2171.4216472880, 1e-9);
    EXPECT_NEAR(gen_proxy(third, flops, doubled), gen_proxy(third, flops, pools) / std::sqrt(2.0), 1e-9);
    const std::vector<std::size_t> empty{0, 200, 100};
    EXPECT_EQ(code_of([&] { gen_proxy(third, flops, empty); }), ErrorCode::kEmptyPool);
    EXPECT_NO_THROW(gen_proxy(ExitWeights{{0.0, 0.5, 0.5}}, flops, empty));
}

TEST(EmpiricalOptError, ZeroAtTheOptimumPositiveElsewhere) {
    const Topology t = seven_node(10, 20, 30);
    const QuadraticTask task = QuadraticTask::generate(QuadraticSpec{}, t, 2);
    const ExitPools pools = exit_pools(t, build_sampling_matrix(t, 0.1));
    const ExitWeights lambda = equal_weight(3);
    const QuadraticOptimum opt = quadratic_minimizers(task, lambda, pools);
    const std::vector<double> at_opt{weighted_objective(task, opt.w_star, lambda, pools)};
    EXPECT_NEAR(empirical_opt_error(at_opt, opt.f_star), 0.0, 1e-14);
    const Params off = opt.w_star + Eigen::VectorXd::Constant(static_cast<Eigen::Index>(task.dim()), 0.01);
    const std::vector<double> values{weighted_objective(task, off, lambda, pools), at_opt[0]};
    EXPECT_GT(empirical_opt_error(values, opt.f_star), 0.0);
}

TEST(EstimateSigmas, RecoversQuadraticNoiseScale) {
    const Topology t = seven_node(10, 10, 10);
    const QuadraticTask task = QuadraticTask::generate(QuadraticSpec{}, t, 5);
    const std::vector<Params> points{task.initial_params(1), task.initial_params(2)};
    const PairTable est = estimate_sigmas(task, points, 1, 200, 3);
    const PairTable truth = quadratic_sigmas(task);
    for (std::size_t c = 0; c < truth.size(); ++c) {
        for (std::size_t e = 0; e < truth[c].size(); ++e) {
            // A max over 400 draws of a chi-like norm sits above sigma but
            // within a small multiple of it.
            EXPECT_GE(est[c][e], truth[c][e]);
            EXPECT_LE(est[c][e], 3.0 * truth[c][e] + 1e-12);
        }
    }
}

}  // namespace
}  // namespace eefl
