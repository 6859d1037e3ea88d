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

#include <algorithm>
#include <cmath>
#include <string>

#include "eefl/errors.h"
#include "eefl/fedtrain.h"
#include "eefl/rng.h"

namespace eefl {

namespace {

void require_distribution(const ExitWeights &w, const char *which) {
    double total = 0.0;
    for (double x : w.weights) {
        if (!(x >= 0.0)) throw Error(ErrorCode::kNotNormalized, std::string(which) + " has a negative entry");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorCode::kNotNormalized, std::string(which) + " sums to " + std::to_string(total));
    }
}

}  // namespace

double tv_distance(const ExitWeights &a, const ExitWeights &b) {
    if (a.size() != b.size()) throw Error(ErrorCode::kNotNormalized, "weight vectors differ in length");
    require_distribution(a, "first weight vector");
    require_distribution(b, "second weight vector");
    double total = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) total += std::abs(a[e] - b[e]);
    return 0.5 * total;
}

double heterogeneity(const QuadraticTask &task, const ExitWeights &lambda, const ExitPools &pools) {
    const QuadraticOptimum opt = quadratic_minimizers(task, lambda, pools);
    double worst = 0.0;
    for (std::size_t e = 0; e < lambda.size(); ++e) {
        if (lambda[e] == 0.0) continue;
        for (std::size_t c : pools.clients[e]) {
            const int exit = static_cast<int>(e + 1);
            const double gap = task.client_loss(opt.w_star, c, exit) -
                               opt.pair_minima[c][static_cast<std::size_t>(exit - 1)];
            worst = std::max(worst, gap);
        }
    }
    return worst;
}

PairTable alpha_table(const ExitWeights &lambda, const ExitPools &pools,
                      std::span<const std::size_t> client_sizes, std::span<const int> client_exits,
                      double server_lr) {
    PairTable alpha;
    for (std::size_t c = 0; c < client_exits.size(); ++c) {
        std::vector<double> row;
        for (int e = 1; e <= client_exits[c]; ++e) {
            row.push_back(aggregation_coefficient(lambda, pools, client_sizes, c, e, server_lr));
        }
        alpha.push_back(std::move(row));
    }
    return alpha;
}

PairTable quadratic_sigmas(const QuadraticTask &task) {
    PairTable sigma;
    for (std::size_t c = 0; c < task.num_clients(); ++c) {
        std::vector<double> row;
        for (int e = 1; e <= task.client_exit(c); ++e) row.push_back(task.pair(c, e).sigma);
        sigma.push_back(std::move(row));
    }
    return sigma;
}

SecondMoments grad_second_moment(const PairTable &sigma, double smoothness, double radius) {
    const double drift = 2.0 * smoothness * radius;
    SecondMoments out;
    for (const auto &row : sigma) {
        std::vector<double> g;
        for (double s : row) {
            g.push_back(s * s + drift * drift);
            out.max = std::max(out.max, g.back());
        }
        out.per_pair.push_back(std::move(g));
    }
    return out;
}

double participation_variance_bound(const PairTable &alpha, const SamplingMatrix &p,
                                    const PairTable &moments, double eta, int local_steps) {
    double total = 0.0;
    for (std::size_t c = 0; c < alpha.size(); ++c) {
        for (std::size_t e = 0; e < alpha[c].size(); ++e) {
            const double a = alpha[c][e];
            if (a == 0.0) continue;
            const double pe = p.prob(c, static_cast<int>(e + 1));
            if (!(pe > 0.0)) {
                throw Error(ErrorCode::kZeroProbabilityWithWeight,
                            "pair (" + std::to_string(c) + ", " + std::to_string(e + 1) +
                                ") has weight but zero sampling probability");
            }
            total += a * a * (1.0 - pe) / pe * moments[c][e];
        }
    }
    const double j = static_cast<double>(local_steps);
    return 4.0 * eta * eta * j * j * total;
}

double bound_B(const BoundInputs &in, const SamplingMatrix &p, int local_steps) {
    double noise = 0.0;
    for (std::size_t c = 0; c < in.alpha.size(); ++c) {
        for (std::size_t e = 0; e < in.alpha[c].size(); ++e) {
            noise += in.alpha[c][e] * in.alpha[c][e] * in.sigma[c][e] * in.sigma[c][e];
        }
    }
    const double drift = static_cast<double>(local_steps - 1);
    // With eta = 1 the variance bound is exactly the participation term of B.
    const double participation = participation_variance_bound(in.alpha, p, in.moments.per_pair, 1.0, local_steps);
    return noise + 6.0 * in.smoothness * in.heterogeneity +
           8.0 * drift * drift * in.moments.max * in.moments.max + participation;
}

double opt_error_bound(double mu, double smoothness, double B, int rounds, int local_steps,
                       double initial_dist_sq, BoundDenominator denominator) {
    if (rounds < 1) throw Error(ErrorCode::kInvalidArgument, "rounds must be at least 1");
    const double kappa = smoothness / mu;
    const double g = schedule_gamma(mu, smoothness, local_steps);
    const double steps = denominator == BoundDenominator::kLocalSteps
                             ? static_cast<double>(local_steps) * rounds
                             : static_cast<double>(rounds);
    return kappa / (g + steps) * (2.0 * B / mu + mu * (g + 1.0) / 2.0 * initial_dist_sq);
}

double bias_bound(double loss_cap, const ExitWeights &trained, const ExitWeights &served) {
    return 2.0 * loss_cap * tv_distance(trained, served);
}

double empirical_bias(const QuadraticTask &task, const ExitWeights &trained,
                      const ExitWeights &served, double radius, double loss_cap,
                      std::size_t num_probes, std::uint64_t seed) {
    const auto d = static_cast<Eigen::Index>(task.dim());
    double worst = 0.0;
    for (std::size_t i = 0; i < num_probes; ++i) {
        Stream rng = Stream::keyed(seed, {tag(StreamTag::kProbe), i});
        Params w(d);
        for (Eigen::Index k = 0; k < d; ++k) w[k] = rng.normal();
        const double norm = w.norm();
        if (norm > 0.0) w *= radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / norm;
        const double gap = std::abs(task.population_objective(w, trained, loss_cap) -
                                    task.population_objective(w, served, loss_cap));
        worst = std::max(worst, gap);
    }
    return worst;
}

double gen_proxy(const ExitWeights &lambda, std::span<const double> flops,
                 std::span<const std::size_t> pool_sizes) {
    if (flops.size() != lambda.size() || pool_sizes.size() != lambda.size()) {
        throw Error(ErrorCode::kInvalidArgument, "one FLOPS value and pool size per exit is required");
    }
    double total = 0.0;
    for (std::size_t e = 0; e < lambda.size(); ++e) {
        if (lambda[e] == 0.0) continue;
        if (pool_sizes[e] == 0) {
            throw Error(ErrorCode::kEmptyPool, "exit " + std::to_string(e + 1) + " has weight but no samples");
        }
        total += lambda[e] * std::sqrt(flops[e] / static_cast<double>(pool_sizes[e]));
    }
    return total;
}

double empirical_opt_error(std::span<const double> final_objectives, double f_star) {
    if (final_objectives.empty()) throw Error(ErrorCode::kInvalidArgument, "no runs to average");
    double total = 0.0;
    for (double f : final_objectives) total += f - f_star;
    return total / static_cast<double>(final_objectives.size());
}

PairTable estimate_sigmas(const Task &task, std::span<const Params> points, std::size_t batch_size,
                          std::size_t num_batches, std::uint64_t seed) {
    PairTable sigma;
    Eigen::VectorXd full(static_cast<Eigen::Index>(task.dim()));
    Eigen::VectorXd batch(static_cast<Eigen::Index>(task.dim()));
    for (std::size_t c = 0; c < task.num_clients(); ++c) {
        std::vector<double> row(static_cast<std::size_t>(task.client_exit(c)), 0.0);
        if (task.client_size(c) > 0) {
            for (int e = 1; e <= task.client_exit(c); ++e) {
                for (std::size_t i = 0; i < points.size(); ++i) {
                    task.full_gradient(points[i], c, e, full);
                    for (std::size_t b = 0; b < num_batches; ++b) {
                        Stream rng = Stream::keyed(seed, {tag(StreamTag::kProbe), c,
                                                          static_cast<std::uint64_t>(e), i, b});
                        task.stochastic_gradient(points[i], c, e, batch_size, rng, batch);
                        row[static_cast<std::size_t>(e - 1)] =
                            std::max(row[static_cast<std::size_t>(e - 1)], (batch - full).norm());
                    }
                }
            }
        }
        sigma.push_back(std::move(row));
    }
    return sigma;
}

}  // namespace eefl
