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

#include "eefl/fedtrain.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <thread>

#include "eefl/errors.h"

namespace eefl {

LrSchedule parse_lr_schedule(std::string_view name) {
    if (name == "theory") return LrSchedule::kTheory;
    if (name == "constant") return LrSchedule::kConstant;
    if (name == "cosine") return LrSchedule::kCosine;
    throw Error(ErrorCode::kConfigParse, "unknown lr schedule '" + std::string(name) + "'");
}

std::string_view lr_schedule_name(LrSchedule schedule) {
    switch (schedule) {
        case LrSchedule::kTheory:
            return "theory";
        case LrSchedule::kConstant:
            return "constant";
        case LrSchedule::kCosine:
            return "cosine";
    }
    return "theory";
}

void validate(const TrainConfig &cfg) {
    auto fail = [](const std::string &what) { throw Error(ErrorCode::kInvalidArgument, what); };
    if (cfg.rounds < 1) fail("rounds must be at least 1");
    if (cfg.local_steps < 1) fail("local_steps must be at least 1");
    if (cfg.batch_size < 1) fail("batch_size must be at least 1");
    if (!(cfg.server_lr > 0.0)) fail("server_lr must be positive");
    if (!(cfg.projection_radius > 0.0)) fail("projection_radius must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail("momentum must lie in [0, 1)");
    if (cfg.threads < 1) fail("threads must be at least 1");
    if (cfg.lr_schedule == LrSchedule::kTheory) {
        if (!(cfg.mu > 0.0) || !(cfg.smoothness >= cfg.mu)) fail("theory schedule needs 0 < mu <= L");
        if (cfg.gamma && !(*cfg.gamma >= 0.0)) fail("gamma must be nonnegative");
    } else if (!(cfg.base_lr > 0.0)) {
        fail("base_lr must be positive");
    }
}

double schedule_gamma(double mu, double smoothness, int local_steps) {
    return std::max(8.0 * smoothness / mu, static_cast<double>(local_steps)) - 1.0;
}

double learning_rate(const TrainConfig &cfg, int round, int step) {
    const double tau = static_cast<double>(round - 1) * cfg.local_steps + step;
    switch (cfg.lr_schedule) {
        case LrSchedule::kTheory: {
            const double g = cfg.gamma.value_or(schedule_gamma(cfg.mu, cfg.smoothness, cfg.local_steps));
            return 2.0 / (cfg.mu * (g + tau + 1.0));
        }
        case LrSchedule::kConstant:
            return cfg.base_lr;
        case LrSchedule::kCosine: {
            const double total = static_cast<double>(cfg.rounds) * cfg.local_steps;
            return 0.5 * cfg.base_lr * (1.0 + std::cos(std::numbers::pi * tau / total));
        }
    }
    return cfg.base_lr;
}

RoundSample sample_round(const SamplingMatrix &p, std::uint64_t seed, int round) {
    RoundSample sample;
    sample.exits.reserve(p.num_clients());
    for (std::size_t c = 0; c < p.num_clients(); ++c) {
        Stream rng = Stream::keyed(seed, {tag(StreamTag::kRoundSample), static_cast<std::uint64_t>(round), c});
        const double u = rng.uniform();
        double cumulative = 0.0;
        int chosen = 0;
        for (int e = 1; e <= p.num_exits(); ++e) {
            const double pe = p.prob(c, e);
            if (pe <= 0.0) continue;
            chosen = e;
            cumulative += pe;
            if (u < cumulative) break;
        }
        if (chosen == 0) throw Error(ErrorCode::kZeroProbability, "client row has no positive entry");
        sample.exits.push_back(chosen);
    }
    return sample;
}

Params local_update(const Task &task, const Params &w_t, std::size_t client, int exit,
                    const TrainConfig &cfg, int round, Stream &rng) {
    if (client >= task.num_clients() || exit < 1 || exit > task.client_exit(client)) {
        throw Error(ErrorCode::kInvalidArgument, "client " + std::to_string(client) +
                                                     " cannot train exit " + std::to_string(exit));
    }
    if (task.client_size(client) == 0) {
        throw Error(ErrorCode::kEmptyClientDataset, "client " + std::to_string(client) + " has no samples");
    }
    Params w = w_t;
    Eigen::VectorXd grad(w.size());
    Eigen::VectorXd velocity;
    if (cfg.momentum > 0.0) velocity = Eigen::VectorXd::Zero(w.size());
    for (int j = 0; j < cfg.local_steps; ++j) {
        task.stochastic_gradient(w, client, exit, cfg.batch_size, rng, grad);
        const double eta = learning_rate(cfg, round, j);
        if (cfg.momentum > 0.0) {
            velocity = cfg.momentum * velocity + grad;
            w -= eta * velocity;
        } else {
            w -= eta * grad;
        }
    }
    return w;
}

double aggregation_coefficient(const ExitWeights &lambda, const ExitPools &pools,
                               std::span<const std::size_t> client_sizes, std::size_t client,
                               int exit, double server_lr) {
    const auto e = static_cast<std::size_t>(exit - 1);
    const auto &members = pools.clients[e];
    if (!std::binary_search(members.begin(), members.end(), client)) return 0.0;
    return server_lr * lambda[e] * static_cast<double>(client_sizes[client]) /
           static_cast<double>(pools.sizes[e]);
}

Params aggregate_unprojected(const Params &w_t, std::span<const ClientUpdate> updates,
                             const ExitWeights &lambda, const SamplingMatrix &p,
                             const ExitPools &pools, std::span<const std::size_t> client_sizes,
                             double server_lr) {
    std::vector<std::size_t> order(updates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return updates[a].client < updates[b].client; });
    Params w = w_t;
    for (std::size_t i : order) {
        const ClientUpdate &u = updates[i];
        const double pe = p.prob(u.client, u.exit);
        if (!(pe > 0.0)) {
            throw Error(ErrorCode::kZeroProbability, "update from client " + std::to_string(u.client) +
                                                         " on exit " + std::to_string(u.exit) +
                                                         " has zero sampling probability");
        }
        const double coeff = aggregation_coefficient(lambda, pools, client_sizes, u.client, u.exit, server_lr);
        if (coeff == 0.0) continue;
        w += (coeff / pe) * (u.model - w_t);
    }
    return w;
}

Params project_to_ball(Params w, double radius) {
    if (!std::isfinite(radius)) return w;
    const double norm = w.norm();
    if (norm > radius) w *= radius / norm;
    return w;
}

Params aggregate(const Params &w_t, std::span<const ClientUpdate> updates, const ExitWeights &lambda,
                 const SamplingMatrix &p, const ExitPools &pools,
                 std::span<const std::size_t> client_sizes, double server_lr, double radius) {
    return project_to_ball(aggregate_unprojected(w_t, updates, lambda, p, pools, client_sizes, server_lr),
                           radius);
}

namespace {

void check_task_matches(const Topology &topology, const Task &task) {
    if (task.num_clients() != topology.nodes.size()) {
        throw Error(ErrorCode::kInvalidArgument, "task and topology disagree on the client count");
    }
    if (task.num_exits() != topology.num_exits) {
        throw Error(ErrorCode::kInvalidArgument, "task and topology disagree on the exit count");
    }
    for (std::size_t c = 0; c < task.num_clients(); ++c) {
        if (task.client_size(c) != topology.nodes[c].dataset_size ||
            task.client_exit(c) != topology.nodes[c].exit) {
            throw Error(ErrorCode::kInvalidArgument,
                        "task client " + std::to_string(c) + " does not match node '" + topology.nodes[c].id + "'");
        }
    }
}

}  // namespace

RunResult run(const Topology &topology, const Task &task, const ExitWeights &lambda,
              const SamplingMatrix &p, const TrainConfig &cfg) {
    validate(cfg);
    validate(topology);
    check_task_matches(topology, task);
    validate_sampling_matrix(topology, p);
    if (lambda.size() != static_cast<std::size_t>(topology.num_exits)) {
        throw Error(ErrorCode::kInvalidArgument, "one aggregation weight per exit is required");
    }
    const ExitPools pools = exit_pools(topology, p);
    std::vector<std::size_t> sizes;
    for (const NodeSpec &node : topology.nodes) sizes.push_back(node.dataset_size);

    RunResult result;
    result.initial_model = project_to_ball(task.initial_params(cfg.seed), cfg.projection_radius);
    Params w = result.initial_model;
    result.trajectory.objective.push_back(weighted_objective(task, w, lambda, pools));
    result.trajectory.norm.push_back(w.norm());

    const std::size_t n = task.num_clients();
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), n);
    std::vector<ClientUpdate> updates(n);
    for (int t = 1; t <= cfg.rounds; ++t) {
        const RoundSample sample = sample_round(p, cfg.seed, t);
        auto work = [&](std::size_t c) {
            Stream rng = Stream::keyed(cfg.seed, {tag(StreamTag::kLocalUpdate), static_cast<std::uint64_t>(t), c});
            updates[c] = ClientUpdate{c, sample.exits[c], local_update(task, w, c, sample.exits[c], cfg, t, rng)};
        };
        if (workers <= 1) {
            for (std::size_t c = 0; c < n; ++c) work(c);
        } else {
            std::vector<std::exception_ptr> errors(workers);
            std::vector<std::thread> pool;
            for (std::size_t k = 0; k < workers; ++k) {
                pool.emplace_back([&, k] {
                    try {
                        for (std::size_t c = k; c < n; c += workers) work(c);
                    } catch (...) {
                        errors[k] = std::current_exception();
                    }
                });
            }
            for (std::thread &th : pool) th.join();
            for (const auto &err : errors) {
                if (err) std::rethrow_exception(err);
            }
        }
        w = aggregate(w, updates, lambda, p, pools, sizes, cfg.server_lr, cfg.projection_radius);
        result.trajectory.objective.push_back(weighted_objective(task, w, lambda, pools));
        result.trajectory.norm.push_back(w.norm());
    }
    result.final_model = std::move(w);
    return result;
}

}  // namespace eefl
