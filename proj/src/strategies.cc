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

#include "eefl/strategies.h"

#include <algorithm>

#include <cmath>

#include "eefl/errors.h"

namespace eefl {
namespace {

ExitWeights normalized_or_throw(std::vector<double> raw, ErrorCode code, const char *what) {
    double total = 0.0;
    for (double x : raw) {
        if (!(x >= 0.0)) throw Error(ErrorCode::kInvalidArgument, std::string(what) + ": negative weight");
        total += x;
    }
    if (!(total > 0.0)) throw Error(code, std::string(what) + ": all weights are zero");
    for (double &x : raw) x /= total;
    return {std::move(raw), true};
}

}  // namespace

ExitWeights equal_weight(int num_exits) {
    if (num_exits < 1) throw Error(ErrorCode::kInvalidArgument, "equal_weight needs E >= 1");
    return {std::vector<double>(static_cast<std::size_t>(num_exits), 1.0 / num_exits), true};
}

ExitWeights flops_prop(std::span<const double> flops, FlopsWeighting mode) {
    if (flops.empty()) throw Error(ErrorCode::kInvalidArgument, "flops_prop needs at least one exit");
    std::vector<double> raw;
    raw.reserve(flops.size());
    for (double f : flops) {
        if (!(f > 0.0)) throw Error(ErrorCode::kInvalidArgument, "FLOPS must be positive");
        raw.push_back(mode == FlopsWeighting::kDirect ? f : 1.0 / f);
    }
    return normalized_or_throw(std::move(raw), ErrorCode::kAllZero, "flops_prop");
}

ExitWeights serving_rate_weights(const RatePlan &plan) {
    double total = 0.0;
    for (double x : plan.lambda_exit) total += x;
    if (!(total > 0.0)) throw Error(ErrorCode::kZeroTraffic, "no request reaches any exit");
    return {plan.lambda_exit_normalized, true};
}

ExitWeights weights_from_shares(std::span<const double> shares) {
    return normalized_or_throw(std::vector<double>(shares.begin(), shares.end()),
                               ErrorCode::kZeroTraffic, "shares");
}

ExitWeights gen_error_adjusted(const ExitWeights &lambda, std::span<const std::size_t> pool_sizes,
                               std::span<const double> flops) {
    if (pool_sizes.size() != lambda.size() || flops.size() != lambda.size()) {
        throw Error(ErrorCode::kInvalidArgument, "gen_error_adjusted: size mismatch");
    }
    std::vector<double> ratio(lambda.size());
    double top = 0.0;
    for (std::size_t e = 0; e < ratio.size(); ++e) {
        if (!(flops[e] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "FLOPS must be positive");
        ratio[e] = static_cast<double>(pool_sizes[e]) / flops[e];
        top = std::max(top, ratio[e]);
    }
    // Ratios are taken relative to the largest so uniform pools and FLOPS
    // leave lambda bit-identical before normalization.
    std::vector<double> raw(lambda.size(), 0.0);
    if (top > 0.0) {
        for (std::size_t e = 0; e < raw.size(); ++e) raw[e] = lambda[e] * (ratio[e] / top);
    }
    return normalized_or_throw(std::move(raw), ErrorCode::kAllZero, "gen_error_adjusted");
}

ExitWeights gen_error_adjusted(const RatePlan &plan, std::span<const std::size_t> pool_sizes,
                               std::span<const double> flops) {
    return gen_error_adjusted(ExitWeights{plan.lambda_exit, false}, pool_sizes, flops);
}

SamplingMatrix::SamplingMatrix(std::size_t num_clients, int num_exits)
    : num_clients_(num_clients),
      num_exits_(num_exits),
      probs_(num_clients * static_cast<std::size_t>(num_exits), 0.0) {}

void validate_sampling_matrix(const Topology &topology, const SamplingMatrix &p) {
    if (p.num_clients() != topology.nodes.size() || p.num_exits() != topology.num_exits) {
        throw Error(ErrorCode::kInvalidArgument, "sampling matrix shape does not match topology");
    }
    for (std::size_t c = 0; c < p.num_clients(); ++c) {
        const int own = topology.nodes[c].exit;
        double total = 0.0;
        for (int e = 1; e <= p.num_exits(); ++e) {
            const double v = p.prob(c, e);
            if (!(v >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative sampling probability");
            if (e > own && v != 0.0) {
                throw Error(ErrorCode::kInvalidArgument,
                            "client '" + topology.nodes[c].id + "' cannot train exit " + std::to_string(e));
            }
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            throw Error(ErrorCode::kInvalidArgument,
                        "row of client '" + topology.nodes[c].id + "' does not sum to 1");
        }
        if (!(p.prob(c, own) > 0.0)) {
            throw Error(ErrorCode::kZeroProbability,
                        "client '" + topology.nodes[c].id + "' never trains its own exit");
        }
    }
}

SamplingMatrix build_sampling_matrix(const Topology &topology, double k) {
    validate(topology);
    if (!(k >= 0.0)) throw Error(ErrorCode::kInvalidK, "k must be nonnegative");
    SamplingMatrix p(topology.nodes.size(), topology.num_exits);
    for (std::size_t c = 0; c < topology.nodes.size(); ++c) {
        const int own = topology.nodes[c].exit;
        const double own_prob = 1.0 - k * (own - 1);
        if (!(own_prob > 0.0)) {
            throw Error(ErrorCode::kInvalidK, "k = " + std::to_string(k) + " leaves client '" +
                                                  topology.nodes[c].id + "' no mass on its own exit");
        }
        for (int e = 1; e < own; ++e) p.set(c, e, k);
        p.set(c, own, own_prob);
    }
    return p;
}

ExitPools exit_pools(const Topology &topology, const SamplingMatrix &p) {
    validate_sampling_matrix(topology, p);
    const std::size_t num_exits = static_cast<std::size_t>(topology.num_exits);
    ExitPools pools;
    pools.sizes.assign(num_exits, 0);
    pools.clients.assign(num_exits, {});
    for (std::size_t c = 0; c < p.num_clients(); ++c) {
        for (int e = 1; e <= p.num_exits(); ++e) {
            if (p.prob(c, e) > 0.0) {
                pools.clients[static_cast<std::size_t>(e - 1)].push_back(c);
                pools.sizes[static_cast<std::size_t>(e - 1)] += topology.nodes[c].dataset_size;
            }
        }
    }
    for (std::size_t e = 0; e < num_exits; ++e) {
        if (pools.clients[e].empty() || pools.sizes[e] == 0) {
            throw Error(ErrorCode::kEmptyPool, "exit " + std::to_string(e + 1) + " has no training data");
        }
    }
    return pools;
}

StrategyKind parse_strategy(std::string_view name) {
    if (name == "equal") return StrategyKind::kEqual;
    if (name == "flops_prop") return StrategyKind::kFlopsProp;
    if (name == "serving_rate") return StrategyKind::kServingRate;
    if (name == "gen_error_adj") return StrategyKind::kGenErrorAdj;
    throw Error(ErrorCode::kConfigParse, "unknown strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::kEqual:
            return "equal";
        case StrategyKind::kFlopsProp:
            return "flops_prop";
        case StrategyKind::kServingRate:
            return "serving_rate";
        case StrategyKind::kGenErrorAdj:
            return "gen_error_adj";
    }
    return "unknown";
}

}  // namespace eefl
