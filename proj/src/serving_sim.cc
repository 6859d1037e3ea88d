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

#include "eefl/serving_sim.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "eefl/errors.h"
#include "eefl/rng.h"

namespace eefl {

double softmax_entropy(const Eigen::Ref<const Eigen::VectorXd> &logits) {
    const double m = logits.maxCoeff();
    const Eigen::ArrayXd shifted = logits.array() - m;
    const double z = shifted.exp().sum();
    const double log_z = std::log(z);
    double h = 0.0;
    for (Eigen::Index k = 0; k < shifted.size(); ++k) {
        const double log_p = shifted[k] - log_z;
        h -= std::exp(log_p) * log_p;
    }
    return std::max(h, 0.0);
}

std::vector<std::size_t> assign_arrivals(const Topology &topology, std::size_t n) {
    double total = 0.0;
    for (const NodeSpec &node : topology.nodes) total += node.arrival_rate;
    if (!(total > 0.0)) throw Error(ErrorCode::kZeroTraffic, "no exogenous arrivals");
    const std::size_t count = topology.nodes.size();
    std::vector<std::size_t> out(count);
    std::vector<double> remainder(count);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const double exact = static_cast<double>(n) * topology.nodes[i].arrival_rate / total;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        remainder[i] = exact - std::floor(exact);
        assigned += out[i];
    }
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[order[k % count]];
    return out;
}

ServingOutcome simulate_serving(const Topology &topology, const RatePlan &plan,
                                const MlpNetwork &network, const Params &w, const Dataset &test,
                                const ServingOptions &options) {
    const TreeIndex tree = validate(topology);
    if (test.size() == 0) throw Error(ErrorCode::kEmptyDataset, "empty test stream");
    if (plan.fraction.size() != topology.nodes.size()) {
        throw Error(ErrorCode::kInvalidArgument, "rate plan does not match the topology");
    }
    const std::size_t n = test.size();
    const auto num_exits = static_cast<std::size_t>(topology.num_exits);

    // Per-exit entropies, correctness and losses for every test sample.
    std::vector<std::vector<double>> entropy(num_exits), loss(num_exits);
    std::vector<std::vector<char>> correct(num_exits);
    ServingOutcome out;
    out.iid_accuracy.assign(num_exits, 0.0);
    for (std::size_t e = 0; e < num_exits; ++e) {
        const Eigen::MatrixXd logits = network.logits(w, test.features, static_cast<int>(e + 1));
        entropy[e].resize(n);
        loss[e].resize(n);
        correct[e].resize(n);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto col = logits.col(static_cast<Eigen::Index>(i));
            entropy[e][i] = softmax_entropy(col);
            const double m = col.maxCoeff();
            const double lse = m + std::log((col.array() - m).exp().sum());
            loss[e][i] = lse - col[test.labels[i]];
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < col.size(); ++k) {
                if (col[k] > col[best]) best = k;
            }
            correct[e][i] = best == test.labels[i];
            hits += static_cast<std::size_t>(correct[e][i]);
        }
        out.iid_accuracy[e] = static_cast<double>(hits) / static_cast<double>(n);
    }

    const std::size_t count = topology.nodes.size();
    out.arrivals = assign_arrivals(topology, n);
    out.inflow.assign(count, 0);
    out.served.assign(count, {});
    std::vector<std::vector<std::size_t>> pool(count);
    std::size_t next = 0;
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t k = 0; k < out.arrivals[i]; ++k) pool[i].push_back(next++);
    }

    for (std::size_t i : tree.post_order) {
        std::vector<std::size_t> &incoming = pool[i];
        out.inflow[i] = incoming.size();
        const auto e = static_cast<std::size_t>(topology.nodes[i].exit - 1);
        if (options.ranking == Ranking::kEntropy) {
            std::stable_sort(incoming.begin(), incoming.end(), [&](std::size_t a, std::size_t b) {
                if (entropy[e][a] != entropy[e][b]) return entropy[e][a] < entropy[e][b];
                return a < b;
            });
        } else {
            std::sort(incoming.begin(), incoming.end());
            Stream rng = Stream::keyed(options.seed, {tag(StreamTag::kServing), i});
            for (std::size_t k = incoming.size(); k > 1; --k) std::swap(incoming[k - 1], incoming[rng.index(k)]);
        }
        std::size_t keep = incoming.size();
        if (tree.parent[i]) {
            const double target = std::nearbyint(plan.fraction[i] * static_cast<double>(incoming.size()));
            keep = static_cast<std::size_t>(std::clamp(target, 0.0, static_cast<double>(incoming.size())));
            std::vector<std::size_t> &up = pool[*tree.parent[i]];
            up.insert(up.end(), incoming.begin() + static_cast<std::ptrdiff_t>(keep), incoming.end());
        }
        out.served[i].assign(incoming.begin(), incoming.begin() + static_cast<std::ptrdiff_t>(keep));
    }

    out.exit_count.assign(num_exits, 0);
    out.exit_accuracy.assign(num_exits, 0.0);
    out.exit_loss.assign(num_exits, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        const auto e = static_cast<std::size_t>(topology.nodes[i].exit - 1);
        for (std::size_t s : out.served[i]) {
            ++out.exit_count[e];
            out.exit_accuracy[e] += correct[e][s];
            out.exit_loss[e] += loss[e][s];
        }
    }
    out.iid_gap.assign(num_exits, 0.0);
    std::vector<double> active_acc, active_loss, active_rate;
    for (std::size_t e = 0; e < num_exits; ++e) {
        if (out.exit_count[e] == 0) continue;
        out.exit_accuracy[e] /= static_cast<double>(out.exit_count[e]);
        out.exit_loss[e] /= static_cast<double>(out.exit_count[e]);
        out.iid_gap[e] = out.exit_accuracy[e] - out.iid_accuracy[e];
        active_acc.push_back(out.exit_accuracy[e]);
        active_loss.push_back(out.exit_loss[e]);
        active_rate.push_back(plan.lambda_exit[e]);
    }
    double rate_total = 0.0;
    for (double r : active_rate) rate_total += r;
    if (rate_total > 0.0) {
        out.system_accuracy = weighted_quality(active_acc, active_rate);
        out.system_loss = weighted_quality(active_loss, active_rate);
    } else {
        // The plan routes nothing to the exits that served samples.
        std::vector<double> counts;
        for (std::size_t e = 0; e < num_exits; ++e) {
            if (out.exit_count[e] > 0) counts.push_back(static_cast<double>(out.exit_count[e]));
        }
        out.system_accuracy = weighted_quality(active_acc, counts);
        out.system_loss = weighted_quality(active_loss, counts);
    }
    return out;
}

double weighted_quality(std::span<const double> metrics, std::span<const double> lambda) {
    if (metrics.size() != lambda.size()) {
        throw Error(ErrorCode::kInvalidArgument, "one rate per metric is required");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t e = 0; e < metrics.size(); ++e) {
        num += metrics[e] * lambda[e];
        den += lambda[e];
    }
    if (!(den > 0.0)) throw Error(ErrorCode::kInvalidArgument, "serving rates sum to zero");
    return num / den;
}

}  // namespace eefl
