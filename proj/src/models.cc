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

#include "eefl/models.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eefl/errors.h"

namespace eefl {

// ---------------------------------------------------------------------------
// SegmentMap

SegmentMap::SegmentMap(std::vector<Range> blocks, std::vector<Range> heads)
    : blocks_(std::move(blocks)), heads_(std::move(heads)) {
    if (blocks_.empty() || blocks_.size() != heads_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "segment map needs one head per block");
    }
    std::vector<Range> all;
    for (const Range &r : blocks_) all.push_back(r);
    for (const Range &r : heads_) all.push_back(r);
    for (const Range &r : all) {
        if (r.end < r.begin) throw Error(ErrorCode::kInvalidArgument, "inverted segment range");
    }
    std::erase_if(all, [](const Range &r) { return r.size() == 0; });
    std::sort(all.begin(), all.end(), [](const Range &a, const Range &b) { return a.begin < b.begin; });
    std::size_t cursor = 0;
    for (const Range &r : all) {
        if (r.begin != cursor) {
            throw Error(ErrorCode::kInvalidArgument, "segments must be disjoint and contiguous");
        }
        cursor = r.end;
    }
    dim_ = cursor;
}

std::vector<Range> SegmentMap::active_ranges(int exit) const {
    if (exit < 1 || exit > num_exits()) {
        throw Error(ErrorCode::kInvalidArgument, "exit " + std::to_string(exit) + " out of range");
    }
    std::vector<Range> out(blocks_.begin(), blocks_.begin() + exit);
    out.push_back(head(exit));
    return out;
}

std::vector<bool> SegmentMap::active_mask(int exit) const {
    std::vector<bool> mask(dim_, false);
    for (const Range &r : active_ranges(exit)) {
        for (std::size_t i = r.begin; i < r.end; ++i) mask[i] = true;
    }
    return mask;
}

double weighted_objective(const Task &task, const Params &w, const ExitWeights &weights,
                          const ExitPools &pools) {
    double weight_total = 0.0;
    for (double x : weights.weights) weight_total += x;
    if (!(weight_total > 0.0)) throw Error(ErrorCode::kAllZero, "objective weights are all zero");
    double total = 0.0;
    for (std::size_t e = 0; e < weights.size(); ++e) {
        if (weights[e] == 0.0) continue;
        const double pool = static_cast<double>(pools.sizes[e]);
        double exit_total = 0.0;
        for (std::size_t c : pools.clients[e]) {
            exit_total += static_cast<double>(task.client_size(c)) / pool *
                          task.client_loss(w, c, static_cast<int>(e + 1));
        }
        total += weights[e] * exit_total;
    }
    return total;
}

// ---------------------------------------------------------------------------
// QuadraticTask

namespace {

Eigen::VectorXd uniform_in_ball(std::size_t dim, double radius, Stream &rng) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    const double norm = v.norm();
    if (norm == 0.0) return Eigen::VectorXd::Zero(v.size());
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    return v * (r / norm);
}

}  // namespace

QuadraticTask::QuadraticTask(std::vector<int> client_exits, std::vector<std::size_t> client_sizes,
                             std::vector<std::vector<QuadraticPair>> pairs, double init_radius)
    : client_exits_(std::move(client_exits)),
      client_sizes_(std::move(client_sizes)),
      pairs_(std::move(pairs)),
      init_radius_(init_radius) {
    if (client_exits_.empty() || client_exits_.size() != client_sizes_.size() ||
        client_exits_.size() != pairs_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "quadratic task: inconsistent client counts");
    }
    const Eigen::Index dim = pairs_.front().empty() ? 0 : pairs_.front().front().center.size();
    if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "quadratic task: zero dimension");
    int num_exits = 0;
    mu_ = std::numeric_limits<double>::infinity();
    smoothness_ = 0.0;
    for (std::size_t c = 0; c < pairs_.size(); ++c) {
        if (pairs_[c].size() != static_cast<std::size_t>(client_exits_[c])) {
            throw Error(ErrorCode::kInvalidArgument, "quadratic task: one pair per exit 1..E_c");
        }
        num_exits = std::max(num_exits, client_exits_[c]);
        for (const QuadraticPair &p : pairs_[c]) {
            if (p.center.size() != dim || p.curvature.rows() != dim || p.curvature.cols() != dim) {
                throw Error(ErrorCode::kInvalidArgument, "quadratic task: dimension mismatch");
            }
            if (!p.curvature.isApprox(p.curvature.transpose(), 1e-12)) {
                throw Error(ErrorCode::kInvalidArgument, "quadratic task: curvature not symmetric");
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.curvature, Eigen::EigenvaluesOnly);
            const double lo = eig.eigenvalues().minCoeff();
            if (!(lo > 0.0)) {
                throw Error(ErrorCode::kInvalidArgument, "quadratic task: curvature not positive definite");
            }
            mu_ = std::min(mu_, lo);
            smoothness_ = std::max(smoothness_, eig.eigenvalues().maxCoeff());
            if (!(p.sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative sigma");
        }
    }
    const std::size_t d = static_cast<std::size_t>(dim);
    std::vector<Range> blocks(static_cast<std::size_t>(num_exits), Range{d, d});
    blocks[0] = Range{0, d};
    std::vector<Range> heads(static_cast<std::size_t>(num_exits), Range{d, d});
    segments_ = SegmentMap(std::move(blocks), std::move(heads));
}

QuadraticTask QuadraticTask::generate(const QuadraticSpec &spec, const Topology &topology,
                                      std::uint64_t seed) {
    validate(topology);
    if (spec.dim == 0 || !(spec.min_eigenvalue > 0.0) || spec.max_eigenvalue < spec.min_eigenvalue ||
        spec.sigma_min < 0.0 || spec.sigma_max < spec.sigma_min) {
        throw Error(ErrorCode::kInvalidArgument, "invalid quadratic spec");
    }
    Stream rng = Stream::keyed(seed, {tag(StreamTag::kTask)});
    const auto d = static_cast<Eigen::Index>(spec.dim);
    std::vector<int> exits;
    std::vector<std::size_t> sizes;
    std::vector<std::vector<QuadraticPair>> pairs;
    for (const NodeSpec &node : topology.nodes) {
        exits.push_back(node.exit);
        sizes.push_back(node.dataset_size);
        std::vector<QuadraticPair> row;
        for (int e = 1; e <= node.exit; ++e) {
            Eigen::MatrixXd gauss(d, d);
            for (Eigen::Index j = 0; j < d; ++j) {
                for (Eigen::Index i = 0; i < d; ++i) gauss(i, j) = rng.normal();
            }
            const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
            Eigen::VectorXd eigenvalues(d);
            for (Eigen::Index i = 0; i < d; ++i) {
                eigenvalues[i] = spec.min_eigenvalue + (spec.max_eigenvalue - spec.min_eigenvalue) * rng.uniform();
            }
            QuadraticPair pair;
            pair.curvature = q * eigenvalues.asDiagonal() * q.transpose();
            pair.curvature = 0.5 * (pair.curvature + pair.curvature.transpose()).eval();
            pair.center = uniform_in_ball(spec.dim, spec.center_radius, rng);
            pair.sigma = spec.sigma_min + (spec.sigma_max - spec.sigma_min) * rng.uniform();
            row.push_back(std::move(pair));
        }
        pairs.push_back(std::move(row));
    }
    return QuadraticTask(std::move(exits), std::move(sizes), std::move(pairs), spec.init_radius);
}

const QuadraticPair &QuadraticTask::pair(std::size_t client, int exit) const {
    if (client >= pairs_.size() || exit < 1 || exit > client_exits_[client]) {
        throw Error(ErrorCode::kInvalidArgument, "no quadratic pair for client " +
                                                     std::to_string(client) + ", exit " +
                                                     std::to_string(exit));
    }
    return pairs_[client][static_cast<std::size_t>(exit - 1)];
}

double QuadraticTask::client_loss(const Params &w, std::size_t client, int exit) const {
    const QuadraticPair &p = pair(client, exit);
    const Eigen::VectorXd delta = w - p.center;
    return 0.5 * delta.dot(p.curvature * delta);
}

Eigen::VectorXd QuadraticTask::exact_gradient(const Params &w, std::size_t client, int exit) const {
    const QuadraticPair &p = pair(client, exit);
    return p.curvature * (w - p.center);
}

void QuadraticTask::stochastic_gradient(const Params &w, std::size_t client, int exit,
                                        std::size_t /*batch_size*/, Stream &rng,
                                        Eigen::Ref<Eigen::VectorXd> grad) const {
    const QuadraticPair &p = pair(client, exit);
    grad = p.curvature * (w - p.center);
    if (p.sigma > 0.0) {
        const double scale = p.sigma / std::sqrt(static_cast<double>(grad.size()));
        for (Eigen::Index i = 0; i < grad.size(); ++i) grad[i] += scale * rng.normal();
    }
}

void QuadraticTask::full_gradient(const Params &w, std::size_t client, int exit,
                                  Eigen::Ref<Eigen::VectorXd> grad) const {
    grad = exact_gradient(w, client, exit);
}

Params QuadraticTask::initial_params(std::uint64_t seed) const {
    Stream rng = Stream::keyed(seed, {tag(StreamTag::kInit)});
    return uniform_in_ball(dim(), init_radius_, rng);
}

double QuadraticTask::loss_cap(double radius) const {
    double cap = 0.0;
    for (const auto &row : pairs_) {
        for (const QuadraticPair &p : row) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.curvature, Eigen::EigenvaluesOnly);
            const double reach = radius + p.center.norm();
            cap = std::max(cap, 0.5 * eig.eigenvalues().maxCoeff() * reach * reach);
        }
    }
    return cap;
}

double QuadraticTask::population_objective(const Params &w, const ExitWeights &lambda,
                                           double cap) const {
    double total = 0.0;
    for (std::size_t e = 0; e < lambda.size(); ++e) {
        if (lambda[e] == 0.0) continue;
        const int exit = static_cast<int>(e + 1);
        double mass = 0.0;
        for (std::size_t c = 0; c < num_clients(); ++c) {
            if (client_exits_[c] >= exit) mass += static_cast<double>(client_sizes_[c]);
        }
        if (!(mass > 0.0)) {
            throw Error(ErrorCode::kEmptyPool, "no client data for exit " + std::to_string(exit));
        }
        double exit_loss = 0.0;
        for (std::size_t c = 0; c < num_clients(); ++c) {
            if (client_exits_[c] < exit) continue;
            exit_loss += static_cast<double>(client_sizes_[c]) / mass *
                         std::min(client_loss(w, c, exit), cap);
        }
        total += lambda[e] * exit_loss;
    }
    return total;
}

QuadraticOptimum quadratic_minimizers(const QuadraticTask &task, const ExitWeights &weights,
                                      const ExitPools &pools) {
    const auto d = static_cast<Eigen::Index>(task.dim());
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (std::size_t e = 0; e < weights.size(); ++e) {
        if (weights[e] == 0.0) continue;
        for (std::size_t c : pools.clients[e]) {
            const double coeff = weights[e] * static_cast<double>(task.client_size(c)) /
                                 static_cast<double>(pools.sizes[e]);
            const QuadraticPair &p = task.pair(c, static_cast<int>(e + 1));
            hessian += coeff * p.curvature;
            rhs += coeff * (p.curvature * p.center);
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(hessian);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::kSingularSystem, "weighted normal equations are not positive definite");
    }
    QuadraticOptimum opt;
    opt.w_star = llt.solve(rhs);
    if ((hessian * opt.w_star - rhs).norm() > 1e-10 * std::max(1.0, rhs.norm())) {
        throw Error(ErrorCode::kSingularSystem, "weighted normal equations solved inaccurately");
    }
    opt.f_star = weighted_objective(task, opt.w_star, weights, pools);
    for (std::size_t c = 0; c < task.num_clients(); ++c) {
        std::vector<Eigen::VectorXd> minimizers;
        for (int e = 1; e <= task.client_exit(c); ++e) minimizers.push_back(task.pair(c, e).center);
        opt.pair_minimizers.push_back(std::move(minimizers));
        opt.pair_minima.emplace_back(static_cast<std::size_t>(task.client_exit(c)), 0.0);
    }
    return opt;
}

// ---------------------------------------------------------------------------
// MLP

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.features.resize(features.rows(), static_cast<Eigen::Index>(indices.size()));
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        out.features.col(static_cast<Eigen::Index>(k)) = features.col(static_cast<Eigen::Index>(indices[k]));
        out.labels.push_back(labels[indices[k]]);
    }
    return out;
}

MlpNetwork::MlpNetwork(const MlpSpec &spec) : spec_(spec) {
    if (spec.input_dim == 0 || spec.hidden_dim == 0 || spec.num_classes < 2 || spec.num_exits < 1) {
        throw Error(ErrorCode::kInvalidArgument, "invalid MLP spec");
    }
    std::vector<Range> blocks, heads;
    std::size_t offset = 0;
    for (int b = 1; b <= spec.num_exits; ++b) {
        const std::size_t fan_in = b == 1 ? spec.input_dim : spec.hidden_dim;
        const std::size_t size = spec.hidden_dim * fan_in + spec.hidden_dim;
        blocks.push_back({offset, offset + size});
        offset += size;
    }
    for (int e = 1; e <= spec.num_exits; ++e) {
        const std::size_t size = spec.num_classes * spec.hidden_dim + spec.num_classes;
        heads.push_back({offset, offset + size});
        offset += size;
    }
    segments_ = SegmentMap(std::move(blocks), std::move(heads));
}

namespace {

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

struct LayerView {
    std::size_t weight_offset;
    std::size_t bias_offset;
    Eigen::Index rows;
    Eigen::Index cols;
};

LayerView block_view(const MlpSpec &spec, const SegmentMap &seg, int b) {
    const auto rows = static_cast<Eigen::Index>(spec.hidden_dim);
    const auto cols = static_cast<Eigen::Index>(b == 1 ? spec.input_dim : spec.hidden_dim);
    const std::size_t begin = seg.block(b).begin;
    return {begin, begin + static_cast<std::size_t>(rows * cols), rows, cols};
}

LayerView head_view(const MlpSpec &spec, const SegmentMap &seg, int e) {
    const auto rows = static_cast<Eigen::Index>(spec.num_classes);
    const auto cols = static_cast<Eigen::Index>(spec.hidden_dim);
    const std::size_t begin = seg.head(e).begin;
    return {begin, begin + static_cast<std::size_t>(rows * cols), rows, cols};
}

ConstMatrixMap weight(const Params &w, const LayerView &v) {
    return ConstMatrixMap(w.data() + v.weight_offset, v.rows, v.cols);
}
ConstVectorMap bias(const Params &w, const LayerView &v) {
    return ConstVectorMap(w.data() + v.bias_offset, v.rows);
}

void check_exit(const MlpSpec &spec, int exit) {
    if (exit < 1 || exit > spec.num_exits) {
        throw Error(ErrorCode::kInvalidArgument, "exit " + std::to_string(exit) + " out of range");
    }
}

}  // namespace

Eigen::MatrixXd MlpNetwork::logits(const Params &w, const Eigen::MatrixXd &x, int exit) const {
    check_exit(spec_, exit);
    Eigen::MatrixXd h = x;
    for (int b = 1; b <= exit; ++b) {
        const LayerView v = block_view(spec_, segments_, b);
        Eigen::MatrixXd z = weight(w, v) * h;
        z.colwise() += bias(w, v);
        h = z.array().tanh();
    }
    const LayerView head = head_view(spec_, segments_, exit);
    Eigen::MatrixXd out = weight(w, head) * h;
    out.colwise() += bias(w, head);
    return out;
}

double MlpNetwork::loss(const Params &w, const Dataset &data, int exit, Eigen::VectorXd *grad) const {
    check_exit(spec_, exit);
    const std::size_t n = data.size();
    if (n == 0) throw Error(ErrorCode::kEmptyDataset, "loss over an empty dataset");
    if (static_cast<std::size_t>(w.size()) != segments_.dim()) {
        throw Error(ErrorCode::kInvalidArgument, "parameter vector has the wrong size");
    }
    std::vector<Eigen::MatrixXd> acts(static_cast<std::size_t>(exit) + 1);
    acts[0] = data.features;
    for (int b = 1; b <= exit; ++b) {
        const LayerView v = block_view(spec_, segments_, b);
        Eigen::MatrixXd z = weight(w, v) * acts[static_cast<std::size_t>(b - 1)];
        z.colwise() += bias(w, v);
        acts[static_cast<std::size_t>(b)] = z.array().tanh();
    }
    const LayerView head = head_view(spec_, segments_, exit);
    Eigen::MatrixXd probs = weight(w, head) * acts.back();
    probs.colwise() += bias(w, head);

    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.cols(); ++i) {
        auto col = probs.col(i);
        const double m = col.maxCoeff();
        const double lse = m + std::log((col.array() - m).exp().sum());
        total += lse - col[data.labels[static_cast<std::size_t>(i)]];
        col = (col.array() - lse).exp();
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (grad == nullptr) return total * inv_n;

    grad->setZero(static_cast<Eigen::Index>(segments_.dim()));
    for (Eigen::Index i = 0; i < probs.cols(); ++i) probs(data.labels[static_cast<std::size_t>(i)], i) -= 1.0;
    probs *= inv_n;
    MatrixMap(grad->data() + head.weight_offset, head.rows, head.cols) = probs * acts.back().transpose();
    VectorMap(grad->data() + head.bias_offset, head.rows) = probs.rowwise().sum();
    Eigen::MatrixXd upstream = weight(w, head).transpose() * probs;
    for (int b = exit; b >= 1; --b) {
        const LayerView v = block_view(spec_, segments_, b);
        const Eigen::MatrixXd &out = acts[static_cast<std::size_t>(b)];
        const Eigen::MatrixXd delta = (upstream.array() * (1.0 - out.array().square())).matrix();
        MatrixMap(grad->data() + v.weight_offset, v.rows, v.cols) =
            delta * acts[static_cast<std::size_t>(b - 1)].transpose();
        VectorMap(grad->data() + v.bias_offset, v.rows) = delta.rowwise().sum();
        if (b > 1) upstream = weight(w, v).transpose() * delta;
    }
    return total * inv_n;
}

Params MlpNetwork::random_params(Stream &rng, double weight_scale, double bias_scale) const {
    Params w = Params::Zero(static_cast<Eigen::Index>(segments_.dim()));
    auto fill = [&](const LayerView &v) {
        const double sd = weight_scale / std::sqrt(static_cast<double>(v.cols));
        for (std::size_t i = v.weight_offset; i < v.bias_offset; ++i) w[static_cast<Eigen::Index>(i)] = sd * rng.normal();
        for (Eigen::Index i = 0; i < v.rows; ++i) {
            w[static_cast<Eigen::Index>(v.bias_offset) + i] = bias_scale * rng.normal();
        }
    };
    for (int b = 1; b <= spec_.num_exits; ++b) fill(block_view(spec_, segments_, b));
    for (int e = 1; e <= spec_.num_exits; ++e) fill(head_view(spec_, segments_, e));
    return w;
}

namespace {

std::vector<int> argmax_columns(const Eigen::MatrixXd &logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < logits.rows(); ++k) {
            if (logits(k, i) > logits(best, i)) best = k;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace

Dataset teacher_dataset(const MlpNetwork &network, const Params &teacher, std::size_t n, Stream &rng) {
    Dataset data;
    data.features.resize(static_cast<Eigen::Index>(network.spec().input_dim), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
        for (Eigen::Index i = 0; i < data.features.rows(); ++i) data.features(i, j) = rng.normal();
    }
    if (n > 0) data.labels = argmax_columns(network.logits(teacher, data.features, network.spec().num_exits));
    return data;
}

double exit_loss(const MlpNetwork &network, const Params &w, int exit, const Dataset &data) {
    return network.loss(w, data, exit);
}

double exit_accuracy(const MlpNetwork &network, const Params &w, int exit, const Dataset &data) {
    if (data.size() == 0) throw Error(ErrorCode::kEmptyDataset, "accuracy over an empty dataset");
    const std::vector<int> predicted = argmax_columns(network.logits(w, data.features, exit));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

MlpTask::MlpTask(const MlpSpec &spec, Params teacher, std::vector<int> client_exits,
                 std::vector<Dataset> client_data)
    : network_(spec),
      teacher_(std::move(teacher)),
      client_exits_(std::move(client_exits)),
      client_data_(std::move(client_data)) {
    if (client_exits_.size() != client_data_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "one dataset per client is required");
    }
    for (int e : client_exits_) check_exit(spec, e);
}

double MlpTask::client_loss(const Params &w, std::size_t client, int exit) const {
    if (exit > client_exits_[client]) {
        throw Error(ErrorCode::kInvalidArgument, "client does not hold exit " + std::to_string(exit));
    }
    if (client_data_[client].size() == 0) return 0.0;
    return network_.loss(w, client_data_[client], exit);
}

void MlpTask::stochastic_gradient(const Params &w, std::size_t client, int exit,
                                  std::size_t batch_size, Stream &rng,
                                  Eigen::Ref<Eigen::VectorXd> grad) const {
    const Dataset &local = client_data_[client];
    if (local.size() == 0) throw Error(ErrorCode::kEmptyClientDataset, "client has no samples");
    std::vector<std::size_t> idx(std::max<std::size_t>(batch_size, 1));
    for (std::size_t &i : idx) i = rng.index(local.size());
    Eigen::VectorXd g;
    network_.loss(w, local.subset(idx), exit, &g);
    grad = g;
}

void MlpTask::full_gradient(const Params &w, std::size_t client, int exit,
                            Eigen::Ref<Eigen::VectorXd> grad) const {
    if (exit > client_exits_[client]) {
        throw Error(ErrorCode::kInvalidArgument, "client does not hold exit " + std::to_string(exit));
    }
    Eigen::VectorXd g;
    network_.loss(w, client_data_[client], exit, &g);
    grad = g;
}

Params MlpTask::initial_params(std::uint64_t seed) const {
    Stream rng = Stream::keyed(seed, {tag(StreamTag::kInit)});
    return network_.random_params(rng, 1.0, 0.0);
}

Dataset MlpTask::sample(std::size_t n, Stream &rng) const {
    return teacher_dataset(network_, teacher_, n, rng);
}

MlpTask generate_classification_task(const MlpSpec &spec, const Topology &topology, std::uint64_t seed) {
    validate(topology);
    if (spec.num_exits != topology.num_exits) {
        throw Error(ErrorCode::kInvalidArgument, "MLP exits do not match the topology");
    }
    const MlpNetwork network(spec);
    Stream teacher_rng = Stream::keyed(seed, {tag(StreamTag::kTask)});
    Params teacher = network.random_params(teacher_rng, spec.teacher_weight_scale, spec.teacher_bias_scale);
    std::vector<int> exits;
    std::vector<Dataset> data;
    for (std::size_t c = 0; c < topology.nodes.size(); ++c) {
        exits.push_back(topology.nodes[c].exit);
        Stream rng = Stream::keyed(seed, {tag(StreamTag::kData), c});
        data.push_back(teacher_dataset(network, teacher, topology.nodes[c].dataset_size, rng));
    }
    return MlpTask(spec, std::move(teacher), std::move(exits), std::move(data));
}

// ---------------------------------------------------------------------------
// Partitions

DataPartition partition_by_name(std::string_view name) {
    if (name == "equal") return {"equal", {1.0, 1.0, 1.0}};
    if (name == "cloud_bias_minus") return {"cloud_bias_minus", {14.3, 28.6, 57.1}};
    if (name == "cloud_bias_plus") return {"cloud_bias_plus", {3.4, 19.9, 76.7}};
    if (name == "devices_bias_plus") return {"devices_bias_plus", {76.7, 19.9, 3.4}};
    throw Error(ErrorCode::kConfigParse, "unknown data partition '" + std::string(name) + "'");
}

PartitionSizes partition_sizes(const Topology &topology, const DataPartition &partition,
                               std::size_t total_samples) {
    validate(topology);
    const std::size_t layers = static_cast<std::size_t>(topology.num_exits);
    if (partition.layer_fractions.size() != layers) {
        throw Error(ErrorCode::kInvalidArgument, "partition '" + partition.name + "' has " +
                                                     std::to_string(partition.layer_fractions.size()) +
                                                     " layers, topology has " + std::to_string(layers));
    }
    double fraction_total = 0.0;
    for (double f : partition.layer_fractions) {
        if (!(f >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative partition fraction");
        fraction_total += f;
    }
    if (!(fraction_total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "empty partition");

    PartitionSizes out;
    out.per_layer.assign(layers, 0);
    std::vector<double> remainder(layers);
    std::size_t assigned = 0;
    for (std::size_t e = 0; e < layers; ++e) {
        const double exact = static_cast<double>(total_samples) * partition.layer_fractions[e] / fraction_total;
        out.per_layer[e] = static_cast<std::size_t>(std::floor(exact));
        remainder[e] = exact - std::floor(exact);
        assigned += out.per_layer[e];
    }
    std::vector<std::size_t> order(layers);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total_samples; ++k, ++assigned) ++out.per_layer[order[k % layers]];

    std::vector<std::size_t> layer_nodes(layers, 0);
    for (const NodeSpec &node : topology.nodes) ++layer_nodes[static_cast<std::size_t>(node.exit - 1)];
    for (std::size_t e = 0; e < layers; ++e) out.dropped += out.per_layer[e] % layer_nodes[e];
    for (const NodeSpec &node : topology.nodes) {
        const std::size_t e = static_cast<std::size_t>(node.exit - 1);
        out.per_client.push_back(out.per_layer[e] / layer_nodes[e]);
    }
    return out;
}

Topology with_dataset_sizes(Topology topology, std::span<const std::size_t> sizes) {
    if (sizes.size() != topology.nodes.size()) {
        throw Error(ErrorCode::kInvalidArgument, "one dataset size per node is required");
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) topology.nodes[i].dataset_size = sizes[i];
    return topology;
}

}  // namespace eefl
