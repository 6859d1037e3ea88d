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

#ifndef EEFL_MODELS_H_
#define EEFL_MODELS_H_

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eefl/rng.h"
#include "eefl/strategies.h"
#include "eefl/topology.h"

namespace eefl {

/// Flat model parameter vector.
using Params = Eigen::VectorXd;

struct Range {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

/// Layout of a flat parameter vector as E backbone blocks and E heads.
///
/// Exit e uses blocks 1..e and head e, so the backbone part of the active sets
/// is nested. Ranges are disjoint and cover [0, dim); empty ranges are allowed.
class SegmentMap {
   public:
    SegmentMap() = default;
    SegmentMap(std::vector<Range> blocks, std::vector<Range> heads);

    int num_exits() const { return static_cast<int>(blocks_.size()); }
    std::size_t dim() const { return dim_; }
    const Range &block(int b) const { return blocks_[static_cast<std::size_t>(b - 1)]; }
    const Range &head(int e) const { return heads_[static_cast<std::size_t>(e - 1)]; }

    std::vector<Range> active_ranges(int exit) const;
    std::vector<bool> active_mask(int exit) const;

   private:
    std::vector<Range> blocks_;
    std::vector<Range> heads_;
    std::size_t dim_ = 0;
};

/// A training task as seen by the federated loop: per-client empirical losses
/// F_{c,e} and mini-batch stochastic gradients that vanish outside the active
/// set of the exit.
class Task {
   public:
    virtual ~Task() = default;

    virtual const SegmentMap &segments() const = 0;
    virtual std::size_t num_clients() const = 0;
    /// |S_c|.
    virtual std::size_t client_size(std::size_t client) const = 0;
    /// Largest exit E_c the client holds.
    virtual int client_exit(std::size_t client) const = 0;

    virtual double client_loss(const Params &w, std::size_t client, int exit) const = 0;
    virtual void stochastic_gradient(const Params &w, std::size_t client, int exit,
                                     std::size_t batch_size, Stream &rng,
                                     Eigen::Ref<Eigen::VectorXd> grad) const = 0;
    /// Gradient of F_{c,e} over the client's whole dataset.
    virtual void full_gradient(const Params &w, std::size_t client, int exit,
                               Eigen::Ref<Eigen::VectorXd> grad) const = 0;
    virtual Params initial_params(std::uint64_t seed) const = 0;

    std::size_t dim() const { return segments().dim(); }
    int num_exits() const { return segments().num_exits(); }
};

/// F_{Lambda~,S}(w) = sum_e w_e sum_{c in C_e} |S_c| / |S_e| F_{c,e}(w).
/// Throws kAllZero for an all-zero weight vector.
double weighted_objective(const Task &task, const Params &w, const ExitWeights &weights,
                          const ExitPools &pools);

// ---------------------------------------------------------------------------
// Quadratic testbed

struct QuadraticPair {
    Eigen::MatrixXd curvature;  // SPD
    Eigen::VectorXd center;
    double sigma = 0.0;
};

struct QuadraticSpec {
    std::size_t dim = 4;
    double min_eigenvalue = 0.5;
    double max_eigenvalue = 2.0;
    double center_radius = 1.0;
    double sigma_min = 0.0;
    double sigma_max = 0.5;
    /// Initial models are drawn uniformly from the ball of this radius.
    double init_radius = 1.5;
};

/// F_{c,e}(w) = 1/2 (w - a)^T A (w - a) per (client, exit) pair, with additive
/// isotropic Gaussian gradient noise whose expected squared norm is sigma^2.
/// Every exit's active set is the whole vector.
class QuadraticTask final : public Task {
   public:
    QuadraticTask(std::vector<int> client_exits, std::vector<std::size_t> client_sizes,
                  std::vector<std::vector<QuadraticPair>> pairs, double init_radius = 1.5);

    static QuadraticTask generate(const QuadraticSpec &spec, const Topology &topology,
                                  std::uint64_t seed);

    const SegmentMap &segments() const override { return segments_; }
    std::size_t num_clients() const override { return client_exits_.size(); }
    std::size_t client_size(std::size_t client) const override { return client_sizes_[client]; }
    int client_exit(std::size_t client) const override { return client_exits_[client]; }
    double client_loss(const Params &w, std::size_t client, int exit) const override;
    void stochastic_gradient(const Params &w, std::size_t client, int exit, std::size_t batch_size,
                             Stream &rng, Eigen::Ref<Eigen::VectorXd> grad) const override;
    void full_gradient(const Params &w, std::size_t client, int exit,
                       Eigen::Ref<Eigen::VectorXd> grad) const override;
    Params initial_params(std::uint64_t seed) const override;

    const QuadraticPair &pair(std::size_t client, int exit) const;
    Eigen::VectorXd exact_gradient(const Params &w, std::size_t client, int exit) const;

    /// Smallest / largest eigenvalue over all pairs.
    double strong_convexity() const { return mu_; }
    double smoothness() const { return smoothness_; }

    /// Upper bound on every pair loss over the ball of the given radius.
    double loss_cap(double radius) const;

    /// Population objective sum_e lambda_e F_e(w), where F_e averages the
    /// (optionally clipped) pair losses of every client holding exit e,
    /// weighted by dataset size.
    double population_objective(const Params &w, const ExitWeights &lambda,
                                double cap = std::numeric_limits<double>::infinity()) const;

   private:
    std::vector<int> client_exits_;
    std::vector<std::size_t> client_sizes_;
    std::vector<std::vector<QuadraticPair>> pairs_;
    SegmentMap segments_;
    double mu_ = 0.0;
    double smoothness_ = 0.0;
    double init_radius_ = 1.5;
};

struct QuadraticOptimum {
    Params w_star;
    double f_star = 0.0;
    /// w*_{c,e} (= the pair's center) and F*_{c,e} (= 0), indexed [client][exit-1].
    std::vector<std::vector<Eigen::VectorXd>> pair_minimizers;
    std::vector<std::vector<double>> pair_minima;
};

/// Exact minimizer of the weighted empirical objective via the weighted
/// normal equations. Throws kSingularSystem.
QuadraticOptimum quadratic_minimizers(const QuadraticTask &task, const ExitWeights &weights,
                                      const ExitPools &pools);

// ---------------------------------------------------------------------------
// Early-exit MLP

struct MlpSpec {
    std::size_t input_dim = 16;
    std::size_t hidden_dim = 32;
    std::size_t num_classes = 3;
    int num_exits = 3;
    /// Teacher weights ~ N(0, scale^2 / fan_in).
    double teacher_weight_scale = 2.0;
    double teacher_bias_scale = 0.5;
};

/// Features are stored one sample per column.
struct Dataset {
    Eigen::MatrixXd features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    Dataset subset(std::span<const std::size_t> indices) const;
};

/// E tanh blocks (dense + bias) with one linear softmax head per block.
class MlpNetwork {
   public:
    explicit MlpNetwork(const MlpSpec &spec);

    const SegmentMap &segments() const { return segments_; }
    const MlpSpec &spec() const { return spec_; }

    /// Logits of head `exit` (num_classes x n).
    Eigen::MatrixXd logits(const Params &w, const Eigen::MatrixXd &x, int exit) const;

    /// Mean softmax cross-entropy of head `exit`; when `grad` is non-null it
    /// receives the exact gradient (zero outside the exit's active set).
    double loss(const Params &w, const Dataset &data, int exit, Eigen::VectorXd *grad = nullptr) const;

    Params random_params(Stream &rng, double weight_scale, double bias_scale) const;

   private:
    MlpSpec spec_;
    SegmentMap segments_;
};

class MlpTask final : public Task {
   public:
    MlpTask(const MlpSpec &spec, Params teacher, std::vector<int> client_exits,
            std::vector<Dataset> client_data);

    const SegmentMap &segments() const override { return network_.segments(); }
    std::size_t num_clients() const override { return client_data_.size(); }
    std::size_t client_size(std::size_t client) const override { return client_data_[client].size(); }
    int client_exit(std::size_t client) const override { return client_exits_[client]; }
    double client_loss(const Params &w, std::size_t client, int exit) const override;
    void stochastic_gradient(const Params &w, std::size_t client, int exit, std::size_t batch_size,
                             Stream &rng, Eigen::Ref<Eigen::VectorXd> grad) const override;
    void full_gradient(const Params &w, std::size_t client, int exit,
                       Eigen::Ref<Eigen::VectorXd> grad) const override;
    Params initial_params(std::uint64_t seed) const override;

    const MlpNetwork &network() const { return network_; }
    const Params &teacher() const { return teacher_; }
    const Dataset &client_data(std::size_t client) const { return client_data_[client]; }

    /// Fresh teacher-labelled samples from the shared input distribution.
    Dataset sample(std::size_t n, Stream &rng) const;

   private:
    MlpNetwork network_;
    Params teacher_;
    std::vector<int> client_exits_;
    std::vector<Dataset> client_data_;
};

/// Teacher-labelled samples: x ~ N(0, I), label = argmax of the teacher's
/// deepest head.
Dataset teacher_dataset(const MlpNetwork &network, const Params &teacher, std::size_t n, Stream &rng);

/// Mean cross-entropy of a head over a dataset. Throws kEmptyDataset.
double exit_loss(const MlpNetwork &network, const Params &w, int exit, const Dataset &data);

/// Fraction of samples whose argmax (ties toward the lowest class) matches.
/// Throws kEmptyDataset.
double exit_accuracy(const MlpNetwork &network, const Params &w, int exit, const Dataset &data);

// ---------------------------------------------------------------------------
// Data partitions

/// Share of the training data held by each layer (indexed by exit-1).
struct DataPartition {
    std::string name;
    std::vector<double> layer_fractions;
};

/// "equal", "cloud_bias_minus", "cloud_bias_plus" or "devices_bias_plus".
DataPartition partition_by_name(std::string_view name);

struct PartitionSizes {
    std::vector<std::size_t> per_client;
    std::vector<std::size_t> per_layer;
    /// Samples lost to rounding down within layers.
    std::size_t dropped = 0;
};

/// Layer totals by largest remainder, then an equal floor split within each
/// layer.
PartitionSizes partition_sizes(const Topology &topology, const DataPartition &partition,
                               std::size_t total_samples);

/// Copy of `topology` with dataset sizes replaced.
Topology with_dataset_sizes(Topology topology, std::span<const std::size_t> sizes);

/// Builds the teacher and the per-client datasets (sizes from the topology).
MlpTask generate_classification_task(const MlpSpec &spec, const Topology &topology,
                                     std::uint64_t seed);

}  // namespace eefl

#endif  // EEFL_MODELS_H_
