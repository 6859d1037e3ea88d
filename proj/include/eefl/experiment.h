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

#ifndef EEFL_EXPERIMENT_H_
#define EEFL_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "eefl/fedtrain.h"
#include "eefl/models.h"
#include "eefl/strategies.h"
#include "eefl/topology.h"

namespace eefl {

/// A serving setting such as "80-15-5": percentages per exit.
struct SplitSpec {
    std::string name;
    std::vector<double> shares;
};

/// Parses "x-y-z" into a split. Throws kConfigParse.
SplitSpec parse_split(std::string_view name);

struct StrategySpec {
    StrategyKind kind = StrategyKind::kEqual;
    double k = 0.0;
};

enum class TaskKind { kMlp, kQuadratic };

struct TheorySettings {
    std::size_t sigma_points = 10;
    std::size_t sigma_batches = 10;
    std::size_t bias_probes = 1000;
};

struct ExperimentConfig {
    Topology topology;
    /// Serving settings; empty when the topology carries explicit budgets.
    std::vector<SplitSpec> splits;
    std::vector<std::string> partitions;
    std::size_t total_samples = 1200;
    std::size_t test_samples = 2000;
    TaskKind task = TaskKind::kMlp;
    MlpSpec mlp;
    QuadraticSpec quadratic;
    std::vector<StrategySpec> strategies;
    TrainConfig training;
    /// Theory-schedule constants come from the quadratic task unless set.
    bool curvature_from_task = true;
    std::vector<std::uint64_t> seeds;
    std::vector<double> flops;
    FlopsWeighting flops_weighting = FlopsWeighting::kDirect;
    TheorySettings theory;
    std::string output_dir = "results";
};

/// Parses a JSON experiment config. Throws kConfigParse with the offending
/// field in the message.
ExperimentConfig parse_config(const nlohmann::json &doc);
ExperimentConfig load_config(const std::filesystem::path &path);

/// One (seed, partition, split, strategy) cell.
struct CellKey {
    std::uint64_t seed = 0;
    std::string partition;
    /// Split name, or "budgets" for explicit budgets.
    std::string split;
    StrategySpec strategy;
};

struct ResultRow {
    CellKey key;
    std::vector<double> exit_accuracy;
    double weighted_accuracy = 0.0;
    double system_accuracy_routed = 0.0;
    double weighted_loss = 0.0;
    double tv = 0.0;
    double gen_proxy = 0.0;
    double opt_bound = 0.0;
    double empirical_opt_error = 0.0;
};

struct CellResult {
    ResultRow row;
    nlohmann::json report;
};

/// Every cell of the config in canonical order.
std::vector<CellKey> enumerate_cells(const ExperimentConfig &cfg);

/// Trains and evaluates one cell.
CellResult run_cell(const ExperimentConfig &cfg, const CellKey &key);

/// Runs all cells on `threads` workers; results come back in canonical order.
std::vector<CellResult> run_experiment(const ExperimentConfig &cfg, int threads = 1);

/// Header plus one line per row.
std::string results_csv(const std::vector<ResultRow> &rows, int num_exits);

/// Writes results.csv and runs/<cell>.json under `out_dir`.
void write_outputs(const std::vector<CellResult> &results, int num_exits,
                   const std::filesystem::path &out_dir);

/// Shortest round-trip decimal form; "nan" and "inf" for non-finite values.
std::string format_number(double x);

struct CompareRow {
    std::string partition;
    std::string split;
    std::size_t num_seeds = 0;
    double mean_delta = 0.0;
    double std_error = 0.0;
};

/// Candidate minus baseline weighted accuracy per (partition, split), paired
/// by seed. Strategies are "name" or "name@k". Throws kMissingRows.
std::vector<CompareRow> compare_strategies(std::string_view csv, std::string_view baseline,
                                           std::string_view candidate);

}  // namespace eefl

#endif  // EEFL_EXPERIMENT_H_
