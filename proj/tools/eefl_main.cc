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

// Command-line front end: `eefl run <config>` and `eefl compare <csv>`.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "eefl/errors.h"
#include "eefl/experiment.h"

namespace {

int run_command(const std::string &config_path, const std::string &out_dir, int threads,
                std::optional<std::uint64_t> seed_override) {
    eefl::ExperimentConfig cfg = eefl::load_config(config_path);
    if (seed_override) cfg.seeds = {*seed_override};
    const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
    const auto results = eefl::run_experiment(cfg, threads);
    eefl::write_outputs(results, cfg.topology.num_exits, dir);
    std::cout << "wrote " << results.size() << " rows to " << dir << "/results.csv\n";
    return 0;
}

int compare_command(const std::string &csv_path, const std::string &baseline, const std::string &candidate) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw eefl::Error(eefl::ErrorCode::kMissingRows, "cannot read '" + csv_path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    const auto rows = eefl::compare_strategies(text.str(), baseline, candidate);
    std::cout << "partition,split,num_seeds,mean_delta,std_error\n";
    for (const auto &r : rows) {
        std::cout << r.partition << ',' << r.split << ',' << r.num_seeds << ',' << eefl::format_number(r.mean_delta)
                  << ',' << eefl::format_number(r.std_error) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Inference-aware federated training of early-exit models"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out_dir;
    int threads = 1;
    std::optional<std::uint64_t> seed_override;
    app.add_option("--out", out_dir, "Output directory (overrides the config)");
    app.add_option("--threads", threads, "Worker threads for independent runs")->check(CLI::PositiveNumber);
    app.add_option("--seed-override", seed_override, "Run only this seed");

    std::string config_path;
    auto *run = app.add_subcommand("run", "Run every cell of an experiment config");
    run->add_option("config", config_path, "JSON experiment config")->required();

    std::string csv_path, baseline, candidate;
    auto *cmp = app.add_subcommand("compare", "Per-split accuracy deltas between two strategies");
    cmp->add_option("csv", csv_path, "results.csv")->required();
    cmp->add_option("--baseline", baseline, "Baseline strategy, optionally name@k")->required();
    cmp->add_option("--candidate", candidate, "Candidate strategy, optionally name@k")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return run_command(config_path, out_dir, threads, seed_override);
        return compare_command(csv_path, baseline, candidate);
    } catch (const eefl::Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
