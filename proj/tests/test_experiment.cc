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

#include "eefl/experiment.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.h"

namespace eefl {
namespace {

using nlohmann::json;
using testing::code_of;

// A tiny MLP experiment that runs in well under a second per cell.
json tiny_config() {
    return json::parse(R"({
        "topology": {"preset": "cloud_edge_device"},
        "serving": {"splits": ["33-33-33", "80-15-5"]},
        "data": {"partitions": ["equal"], "total_samples": 240, "test_samples": 300},
        "task": {"kind": "mlp", "hidden_dim": 8},
        "strategies": ["equal", "serving_rate", {"name": "serving_rate", "k": 0.2}],
        "training": {"rounds": 3, "local_steps": 4, "batch_size": 8,
                     "lr_schedule": "cosine", "base_lr": 0.1},
        "theory": {"sigma_points": 2, "sigma_batches": 2, "bias_probes": 10},
        "seeds": [1, 2]
    })");
}

json tiny_quadratic_config() {
    return json::parse(R"({
        "topology": {"preset": "cloud_edge_device"},
        "serving": {"splits": ["60-30-10"]},
        "data": {"partitions": ["equal"], "total_samples": 120},
        "task": {"kind": "quadratic", "dim": 3},
        "strategies": ["equal", "gen_error_adj"],
        "training": {"rounds": 20, "local_steps": 2, "projection_radius": 2.0},
        "theory": {"bias_probes": 50},
        "seeds": [3]
    })");
}

std::string read_file(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------
// Config parsing

TEST(Split, Parse) {
    const SplitSpec s = parse_split("80-15-5");
    EXPECT_EQ(s.name, "80-15-5");
    EXPECT_EQ(s.shares, (std::vector<double>{80, 15, 5}));
    EXPECT_EQ(code_of([] { parse_split("80-x-5"); }), ErrorCode::kConfigParse);
    EXPECT_EQ(code_of([] { parse_split(""); }), ErrorCode::kConfigParse);
}

TEST(Config, ParsesTheTinyConfig) {
    const ExperimentConfig cfg = parse_config(tiny_config());
    EXPECT_EQ(cfg.topology.nodes.size(), 7u);
    EXPECT_EQ(cfg.splits.size(), 2u);
    EXPECT_EQ(cfg.strategies.size(), 3u);
    EXPECT_EQ(cfg.strategies[2].k, 0.2);
    EXPECT_EQ(cfg.training.lr_schedule, LrSchedule::kCosine);
    EXPECT_EQ(cfg.mlp.hidden_dim, 8u);
    EXPECT_EQ(cfg.flops, (std::vector<double>{78316160, 694682880, 1770787840}));
}

TEST(Config, AcceptsPAsAnAliasForK) {
    json doc = tiny_config();
    doc["strategies"] = json::parse(R"([{"name": "serving_rate", "p": 0.1}])");
    EXPECT_EQ(parse_config(doc).strategies[0].k, 0.1);
    doc["strategies"] = json::parse(R"([{"name": "serving_rate", "p": 0.1, "k": 0.1}])");
    EXPECT_EQ(code_of([&] { parse_config(doc); }), ErrorCode::kConfigParse);
}

TEST(Config, RejectsMalformedDocuments) {
    auto code = [](auto mutate) {
        json doc = tiny_config();
        mutate(doc);
        return code_of([&] { parse_config(doc); });
    };
    EXPECT_EQ(code([](json &d) { d["trainng"] = json::object(); }), ErrorCode::kConfigParse);
    EXPECT_EQ(code([](json &d) { d["training"]["rounds"] = "ten"; }), ErrorCode::kConfigParse);
    EXPECT_EQ(code([](json &d) { d["serving"]["budgets"] = json::object(); }), ErrorCode::kConfigParse);
    EXPECT_EQ(code([](json &d) { d["serving"] = json::object(); }), ErrorCode::kConfigParse);
    EXPECT_EQ(code([](json &d) { d["strategies"] = json::array({"fastest"}); }), ErrorCode::kConfigParse);
    EXPECT_EQ(code([](json &d) { d["data"]["partitions"] = json::array({"iid"}); }), ErrorCode::kConfigParse);
    EXPECT_EQ(code([](json &d) { d["task"]["kind"] = "cnn"; }), ErrorCode::kConfigParse);
    EXPECT_EQ(code([](json &d) { d["strategies"] = json::array(); }), ErrorCode::kConfigParse);
    // Quadratic tasks need a bounded feasible set.
    EXPECT_EQ(code_of([] {
                  json d = tiny_quadratic_config();
                  d["training"]["projection_radius"] = "inf";
                  parse_config(d);
              }),
              ErrorCode::kConfigParse);
}

TEST(Config, MissingFileIsAConfigError) {
    EXPECT_EQ(code_of([] { load_config("/nonexistent/eefl.json"); }), ErrorCode::kConfigParse);
    const auto path = std::filesystem::temp_directory_path() / "eefl_bad_config.json";
    std::ofstream(path) << "{ not json";
    EXPECT_EQ(code_of([&] { load_config(path); }), ErrorCode::kConfigParse);
    std::filesystem::remove(path);
}

TEST(Config, SweepEnumeratesTheCartesianGrid) {
    json doc = tiny_config();
    doc["serving"]["splits"] = json::array({"5-15-80", "10-30-60", "20-35-45", "33-33-33", "45-35-20",
                                            "60-30-10", "80-15-5"});
    doc["data"]["partitions"] = json::array({"equal", "cloud_bias_minus", "cloud_bias_plus"});
    doc["strategies"] = json::array({"equal", "flops_prop", "serving_rate"});
    doc["seeds"] = json::array({1, 2, 3});
    const std::vector<CellKey> cells = enumerate_cells(parse_config(doc));
    EXPECT_EQ(cells.size(), 189u);
    for (std::size_t i = 1; i < cells.size(); ++i) EXPECT_LE(cells[i - 1].seed, cells[i].seed);
}

// ---------------------------------------------------------------------------
// Running

TEST(Experiment, EqualSplitMakesServingRateIdenticalToEqual) {
    const ExperimentConfig cfg = parse_config(tiny_config());
    const CellKey base{1, "equal", "33-33-33", {StrategyKind::kEqual, 0.0}};
    const CellKey cand{1, "equal", "33-33-33", {StrategyKind::kServingRate, 0.0}};
    const CellResult a = run_cell(cfg, base);
    const CellResult b = run_cell(cfg, cand);
    EXPECT_EQ(a.report.at("lambda_tilde"), b.report.at("lambda_tilde"));
    EXPECT_EQ(a.row.exit_accuracy, b.row.exit_accuracy);
    EXPECT_EQ(a.row.weighted_accuracy, b.row.weighted_accuracy);
    EXPECT_EQ(a.row.system_accuracy_routed, b.row.system_accuracy_routed);

    const std::string csv = results_csv({a.row, b.row}, 3);
    const std::vector<CompareRow> cmp = compare_strategies(csv, "equal", "serving_rate");
    ASSERT_EQ(cmp.size(), 1u);
    EXPECT_EQ(cmp[0].mean_delta, 0.0);
}

TEST(Experiment, RowsAreSortedAndDeterministic) {
    const ExperimentConfig cfg = parse_config(tiny_config());
    const std::vector<CellResult> one = run_experiment(cfg, 1);
    const std::vector<CellResult> two = run_experiment(cfg, 2);
    ASSERT_EQ(one.size(), 12u);
    std::vector<ResultRow> rows_one, rows_two;
    for (const auto &r : one) rows_one.push_back(r.row);
    for (const auto &r : two) rows_two.push_back(r.row);
    EXPECT_EQ(results_csv(rows_one, 3), results_csv(rows_two, 3));
    for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].report.dump(), two[i].report.dump());
    for (const auto &r : one) {
        EXPECT_TRUE(std::isnan(r.row.opt_bound));
        EXPECT_GE(r.row.weighted_accuracy, 0.0);
        EXPECT_LE(r.row.weighted_accuracy, 1.0);
    }
}

TEST(Experiment, QuadraticCellsCarryTheBounds) {
    const ExperimentConfig cfg = parse_config(tiny_quadratic_config());
    for (const CellResult &r : run_experiment(cfg)) {
        EXPECT_GE(r.row.empirical_opt_error, 0.0);
        EXPECT_LE(r.row.empirical_opt_error, r.row.opt_bound);
        EXPECT_GE(r.row.tv, 0.0);
        const json &err = r.report.at("error_report");
        EXPECT_LE(err.at("empirical_bias").get<double>(), err.at("bias_bound").get<double>());
    }
}

TEST(Experiment, WritesCsvAndReports) {
    json doc = tiny_config();
    doc["serving"]["splits"] = json::array({"60-30-10"});
    doc["seeds"] = json::array({4});
    const ExperimentConfig cfg = parse_config(doc);
    const auto dir = std::filesystem::temp_directory_path() / "eefl_write_outputs_test";
    std::filesystem::remove_all(dir);
    write_outputs(run_experiment(cfg), 3, dir);
    const std::string csv = read_file(dir / "results.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "seed,partition,split,strategy,k,exit1_acc,exit2_acc,exit3_acc,weighted_acc,system_acc_routed,"
              "weighted_loss,tv,gen_proxy,opt_bound,empirical_opt_error");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    const json report = json::parse(read_file(dir / "runs" / "4_equal_60-30-10_serving_rate_k0.2.json"));
    for (const char *key : {"lambda_tilde", "sampling_matrix", "rate_plan", "error_report"}) {
        EXPECT_TRUE(report.contains(key)) << key;
    }
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Output helpers

TEST(FormatNumber, ShortestRoundTrip) {
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(1.0 / 3.0), "0.3333333333333333");
    EXPECT_EQ(format_number(0.0), "0");
    EXPECT_EQ(format_number(std::nan("")), "nan");
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Compare, DeltasAndStandardErrors) {
    const std::string csv =
        "seed,partition,split,strategy,k,weighted_acc\n"
        "1,equal,80-15-5,equal,0,0.5\n"
        "2,equal,80-15-5,equal,0,0.6\n"
        "1,equal,80-15-5,serving_rate,0,0.53\n"
        "2,equal,80-15-5,serving_rate,0,0.61\n"
        "1,equal,80-15-5,serving_rate,0.2,0.7\n"
        "2,equal,80-15-5,serving_rate,0.2,0.7\n";
    const std::vector<CompareRow> same = compare_strategies(csv, "equal", "equal");
    ASSERT_EQ(same.size(), 1u);
    EXPECT_EQ(same[0].mean_delta, 0.0);
    EXPECT_EQ(same[0].std_error, 0.0);

    const std::vector<CompareRow> d = compare_strategies(csv, "equal", "serving_rate@0");
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].num_seeds, 2u);
    EXPECT_NEAR(d[0].mean_delta, 0.02, 1e-12);
    // Deltas 0.03 and 0.01: sample sd sqrt(2) * 0.01, divided by sqrt(2).
    EXPECT_NEAR(d[0].std_error, 0.01, 1e-12);

    EXPECT_NEAR(compare_strategies(csv, "serving_rate@0", "serving_rate@0.2")[0].mean_delta, 0.13, 1e-12);
    EXPECT_EQ(code_of([&] { compare_strategies(csv, "equal", "flops_prop"); }), ErrorCode::kMissingRows);
    EXPECT_EQ(code_of([&] { compare_strategies(csv, "equal", "serving_rate"); }), ErrorCode::kConfigParse);
    const std::string unpaired = csv + "3,equal,80-15-5,equal,0,0.4\n";
    EXPECT_EQ(code_of([&] { compare_strategies(unpaired, "equal", "serving_rate@0"); }), ErrorCode::kMissingRows);
}

}  // namespace
}  // namespace eefl
