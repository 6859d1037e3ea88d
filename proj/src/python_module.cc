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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "eefl/errors.h"
#include "eefl/experiment.h"
#include "eefl/fedtrain.h"
#include "eefl/models.h"
#include "eefl/strategies.h"
#include "eefl/theory.h"
#include "eefl/topology.h"

namespace py = pybind11;
using namespace eefl;

namespace {

// Weight vectors cross the boundary as plain lists.
ExitWeights weights(const std::vector<double> &w) { return ExitWeights{w, true}; }

py::dict row_to_dict(const ResultRow &r) {
    py::dict d;
    d["seed"] = r.key.seed;
    d["partition"] = r.key.partition;
    d["split"] = r.key.split;
    d["strategy"] = std::string(strategy_name(r.key.strategy.kind));
    d["k"] = r.key.strategy.k;
    d["exit_accuracy"] = r.exit_accuracy;
    d["weighted_acc"] = r.weighted_accuracy;
    d["system_acc_routed"] = r.system_accuracy_routed;
    d["weighted_loss"] = r.weighted_loss;
    d["tv"] = r.tv;
    d["gen_proxy"] = r.gen_proxy;
    d["opt_bound"] = r.opt_bound;
    d["empirical_opt_error"] = r.empirical_opt_error;
    return d;
}

ExperimentConfig config_from_text(const std::string &text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::kConfigParse, e.what());
    }
    return parse_config(doc);
}

std::vector<std::vector<double>> matrix_rows(const SamplingMatrix &p) {
    std::vector<std::vector<double>> rows;
    for (std::size_t c = 0; c < p.num_clients(); ++c) {
        const auto r = p.row(c);
        rows.emplace_back(r.begin(), r.end());
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Early-exit federated learning simulator";

    static py::exception<Error> error_type(m, "EeflError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error &e) {
            py::set_error(error_type, e.what());
        }
    });

    // Topology ---------------------------------------------------------------
    py::class_<NodeSpec>(m, "NodeSpec")
        .def(py::init([](std::string id, std::optional<std::string> parent, int exit, double arrival_rate,
                         double budget, std::size_t dataset_size) {
                 return NodeSpec{std::move(id), std::move(parent), exit, arrival_rate, budget, dataset_size};
             }),
             py::arg("id"), py::arg("parent") = py::none(), py::arg("exit") = 1, py::arg("arrival_rate") = 0.0,
             py::arg("budget") = 0.0, py::arg("dataset_size") = 0)
        .def_readwrite("id", &NodeSpec::id)
        .def_readwrite("parent", &NodeSpec::parent)
        .def_readwrite("exit", &NodeSpec::exit)
        .def_readwrite("arrival_rate", &NodeSpec::arrival_rate)
        .def_readwrite("budget", &NodeSpec::budget)
        .def_readwrite("dataset_size", &NodeSpec::dataset_size);

    py::class_<Topology>(m, "Topology")
        .def(py::init([](std::vector<NodeSpec> nodes, int num_exits) { return Topology{std::move(nodes), num_exits}; }),
             py::arg("nodes"), py::arg("num_exits"))
        .def_readwrite("nodes", &Topology::nodes)
        .def_readwrite("num_exits", &Topology::num_exits);

    py::class_<RatePlan>(m, "RatePlan")
        .def_readonly("transmit", &RatePlan::transmit)
        .def_readonly("serve", &RatePlan::serve)
        .def_readonly("fraction", &RatePlan::fraction)
        .def_readonly("lambda_exit", &RatePlan::lambda_exit)
        .def_readonly("lambda_exit_normalized", &RatePlan::lambda_exit_normalized);

    m.def("cloud_edge_device_topology", &cloud_edge_device_topology, py::arg("device_arrival_rate") = 1.0);
    m.def("validate", [](const Topology &t) { validate(t); });
    m.def("compute_rate_plan", &compute_rate_plan);
    m.def("brute_force_rate_plan", &brute_force_rate_plan, py::arg("topology"), py::arg("max_iterations") = 100000,
          py::arg("tolerance") = 1e-13);
    m.def("budgets_for_split", [](const Topology &t, const std::vector<double> &split) {
        return budgets_for_split(t, split);
    });
    m.def("with_budgets", [](const Topology &t, const std::vector<double> &b) { return with_budgets(t, b); });

    // Strategies --------------------------------------------------------------
    m.def("equal_weight", [](int num_exits) { return equal_weight(num_exits).weights; });
    m.def(
        "flops_prop",
        [](const std::vector<double> &flops, bool inverse) {
            return flops_prop(flops, inverse ? FlopsWeighting::kInverse : FlopsWeighting::kDirect).weights;
        },
        py::arg("flops"), py::arg("inverse") = false);
    m.def("serving_rate_weights", [](const RatePlan &plan) { return serving_rate_weights(plan).weights; });
    m.def("gen_error_adjusted", [](const std::vector<double> &lambda, const std::vector<std::size_t> &pools,
                                   const std::vector<double> &flops) {
        return gen_error_adjusted(weights(lambda), pools, flops).weights;
    });
    m.def("build_sampling_matrix", [](const Topology &t, double k) { return matrix_rows(build_sampling_matrix(t, k)); });
    m.def("exit_pools", [](const Topology &t, double k) {
        const ExitPools pools = exit_pools(t, build_sampling_matrix(t, k));
        return py::make_tuple(pools.sizes, pools.clients);
    });

    // Theory -------------------------------------------------------------------
    py::enum_<BoundDenominator>(m, "BoundDenominator")
        .value("LOCAL_STEPS", BoundDenominator::kLocalSteps)
        .value("ROUNDS", BoundDenominator::kRounds);
    m.def("tv_distance", [](const std::vector<double> &a, const std::vector<double> &b) {
        return tv_distance(weights(a), weights(b));
    });
    m.def("gen_proxy", [](const std::vector<double> &lambda, const std::vector<double> &flops,
                          const std::vector<std::size_t> &pools) { return gen_proxy(weights(lambda), flops, pools); });
    m.def("opt_error_bound", &opt_error_bound, py::arg("mu"), py::arg("smoothness"), py::arg("B"), py::arg("rounds"),
          py::arg("local_steps"), py::arg("initial_dist_sq"),
          py::arg("denominator") = BoundDenominator::kLocalSteps);
    m.def("bias_bound", [](double cap, const std::vector<double> &trained, const std::vector<double> &served) {
        return bias_bound(cap, weights(trained), weights(served));
    });
    m.def("schedule_gamma", &schedule_gamma);

    // Quadratic task and training --------------------------------------------------
    py::class_<QuadraticSpec>(m, "QuadraticSpec")
        .def(py::init<>())
        .def_readwrite("dim", &QuadraticSpec::dim)
        .def_readwrite("min_eigenvalue", &QuadraticSpec::min_eigenvalue)
        .def_readwrite("max_eigenvalue", &QuadraticSpec::max_eigenvalue)
        .def_readwrite("center_radius", &QuadraticSpec::center_radius)
        .def_readwrite("sigma_min", &QuadraticSpec::sigma_min)
        .def_readwrite("sigma_max", &QuadraticSpec::sigma_max)
        .def_readwrite("init_radius", &QuadraticSpec::init_radius);

    py::class_<QuadraticTask>(m, "QuadraticTask")
        .def_static("generate", &QuadraticTask::generate, py::arg("spec"), py::arg("topology"), py::arg("seed"))
        .def_property_readonly("dim", &QuadraticTask::dim)
        .def_property_readonly("strong_convexity", &QuadraticTask::strong_convexity)
        .def_property_readonly("smoothness", &QuadraticTask::smoothness)
        .def("client_loss", &QuadraticTask::client_loss)
        .def("initial_params", &QuadraticTask::initial_params)
        .def("weighted_objective",
             [](const QuadraticTask &task, const Eigen::VectorXd &w, const std::vector<double> &lambda,
                const Topology &t, double k) {
                 return weighted_objective(task, w, weights(lambda), exit_pools(t, build_sampling_matrix(t, k)));
             })
        .def("minimizer", [](const QuadraticTask &task, const std::vector<double> &lambda, const Topology &t,
                             double k) {
            const QuadraticOptimum opt =
                quadratic_minimizers(task, weights(lambda), exit_pools(t, build_sampling_matrix(t, k)));
            return py::make_tuple(opt.w_star, opt.f_star);
        });

    py::enum_<LrSchedule>(m, "LrSchedule")
        .value("THEORY", LrSchedule::kTheory)
        .value("CONSTANT", LrSchedule::kConstant)
        .value("COSINE", LrSchedule::kCosine);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("rounds", &TrainConfig::rounds)
        .def_readwrite("local_steps", &TrainConfig::local_steps)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("server_lr", &TrainConfig::server_lr)
        .def_readwrite("lr_schedule", &TrainConfig::lr_schedule)
        .def_readwrite("base_lr", &TrainConfig::base_lr)
        .def_readwrite("mu", &TrainConfig::mu)
        .def_readwrite("smoothness", &TrainConfig::smoothness)
        .def_readwrite("gamma", &TrainConfig::gamma)
        .def_readwrite("projection_radius", &TrainConfig::projection_radius)
        .def_readwrite("momentum", &TrainConfig::momentum)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("threads", &TrainConfig::threads);

    m.def("learning_rate", &learning_rate, py::arg("config"), py::arg("round"), py::arg("step"));
    m.def(
        "train",
        [](const Topology &t, const QuadraticTask &task, const std::vector<double> &lambda, double k,
           const TrainConfig &cfg) {
            const RunResult r = run(t, task, weights(lambda), build_sampling_matrix(t, k), cfg);
            py::dict out;
            out["final_model"] = r.final_model;
            out["initial_model"] = r.initial_model;
            out["objective"] = r.trajectory.objective;
            out["norm"] = r.trajectory.norm;
            return out;
        },
        py::arg("topology"), py::arg("task"), py::arg("lambda_tilde"), py::arg("k"), py::arg("config"),
        "Runs federated training on a quadratic task; the topology must carry dataset sizes.");

    // Experiments ---------------------------------------------------------------------
    m.def(
        "run_config",
        [](const std::string &config_json, int threads) {
            const ExperimentConfig cfg = config_from_text(config_json);
            std::vector<CellResult> cells;
            {
                py::gil_scoped_release release;
                cells = run_experiment(cfg, threads);
            }
            py::list rows;
            for (const CellResult &c : cells) rows.append(row_to_dict(c.row));
            return rows;
        },
        py::arg("config_json"), py::arg("threads") = 1, "Runs every cell of a JSON experiment config.");
    m.def(
        "run_config_csv",
        [](const std::string &config_json, int threads) {
            const ExperimentConfig cfg = config_from_text(config_json);
            py::gil_scoped_release release;
            std::vector<ResultRow> rows;
            for (const CellResult &c : run_experiment(cfg, threads)) rows.push_back(c.row);
            return results_csv(rows, cfg.topology.num_exits);
        },
        py::arg("config_json"), py::arg("threads") = 1);
    m.def("compare", [](const std::string &csv, const std::string &baseline, const std::string &candidate) {
        py::list out;
        for (const CompareRow &r : compare_strategies(csv, baseline, candidate)) {
            py::dict d;
            d["partition"] = r.partition;
            d["split"] = r.split;
            d["num_seeds"] = r.num_seeds;
            d["mean_delta"] = r.mean_delta;
            d["std_error"] = r.std_error;
            out.append(d);
        }
        return out;
    });
}
