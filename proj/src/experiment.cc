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

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "eefl/errors.h"
#include "eefl/serving_sim.h"
#include "eefl/theory.h"

namespace eefl {

using nlohmann::json;

namespace {

const std::vector<double> kDefaultFlops = {78316160.0, 694682880.0, 1770787840.0};

[[noreturn]] void config_error(const std::string &msg) { throw Error(ErrorCode::kConfigParse, msg); }

void reject_unknown_keys(const json &obj, std::string_view section, std::initializer_list<std::string_view> known) {
    if (!obj.is_object()) config_error(std::string(section) + " must be an object");
    for (const auto &[key, value] : obj.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            config_error("unknown field '" + key + "' in " + std::string(section));
        }
    }
}

template <typename T>
T field(const json &obj, const char *key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception &) {
        config_error(std::string("field '") + key + "' has the wrong type");
    }
}

double radius_field(const json &obj, const char *key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json &v = obj.at(key);
    if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf")) {
        return std::numeric_limits<double>::infinity();
    }
    if (!v.is_number()) config_error(std::string("field '") + key + "' must be a number or \"inf\"");
    return v.get<double>();
}

Topology parse_topology(const json &doc) {
    reject_unknown_keys(doc, "topology", {"preset", "device_arrival_rate", "num_exits", "nodes"});
    if (doc.contains("preset")) {
        if (doc.contains("nodes")) config_error("topology: give either a preset or nodes");
        const auto preset = field<std::string>(doc, "preset", "");
        if (preset != "cloud_edge_device") config_error("unknown topology preset '" + preset + "'");
        return cloud_edge_device_topology(field<double>(doc, "device_arrival_rate", 1.0));
    }
    if (!doc.contains("nodes") || !doc.at("nodes").is_array()) config_error("topology: nodes list is required");
    Topology t;
    int max_exit = 0;
    for (const json &n : doc.at("nodes")) {
        reject_unknown_keys(n, "topology node", {"id", "parent", "exit", "arrival_rate", "budget", "dataset_size"});
        NodeSpec node;
        node.id = field<std::string>(n, "id", "");
        if (node.id.empty()) config_error("topology node without an id");
        if (n.contains("parent") && !n.at("parent").is_null()) node.parent = field<std::string>(n, "parent", "");
        node.exit = field<int>(n, "exit", 0);
        node.arrival_rate = field<double>(n, "arrival_rate", 0.0);
        node.budget = field<double>(n, "budget", 0.0);
        node.dataset_size = field<std::size_t>(n, "dataset_size", 0);
        max_exit = std::max(max_exit, node.exit);
        t.nodes.push_back(std::move(node));
    }
    t.num_exits = field<int>(doc, "num_exits", max_exit);
    return t;
}

TrainConfig parse_training(const json &doc) {
    reject_unknown_keys(doc, "training",
                        {"rounds", "local_steps", "batch_size", "server_lr", "lr_schedule", "base_lr", "mu",
                         "L", "gamma", "projection_radius", "momentum"});
    TrainConfig c;
    c.rounds = field<int>(doc, "rounds", c.rounds);
    c.local_steps = field<int>(doc, "local_steps", c.local_steps);
    c.batch_size = field<std::size_t>(doc, "batch_size", c.batch_size);
    c.server_lr = field<double>(doc, "server_lr", c.server_lr);
    c.lr_schedule = parse_lr_schedule(field<std::string>(doc, "lr_schedule", "theory"));
    c.base_lr = field<double>(doc, "base_lr", c.base_lr);
    c.mu = field<double>(doc, "mu", c.mu);
    c.smoothness = field<double>(doc, "L", c.smoothness);
    if (doc.contains("gamma")) c.gamma = field<double>(doc, "gamma", 0.0);
    c.projection_radius = radius_field(doc, "projection_radius", c.projection_radius);
    c.momentum = field<double>(doc, "momentum", c.momentum);
    return c;
}

std::string strategy_label(const StrategySpec &s) { return std::string(strategy_name(s.kind)); }

std::string cell_file_name(const CellKey &key) {
    std::string name = std::to_string(key.seed) + "_" + key.partition + "_" + key.split + "_" +
                       strategy_label(key.strategy) + "_k" + format_number(key.strategy.k) + ".json";
    return name;
}

auto cell_order(const CellKey &k) {
    return std::make_tuple(k.seed, k.partition, k.split, strategy_label(k.strategy), k.strategy.k);
}

json plan_json(const RatePlan &plan) {
    return json{{"transmit", plan.transmit},
                {"serve", plan.serve},
                {"fraction", plan.fraction},
                {"lambda_exit", plan.lambda_exit},
                {"lambda_exit_normalized", plan.lambda_exit_normalized}};
}

json sampling_json(const SamplingMatrix &p) {
    json rows = json::array();
    for (std::size_t c = 0; c < p.num_clients(); ++c) {
        const auto row = p.row(c);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

// JSON has no NaN; non-finite values are written as strings.
json number_json(double x) {
    if (std::isfinite(x)) return x;
    return format_number(x);
}

}  // namespace

SplitSpec parse_split(std::string_view name) {
    SplitSpec split;
    split.name = std::string(name);
    std::size_t start = 0;
    while (start <= name.size()) {
        const std::size_t dash = name.find('-', start);
        const std::string_view part = name.substr(start, dash == std::string_view::npos ? name.npos : dash - start);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
        if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() || !(value >= 0.0)) {
            config_error("malformed serving split '" + std::string(name) + "'");
        }
        split.shares.push_back(value);
        if (dash == std::string_view::npos) break;
        start = dash + 1;
    }
    double total = 0.0;
    for (double s : split.shares) total += s;
    if (!(total > 0.0)) config_error("serving split '" + std::string(name) + "' is all zero");
    return split;
}

ExperimentConfig parse_config(const json &doc) {
    reject_unknown_keys(doc, "config",
                        {"topology", "serving", "data", "task", "strategies", "training", "seeds", "flops",
                         "flops_weighting", "theory", "output_dir"});
    ExperimentConfig cfg;
    try {
        if (!doc.contains("topology")) config_error("missing 'topology'");
        cfg.topology = parse_topology(doc.at("topology"));

        if (!doc.contains("serving")) config_error("missing 'serving'");
        const json &serving = doc.at("serving");
        reject_unknown_keys(serving, "serving", {"splits", "budgets"});
        if (serving.contains("splits") == serving.contains("budgets")) {
            config_error("serving needs exactly one of 'splits' or 'budgets'");
        }
        if (serving.contains("splits")) {
            for (const json &s : serving.at("splits")) cfg.splits.push_back(parse_split(s.get<std::string>()));
            if (cfg.splits.empty()) config_error("serving.splits is empty");
        } else {
            const json &budgets = serving.at("budgets");
            if (!budgets.is_object()) config_error("serving.budgets must map node ids to budgets");
            for (const auto &[id, value] : budgets.items()) {
                auto it = std::find_if(cfg.topology.nodes.begin(), cfg.topology.nodes.end(),
                                       [&](const NodeSpec &n) { return n.id == id; });
                if (it == cfg.topology.nodes.end()) config_error("serving.budgets names unknown node '" + id + "'");
                it->budget = radius_field(budgets, id.c_str(), 0.0);
            }
        }

        const json data = doc.value("data", json::object());
        reject_unknown_keys(data, "data", {"partitions", "total_samples", "test_samples"});
        cfg.partitions = field<std::vector<std::string>>(data, "partitions", {"equal"});
        for (const std::string &p : cfg.partitions) (void)partition_by_name(p);
        cfg.total_samples = field<std::size_t>(data, "total_samples", cfg.total_samples);
        cfg.test_samples = field<std::size_t>(data, "test_samples", cfg.test_samples);

        const json task = doc.value("task", json{{"kind", "mlp"}});
        const auto kind = field<std::string>(task, "kind", "mlp");
        if (kind == "mlp") {
            reject_unknown_keys(task, "task", {"kind", "input_dim", "hidden_dim", "num_classes",
                                               "teacher_weight_scale", "teacher_bias_scale"});
            cfg.task = TaskKind::kMlp;
            cfg.mlp.input_dim = field<std::size_t>(task, "input_dim", cfg.mlp.input_dim);
            cfg.mlp.hidden_dim = field<std::size_t>(task, "hidden_dim", cfg.mlp.hidden_dim);
            cfg.mlp.num_classes = field<std::size_t>(task, "num_classes", cfg.mlp.num_classes);
            cfg.mlp.teacher_weight_scale = field<double>(task, "teacher_weight_scale", cfg.mlp.teacher_weight_scale);
            cfg.mlp.teacher_bias_scale = field<double>(task, "teacher_bias_scale", cfg.mlp.teacher_bias_scale);
            cfg.mlp.num_exits = cfg.topology.num_exits;
        } else if (kind == "quadratic") {
            reject_unknown_keys(task, "task", {"kind", "dim", "min_eigenvalue", "max_eigenvalue", "center_radius",
                                               "sigma_min", "sigma_max", "init_radius"});
            cfg.task = TaskKind::kQuadratic;
            QuadraticSpec &q = cfg.quadratic;
            q.dim = field<std::size_t>(task, "dim", q.dim);
            q.min_eigenvalue = field<double>(task, "min_eigenvalue", q.min_eigenvalue);
            q.max_eigenvalue = field<double>(task, "max_eigenvalue", q.max_eigenvalue);
            q.center_radius = field<double>(task, "center_radius", q.center_radius);
            q.sigma_min = field<double>(task, "sigma_min", q.sigma_min);
            q.sigma_max = field<double>(task, "sigma_max", q.sigma_max);
            q.init_radius = field<double>(task, "init_radius", q.init_radius);
        } else {
            config_error("unknown task kind '" + kind + "'");
        }

        if (!doc.contains("strategies") || !doc.at("strategies").is_array()) config_error("missing 'strategies'");
        for (const json &s : doc.at("strategies")) {
            StrategySpec spec;
            if (s.is_string()) {
                spec.kind = parse_strategy(s.get<std::string>());
            } else {
                reject_unknown_keys(s, "strategy", {"name", "k", "p"});
                if (s.contains("k") && s.contains("p")) config_error("strategy sets both 'k' and 'p'");
                spec.kind = parse_strategy(field<std::string>(s, "name", ""));
                // "p" is accepted as an alias for the off-diagonal sampling probability.
                spec.k = field<double>(s, s.contains("p") ? "p" : "k", 0.0);
            }
            cfg.strategies.push_back(spec);
        }
        if (cfg.strategies.empty()) config_error("strategies list is empty");

        const json training = doc.value("training", json::object());
        cfg.training = parse_training(training);
        cfg.curvature_from_task = cfg.task == TaskKind::kQuadratic && !training.contains("mu") && !training.contains("L");

        cfg.seeds = field<std::vector<std::uint64_t>>(doc, "seeds", {0});
        if (cfg.seeds.empty()) config_error("seeds list is empty");

        if (doc.contains("flops")) {
            cfg.flops = field<std::vector<double>>(doc, "flops", {});
        } else if (cfg.topology.num_exits == 3) {
            cfg.flops = kDefaultFlops;
        } else {
            config_error("'flops' is required unless the topology has three exits");
        }
        if (cfg.flops.size() != static_cast<std::size_t>(cfg.topology.num_exits)) {
            config_error("'flops' needs one entry per exit");
        }
        const auto weighting = field<std::string>(doc, "flops_weighting", "direct");
        if (weighting == "direct") {
            cfg.flops_weighting = FlopsWeighting::kDirect;
        } else if (weighting == "inverse") {
            cfg.flops_weighting = FlopsWeighting::kInverse;
        } else {
            config_error("flops_weighting must be 'direct' or 'inverse'");
        }

        const json theory = doc.value("theory", json::object());
        reject_unknown_keys(theory, "theory", {"sigma_points", "sigma_batches", "bias_probes"});
        cfg.theory.sigma_points = field<std::size_t>(theory, "sigma_points", cfg.theory.sigma_points);
        cfg.theory.sigma_batches = field<std::size_t>(theory, "sigma_batches", cfg.theory.sigma_batches);
        cfg.theory.bias_probes = field<std::size_t>(theory, "bias_probes", cfg.theory.bias_probes);

        cfg.output_dir = field<std::string>(doc, "output_dir", cfg.output_dir);
    } catch (const json::exception &e) {
        config_error(std::string("malformed config: ") + e.what());
    } catch (const Error &e) {
        if (e.code() == ErrorCode::kConfigParse) throw;
        config_error(e.what());
    }
    validate(cfg.topology);
    if (cfg.task == TaskKind::kQuadratic && !std::isfinite(cfg.training.projection_radius)) {
        config_error("quadratic tasks need a finite training.projection_radius");
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) config_error("cannot read config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception &e) {
        config_error("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

std::vector<CellKey> enumerate_cells(const ExperimentConfig &cfg) {
    std::vector<CellKey> cells;
    std::vector<std::string> splits;
    for (const SplitSpec &s : cfg.splits) splits.push_back(s.name);
    if (splits.empty()) splits.push_back("budgets");
    for (std::uint64_t seed : cfg.seeds) {
        for (const std::string &partition : cfg.partitions) {
            for (const std::string &split : splits) {
                for (const StrategySpec &strategy : cfg.strategies) {
                    cells.push_back({seed, partition, split, strategy});
                }
            }
        }
    }
    std::stable_sort(cells.begin(), cells.end(),
                     [](const CellKey &a, const CellKey &b) { return cell_order(a) < cell_order(b); });
    return cells;
}

CellResult run_cell(const ExperimentConfig &cfg, const CellKey &key) {
    const auto num_exits = static_cast<std::size_t>(cfg.topology.num_exits);
    Topology topo = cfg.topology;
    const PartitionSizes sizes = partition_sizes(topo, partition_by_name(key.partition), cfg.total_samples);
    topo = with_dataset_sizes(std::move(topo), sizes.per_client);

    const SplitSpec *split = nullptr;
    for (const SplitSpec &s : cfg.splits) {
        if (s.name == key.split) split = &s;
    }
    std::optional<ExitWeights> split_weights;
    if (split != nullptr) {
        split_weights = weights_from_shares(split->shares);
        topo = with_budgets(std::move(topo), budgets_for_split(topo, split_weights->weights));
    }
    const RatePlan plan = compute_rate_plan(topo);
    const ExitWeights served{plan.lambda_exit_normalized, true};
    const SamplingMatrix p = build_sampling_matrix(topo, key.strategy.k);
    const ExitPools pools = exit_pools(topo, p);

    ExitWeights lambda;
    std::string lambda_source;
    const ExitWeights anticipated = split_weights ? *split_weights : serving_rate_weights(plan);
    const std::string anticipated_source = split_weights ? "split shares" : "rate plan";
    switch (key.strategy.kind) {
        case StrategyKind::kEqual:
            lambda = equal_weight(static_cast<int>(num_exits));
            lambda_source = "uniform";
            break;
        case StrategyKind::kFlopsProp:
            lambda = flops_prop(cfg.flops, cfg.flops_weighting);
            lambda_source = cfg.flops_weighting == FlopsWeighting::kDirect ? "flops" : "inverse flops";
            break;
        case StrategyKind::kServingRate:
            lambda = anticipated;
            lambda_source = anticipated_source;
            break;
        case StrategyKind::kGenErrorAdj:
            lambda = gen_error_adjusted(anticipated, pools.sizes, cfg.flops);
            lambda_source = anticipated_source + " x pool size / flops";
            break;
    }

    TrainConfig train = cfg.training;
    train.seed = key.seed;
    train.threads = 1;

    ResultRow row;
    row.key = key;
    row.tv = tv_distance(lambda, served);
    row.gen_proxy = gen_proxy(lambda, cfg.flops, pools.sizes);

    json report;
    json error_report;
    json metrics;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::size_t> client_sizes;
    std::vector<int> client_exits;
    for (const NodeSpec &node : topo.nodes) {
        client_sizes.push_back(node.dataset_size);
        client_exits.push_back(node.exit);
    }

    if (cfg.task == TaskKind::kMlp) {
        MlpSpec spec = cfg.mlp;
        spec.num_exits = static_cast<int>(num_exits);
        const MlpTask task = generate_classification_task(spec, topo, key.seed);
        const RunResult result = run(topo, task, lambda, p, train);
        const Params &w = result.final_model;

        Stream test_rng = Stream::keyed(key.seed, {tag(StreamTag::kData), ~std::uint64_t{0}});
        const Dataset test = task.sample(cfg.test_samples, test_rng);
        std::vector<double> losses;
        for (std::size_t e = 0; e < num_exits; ++e) {
            row.exit_accuracy.push_back(exit_accuracy(task.network(), w, static_cast<int>(e + 1), test));
            losses.push_back(exit_loss(task.network(), w, static_cast<int>(e + 1), test));
        }
        row.weighted_accuracy = weighted_quality(row.exit_accuracy, served.weights);
        row.weighted_loss = weighted_quality(losses, served.weights);
        const ServingOutcome outcome = simulate_serving(topo, plan, task.network(), w, test);
        row.system_accuracy_routed = outcome.system_accuracy;

        std::vector<Params> points;
        for (std::size_t i = 0; i < cfg.theory.sigma_points; ++i) {
            Stream rng = Stream::keyed(key.seed, {tag(StreamTag::kProbe), ~std::uint64_t{0}, i});
            points.push_back(task.network().random_params(rng, 1.0, 0.0));
        }
        BoundInputs in;
        in.alpha = alpha_table(lambda, pools, client_sizes, client_exits, train.server_lr);
        in.sigma = estimate_sigmas(task, points, train.batch_size, cfg.theory.sigma_batches, key.seed);
        in.moments = grad_second_moment(in.sigma, 0.0, 0.0);
        const double B = bound_B(in, p, train.local_steps);
        row.opt_bound = nan;
        row.empirical_opt_error = nan;
        error_report = json{{"tv", row.tv},
                            {"G_per_pair", in.moments.per_pair},
                            {"G_max", in.moments.max},
                            {"B", B},
                            {"B_estimated", true},
                            {"B_note", "sigma estimated from sampled batch gradients; L and Gamma terms omitted"},
                            {"opt_bound", number_json(nan)},
                            {"empirical_opt_error", number_json(nan)},
                            {"gen_proxy", row.gen_proxy}};
        metrics = json{{"exit_accuracy", row.exit_accuracy},
                       {"exit_loss", losses},
                       {"weighted_accuracy", row.weighted_accuracy},
                       {"weighted_loss", row.weighted_loss},
                       {"final_train_objective", result.trajectory.objective.back()}};
        report["serving"] = json{{"arrivals", outcome.arrivals},
                                 {"inflow", outcome.inflow},
                                 {"exit_count", outcome.exit_count},
                                 {"exit_accuracy_served", outcome.exit_accuracy},
                                 {"exit_loss_served", outcome.exit_loss},
                                 {"exit_accuracy_iid", outcome.iid_accuracy},
                                 {"iid_gap", outcome.iid_gap},
                                 {"system_accuracy", outcome.system_accuracy},
                                 {"system_loss", outcome.system_loss}};
    } else {
        const QuadraticTask task = QuadraticTask::generate(cfg.quadratic, topo, key.seed);
        if (cfg.curvature_from_task) {
            train.mu = task.strong_convexity();
            train.smoothness = task.smoothness();
        }
        const RunResult result = run(topo, task, lambda, p, train);
        const QuadraticOptimum opt = quadratic_minimizers(task, lambda, pools);
        const double radius = train.projection_radius;

        BoundInputs in;
        in.alpha = alpha_table(lambda, pools, client_sizes, client_exits, train.server_lr);
        in.sigma = quadratic_sigmas(task);
        in.moments = grad_second_moment(in.sigma, task.smoothness(), radius);
        in.smoothness = task.smoothness();
        in.heterogeneity = heterogeneity(task, lambda, pools);
        const double B = bound_B(in, p, train.local_steps);
        const double dist_sq = (result.initial_model - opt.w_star).squaredNorm();
        row.opt_bound = opt_error_bound(task.strong_convexity(), task.smoothness(), B, train.rounds,
                                        train.local_steps, dist_sq);
        row.empirical_opt_error = result.trajectory.objective.back() - opt.f_star;
        row.exit_accuracy.assign(num_exits, nan);
        row.weighted_accuracy = nan;
        row.system_accuracy_routed = nan;
        row.weighted_loss = task.population_objective(result.final_model, served);
        const double cap = task.loss_cap(radius);
        error_report = json{{"tv", row.tv},
                            {"gamma_schedule", schedule_gamma(task.strong_convexity(), task.smoothness(), train.local_steps)},
                            {"heterogeneity", in.heterogeneity},
                            {"G_per_pair", in.moments.per_pair},
                            {"G_max", in.moments.max},
                            {"B", B},
                            {"B_estimated", false},
                            {"opt_bound", row.opt_bound},
                            {"empirical_opt_error", row.empirical_opt_error},
                            {"initial_dist_sq", dist_sq},
                            {"loss_cap", cap},
                            {"bias_bound", bias_bound(cap, lambda, served)},
                            {"empirical_bias", empirical_bias(task, lambda, served, radius, cap,
                                                              cfg.theory.bias_probes, key.seed)},
                            {"gen_proxy", row.gen_proxy}};
        metrics = json{{"weighted_loss", row.weighted_loss},
                       {"f_star", opt.f_star},
                       {"final_objective", result.trajectory.objective.back()},
                       {"mu", task.strong_convexity()},
                       {"L", task.smoothness()}};
    }

    report["cell"] = json{{"seed", key.seed},
                          {"partition", key.partition},
                          {"split", key.split},
                          {"strategy", strategy_label(key.strategy)},
                          {"k", key.strategy.k}};
    report["lambda_tilde"] = lambda.weights;
    report["lambda_tilde_source"] = lambda_source;
    report["lambda_served"] = served.weights;
    report["sampling_matrix"] = sampling_json(p);
    report["rate_plan"] = plan_json(plan);
    std::vector<double> budgets;
    for (const NodeSpec &node : topo.nodes) budgets.push_back(node.budget);
    report["budgets"] = budgets;
    report["dataset_sizes"] = client_sizes;
    report["dropped_samples"] = sizes.dropped;
    report["pool_sizes"] = pools.sizes;
    report["metrics"] = metrics;
    report["error_report"] = error_report;
    report["training"] = json{{"rounds", train.rounds},
                              {"local_steps", train.local_steps},
                              {"batch_size", train.batch_size},
                              {"server_lr", train.server_lr},
                              {"lr_schedule", lr_schedule_name(train.lr_schedule)},
                              {"base_lr", train.base_lr},
                              {"momentum", train.momentum},
                              {"projection_radius", number_json(train.projection_radius)}};
    return {std::move(row), std::move(report)};
}

std::vector<CellResult> run_experiment(const ExperimentConfig &cfg, int threads) {
    const std::vector<CellKey> cells = enumerate_cells(cfg);
    std::vector<std::optional<CellResult>> slots(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                slots[i] = run_cell(cfg, cells[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, cells.size());
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < workers; ++k) pool.emplace_back(worker);
        for (std::thread &t : pool) t.join();
    }
    std::vector<CellResult> out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

std::string results_csv(const std::vector<ResultRow> &rows, int num_exits) {
    std::ostringstream out;
    out << "seed,partition,split,strategy,k";
    for (int e = 1; e <= num_exits; ++e) out << ",exit" << e << "_acc";
    out << ",weighted_acc,system_acc_routed,weighted_loss,tv,gen_proxy,opt_bound,empirical_opt_error\n";
    for (const ResultRow &r : rows) {
        out << r.key.seed << ',' << r.key.partition << ',' << r.key.split << ',' << strategy_label(r.key.strategy)
            << ',' << format_number(r.key.strategy.k);
        for (double a : r.exit_accuracy) out << ',' << format_number(a);
        for (double v : {r.weighted_accuracy, r.system_accuracy_routed, r.weighted_loss, r.tv, r.gen_proxy,
                         r.opt_bound, r.empirical_opt_error}) {
            out << ',' << format_number(v);
        }
        out << '\n';
    }
    return out.str();
}

void write_outputs(const std::vector<CellResult> &results, int num_exits, const std::filesystem::path &out_dir) {
    std::filesystem::create_directories(out_dir / "runs");
    std::vector<ResultRow> rows;
    for (const CellResult &r : results) {
        rows.push_back(r.row);
        std::ofstream report(out_dir / "runs" / cell_file_name(r.row.key), std::ios::binary);
        report << r.report.dump(2) << '\n';
        if (!report) throw Error(ErrorCode::kInvalidArgument, "cannot write run report under " + out_dir.string());
    }
    std::ofstream csv(out_dir / "results.csv", std::ios::binary);
    csv << results_csv(rows, num_exits);
    if (!csv) throw Error(ErrorCode::kInvalidArgument, "cannot write " + (out_dir / "results.csv").string());
}

namespace {

struct StrategyFilter {
    std::string name;
    std::optional<std::string> k;
};

StrategyFilter parse_filter(std::string_view s) {
    StrategyFilter f;
    const std::size_t at = s.find('@');
    f.name = std::string(s.substr(0, at));
    (void)parse_strategy(f.name);
    if (at != std::string_view::npos) {
        const std::string_view k = s.substr(at + 1);
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), value);
        if (ec != std::errc() || ptr != k.data() + k.size()) config_error("malformed strategy '" + std::string(s) + "'");
        f.k = format_number(value);
    }
    return f;
}

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::vector<CompareRow> compare_strategies(std::string_view csv, std::string_view baseline,
                                           std::string_view candidate) {
    const StrategyFilter base = parse_filter(baseline);
    const StrategyFilter cand = parse_filter(candidate);
    std::istringstream in{std::string(csv)};
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::kMissingRows, "results file is empty");
    const std::vector<std::string> header = split_csv_line(line);
    auto column = [&](const std::string &name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(ErrorCode::kMissingRows, "results file lacks column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_seed = column("seed"), c_part = column("partition"), c_split = column("split"),
                      c_strat = column("strategy"), c_k = column("k"), c_acc = column("weighted_acc");

    using GroupKey = std::pair<std::string, std::string>;
    std::map<GroupKey, std::map<std::string, double>> base_rows, cand_rows;
    auto add = [&](std::map<GroupKey, std::map<std::string, double>> &table, const std::vector<std::string> &f,
                   std::string_view which) {
        auto &group = table[{f[c_part], f[c_split]}];
        if (group.count(f[c_seed]) != 0) {
            throw Error(ErrorCode::kConfigParse, "strategy '" + std::string(which) +
                                                     "' matches several rows per seed; add @k to select one");
        }
        double value = 0.0;
        const std::string &acc = f[c_acc];
        const auto [ptr, ec] = std::from_chars(acc.data(), acc.data() + acc.size(), value);
        if (ec != std::errc()) value = std::numeric_limits<double>::quiet_NaN();
        group[f[c_seed]] = value;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size()) throw Error(ErrorCode::kConfigParse, "ragged results row: " + line);
        auto matches = [&](const StrategyFilter &flt) {
            return f[c_strat] == flt.name && (!flt.k || *flt.k == f[c_k]);
        };
        if (matches(base)) add(base_rows, f, baseline);
        if (matches(cand)) add(cand_rows, f, candidate);
    }
    if (base_rows.empty() || cand_rows.empty()) {
        throw Error(ErrorCode::kMissingRows, "no rows for '" + std::string(base_rows.empty() ? baseline : candidate) + "'");
    }
    std::set<GroupKey> groups;
    for (const auto &[g, _] : base_rows) groups.insert(g);
    for (const auto &[g, _] : cand_rows) groups.insert(g);
    std::vector<CompareRow> out;
    for (const GroupKey &g : groups) {
        const auto &b = base_rows[g];
        const auto &c = cand_rows[g];
        if (b.size() != c.size()) {
            throw Error(ErrorCode::kMissingRows, "partition " + g.first + ", split " + g.second +
                                                     " lacks matching seeds for both strategies");
        }
        std::vector<double> deltas;
        for (const auto &[seed, acc] : b) {
            auto it = c.find(seed);
            if (it == c.end()) {
                throw Error(ErrorCode::kMissingRows, "seed " + seed + " missing for the candidate in split " + g.second);
            }
            deltas.push_back(it->second - acc);
        }
        CompareRow row{g.first, g.second, deltas.size(), 0.0, 0.0};
        for (double d : deltas) row.mean_delta += d;
        row.mean_delta /= static_cast<double>(deltas.size());
        if (deltas.size() > 1) {
            double ss = 0.0;
            for (double d : deltas) ss += (d - row.mean_delta) * (d - row.mean_delta);
            row.std_error = std::sqrt(ss / static_cast<double>(deltas.size() - 1) / static_cast<double>(deltas.size()));
        }
        out.push_back(row);
    }
    return out;
}

}  // namespace eefl
