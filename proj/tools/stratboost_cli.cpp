// Command-line front end: simulation, fitting with every stopping rule,
// prediction, post-selection inference, stability selection, stratification
// diagnostics, selection metrics, and a per-iteration scaling benchmark.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numerical failure. Errors go to stderr as one-line JSON records.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stratboost/stratboost.hpp"

namespace sb = stratboost;
using sb::json;

namespace {

void emit_output(const json& doc, const std::string& path) {
    if (path.empty() || path == "-")
        sb::write_json(doc, std::cout);
    else
        sb::write_json(doc, path);
}

sb::SimulationConfig parse_simulation_config(const json& doc) {
    sb::SimulationConfig config;
    if (!doc.is_object()) throw sb::DataError("simulation config must be a JSON object");
    const auto beta = doc.at("true_beta").get<std::vector<double>>();
    config.true_beta = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                         static_cast<Eigen::Index>(beta.size()));
    config.num_strata = doc.value("num_strata", 1);
    config.mean_stratum_size = doc.value("mean_stratum_size", 100);
    if (doc.contains("baseline") && !doc["baseline"].is_string()) {
        for (const auto& item : doc["baseline"])
            config.baseline.push_back(
                sb::WeibullBaseline{item.at("shape").get<double>(), item.at("scale").get<double>()});
    }
    if (doc.contains("covariance")) {
        const auto& cov = doc["covariance"];
        const std::string structure = cov.value("structure", "independent");
        if (structure == "ar_block")
            config.covariance =
                sb::ArBlockCovariance{cov.at("block_size").get<int>(), cov.at("rho").get<double>()};
        else if (structure == "independent")
            config.covariance = sb::IndependentCovariance{};
        else
            throw sb::DataError("unknown covariance structure '" + structure + "'");
    }
    if (doc.contains("censoring")) {
        const auto& cen = doc["censoring"];
        const std::string dist = cen.value("distribution", "none");
        if (dist == "uniform")
            config.censoring = sb::UniformCensoring{cen.at("upper").get<double>()};
        else if (dist == "none")
            config.censoring = sb::NoCensoring{};
        else
            throw sb::DataError("unknown censoring distribution '" + dist + "'");
    }
    if (doc.contains("tau") && !doc["tau"].is_null()) config.tau = doc["tau"].get<double>();
    config.normalized = doc.value("normalized", false);
    return config;
}

struct FitOptions {
    std::string data_path;
    sb::DatasetRoles roles;
    std::string covariates_csv;
    double rate = 0.01;
    std::string stop = "fixed";
    int iterations = 500;
    int max_iterations = 500;
    int target = 1;
    double alpha = 0.001;
    double gamma = 1.0;
    int folds = 10;
    std::uint64_t seed = 0;
    int threads = sb::default_threads();
    bool trace = false;
    std::string out = "-";
};

void add_role_flags(CLI::App* cmd, FitOptions& opt) {
    cmd->add_option("--data", opt.data_path, "input CSV")->required();
    cmd->add_option("--time", opt.roles.time_column, "time column name");
    cmd->add_option("--status", opt.roles.status_column, "status column name");
    cmd->add_option("--stratum", opt.roles.stratum_column, "stratum column name");
    cmd->add_option("--covariates", opt.covariates_csv,
                    "comma-separated covariate columns (default: all remaining)");
}

void finalize_roles(FitOptions& opt) {
    if (opt.covariates_csv.empty()) return;
    std::string field;
    for (char c : opt.covariates_csv) {
        if (c == ',') {
            opt.roles.covariate_columns.push_back(field);
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    opt.roles.covariate_columns.push_back(field);
}

sb::StoppingRule build_rule(const FitOptions& opt) {
    if (opt.stop == "fixed") return sb::FixedRule{opt.iterations};
    if (opt.stop == "num-selected") return sb::NumSelectedRule{opt.target};
    if (opt.stop == "likelihood") return sb::LikelihoodChangeRule{opt.alpha};
    if (opt.stop == "bic") return sb::BicRule{};
    if (opt.stop == "ebic") return sb::EbicRule{opt.gamma};
    if (opt.stop == "aic") return sb::AicRule{};
    if (opt.stop == "cv") return sb::CrossValidationRule{opt.folds, opt.max_iterations, opt.seed};
    throw CLI::ValidationError("--stop", "unknown stopping rule '" + opt.stop + "'");
}

int run_fit(const FitOptions& options) {
    FitOptions opt = options;
    finalize_roles(opt);
    const sb::SurvivalDataset data = sb::read_dataset(opt.data_path, opt.roles);
    sb::BoostingConfig config;
    config.rate = opt.rate;
    config.max_iterations = opt.max_iterations;
    config.threads = opt.threads;
    const sb::StoppingRule rule = build_rule(opt);
    const sb::BoostingFit fit = sb::run_boosting(data, config, rule);
    const sb::FitDocument doc = sb::make_fit_document(fit, data, rule, opt.trace);
    emit_output(doc.document, opt.out);
    return 0;
}

Eigen::MatrixXd covariates_for_fit(const sb::SurvivalDataset& data, const sb::FitDocument& fit) {
    const auto vars = fit.variables();
    Eigen::MatrixXd out(data.n(), static_cast<Eigen::Index>(vars.size()));
    for (std::size_t j = 0; j < vars.size(); ++j) {
        auto it = std::find(data.variable_names.begin(), data.variable_names.end(), vars[j]);
        if (it == data.variable_names.end())
            throw sb::DataError("dataset is missing fit variable '" + vars[j] + "'");
        out.col(static_cast<Eigen::Index>(j)) =
            data.covariates.col(it - data.variable_names.begin());
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"componentwise gradient boosting for stratified Cox models"};
    app.require_subcommand(1);

    // simulate
    std::string sim_config_path, sim_out = "data.csv", sim_truth = "truth.json";
    std::uint64_t sim_seed = 1;
    auto* simulate = app.add_subcommand("simulate", "generate a stratified survival dataset");
    simulate->add_option("--config", sim_config_path, "simulation config JSON")->required();
    simulate->add_option("--seed", sim_seed, "RNG seed");
    simulate->add_option("--out", sim_out, "output dataset CSV");
    simulate->add_option("--truth", sim_truth, "output truth JSON");

    // fit / cv
    FitOptions fit_opt;
    auto* fit = app.add_subcommand("fit", "fit a boosting model");
    add_role_flags(fit, fit_opt);
    fit->add_option("--rate", fit_opt.rate, "step size (default 0.01)");
    fit->add_option("--stop", fit_opt.stop,
                    "stopping rule: fixed|num-selected|likelihood|bic|ebic|aic|cv");
    fit->add_option("--iterations", fit_opt.iterations, "iterations for --stop fixed (default 500)");
    fit->add_option("--max-iterations", fit_opt.max_iterations,
                    "iteration cap for adaptive and criterion rules (default 500)");
    fit->add_option("--target", fit_opt.target, "variables to select for --stop num-selected");
    fit->add_option("--alpha", fit_opt.alpha, "likelihood-change threshold (default 0.001)");
    fit->add_option("--gamma", fit_opt.gamma, "EBIC gamma in [0,1] (default 1)");
    fit->add_option("--folds", fit_opt.folds, "CV folds (default 10)");
    fit->add_option("--seed", fit_opt.seed, "CV fold-assignment seed");
    fit->add_option("--threads", fit_opt.threads, "worker threads (default STRATBOOST_THREADS or 1)");
    fit->add_flag("--trace", fit_opt.trace, "include selection counts and coefficient paths");
    fit->add_option("--out", fit_opt.out, "output fit JSON ('-' for stdout)");

    FitOptions cv_opt;
    auto* cv = app.add_subcommand("cv", "fit with cross-validated stopping (alias of fit --stop cv)");
    add_role_flags(cv, cv_opt);
    cv->add_option("--rate", cv_opt.rate, "step size (default 0.01)");
    cv->add_option("--folds", cv_opt.folds, "CV folds (default 10)");
    cv->add_option("--max-iterations", cv_opt.max_iterations, "iteration cap (default 500)");
    cv->add_option("--seed", cv_opt.seed, "fold-assignment seed");
    cv->add_option("--threads", cv_opt.threads, "worker threads");
    cv->add_flag("--trace", cv_opt.trace, "include trace data");
    cv->add_option("--out", cv_opt.out, "output fit JSON");

    // predict
    std::string predict_fit, predict_data, predict_reference, predict_out = "-";
    sb::DatasetRoles predict_roles;
    auto* predict = app.add_subcommand("predict", "per-row hazard ratios relative to covariate means");
    predict->add_option("--fit", predict_fit, "fit JSON")->required();
    predict->add_option("--data", predict_data, "query dataset CSV")->required();
    predict->add_option("--reference", predict_reference,
                        "reference dataset CSV for the covariate means (default: --data)");
    predict->add_option("--time", predict_roles.time_column, "time column name");
    predict->add_option("--status", predict_roles.status_column, "status column name");
    predict->add_option("--stratum", predict_roles.stratum_column, "stratum column name");
    predict->add_option("--out", predict_out, "output CSV ('-' for stdout)");

    // inference
    std::string inf_fit, inf_data, inf_out = "-";
    sb::DatasetRoles inf_roles;
    auto* inference = app.add_subcommand("inference", "post-selection refit with Wald inference");
    inference->add_option("--fit", inf_fit, "fit JSON")->required();
    inference->add_option("--data", inf_data, "dataset CSV")->required();
    inference->add_option("--time", inf_roles.time_column, "time column name");
    inference->add_option("--status", inf_roles.status_column, "status column name");
    inference->add_option("--stratum", inf_roles.stratum_column, "stratum column name");
    inference->add_option("--out", inf_out, "output JSON");

    // stability
    FitOptions stab_opt;
    int stab_subsamples = 50;
    double stab_threshold = 0.5;
    auto* stability = app.add_subcommand("stability", "stability selection over subsamples");
    add_role_flags(stability, stab_opt);
    stability->add_option("--rate", stab_opt.rate, "step size (default 0.01)");
    stability->add_option("--stop", stab_opt.stop, "stopping rule for each subsample fit");
    stability->add_option("--iterations", stab_opt.iterations, "iterations for --stop fixed");
    stability->add_option("--max-iterations", stab_opt.max_iterations, "iteration cap");
    stability->add_option("--target", stab_opt.target, "target for --stop num-selected");
    stability->add_option("--alpha", stab_opt.alpha, "likelihood-change threshold");
    stability->add_option("--gamma", stab_opt.gamma, "EBIC gamma");
    stability->add_option("--folds", stab_opt.folds, "CV folds");
    stability->add_option("--subsamples", stab_subsamples, "number of subsamples (default 50)");
    stability->add_option("--threshold", stab_threshold, "stable-set frequency threshold (default 0.5)");
    stability->add_option("--seed", stab_opt.seed, "subsampling seed");
    stability->add_option("--threads", stab_opt.threads, "worker threads");
    stability->add_option("--out", stab_opt.out, "output JSON");

    // strata-summary
    std::string ss_data, ss_var, ss_time = "time", ss_out = "-";
    auto* strata_summary =
        app.add_subcommand("strata-summary", "survival-time summary grouped by a candidate variable");
    strata_summary->add_option("--data", ss_data, "dataset CSV")->required();
    strata_summary->add_option("--var", ss_var, "column to group by")->required();
    strata_summary->add_option("--time", ss_time, "time column name");
    strata_summary->add_option("--out", ss_out, "output JSON");

    // metrics
    std::string metrics_fit, metrics_truth, metrics_out = "-";
    auto* metrics = app.add_subcommand("metrics", "selection metrics of a fit against a truth file");
    metrics->add_option("--fit", metrics_fit, "fit JSON")->required();
    metrics->add_option("--truth", metrics_truth, "truth JSON")->required();
    metrics->add_option("--out", metrics_out, "output JSON");

    // bench
    int bench_base_n = 500, bench_base_p = 250, bench_doublings = 2, bench_iterations = 20,
        bench_repeats = 3;
    std::uint64_t bench_seed = 1;
    std::string bench_out = "-";
    auto* bench = app.add_subcommand("bench", "per-iteration wall-time scaling across doubled n and p");
    bench->add_option("--base-n", bench_base_n, "base sample size");
    bench->add_option("--base-p", bench_base_p, "base variable count");
    bench->add_option("--doublings", bench_doublings, "number of doublings per series");
    bench->add_option("--iterations", bench_iterations, "boosting iterations per timing run");
    bench->add_option("--repeats", bench_repeats, "repeats per configuration (best taken)");
    bench->add_option("--seed", bench_seed, "RNG seed");
    bench->add_option("--out", bench_out, "output JSON");

    try {
        app.parse(argc, argv);

        if (*simulate) {
            const sb::SimulationConfig config = parse_simulation_config(sb::read_json(sim_config_path));
            const sb::SimulatedDataset sim = sb::simulate_survival_cox(config, sim_seed);
            sb::write_dataset(sim.dataset, sim_out);
            sb::write_json(sb::truth_to_json(sim, sim_seed), sim_truth);
            std::cout << "wrote " << sim_out << " (n=" << sim.dataset.n()
                      << ", p=" << sim.dataset.p() << ", strata=" << sim.dataset.num_strata()
                      << ", events=" << sim.dataset.events << ", censoring="
                      << sb::double_to_string(sim.censoring_rate) << ") and " << sim_truth << "\n";
            return 0;
        }
        if (*fit) return run_fit(fit_opt);
        if (*cv) {
            cv_opt.stop = "cv";
            return run_fit(cv_opt);
        }
        if (*predict) {
            const sb::FitDocument fitdoc = sb::read_fit(predict_fit);
            const sb::SurvivalDataset query = sb::read_dataset(predict_data, predict_roles);
            const Eigen::MatrixXd query_cov = covariates_for_fit(query, fitdoc);
            Eigen::MatrixXd reference_cov = query_cov;
            if (!predict_reference.empty()) {
                const sb::SurvivalDataset reference = sb::read_dataset(predict_reference, predict_roles);
                reference_cov = covariates_for_fit(reference, fitdoc);
            }
            const Eigen::VectorXd hr =
                sb::predict_hazard_ratio(fitdoc.beta(), reference_cov, query_cov);
            std::ofstream file;
            std::ostream* out = &std::cout;
            if (predict_out != "-" && !predict_out.empty()) {
                file.open(predict_out);
                if (!file) throw sb::DataError("cannot open '" + predict_out + "' for writing");
                out = &file;
            }
            *out << "hazard_ratio\n";
            for (Eigen::Index i = 0; i < hr.size(); ++i)
                *out << sb::double_to_string(hr[i]) << '\n';
            return 0;
        }
        if (*inference) {
            const sb::FitDocument fitdoc = sb::read_fit(inf_fit);
            const sb::SurvivalDataset data = sb::read_dataset(inf_data, inf_roles);
            std::vector<Eigen::Index> selected;
            for (const auto& [name, value] : fitdoc.coefficients()) {
                auto it = std::find(data.variable_names.begin(), data.variable_names.end(), name);
                if (it == data.variable_names.end())
                    throw sb::DataError("dataset is missing fit variable '" + name + "'");
                selected.push_back(it - data.variable_names.begin());
            }
            std::sort(selected.begin(), selected.end());
            const sb::StratumIndex index = sb::build_stratum_index(data);
            const sb::InferenceTable table = sb::refit_inference(data, index, selected);
            emit_output(sb::inference_to_json(table), inf_out);
            return 0;
        }
        if (*stability) {
            FitOptions opt = stab_opt;
            finalize_roles(opt);
            const sb::SurvivalDataset data = sb::read_dataset(opt.data_path, opt.roles);
            sb::BoostingConfig config;
            config.rate = opt.rate;
            config.max_iterations = opt.max_iterations;
            config.threads = opt.threads;
            const sb::StoppingRule rule = build_rule(opt);
            const sb::StabilityResult result =
                sb::stability_selection(data, config, rule, stab_subsamples, stab_threshold, opt.seed);
            emit_output(sb::stability_to_json(result, rule), opt.out);
            return 0;
        }
        if (*strata_summary) {
            std::ifstream in(ss_data);
            if (!in) throw sb::DataError("cannot open '" + ss_data + "' for reading");
            std::string line;
            if (!std::getline(in, line)) throw sb::DataError("'" + ss_data + "' is empty");
            auto header = sb::detail::split_csv_line(line);
            std::ptrdiff_t var_col = -1, time_col = -1;
            for (std::size_t c = 0; c < header.size(); ++c) {
                if (header[c] == ss_var) var_col = static_cast<std::ptrdiff_t>(c);
                if (header[c] == ss_time) time_col = static_cast<std::ptrdiff_t>(c);
            }
            if (var_col < 0) throw sb::DataError("missing column '" + ss_var + "'");
            if (time_col < 0) throw sb::DataError("missing column '" + ss_time + "'");
            std::vector<std::string> values;
            std::vector<double> times;
            std::size_t row = 0;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                ++row;
                auto fields = sb::detail::split_csv_line(line);
                if (fields.size() != header.size())
                    throw sb::DataError("row " + std::to_string(row) + ": expected " +
                                        std::to_string(header.size()) + " fields");
                values.push_back(fields[static_cast<std::size_t>(var_col)]);
                times.push_back(sb::detail::parse_field_double(
                    fields[static_cast<std::size_t>(time_col)], row, ss_time));
            }
            const sb::StrataSummary summary = sb::strata_summary(values, times);
            emit_output(sb::strata_summary_to_json(summary, ss_var), ss_out);
            return 0;
        }
        if (*metrics) {
            const sb::FitDocument fitdoc = sb::read_fit(metrics_fit);
            const json truth = sb::read_json(metrics_truth);
            if (!truth.contains("schema") || truth["schema"] != sb::kTruthSchema)
                throw sb::DataError("'" + metrics_truth + "' is not a truth document");
            const auto true_beta = truth.at("true_beta").get<std::vector<double>>();
            const Eigen::VectorXd truth_vec = Eigen::Map<const Eigen::VectorXd>(
                true_beta.data(), static_cast<Eigen::Index>(true_beta.size()));
            const sb::SelectionMetrics m = sb::selection_metrics(fitdoc.beta(), truth_vec);
            emit_output(sb::metrics_to_json(m), metrics_out);
            return 0;
        }
        if (*bench) {
            json results = json::array();
            auto run_config = [&](const std::string& series, int n, int p) {
                sb::SimulationConfig config;
                Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
                for (int j = 0; j < std::min(10, p); ++j) beta[j] = (j % 2 == 0) ? 1.0 : -1.0;
                config.true_beta = beta;
                config.num_strata = 5;
                config.mean_stratum_size = std::max(1, n / 5);
                const sb::SimulatedDataset sim = sb::simulate_survival_cox(config, bench_seed);
                const sb::StratumIndex index = sb::build_stratum_index(sim.dataset);
                double best = std::numeric_limits<double>::infinity();
                for (int r = 0; r < bench_repeats; ++r) {
                    auto state = sb::detail::initial_state(sim.dataset, index);
                    const auto start = std::chrono::steady_clock::now();
                    for (int m = 0; m < bench_iterations; ++m)
                        sb::boost_step(sim.dataset, index, state, 0.01, 1);
                    const auto stop = std::chrono::steady_clock::now();
                    const double seconds = std::chrono::duration<double>(stop - start).count();
                    best = std::min(best, seconds / bench_iterations);
                }
                results.push_back(json{{"series", series},
                                       {"n", sim.dataset.n()},
                                       {"p", p},
                                       {"iterations", bench_iterations},
                                       {"seconds_per_iteration", best}});
            };
            for (int d = 0; d <= bench_doublings; ++d)
                run_config("n", bench_base_n << d, bench_base_p);
            for (int d = 1; d <= bench_doublings; ++d)
                run_config("p", bench_base_n, bench_base_p << d);
            emit_output(json{{"schema", sb::kBenchSchema}, {"results", results}}, bench_out);
            return 0;
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const sb::NumericalError& e) {
        std::cerr << json{{"error", "numerical"}, {"exit", 3}, {"message", e.what()}}.dump() << "\n";
        return 3;
    } catch (const sb::DataError& e) {
        std::cerr << json{{"error", "data"}, {"exit", 2}, {"message", e.what()}}.dump() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << json{{"error", "data"}, {"exit", 2}, {"message", e.what()}}.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "usage"}, {"exit", 1}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
}
