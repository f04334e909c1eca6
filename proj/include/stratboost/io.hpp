#pragma once

#include <Eigen/Core>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stratboost/boosting.hpp"
#include "stratboost/common.hpp"
#include "stratboost/dataset.hpp"
#include "stratboost/inference.hpp"
#include "stratboost/simulate.hpp"

namespace stratboost {

using json = nlohmann::json;

inline constexpr const char* kFitSchema = "stratboost.fit/1";
inline constexpr const char* kTruthSchema = "stratboost.truth/1";
inline constexpr const char* kInferenceSchema = "stratboost.inference/1";
inline constexpr const char* kStabilitySchema = "stratboost.stability/1";
inline constexpr const char* kStrataSummarySchema = "stratboost.strata_summary/1";
inline constexpr const char* kMetricsSchema = "stratboost.metrics/1";
inline constexpr const char* kBenchSchema = "stratboost.bench/1";

/// Shortest decimal representation that round-trips to the same double.
inline std::string double_to_string(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(field);
    return fields;
}

inline double parse_field_double(const std::string& text, std::size_t row, const std::string& column) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw DataError("row " + std::to_string(row) + " column '" + column +
                        "': cannot parse '" + text + "' as a number");
    return value;
}

}  // namespace detail

/// Column roles for tabular ingestion. Covariates default to every column
/// not claimed by a role, in header order.
struct DatasetRoles {
    std::string time_column = "time";
    std::string status_column = "status";
    std::string stratum_column;                  // empty -> single stratum
    std::vector<std::string> covariate_columns;  // empty -> all remaining
};

/// Reads a comma-separated file with a header row into a validated dataset.
/// Parse failures name the offending row and column.
inline SurvivalDataset read_dataset(const std::string& path, const DatasetRoles& roles = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
    const std::vector<std::string> header = detail::split_csv_line(line);
    std::map<std::string, std::size_t> column_of;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (column_of.count(header[c]))
            throw DataError("duplicate column '" + header[c] + "' in header");
        column_of[header[c]] = c;
    }
    auto require = [&](const std::string& name) {
        auto it = column_of.find(name);
        if (it == column_of.end()) throw DataError("missing column '" + name + "'");
        return it->second;
    };
    const std::size_t time_col = require(roles.time_column);
    const std::size_t status_col = require(roles.status_column);
    std::optional<std::size_t> stratum_col;
    if (!roles.stratum_column.empty()) stratum_col = require(roles.stratum_column);

    std::vector<std::size_t> covariate_cols;
    std::vector<std::string> covariate_names;
    if (roles.covariate_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == time_col || c == status_col || (stratum_col && c == *stratum_col)) continue;
            covariate_cols.push_back(c);
            covariate_names.push_back(header[c]);
        }
    } else {
        for (const auto& name : roles.covariate_columns) {
            covariate_cols.push_back(require(name));
            covariate_names.push_back(name);
        }
    }

    RawColumns raw;
    raw.variable_names = covariate_names;
    std::vector<std::vector<double>> covariate_rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        raw.time.push_back(detail::parse_field_double(fields[time_col], row, roles.time_column));
        const double status_value =
            detail::parse_field_double(fields[status_col], row, roles.status_column);
        if (status_value != 0.0 && status_value != 1.0)
            throw DataError("row " + std::to_string(row) + ": status value '" + fields[status_col] +
                            "' is not 0 or 1");
        raw.status.push_back(static_cast<int>(status_value));
        if (stratum_col) raw.stratum.push_back(fields[*stratum_col]);
        std::vector<double> covariate_row(covariate_cols.size());
        for (std::size_t k = 0; k < covariate_cols.size(); ++k)
            covariate_row[k] =
                detail::parse_field_double(fields[covariate_cols[k]], row, covariate_names[k]);
        covariate_rows.push_back(std::move(covariate_row));
    }
    if (row == 0) throw DataError("'" + path + "' has no data rows");
    raw.covariates.resize(static_cast<Eigen::Index>(covariate_rows.size()),
                          static_cast<Eigen::Index>(covariate_cols.size()));
    for (std::size_t i = 0; i < covariate_rows.size(); ++i)
        for (std::size_t j = 0; j < covariate_rows[i].size(); ++j)
            raw.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                covariate_rows[i][j];
    return validate_dataset(std::move(raw));
}

/// Writes the dataset as CSV: time, status, stratum (original labels; omitted
/// for a single unlabeled stratum), then covariates. Values round-trip.
inline void write_dataset(const SurvivalDataset& data, std::ostream& out) {
    const bool write_stratum = !(data.num_strata() == 1 && data.stratum_labels[0] == "0");
    out << "time,status";
    if (write_stratum) out << ",stratum";
    for (const auto& name : data.variable_names) out << ',' << name;
    out << '\n';
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        out << double_to_string(data.time[i]) << ',' << data.status[i];
        if (write_stratum)
            out << ',' << data.stratum_labels[static_cast<std::size_t>(data.stratum[i])];
        for (Eigen::Index j = 0; j < data.p(); ++j)
            out << ',' << double_to_string(data.covariates(i, j));
        out << '\n';
    }
}

inline void write_dataset(const SurvivalDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_dataset(data, out);
    if (!out) throw DataError("failed writing '" + path + "'");
}

/// Machine-readable fit document. The canonical form is the JSON object;
/// write -> read -> write is byte-identical (sorted keys, shortest
/// round-trip numbers).
struct FitDocument {
    json document;

    std::vector<std::string> variables() const {
        return document.at("variables").get<std::vector<std::string>>();
    }
    std::map<std::string, double> coefficients() const {
        return document.at("coefficients").get<std::map<std::string, double>>();
    }
    /// Coefficient vector aligned with variables(), zeros where unselected.
    Eigen::VectorXd beta() const {
        const auto vars = variables();
        const auto coef = coefficients();
        Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vars.size()));
        for (std::size_t j = 0; j < vars.size(); ++j) {
            auto it = coef.find(vars[j]);
            if (it != coef.end()) out[static_cast<Eigen::Index>(j)] = it->second;
        }
        return out;
    }
};

inline json rule_to_json(const StoppingRule& rule) {
    struct Visitor {
        json operator()(const FixedRule& r) const {
            return json{{"type", "fixed"}, {"iterations", r.iterations}};
        }
        json operator()(const NumSelectedRule& r) const {
            return json{{"type", "num_selected"}, {"target", r.target}};
        }
        json operator()(const LikelihoodChangeRule& r) const {
            return json{{"type", "likelihood"}, {"alpha", r.alpha}};
        }
        json operator()(const BicRule&) const { return json{{"type", "bic"}}; }
        json operator()(const EbicRule& r) const {
            return json{{"type", "ebic"}, {"gamma", r.gamma}};
        }
        json operator()(const AicRule&) const { return json{{"type", "aic"}}; }
        json operator()(const CrossValidationRule& r) const {
            return json{{"type", "cv"},
                        {"folds", r.folds},
                        {"max_iterations", r.max_iterations},
                        {"seed", r.seed}};
        }
    };
    return std::visit(Visitor{}, rule);
}

inline FitDocument make_fit_document(const BoostingFit& fit, const SurvivalDataset& data,
                                     const StoppingRule& rule, bool include_trace) {
    json doc;
    doc["schema"] = kFitSchema;
    doc["variables"] = data.variable_names;
    json coefficients = json::object();
    for (Eigen::Index j : fit.selected)
        coefficients[data.variable_names[static_cast<std::size_t>(j)]] = fit.beta[j];
    doc["coefficients"] = coefficients;
    doc["iterations"] = fit.iterations_run;
    doc["stopping_rule"] = rule_to_json(rule);
    doc["stopping_rule"]["description"] = fit.stopping_rule;
    doc["final_log_partial_likelihood"] = fit.final_loglik;
    doc["capped"] = fit.capped;
    doc["boundary_minimum"] = fit.boundary_minimum;
    doc["fingerprint"] = json{{"n", data.n()},
                              {"p", data.p()},
                              {"strata", data.num_strata()},
                              {"events", data.events}};
    if (fit.criterion_history) {
        doc["criterion_history"] = json{{"values", fit.criterion_history->values},
                                        {"argmin", fit.criterion_history->argmin},
                                        {"boundary", fit.criterion_history->boundary}};
    }
    if (include_trace) {
        json trace;
        trace["initial_log_partial_likelihood"] = fit.trace.initial_loglik;
        const auto counts = selection_frequency(fit.trace, data.p());
        json selection = json::array();
        for (const auto& c : counts)
            selection.push_back(json{{"variable", data.variable_names[static_cast<std::size_t>(c.variable)]},
                                     {"count", c.count},
                                     {"first_iteration", c.first_iteration}});
        trace["selection_frequency"] = selection;
        const auto paths = coefficient_path(fit.trace, data.p());
        json path_doc = json::object();
        for (std::size_t j = 0; j < paths.size(); ++j) {
            if (paths[j].empty()) continue;
            json breakpoints = json::array();
            for (const auto& bp : paths[j]) breakpoints.push_back(json::array({bp.iteration, bp.value}));
            path_doc[data.variable_names[j]] = breakpoints;
        }
        trace["coefficient_path"] = path_doc;
        doc["trace"] = trace;
    }
    doc["full_beta"] = std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size());
    return FitDocument{std::move(doc)};
}

inline void write_json(const json& doc, std::ostream& out) { out << doc.dump(2) << '\n'; }

inline void write_json(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_json(doc, out);
    if (!out) throw DataError("failed writing '" + path + "'");
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("cannot parse '" + path + "': " + e.what());
    }
    return doc;
}

inline void write_fit(const FitDocument& fit, const std::string& path) {
    write_json(fit.document, path);
}

inline FitDocument read_fit(const std::string& path) {
    json doc = read_json(path);
    if (!doc.is_object() || !doc.contains("schema") || doc["schema"] != kFitSchema)
        throw DataError("'" + path + "' is not a '" + std::string(kFitSchema) + "' document");
    return FitDocument{std::move(doc)};
}

inline json truth_to_json(const SimulatedDataset& sim, std::uint64_t seed) {
    return json{{"schema", kTruthSchema},
                {"true_beta",
                 std::vector<double>(sim.true_beta.data(), sim.true_beta.data() + sim.true_beta.size())},
                {"variable_names", sim.dataset.variable_names},
                {"censoring_rate", sim.censoring_rate},
                {"num_strata", sim.dataset.num_strata()},
                {"n", sim.dataset.n()},
                {"seed", seed}};
}

inline json inference_to_json(const InferenceTable& table) {
    json rows = json::array();
    for (const auto& r : table.rows)
        rows.push_back(json{{"variable", r.variable},
                            {"coefficient", r.coefficient},
                            {"hazard_ratio", r.hazard_ratio},
                            {"standard_error", r.standard_error},
                            {"z", r.z},
                            {"p_value", r.p_value},
                            {"ci_lower", r.ci_lower},
                            {"ci_upper", r.ci_upper}});
    return json{{"schema", kInferenceSchema},
                {"n", table.n},
                {"events", table.events},
                {"newton_iterations", table.newton_iterations},
                {"max_score", table.max_score},
                {"log_partial_likelihood", table.loglik},
                {"rows", rows}};
}

inline json stability_to_json(const StabilityResult& result, const StoppingRule& rule) {
    json frequencies = json::object();
    for (std::size_t j = 0; j < result.frequency.size(); ++j)
        frequencies[result.variable_names[j]] = result.frequency[j];
    json stable = json::array();
    for (Eigen::Index j : result.stable_set)
        stable.push_back(result.variable_names[static_cast<std::size_t>(j)]);
    return json{{"schema", kStabilitySchema},
                {"subsamples", result.subsamples},
                {"threshold", result.threshold},
                {"rule", rule_to_json(rule)},
                {"frequencies", frequencies},
                {"stable_set", stable}};
}

inline json strata_summary_to_json(const StrataSummary& summary, const std::string& variable) {
    json groups = json::array();
    for (const auto& g : summary.groups)
        groups.push_back(json{{"label", g.label},
                              {"count", g.count},
                              {"min", g.min},
                              {"q1", g.q1},
                              {"median", g.median},
                              {"q3", g.q3},
                              {"max", g.max}});
    json doc{{"schema", kStrataSummarySchema},
             {"variable", variable},
             {"median_split", summary.median_split},
             {"degenerate", summary.degenerate},
             {"groups", groups}};
    if (summary.median_split) doc["split_value"] = summary.split_value;
    return doc;
}

inline json metrics_to_json(const SelectionMetrics& m) {
    return json{{"schema", kMetricsSchema},
                {"sensitivity", m.sensitivity},
                {"specificity", m.specificity},
                {"fdr", m.fdr},
                {"sse", m.sse},
                {"selected", m.selected},
                {"true_signals", m.true_signals}};
}

}  // namespace stratboost
