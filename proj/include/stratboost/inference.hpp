#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stratboost/boosting.hpp"
#include "stratboost/common.hpp"
#include "stratboost/dataset.hpp"
#include "stratboost/likelihood.hpp"
#include "stratboost/parallel.hpp"
#include "stratboost/rng.hpp"

namespace stratboost {

/// Hazard ratio of each query row relative to the reference covariate means:
/// exp((x - reference column means)' beta).
inline Eigen::VectorXd predict_hazard_ratio(const Eigen::VectorXd& beta,
                                            const Eigen::MatrixXd& reference,
                                            const Eigen::MatrixXd& query) {
    if (reference.cols() != beta.size() || query.cols() != beta.size())
        throw DataError("predict: covariate columns do not match the coefficient vector");
    const Eigen::RowVectorXd means = reference.colwise().mean();
    Eigen::VectorXd out(query.rows());
    for (Eigen::Index i = 0; i < query.rows(); ++i)
        out[i] = std::exp((query.row(i) - means).dot(beta.transpose()));
    return out;
}

/// Two-sided standard normal p-value for a z statistic.
inline double normal_two_sided_p(double z) {
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

struct InferenceRow {
    std::string variable;
    double coefficient = 0.0;
    double hazard_ratio = 1.0;  // exp(coefficient)
    double standard_error = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    double ci_lower = 1.0;  // 95% interval for exp(coefficient)
    double ci_upper = 1.0;
};

struct InferenceTable {
    std::vector<InferenceRow> rows;
    Eigen::Index n = 0;
    int events = 0;
    long newton_iterations = 0;
    double max_score = 0.0;  // gradient max-norm at the reported optimum
    double loglik = 0.0;
};

/// Maximizes the stratified partial likelihood over the selected variables by
/// damped Newton iterations and reports Wald inference. Convergence requires
/// gradient max-norm below 1e-8; iteration stops with an error on a singular
/// Hessian, coefficients past 50 in magnitude (monotone-likelihood
/// separation), or 100 iterations without convergence.
inline InferenceTable refit_inference(const SurvivalDataset& data, const StratumIndex& index,
                                      std::span<const Eigen::Index> selected) {
    if (selected.empty()) throw DataError("refit: no variables selected");
    const auto s = static_cast<Eigen::Index>(selected.size());
    SurvivalDataset sub;
    sub.time = data.time;
    sub.status = data.status;
    sub.stratum = data.stratum;
    sub.stratum_labels = data.stratum_labels;
    sub.events = data.events;
    sub.covariates.resize(data.n(), s);
    for (Eigen::Index a = 0; a < s; ++a) {
        sub.covariates.col(a) = data.covariates.col(selected[static_cast<std::size_t>(a)]);
        sub.variable_names.push_back(
            data.variable_names[static_cast<std::size_t>(selected[static_cast<std::size_t>(a)])]);
    }

    constexpr double kScoreTolerance = 1e-8;
    constexpr double kSeparationBound = 50.0;
    constexpr int kMaxIterations = 100;

    std::vector<Eigen::Index> all_columns(static_cast<std::size_t>(s));
    for (Eigen::Index a = 0; a < s; ++a) all_columns[static_cast<std::size_t>(a)] = a;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(s);
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(data.n());
    double loglik = log_partial_likelihood(sub, index, eta);
    Eigen::MatrixXd info(s, s);
    Eigen::VectorXd score(s);
    long iterations = 0;
    bool converged = false;
    for (int it = 0; it < kMaxIterations; ++it) {
        score = first_derivative_all(sub, index, eta);
        info = observed_information(sub, index, eta, all_columns);
        if (score.lpNorm<Eigen::Infinity>() < kScoreTolerance) {
            converged = true;
            break;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success)
            throw NumericalError("singular Hessian in refit: selected columns are collinear or constant");
        const Eigen::VectorXd direction = llt.solve(score);
        // accept a step once the likelihood does not drop beyond fp noise;
        // near the optimum true gains fall below representable resolution
        const double ascent_floor = loglik - 1e-10 * (1.0 + std::abs(loglik));
        double step = 1.0;
        Eigen::VectorXd candidate;
        double candidate_ll = -std::numeric_limits<double>::infinity();
        for (int half = 0; half < 40; ++half) {
            candidate = beta + step * direction;
            Eigen::VectorXd candidate_eta = sub.covariates * candidate;
            bool ok = candidate_eta.allFinite();
            if (ok) {
                candidate_ll = log_partial_likelihood(sub, index, candidate_eta);
                ok = std::isfinite(candidate_ll) && candidate_ll >= ascent_floor;
            }
            if (ok) {
                eta = std::move(candidate_eta);
                break;
            }
            step *= 0.5;
            if (half == 39)
                throw NumericalError("refit step halving failed to improve the likelihood");
        }
        beta = candidate;
        loglik = candidate_ll;
        ++iterations;
        if (beta.lpNorm<Eigen::Infinity>() > kSeparationBound)
            throw NumericalError("monotone likelihood separation in refit: |coefficient| exceeded 50");
    }
    if (!converged)
        throw NumericalError("refit did not converge within 100 Newton iterations");

    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success)
        throw NumericalError("singular Hessian in refit at the optimum");
    const Eigen::MatrixXd covariance = llt.solve(Eigen::MatrixXd::Identity(s, s));

    InferenceTable table;
    table.n = data.n();
    table.events = data.events;
    table.newton_iterations = iterations;
    table.max_score = score.lpNorm<Eigen::Infinity>();
    table.loglik = loglik;
    for (Eigen::Index a = 0; a < s; ++a) {
        InferenceRow row;
        row.variable = sub.variable_names[static_cast<std::size_t>(a)];
        row.coefficient = beta[a];
        row.hazard_ratio = std::exp(beta[a]);
        row.standard_error = std::sqrt(covariance(a, a));
        row.z = beta[a] / row.standard_error;
        row.p_value = normal_two_sided_p(row.z);
        row.ci_lower = std::exp(beta[a] - 1.96 * row.standard_error);
        row.ci_upper = std::exp(beta[a] + 1.96 * row.standard_error);
        table.rows.push_back(std::move(row));
    }
    return table;
}

struct StabilityResult {
    std::vector<double> frequency;  // per variable, in [0, 1]
    double threshold = 0.5;
    int subsamples = 50;
    std::vector<Eigen::Index> stable_set;  // frequency >= threshold
    std::vector<std::string> variable_names;
};

/// Stability selection: B stratified half-subsamples without replacement,
/// a boosting fit on each, and per-variable selection frequencies. The
/// stable set keeps variables selected in at least `threshold` of the fits.
inline StabilityResult stability_selection(const SurvivalDataset& data, const BoostingConfig& config,
                                           const StoppingRule& rule, int subsamples, double threshold,
                                           std::uint64_t seed) {
    if (subsamples < 1) throw DataError("stability: subsamples must be >= 1");
    config.validate();
    validate_rule(rule);

    std::vector<std::vector<Eigen::Index>> stratum_members(
        static_cast<std::size_t>(data.num_strata()));
    for (Eigen::Index i = 0; i < data.n(); ++i)
        stratum_members[static_cast<std::size_t>(data.stratum[i])].push_back(i);

    const auto p = data.p();
    std::vector<std::vector<char>> selected(static_cast<std::size_t>(subsamples),
                                            std::vector<char>(static_cast<std::size_t>(p), 0));
    parallel_for(0, subsamples, config.threads, [&](std::int64_t b) {
        constexpr int kMaxAttempts = 16;
        std::vector<Eigen::Index> rows;
        bool feasible = false;
        for (int attempt = 0; attempt < kMaxAttempts && !feasible; ++attempt) {
            rows.clear();
            auto engine = make_engine(seed, static_cast<std::uint64_t>(b) * kMaxAttempts +
                                                static_cast<std::uint64_t>(attempt));
            for (const auto& members : stratum_members) {
                auto shuffled = members;
                std::shuffle(shuffled.begin(), shuffled.end(), engine);
                const auto take = std::max<std::size_t>(1, shuffled.size() / 2);
                rows.insert(rows.end(), shuffled.begin(),
                            shuffled.begin() + static_cast<std::ptrdiff_t>(take));
            }
            std::sort(rows.begin(), rows.end());
            int events = 0;
            for (Eigen::Index i : rows) events += data.status[i];
            feasible = events > 0;
        }
        if (!feasible)
            throw DataError("infeasible subsample: no events after repeated attempts");
        const SurvivalDataset sub = subset_dataset(data, rows);
        BoostingConfig inner = config;
        inner.threads = 1;
        const BoostingFit fit = run_boosting(sub, inner, rule);
        for (Eigen::Index j : fit.selected)
            selected[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)] = 1;
    });

    StabilityResult result;
    result.threshold = threshold;
    result.subsamples = subsamples;
    result.variable_names = data.variable_names;
    result.frequency.assign(static_cast<std::size_t>(p), 0.0);
    for (Eigen::Index j = 0; j < p; ++j) {
        long count = 0;
        for (int b = 0; b < subsamples; ++b)
            count += selected[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
        result.frequency[static_cast<std::size_t>(j)] =
            static_cast<double>(count) / static_cast<double>(subsamples);
        if (result.frequency[static_cast<std::size_t>(j)] >= threshold)
            result.stable_set.push_back(j);
    }
    return result;
}

/// Five-number summary via linear-interpolation quantiles over a sorted copy.
struct StrataGroup {
    std::string label;
    Eigen::Index count = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

struct StrataSummary {
    std::vector<StrataGroup> groups;
    bool median_split = false;       // continuous variable split at its median
    double split_value = 0.0;        // meaningful when median_split
    bool degenerate = false;         // median split produced a single group
};

namespace detail {

inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
    const auto n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= n) return sorted[n - 1];
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline StrataGroup five_number_summary(std::string label, std::vector<double> values) {
    std::sort(values.begin(), values.end());
    StrataGroup g;
    g.label = std::move(label);
    g.count = static_cast<Eigen::Index>(values.size());
    g.min = values.front();
    g.q1 = interpolated_quantile(values, 0.25);
    g.median = interpolated_quantile(values, 0.5);
    g.q3 = interpolated_quantile(values, 0.75);
    g.max = values.back();
    return g;
}

inline std::optional<double> parse_double(const std::string& text) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace detail

/// Survival-time summaries grouped by a candidate stratification variable.
/// Up to 20 distinct values (or any non-numeric variable) groups by level;
/// otherwise the variable is split at its median.
inline StrataSummary strata_summary(const std::vector<std::string>& values,
                                    const std::vector<double>& times) {
    if (values.size() != times.size())
        throw DataError("strata_summary: variable and time lengths differ");
    if (values.empty()) throw DataError("strata_summary: empty input");
    for (double t : times)
        if (!std::isfinite(t) || t <= 0.0)
            throw DataError("strata_summary: times must be positive and finite");

    bool numeric = true;
    std::vector<double> numeric_values(values.size());
    for (std::size_t i = 0; i < values.size() && numeric; ++i) {
        auto parsed = detail::parse_double(values[i]);
        if (parsed)
            numeric_values[i] = *parsed;
        else
            numeric = false;
    }
    std::map<std::string, std::vector<double>> levels;
    std::size_t distinct = 0;
    if (numeric) {
        std::vector<double> sorted = numeric_values;
        std::sort(sorted.begin(), sorted.end());
        distinct = static_cast<std::size_t>(
            std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    }

    StrataSummary out;
    constexpr std::size_t kCategoricalMax = 20;
    if (!numeric || distinct <= kCategoricalMax) {
        std::map<double, std::vector<double>> numeric_levels;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (numeric)
                numeric_levels[numeric_values[i]].push_back(times[i]);
            else
                levels[values[i]].push_back(times[i]);
        }
        if (numeric) {
            for (auto& [value, group_times] : numeric_levels) {
                char buf[64];
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
                out.groups.push_back(
                    detail::five_number_summary(std::string(buf, ptr), std::move(group_times)));
            }
        } else {
            for (auto& [label, group_times] : levels)
                out.groups.push_back(detail::five_number_summary(label, std::move(group_times)));
        }
        return out;
    }

    out.median_split = true;
    std::vector<double> sorted = numeric_values;
    std::sort(sorted.begin(), sorted.end());
    out.split_value = detail::interpolated_quantile(sorted, 0.5);
    std::vector<double> low_times, high_times;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (numeric_values[i] <= out.split_value)
            low_times.push_back(times[i]);
        else
            high_times.push_back(times[i]);
    }
    if (low_times.empty() || high_times.empty()) {
        out.degenerate = true;
        auto& all = low_times.empty() ? high_times : low_times;
        out.groups.push_back(detail::five_number_summary("all", std::move(all)));
        return out;
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), out.split_value);
    const std::string split_text(buf, ptr);
    out.groups.push_back(detail::five_number_summary("<= " + split_text, std::move(low_times)));
    out.groups.push_back(detail::five_number_summary("> " + split_text, std::move(high_times)));
    return out;
}

}  // namespace stratboost
