#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "stratboost/common.hpp"
#include "stratboost/dataset.hpp"
#include "stratboost/likelihood.hpp"
#include "stratboost/parallel.hpp"
#include "stratboost/rng.hpp"
#include "stratboost/stopping.hpp"

namespace stratboost {

struct BoostingConfig {
    double rate = 0.01;       // step size applied to the Newton update
    int max_iterations = 500; // fixed-rule default and cap for adaptive rules
    int threads = 1;

    void validate() const {
        if (!(rate > 0.0)) throw DataError("rate must be > 0");
        if (max_iterations < 1) throw DataError("max_iterations must be >= 1");
    }
};

/// One boosting iteration: which variable moved, by how much, and the state
/// reached. Sparse update records reconstruct the coefficient vector at any
/// iteration without storing p values per step.
struct StepRecord {
    Eigen::Index selected = 0;
    double l1 = 0.0;      // first derivative at the selected variable, pre-update
    double l2 = 0.0;      // second derivative at the selected variable
    double delta = 0.0;   // coefficient change applied
    double loglik = 0.0;  // log partial likelihood after the update
    int support_size = 0; // nonzero coefficients after the update
    bool ascent_violated = false;  // likelihood dropped relative to the previous iteration
};

struct BoostingTrace {
    double initial_loglik = 0.0;  // l(0), the empty-model likelihood
    std::vector<StepRecord> steps;

    long iterations() const { return static_cast<long>(steps.size()); }
};

struct BoostingFit {
    Eigen::VectorXd beta;
    std::vector<Eigen::Index> selected;  // support of beta, ascending
    long iterations_run = 0;
    std::string stopping_rule;
    double final_loglik = 0.0;
    BoostingTrace trace;
    bool capped = false;            // adaptive rule hit the iteration cap before its condition
    bool boundary_minimum = false;  // criterion / CV argmin sits at the cap
    std::optional<CriterionHistory> criterion_history;
};

namespace detail {

struct BoostingState {
    Eigen::VectorXd beta;
    Eigen::VectorXd eta;
    SweepWorkspace sweep;  // exp weights and risk sums at the current eta
    double loglik = 0.0;
    int support_size = 0;
};

inline BoostingState initial_state(const SurvivalDataset& data, const StratumIndex& index) {
    BoostingState st;
    st.beta = Eigen::VectorXd::Zero(data.p());
    st.eta = Eigen::VectorXd::Zero(data.n());
    st.sweep.compute(data, index, st.eta);
    st.loglik = st.sweep.loglik;
    return st;
}

constexpr double kCurvatureFloor = 1e-12;

}  // namespace detail

/// One componentwise update: computes all first derivatives, selects the
/// variable with the largest magnitude (smallest index on ties), and applies
/// the damped Newton step rate * L1(j*) / L2(j*). The state's sweep
/// workspace serves the gradient scan, the curvature, and the post-update
/// likelihood from a single exp pass per iteration.
inline StepRecord boost_step(const SurvivalDataset& data, const StratumIndex& index,
                             detail::BoostingState& st, double rate, int threads = 1) {
    const Eigen::VectorXd l1 = st.sweep.first_derivative_all(data, index, threads);
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index j = 0; j < l1.size(); ++j) {
        const double a = std::abs(l1[j]);
        if (a > best_abs) {
            best_abs = a;
            best = j;
        }
    }
    const double l2 = st.sweep.second_derivative(data, index, best);
    if (!(l2 > detail::kCurvatureFloor))
        throw NumericalError("degenerate curvature for variable '" +
                             data.variable_names[static_cast<std::size_t>(best)] +
                             "' (second derivative " + std::to_string(l2) + ")");
    const double delta = rate * l1[best] / l2;
    if (!std::isfinite(delta))
        throw NumericalError("non-finite update for variable '" +
                             data.variable_names[static_cast<std::size_t>(best)] + "'");
    const double old_value = st.beta[best];
    st.beta[best] += delta;
    if (old_value == 0.0 && st.beta[best] != 0.0)
        ++st.support_size;
    else if (old_value != 0.0 && st.beta[best] == 0.0)
        --st.support_size;
    update_linear_predictor(data, st.eta, best, delta);
    const double previous = st.loglik;
    st.sweep.compute(data, index, st.eta);
    st.loglik = st.sweep.loglik;

    StepRecord rec;
    rec.selected = best;
    rec.l1 = l1[best];
    rec.l2 = l2;
    rec.delta = delta;
    rec.loglik = st.loglik;
    rec.support_size = st.support_size;
    rec.ascent_violated = st.loglik < previous;
    return rec;
}

/// Coefficient vector at iteration m, replayed from the sparse step records.
/// The replay applies the same additions in the same order as the original
/// run, so the result is bit-identical to the live coefficients.
inline Eigen::VectorXd reconstruct_beta(const BoostingTrace& trace, Eigen::Index p, long m) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (long k = 0; k < m; ++k) {
        const auto& rec = trace.steps[static_cast<std::size_t>(k)];
        beta[rec.selected] += rec.delta;
    }
    return beta;
}

inline std::vector<Eigen::Index> support_of(const Eigen::VectorXd& beta) {
    std::vector<Eigen::Index> out;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (beta[j] != 0.0) out.push_back(j);
    return out;
}

/// Per-variable selection counts and the iteration (1-based) of first
/// selection, -1 for never. Counts sum to the number of iterations.
struct SelectionCount {
    Eigen::Index variable = 0;
    long count = 0;
    long first_iteration = -1;
};

inline std::vector<SelectionCount> selection_frequency(const BoostingTrace& trace, Eigen::Index p) {
    std::vector<SelectionCount> out(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) out[static_cast<std::size_t>(j)].variable = j;
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        auto& slot = out[static_cast<std::size_t>(trace.steps[k].selected)];
        ++slot.count;
        if (slot.first_iteration < 0) slot.first_iteration = static_cast<long>(k) + 1;
    }
    return out;
}

/// Per-variable coefficient path as (iteration, value) breakpoints; a
/// variable's value at iteration m is its last breakpoint at or before m
/// (zero before the first). Variables never selected have empty paths.
struct PathBreakpoint {
    long iteration = 0;
    double value = 0.0;
};

inline std::vector<std::vector<PathBreakpoint>> coefficient_path(const BoostingTrace& trace,
                                                                 Eigen::Index p) {
    std::vector<std::vector<PathBreakpoint>> paths(static_cast<std::size_t>(p));
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        const auto& rec = trace.steps[k];
        beta[rec.selected] += rec.delta;
        paths[static_cast<std::size_t>(rec.selected)].push_back(
            PathBreakpoint{static_cast<long>(k) + 1, beta[rec.selected]});
    }
    return paths;
}

namespace detail {

inline BoostingFit finalize_fit(BoostingState&& st, BoostingTrace&& trace,
                                std::string rule_description) {
    BoostingFit fit;
    fit.beta = std::move(st.beta);
    fit.selected = support_of(fit.beta);
    fit.iterations_run = trace.iterations();
    fit.stopping_rule = std::move(rule_description);
    fit.final_loglik = trace.steps.empty() ? trace.initial_loglik : trace.steps.back().loglik;
    fit.trace = std::move(trace);
    return fit;
}

/// Fit at iteration m reconstructed from a longer run's trace. Bit-identical
/// to rerunning with a fixed rule of m iterations because the replay repeats
/// the exact update sequence.
inline BoostingFit fit_at_iteration(const SurvivalDataset& data, const BoostingTrace& trace,
                                    long m, std::string rule_description) {
    BoostingFit fit;
    fit.beta = reconstruct_beta(trace, data.p(), m);
    fit.selected = support_of(fit.beta);
    fit.iterations_run = m;
    fit.stopping_rule = std::move(rule_description);
    fit.final_loglik =
        m == 0 ? trace.initial_loglik : trace.steps[static_cast<std::size_t>(m) - 1].loglik;
    fit.trace.initial_loglik = trace.initial_loglik;
    fit.trace.steps.assign(trace.steps.begin(), trace.steps.begin() + m);
    return fit;
}

template <class Criterion>
BoostingFit criterion_minimizing_run_impl(const SurvivalDataset& data, const StratumIndex& index,
                                          const BoostingConfig& config, Criterion&& criterion,
                                          const std::string& rule_description) {
    BoostingState st = initial_state(data, index);
    BoostingTrace trace;
    trace.initial_loglik = st.loglik;
    CriterionHistory history;
    history.values.reserve(static_cast<std::size_t>(config.max_iterations) + 1);
    history.values.push_back(criterion(st.loglik, 0));
    for (int m = 1; m <= config.max_iterations; ++m) {
        trace.steps.push_back(boost_step(data, index, st, config.rate, config.threads));
        history.values.push_back(criterion(st.loglik, st.support_size));
    }
    history.locate_argmin();
    BoostingFit fit = fit_at_iteration(data, trace, history.argmin, rule_description);
    fit.boundary_minimum = history.boundary;
    fit.criterion_history = std::move(history);
    return fit;
}

}  // namespace detail

/// Algorithm: initialize beta = 0; each iteration computes all first partial
/// derivatives, picks the largest in magnitude, and nudges that coefficient
/// by rate / L2 times L1; the stopping rule decides when to quit (adaptive
/// rules per iteration, criterion rules post hoc over the recorded path).
/// Deterministic given dataset, config, and rule.
inline BoostingFit run_boosting(const SurvivalDataset& data, const BoostingConfig& config,
                                const StoppingRule& rule);

/// Seeded fold assignment, stratified by stratum label: within each stratum
/// the subjects are shuffled and dealt round-robin. Retries with fresh
/// sub-seeds when a fold ends up with no events or some retained stratum
/// loses all its events; throws DataError("infeasible folds") after that.
inline std::vector<std::vector<Eigen::Index>> make_stratified_folds(const SurvivalDataset& data,
                                                                    int folds, std::uint64_t seed) {
    if (folds < 2) throw DataError("folds must be >= 2");
    if (folds > data.n()) throw DataError("more folds than subjects");
    const int num_strata = data.num_strata();
    constexpr int kMaxAttempts = 16;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::vector<std::vector<Eigen::Index>> assignment(static_cast<std::size_t>(folds));
        for (int g = 0; g < num_strata; ++g) {
            std::vector<Eigen::Index> members;
            for (Eigen::Index i = 0; i < data.n(); ++i)
                if (data.stratum[i] == g) members.push_back(i);
            auto engine = make_engine(seed, static_cast<std::uint64_t>(attempt) * num_strata + g);
            std::shuffle(members.begin(), members.end(), engine);
            for (std::size_t k = 0; k < members.size(); ++k)
                assignment[k % static_cast<std::size_t>(folds)].push_back(members[k]);
        }
        for (auto& fold : assignment) std::sort(fold.begin(), fold.end());

        // feasibility: every fold holds an event, and excluding any fold
        // leaves at least one event in each stratum it still represents
        std::vector<int> stratum_events(static_cast<std::size_t>(num_strata), 0);
        std::vector<int> stratum_count(static_cast<std::size_t>(num_strata), 0);
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            stratum_events[static_cast<std::size_t>(data.stratum[i])] += data.status[i];
            ++stratum_count[static_cast<std::size_t>(data.stratum[i])];
        }
        bool feasible = true;
        for (const auto& fold : assignment) {
            if (fold.empty()) {
                feasible = false;
                break;
            }
            int fold_events = 0;
            std::vector<int> fold_stratum_events(static_cast<std::size_t>(num_strata), 0);
            std::vector<int> fold_stratum_count(static_cast<std::size_t>(num_strata), 0);
            for (Eigen::Index i : fold) {
                const auto g = static_cast<std::size_t>(data.stratum[i]);
                fold_events += data.status[i];
                fold_stratum_events[g] += data.status[i];
                ++fold_stratum_count[g];
            }
            if (fold_events == 0) {
                feasible = false;
                break;
            }
            for (std::size_t g = 0; g < static_cast<std::size_t>(num_strata); ++g) {
                const bool represented_in_retained = stratum_count[g] - fold_stratum_count[g] > 0;
                if (represented_in_retained && stratum_events[g] - fold_stratum_events[g] == 0) {
                    feasible = false;
                    break;
                }
            }
            if (!feasible) break;
        }
        if (feasible) return assignment;
    }
    throw DataError("infeasible folds: could not keep events in every fold and retained stratum");
}

/// Cross-validated choice of the iteration count. For each fold k the model
/// is boosted on the data excluding that fold; the fold's score at iteration
/// m is the likelihood of the full data minus the likelihood of the training
/// data, negated. The minimizer of the fold-summed score (first minimum on
/// ties, summed in fixed fold order) picks the iteration count for the
/// full-data refit.
struct CrossValidationResult {
    std::vector<std::vector<Eigen::Index>> folds;
    std::vector<std::vector<double>> fold_scores;  // [fold][m], m = 0..max_iterations
    std::vector<double> total_score;               // summed over folds in index order
    long argmin = 0;
    bool boundary = false;
    BoostingFit fit;  // full-data refit at argmin
};

inline CrossValidationResult cross_validate(const SurvivalDataset& data, const BoostingConfig& config,
                                            std::vector<std::vector<Eigen::Index>> folds,
                                            int max_iterations) {
    config.validate();
    if (max_iterations < 1) throw DataError("cv: max_iterations must be >= 1");
    const auto num_folds = folds.size();
    if (num_folds < 2) throw DataError("cv: need at least 2 folds");
    const StratumIndex full_index = build_stratum_index(data);

    CrossValidationResult result;
    result.folds = std::move(folds);
    result.fold_scores.assign(num_folds,
                              std::vector<double>(static_cast<std::size_t>(max_iterations) + 1, 0.0));

    const int outer_threads = config.threads;
    parallel_for(0, static_cast<std::int64_t>(num_folds), outer_threads, [&](std::int64_t k) {
        const auto& fold = result.folds[static_cast<std::size_t>(k)];
        std::vector<Eigen::Index> retained;
        retained.reserve(static_cast<std::size_t>(data.n()) - fold.size());
        std::size_t f = 0;
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            if (f < fold.size() && fold[f] == i) {
                ++f;
                continue;
            }
            retained.push_back(i);
        }
        const SurvivalDataset train = subset_dataset(data, retained);
        const StratumIndex train_index = build_stratum_index(train);

        detail::BoostingState st = detail::initial_state(train, train_index);
        auto& scores = result.fold_scores[static_cast<std::size_t>(k)];
        Eigen::VectorXd eta_full = Eigen::VectorXd::Zero(data.n());
        double full_ll = log_partial_likelihood(data, full_index, eta_full);
        scores[0] = -(full_ll - st.loglik);
        const int inner_threads = outer_threads > 1 ? 1 : config.threads;
        for (int m = 1; m <= max_iterations; ++m) {
            const StepRecord rec = boost_step(train, train_index, st, config.rate, inner_threads);
            update_linear_predictor(data, eta_full, rec.selected, rec.delta);
            full_ll = log_partial_likelihood(data, full_index, eta_full);
            scores[static_cast<std::size_t>(m)] = -(full_ll - rec.loglik);
        }
    });

    result.total_score.assign(static_cast<std::size_t>(max_iterations) + 1, 0.0);
    for (std::size_t k = 0; k < num_folds; ++k)
        for (std::size_t m = 0; m < result.total_score.size(); ++m)
            result.total_score[m] += result.fold_scores[k][m];
    result.argmin = 0;
    for (std::size_t m = 1; m < result.total_score.size(); ++m)
        if (result.total_score[m] < result.total_score[static_cast<std::size_t>(result.argmin)])
            result.argmin = static_cast<long>(m);
    result.boundary = result.argmin == max_iterations;

    BoostingConfig refit_config = config;
    refit_config.max_iterations = std::max(1, static_cast<int>(result.argmin));
    result.fit = run_boosting(data, refit_config, FixedRule{static_cast<int>(result.argmin)});
    result.fit.boundary_minimum = result.boundary;
    CriterionHistory history;
    history.values = result.total_score;
    history.argmin = result.argmin;
    history.boundary = result.boundary;
    result.fit.criterion_history = std::move(history);
    return result;
}

inline CrossValidationResult cross_validate(const SurvivalDataset& data, const BoostingConfig& config,
                                            int folds, int max_iterations, std::uint64_t seed) {
    auto result = cross_validate(data, config, make_stratified_folds(data, folds, seed), max_iterations);
    result.fit.stopping_rule = "cv(folds=" + std::to_string(folds) +
                               ",max_iterations=" + std::to_string(max_iterations) +
                               ",seed=" + std::to_string(seed) +
                               ") -> iteration " + std::to_string(result.argmin);
    return result;
}

inline BoostingFit run_boosting(const SurvivalDataset& data, const BoostingConfig& config,
                                const StoppingRule& rule) {
    config.validate();
    validate_rule(rule);
    const std::string description = describe_rule(rule);

    if (const auto* cv = std::get_if<CrossValidationRule>(&rule)) {
        auto result = cross_validate(data, config, cv->folds, cv->max_iterations, cv->seed);
        result.fit.stopping_rule = describe_rule(rule) + " -> iteration " + std::to_string(result.argmin);
        return std::move(result.fit);
    }

    const StratumIndex index = build_stratum_index(data);
    const int d = data.events;
    const auto p = static_cast<int>(data.p());

    if (std::holds_alternative<BicRule>(rule) || std::holds_alternative<EbicRule>(rule) ||
        std::holds_alternative<AicRule>(rule)) {
        detail::BoostingState probe = detail::initial_state(data, index);
        const double l0 = probe.loglik;
        auto criterion = [&, l0](double ll, int support) {
            if (std::holds_alternative<BicRule>(rule)) return bic(ll, l0, support, d);
            if (const auto* eb = std::get_if<EbicRule>(&rule)) return ebic(ll, support, d, p, eb->gamma);
            return aic(ll, support);
        };
        return detail::criterion_minimizing_run_impl(data, index, config, criterion, description);
    }

    detail::BoostingState st = detail::initial_state(data, index);
    BoostingTrace trace;
    trace.initial_loglik = st.loglik;
    bool capped = false;

    if (const auto* fixed = std::get_if<FixedRule>(&rule)) {
        for (int m = 0; m < fixed->iterations; ++m)
            trace.steps.push_back(boost_step(data, index, st, config.rate, config.threads));
    } else if (const auto* ns = std::get_if<NumSelectedRule>(&rule)) {
        for (int m = 0; m < config.max_iterations && st.support_size != ns->target; ++m)
            trace.steps.push_back(boost_step(data, index, st, config.rate, config.threads));
        capped = st.support_size != ns->target;
    } else if (const auto* lc = std::get_if<LikelihoodChangeRule>(&rule)) {
        capped = true;
        for (int m = 0; m < config.max_iterations; ++m) {
            const double previous = st.loglik;
            trace.steps.push_back(boost_step(data, index, st, config.rate, config.threads));
            if (likelihood_change_stop(previous, st.loglik, lc->alpha)) {
                capped = false;
                break;
            }
        }
    }

    BoostingFit fit = detail::finalize_fit(std::move(st), std::move(trace), description);
    fit.capped = capped;
    return fit;
}

/// Runs boosting to the iteration cap recording the criterion at every
/// iteration (m = 0 included), then returns the fit reconstructed at the
/// first criterion minimizer with the full history attached.
inline BoostingFit criterion_minimizing_run(const SurvivalDataset& data, const BoostingConfig& config,
                                            const StoppingRule& criterion_rule) {
    if (!std::holds_alternative<BicRule>(criterion_rule) &&
        !std::holds_alternative<EbicRule>(criterion_rule) &&
        !std::holds_alternative<AicRule>(criterion_rule))
        throw DataError("criterion_minimizing_run: rule must be bic, ebic, or aic");
    return run_boosting(data, config, criterion_rule);
}

}  // namespace stratboost
