#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "stratboost/common.hpp"
#include "stratboost/dataset.hpp"
#include "stratboost/rng.hpp"

namespace stratboost {

/// Cumulative baseline hazard scale * t^shape.
struct WeibullBaseline {
    double shape = 1.0;
    double scale = 1.0;
};

struct IndependentCovariance {};

/// Within consecutive blocks of `block_size` variables the correlation is
/// rho^|a-b| (AR(1)); across blocks independent. The final block may be
/// short when block_size does not divide p.
struct ArBlockCovariance {
    int block_size = 1;
    double rho = 0.0;
};

using CovarianceStructure = std::variant<IndependentCovariance, ArBlockCovariance>;

struct NoCensoring {};

struct UniformCensoring {
    double upper = 1.0;
};

using CensoringScheme = std::variant<NoCensoring, UniformCensoring>;

struct SimulationConfig {
    Eigen::VectorXd true_beta;
    int num_strata = 1;
    int mean_stratum_size = 100;
    std::vector<WeibullBaseline> baseline;  // empty -> auto
    CovarianceStructure covariance = IndependentCovariance{};
    CensoringScheme censoring = NoCensoring{};
    double tau = std::numeric_limits<double>::infinity();  // administrative truncation
    bool normalized = false;                               // z-score columns after generation

    void validate() const {
        if (true_beta.size() < 1) throw DataError("true_beta must be nonempty");
        if (num_strata < 1) throw DataError("num_strata must be >= 1");
        if (mean_stratum_size < 1) throw DataError("mean_stratum_size must be >= 1");
        if (!baseline.empty() && static_cast<int>(baseline.size()) != num_strata)
            throw DataError("baseline must list one (shape, scale) pair per stratum");
        for (const auto& b : baseline)
            if (!(b.shape > 0.0) || !(b.scale > 0.0))
                throw DataError("Weibull shape and scale must be > 0");
        if (const auto* ar = std::get_if<ArBlockCovariance>(&covariance)) {
            if (ar->block_size < 1) throw DataError("block_size must be >= 1");
            if (!(std::abs(ar->rho) < 1.0)) throw DataError("|rho| must be < 1");
        }
        if (const auto* u = std::get_if<UniformCensoring>(&censoring))
            if (!(u->upper > 0.0)) throw DataError("censoring upper bound must be > 0");
        if (!(tau > 0.0)) throw DataError("tau must be > 0");
    }
};

/// Default per-stratum baselines: constant hazards (shape 1) with log-scales
/// evenly spaced from 0 to 1 across strata, so that expected survival time
/// differs by stratum while staying on a unit time scale.
inline std::vector<WeibullBaseline> resolve_auto_baseline(int num_strata) {
    std::vector<WeibullBaseline> out(static_cast<std::size_t>(num_strata));
    for (int g = 0; g < num_strata; ++g) {
        const double log_scale =
            num_strata == 1 ? 0.0 : static_cast<double>(g) / (num_strata - 1);
        out[static_cast<std::size_t>(g)] = WeibullBaseline{1.0, std::exp(log_scale)};
    }
    return out;
}

/// Rows are independent multivariate normal draws with the configured block
/// structure, generated by the AR(1) recursion x_t = rho x_{t-1} +
/// sqrt(1 - rho^2) z_t within each block.
inline Eigen::MatrixXd gen_covariates(const SimulationConfig& config, Eigen::Index n,
                                      std::mt19937_64& rng) {
    const Eigen::Index p = config.true_beta.size();
    int block_size = static_cast<int>(p);
    double rho = 0.0;
    if (const auto* ar = std::get_if<ArBlockCovariance>(&config.covariance)) {
        block_size = ar->block_size;
        rho = ar->rho;
    }
    const double innovation = std::sqrt(1.0 - rho * rho);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd x(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double z = normal(rng);
            const bool block_start = j % block_size == 0;
            x(i, j) = block_start ? z : rho * x(i, j - 1) + innovation * z;
        }
    }
    return x;
}

/// Inverse-transform sampling under the cumulative hazard scale * t^shape *
/// exp(eta): T = (-log U / (scale * exp(eta)))^(1/shape).
inline Eigen::VectorXd gen_event_times(const WeibullBaseline& baseline, const Eigen::VectorXd& eta,
                                       std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Eigen::VectorXd t(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // -log(1 - u) keeps the draw strictly positive
        const double e = std::max(-std::log1p(-uniform(rng)), 1e-300);
        t[i] = std::pow(e / (baseline.scale * std::exp(eta[i])), 1.0 / baseline.shape);
    }
    return t;
}

/// Applies independent uniform censoring and administrative truncation at
/// tau: observed = min(T, C, tau), event iff T <= min(C, tau). Censoring
/// draws are coupled through a shared uniform so shrinking the upper bound
/// never uncensors a subject under the same seed.
inline void apply_censoring(const Eigen::VectorXd& latent, const CensoringScheme& censoring,
                            double tau, std::mt19937_64& rng, Eigen::VectorXd& observed,
                            Eigen::VectorXi& status) {
    const auto n = latent.size();
    observed.resize(n);
    status.resize(n);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double upper = std::numeric_limits<double>::infinity();
    if (const auto* u = std::get_if<UniformCensoring>(&censoring)) upper = u->upper;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double draw = 1.0 - uniform(rng);  // in (0, 1], keeps C > 0
        const double censor_time = std::min(std::isinf(upper) ? upper : upper * draw, tau);
        if (latent[i] <= censor_time) {
            observed[i] = latent[i];
            status[i] = 1;
        } else {
            observed[i] = censor_time;
            status[i] = 0;
        }
    }
}

struct SimulatedDataset {
    SurvivalDataset dataset;
    Eigen::VectorXd true_beta;
    Eigen::VectorXd latent_times;  // pre-censoring event times, dataset row order
    double censoring_rate = 0.0;
};

/// Draws stratum sizes as Poisson(mean_stratum_size) (minimum 1), generates
/// covariates, latent Weibull event times, and censoring per stratum from
/// RNG streams derived from the seed by stratum index, and assembles the
/// validated dataset. Deterministic given the seed.
inline SimulatedDataset simulate_survival_cox(const SimulationConfig& config, std::uint64_t seed) {
    config.validate();
    const Eigen::Index p = config.true_beta.size();
    const int num_strata = config.num_strata;
    const std::vector<WeibullBaseline> baseline =
        config.baseline.empty() ? resolve_auto_baseline(num_strata) : config.baseline;

    auto size_engine = make_engine(seed, 0);
    std::poisson_distribution<int> size_dist(config.mean_stratum_size);
    std::vector<int> sizes(static_cast<std::size_t>(num_strata));
    Eigen::Index n = 0;
    for (int g = 0; g < num_strata; ++g) {
        sizes[static_cast<std::size_t>(g)] = std::max(1, size_dist(size_engine));
        n += sizes[static_cast<std::size_t>(g)];
    }

    Eigen::MatrixXd covariates(n, p);
    std::vector<std::mt19937_64> engines;
    engines.reserve(static_cast<std::size_t>(num_strata));
    std::vector<Eigen::Index> offsets(static_cast<std::size_t>(num_strata));
    Eigen::Index offset = 0;
    for (int g = 0; g < num_strata; ++g) {
        engines.push_back(make_engine(seed, 1 + static_cast<std::uint64_t>(g)));
        offsets[static_cast<std::size_t>(g)] = offset;
        covariates.middleRows(offset, sizes[static_cast<std::size_t>(g)]) =
            gen_covariates(config, sizes[static_cast<std::size_t>(g)], engines.back());
        offset += sizes[static_cast<std::size_t>(g)];
    }

    if (config.normalized) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double mean = covariates.col(j).mean();
            const double sd = n > 1 ? std::sqrt((covariates.col(j).array() - mean).square().sum() /
                                                static_cast<double>(n - 1))
                                    : 1.0;
            covariates.col(j) = (covariates.col(j).array() - mean) / (sd > 0.0 ? sd : 1.0);
        }
    }

    const Eigen::VectorXd eta = covariates * config.true_beta;
    Eigen::VectorXd latent(n), observed(n);
    Eigen::VectorXi status(n);
    RawColumns raw;
    raw.time.resize(static_cast<std::size_t>(n));
    raw.status.resize(static_cast<std::size_t>(n));
    raw.stratum.resize(static_cast<std::size_t>(n));
    for (int g = 0; g < num_strata; ++g) {
        const Eigen::Index lo = offsets[static_cast<std::size_t>(g)];
        const Eigen::Index len = sizes[static_cast<std::size_t>(g)];
        auto& engine = engines[static_cast<std::size_t>(g)];
        const Eigen::VectorXd stratum_latent =
            gen_event_times(baseline[static_cast<std::size_t>(g)], eta.segment(lo, len), engine);
        Eigen::VectorXd stratum_observed;
        Eigen::VectorXi stratum_status;
        apply_censoring(stratum_latent, config.censoring, config.tau, engine, stratum_observed,
                        stratum_status);
        latent.segment(lo, len) = stratum_latent;
        observed.segment(lo, len) = stratum_observed;
        status.segment(lo, len) = stratum_status;
        for (Eigen::Index k = 0; k < len; ++k) {
            raw.time[static_cast<std::size_t>(lo + k)] = stratum_observed[k];
            raw.status[static_cast<std::size_t>(lo + k)] = stratum_status[k];
            raw.stratum[static_cast<std::size_t>(lo + k)] = std::to_string(g + 1);
        }
    }

    const double censoring_rate =
        1.0 - static_cast<double>(status.sum()) / static_cast<double>(n);
    if (status.sum() == 0)
        throw DataError("simulation produced no events (realized censoring rate " +
                        std::to_string(censoring_rate) + ")");

    raw.covariates = std::move(covariates);
    SimulatedDataset out;
    out.dataset = validate_dataset(std::move(raw));
    out.true_beta = config.true_beta;
    out.latent_times = std::move(latent);
    out.censoring_rate = censoring_rate;
    return out;
}

/// Selection-quality metrics against the generating coefficients: nonzero
/// estimated entries are "selected", nonzero true entries are "signals".
struct SelectionMetrics {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double fdr = 0.0;
    double sse = 0.0;
    long selected = 0;
    long true_signals = 0;
};

inline SelectionMetrics selection_metrics(const Eigen::VectorXd& estimated,
                                          const Eigen::VectorXd& truth) {
    if (estimated.size() != truth.size())
        throw DataError("selection_metrics: coefficient vectors have different lengths");
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (Eigen::Index j = 0; j < truth.size(); ++j) {
        const bool sel = estimated[j] != 0.0;
        const bool sig = truth[j] != 0.0;
        tp += sel && sig;
        fp += sel && !sig;
        tn += !sel && !sig;
        fn += !sel && sig;
    }
    SelectionMetrics m;
    m.selected = tp + fp;
    m.true_signals = tp + fn;
    m.sensitivity = m.true_signals > 0 ? static_cast<double>(tp) / static_cast<double>(m.true_signals) : 1.0;
    const long nulls = tn + fp;
    m.specificity = nulls > 0 ? static_cast<double>(tn) / static_cast<double>(nulls) : 1.0;
    m.fdr = static_cast<double>(fp) / static_cast<double>(std::max<long>(1, m.selected));
    m.sse = (estimated - truth).squaredNorm();
    return m;
}

}  // namespace stratboost
