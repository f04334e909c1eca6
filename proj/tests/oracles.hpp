// Independent reference implementations used only by tests. Everything here
// evaluates the model by direct risk-set enumeration or generic numerics and
// deliberately shares no code with the library's sweep-based paths.
#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "stratboost/dataset.hpp"

namespace oracle {

using stratboost::RawColumns;
using stratboost::SurvivalDataset;

// ---------------------------------------------------------------------------
// Naive stratified partial likelihood and derivatives, O(n^2) per evaluation.
// ---------------------------------------------------------------------------

inline double log_partial_likelihood(const SurvivalDataset& d, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = d.covariates * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.status[i] != 1) continue;
        double shift = eta[i];  // the risk set contains subject i itself
        for (Eigen::Index l = 0; l < d.n(); ++l)
            if (d.stratum[l] == d.stratum[i] && d.time[l] >= d.time[i]) shift = std::max(shift, eta[l]);
        double risk_sum = 0.0;
        for (Eigen::Index l = 0; l < d.n(); ++l)
            if (d.stratum[l] == d.stratum[i] && d.time[l] >= d.time[i])
                risk_sum += std::exp(eta[l] - shift);
        total += eta[i] - shift - std::log(risk_sum);
    }
    return total;
}

inline double first_derivative(const SurvivalDataset& d, const Eigen::VectorXd& beta,
                               Eigen::Index j) {
    const Eigen::VectorXd eta = d.covariates * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.status[i] != 1) continue;
        double s0 = 0.0, s1 = 0.0;
        for (Eigen::Index l = 0; l < d.n(); ++l) {
            if (d.stratum[l] != d.stratum[i] || d.time[l] < d.time[i]) continue;
            const double w = std::exp(eta[l]);
            s0 += w;
            s1 += w * d.covariates(l, j);
        }
        total += d.covariates(i, j) - s1 / s0;
    }
    return total;
}

inline double second_derivative(const SurvivalDataset& d, const Eigen::VectorXd& beta,
                                Eigen::Index j) {
    const Eigen::VectorXd eta = d.covariates * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.status[i] != 1) continue;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        for (Eigen::Index l = 0; l < d.n(); ++l) {
            if (d.stratum[l] != d.stratum[i] || d.time[l] < d.time[i]) continue;
            const double w = std::exp(eta[l]);
            s0 += w;
            s1 += w * d.covariates(l, j);
            s2 += w * d.covariates(l, j) * d.covariates(l, j);
        }
        total += s2 / s0 - (s1 / s0) * (s1 / s0);
    }
    return total;
}

inline Eigen::MatrixXd information(const SurvivalDataset& d, const Eigen::VectorXd& beta,
                                   const std::vector<Eigen::Index>& support) {
    const Eigen::VectorXd eta = d.covariates * beta;
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(s, s);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.status[i] != 1) continue;
        double s0 = 0.0;
        Eigen::VectorXd s1 = Eigen::VectorXd::Zero(s);
        Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(s, s);
        for (Eigen::Index l = 0; l < d.n(); ++l) {
            if (d.stratum[l] != d.stratum[i] || d.time[l] < d.time[i]) continue;
            const double w = std::exp(eta[l]);
            Eigen::VectorXd row(s);
            for (Eigen::Index a = 0; a < s; ++a)
                row[a] = d.covariates(l, support[static_cast<std::size_t>(a)]);
            s0 += w;
            s1 += w * row;
            s2 += w * row * row.transpose();
        }
        info += s2 / s0 - (s1 / s0) * (s1 / s0).transpose();
    }
    return info;
}

// Unstratified formulation: the stratum column is ignored entirely.
inline double unstratified_log_partial_likelihood(const SurvivalDataset& d,
                                                  const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = d.covariates * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.status[i] != 1) continue;
        double shift = eta[i];
        for (Eigen::Index l = 0; l < d.n(); ++l)
            if (d.time[l] >= d.time[i]) shift = std::max(shift, eta[l]);
        double risk_sum = 0.0;
        for (Eigen::Index l = 0; l < d.n(); ++l)
            if (d.time[l] >= d.time[i]) risk_sum += std::exp(eta[l] - shift);
        total += eta[i] - shift - std::log(risk_sum);
    }
    return total;
}

inline double unstratified_first_derivative(const SurvivalDataset& d, const Eigen::VectorXd& beta,
                                            Eigen::Index j) {
    const Eigen::VectorXd eta = d.covariates * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.status[i] != 1) continue;
        double s0 = 0.0, s1 = 0.0;
        for (Eigen::Index l = 0; l < d.n(); ++l) {
            if (d.time[l] < d.time[i]) continue;
            const double w = std::exp(eta[l]);
            s0 += w;
            s1 += w * d.covariates(l, j);
        }
        total += d.covariates(i, j) - s1 / s0;
    }
    return total;
}

// Newton maximization of the naive likelihood over a selected support,
// used as the post-selection refit oracle on single-stratum data.
inline Eigen::VectorXd newton_refit(const SurvivalDataset& d,
                                    const std::vector<Eigen::Index>& support,
                                    int max_iterations = 200, double tolerance = 1e-10) {
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::VectorXd beta_full = Eigen::VectorXd::Zero(d.p());
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd grad(s);
        for (Eigen::Index a = 0; a < s; ++a)
            grad[a] = first_derivative(d, beta_full, support[static_cast<std::size_t>(a)]);
        if (grad.lpNorm<Eigen::Infinity>() < tolerance) break;
        const Eigen::MatrixXd info = information(d, beta_full, support);
        const Eigen::VectorXd step = info.fullPivLu().solve(grad);
        double t = 1.0;
        const double current = log_partial_likelihood(d, beta_full);
        for (int half = 0; half < 40; ++half) {
            Eigen::VectorXd candidate = beta_full;
            for (Eigen::Index a = 0; a < s; ++a)
                candidate[support[static_cast<std::size_t>(a)]] += t * step[a];
            if (log_partial_likelihood(d, candidate) >= current) {
                beta_full = candidate;
                break;
            }
            t *= 0.5;
        }
    }
    Eigen::VectorXd out(s);
    for (Eigen::Index a = 0; a < s; ++a) out[a] = beta_full[support[static_cast<std::size_t>(a)]];
    return out;
}

// ---------------------------------------------------------------------------
// Generic numerics
// ---------------------------------------------------------------------------

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Exact log C(n, k) through 64-bit integer Pascal recursion (n <= 62).
inline double exact_log_binomial(int n, int k) {
    std::vector<unsigned long long> row(static_cast<std::size_t>(n) + 1, 0);
    row[0] = 1;
    for (int i = 1; i <= n; ++i)
        for (int j = i; j >= 1; --j) row[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j - 1)];
    return std::log(static_cast<double>(row[static_cast<std::size_t>(k)]));
}

/// One-sample Kolmogorov-Smirnov test against a supplied CDF.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
    std::sort(sample.begin(), sample.end());
    const auto n = sample.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / static_cast<double>(n)));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / static_cast<double>(n) - f));
    }
    return d;
}

inline double ks_p_value(double statistic, std::size_t n) {
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-12) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

/// Derivative-free 2-D maximizer by iterative grid refinement: evaluate an
/// 11x11 grid over the current window, re-center on the best point, expand
/// when the best sits on the window edge and shrink otherwise. Expansion is
/// capped so separated (asymptotic) objectives terminate at the cap.
inline Eigen::Vector2d grid_refine_maximize_2d(
    const std::function<double(const Eigen::Vector2d&)>& f, Eigen::Vector2d center,
    double initial_half_width, double tolerance = 1e-6, double max_half_width = 1024.0) {
    double half = initial_half_width;
    constexpr int kPoints = 11;
    for (int level = 0; level < 200 && half > tolerance / 4.0; ++level) {
        Eigen::Vector2d best = center;
        double best_value = -std::numeric_limits<double>::infinity();
        int best_i = 0, best_j = 0;
        for (int i = 0; i < kPoints; ++i) {
            for (int j = 0; j < kPoints; ++j) {
                Eigen::Vector2d candidate(
                    center[0] - half + 2.0 * half * i / (kPoints - 1),
                    center[1] - half + 2.0 * half * j / (kPoints - 1));
                const double value = f(candidate);
                if (value > best_value) {
                    best_value = value;
                    best = candidate;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        center = best;
        const bool on_edge =
            best_i == 0 || best_i == kPoints - 1 || best_j == 0 || best_j == kPoints - 1;
        if (on_edge && half >= max_half_width) break;
        half = on_edge ? std::min(half * 2.0, max_half_width) : half * 0.4;
    }
    return center;
}

/// True when a two-variable refit sits on a separation asymptote rather than
/// at an interior optimum: the likelihood is within noise of the perfect
/// concordance supremum (zero) or a coefficient ran far out.
inline bool quasi_separated(double refit_loglik, const Eigen::VectorXd& coefficients) {
    return refit_loglik > -1e-6 || coefficients.lpNorm<Eigen::Infinity>() > 10.0;
}

// ---------------------------------------------------------------------------
// Random test instances
// ---------------------------------------------------------------------------

struct InstanceShape {
    int max_n = 50;
    int max_p = 10;
    int max_strata = 3;
    double event_probability = 0.7;
    double tie_probability = 0.3;
};

inline SurvivalDataset random_instance(std::mt19937_64& rng, const InstanceShape& shape = {}) {
    std::uniform_int_distribution<int> n_dist(3, shape.max_n);
    std::uniform_int_distribution<int> p_dist(1, shape.max_p);
    std::uniform_int_distribution<int> g_dist(1, shape.max_strata);
    const int n = n_dist(rng);
    const int p = p_dist(rng);
    const int g = g_dist(rng);
    std::uniform_real_distribution<double> time_dist(0.1, 10.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> stratum_dist(0, g - 1);
    std::normal_distribution<double> normal(0.0, 1.0);

    RawColumns raw;
    raw.covariates.resize(n, p);
    for (int i = 0; i < n; ++i) {
        double t = time_dist(rng);
        if (unit(rng) < shape.tie_probability) t = std::ceil(t * 2.0) / 2.0;  // create ties
        raw.time.push_back(t);
        raw.status.push_back(unit(rng) < shape.event_probability ? 1 : 0);
        raw.stratum.push_back(std::to_string(stratum_dist(rng)));
        for (int j = 0; j < p; ++j) raw.covariates(i, j) = normal(rng);
    }
    if (std::none_of(raw.status.begin(), raw.status.end(), [](int s) { return s == 1; }))
        raw.status[0] = 1;
    return stratboost::validate_dataset(std::move(raw));
}

inline Eigen::VectorXd random_beta(std::mt19937_64& rng, Eigen::Index p, double magnitude = 1.0) {
    std::uniform_real_distribution<double> dist(-magnitude, magnitude);
    Eigen::VectorXd beta(p);
    for (Eigen::Index j = 0; j < p; ++j) beta[j] = dist(rng);
    return beta;
}

}  // namespace oracle
