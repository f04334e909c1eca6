#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "stratboost/common.hpp"

namespace stratboost {

/// Run exactly this many iterations.
struct FixedRule {
    int iterations = 500;
};

/// Stop once the support (nonzero coefficients) reaches `target` variables.
struct NumSelectedRule {
    int target = 1;
};

/// Stop at the first iteration whose likelihood gain falls below alpha
/// (strict inequality, consecutive iterations only).
struct LikelihoodChangeRule {
    double alpha = 0.001;
};

/// Minimize the information criterion over the iteration path.
struct BicRule {};

struct EbicRule {
    double gamma = 1.0;
};

struct AicRule {};

/// K-fold cross validation of the iteration count.
struct CrossValidationRule {
    int folds = 10;
    int max_iterations = 500;
    std::uint64_t seed = 0;
};

using StoppingRule = std::variant<FixedRule, NumSelectedRule, LikelihoodChangeRule, BicRule,
                                  EbicRule, AicRule, CrossValidationRule>;

inline void validate_rule(const StoppingRule& rule) {
    if (const auto* f = std::get_if<FixedRule>(&rule)) {
        if (f->iterations < 0) throw DataError("fixed rule: iterations must be >= 0");
    } else if (const auto* ns = std::get_if<NumSelectedRule>(&rule)) {
        if (ns->target < 1) throw DataError("num_selected rule: target must be >= 1");
    } else if (const auto* lc = std::get_if<LikelihoodChangeRule>(&rule)) {
        if (!(lc->alpha > 0.0)) throw DataError("likelihood rule: alpha must be > 0");
    } else if (const auto* eb = std::get_if<EbicRule>(&rule)) {
        if (eb->gamma < 0.0 || eb->gamma > 1.0) throw DataError("ebic rule: gamma must be in [0, 1]");
    } else if (const auto* cv = std::get_if<CrossValidationRule>(&rule)) {
        if (cv->folds < 2) throw DataError("cv rule: folds must be >= 2");
        if (cv->max_iterations < 1) throw DataError("cv rule: max_iterations must be >= 1");
    }
}

inline std::string describe_rule(const StoppingRule& rule) {
    struct Visitor {
        std::string operator()(const FixedRule& r) const {
            return "fixed(iterations=" + std::to_string(r.iterations) + ")";
        }
        std::string operator()(const NumSelectedRule& r) const {
            return "num_selected(target=" + std::to_string(r.target) + ")";
        }
        std::string operator()(const LikelihoodChangeRule& r) const {
            return "likelihood_change(alpha=" + std::to_string(r.alpha) + ")";
        }
        std::string operator()(const BicRule&) const { return "bic"; }
        std::string operator()(const EbicRule& r) const {
            return "ebic(gamma=" + std::to_string(r.gamma) + ")";
        }
        std::string operator()(const AicRule&) const { return "aic"; }
        std::string operator()(const CrossValidationRule& r) const {
            return "cv(folds=" + std::to_string(r.folds) +
                   ",max_iterations=" + std::to_string(r.max_iterations) + ")";
        }
    };
    return std::visit(Visitor{}, rule);
}

/// log of the binomial coefficient C(n, k) via log-gamma.
inline double log_binomial_coefficient(int n, int k) {
    if (k < 0 || k > n) throw DataError("log_binomial_coefficient: k outside [0, n]");
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// BIC relative to the empty model, with the sample size replaced by the
/// event count d: -2 { l_m - l_0 } + p_m log(d).
inline double bic(double loglik_m, double loglik_null, int support_size, int num_events) {
    if (num_events < 1) throw DataError("bic: event count must be >= 1");
    return -2.0 * (loglik_m - loglik_null) + static_cast<double>(support_size) * std::log(num_events);
}

/// Extended BIC: -2 l_m + p_m log(d) + 2 gamma log C(p, p_m).
/// gamma = 0 reduces to the BIC up to the constant -2 l_0 reference offset.
inline double ebic(double loglik_m, int support_size, int num_events, int num_variables,
                   double gamma) {
    if (num_events < 1) throw DataError("ebic: event count must be >= 1");
    if (gamma < 0.0 || gamma > 1.0) throw DataError("ebic: gamma must be in [0, 1]");
    return -2.0 * loglik_m + static_cast<double>(support_size) * std::log(num_events) +
           2.0 * gamma * log_binomial_coefficient(num_variables, support_size);
}

/// AIC: -2 l_m + 2 p_m.
inline double aic(double loglik_m, int support_size) {
    return -2.0 * loglik_m + 2.0 * static_cast<double>(support_size);
}

/// True when the gain of the latest iteration, l_current - l_previous, falls
/// strictly below alpha. A gain exactly equal to alpha continues.
inline bool likelihood_change_stop(double previous_loglik, double current_loglik, double alpha) {
    return (current_loglik - previous_loglik) < alpha;
}

/// Criterion values along the iteration path, index m = 0..M, with the first
/// minimizer.
struct CriterionHistory {
    std::vector<double> values;
    long argmin = 0;
    bool boundary = false;  // argmin sits at the iteration cap

    void locate_argmin() {
        argmin = 0;
        for (std::size_t m = 1; m < values.size(); ++m)
            if (values[m] < values[static_cast<std::size_t>(argmin)]) argmin = static_cast<long>(m);
        boundary = !values.empty() && argmin == static_cast<long>(values.size()) - 1;
    }
};

}  // namespace stratboost
