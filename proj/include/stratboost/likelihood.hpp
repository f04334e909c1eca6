#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <vector>

#include "stratboost/common.hpp"
#include "stratboost/dataset.hpp"
#include "stratboost/parallel.hpp"

namespace stratboost {

/// eta_i = sum_j beta_j * X_ij.
inline Eigen::VectorXd linear_predictor(const SurvivalDataset& data, const Eigen::VectorXd& beta) {
    if (beta.size() != data.p())
        throw DataError("coefficient vector has length " + std::to_string(beta.size()) +
                        ", expected " + std::to_string(data.p()));
    Eigen::VectorXd eta = data.covariates * beta;
    if (!eta.allFinite()) throw NumericalError("linear predictor is not finite");
    return eta;
}

/// Refreshes eta in place after a single-coordinate change beta_j += delta.
inline void update_linear_predictor(const SurvivalDataset& data, Eigen::VectorXd& eta,
                                    Eigen::Index j, double delta) {
    eta.noalias() += delta * data.covariates.col(j);
}

/// Stratified log partial likelihood under the Breslow tie convention.
///
/// One descending-time sweep per stratum: each tie block is absorbed into a
/// running sum of exp(eta - shift) with a running-max shift, then every event
/// in the block contributes eta_i - log(risk-set sum). Stable for |eta| up
/// to ~700.
inline double log_partial_likelihood(const SurvivalDataset& data, const StratumIndex& index,
                                     const Eigen::VectorXd& eta) {
    double total = 0.0;
    for (const auto& str : index.strata) {
        const auto m = static_cast<Eigen::Index>(str.order.size());
        if (m == 0) continue;
        double shift = eta[str.order[0]];
        double sum = 0.0;
        Eigen::Index pos = 0;
        while (pos < m) {
            const Eigen::Index block_end = str.risk_end[static_cast<std::size_t>(pos)];
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const double e = eta[str.order[static_cast<std::size_t>(k)]];
                if (e > shift) {
                    sum *= std::exp(shift - e);
                    shift = e;
                }
                sum += std::exp(e - shift);
            }
            const double log_risk_sum = shift + std::log(sum);
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                if (data.status[i] == 1) total += eta[i] - log_risk_sum;
            }
            pos = block_end;
        }
    }
    if (!std::isfinite(total)) throw NumericalError("log partial likelihood is not finite");
    return total;
}

/// First partial derivative of the log partial likelihood with respect to
/// variable j: sum over events of X_ij minus the risk-set mean of X_j under
/// exp(eta) weights. Single suffix-sum sweep per stratum.
inline double first_derivative(const SurvivalDataset& data, const StratumIndex& index,
                               const Eigen::VectorXd& eta, Eigen::Index j) {
    const auto x = data.covariates.col(j);
    double result = 0.0;
    for (const auto& str : index.strata) {
        const auto m = static_cast<Eigen::Index>(str.order.size());
        if (m == 0) continue;
        double shift = eta[str.order[0]];
        double s0 = 0.0, s1 = 0.0;
        Eigen::Index pos = 0;
        while (pos < m) {
            const Eigen::Index block_end = str.risk_end[static_cast<std::size_t>(pos)];
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                const double e = eta[i];
                if (e > shift) {
                    const double c = std::exp(shift - e);
                    s0 *= c;
                    s1 *= c;
                    shift = e;
                }
                const double w = std::exp(e - shift);
                s0 += w;
                s1 += w * x[i];
            }
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                if (data.status[i] == 1) result += x[i] - s1 / s0;
            }
            pos = block_end;
        }
    }
    return result;
}

/// Second partial derivative magnitude (negated Hessian diagonal entry):
/// sum over events of the risk-set variance of X_j. Always >= 0.
inline double second_derivative(const SurvivalDataset& data, const StratumIndex& index,
                                const Eigen::VectorXd& eta, Eigen::Index j) {
    const auto x = data.covariates.col(j);
    double result = 0.0;
    for (const auto& str : index.strata) {
        const auto m = static_cast<Eigen::Index>(str.order.size());
        if (m == 0) continue;
        double shift = eta[str.order[0]];
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        Eigen::Index pos = 0;
        while (pos < m) {
            const Eigen::Index block_end = str.risk_end[static_cast<std::size_t>(pos)];
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                const double e = eta[i];
                if (e > shift) {
                    const double c = std::exp(shift - e);
                    s0 *= c;
                    s1 *= c;
                    s2 *= c;
                    shift = e;
                }
                const double w = std::exp(e - shift);
                s0 += w;
                s1 += w * x[i];
                s2 += w * x[i] * x[i];
            }
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                if (data.status[i] == 1) {
                    const double mean = s1 / s0;
                    // per-risk-set variance; clamp fp rounding at zero
                    result += std::max(0.0, s2 / s0 - mean * mean);
                }
            }
            pos = block_end;
        }
    }
    return result;
}

/// First partial derivatives for all p variables at once, O(n*p) total.
///
/// Uses the score-residual identity: d l / d eta_q = status_q - exp(eta_q) *
/// sum over events whose risk set contains q of 1/S0(event), so the gradient
/// is X^T residual. The per-subject residual is built in O(n) per stratum
/// with one forward sweep (shifted risk sums per tie block) and one backward
/// sweep (suffix of event terms).
inline Eigen::VectorXd first_derivative_all(const SurvivalDataset& data, const StratumIndex& index,
                                            const Eigen::VectorXd& eta, int threads = 1) {
    const Eigen::Index n = data.n();
    const Eigen::Index p = data.p();
    Eigen::VectorXd residual(n);

    std::vector<double> block_shift, block_sum;
    std::vector<Eigen::Index> block_begin, block_events;
    for (const auto& str : index.strata) {
        const auto m = static_cast<Eigen::Index>(str.order.size());
        if (m == 0) continue;
        block_shift.clear();
        block_sum.clear();
        block_begin.clear();
        block_events.clear();
        double shift = eta[str.order[0]];
        double sum = 0.0;
        Eigen::Index pos = 0;
        while (pos < m) {
            const Eigen::Index block_end = str.risk_end[static_cast<std::size_t>(pos)];
            Eigen::Index events_in_block = 0;
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                const double e = eta[i];
                if (e > shift) {
                    sum *= std::exp(shift - e);
                    shift = e;
                }
                sum += std::exp(e - shift);
                events_in_block += data.status[i];
            }
            block_begin.push_back(pos);
            block_shift.push_back(shift);
            block_sum.push_back(sum);  // >= 1: the running max contributes exp(0)
            block_events.push_back(events_in_block);
            pos = block_end;
        }
        block_begin.push_back(m);

        double acc = 0.0;  // suffix of events / risk-set sum, shifts folded back in
        for (auto b = static_cast<std::ptrdiff_t>(block_shift.size()) - 1; b >= 0; --b) {
            const auto bu = static_cast<std::size_t>(b);
            if (block_events[bu] > 0)
                acc += static_cast<double>(block_events[bu]) * std::exp(-block_shift[bu]) / block_sum[bu];
            for (Eigen::Index k = block_begin[bu]; k < block_begin[bu + 1]; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                residual[i] = static_cast<double>(data.status[i]) - std::exp(eta[i]) * acc;
            }
        }
    }

    Eigen::VectorXd grad(p);
    parallel_for(0, p, threads,
                 [&](std::int64_t j) { grad[j] = data.covariates.col(j).dot(residual); });
    return grad;
}

/// Risk-set statistics for one event subject and one variable: weighted sums
/// of X^k over the subject's risk set for k = 0, 1, 2 (weights exp(eta)).
struct ScoreStatistics {
    double s0 = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
};

inline ScoreStatistics score_statistics(const SurvivalDataset& data, const Eigen::VectorXd& eta,
                                        Eigen::Index subject, Eigen::Index j) {
    ScoreStatistics s;
    for (Eigen::Index l = 0; l < data.n(); ++l) {
        if (data.stratum[l] != data.stratum[subject] || data.time[l] < data.time[subject]) continue;
        const double w = std::exp(eta[l]);
        s.s0 += w;
        s.s1 += w * data.covariates(l, j);
        s.s2 += w * data.covariates(l, j) * data.covariates(l, j);
    }
    if (!std::isfinite(s.s0) || !std::isfinite(s.s1) || !std::isfinite(s.s2))
        throw NumericalError("risk-set statistics overflow");
    return s;
}

/// Shared per-iteration precomputation for the boosting scan: one exp sweep
/// per linear predictor serves the full gradient scan, the selected
/// variable's curvature, and the log partial likelihood.
///
/// Per stratum, tie blocks carry their risk-set prefix sum of
/// exp(eta - shift) under a running block-max shift; `carry` rescales
/// accumulators when the shift grows across a block boundary. Weights `w`
/// hold exp(eta - shift of the subject's block).
struct SweepWorkspace {
    struct Block {
        Eigen::Index begin = 0;
        Eigen::Index end = 0;
        double s0 = 0.0;     // shifted risk-set sum over the prefix
        double shift = 0.0;  // prefix max of eta through this block
        double carry = 1.0;  // exp(previous shift - shift)
        long events = 0;
    };
    std::vector<std::vector<Block>> blocks;  // per stratum
    Eigen::VectorXd w;                       // subject-indexed shifted weights
    double loglik = 0.0;

    void compute(const SurvivalDataset& data, const StratumIndex& index,
                 const Eigen::VectorXd& eta) {
        const auto num_strata = index.strata.size();
        blocks.resize(num_strata);
        w.resize(data.n());
        loglik = 0.0;
        for (std::size_t g = 0; g < num_strata; ++g) {
            const auto& str = index.strata[g];
            auto& stratum_blocks = blocks[g];
            stratum_blocks.clear();
            const auto m = static_cast<Eigen::Index>(str.order.size());
            if (m == 0) continue;
            double shift = eta[str.order[0]];
            double s0 = 0.0;
            Eigen::Index pos = 0;
            while (pos < m) {
                Block block;
                block.begin = pos;
                block.end = str.risk_end[static_cast<std::size_t>(pos)];
                double block_max = shift;
                for (Eigen::Index k = pos; k < block.end; ++k)
                    block_max = std::max(block_max, eta[str.order[static_cast<std::size_t>(k)]]);
                block.carry = std::exp(shift - block_max);
                s0 *= block.carry;
                shift = block_max;
                for (Eigen::Index k = pos; k < block.end; ++k) {
                    const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                    w[i] = std::exp(eta[i] - shift);
                    s0 += w[i];
                    block.events += data.status[i];
                }
                block.s0 = s0;
                block.shift = shift;
                const double log_risk_sum = shift + std::log(s0);
                for (Eigen::Index k = pos; k < block.end; ++k) {
                    const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                    if (data.status[i] == 1) loglik += eta[i] - log_risk_sum;
                }
                stratum_blocks.push_back(block);
                pos = block.end;
            }
        }
        if (!std::isfinite(loglik)) throw NumericalError("log partial likelihood is not finite");
    }

    /// All first partial derivatives, reusing the precomputed weights:
    /// residual_q = status_q - w_q * suffix of (events / shifted risk sum),
    /// then gradient = X^T residual.
    Eigen::VectorXd first_derivative_all(const SurvivalDataset& data, const StratumIndex& index,
                                         int threads = 1) const {
        Eigen::VectorXd residual(data.n());
        for (std::size_t g = 0; g < blocks.size(); ++g) {
            const auto& str = index.strata[g];
            const auto& stratum_blocks = blocks[g];
            double acc = 0.0;
            for (auto b = static_cast<std::ptrdiff_t>(stratum_blocks.size()) - 1; b >= 0; --b) {
                const Block& block = stratum_blocks[static_cast<std::size_t>(b)];
                if (static_cast<std::size_t>(b) + 1 < stratum_blocks.size())
                    acc *= stratum_blocks[static_cast<std::size_t>(b) + 1].carry;
                acc += static_cast<double>(block.events) / block.s0;
                for (Eigen::Index k = block.begin; k < block.end; ++k) {
                    const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                    residual[i] = static_cast<double>(data.status[i]) - w[i] * acc;
                }
            }
        }
        Eigen::VectorXd grad(data.p());
        parallel_for(0, data.p(), threads,
                     [&](std::int64_t j) { grad[j] = data.covariates.col(j).dot(residual); });
        return grad;
    }

    /// Second partial derivative for one variable from the shared weights.
    double second_derivative(const SurvivalDataset& data, const StratumIndex& index,
                             Eigen::Index j) const {
        const auto x = data.covariates.col(j);
        double result = 0.0;
        for (std::size_t g = 0; g < blocks.size(); ++g) {
            const auto& str = index.strata[g];
            double s1 = 0.0, s2 = 0.0;
            for (const Block& block : blocks[g]) {
                s1 *= block.carry;
                s2 *= block.carry;
                for (Eigen::Index k = block.begin; k < block.end; ++k) {
                    const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                    s1 += w[i] * x[i];
                    s2 += w[i] * x[i] * x[i];
                }
                if (block.events > 0) {
                    const double mean = s1 / block.s0;
                    result += static_cast<double>(block.events) *
                              std::max(0.0, s2 / block.s0 - mean * mean);
                }
            }
        }
        return result;
    }
};

/// Negated Hessian of the log partial likelihood restricted to the given
/// variables: sum over events of the risk-set covariance matrix of the
/// selected covariates. One sweep per stratum, O(n * s^2).
inline Eigen::MatrixXd observed_information(const SurvivalDataset& data, const StratumIndex& index,
                                            const Eigen::VectorXd& eta,
                                            std::span<const Eigen::Index> support) {
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(s, s);
    Eigen::VectorXd s1(s), row(s), mean(s);
    Eigen::MatrixXd s2(s, s);
    for (const auto& str : index.strata) {
        const auto m = static_cast<Eigen::Index>(str.order.size());
        if (m == 0) continue;
        double shift = eta[str.order[0]];
        double s0 = 0.0;
        s1.setZero();
        s2.setZero();
        Eigen::Index pos = 0;
        while (pos < m) {
            const Eigen::Index block_end = str.risk_end[static_cast<std::size_t>(pos)];
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                const double e = eta[i];
                if (e > shift) {
                    const double c = std::exp(shift - e);
                    s0 *= c;
                    s1 *= c;
                    s2 *= c;
                    shift = e;
                }
                const double w = std::exp(e - shift);
                for (Eigen::Index a = 0; a < s; ++a)
                    row[a] = data.covariates(i, support[static_cast<std::size_t>(a)]);
                s0 += w;
                s1.noalias() += w * row;
                s2.noalias() += w * row * row.transpose();
            }
            for (Eigen::Index k = pos; k < block_end; ++k) {
                const Eigen::Index i = str.order[static_cast<std::size_t>(k)];
                if (data.status[i] == 1) {
                    mean = s1 / s0;
                    info.noalias() += s2 / s0;
                    info.noalias() -= mean * mean.transpose();
                }
            }
            pos = block_end;
        }
    }
    return info;
}

}  // namespace stratboost
