#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stratboost/common.hpp"

namespace stratboost {

/// Right-censored survival data grouped into strata.
///
/// Rows are subjects: observed time (event or censoring), event indicator,
/// stratum id in 0..G-1, and a row of the n-by-p covariate matrix. Instances
/// are immutable after construction through validate_dataset and safe to
/// share across threads.
struct SurvivalDataset {
    Eigen::VectorXd time;                     // observed times, all > 0
    Eigen::VectorXi status;                   // 1 = event, 0 = censored
    Eigen::VectorXi stratum;                  // contiguous ids 0..G-1
    Eigen::MatrixXd covariates;               // n x p
    std::vector<std::string> variable_names;  // p distinct labels
    std::vector<std::string> stratum_labels;  // original labels, indexed by id
    int events = 0;                           // number of uncensored subjects

    Eigen::Index n() const { return time.size(); }
    Eigen::Index p() const { return covariates.cols(); }
    int num_strata() const { return static_cast<int>(stratum_labels.size()); }
};

/// Raw parallel columns prior to validation. `stratum` may be empty (single
/// stratum); `variable_names` may be empty (labels default to V1..Vp).
struct RawColumns {
    std::vector<double> time;
    std::vector<int> status;
    std::vector<std::string> stratum;
    Eigen::MatrixXd covariates;
    std::vector<std::string> variable_names;
};

/// Checks every dataset invariant and maps stratum labels to contiguous ids
/// in order of first appearance. Throws DataError with the offending row
/// where one exists.
inline SurvivalDataset validate_dataset(RawColumns raw) {
    const auto n = static_cast<Eigen::Index>(raw.time.size());
    if (n < 1) throw DataError("dataset is empty");
    if (static_cast<Eigen::Index>(raw.status.size()) != n)
        throw DataError("length mismatch: " + std::to_string(raw.status.size()) +
                        " status values for " + std::to_string(n) + " times");
    if (!raw.stratum.empty() && static_cast<Eigen::Index>(raw.stratum.size()) != n)
        throw DataError("length mismatch: " + std::to_string(raw.stratum.size()) +
                        " stratum labels for " + std::to_string(n) + " times");
    if (raw.covariates.rows() != n)
        throw DataError("length mismatch: covariate matrix has " +
                        std::to_string(raw.covariates.rows()) + " rows for " +
                        std::to_string(n) + " times");

    SurvivalDataset out;
    out.time.resize(n);
    out.status.resize(n);
    out.stratum.resize(n);
    out.covariates = std::move(raw.covariates);

    const Eigen::Index p = out.covariates.cols();
    if (raw.variable_names.empty()) {
        out.variable_names.reserve(static_cast<std::size_t>(p));
        for (Eigen::Index j = 0; j < p; ++j)
            out.variable_names.push_back("V" + std::to_string(j + 1));
    } else {
        if (static_cast<Eigen::Index>(raw.variable_names.size()) != p)
            throw DataError("expected " + std::to_string(p) + " variable names, got " +
                            std::to_string(raw.variable_names.size()));
        out.variable_names = std::move(raw.variable_names);
    }
    {
        auto sorted = out.variable_names;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw DataError("variable names are not distinct");
    }

    std::unordered_map<std::string, int> label_to_id;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = raw.time[static_cast<std::size_t>(i)];
        if (!std::isfinite(t) || t <= 0.0)
            throw DataError("row " + std::to_string(i + 1) + ": time must be positive and finite, got " +
                            std::to_string(t));
        out.time[i] = t;
        const int s = raw.status[static_cast<std::size_t>(i)];
        if (s != 0 && s != 1)
            throw DataError("row " + std::to_string(i + 1) + ": status must be 0 or 1, got " +
                            std::to_string(s));
        out.status[i] = s;
        out.events += s;
        const std::string label =
            raw.stratum.empty() ? std::string("0") : raw.stratum[static_cast<std::size_t>(i)];
        auto [it, inserted] = label_to_id.try_emplace(label, static_cast<int>(out.stratum_labels.size()));
        if (inserted) out.stratum_labels.push_back(label);
        out.stratum[i] = it->second;
    }
    if (out.events == 0) throw DataError("no events: every subject is censored");
    if (!out.covariates.allFinite()) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < p; ++j)
                if (!std::isfinite(out.covariates(i, j)))
                    throw DataError("row " + std::to_string(i + 1) + ": covariate '" +
                                    out.variable_names[static_cast<std::size_t>(j)] +
                                    "' is not finite");
    }
    return out;
}

/// Per-stratum time-descending orderings. The risk set of the subject at
/// position k of a stratum's ordering is the prefix [0, risk_end[k]):
/// everyone with time >= that subject's time, tied subjects included.
struct StratumIndex {
    struct Stratum {
        std::vector<Eigen::Index> order;     // subject ids, time descending, ties in original order
        std::vector<Eigen::Index> risk_end;  // per position: one-past-end of its tie block
    };
    std::vector<Stratum> strata;
};

/// Deterministic rebuild from the dataset: stable sort by descending time
/// within each stratum, then tie-block boundaries.
inline StratumIndex build_stratum_index(const SurvivalDataset& data) {
    StratumIndex index;
    index.strata.resize(static_cast<std::size_t>(data.num_strata()));
    for (Eigen::Index i = 0; i < data.n(); ++i)
        index.strata[static_cast<std::size_t>(data.stratum[i])].order.push_back(i);
    for (auto& str : index.strata) {
        std::stable_sort(str.order.begin(), str.order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return data.time[a] > data.time[b]; });
        const auto m = static_cast<Eigen::Index>(str.order.size());
        str.risk_end.resize(static_cast<std::size_t>(m));
        Eigen::Index pos = 0;
        while (pos < m) {
            Eigen::Index end = pos + 1;
            while (end < m &&
                   data.time[str.order[static_cast<std::size_t>(end)]] ==
                       data.time[str.order[static_cast<std::size_t>(pos)]])
                ++end;
            for (Eigen::Index k = pos; k < end; ++k)
                str.risk_end[static_cast<std::size_t>(k)] = end;
            pos = end;
        }
    }
    return index;
}

/// Row subset preserving subject order and the stratum id space (ids keep
/// their meaning relative to the parent dataset; strata may become empty).
/// Used by cross validation folds and stability subsamples.
inline SurvivalDataset subset_dataset(const SurvivalDataset& data, std::span<const Eigen::Index> rows) {
    SurvivalDataset out;
    const auto m = static_cast<Eigen::Index>(rows.size());
    if (m < 1) throw DataError("subset is empty");
    out.time.resize(m);
    out.status.resize(m);
    out.stratum.resize(m);
    out.covariates.resize(m, data.covariates.cols());
    out.variable_names = data.variable_names;
    out.stratum_labels = data.stratum_labels;
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = rows[static_cast<std::size_t>(k)];
        out.time[k] = data.time[i];
        out.status[k] = data.status[i];
        out.stratum[k] = data.stratum[i];
        out.covariates.row(k) = data.covariates.row(i);
        out.events += data.status[i];
    }
    if (out.events == 0) throw DataError("no events: every subject in the subset is censored");
    return out;
}

}  // namespace stratboost
