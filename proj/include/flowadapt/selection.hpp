#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "flowadapt/classifier.hpp"
#include "flowadapt/gmm.hpp"

namespace flowadapt {

struct SelectionReport {
    std::string strategy;
    std::vector<double> scores;          // aligned to the unlabeled pool; may be empty
    std::vector<std::size_t> selected;   // in selection order
    std::size_t budget = 0;
    std::uint64_t tie_seed = 0;
    /// Filled once oracle labels are known; indexed by class.
    std::vector<std::size_t> per_class_selected;
    std::vector<std::string> flags;

    /// Scores are written only when the pool is at most score_cap long.
    nlohmann::json to_json(std::size_t score_cap = 100000) const;
    static SelectionReport from_json(const nlohmann::json& j);
};

/// Labeling budget: max(1, floor(fraction * n)), capped at n.
std::size_t budget_from_fraction(double fraction, std::size_t n);

/// score_i = log p(x_i; target mixture) - log p(x_i; source mixture).
std::vector<double> informativeness_scores(const GmmParams& target_gmm, const GmmParams& source_gmm,
                                           const Eigen::MatrixXd& pool);

/// Top-P indices by descending score. Equal scores are ordered by a seeded
/// shuffle rank, then by index.
SelectionReport select_top(std::vector<double> scores, std::size_t budget, std::uint64_t tie_seed,
                           std::string strategy);

SelectionReport select_priors(std::vector<double> scores, double budget_fraction, std::size_t pool_size,
                              std::uint64_t tie_seed);

/// Shannon entropy (nats) of every probability row.
std::vector<double> entropy_rows(const Eigen::MatrixXd& proba);

std::vector<double> uncertainty_scores(const ClassifierModel& model, const Eigen::MatrixXd& pool);

/// k-means with k = P; the member nearest each centroid is selected.
SelectionReport coreset_select(const Eigen::MatrixXd& pool, std::size_t budget, std::uint64_t seed);

/// Uncertainty-weighted k-means with k = P. All-zero weights fall back to
/// the unweighted variant and add the flag "unweighted_fallback".
SelectionReport clue_select_weighted(const Eigen::MatrixXd& pool, std::span<const double> weights,
                                     std::size_t budget, std::uint64_t seed);

SelectionReport clue_select(const ClassifierModel& model, const Eigen::MatrixXd& pool,
                            std::size_t budget, std::uint64_t seed);

struct DensitySelection {
    GmmParams source_gmm;
    GmmParams target_gmm;
    SelectionReport report;
};

/// Fits one mixture per domain and selects the budgeted top-scoring pool
/// samples.
DensitySelection density_prior_selection(const Eigen::MatrixXd& labeled, const Eigen::MatrixXd& pool,
                                         const GmmConfig& config, double budget_fraction,
                                         std::uint64_t tie_seed);

}  // namespace flowadapt
