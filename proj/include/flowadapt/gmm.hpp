#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace flowadapt {

struct GmmConfig {
    std::size_t components = 10;
    std::size_t max_iters = 200;
    double tol = 1e-4;  // on the average log-likelihood
    std::uint64_t seed = 0;
    double variance_floor = 1e-6;

    nlohmann::json to_json() const;
    static GmmConfig from_json(const nlohmann::json& j);
};

struct GmmFitInfo {
    std::size_t iterations = 0;
    double final_avg_log_likelihood = 0.0;
    bool converged = false;
    std::size_t reseeded_components = 0;
    /// Average log-likelihood after initialization and after every EM step.
    std::vector<double> history;
};

/// Diagonal-covariance Gaussian mixture: weights (K), means (K x d),
/// variances (K x d).
struct GmmParams {
    Eigen::VectorXd weights;
    Eigen::MatrixXd means;
    Eigen::MatrixXd variances;
    GmmFitInfo info;

    std::size_t components() const noexcept { return static_cast<std::size_t>(weights.size()); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(means.cols()); }

    /// Throws ContractError when shapes disagree, weights do not sum to one,
    /// or a variance is below the floor.
    void validate(double variance_floor = 0.0) const;

    nlohmann::json to_json() const;
    static GmmParams from_json(const nlohmann::json& j);
};

/// k-means++ start on a subsample of min(n, 10*K*d) rows; variances start
/// at the global per-dimension variance.
GmmParams initialize_gmm(const Eigen::MatrixXd& data, const GmmConfig& config);

/// EM from a given starting point until the change in average
/// log-likelihood drops below tol or max_iters is reached.
GmmParams run_em(const Eigen::MatrixXd& data, GmmParams init, const GmmConfig& config);

/// initialize_gmm followed by run_em.
GmmParams fit_gmm(const Eigen::MatrixXd& data, const GmmConfig& config);

/// log sum_j pi_j N(x | mu_j, diag sigma2_j), via log-sum-exp.
double log_likelihood(const GmmParams& params, std::span<const double> x);

Eigen::VectorXd batch_log_likelihood(const GmmParams& params, const Eigen::MatrixXd& data);

/// Posterior component probabilities, n x K.
Eigen::MatrixXd responsibilities(const GmmParams& params, const Eigen::MatrixXd& data);

}  // namespace flowadapt
