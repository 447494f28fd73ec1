#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flowadapt/rng.hpp"

namespace flowadapt {

/// k-means++ seeding. With non-empty weights the sampling law is w * D^2.
/// Returns k distinct row indices (requires k <= rows).
std::vector<std::size_t> kmeanspp_seeds(const Eigen::MatrixXd& data, std::size_t k, Rng& rng,
                                        std::span<const double> weights = {});

struct KMeansConfig {
    std::size_t max_iters = 100;
    std::uint64_t seed = 0;
};

struct KMeansResult {
    Eigen::MatrixXd centroids;  // k x d
    std::vector<std::size_t> assignment;
    std::size_t iterations = 0;
    std::size_t reseeds = 0;  // empty (or zero-weight) clusters re-seeded
};

/// Weighted Lloyd iterations from a weighted k-means++ start. Empty weights
/// mean every point has weight 1.
KMeansResult weighted_kmeans(const Eigen::MatrixXd& data, std::size_t k,
                             std::span<const double> weights, const KMeansConfig& config);

/// One representative per cluster: the member nearest to its centroid. The
/// returned indices are distinct; a cluster whose members are all taken falls
/// back to the nearest unused point overall.
std::vector<std::size_t> nearest_to_centroids(const Eigen::MatrixXd& data,
                                              const KMeansResult& clusters);

/// Squared distances between every row of a and every row of b.
Eigen::MatrixXd pairwise_sq_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace flowadapt
