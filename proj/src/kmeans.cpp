#include "flowadapt/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "flowadapt/error.hpp"

namespace flowadapt {

namespace {

double sq_dist(const Eigen::MatrixXd& data, Eigen::Index i, const Eigen::RowVectorXd& c) {
    return (data.row(i) - c).squaredNorm();
}

// Index drawn with probability proportional to mass; -1 when mass is all zero.
long sample_proportional(const std::vector<double>& mass, Rng& rng) {
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(total > 0.0)) return -1;
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng);
    double acc = 0.0;
    long last_positive = -1;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        if (mass[i] <= 0.0) continue;
        last_positive = static_cast<long>(i);
        acc += mass[i];
        if (r < acc) return static_cast<long>(i);
    }
    return last_positive;
}

}  // namespace

Eigen::MatrixXd pairwise_sq_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::VectorXd an = a.rowwise().squaredNorm();
    const Eigen::VectorXd bn = b.rowwise().squaredNorm();
    Eigen::MatrixXd d = -2.0 * a * b.transpose();
    d.colwise() += an;
    d.rowwise() += bn.transpose();
    return d.cwiseMax(0.0);
}

std::vector<std::size_t> kmeanspp_seeds(const Eigen::MatrixXd& data, std::size_t k, Rng& rng,
                                        std::span<const double> weights) {
    const auto n = static_cast<std::size_t>(data.rows());
    require(k >= 1 && k <= n, "k-means++: need 1 <= k <= n");
    require(weights.empty() || weights.size() == n, "k-means++: weight length mismatch");
    auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

    std::vector<std::size_t> seeds;
    std::vector<char> chosen(n, 0);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<double> mass(n);

    auto pick_uniform_unchosen = [&]() {
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) free.push_back(i);
        std::uniform_int_distribution<std::size_t> u(0, free.size() - 1);
        return free[u(rng)];
    };

    for (std::size_t i = 0; i < n; ++i) mass[i] = w(i);
    long first = sample_proportional(mass, rng);
    std::size_t s = first < 0 ? pick_uniform_unchosen() : static_cast<std::size_t>(first);

    while (true) {
        seeds.push_back(s);
        chosen[s] = 1;
        if (seeds.size() == k) break;
        const Eigen::RowVectorXd c = data.row(static_cast<Eigen::Index>(s));
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(data, static_cast<Eigen::Index>(i), c));
            mass[i] = chosen[i] ? 0.0 : w(i) * d2[i];
        }
        const long next = sample_proportional(mass, rng);
        s = next < 0 ? pick_uniform_unchosen() : static_cast<std::size_t>(next);
    }
    return seeds;
}

KMeansResult weighted_kmeans(const Eigen::MatrixXd& data, std::size_t k,
                             std::span<const double> weights, const KMeansConfig& config) {
    const auto n = static_cast<std::size_t>(data.rows());
    require(k >= 1 && k <= n, "k-means: need 1 <= k <= n");
    require(weights.empty() || weights.size() == n, "k-means: weight length mismatch");
    auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

    Rng rng(config.seed);
    const auto seeds = kmeanspp_seeds(data, k, rng, weights);
    KMeansResult res;
    res.centroids.resize(static_cast<Eigen::Index>(k), data.cols());
    for (std::size_t j = 0; j < k; ++j)
        res.centroids.row(static_cast<Eigen::Index>(j)) = data.row(static_cast<Eigen::Index>(seeds[j]));
    res.assignment.assign(n, k);

    std::vector<double> best(n);
    for (std::size_t it = 0; it < config.max_iters; ++it) {
        res.iterations = it + 1;
        const Eigen::MatrixXd d2 = pairwise_sq_distances(data, res.centroids);
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index arg = 0;
            best[i] = d2.row(static_cast<Eigen::Index>(i)).minCoeff(&arg);
            const auto a = static_cast<std::size_t>(arg);
            if (a != res.assignment[i]) {
                res.assignment[i] = a;
                changed = true;
            }
        }
        if (!changed) break;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), data.cols());
        std::vector<double> mass(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = static_cast<Eigen::Index>(res.assignment[i]);
            sums.row(j) += w(i) * data.row(static_cast<Eigen::Index>(i));
            mass[res.assignment[i]] += w(i);
        }
        std::vector<char> used(n, 0);
        for (std::size_t j = 0; j < k; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            if (mass[j] > 0.0) {
                res.centroids.row(jj) = sums.row(jj) / mass[j];
                continue;
            }
            // Re-seed to the point farthest from its own centroid.
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!used[i] && best[i] > far_d) {
                    far_d = best[i];
                    far = i;
                }
            }
            if (far < n) {
                used[far] = 1;
                res.centroids.row(jj) = data.row(static_cast<Eigen::Index>(far));
                best[far] = 0.0;
            }
            ++res.reseeds;
        }
    }
    return res;
}

std::vector<std::size_t> nearest_to_centroids(const Eigen::MatrixXd& data,
                                              const KMeansResult& clusters) {
    const auto n = static_cast<std::size_t>(data.rows());
    const auto k = static_cast<std::size_t>(clusters.centroids.rows());
    const Eigen::MatrixXd d2 = pairwise_sq_distances(data, clusters.centroids);
    std::vector<char> taken(n, 0);
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        std::size_t best = n;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i] || clusters.assignment[i] != j) continue;
            const double d = d2(static_cast<Eigen::Index>(i), jj);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (best == n) {
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                const double d = d2(static_cast<Eigen::Index>(i), jj);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
        }
        if (best == n) break;
        taken[best] = 1;
        out.push_back(best);
    }
    return out;
}

}  // namespace flowadapt
