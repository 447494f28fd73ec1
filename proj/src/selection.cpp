#include "flowadapt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowadapt/error.hpp"
#include "flowadapt/kmeans.hpp"
#include "flowadapt/rng.hpp"

namespace flowadapt {

using nlohmann::json;

json SelectionReport::to_json(std::size_t score_cap) const {
    json j = {{"strategy", strategy},
              {"budget", budget},
              {"tie_seed", tie_seed},
              {"selected", selected},
              {"pool_size", scores.size()},
              {"flags", flags}};
    if (!per_class_selected.empty()) j["per_class_selected"] = per_class_selected;
    if (scores.size() <= score_cap) j["scores"] = scores;
    return j;
}

SelectionReport SelectionReport::from_json(const json& j) {
    SelectionReport r;
    r.strategy = j.at("strategy").get<std::string>();
    r.budget = j.at("budget").get<std::size_t>();
    r.tie_seed = j.at("tie_seed").get<std::uint64_t>();
    r.selected = j.at("selected").get<std::vector<std::size_t>>();
    r.flags = j.value("flags", std::vector<std::string>{});
    r.per_class_selected = j.value("per_class_selected", std::vector<std::size_t>{});
    r.scores = j.value("scores", std::vector<double>{});
    return r;
}

std::size_t budget_from_fraction(double fraction, std::size_t n) {
    require(fraction > 0.0 && fraction <= 1.0, "budget fraction must lie in (0, 1]");
    // The epsilon keeps e.g. 0.01 * 100000 from flooring to 999.
    const auto p = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    return std::min(n, std::max<std::size_t>(1, p));
}

std::vector<double> informativeness_scores(const GmmParams& target_gmm, const GmmParams& source_gmm,
                                           const Eigen::MatrixXd& pool) {
    require(target_gmm.dim() == source_gmm.dim(), "informativeness: mixtures differ in dimension");
    const Eigen::VectorXd lt = batch_log_likelihood(target_gmm, pool);
    const Eigen::VectorXd ls = batch_log_likelihood(source_gmm, pool);
    std::vector<double> out(static_cast<std::size_t>(pool.rows()));
    for (Eigen::Index i = 0; i < pool.rows(); ++i) out[static_cast<std::size_t>(i)] = lt(i) - ls(i);
    return out;
}

SelectionReport select_top(std::vector<double> scores, std::size_t budget, std::uint64_t tie_seed,
                           std::string strategy) {
    if (scores.empty()) throw EmptyDatasetError("selection: empty score vector");
    for (double s : scores) require(!std::isnan(s), "selection: NaN score");
    const std::size_t n = scores.size();

    std::vector<std::size_t> rank(n);
    std::iota(rank.begin(), rank.end(), 0);
    Rng rng(tie_seed);
    std::shuffle(rank.begin(), rank.end(), rng);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(budget, n);
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (rank[a] != rank[b]) return rank[a] < rank[b];
        return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
    order.resize(take);

    SelectionReport r;
    r.strategy = std::move(strategy);
    r.scores = std::move(scores);
    r.selected = std::move(order);
    r.budget = budget;
    r.tie_seed = tie_seed;
    return r;
}

SelectionReport select_priors(std::vector<double> scores, double budget_fraction, std::size_t pool_size,
                              std::uint64_t tie_seed) {
    if (scores.empty()) throw EmptyDatasetError("select_priors: empty score vector");
    require(scores.size() == pool_size, "select_priors: score count must equal pool size");
    const std::size_t p = budget_from_fraction(budget_fraction, pool_size);
    return select_top(std::move(scores), p, tie_seed, "netguard");
}

std::vector<double> entropy_rows(const Eigen::MatrixXd& proba) {
    std::vector<double> out(static_cast<std::size_t>(proba.rows()), 0.0);
    for (Eigen::Index r = 0; r < proba.rows(); ++r) {
        double h = 0.0;
        for (Eigen::Index c = 0; c < proba.cols(); ++c) {
            const double p = proba(r, c);
            if (p > 0.0) h -= p * std::log(p);
        }
        out[static_cast<std::size_t>(r)] = h;
    }
    return out;
}

std::vector<double> uncertainty_scores(const ClassifierModel& model, const Eigen::MatrixXd& pool) {
    require(model.trained, "uncertainty_scores: model is not trained");
    return entropy_rows(predict_proba(model, pool));
}

namespace {

SelectionReport cluster_select(const Eigen::MatrixXd& pool, std::span<const double> weights,
                               std::size_t budget, std::uint64_t seed, std::string strategy) {
    const auto n = static_cast<std::size_t>(pool.rows());
    if (n == 0) throw EmptyDatasetError(strategy + ": empty pool");
    require(budget >= 1 && budget <= n, strategy + ": budget must lie in [1, pool size]");
    KMeansConfig cfg;
    cfg.seed = seed;
    const auto clusters = weighted_kmeans(pool, budget, weights, cfg);
    SelectionReport r;
    r.strategy = std::move(strategy);
    r.selected = nearest_to_centroids(pool, clusters);
    r.budget = budget;
    r.tie_seed = seed;
    if (clusters.reseeds > 0) r.flags.push_back("reseeded_clusters=" + std::to_string(clusters.reseeds));
    return r;
}

}  // namespace

SelectionReport coreset_select(const Eigen::MatrixXd& pool, std::size_t budget, std::uint64_t seed) {
    return cluster_select(pool, {}, budget, seed, "coreset");
}

SelectionReport clue_select_weighted(const Eigen::MatrixXd& pool, std::span<const double> weights,
                                     std::size_t budget, std::uint64_t seed) {
    require(weights.size() == static_cast<std::size_t>(pool.rows()), "clue: weight count mismatch");
    const double max_w = weights.empty() ? 0.0 : *std::max_element(weights.begin(), weights.end());
    if (!(max_w > 0.0)) {
        auto r = cluster_select(pool, {}, budget, seed, "clue");
        r.flags.push_back("unweighted_fallback");
        r.scores.assign(weights.begin(), weights.end());
        return r;
    }
    // Scaled so that uniform weights become exactly 1 and match coreset.
    std::vector<double> w(weights.begin(), weights.end());
    for (auto& v : w) v = std::max(0.0, v) / max_w;
    auto r = cluster_select(pool, w, budget, seed, "clue");
    r.scores.assign(weights.begin(), weights.end());
    return r;
}

SelectionReport clue_select(const ClassifierModel& model, const Eigen::MatrixXd& pool,
                            std::size_t budget, std::uint64_t seed) {
    const auto h = uncertainty_scores(model, pool);
    return clue_select_weighted(pool, h, budget, seed);
}

DensitySelection density_prior_selection(const Eigen::MatrixXd& labeled, const Eigen::MatrixXd& pool,
                                         const GmmConfig& config, double budget_fraction,
                                         std::uint64_t tie_seed) {
    require(labeled.cols() == pool.cols(), "density selection: domains differ in width");
    GmmConfig src_cfg = config;
    GmmConfig tgt_cfg = config;
    src_cfg.seed = derive_seed(config.seed, "gmm-source");
    tgt_cfg.seed = derive_seed(config.seed, "gmm-target");
    DensitySelection out{fit_gmm(labeled, src_cfg), fit_gmm(pool, tgt_cfg), {}};
    auto scores = informativeness_scores(out.target_gmm, out.source_gmm, pool);
    out.report = select_priors(std::move(scores), budget_fraction, static_cast<std::size_t>(pool.rows()),
                               tie_seed);
    return out;
}

}  // namespace flowadapt
