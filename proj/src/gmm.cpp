#include "flowadapt/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "flowadapt/error.hpp"
#include "flowadapt/kmeans.hpp"
#include "flowadapt/rng.hpp"

namespace flowadapt {

using nlohmann::json;

namespace {

constexpr double kEmptyComponentMass = 1e-8;

// Per-component constants shared by the scalar and batch paths so both give
// bit-identical results.
struct Prepared {
    Eigen::VectorXd log_norm;     // log pi_j - 0.5 * sum_i log(2 pi sigma2_ji)
    Eigen::MatrixXd inv_var;      // K x d
};

Prepared prepare(const GmmParams& p) {
    const auto K = p.weights.size();
    const auto d = p.means.cols();
    Prepared out;
    out.log_norm.resize(K);
    out.inv_var.resize(K, d);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (Eigen::Index j = 0; j < K; ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            s += log2pi + std::log(p.variances(j, i));
            out.inv_var(j, i) = 1.0 / p.variances(j, i);
        }
        out.log_norm(j) = std::log(p.weights(j)) - 0.5 * s;
    }
    return out;
}

// Writes the per-component joint log densities for one row and returns
// their log-sum-exp.
template <typename Row>
double row_log_terms(const GmmParams& p, const Prepared& prep, const Row& x, double* terms) {
    const auto K = p.weights.size();
    const auto d = p.means.cols();
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < K; ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            const double diff = x[i] - p.means(j, i);
            s += diff * diff * prep.inv_var(j, i);
        }
        terms[j] = prep.log_norm(j) - 0.5 * s;
        m = std::max(m, terms[j]);
    }
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) acc += std::exp(terms[j] - m);
    return m + std::log(acc);
}

struct RowView {
    const Eigen::MatrixXd& m;
    Eigen::Index row;
    double operator[](Eigen::Index i) const { return m(row, i); }
};

struct SpanView {
    std::span<const double> s;
    double operator[](Eigen::Index i) const { return s[static_cast<std::size_t>(i)]; }
};

void check_data(const Eigen::MatrixXd& data) {
    require(data.cols() >= 1, "GMM: data must have at least one column");
    require(data.allFinite(), "GMM: data must be finite");
}

Eigen::RowVectorXd column_variance(const Eigen::MatrixXd& data) {
    const Eigen::RowVectorXd mean = data.colwise().mean();
    return (data.rowwise() - mean).array().square().colwise().mean();
}

// E-step: responsibilities into resp (n x K); returns average log-likelihood.
double e_step(const GmmParams& p, const Eigen::MatrixXd& data, Eigen::MatrixXd& resp) {
    const Prepared prep = prepare(p);
    const auto n = data.rows();
    const auto K = p.weights.size();
    resp.resize(n, K);
    std::vector<double> terms(static_cast<std::size_t>(K));
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
        const double lse = row_log_terms(p, prep, RowView{data, r}, terms.data());
        total += lse;
        for (Eigen::Index j = 0; j < K; ++j) resp(r, j) = std::exp(terms[static_cast<std::size_t>(j)] - lse);
    }
    return total / static_cast<double>(n);
}

}  // namespace

json GmmConfig::to_json() const {
    return {{"components", components},
            {"max_iters", max_iters},
            {"tol", tol},
            {"seed", seed},
            {"variance_floor", variance_floor}};
}

GmmConfig GmmConfig::from_json(const json& j) {
    GmmConfig c;
    c.components = j.value("components", c.components);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.tol = j.value("tol", c.tol);
    c.seed = j.value("seed", c.seed);
    c.variance_floor = j.value("variance_floor", c.variance_floor);
    return c;
}

void GmmParams::validate(double variance_floor) const {
    const auto K = weights.size();
    require(K >= 1, "GMM: no components");
    require(means.rows() == K && variances.rows() == K, "GMM: component count mismatch");
    require(means.cols() == variances.cols() && means.cols() >= 1, "GMM: dimension mismatch");
    require((weights.array() >= 0.0).all(), "GMM: negative weight");
    require(std::abs(weights.sum() - 1.0) <= 1e-9, "GMM: weights must sum to 1");
    require(variances.allFinite() && means.allFinite(), "GMM: non-finite parameters");
    require((variances.array() >= variance_floor).all() && (variances.array() > 0.0).all(),
            "GMM: variance below floor");
}

json GmmParams::to_json() const {
    const auto K = weights.size();
    json means_j = json::array();
    json vars_j = json::array();
    for (Eigen::Index j = 0; j < K; ++j) {
        std::vector<double> m(means.row(j).begin(), means.row(j).end());
        std::vector<double> v(variances.row(j).begin(), variances.row(j).end());
        means_j.push_back(m);
        vars_j.push_back(v);
    }
    return {{"K", K},
            {"d", means.cols()},
            {"weights", std::vector<double>(weights.begin(), weights.end())},
            {"means", means_j},
            {"variances", vars_j},
            {"iterations", info.iterations},
            {"final_avg_log_likelihood", info.final_avg_log_likelihood},
            {"converged", info.converged},
            {"reseeded_components", info.reseeded_components}};
}

GmmParams GmmParams::from_json(const json& j) {
    GmmParams p;
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto m = j.at("means").get<std::vector<std::vector<double>>>();
    const auto v = j.at("variances").get<std::vector<std::vector<double>>>();
    const auto K = static_cast<Eigen::Index>(w.size());
    const auto d = static_cast<Eigen::Index>(j.at("d").get<std::size_t>());
    require(static_cast<Eigen::Index>(m.size()) == K && static_cast<Eigen::Index>(v.size()) == K,
            "GMM JSON: component count mismatch");
    p.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), K);
    p.means.resize(K, d);
    p.variances.resize(K, d);
    for (Eigen::Index k = 0; k < K; ++k) {
        require(static_cast<Eigen::Index>(m[k].size()) == d &&
                    static_cast<Eigen::Index>(v[k].size()) == d,
                "GMM JSON: dimension mismatch");
        for (Eigen::Index i = 0; i < d; ++i) {
            p.means(k, i) = m[k][i];
            p.variances(k, i) = v[k][i];
        }
    }
    p.info.iterations = j.value("iterations", std::size_t{0});
    p.info.final_avg_log_likelihood = j.value("final_avg_log_likelihood", 0.0);
    p.info.converged = j.value("converged", false);
    p.info.reseeded_components = j.value("reseeded_components", std::size_t{0});
    p.validate();
    return p;
}

GmmParams initialize_gmm(const Eigen::MatrixXd& data, const GmmConfig& config) {
    check_data(data);
    const auto n = static_cast<std::size_t>(data.rows());
    const auto d = static_cast<std::size_t>(data.cols());
    const std::size_t K = config.components;
    require(K >= 1, "GMM: need at least one component");
    if (n < K)
        throw InfeasibleFitError("GMM: " + std::to_string(n) + " samples cannot support " +
                                 std::to_string(K) + " components");

    Rng rng(config.seed);
    const std::size_t m = std::min(n, 10 * K * d);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    if (m < n) {
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(m);
    }
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(m), data.cols());
    for (std::size_t r = 0; r < m; ++r)
        sub.row(static_cast<Eigen::Index>(r)) = data.row(static_cast<Eigen::Index>(rows[r]));
    const auto seeds = kmeanspp_seeds(sub, K, rng);

    GmmParams p;
    const auto KK = static_cast<Eigen::Index>(K);
    p.weights = Eigen::VectorXd::Constant(KK, 1.0 / static_cast<double>(K));
    p.means.resize(KK, data.cols());
    for (std::size_t j = 0; j < K; ++j)
        p.means.row(static_cast<Eigen::Index>(j)) = sub.row(static_cast<Eigen::Index>(seeds[j]));
    const Eigen::RowVectorXd var = column_variance(data).cwiseMax(config.variance_floor);
    p.variances = var.replicate(KK, 1);
    return p;
}

GmmParams run_em(const Eigen::MatrixXd& data, GmmParams p, const GmmConfig& config) {
    check_data(data);
    const auto n = data.rows();
    const auto d = data.cols();
    const auto K = p.weights.size();
    require(p.means.cols() == d, "GMM: initial parameters have the wrong dimension");
    if (n < K)
        throw InfeasibleFitError("GMM: " + std::to_string(n) + " samples cannot support " +
                                 std::to_string(K) + " components");

    Rng rng(derive_seed(config.seed, "em-reseed"));
    const Eigen::RowVectorXd global_var = column_variance(data).cwiseMax(config.variance_floor);

    p.info = GmmFitInfo{};
    Eigen::MatrixXd resp;
    double ll = e_step(p, data, resp);
    p.info.history.push_back(ll);

    Eigen::VectorXd mass(K);
    for (std::size_t it = 0; it < config.max_iters; ++it) {
        // M-step, accumulated in row order.
        mass.setZero();
        Eigen::MatrixXd sum_x = Eigen::MatrixXd::Zero(K, d);
        for (Eigen::Index r = 0; r < n; ++r)
            for (Eigen::Index j = 0; j < K; ++j) {
                const double w = resp(r, j);
                mass(j) += w;
                for (Eigen::Index i = 0; i < d; ++i) sum_x(j, i) += w * data(r, i);
            }
        for (Eigen::Index j = 0; j < K; ++j) {
            if (mass(j) < kEmptyComponentMass) continue;
            p.means.row(j) = sum_x.row(j) / mass(j);
        }
        Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(K, d);
        for (Eigen::Index r = 0; r < n; ++r)
            for (Eigen::Index j = 0; j < K; ++j) {
                const double w = resp(r, j);
                for (Eigen::Index i = 0; i < d; ++i) {
                    const double diff = data(r, i) - p.means(j, i);
                    sum_sq(j, i) += w * diff * diff;
                }
            }
        for (Eigen::Index j = 0; j < K; ++j) {
            if (mass(j) < kEmptyComponentMass) {
                std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
                p.means.row(j) = data.row(pick(rng));
                p.variances.row(j) = global_var;
                mass(j) = 1.0;
                ++p.info.reseeded_components;
                continue;
            }
            for (Eigen::Index i = 0; i < d; ++i)
                p.variances(j, i) = std::max(sum_sq(j, i) / mass(j), config.variance_floor);
        }
        p.weights = mass / static_cast<double>(n);
        p.weights /= p.weights.sum();

        const double next = e_step(p, data, resp);
        p.info.history.push_back(next);
        p.info.iterations = it + 1;
        const double delta = std::abs(next - ll);
        ll = next;
        if (delta < config.tol) {
            p.info.converged = true;
            break;
        }
    }
    p.info.final_avg_log_likelihood = ll;
    return p;
}

GmmParams fit_gmm(const Eigen::MatrixXd& data, const GmmConfig& config) {
    return run_em(data, initialize_gmm(data, config), config);
}

double log_likelihood(const GmmParams& params, std::span<const double> x) {
    require(x.size() == params.dim(), "log_likelihood: dimension mismatch");
    const Prepared prep = prepare(params);
    std::vector<double> terms(params.components());
    return row_log_terms(params, prep, SpanView{x}, terms.data());
}

Eigen::VectorXd batch_log_likelihood(const GmmParams& params, const Eigen::MatrixXd& data) {
    require(static_cast<std::size_t>(data.cols()) == params.dim(),
            "batch_log_likelihood: dimension mismatch");
    const Prepared prep = prepare(params);
    std::vector<double> terms(params.components());
    Eigen::VectorXd out(data.rows());
    for (Eigen::Index r = 0; r < data.rows(); ++r)
        out(r) = row_log_terms(params, prep, RowView{data, r}, terms.data());
    return out;
}

Eigen::MatrixXd responsibilities(const GmmParams& params, const Eigen::MatrixXd& data) {
    require(static_cast<std::size_t>(data.cols()) == params.dim(),
            "responsibilities: dimension mismatch");
    Eigen::MatrixXd resp;
    e_step(params, data, resp);
    return resp;
}

}  // namespace flowadapt
