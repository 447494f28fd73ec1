#include "flowadapt/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowadapt/error.hpp"
#include "flowadapt/rng.hpp"

namespace flowadapt {

using nlohmann::json;

namespace {

struct ForwardPass {
    std::vector<Eigen::MatrixXd> activations;  // [0] = input, back() = logits
};

ForwardPass forward(const ClassifierModel& m, const Eigen::MatrixXd& x) {
    ForwardPass f;
    f.activations.reserve(m.weights.size() + 1);
    f.activations.push_back(x);
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        Eigen::MatrixXd z = f.activations.back() * m.weights[l];
        z.rowwise() += m.biases[l];
        if (l + 1 < m.weights.size()) z = z.cwiseMax(0.0);
        f.activations.push_back(std::move(z));
    }
    return f;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd p = z;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

double row_cross_entropy(const Eigen::MatrixXd& logits, Eigen::Index r, int y) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    return lse - logits(r, y);
}

void check_input(const ClassifierModel& m, const Eigen::MatrixXd& x) {
    require(!m.layer_sizes.empty(), "classifier: empty model");
    require(static_cast<std::size_t>(x.cols()) == m.input_dim(),
            "classifier: input has " + std::to_string(x.cols()) + " columns, model expects " +
                std::to_string(m.input_dim()));
}

void check_labels(const ClassifierModel& m, std::span<const int> y, Eigen::Index rows) {
    require(static_cast<Eigen::Index>(y.size()) == rows, "classifier: label count mismatch");
    for (int c : y)
        require(c >= 0 && static_cast<std::size_t>(c) < m.num_classes(), "classifier: label out of range");
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

constexpr double kProbEps = 1e-12;

}  // namespace

json MlpConfig::to_json() const {
    return {{"hidden", hidden},   {"epochs", epochs},         {"lr", lr},
            {"momentum", momentum}, {"batch_size", batch_size}, {"seed", seed},
            {"class_weighting", class_weighting}};
}

MlpConfig MlpConfig::from_json(const json& j) {
    MlpConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.class_weighting = j.value("class_weighting", c.class_weighting);
    return c;
}

std::size_t ClassifierModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

Eigen::MatrixXd ClassifierModel::logits(const Eigen::MatrixXd& x) const {
    check_input(*this, x);
    return forward(*this, x).activations.back();
}

json ClassifierModel::to_json() const {
    json layers = json::array();
    for (std::size_t l = 0; l < weights.size(); ++l) {
        // Row-major flattening of the (in x out) matrix.
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(weights[l].size()));
        for (Eigen::Index i = 0; i < weights[l].rows(); ++i)
            for (Eigen::Index o = 0; o < weights[l].cols(); ++o) w.push_back(weights[l](i, o));
        layers.push_back({{"weights", w},
                          {"biases", std::vector<double>(biases[l].begin(), biases[l].end())}});
    }
    return {{"layer_sizes", layer_sizes}, {"activation", "relu"}, {"classes", classes},
            {"layers", layers},           {"trained", trained},   {"epochs_run", epochs_run},
            {"seed", seed},               {"loss_history", loss_history}};
}

ClassifierModel ClassifierModel::from_json(const json& j) {
    ClassifierModel m;
    m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    require(m.layer_sizes.size() >= 2, "checkpoint: need at least input and output layers");
    require(m.classes.size() == m.layer_sizes.back(), "checkpoint: class count != output width");
    const auto& layers = j.at("layers");
    require(layers.size() + 1 == m.layer_sizes.size(), "checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(m.layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(m.layer_sizes[l + 1]);
        const auto w = layers[l].at("weights").get<std::vector<double>>();
        const auto b = layers[l].at("biases").get<std::vector<double>>();
        require(static_cast<Eigen::Index>(w.size()) == in * out &&
                    static_cast<Eigen::Index>(b.size()) == out,
                "checkpoint: parameter shape mismatch");
        Eigen::MatrixXd wm(in, out);
        for (Eigen::Index i = 0; i < in; ++i)
            for (Eigen::Index o = 0; o < out; ++o) wm(i, o) = w[static_cast<std::size_t>(i * out + o)];
        m.weights.push_back(std::move(wm));
        m.biases.push_back(Eigen::Map<const Eigen::RowVectorXd>(b.data(), out));
    }
    m.trained = j.value("trained", true);
    m.epochs_run = j.value("epochs_run", std::size_t{0});
    m.seed = j.value("seed", std::uint64_t{0});
    m.loss_history = j.value("loss_history", std::vector<double>{});
    return m;
}

ClassifierModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::vector<std::string> classes, std::uint64_t seed) {
    require(input_dim >= 1, "make_mlp: input dimension must be positive");
    require(classes.size() >= 2, "make_mlp: need at least two classes");
    ClassifierModel m;
    m.layer_sizes.push_back(input_dim);
    for (auto h : hidden) {
        require(h >= 1, "make_mlp: hidden layer width must be positive");
        m.layer_sizes.push_back(h);
    }
    m.layer_sizes.push_back(classes.size());
    m.classes = std::move(classes);
    m.seed = seed;

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(m.layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(m.layer_sizes[l + 1]);
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        Eigen::MatrixXd w(in, out);
        for (Eigen::Index i = 0; i < in; ++i)
            for (Eigen::Index o = 0; o < out; ++o) w(i, o) = scale * normal(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Eigen::RowVectorXd::Zero(out));
    }
    return m;
}

Gradients loss_gradients(const ClassifierModel& model, const Eigen::MatrixXd& x,
                         std::span<const int> y, std::span<const double> sample_weights) {
    check_input(model, x);
    check_labels(model, y, x.rows());
    require(x.rows() > 0, "loss_gradients: empty batch");
    require(sample_weights.empty() || sample_weights.size() == y.size(),
            "loss_gradients: weight count mismatch");

    const auto f = forward(model, x);
    Eigen::MatrixXd delta = softmax_rows(f.activations.back());
    double total_w = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        total_w += sample_weights.empty() ? 1.0 : sample_weights[static_cast<std::size_t>(r)];
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        delta(r, y[static_cast<std::size_t>(r)]) -= 1.0;
        const double w = sample_weights.empty() ? 1.0 : sample_weights[static_cast<std::size_t>(r)];
        delta.row(r) *= w / total_w;
    }

    const std::size_t L = model.weights.size();
    Gradients g;
    g.weights.resize(L);
    g.biases.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        g.weights[l] = f.activations[l].transpose() * delta;
        g.biases[l] = delta.colwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd back = delta * model.weights[l].transpose();
        // ReLU derivative; activations[l] is the post-ReLU output of layer l-1.
        delta = (f.activations[l].array() > 0.0).select(back, 0.0);
    }
    return g;
}

double cross_entropy(const ClassifierModel& model, const Eigen::MatrixXd& x, std::span<const int> y) {
    check_input(model, x);
    check_labels(model, y, x.rows());
    require(x.rows() > 0, "cross_entropy: empty batch");
    const auto z = forward(model, x).activations.back();
    double s = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) s += row_cross_entropy(z, r, y[static_cast<std::size_t>(r)]);
    return s / static_cast<double>(z.rows());
}

ClassifierModel train_mlp(const Eigen::MatrixXd& x, std::span<const int> y,
                          std::vector<std::string> classes, const MlpConfig& config) {
    require(x.rows() > 0, "train_mlp: empty training set");
    require(static_cast<Eigen::Index>(y.size()) == x.rows(), "train_mlp: label count mismatch");
    const std::size_t C = classes.size();
    std::vector<std::size_t> counts(C, 0);
    for (int c : y) {
        require(c >= 0 && static_cast<std::size_t>(c) < C, "train_mlp: label out of range");
        ++counts[static_cast<std::size_t>(c)];
    }
    const auto present = static_cast<std::size_t>(
        std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }));
    require(present >= 2, "train_mlp: training set must contain at least two classes");

    ClassifierModel m = make_mlp(static_cast<std::size_t>(x.cols()), config.hidden, std::move(classes),
                                 config.seed);
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<double> class_w(C, 1.0);
    if (config.class_weighting)
        for (std::size_t c = 0; c < C; ++c)
            if (counts[c] > 0)
                class_w[c] = static_cast<double>(n) / (static_cast<double>(present * counts[c]));

    std::vector<Eigen::MatrixXd> vw;
    std::vector<Eigen::RowVectorXd> vb;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        vw.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols()));
        vb.push_back(Eigen::RowVectorXd::Zero(m.biases[l].size()));
    }

    Rng rng(derive_seed(config.seed, "mlp-shuffle"));
    const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Eigen::MatrixXd xb;
    std::vector<int> yb;
    std::vector<double> wb;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < n) std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        double epoch_w = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            xb.resize(static_cast<Eigen::Index>(len), x.cols());
            yb.resize(len);
            wb.resize(len);
            for (std::size_t k = 0; k < len; ++k) {
                const auto i = order[start + k];
                xb.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(i));
                yb[k] = y[i];
                wb[k] = class_w[static_cast<std::size_t>(y[i])];
            }
            // Loss on the batch before the step, for the history.
            const auto z = forward(m, xb).activations.back();
            for (std::size_t k = 0; k < len; ++k) {
                epoch_loss += wb[k] * row_cross_entropy(z, static_cast<Eigen::Index>(k), yb[k]);
                epoch_w += wb[k];
            }
            const Gradients g = config.class_weighting ? loss_gradients(m, xb, yb, wb)
                                                       : loss_gradients(m, xb, yb);
            for (std::size_t l = 0; l < m.weights.size(); ++l) {
                vw[l] = config.momentum * vw[l] - config.lr * g.weights[l];
                vb[l] = config.momentum * vb[l] - config.lr * g.biases[l];
                m.weights[l] += vw[l];
                m.biases[l] += vb[l];
            }
        }
        m.loss_history.push_back(epoch_loss / epoch_w);
        m.epochs_run = epoch + 1;
    }
    m.trained = true;
    return m;
}

ClassifierModel train_mlp(const Dataset& train, const MlpConfig& config) {
    require(train.is_labeled(), "train_mlp: training set must be labeled");
    const FeatureEncoder enc(train.schema());
    const auto y = train.labels();
    return train_mlp(enc.encode(train), y, train.schema().classes(), config);
}

Eigen::MatrixXd predict_proba(const ClassifierModel& model, const Eigen::MatrixXd& x) {
    require(model.trained, "predict_proba: model is not trained");
    check_input(model, x);
    if (x.rows() == 0) return Eigen::MatrixXd(0, static_cast<Eigen::Index>(model.num_classes()));
    return softmax_rows(forward(model, x).activations.back());
}

Eigen::MatrixXd predict_proba(const ClassifierModel& model, const Dataset& data) {
    return predict_proba(model, FeatureEncoder(data.schema()).encode(data));
}

std::vector<int> predict(const ClassifierModel& model, const Eigen::MatrixXd& x) {
    const auto p = predict_proba(model, x);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        Eigen::Index arg = 0;
        p.row(r).maxCoeff(&arg);
        out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
    }
    return out;
}

std::vector<int> predict(const ClassifierModel& model, const Dataset& data) {
    return predict(model, FeatureEncoder(data.schema()).encode(data));
}

GradientCheck finite_difference_check(const ClassifierModel& model, std::span<const double> sample,
                                      int label, std::uint64_t seed, std::size_t parameters,
                                      double h) {
    require(sample.size() == model.input_dim(), "finite_difference_check: sample width mismatch");
    const Eigen::MatrixXd x = Eigen::Map<const Eigen::RowVectorXd>(sample.data(),
                                                                   static_cast<Eigen::Index>(sample.size()));
    const int y[1] = {label};
    const Gradients g = loss_gradients(model, x, y);

    // Parameters are addressed as (layer, is_bias, flat index).
    struct Slot {
        std::size_t layer;
        bool bias;
        Eigen::Index index;
    };
    std::vector<Slot> slots;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < model.weights[l].size(); ++i) slots.push_back({l, false, i});
        for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) slots.push_back({l, true, i});
    }
    Rng rng(seed);
    std::shuffle(slots.begin(), slots.end(), rng);
    if (slots.size() > parameters) slots.resize(parameters);

    ClassifierModel probe = model;
    GradientCheck out;
    for (const auto& s : slots) {
        double& p = s.bias ? probe.biases[s.layer](s.index) : probe.weights[s.layer](s.index);
        const double analytic = s.bias ? g.biases[s.layer](s.index) : g.weights[s.layer](s.index);
        const double orig = p;
        p = orig + h;
        const double up = cross_entropy(probe, x, y);
        p = orig - h;
        const double down = cross_entropy(probe, x, y);
        p = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double abs_err = std::abs(analytic - numeric);
        const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        out.max_absolute_error = std::max(out.max_absolute_error, abs_err);
        out.max_relative_error = std::max(out.max_relative_error, abs_err / scale);
        ++out.parameters_checked;
    }
    return out;
}

// ---------------------------------------------------------------------------

json LogisticConfig::to_json() const {
    return {{"epochs", epochs}, {"lr", lr}, {"batch_size", batch_size}, {"l2", l2}, {"seed", seed}};
}

LogisticConfig LogisticConfig::from_json(const json& j) {
    LogisticConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.l2 = j.value("l2", c.l2);
    c.seed = j.value("seed", c.seed);
    return c;
}

double LogisticModel::probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    require(x.size() == weights.size(), "logistic: input width mismatch");
    const double p = sigmoid(x.dot(weights.transpose()) + bias);
    return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

Eigen::VectorXd LogisticModel::probabilities(const Eigen::MatrixXd& x) const {
    require(x.cols() == weights.size(), "logistic: input width mismatch");
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out(r) = probability(x.row(r));
    return out;
}

json LogisticModel::to_json() const {
    return {{"weights", std::vector<double>(weights.begin(), weights.end())},
            {"bias", bias},
            {"positive_class", "benign"},
            {"trained", trained}};
}

LogisticModel LogisticModel::from_json(const json& j) {
    LogisticModel m;
    const auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.bias = j.at("bias").get<double>();
    m.trained = j.value("trained", true);
    return m;
}

LogisticModel train_logistic(const Eigen::MatrixXd& x, std::span<const int> positive,
                             const LogisticConfig& config) {
    require(static_cast<Eigen::Index>(positive.size()) == x.rows(), "train_logistic: label count mismatch");
    const auto pos = std::count(positive.begin(), positive.end(), 1);
    require(pos > 0 && pos < static_cast<long>(positive.size()),
            "train_logistic: both classes must be present");

    LogisticModel m;
    Rng rng(config.seed);
    std::normal_distribution<double> normal(0.0, 0.01);
    m.weights.resize(x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i) m.weights(i) = normal(rng);
    m.bias = 0.0;

    const auto n = static_cast<std::size_t>(x.rows());
    const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < n) std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            Eigen::VectorXd gw = Eigen::VectorXd::Zero(x.cols());
            double gb = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const auto i = static_cast<Eigen::Index>(order[start + k]);
                const double err = sigmoid(x.row(i).dot(m.weights.transpose()) + m.bias) -
                                   static_cast<double>(positive[static_cast<std::size_t>(i)]);
                gw += err * x.row(i).transpose();
                gb += err;
            }
            gw /= static_cast<double>(len);
            gb /= static_cast<double>(len);
            gw += config.l2 * m.weights;
            m.weights -= config.lr * gw;
            m.bias -= config.lr * gb;
        }
    }
    m.trained = true;
    return m;
}

LogisticModel train_logistic(const Dataset& train, const LogisticConfig& config) {
    require(train.is_labeled(), "train_logistic: training set must be labeled");
    const int benign = train.schema().benign_index();
    std::vector<int> positive;
    positive.reserve(train.size());
    for (const auto& r : train.records()) positive.push_back(*r.label == benign ? 1 : 0);
    return train_logistic(FeatureEncoder(train.schema()).encode(train), positive, config);
}

Eigen::VectorXd benign_probability(const LogisticModel& model, const Dataset& data) {
    require(model.trained, "benign_probability: filter is not trained");
    return model.probabilities(FeatureEncoder(data.schema()).encode(data));
}

}  // namespace flowadapt
