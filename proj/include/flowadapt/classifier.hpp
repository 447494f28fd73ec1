#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "flowadapt/dataset.hpp"

namespace flowadapt {

struct MlpConfig {
    std::vector<std::size_t> hidden{100, 100};
    std::size_t epochs = 50;
    double lr = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 128;  // 0 = full batch
    std::uint64_t seed = 0;
    bool class_weighting = false;  // inverse-frequency loss weights

    nlohmann::json to_json() const;
    static MlpConfig from_json(const nlohmann::json& j);
};

/// Fully connected ReLU network with a softmax output layer.
///
/// Layer l maps activations of width layer_sizes[l] to layer_sizes[l+1] as
/// a * weights[l] + biases[l], so weights[l] is (in x out).
struct ClassifierModel {
    std::vector<std::size_t> layer_sizes;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::RowVectorXd> biases;
    std::vector<std::string> classes;
    bool trained = false;

    std::size_t epochs_run = 0;
    std::uint64_t seed = 0;
    std::vector<double> loss_history;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }
    std::size_t parameter_count() const;

    Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;

    nlohmann::json to_json() const;
    static ClassifierModel from_json(const nlohmann::json& j);
};

/// He-initialized, untrained network.
ClassifierModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::vector<std::string> classes, std::uint64_t seed);

ClassifierModel train_mlp(const Eigen::MatrixXd& x, std::span<const int> y,
                          std::vector<std::string> classes, const MlpConfig& config);

/// Encodes the dataset (one-hot categorical) and trains on it.
ClassifierModel train_mlp(const Dataset& train, const MlpConfig& config);

Eigen::MatrixXd predict_proba(const ClassifierModel& model, const Eigen::MatrixXd& x);
Eigen::MatrixXd predict_proba(const ClassifierModel& model, const Dataset& data);
std::vector<int> predict(const ClassifierModel& model, const Eigen::MatrixXd& x);
std::vector<int> predict(const ClassifierModel& model, const Dataset& data);

/// Mean cross-entropy of a batch.
double cross_entropy(const ClassifierModel& model, const Eigen::MatrixXd& x, std::span<const int> y);

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::RowVectorXd> biases;
};

/// Backpropagated gradients of the (optionally sample-weighted) mean
/// cross-entropy.
Gradients loss_gradients(const ClassifierModel& model, const Eigen::MatrixXd& x,
                         std::span<const int> y, std::span<const double> sample_weights = {});

struct GradientCheck {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t parameters_checked = 0;
};

/// Compares backprop gradients for one sample against central differences
/// on a seeded random subset of parameters.
GradientCheck finite_difference_check(const ClassifierModel& model, std::span<const double> sample,
                                      int label, std::uint64_t seed = 0,
                                      std::size_t parameters = 64, double h = 1e-5);

// ---------------------------------------------------------------------------

struct LogisticConfig {
    std::size_t epochs = 500;
    double lr = 0.5;
    std::size_t batch_size = 0;  // 0 = full batch
    double l2 = 0.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static LogisticConfig from_json(const nlohmann::json& j);
};

/// Binary logistic regression; the positive class is benign.
struct LogisticModel {
    Eigen::VectorXd weights;
    double bias = 0.0;
    bool trained = false;

    double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::VectorXd probabilities(const Eigen::MatrixXd& x) const;

    nlohmann::json to_json() const;
    static LogisticModel from_json(const nlohmann::json& j);
};

/// positive[i] is 1 for benign rows.
LogisticModel train_logistic(const Eigen::MatrixXd& x, std::span<const int> positive,
                             const LogisticConfig& config);

/// Benign-vs-rest on the encoded features of a labeled dataset.
LogisticModel train_logistic(const Dataset& train, const LogisticConfig& config);

/// P(benign) for every record of a dataset.
Eigen::VectorXd benign_probability(const LogisticModel& model, const Dataset& data);

}  // namespace flowadapt
