#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace flowadapt {

enum class FeatureKind { categorical, continuous };

struct FeatureDescriptor {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    std::vector<std::string> vocabulary;  // categorical only, ordered
    std::string unit;                     // continuous only, informational
};

/// Column layout of a flow table: metadata (categorical) and measurement
/// (continuous) features plus the label column and its class vocabulary.
class FeatureSchema {
public:
    FeatureSchema(std::vector<FeatureDescriptor> features, std::string label_column,
                  std::vector<std::string> classes, std::string benign_class = "");

    const std::vector<FeatureDescriptor>& features() const noexcept { return features_; }
    const FeatureDescriptor& feature(std::size_t i) const { return features_.at(i); }
    std::size_t size() const noexcept { return features_.size(); }
    const std::string& label_column() const noexcept { return label_column_; }
    const std::vector<std::string>& classes() const noexcept { return classes_; }
    std::size_t num_classes() const noexcept { return classes_.size(); }
    const std::string& class_name(int c) const { return classes_.at(static_cast<std::size_t>(c)); }

    /// Index of the benign class; every other class counts as an attack.
    int benign_index() const noexcept { return benign_index_; }

    std::optional<int> find_class(const std::string& name) const;
    int class_index(const std::string& name) const;  // throws SchemaError
    std::optional<std::size_t> find_feature(const std::string& name) const;

    const std::vector<std::size_t>& continuous_indices() const noexcept { return continuous_; }
    const std::vector<std::size_t>& categorical_indices() const noexcept { return categorical_; }

    /// Width after one-hot expansion of categorical features.
    std::size_t encoded_width() const noexcept { return encoded_width_; }

    bool operator==(const FeatureSchema& other) const;

    nlohmann::json to_json() const;
    static FeatureSchema from_json(const nlohmann::json& j);

private:
    std::vector<FeatureDescriptor> features_;
    std::string label_column_;
    std::vector<std::string> classes_;
    int benign_index_ = 0;
    std::vector<std::size_t> continuous_;
    std::vector<std::size_t> categorical_;
    std::size_t encoded_width_ = 0;
};

using SchemaPtr = std::shared_ptr<const FeatureSchema>;

SchemaPtr load_schema(const std::filesystem::path& path);

enum class Provenance { real, synthetic, augmented };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// One flow. Categorical values are stored as vocabulary indices.
struct FlowRecord {
    std::vector<double> values;
    std::optional<int> label;
    Provenance origin = Provenance::real;

    bool operator==(const FlowRecord&) const = default;
};

enum class LabelMode { labeled, hidden_truth, unlabeled };

LabelMode label_mode_from_string(const std::string& s);

class SimulatedOracle;
class GroundTruth;

/// Immutable, schema-tagged collection of flows.
///
/// A dataset is either labeled (every record carries a label) or unlabeled.
/// Unlabeled datasets may hold the true labels privately; only the simulated
/// oracle, the ground-truth evaluator and the CSV writer can read them.
class Dataset {
public:
    explicit Dataset(SchemaPtr schema, Provenance provenance = Provenance::real);

    static Dataset labeled(SchemaPtr schema, std::vector<FlowRecord> records,
                           Provenance provenance = Provenance::real);
    static Dataset unlabeled(SchemaPtr schema, std::vector<FlowRecord> records,
                             std::optional<std::vector<int>> hidden_truth = std::nullopt);

    const FeatureSchema& schema() const noexcept { return *schema_; }
    const SchemaPtr& schema_ptr() const noexcept { return schema_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const std::vector<FlowRecord>& records() const noexcept { return records_; }
    const FlowRecord& record(std::size_t i) const { return records_.at(i); }
    bool is_labeled() const noexcept { return labeled_; }
    bool has_hidden_truth() const noexcept { return has_truth_; }
    Provenance provenance() const noexcept { return provenance_; }

    /// Labels of a labeled dataset, in record order.
    std::vector<int> labels() const;
    /// Per-class record counts over the full class vocabulary.
    std::vector<std::size_t> class_counts() const;

    Dataset subset(std::span<const std::size_t> indices) const;
    /// All records except the given indices, order preserved.
    Dataset without(std::span<const std::size_t> indices) const;
    /// Labeled copy of an unlabeled dataset with the given labels attached.
    Dataset with_labels(std::span<const int> labels) const;
    /// Unlabeled view (labels dropped, kept as hidden truth).
    Dataset hide_labels() const;
    /// Same labels, hidden truth and provenance over replacement records.
    Dataset with_records(std::vector<FlowRecord> records) const;

    /// Concatenation of labeled datasets sharing one schema.
    static Dataset concat(std::span<const Dataset> parts, Provenance provenance);

    /// Throws if any record violates the schema.
    void validate() const;
    void validate_record(const FlowRecord& r, std::size_t row) const;

private:
    friend class SimulatedOracle;
    friend class GroundTruth;
    friend void write_csv(const Dataset& data, const std::filesystem::path& path,
                          bool include_hidden_truth);

    SchemaPtr schema_;
    std::vector<FlowRecord> records_;
    bool labeled_ = true;
    bool has_truth_ = false;
    Provenance provenance_ = Provenance::real;
    std::vector<int> hidden_truth_;
};

struct LoadedCsv {
    Dataset data;
    std::size_t dropped_rows = 0;
};

/// Parses a flow CSV. Rows with a non-finite continuous value are dropped
/// and counted; extra columns not named by the schema are ignored.
LoadedCsv load_csv(const std::filesystem::path& path, SchemaPtr schema, LabelMode mode);

/// Writes continuous values at full precision so a reload is bit-exact.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               bool include_hidden_truth = false);

/// Per-feature min-max statistics fitted on a training set.
struct NormStats {
    std::vector<std::size_t> features;  // schema indices of continuous features
    std::vector<double> min;
    std::vector<double> max;
    std::vector<bool> constant;

    bool any_constant() const;
    Dataset apply(const Dataset& data) const;

    nlohmann::json to_json() const;
    static NormStats from_json(const nlohmann::json& j);
};

NormStats fit_norm_stats(const Dataset& train);

struct Normalized {
    Dataset train;
    std::vector<Dataset> others;
    NormStats stats;
};

Normalized normalize(const Dataset& train, std::span<const Dataset> others);

struct SplitResult {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::vector<std::string> warnings;
};

/// Stratified split for labeled data; plain shuffled split otherwise.
SplitResult split(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Uniform stratified subsample of n records (labeled data).
Dataset stratified_subsample(const Dataset& data, std::size_t n, std::uint64_t seed);

/// Dense numeric view: continuous values as-is, categorical one-hot.
class FeatureEncoder {
public:
    explicit FeatureEncoder(const FeatureSchema& schema);

    std::size_t width() const noexcept { return width_; }
    Eigen::MatrixXd encode(const Dataset& data) const;
    void encode_row(const FlowRecord& r, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) const;

private:
    struct Column {
        std::size_t feature;
        std::size_t offset;
        std::size_t vocab;  // 0 for continuous
    };
    std::vector<Column> columns_;
    std::size_t width_ = 0;
};

/// n x (#continuous) matrix of the continuous features only.
Eigen::MatrixXd continuous_matrix(const Dataset& data);

// ---------------------------------------------------------------------------
// Synthetic drift benchmark

struct ClassDrift {
    std::string name;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<double> shift;
    std::size_t source_count = 0;  // 0 marks a class that appears only in the target
    std::size_t target_count = 0;
    /// One probability row per metadata feature.
    std::vector<std::vector<double>> metadata_probs;
    /// Target-domain override; empty means same as source.
    std::vector<std::vector<double>> target_metadata_probs;
};

struct DriftSpec {
    std::vector<std::string> continuous_features;
    std::vector<FeatureDescriptor> metadata_features;
    std::string benign_class;
    std::vector<ClassDrift> classes;
    std::uint64_t seed = 0;
    /// Defaults to a value derived from seed; setting it equal to seed makes
    /// both domains share one random stream.
    std::optional<std::uint64_t> target_seed;

    void validate() const;
    SchemaPtr schema() const;

    nlohmann::json to_json() const;
    static DriftSpec from_json(const nlohmann::json& j);
};

DriftSpec load_drift_spec(const std::filesystem::path& path);

struct DriftBenchmark {
    Dataset source;  // labeled
    Dataset target;  // unlabeled, hidden truth
};

DriftBenchmark generate_drift_benchmark(const DriftSpec& spec);

}  // namespace flowadapt
