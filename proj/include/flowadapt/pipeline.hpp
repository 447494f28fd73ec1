#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowadapt/augmentation.hpp"
#include "flowadapt/classifier.hpp"
#include "flowadapt/dataset.hpp"
#include "flowadapt/gmm.hpp"
#include "flowadapt/metrics.hpp"
#include "flowadapt/selection.hpp"

namespace flowadapt {

/// Reveals hidden labels of an unlabeled pool and counts every reveal.
class SimulatedOracle {
public:
    explicit SimulatedOracle(const Dataset& pool);

    std::vector<int> reveal(std::span<const std::size_t> indices);
    std::size_t reveals() const noexcept { return reveals_; }

private:
    std::vector<int> truth_;
    bool has_truth_ = false;
    std::size_t reveals_ = 0;
};

/// Evaluation-only access to true labels.
class GroundTruth {
public:
    /// Labels of a labeled dataset, or the hidden truth of an unlabeled one.
    static std::vector<int> labels(const Dataset& data);
    /// Labeled copy carrying the true labels.
    static Dataset reveal(const Dataset& data);
};

/// True iff macro F1 is strictly below the threshold.
bool degradation_check(const MetricsReport& pre_metrics, double threshold);

enum class Strategy { netguard, uncertainty, coreset, clue, none, full };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

enum class OracleMode { simulated, service };

struct DataSource {
    std::optional<DriftSpec> drift;
    std::filesystem::path schema;
    std::filesystem::path source_csv;
    std::filesystem::path target_csv;
    /// Optional stratified cap applied to each domain after loading.
    std::size_t max_rows = 0;

    nlohmann::json to_json() const;
    static DataSource from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

struct RunConfig {
    std::string run_id = "run";
    DataSource data;
    Strategy strategy = Strategy::netguard;
    std::optional<double> budget;  // fraction of the unlabeled pool
    GmmConfig gmm;
    MlpConfig classifier;
    AugmentationConfig augmentation;
    OracleMode oracle = OracleMode::simulated;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;

    double train_fraction = 0.7;
    std::size_t probe_size = 200;
    double degradation_factor = 0.9;
    /// Skip adaptation when the probe does not show degradation.
    bool require_degradation = false;

    std::string service_url;  // service mode: where to enqueue the selection
    std::filesystem::path journal_dir;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

RunConfig load_run_config(const std::filesystem::path& path);

struct ProbeReport {
    std::size_t size = 0;
    double source_validation_f1 = 0.0;
    double probe_f1 = 0.0;
    double threshold = 0.0;
    bool degraded = false;

    nlohmann::json to_json() const;
};

/// State after selection (steps 1-5), enough to finish the round once labels
/// for the selected pool samples are available.
struct PreparedRun {
    RunConfig config;
    SchemaPtr schema;
    NormStats norm;
    Dataset labeled;            // X_L, normalized
    Dataset source_validation;  // held-out source split, normalized
    Dataset pool;               // X_UL, normalized, hidden truth
    ClassifierModel pre_model;
    ProbeReport probe;
    bool adapt = true;
    SelectionReport selection;
    std::map<std::string, double> timings;
};

struct RunResult {
    std::string run_id;
    std::string strategy;
    std::string status = "completed";  // or "awaiting_labels"
    bool enqueued = false;             // service mode: the service accepted the queue
    /// Both are evaluated on the pool minus X_P and need hidden truth.
    std::optional<MetricsReport> pre;
    std::optional<MetricsReport> post;
    SelectionReport selection;
    std::optional<AugmentationReport> augmentation;
    std::optional<DriftReport> drift;
    ProbeReport probe;
    std::size_t oracle_reveals = 0;
    std::size_t labeled_before = 0;
    std::size_t labeled_after = 0;
    std::size_t unlabeled_before = 0;
    std::size_t unlabeled_after = 0;
    std::size_t synthetic_retained = 0;
    std::size_t training_size = 0;
    std::vector<std::size_t> evaluation_indices;  // into the target pool
    ClassifierModel pre_model;
    std::optional<ClassifierModel> post_model;
    std::optional<Dataset> synthetic;
    std::map<std::string, double> timings;  // seconds per stage

    /// Deterministic summary; timings are kept under a separate key.
    nlohmann::json to_json(bool include_timings = true) const;
};

/// Loads or generates both domains, splits and normalizes them, trains the
/// pre-adaptation model, runs the degradation probe and selects X_P.
PreparedRun prepare(const RunConfig& config);

/// Finishes a service-mode run parked in parked_file with labels keyed by
/// pool index.
RunResult resume(const std::filesystem::path& parked_file, const std::map<std::size_t, int>& labels);

/// Adds the labeled priors, augments, retrains from scratch and evaluates.
RunResult complete(const PreparedRun& prepared, std::span<const int> prior_labels);

/// One acquisition round. In service mode the run parks after selection.
RunResult run(const RunConfig& config);

/// Writes config.json, selection.json, metrics_pre.json, metrics_post.json,
/// drift.json, augmentation.json, result.json, model checkpoints and the
/// retained synthetic records.
void write_artifacts(const RunConfig& config, const RunResult& result, const std::filesystem::path& dir);

/// Directory holding a parked run's state inside a journal directory.
std::filesystem::path run_directory(const std::filesystem::path& journal_dir, const std::string& run_id);

}  // namespace flowadapt
