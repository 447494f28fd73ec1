#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowadapt/classifier.hpp"
#include "flowadapt/dataset.hpp"
#include "flowadapt/gmm.hpp"

namespace flowadapt {

struct MinorityReport {
    std::vector<std::string> classes;
    std::vector<std::size_t> counts;
    std::vector<double> fractions;
    std::vector<int> minority;  // present, non-benign, fraction < threshold
    double threshold = 0.05;

    bool is_minority(int c) const;
    nlohmann::json to_json() const;
};

MinorityReport identify_minorities(const Dataset& labeled, double threshold = 0.05);

struct GeneratorConfig {
    std::size_t components_per_class = 3;
    std::uint64_t seed = 0;
    std::size_t max_iters = 200;
    double tol = 1e-4;
    double variance_floor = 1e-6;
    /// Noise scale for the resampling fallback used by classes too small to fit.
    double jitter = 0.01;

    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
};

/// Mixture over a class's measurement features; each component carries its
/// own distribution over every metadata feature's states.
struct ClassGenerator {
    int label = 0;
    std::size_t samples = 0;
    GmmParams mixture;
    /// [component][metadata feature][state] probabilities.
    std::vector<std::vector<std::vector<double>>> metadata;
    bool components_reduced = false;
    /// Set for classes with fewer than two samples: synthesis resamples
    /// these records with jitter instead of sampling the mixture.
    bool fallback = false;
    std::vector<FlowRecord> exemplars;
};

struct GeneratorModel {
    SchemaPtr schema;
    std::vector<ClassGenerator> classes;
    std::uint64_t seed = 0;
    double jitter = 0.01;
    std::vector<std::string> warnings;

    const ClassGenerator* find(int label) const;

    nlohmann::json to_json() const;
    static GeneratorModel from_json(const nlohmann::json& j, SchemaPtr schema);
};

/// Fits one sub-model per class present in a labeled minority-class set.
GeneratorModel fit_generator(const Dataset& minority_records, const GeneratorConfig& config);

/// Draws count labeled synthetic records of one class.
Dataset synthesize(const GeneratorModel& generator, int label, std::size_t count, std::uint64_t seed);

struct FilterResult {
    Dataset retained;
    std::vector<std::size_t> generated_per_class;
    std::vector<std::size_t> retained_per_class;
    double threshold = 0.5;
};

/// Keeps the synthetic records whose benign probability is below threshold.
FilterResult filter_synthetic(const Dataset& synthetic, const LogisticModel& filter, double threshold);

/// Source training set, oracle-labeled priors and retained synthetics.
Dataset assemble_training_set(const Dataset& labeled, const Dataset& priors, const Dataset& synthetic);

struct AugmentationConfig {
    bool enabled = true;
    double ratio = 3.0;  // synthetic requested = ratio * current class count
    double minority_threshold = 0.05;
    double filter_threshold = 0.5;
    GeneratorConfig generator;
    LogisticConfig filter;

    nlohmann::json to_json() const;
    static AugmentationConfig from_json(const nlohmann::json& j);
};

struct ClassAugmentation {
    std::string name;
    std::size_t prior_count = 0;
    std::size_t generated = 0;
    std::size_t retained = 0;
    std::optional<double> w2;  // real class slice vs retained synthetics
};

struct AugmentationReport {
    double ratio = 0.0;
    double filter_threshold = 0.5;
    double minority_threshold = 0.05;
    std::vector<ClassAugmentation> classes;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct AugmentationOutcome {
    MinorityReport minorities;
    GeneratorModel generator;
    Dataset retained;
    AugmentationReport report;
};

/// Minority detection on the updated labeled set, generator fit on its
/// minority records, synthesis at the configured ratio, and filtering with a
/// benign-vs-rest model trained on the original labeled set.
AugmentationOutcome augment_minorities(const Dataset& updated_labeled, const Dataset& original_labeled,
                                       const AugmentationConfig& config);

}  // namespace flowadapt
