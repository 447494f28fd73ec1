#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowadapt/dataset.hpp"

namespace flowadapt {

struct MetricsReport {
    std::vector<std::string> classes;
    double macro_f1 = 0.0;  // mean over classes present in y_true
    double micro_f1 = 0.0;  // equals accuracy for single-label multiclass
    double accuracy = 0.0;
    double fnr = 0.0;  // benign-vs-attack, attack positive
    double fpr = 0.0;
    std::vector<double> per_class_f1;
    std::vector<bool> class_present;
    std::vector<std::vector<std::size_t>> confusion;  // [true][pred]
    std::size_t n = 0;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
};

MetricsReport classification_report(std::span<const int> y_true, std::span<const int> y_pred,
                                    const std::vector<std::string>& classes, int benign_index);

/// Exact 1-D Wasserstein-1 between two empirical distributions.
double emd_1d(std::span<const double> a, std::span<const double> b);

/// Exact 1-D Wasserstein-2 between two empirical distributions.
double w2_1d(std::span<const double> a, std::span<const double> b);

struct ClassDriftEntry {
    std::string name;
    std::size_t source_count = 0;
    std::size_t target_count = 0;
    bool shared = false;  // present on both sides
    double raw = 0.0;
    double normalized = 0.0;
};

struct DriftReport {
    std::vector<ClassDriftEntry> classes;
    std::string reference_class;  // class holding the maximum raw EMD
    bool degenerate = false;      // every shared class has raw EMD 0

    nlohmann::json to_json() const;
    static DriftReport from_json(const nlohmann::json& j);
};

/// Per-class drift between two labeled datasets over one schema: the mean
/// over continuous features of the 1-D EMD between class-conditional
/// samples, normalized by the largest class value.
DriftReport class_drift(const Dataset& source, const Dataset& target);

/// Mean over continuous features of the 1-D W2 between two samples.
double w2_fidelity(const Dataset& real, const Dataset& synthetic);

}  // namespace flowadapt
