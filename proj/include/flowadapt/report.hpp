#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowadapt/metrics.hpp"
#include "flowadapt/selection.hpp"

namespace flowadapt {

/// The parts of a run directory the tables need.
struct RunArtifacts {
    std::string label;  // column/row heading, e.g. "netguard 1%"
    std::string strategy;
    std::optional<double> budget;
    SelectionReport selection;
    std::optional<MetricsReport> pre;
    std::optional<MetricsReport> post;
    std::optional<DriftReport> drift;
};

RunArtifacts load_run_artifacts(const std::filesystem::path& dir);

/// Per-class domain counts, normalized EMD and per-run selection counts.
std::string render_selection_table(const std::vector<RunArtifacts>& runs);

/// Macro F1 (%), FNR, FPR and accuracy (%) after adaptation, one row per run.
std::string render_performance_table(const std::vector<RunArtifacts>& runs);

/// Per-class F1 (%) before adaptation and after each run.
std::string render_class_table(const std::vector<RunArtifacts>& runs);

}  // namespace flowadapt
