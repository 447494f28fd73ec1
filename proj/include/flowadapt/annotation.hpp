#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowadapt/classifier.hpp"
#include "flowadapt/dataset.hpp"
#include "flowadapt/selection.hpp"

namespace flowadapt {

enum class TaskStatus { pending, labeled };

std::string to_string(TaskStatus s);

/// One selected pool sample waiting for (or carrying) an annotator label.
struct AnnotationTask {
    std::string id;  // "<run id>.<sample index>"
    std::string run_id;
    std::size_t sample_index = 0;
    /// Feature name to value; categorical features use their state names.
    nlohmann::json features;
    std::vector<double> values;
    double score = 0.0;
    std::string predicted_label;
    std::vector<double> probabilities;
    TaskStatus status = TaskStatus::pending;
    std::optional<std::string> label;
    std::optional<std::string> note;
    std::string created_at;
    std::string updated_at;

    nlohmann::json to_json() const;
    static AnnotationTask from_json(const nlohmann::json& j);
};

std::string task_id(const std::string& run_id, std::size_t sample_index);

/// Rebuilds a record from a task's feature snapshot.
FlowRecord record_from_snapshot(const FeatureSchema& schema, const nlohmann::json& features);

/// One pending task per selected pool index, with the feature snapshot,
/// score and the model's prediction.
std::vector<AnnotationTask> make_tasks(const std::string& run_id, const SelectionReport& selection,
                                       const Dataset& pool, const ClassifierModel& model);

enum class RunStatus { awaiting_labels, resuming, completed, failed };

std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

struct RunSummary {
    std::string run_id;
    RunStatus status = RunStatus::awaiting_labels;
    std::size_t enqueued = 0;
    std::size_t pending = 0;
    std::size_t labeled = 0;
    std::vector<std::string> classes;
    std::string error;

    nlohmann::json to_json() const;
};

struct TaskPage {
    std::size_t total = 0;
    std::size_t offset = 0;
    std::size_t limit = 0;
    std::vector<AnnotationTask> tasks;
};

/// Thread-safe task queue backed by an append-only JSON-lines journal per
/// run (<journal dir>/<run id>/journal.jsonl).
///
/// When the last pending task of a run is labeled, the run moves to
/// resuming and the resume callback fires once, outside the lock, with the
/// submitted labels keyed by sample index.
class AnnotationStore {
public:
    using ResumeCallback = std::function<void(const std::string& run_id, std::map<std::size_t, int> labels)>;

    explicit AnnotationStore(std::filesystem::path journal_dir, bool allow_relabel = false);

    void on_resume(ResumeCallback cb);

    /// Replays every journal under the journal directory. Returns the runs
    /// that still need resuming (all tasks labeled but not completed).
    std::vector<std::string> recover();

    /// Adds the tasks of a run; a run that already has tasks is left alone.
    std::size_t enqueue(const std::string& run_id, const std::vector<std::string>& classes,
                        const std::vector<AnnotationTask>& tasks);

    /// Throws NotFoundError, ValidationError or ConflictError.
    AnnotationTask submit_label(const std::string& task_id, const std::string& label,
                                const std::optional<std::string>& note);

    AnnotationTask task(const std::string& task_id) const;
    /// Tasks ordered by descending score, then id. status filter: "pending",
    /// "labeled" or "all".
    TaskPage tasks(const std::string& run_id, const std::string& status, std::size_t offset,
                   std::size_t limit) const;
    RunSummary summary(const std::string& run_id) const;
    std::optional<nlohmann::json> metrics(const std::string& run_id) const;
    bool has_run(const std::string& run_id) const;

    void mark_completed(const std::string& run_id, const nlohmann::json& metrics);
    void mark_failed(const std::string& run_id, const std::string& error);

    /// Submitted labels of a run keyed by sample index.
    std::map<std::size_t, int> labels(const std::string& run_id) const;

    const std::filesystem::path& journal_dir() const noexcept { return journal_dir_; }

private:
    struct Run {
        std::vector<std::string> classes;
        std::vector<std::string> task_ids;
        RunStatus status = RunStatus::awaiting_labels;
        std::size_t pending = 0;
        std::optional<nlohmann::json> metrics;
        std::string error;
    };

    void append(const std::string& run_id, const nlohmann::json& event);
    void apply(const nlohmann::json& event, bool replaying);
    std::map<std::size_t, int> labels_locked(const std::string& run_id) const;

    std::filesystem::path journal_dir_;
    bool allow_relabel_ = false;
    mutable std::mutex mu_;
    std::map<std::string, Run> runs_;
    std::map<std::string, AnnotationTask> tasks_;
    ResumeCallback resume_;
};

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace flowadapt
