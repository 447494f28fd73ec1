#include "flowadapt/annotation.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include "flowadapt/error.hpp"

namespace flowadapt {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

std::string to_string(TaskStatus s) { return s == TaskStatus::pending ? "pending" : "labeled"; }

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::awaiting_labels: return "awaiting_labels";
        case RunStatus::resuming: return "resuming";
        case RunStatus::completed: return "completed";
        case RunStatus::failed: return "failed";
    }
    return "?";
}

RunStatus run_status_from_string(const std::string& s) {
    for (auto st : {RunStatus::awaiting_labels, RunStatus::resuming, RunStatus::completed, RunStatus::failed})
        if (to_string(st) == s) return st;
    throw ValidationError("unknown run status '" + s + "'");
}

json AnnotationTask::to_json() const {
    json j = {{"id", id},
              {"run_id", run_id},
              {"sample_index", sample_index},
              {"features", features},
              {"values", values},
              {"score", score},
              {"predicted_label", predicted_label},
              {"probabilities", probabilities},
              {"status", to_string(status)},
              {"created_at", created_at},
              {"updated_at", updated_at}};
    j["label"] = label ? json(*label) : json(nullptr);
    j["note"] = note ? json(*note) : json(nullptr);
    return j;
}

AnnotationTask AnnotationTask::from_json(const json& j) {
    AnnotationTask t;
    t.id = j.at("id").get<std::string>();
    t.run_id = j.at("run_id").get<std::string>();
    t.sample_index = j.at("sample_index").get<std::size_t>();
    t.features = j.value("features", json::object());
    t.values = j.value("values", std::vector<double>{});
    t.score = j.value("score", 0.0);
    t.predicted_label = j.value("predicted_label", std::string{});
    t.probabilities = j.value("probabilities", std::vector<double>{});
    t.status = j.value("status", std::string{"pending"}) == "labeled" ? TaskStatus::labeled : TaskStatus::pending;
    if (j.contains("label") && !j.at("label").is_null()) t.label = j.at("label").get<std::string>();
    if (j.contains("note") && !j.at("note").is_null()) t.note = j.at("note").get<std::string>();
    t.created_at = j.value("created_at", std::string{});
    t.updated_at = j.value("updated_at", std::string{});
    return t;
}

std::string task_id(const std::string& run_id, std::size_t sample_index) {
    return run_id + "." + std::to_string(sample_index);
}

FlowRecord record_from_snapshot(const FeatureSchema& schema, const json& features) {
    FlowRecord r;
    r.values.resize(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
        const auto& fd = schema.feature(f);
        if (!features.contains(fd.name)) throw SchemaError("snapshot lacks feature '" + fd.name + "'");
        const auto& v = features.at(fd.name);
        if (fd.kind == FeatureKind::categorical) {
            const auto s = v.get<std::string>();
            auto it = std::find(fd.vocabulary.begin(), fd.vocabulary.end(), s);
            if (it == fd.vocabulary.end()) throw VocabularyError("unknown state '" + s + "' for " + fd.name, 0);
            r.values[f] = static_cast<double>(it - fd.vocabulary.begin());
        } else {
            r.values[f] = v.get<double>();
        }
    }
    return r;
}

std::vector<AnnotationTask> make_tasks(const std::string& run_id, const SelectionReport& selection,
                                       const Dataset& pool, const ClassifierModel& model) {
    const auto& schema = pool.schema();
    std::vector<AnnotationTask> out;
    if (selection.selected.empty()) return out;
    const Dataset chosen = pool.subset(selection.selected);
    const Eigen::MatrixXd proba = predict_proba(model, chosen);
    const auto now = utc_timestamp();
    for (std::size_t k = 0; k < selection.selected.size(); ++k) {
        const auto idx = selection.selected[k];
        const auto& rec = chosen.record(k);
        AnnotationTask t;
        t.id = task_id(run_id, idx);
        t.run_id = run_id;
        t.sample_index = idx;
        t.features = json::object();
        for (std::size_t f = 0; f < schema.size(); ++f) {
            const auto& fd = schema.feature(f);
            if (fd.kind == FeatureKind::categorical)
                t.features[fd.name] = fd.vocabulary.at(static_cast<std::size_t>(rec.values[f]));
            else
                t.features[fd.name] = rec.values[f];
        }
        t.values = rec.values;
        t.score = selection.scores.empty() ? 0.0 : selection.scores.at(idx);
        const auto row = static_cast<Eigen::Index>(k);
        Eigen::Index best = 0;
        proba.row(row).maxCoeff(&best);
        t.predicted_label = schema.class_name(static_cast<int>(best));
        for (Eigen::Index c = 0; c < proba.cols(); ++c) t.probabilities.push_back(proba(row, c));
        t.created_at = now;
        t.updated_at = now;
        out.push_back(std::move(t));
    }
    return out;
}

json RunSummary::to_json() const {
    json j = {{"run_id", run_id},
              {"status", to_string(status)},
              {"enqueued", enqueued},
              {"pending", pending},
              {"labeled", labeled},
              {"classes", classes}};
    if (!error.empty()) j["error"] = error;
    return j;
}

// ---------------------------------------------------------------------------

AnnotationStore::AnnotationStore(fs::path journal_dir, bool allow_relabel)
    : journal_dir_(std::move(journal_dir)), allow_relabel_(allow_relabel) {
    if (!journal_dir_.empty()) fs::create_directories(journal_dir_);
}

void AnnotationStore::on_resume(ResumeCallback cb) {
    std::lock_guard lk(mu_);
    resume_ = std::move(cb);
}

void AnnotationStore::append(const std::string& run_id, const json& event) {
    if (journal_dir_.empty()) return;
    const auto dir = journal_dir_ / run_id;
    fs::create_directories(dir);
    std::ofstream out(dir / "journal.jsonl", std::ios::app);
    if (!out) throw Error("cannot append to journal of run " + run_id);
    out << event.dump() << '\n';
    out.flush();
}

void AnnotationStore::apply(const json& ev, bool replaying) {
    const auto kind = ev.at("event").get<std::string>();
    const auto run_id = ev.at("run_id").get<std::string>();
    if (kind == "enqueue") {
        Run& run = runs_[run_id];
        run.classes = ev.at("classes").get<std::vector<std::string>>();
        for (const auto& jt : ev.at("tasks")) {
            auto t = AnnotationTask::from_json(jt);
            run.task_ids.push_back(t.id);
            if (t.status == TaskStatus::pending) ++run.pending;
            tasks_[t.id] = std::move(t);
        }
    } else if (kind == "label") {
        auto& t = tasks_.at(ev.at("task_id").get<std::string>());
        if (t.status == TaskStatus::pending) --runs_.at(run_id).pending;
        t.status = TaskStatus::labeled;
        t.label = ev.at("label").get<std::string>();
        if (ev.contains("note") && !ev.at("note").is_null())
            t.note = ev.at("note").get<std::string>();
        else
            t.note.reset();
        t.updated_at = ev.value("at", std::string{});
    } else if (kind == "status") {
        Run& run = runs_.at(run_id);
        run.status = run_status_from_string(ev.at("status").get<std::string>());
        if (ev.contains("metrics")) run.metrics = ev.at("metrics");
        run.error = ev.value("error", std::string{});
    } else if (!replaying) {
        throw ContractError("unknown journal event '" + kind + "'");
    }
}

std::vector<std::string> AnnotationStore::recover() {
    std::vector<std::string> needs_resume;
    if (journal_dir_.empty() || !fs::exists(journal_dir_)) return needs_resume;
    std::lock_guard lk(mu_);
    // The journal is authoritative; drop in-memory state so replay cannot double count.
    runs_.clear();
    tasks_.clear();
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(journal_dir_))
        if (e.is_directory() && fs::exists(e.path() / "journal.jsonl")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
        std::ifstream in(d / "journal.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json ev;
            try {
                ev = json::parse(line);
            } catch (const json::exception&) {
                break;  // torn final line from a crash
            }
            apply(ev, true);
        }
        const auto run_id = d.filename().string();
        auto it = runs_.find(run_id);
        if (it == runs_.end()) continue;
        auto& run = it->second;
        const bool all_labeled = !run.task_ids.empty() && run.pending == 0;
        if (all_labeled && (run.status == RunStatus::awaiting_labels || run.status == RunStatus::resuming)) {
            run.status = RunStatus::resuming;
            needs_resume.push_back(run_id);
        }
    }
    return needs_resume;
}

std::size_t AnnotationStore::enqueue(const std::string& run_id, const std::vector<std::string>& classes,
                                     const std::vector<AnnotationTask>& tasks) {
    std::lock_guard lk(mu_);
    auto it = runs_.find(run_id);
    if (it != runs_.end() && !it->second.task_ids.empty()) return it->second.task_ids.size();
    json jt = json::array();
    for (const auto& t : tasks) {
        require(t.run_id == run_id, "enqueue: task belongs to another run");
        require(t.status == TaskStatus::pending, "enqueue: tasks must be pending");
        jt.push_back(t.to_json());
    }
    const json ev = {{"event", "enqueue"}, {"run_id", run_id}, {"classes", classes}, {"tasks", jt}, {"at", utc_timestamp()}};
    append(run_id, ev);
    apply(ev, false);
    return tasks.size();
}

AnnotationTask AnnotationStore::submit_label(const std::string& id, const std::string& label,
                                             const std::optional<std::string>& note) {
    ResumeCallback cb;
    std::map<std::size_t, int> labels;
    std::string resumed_run;
    AnnotationTask updated;
    {
        std::lock_guard lk(mu_);
        auto it = tasks_.find(id);
        if (it == tasks_.end()) throw NotFoundError("unknown task '" + id + "'");
        const auto& run_id = it->second.run_id;
        Run& run = runs_.at(run_id);
        if (std::find(run.classes.begin(), run.classes.end(), label) == run.classes.end())
            throw ValidationError("label '" + label + "' is not in the class vocabulary");
        if (it->second.status == TaskStatus::labeled) {
            if (!allow_relabel_) throw ConflictError("task '" + id + "' is already labeled");
            if (run.status != RunStatus::awaiting_labels)
                throw ConflictError("run '" + run_id + "' is " + to_string(run.status));
        }
        json ev = {{"event", "label"}, {"run_id", run_id}, {"task_id", id}, {"label", label}, {"at", utc_timestamp()}};
        ev["note"] = note ? json(*note) : json(nullptr);
        append(run_id, ev);
        apply(ev, false);
        updated = it->second;
        if (run.pending == 0 && run.status == RunStatus::awaiting_labels) {
            const json st = {{"event", "status"}, {"run_id", run_id}, {"status", "resuming"}, {"at", utc_timestamp()}};
            append(run_id, st);
            apply(st, false);
            cb = resume_;
            labels = labels_locked(run_id);
            resumed_run = run_id;
        }
    }
    if (cb) cb(resumed_run, std::move(labels));
    return updated;
}

AnnotationTask AnnotationStore::task(const std::string& id) const {
    std::lock_guard lk(mu_);
    auto it = tasks_.find(id);
    if (it == tasks_.end()) throw NotFoundError("unknown task '" + id + "'");
    return it->second;
}

TaskPage AnnotationStore::tasks(const std::string& run_id, const std::string& status, std::size_t offset,
                                std::size_t limit) const {
    if (status != "pending" && status != "labeled" && status != "all")
        throw ValidationError("status must be pending, labeled or all");
    std::lock_guard lk(mu_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw NotFoundError("unknown run '" + run_id + "'");
    std::vector<const AnnotationTask*> sel;
    for (const auto& id : it->second.task_ids) {
        const auto& t = tasks_.at(id);
        if (status == "all" || to_string(t.status) == status) sel.push_back(&t);
    }
    std::sort(sel.begin(), sel.end(), [](const AnnotationTask* a, const AnnotationTask* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->sample_index < b->sample_index;
    });
    TaskPage page;
    page.total = sel.size();
    page.offset = offset;
    page.limit = limit;
    for (std::size_t i = offset; i < sel.size() && i < offset + limit; ++i) page.tasks.push_back(*sel[i]);
    return page;
}

RunSummary AnnotationStore::summary(const std::string& run_id) const {
    std::lock_guard lk(mu_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw NotFoundError("unknown run '" + run_id + "'");
    const auto& run = it->second;
    RunSummary s;
    s.run_id = run_id;
    s.status = run.status;
    s.enqueued = run.task_ids.size();
    s.pending = run.pending;
    s.labeled = s.enqueued - s.pending;
    s.classes = run.classes;
    s.error = run.error;
    return s;
}

std::optional<json> AnnotationStore::metrics(const std::string& run_id) const {
    std::lock_guard lk(mu_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw NotFoundError("unknown run '" + run_id + "'");
    return it->second.metrics;
}

bool AnnotationStore::has_run(const std::string& run_id) const {
    std::lock_guard lk(mu_);
    return runs_.count(run_id) > 0;
}

void AnnotationStore::mark_completed(const std::string& run_id, const json& metrics) {
    std::lock_guard lk(mu_);
    const json ev = {{"event", "status"}, {"run_id", run_id}, {"status", "completed"}, {"metrics", metrics},
                     {"at", utc_timestamp()}};
    append(run_id, ev);
    apply(ev, false);
}

void AnnotationStore::mark_failed(const std::string& run_id, const std::string& error) {
    std::lock_guard lk(mu_);
    const json ev = {{"event", "status"}, {"run_id", run_id}, {"status", "failed"}, {"error", error},
                     {"at", utc_timestamp()}};
    append(run_id, ev);
    apply(ev, false);
}

std::map<std::size_t, int> AnnotationStore::labels_locked(const std::string& run_id) const {
    const auto& run = runs_.at(run_id);
    std::map<std::size_t, int> out;
    for (const auto& id : run.task_ids) {
        const auto& t = tasks_.at(id);
        if (!t.label) continue;
        const auto pos = std::find(run.classes.begin(), run.classes.end(), *t.label) - run.classes.begin();
        out[t.sample_index] = static_cast<int>(pos);
    }
    return out;
}

std::map<std::size_t, int> AnnotationStore::labels(const std::string& run_id) const {
    std::lock_guard lk(mu_);
    if (!runs_.count(run_id)) throw NotFoundError("unknown run '" + run_id + "'");
    return labels_locked(run_id);
}

}  // namespace flowadapt
