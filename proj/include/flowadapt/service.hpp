#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "flowadapt/annotation.hpp"

namespace flowadapt {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 binds any free port
    std::filesystem::path journal_dir = "journal";
    bool allow_relabel = false;
    std::filesystem::path static_dir;  // optional console assets
    std::size_t page_limit = 50;

    /// FLOWADAPT_BIND ("host:port") and FLOWADAPT_JOURNAL_DIR override the
    /// defaults.
    static ServiceConfig from_env();
};

/// HTTP front end over an AnnotationStore. Parked runs are read from
/// <journal dir>/<run id>/parked.json; once a run's queue is fully labeled it
/// is resumed on a worker thread and its artifacts are written.
///
///   GET  /runs/{id}/tasks?status=pending&offset=0&limit=50
///   GET  /tasks/{id}
///   POST /tasks/{id}/label      {"label": "...", "note": "..."}
///   GET  /runs/{id}/status
///   GET  /runs/{id}/metrics
///   POST /runs/{id}/enqueue
class AnnotationService {
public:
    explicit AnnotationService(ServiceConfig config);
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    /// Replays journals, resumes interrupted runs and binds the socket.
    /// Returns the bound port.
    int bind();
    /// Serves until stop(); bind() must have succeeded.
    void serve();
    void stop();

    /// Blocks until every resume worker started so far has finished.
    void wait_for_resumes();

    /// Enqueues the parked run's tasks. Throws NotFoundError when the run
    /// was never parked.
    std::size_t enqueue_parked(const std::string& run_id);

    AnnotationStore& store();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace flowadapt
