#include "flowadapt/service.hpp"

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include <httplib.h>

#include "flowadapt/error.hpp"
#include "flowadapt/pipeline.hpp"

namespace flowadapt {

namespace fs = std::filesystem;
using nlohmann::json;

ServiceConfig ServiceConfig::from_env() {
    ServiceConfig c;
    if (const char* b = std::getenv("FLOWADAPT_BIND"); b && *b) {
        const std::string s(b);
        const auto colon = s.rfind(':');
        if (colon == std::string::npos) throw ContractError("FLOWADAPT_BIND must be host:port");
        c.host = s.substr(0, colon);
        c.port = std::stoi(s.substr(colon + 1));
    }
    if (const char* d = std::getenv("FLOWADAPT_JOURNAL_DIR"); d && *d) c.journal_dir = d;
    return c;
}

struct AnnotationService::Impl {
    ServiceConfig config;
    AnnotationStore store;
    httplib::Server server;
    std::mutex workers_mu;
    std::vector<std::thread> workers;

    explicit Impl(ServiceConfig c) : config(std::move(c)), store(config.journal_dir, config.allow_relabel) {}

    void start_resume(const std::string& run_id, std::map<std::size_t, int> labels) {
        std::lock_guard lk(workers_mu);
        workers.emplace_back([this, run_id, labels = std::move(labels)] { resume_run(run_id, labels); });
    }

    void resume_run(const std::string& run_id, const std::map<std::size_t, int>& labels) {
        try {
            const auto dir = run_directory(config.journal_dir, run_id);
            const auto parked = dir / "parked.json";
            const RunResult r = resume(parked, labels);
            std::ifstream in(parked);
            const json pj = json::parse(in);
            const RunConfig cfg = RunConfig::from_json(pj.at("config"));
            const fs::path out = cfg.out_dir.empty() ? dir / "output" : cfg.out_dir;
            write_artifacts(cfg, r, out);
            json m = {{"pre", r.pre ? r.pre->to_json() : json(nullptr)},
                      {"post", r.post ? r.post->to_json() : json(nullptr)},
                      {"oracle_reveals", r.oracle_reveals},
                      {"synthetic_retained", r.synthetic_retained},
                      {"artifacts", out.string()}};
            store.mark_completed(run_id, m);
        } catch (const std::exception& e) {
            store.mark_failed(run_id, e.what());
        }
    }

    std::size_t enqueue_parked(const std::string& run_id) {
        const auto parked = run_directory(config.journal_dir, run_id) / "parked.json";
        std::ifstream in(parked);
        if (!in) throw NotFoundError("run '" + run_id + "' is not parked");
        const json pj = json::parse(in);
        std::vector<AnnotationTask> tasks;
        for (const auto& jt : pj.at("tasks")) tasks.push_back(AnnotationTask::from_json(jt));
        return store.enqueue(run_id, pj.at("classes").get<std::vector<std::string>>(), tasks);
    }
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const NotFoundError& e) {
        send_json(res, 404, {{"error", "not_found"}, {"message", e.what()}});
    } catch (const ConflictError& e) {
        send_json(res, 409, {{"error", "conflict"}, {"message", e.what()}});
    } catch (const ValidationError& e) {
        send_json(res, 422, {{"error", "validation"}, {"message", e.what()}});
    } catch (const json::exception& e) {
        send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    } catch (const ContractError& e) {
        send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    char* end = nullptr;
    const auto x = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0') throw ValidationError(std::string("query parameter '") + name + "' must be a non-negative integer");
    return static_cast<std::size_t>(x);
}

}  // namespace

AnnotationService::AnnotationService(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    Impl* im = impl_.get();
    im->store.on_resume([im](const std::string& run_id, std::map<std::size_t, int> labels) {
        im->start_resume(run_id, std::move(labels));
    });
    auto& s = im->server;

    s.Get(R"(/runs/([^/]+)/tasks)", [im](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string status = req.has_param("status") ? req.get_param_value("status") : "pending";
            const auto offset = size_param(req, "offset", 0);
            const auto limit = size_param(req, "limit", im->config.page_limit);
            const auto page = im->store.tasks(req.matches[1], status, offset, limit);
            json tasks = json::array();
            for (const auto& t : page.tasks) tasks.push_back(t.to_json());
            send_json(res, 200, {{"run_id", std::string(req.matches[1])},
                                 {"status", status},
                                 {"total", page.total},
                                 {"offset", page.offset},
                                 {"limit", page.limit},
                                 {"tasks", tasks}});
        });
    });
    s.Get(R"(/tasks/([^/]+))", [im](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, im->store.task(req.matches[1]).to_json()); });
    });
    s.Post(R"(/tasks/([^/]+)/label)", [im](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            if (!body.contains("label") || !body.at("label").is_string())
                throw ValidationError("body must carry a string 'label'");
            std::optional<std::string> note;
            if (body.contains("note") && !body.at("note").is_null()) note = body.at("note").get<std::string>();
            const auto t = im->store.submit_label(req.matches[1], body.at("label").get<std::string>(), note);
            send_json(res, 200, t.to_json());
        });
    });
    s.Get(R"(/runs/([^/]+)/status)", [im](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, im->store.summary(req.matches[1]).to_json()); });
    });
    s.Get(R"(/runs/([^/]+)/metrics)", [im](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string run_id = req.matches[1];
            const auto m = im->store.metrics(run_id);
            if (!m) {
                const auto st = im->store.summary(run_id);
                send_json(res, 409, {{"error", "not_ready"}, {"status", to_string(st.status)}});
                return;
            }
            send_json(res, 200, *m);
        });
    });
    s.Post(R"(/runs/([^/]+)/enqueue)", [im](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string run_id = req.matches[1];
            const auto n = im->enqueue_parked(run_id);
            send_json(res, 200, {{"run_id", run_id}, {"tasks", n}});
        });
    });

    if (!im->config.static_dir.empty()) s.set_mount_point("/", im->config.static_dir.string());
}

AnnotationService::~AnnotationService() {
    stop();
    wait_for_resumes();
}

int AnnotationService::bind() {
    for (const auto& run_id : impl_->store.recover()) impl_->start_resume(run_id, impl_->store.labels(run_id));
    auto& s = impl_->server;
    if (impl_->config.port == 0) {
        const int port = s.bind_to_any_port(impl_->config.host);
        if (port <= 0) throw Error("cannot bind " + impl_->config.host);
        impl_->config.port = port;
    } else if (!s.bind_to_port(impl_->config.host, impl_->config.port)) {
        throw Error("cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
    }
    return impl_->config.port;
}

void AnnotationService::serve() { impl_->server.listen_after_bind(); }

void AnnotationService::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

void AnnotationService::wait_for_resumes() {
    for (;;) {
        std::vector<std::thread> batch;
        {
            std::lock_guard lk(impl_->workers_mu);
            batch.swap(impl_->workers);
        }
        if (batch.empty()) return;
        for (auto& t : batch) t.join();
    }
}

std::size_t AnnotationService::enqueue_parked(const std::string& run_id) { return impl_->enqueue_parked(run_id); }

AnnotationStore& AnnotationService::store() { return impl_->store; }

}  // namespace flowadapt
