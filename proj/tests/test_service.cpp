#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

#include "fixtures.hpp"
#include "flowadapt/annotation.hpp"
#include "flowadapt/error.hpp"
#include "flowadapt/pipeline.hpp"
#include "flowadapt/service.hpp"

// After the Eigen headers: resolv.h defines a _res macro.
#include <httplib.h>

using namespace flowadapt;
using nlohmann::json;

namespace {

const std::vector<std::string> kClasses{"Benign", "DoS", "Bot"};

std::vector<AnnotationTask> make_fake_tasks(const std::string& run_id, std::size_t n) {
    std::vector<AnnotationTask> out;
    for (std::size_t i = 0; i < n; ++i) {
        AnnotationTask t;
        t.run_id = run_id;
        t.sample_index = i * 3;
        t.id = task_id(run_id, t.sample_index);
        t.score = static_cast<double>((i * 7) % 5);
        t.features = json::object({{"Bytes", double(i)}});
        t.values = {0.0, double(i), 1.0};
        t.predicted_label = "Benign";
        t.probabilities = {0.5, 0.3, 0.2};
        t.created_at = t.updated_at = utc_timestamp();
        out.push_back(std::move(t));
    }
    return out;
}

json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

// Runs serve() on a background thread and stops it on scope exit.
class Running {
public:
    explicit Running(AnnotationService& s) : service_(s) {
        port_ = s.bind();
        thread_ = std::thread([this] { service_.serve(); });
        httplib::Client probe("127.0.0.1", port_);
        for (int i = 0; i < 200; ++i) {
            if (probe.Get("/runs/none/status")) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    ~Running() {
        service_.stop();
        thread_.join();
    }
    int port() const { return port_; }

private:
    AnnotationService& service_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST(Store, EnqueueIsIdempotent) {
    fixtures::TempDir dir;
    AnnotationStore store(dir.path());
    EXPECT_EQ(store.enqueue("r", kClasses, make_fake_tasks("r", 4)), 4u);
    EXPECT_EQ(store.enqueue("r", kClasses, make_fake_tasks("r", 4)), 4u);
    const auto s = store.summary("r");
    EXPECT_EQ(s.enqueued, 4u);
    EXPECT_EQ(s.pending, 4u);
    EXPECT_EQ(s.labeled, 0u);
}

TEST(Store, QueueIsConservedAndOrderedByScore) {
    fixtures::TempDir dir;
    AnnotationStore store(dir.path());
    store.enqueue("r", kClasses, make_fake_tasks("r", 10));
    const auto page = store.tasks("r", "pending", 0, 100);
    ASSERT_EQ(page.total, 10u);
    for (std::size_t i = 1; i < page.tasks.size(); ++i) {
        const auto& a = page.tasks[i - 1];
        const auto& b = page.tasks[i];
        EXPECT_TRUE(a.score > b.score || (a.score == b.score && a.sample_index < b.sample_index));
    }
    for (std::size_t k = 0; k < 4; ++k) {
        store.submit_label(page.tasks[k].id, kClasses[k % 3], std::nullopt);
        const auto s = store.summary("r");
        EXPECT_EQ(s.pending + s.labeled, s.enqueued);
        EXPECT_EQ(s.labeled, k + 1);
    }
    EXPECT_EQ(store.tasks("r", "labeled", 0, 100).total, 4u);
    EXPECT_EQ(store.tasks("r", "all", 0, 100).total, 10u);
    const auto p2 = store.tasks("r", "all", 8, 5);
    EXPECT_EQ(p2.tasks.size(), 2u);
    EXPECT_THROW(store.tasks("r", "bogus", 0, 1), ValidationError);
}

TEST(Store, ErrorsAreTyped) {
    fixtures::TempDir dir;
    AnnotationStore store(dir.path());
    store.enqueue("r", kClasses, make_fake_tasks("r", 2));
    EXPECT_THROW(store.submit_label("r.999", "DoS", std::nullopt), NotFoundError);
    EXPECT_THROW(store.submit_label("r.0", "Worm", std::nullopt), ValidationError);
    store.submit_label("r.0", "DoS", std::string("looks like a flood"));
    EXPECT_THROW(store.submit_label("r.0", "Bot", std::nullopt), ConflictError);
    EXPECT_EQ(*store.task("r.0").label, "DoS");
    EXPECT_EQ(*store.task("r.0").note, "looks like a flood");
    EXPECT_THROW(store.summary("missing"), NotFoundError);
    EXPECT_THROW(store.task("missing.1"), NotFoundError);
}

TEST(Store, RelabelAllowedOnlyWhileAwaiting) {
    fixtures::TempDir dir;
    AnnotationStore store(dir.path(), true);
    store.enqueue("r", kClasses, make_fake_tasks("r", 2));
    store.submit_label("r.0", "DoS", std::nullopt);
    EXPECT_EQ(*store.submit_label("r.0", "Bot", std::nullopt).label, "Bot");
    store.submit_label("r.3", "Benign", std::nullopt);
    EXPECT_THROW(store.submit_label("r.0", "DoS", std::nullopt), ConflictError);
}

TEST(Store, RacingSubmittersExactlyOneWins) {
    for (int round = 0; round < 20; ++round) {
        fixtures::TempDir dir;
        AnnotationStore store(dir.path());
        store.enqueue("r", kClasses, make_fake_tasks("r", 3));
        std::atomic<int> ok{0};
        std::atomic<int> conflict{0};
        std::atomic<bool> go{false};
        auto worker = [&](const char* label) {
            while (!go.load()) std::this_thread::yield();
            try {
                store.submit_label("r.0", label, std::nullopt);
                ++ok;
            } catch (const ConflictError&) {
                ++conflict;
            }
        };
        std::thread a(worker, "DoS");
        std::thread b(worker, "Bot");
        go = true;
        a.join();
        b.join();
        EXPECT_EQ(ok.load(), 1);
        EXPECT_EQ(conflict.load(), 1);
        EXPECT_EQ(store.summary("r").labeled, 1u);
    }
}

TEST(Store, ResumeCallbackFiresOnceWhenQueueDrains) {
    fixtures::TempDir dir;
    AnnotationStore store(dir.path());
    int calls = 0;
    std::map<std::size_t, int> got;
    store.on_resume([&](const std::string& run_id, std::map<std::size_t, int> labels) {
        EXPECT_EQ(run_id, "r");
        ++calls;
        got = std::move(labels);
    });
    store.enqueue("r", kClasses, make_fake_tasks("r", 3));
    store.submit_label("r.0", "DoS", std::nullopt);
    store.submit_label("r.3", "Bot", std::nullopt);
    EXPECT_EQ(calls, 0);
    store.submit_label("r.6", "Benign", std::nullopt);
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(got, (std::map<std::size_t, int>{{0, 1}, {3, 2}, {6, 0}}));
    EXPECT_EQ(store.summary("r").status, RunStatus::resuming);
}

TEST(Store, JournalReplayRestoresState) {
    fixtures::TempDir dir;
    {
        AnnotationStore store(dir.path());
        store.enqueue("a", kClasses, make_fake_tasks("a", 3));
        store.enqueue("b", kClasses, make_fake_tasks("b", 2));
        store.submit_label("a.0", "DoS", std::string("n1"));
        store.submit_label("b.0", "Bot", std::nullopt);
        store.submit_label("b.3", "Benign", std::nullopt);
    }
    AnnotationStore again(dir.path());
    const auto pending_resume = again.recover();
    EXPECT_EQ(pending_resume, std::vector<std::string>{"b"});
    EXPECT_EQ(again.summary("a").labeled, 1u);
    EXPECT_EQ(*again.task("a.0").note, "n1");
    EXPECT_EQ(again.labels("b"), (std::map<std::size_t, int>{{0, 2}, {3, 0}}));

    again.mark_completed("b", {{"ok", true}});
    AnnotationStore third(dir.path());
    EXPECT_TRUE(third.recover().empty());
    EXPECT_EQ(third.summary("b").status, RunStatus::completed);
    EXPECT_EQ((*third.metrics("b"))["ok"], true);
}

TEST(Store, TornJournalTailIsIgnored) {
    fixtures::TempDir dir;
    {
        AnnotationStore store(dir.path());
        store.enqueue("a", kClasses, make_fake_tasks("a", 2));
        store.submit_label("a.0", "DoS", std::nullopt);
    }
    std::ofstream(dir.path() / "a" / "journal.jsonl", std::ios::app) << R"({"event":"label","run_id":"a","ta)";
    AnnotationStore again(dir.path());
    again.recover();
    EXPECT_EQ(again.summary("a").labeled, 1u);
    EXPECT_EQ(again.summary("a").pending, 1u);
}

TEST(Tasks, SnapshotRebuildsRecord) {
    const auto cfg = fixtures::tiny_run(Strategy::netguard, 0.05);
    const auto p = prepare(cfg);
    const auto tasks = make_tasks("tiny", p.selection, p.pool, p.pre_model);
    ASSERT_EQ(tasks.size(), p.selection.selected.size());
    for (const auto& t : tasks) {
        EXPECT_EQ(t.id, task_id("tiny", t.sample_index));
        EXPECT_EQ(t.status, TaskStatus::pending);
        EXPECT_EQ(record_from_snapshot(*p.schema, t.features).values, p.pool.record(t.sample_index).values);
        EXPECT_EQ(t.score, p.selection.scores[t.sample_index]);
        const auto back = AnnotationTask::from_json(json::parse(t.to_json().dump()));
        EXPECT_EQ(back.values, t.values);
        EXPECT_EQ(back.probabilities, t.probabilities);
    }
}

TEST(Http, StatusCodesAndErrorBodies) {
    fixtures::TempDir dir;
    ServiceConfig sc;
    sc.port = 0;
    sc.journal_dir = dir.path();
    AnnotationService service(sc);
    service.store().enqueue("r", kClasses, make_fake_tasks("r", 2));
    Running running(service);
    httplib::Client cli("127.0.0.1", running.port());

    auto res = cli.Get("/runs/r/tasks?limit=1");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto page = json::parse(res->body);
    EXPECT_EQ(page["total"], 2);
    EXPECT_EQ(page["tasks"].size(), 1u);

    EXPECT_EQ(cli.Get("/runs/nope/status")->status, 404);
    EXPECT_EQ(cli.Get("/tasks/r.999")->status, 404);
    EXPECT_EQ(cli.Get("/runs/r/tasks?offset=abc")->status, 422);
    EXPECT_EQ(cli.Post("/tasks/r.0/label", "not json", "application/json")->status, 400);
    EXPECT_EQ(cli.Post("/tasks/r.0/label", R"({"label": "Worm"})", "application/json")->status, 422);
    EXPECT_EQ(cli.Post("/tasks/r.0/label", R"({"note": "x"})", "application/json")->status, 422);
    EXPECT_EQ(cli.Post("/tasks/r.0/label", R"({"label": "DoS"})", "application/json")->status, 200);
    const auto dup = cli.Post("/tasks/r.0/label", R"({"label": "Bot"})", "application/json");
    EXPECT_EQ(dup->status, 409);
    EXPECT_EQ(json::parse(dup->body)["error"], "conflict");
    const auto m = cli.Get("/runs/r/metrics");
    EXPECT_EQ(m->status, 409);
    EXPECT_EQ(json::parse(m->body)["error"], "not_ready");
    EXPECT_EQ(cli.Post("/runs/unparked/enqueue", "", "application/json")->status, 404);
}

TEST(Http, EndToEndResumeMatchesSimulatedOracle) {
    fixtures::TempDir dir;
    ServiceConfig sc;
    sc.port = 0;
    sc.journal_dir = dir.path();
    AnnotationService service(sc);
    Running running(service);

    auto cfg = fixtures::tiny_run(Strategy::netguard, 0.05);
    cfg.oracle = OracleMode::service;
    cfg.journal_dir = dir.path();
    cfg.service_url = "http://127.0.0.1:" + std::to_string(running.port());
    const auto parked = run(cfg);
    ASSERT_EQ(parked.status, "awaiting_labels");
    ASSERT_TRUE(parked.enqueued);

    // Annotate with the hidden truth, in the order the service lists tasks.
    const auto prepared = prepare(fixtures::tiny_run(Strategy::netguard, 0.05));
    const auto truth = GroundTruth::labels(prepared.pool);
    httplib::Client cli("127.0.0.1", running.port());
    const auto listing = json::parse(cli.Get("/runs/tiny/tasks?limit=1000")->body);
    ASSERT_EQ(listing["total"].get<std::size_t>(), parked.selection.selected.size());
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& t : listing["tasks"]) {
        EXPECT_LE(t["score"].get<double>(), prev);
        prev = t["score"].get<double>();
        const auto idx = t["sample_index"].get<std::size_t>();
        const json body = {{"label", prepared.schema->class_name(truth[idx])}};
        const auto res = cli.Post("/tasks/" + t["id"].get<std::string>() + "/label", body.dump(), "application/json");
        ASSERT_EQ(res->status, 200) << res->body;
    }
    service.wait_for_resumes();

    const auto status = json::parse(cli.Get("/runs/tiny/status")->body);
    EXPECT_EQ(status["status"], "completed") << status.dump();
    const auto metrics = cli.Get("/runs/tiny/metrics");
    ASSERT_EQ(metrics->status, 200);
    const auto mj = json::parse(metrics->body);
    EXPECT_EQ(mj["oracle_reveals"], parked.selection.selected.size());

    const auto simulated = run(fixtures::tiny_run(Strategy::netguard, 0.05));
    const auto out = std::filesystem::path(mj["artifacts"].get<std::string>());
    ASSERT_TRUE(simulated.post_model.has_value());
    EXPECT_EQ(read_json(out / "model_post.json"), json::parse(simulated.post_model->to_json().dump()));
    EXPECT_EQ(read_json(out / "metrics_post.json"), json::parse(simulated.post->to_json().dump()));
}

TEST(Http, RestartResumesFullyLabeledRun) {
    fixtures::TempDir dir;
    auto cfg = fixtures::tiny_run(Strategy::netguard, 0.05);
    cfg.oracle = OracleMode::service;
    cfg.journal_dir = dir.path();
    cfg.service_url = "http://127.0.0.1:1";
    const auto parked = run(cfg);
    ASSERT_FALSE(parked.enqueued);

    const auto prepared = prepare(fixtures::tiny_run(Strategy::netguard, 0.05));
    const auto truth = GroundTruth::labels(prepared.pool);
    {
        // Label everything with no resume handler, as if the process died.
        ServiceConfig sc;
        sc.journal_dir = dir.path();
        sc.port = 0;
        AnnotationService first(sc);
        first.enqueue_parked("tiny");
        first.store().on_resume([](const std::string&, std::map<std::size_t, int>) {});
        for (auto idx : parked.selection.selected)
            first.store().submit_label(task_id("tiny", idx), prepared.schema->class_name(truth[idx]), std::nullopt);
    }
    ServiceConfig sc;
    sc.journal_dir = dir.path();
    sc.port = 0;
    AnnotationService second(sc);
    second.bind();
    second.wait_for_resumes();
    EXPECT_EQ(second.store().summary("tiny").status, RunStatus::completed);
}

TEST(Store, RecoverAfterLiveEnqueueDoesNotDuplicate) {
    fixtures::TempDir dir;
    AnnotationStore store(dir.path());
    store.enqueue("r", kClasses, make_fake_tasks("r", 2));
    store.submit_label("r.0", "DoS", std::nullopt);
    store.recover();
    const auto s = store.summary("r");
    EXPECT_EQ(s.enqueued, 2u);
    EXPECT_EQ(s.pending, 1u);
    EXPECT_EQ(s.labeled, 1u);
}
