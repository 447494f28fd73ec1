#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowadapt/augmentation.hpp"
#include "flowadapt/classifier.hpp"
#include "flowadapt/dataset.hpp"
#include "flowadapt/error.hpp"
#include "flowadapt/metrics.hpp"
#include "flowadapt/pipeline.hpp"
#include "flowadapt/report.hpp"
#include "flowadapt/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowadapt;

namespace {

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    return json::parse(in);
}

void print_metrics(const std::string& name, const MetricsReport& m) {
    std::printf("%-5s macro F1 %.4f  accuracy %.4f  FNR %.4f  FPR %.4f  (n=%zu)\n", name.c_str(), m.macro_f1,
                m.accuracy, m.fnr, m.fpr, m.n);
}

AnnotationService* g_service = nullptr;

void on_signal(int) {
    if (g_service != nullptr) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drift adaptation for flow-based intrusion detection"};
    app.require_subcommand(1);

    // generate-benchmark
    auto* gen = app.add_subcommand("generate-benchmark", "Write source/target CSVs and the schema for a drift spec");
    std::string gen_spec;
    std::string gen_out;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("spec", gen_spec, "Drift spec JSON")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Override the spec seed");

    // train
    auto* train = app.add_subcommand("train", "Train the MLP on a labeled CSV");
    std::string tr_schema, tr_data, tr_out, tr_config;
    std::uint64_t tr_seed = 0;
    train->add_option("--schema", tr_schema)->required()->check(CLI::ExistingFile);
    train->add_option("--data", tr_data)->required()->check(CLI::ExistingFile);
    train->add_option("--config", tr_config, "Classifier config JSON")->check(CLI::ExistingFile);
    train->add_option("--seed", tr_seed);
    train->add_option("--out", tr_out, "Model checkpoint path")->required();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a labeled CSV");
    std::string ev_schema, ev_data, ev_model, ev_out;
    eval->add_option("--schema", ev_schema)->required()->check(CLI::ExistingFile);
    eval->add_option("--data", ev_data)->required()->check(CLI::ExistingFile);
    eval->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
    eval->add_option("--out", ev_out, "Metrics JSON path");

    // shared run overrides
    std::string run_config, run_out, run_strategy;
    std::optional<double> run_budget;
    std::optional<std::uint64_t> run_seed;
    auto add_run_options = [&](CLI::App* sub) {
        sub->add_option("config", run_config, "Run config JSON")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", run_out, "Output directory");
        sub->add_option("--seed", run_seed, "Master seed");
        sub->add_option("--strategy", run_strategy, "netguard|uncertainty|coreset|clue|none|full");
        sub->add_option("--budget", run_budget, "Labeling budget as a fraction of the pool");
    };
    auto load_config = [&]() {
        RunConfig c = load_run_config(run_config);
        if (!run_out.empty()) c.out_dir = run_out;
        if (run_seed) c.seed = *run_seed;
        if (!run_strategy.empty()) c.strategy = strategy_from_string(run_strategy);
        if (run_budget) c.budget = *run_budget;
        if (c.out_dir.empty()) c.out_dir = "runs/" + c.run_id;
        c.validate();
        return c;
    };

    auto* select = app.add_subcommand("select", "Train the source model and select priors only");
    add_run_options(select);

    // augment
    auto* aug = app.add_subcommand("augment", "Synthesize minority-class records for a labeled CSV");
    std::string au_schema, au_data, au_original, au_out, au_config;
    std::uint64_t au_seed = 0;
    std::optional<double> au_ratio;
    aug->add_option("--schema", au_schema)->required()->check(CLI::ExistingFile);
    aug->add_option("--data", au_data, "Updated labeled set")->required()->check(CLI::ExistingFile);
    aug->add_option("--original", au_original, "Labeled set for the filter (defaults to --data)")
        ->check(CLI::ExistingFile);
    aug->add_option("--config", au_config, "Augmentation config JSON")->check(CLI::ExistingFile);
    aug->add_option("--ratio", au_ratio);
    aug->add_option("--seed", au_seed);
    aug->add_option("--out", au_out)->required();

    auto* runc = app.add_subcommand("run", "One closed-loop adaptation round");
    add_run_options(runc);

    // serve
    auto* serve = app.add_subcommand("serve", "Annotation service");
    ServiceConfig svc = ServiceConfig::from_env();
    std::string bind;
    std::string journal = svc.journal_dir.string();
    std::string static_dir;
    serve->add_option("--bind", bind, "host:port (env FLOWADAPT_BIND)");
    serve->add_option("--journal-dir", journal, "Journal directory (env FLOWADAPT_JOURNAL_DIR)");
    serve->add_flag("--allow-relabel", svc.allow_relabel, "Permit relabeling labeled tasks");
    serve->add_option("--static-dir", static_dir, "Console assets to serve at /");

    // report
    auto* rep = app.add_subcommand("report", "Render tables from run directories");
    std::vector<std::string> rep_dirs;
    std::string rep_out;
    rep->add_option("runs", rep_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
    rep->add_option("--out", rep_out, "Write the tables to a file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            DriftSpec spec = load_drift_spec(gen_spec);
            if (gen_seed) {
                spec.seed = *gen_seed;
                spec.target_seed.reset();
            }
            const auto b = generate_drift_benchmark(spec);
            fs::create_directories(gen_out);
            write_json(fs::path(gen_out) / "schema.json", spec.schema()->to_json());
            write_csv(b.source, fs::path(gen_out) / "source.csv");
            write_csv(b.target, fs::path(gen_out) / "target.csv", true);
            std::printf("source %zu rows, target %zu rows -> %s\n", b.source.size(), b.target.size(), gen_out.c_str());
        } else if (train->parsed()) {
            const auto schema = load_schema(tr_schema);
            const auto data = load_csv(tr_data, schema, LabelMode::labeled).data;
            MlpConfig cfg = tr_config.empty() ? MlpConfig{} : MlpConfig::from_json(read_json(tr_config));
            cfg.seed = tr_seed;
            const auto stats = fit_norm_stats(data);
            const auto model = train_mlp(stats.apply(data), cfg);
            write_json(tr_out, {{"model", model.to_json()}, {"norm", stats.to_json()}});
            std::printf("trained on %zu rows, final loss %.6f -> %s\n", data.size(),
                        model.loss_history.empty() ? 0.0 : model.loss_history.back(), tr_out.c_str());
        } else if (eval->parsed()) {
            const auto schema = load_schema(ev_schema);
            const auto data = load_csv(ev_data, schema, LabelMode::labeled).data;
            const json ck = read_json(ev_model);
            const auto model = ClassifierModel::from_json(ck.at("model"));
            const auto norm = NormStats::from_json(ck.at("norm"));
            const auto x = norm.apply(data);
            const auto m = classification_report(x.labels(), predict(model, x), schema->classes(),
                                                 schema->benign_index());
            print_metrics("eval", m);
            if (!ev_out.empty()) write_json(ev_out, m.to_json());
        } else if (select->parsed()) {
            const RunConfig cfg = load_config();
            const PreparedRun p = prepare(cfg);
            fs::create_directories(cfg.out_dir);
            write_json(cfg.out_dir / "config.json", cfg.to_json());
            write_json(cfg.out_dir / "selection.json", p.selection.to_json());
            write_json(cfg.out_dir / "probe.json", p.probe.to_json());
            std::printf("%s selected %zu of %zu -> %s\n", p.selection.strategy.c_str(), p.selection.selected.size(),
                        p.pool.size(), cfg.out_dir.c_str());
        } else if (aug->parsed()) {
            const auto schema = load_schema(au_schema);
            const auto data = load_csv(au_data, schema, LabelMode::labeled).data;
            const auto original =
                au_original.empty() ? data : load_csv(au_original, schema, LabelMode::labeled).data;
            AugmentationConfig cfg =
                au_config.empty() ? AugmentationConfig{} : AugmentationConfig::from_json(read_json(au_config));
            if (au_ratio) cfg.ratio = *au_ratio;
            cfg.generator.seed = au_seed;
            cfg.filter.seed = au_seed;
            const auto out = augment_minorities(data, original, cfg);
            fs::create_directories(au_out);
            write_json(fs::path(au_out) / "augmentation.json", out.report.to_json());
            write_json(fs::path(au_out) / "minorities.json", out.minorities.to_json());
            write_json(fs::path(au_out) / "generator.json", out.generator.to_json());
            if (!out.retained.empty()) write_csv(out.retained, fs::path(au_out) / "synthetic.csv");
            std::printf("%zu minority classes, %zu synthetic records retained -> %s\n", out.minorities.minority.size(),
                        out.retained.size(), au_out.c_str());
        } else if (runc->parsed()) {
            const RunConfig cfg = load_config();
            const RunResult r = run(cfg);
            write_artifacts(cfg, r, cfg.out_dir);
            if (r.status == "awaiting_labels") {
                std::printf("run %s parked awaiting %zu labels (%s)\n", r.run_id.c_str(), r.selection.selected.size(),
                            r.enqueued ? "enqueued" : "service not reached; enqueue later");
                return 0;
            }
            if (r.pre) print_metrics("pre", *r.pre);
            if (r.post) print_metrics("post", *r.post);
            std::printf("artifacts -> %s\n", cfg.out_dir.c_str());
        } else if (serve->parsed()) {
            if (!bind.empty()) {
                const auto colon = bind.rfind(':');
                if (colon == std::string::npos) throw ContractError("--bind must be host:port");
                svc.host = bind.substr(0, colon);
                svc.port = std::stoi(bind.substr(colon + 1));
            }
            svc.journal_dir = journal;
            svc.static_dir = static_dir;
            AnnotationService service(svc);
            const int port = service.bind();
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::printf("annotation service on %s:%d, journal %s\n", svc.host.c_str(), port, journal.c_str());
            std::fflush(stdout);
            service.serve();
            g_service = nullptr;
        } else if (rep->parsed()) {
            std::vector<RunArtifacts> runs;
            for (const auto& d : rep_dirs) runs.push_back(load_run_artifacts(d));
            std::string text = "Per-class drift and selection counts\n\n" + render_selection_table(runs) +
                               "\nAdaptation performance\n\n" + render_performance_table(runs) +
                               "\nPer-class F1 (%)\n\n" + render_class_table(runs);
            if (rep_out.empty())
                std::cout << text;
            else {
                std::ofstream(rep_out) << text;
                std::printf("report -> %s\n", rep_out.c_str());
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
