#include "flowadapt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

#include <httplib.h>

#include "flowadapt/annotation.hpp"
#include "flowadapt/error.hpp"
#include "flowadapt/rng.hpp"

namespace flowadapt {

namespace fs = std::filesystem;
using nlohmann::json;

SimulatedOracle::SimulatedOracle(const Dataset& pool) {
    if (pool.is_labeled()) {
        truth_ = pool.labels();
        has_truth_ = true;
    } else if (pool.has_hidden_truth()) {
        truth_ = pool.hidden_truth_;
        has_truth_ = true;
    }
}

std::vector<int> SimulatedOracle::reveal(std::span<const std::size_t> indices) {
    if (indices.empty()) return {};
    if (!has_truth_) throw ContractError("oracle: pool has no hidden truth");
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        if (i >= truth_.size()) throw ContractError("oracle: index " + std::to_string(i) + " has no hidden truth");
        out.push_back(truth_[i]);
    }
    reveals_ += out.size();
    return out;
}

std::vector<int> GroundTruth::labels(const Dataset& data) {
    if (data.is_labeled()) return data.labels();
    if (!data.has_hidden_truth()) throw ContractError("ground truth: dataset has no hidden truth");
    return data.hidden_truth_;
}

Dataset GroundTruth::reveal(const Dataset& data) {
    if (data.is_labeled()) return data;
    const auto y = labels(data);
    return data.with_labels(y);
}

bool degradation_check(const MetricsReport& pre_metrics, double threshold) {
    return pre_metrics.macro_f1 < threshold;
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::netguard: return "netguard";
        case Strategy::uncertainty: return "uncertainty";
        case Strategy::coreset: return "coreset";
        case Strategy::clue: return "clue";
        case Strategy::none: return "none";
        case Strategy::full: return "full";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    for (auto st : {Strategy::netguard, Strategy::uncertainty, Strategy::coreset, Strategy::clue, Strategy::none,
                    Strategy::full})
        if (to_string(st) == s) return st;
    throw ContractError("unknown strategy '" + s + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path.lexically_normal();
}

}  // namespace

json DataSource::to_json() const {
    json j = json::object();
    if (drift) j["drift_spec"] = drift->to_json();
    if (!schema.empty()) j["schema"] = schema.string();
    if (!source_csv.empty()) j["source"] = source_csv.string();
    if (!target_csv.empty()) j["target"] = target_csv.string();
    if (max_rows > 0) j["max_rows"] = max_rows;
    return j;
}

DataSource DataSource::from_json(const json& j, const fs::path& base) {
    DataSource d;
    if (j.contains("drift_spec")) {
        const auto& s = j.at("drift_spec");
        d.drift = s.is_string() ? load_drift_spec(resolve(base, s.get<std::string>())) : DriftSpec::from_json(s);
    }
    d.schema = resolve(base, j.value("schema", std::string{}));
    d.source_csv = resolve(base, j.value("source", std::string{}));
    d.target_csv = resolve(base, j.value("target", std::string{}));
    d.max_rows = j.value("max_rows", std::size_t{0});
    if (!d.drift && (d.schema.empty() || d.source_csv.empty() || d.target_csv.empty()))
        throw ContractError("data source needs a drift_spec or schema, source and target paths");
    return d;
}

void RunConfig::validate() const {
    const bool needs_budget = strategy != Strategy::none && strategy != Strategy::full;
    if (needs_budget && !budget) throw ContractError("strategy " + to_string(strategy) + " requires a budget");
    if (budget) require(*budget > 0.0 && *budget <= 1.0, "budget must lie in (0, 1]");
    require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction must lie in (0, 1)");
    require(degradation_factor >= 0.0, "degradation_factor must be non-negative");
    if (oracle == OracleMode::service) {
        require(!journal_dir.empty(), "service oracle mode requires a journal directory");
        require(strategy != Strategy::full, "strategy full needs the simulated oracle");
    }
    if (data.drift) data.drift->validate();
}

json RunConfig::to_json() const {
    json j = {{"run_id", run_id},
              {"data", data.to_json()},
              {"strategy", to_string(strategy)},
              {"gmm", gmm.to_json()},
              {"classifier", classifier.to_json()},
              {"augmentation", augmentation.to_json()},
              {"oracle", oracle == OracleMode::simulated ? "simulated" : "service"},
              {"seed", seed},
              {"out_dir", out_dir.string()},
              {"train_fraction", train_fraction},
              {"probe_size", probe_size},
              {"degradation_factor", degradation_factor},
              {"require_degradation", require_degradation},
              {"service_url", service_url},
              {"journal_dir", journal_dir.string()}};
    j["budget"] = budget ? json(*budget) : json(nullptr);
    return j;
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
    RunConfig c;
    c.run_id = j.value("run_id", c.run_id);
    c.data = DataSource::from_json(j.at("data"), base);
    c.strategy = strategy_from_string(j.value("strategy", std::string{"netguard"}));
    if (j.contains("budget") && !j.at("budget").is_null()) c.budget = j.at("budget").get<double>();
    if (j.contains("gmm")) c.gmm = GmmConfig::from_json(j.at("gmm"));
    if (j.contains("classifier")) c.classifier = MlpConfig::from_json(j.at("classifier"));
    if (j.contains("augmentation")) c.augmentation = AugmentationConfig::from_json(j.at("augmentation"));
    const auto oracle = j.value("oracle", std::string{"simulated"});
    if (oracle == "simulated")
        c.oracle = OracleMode::simulated;
    else if (oracle == "service")
        c.oracle = OracleMode::service;
    else
        throw ContractError("unknown oracle mode '" + oracle + "'");
    c.seed = j.value("seed", c.seed);
    c.out_dir = resolve(base, j.value("out_dir", std::string{}));
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.probe_size = j.value("probe_size", c.probe_size);
    c.degradation_factor = j.value("degradation_factor", c.degradation_factor);
    c.require_degradation = j.value("require_degradation", c.require_degradation);
    c.service_url = j.value("service_url", std::string{});
    c.journal_dir = resolve(base, j.value("journal_dir", std::string{}));
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open run config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("run config " + path.string() + ": " + e.what());
    }
    return RunConfig::from_json(j, path.parent_path());
}

json ProbeReport::to_json() const {
    return {{"size", size},
            {"source_validation_f1", source_validation_f1},
            {"probe_f1", probe_f1},
            {"threshold", threshold},
            {"degraded", degraded}};
}

fs::path run_directory(const fs::path& journal_dir, const std::string& run_id) {
    require(!run_id.empty() && run_id.find('/') == std::string::npos && run_id != "." && run_id != "..",
            "invalid run id '" + run_id + "'");
    return journal_dir / run_id;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

class StageTimer {
public:
    StageTimer(std::map<std::string, double>& sink, std::string name)
        : sink_(sink), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        sink_[name_] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::map<std::string, double>& sink_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

struct Domains {
    Dataset source;
    Dataset target;
};

Domains load_domains(const DataSource& ds, std::uint64_t seed) {
    Domains d = [&] {
        if (ds.drift) {
            auto b = generate_drift_benchmark(*ds.drift);
            return Domains{std::move(b.source), std::move(b.target)};
        }
        const auto schema = load_schema(ds.schema);
        return Domains{load_csv(ds.source_csv, schema, LabelMode::labeled).data,
                       load_csv(ds.target_csv, schema, LabelMode::hidden_truth).data};
    }();
    if (ds.max_rows > 0) {
        d.source = stratified_subsample(d.source, ds.max_rows, derive_seed(seed, "subsample-source"));
        d.target = stratified_subsample(d.target, ds.max_rows, derive_seed(seed, "subsample-target"));
    }
    return d;
}

MetricsReport evaluate(const ClassifierModel& model, const Dataset& data) {
    const auto truth = GroundTruth::labels(data);
    const auto pred = predict(model, data);
    return classification_report(truth, pred, data.schema().classes(), data.schema().benign_index());
}

MlpConfig stage_mlp(const RunConfig& c, std::string_view stage) {
    MlpConfig m = c.classifier;
    m.seed = derive_seed(c.seed, stage);
    return m;
}

std::vector<std::size_t> complement(std::size_t n, std::vector<std::size_t> taken) {
    std::sort(taken.begin(), taken.end());
    std::vector<std::size_t> out;
    out.reserve(n - taken.size());
    for (std::size_t i = 0, k = 0; i < n; ++i) {
        if (k < taken.size() && taken[k] == i) {
            ++k;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> per_class(std::span<const int> labels, std::size_t classes) {
    std::vector<std::size_t> out(classes, 0);
    for (int y : labels) ++out[static_cast<std::size_t>(y)];
    return out;
}

}  // namespace

PreparedRun prepare(const RunConfig& config) {
    config.validate();
    const auto seed = config.seed;
    std::map<std::string, double> timings;

    const auto load_start = std::chrono::steady_clock::now();
    Domains d = load_domains(config.data, seed);
    timings["load"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - load_start).count();

    const auto norm_start = std::chrono::steady_clock::now();
    auto sp = split(d.source, config.train_fraction, derive_seed(seed, "split-source"));
    const Dataset others[] = {sp.test, d.target};
    auto nz = normalize(sp.train, others);
    PreparedRun p{config,          d.source.schema_ptr(), nz.stats, std::move(nz.train), std::move(nz.others[0]),
                  std::move(nz.others[1]), {}, {}, true, {}, std::move(timings)};
    p.timings["normalize"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - norm_start).count();

    if (p.pool.empty()) throw EmptyDatasetError("target domain is empty");
    {
        StageTimer t(p.timings, "train_pre");
        p.pre_model = train_mlp(p.labeled, stage_mlp(config, "mlp-pre"));
    }

    const bool has_truth = p.pool.is_labeled() || p.pool.has_hidden_truth();
    {
        StageTimer t(p.timings, "probe");
        const Dataset& val = p.source_validation.empty() ? p.labeled : p.source_validation;
        p.probe.source_validation_f1 = evaluate(p.pre_model, val).macro_f1;
        p.probe.threshold = config.degradation_factor * p.probe.source_validation_f1;
        const std::size_t m = std::min(config.probe_size, p.pool.size());
        if (has_truth && m > 0) {
            std::vector<std::size_t> idx(p.pool.size());
            std::iota(idx.begin(), idx.end(), 0);
            Rng rng(derive_seed(seed, "probe"));
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(m);
            std::sort(idx.begin(), idx.end());
            // A separate oracle so probe reveals never count against the budget.
            SimulatedOracle probe_oracle(p.pool);
            const auto y = probe_oracle.reveal(idx);
            const auto pred = predict(p.pre_model, p.pool.subset(idx));
            const auto rep = classification_report(y, pred, p.schema->classes(), p.schema->benign_index());
            p.probe.size = m;
            p.probe.probe_f1 = rep.macro_f1;
            p.probe.degraded = degradation_check(rep, p.probe.threshold);
        } else {
            p.probe.degraded = true;  // nothing to measure; assume drift
        }
    }

    p.adapt = config.strategy != Strategy::none && (!config.require_degradation || p.probe.degraded ||
                                                     config.strategy == Strategy::full);
    p.selection.strategy = to_string(config.strategy);
    if (!p.adapt || config.strategy == Strategy::full) return p;

    StageTimer t(p.timings, "select");
    const std::size_t budget = budget_from_fraction(*config.budget, p.pool.size());
    const auto tie_seed = derive_seed(seed, "tie-break");
    const auto sel_seed = derive_seed(seed, "selection");
    switch (config.strategy) {
        case Strategy::netguard: {
            GmmConfig g = config.gmm;
            g.seed = derive_seed(seed, "gmm");
            p.selection = density_prior_selection(continuous_matrix(p.labeled), continuous_matrix(p.pool), g,
                                                  *config.budget, tie_seed)
                              .report;
            break;
        }
        case Strategy::uncertainty: {
            const auto x = FeatureEncoder(*p.schema).encode(p.pool);
            p.selection = select_top(uncertainty_scores(p.pre_model, x), budget, tie_seed, "uncertainty");
            break;
        }
        case Strategy::coreset:
            p.selection = coreset_select(FeatureEncoder(*p.schema).encode(p.pool), budget, sel_seed);
            break;
        case Strategy::clue:
            p.selection = clue_select(p.pre_model, FeatureEncoder(*p.schema).encode(p.pool), budget, sel_seed);
            break;
        default:
            break;
    }
    return p;
}

RunResult complete(const PreparedRun& p, std::span<const int> prior_labels) {
    const auto& cfg = p.config;
    const auto& selected = p.selection.selected;
    require(prior_labels.size() == selected.size(), "complete: one label per selected sample required");
    const std::size_t C = p.schema->num_classes();
    for (int y : prior_labels)
        if (y < 0 || static_cast<std::size_t>(y) >= C) throw ValidationError("complete: label outside vocabulary");

    RunResult r;
    r.run_id = cfg.run_id;
    r.strategy = to_string(cfg.strategy);
    r.selection = p.selection;
    r.probe = p.probe;
    r.pre_model = p.pre_model;
    r.timings = p.timings;
    r.labeled_before = p.labeled.size();
    r.unlabeled_before = p.pool.size();
    const bool has_truth = p.pool.is_labeled() || p.pool.has_hidden_truth();

    if (has_truth) {
        StageTimer t(r.timings, "drift");
        r.drift = class_drift(p.labeled, GroundTruth::reveal(p.pool));
    }

    if (!p.adapt) {
        r.post_model = p.pre_model;
        r.labeled_after = r.labeled_before;
        r.unlabeled_after = r.unlabeled_before;
        r.training_size = p.labeled.size();
        r.evaluation_indices.resize(p.pool.size());
        std::iota(r.evaluation_indices.begin(), r.evaluation_indices.end(), 0);
        if (has_truth) {
            StageTimer t(r.timings, "evaluate");
            r.pre = evaluate(p.pre_model, p.pool);
            r.post = r.pre;
        }
        return r;
    }

    const Dataset priors = p.pool.subset(selected).with_labels(prior_labels);
    r.selection.per_class_selected = per_class(prior_labels, C);
    const Dataset parts[] = {p.labeled, priors};
    const Dataset updated = Dataset::concat(parts, Provenance::real);
    r.labeled_after = updated.size();

    Dataset synthetic(p.schema, Provenance::augmented);
    if (cfg.augmentation.enabled) {
        StageTimer t(r.timings, "augment");
        AugmentationConfig ac = cfg.augmentation;
        ac.generator.seed = derive_seed(cfg.seed, "generator");
        ac.filter.seed = derive_seed(cfg.seed, "filter");
        auto out = augment_minorities(updated, p.labeled, ac);
        synthetic = std::move(out.retained);
        r.augmentation = std::move(out.report);
        r.synthetic = synthetic;
    }
    r.synthetic_retained = synthetic.size();

    {
        StageTimer t(r.timings, "train_post");
        const Dataset train = assemble_training_set(p.labeled, priors, synthetic);
        r.training_size = train.size();
        r.post_model = train_mlp(train, stage_mlp(cfg, "mlp-post"));
    }

    r.evaluation_indices = complement(p.pool.size(), selected);
    r.unlabeled_after = r.evaluation_indices.size();
    if (has_truth) {
        StageTimer t(r.timings, "evaluate");
        if (r.evaluation_indices.empty()) {
            r.pre = evaluate(p.pre_model, p.pool);
        } else {
            const Dataset eval = p.pool.subset(r.evaluation_indices);
            r.pre = evaluate(p.pre_model, eval);
            r.post = evaluate(*r.post_model, eval);
        }
    }
    return r;
}

namespace {

RunResult run_full(const PreparedRun& p) {
    const auto& cfg = p.config;
    RunResult r;
    r.run_id = cfg.run_id;
    r.strategy = "full";
    r.probe = p.probe;
    r.pre_model = p.pre_model;
    r.timings = p.timings;
    r.labeled_before = p.labeled.size();
    r.unlabeled_before = p.pool.size();
    r.drift = class_drift(p.labeled, GroundTruth::reveal(p.pool));

    const auto sp = split(p.pool, cfg.train_fraction, derive_seed(cfg.seed, "split-target"));
    SimulatedOracle oracle(p.pool);
    const auto y = oracle.reveal(sp.train_indices);
    r.oracle_reveals = oracle.reveals();
    const Dataset train = p.pool.subset(sp.train_indices).with_labels(y);
    r.selection.strategy = "full";
    r.selection.selected = sp.train_indices;
    r.selection.budget = sp.train_indices.size();
    r.selection.per_class_selected = per_class(y, p.schema->num_classes());
    r.labeled_after = train.size();
    r.training_size = train.size();
    {
        StageTimer t(r.timings, "train_post");
        r.post_model = train_mlp(train, stage_mlp(cfg, "mlp-post"));
    }
    r.evaluation_indices = sp.test_indices;
    r.unlabeled_after = sp.test_indices.size();
    if (!sp.test_indices.empty()) {
        const Dataset eval = p.pool.subset(sp.test_indices);
        r.pre = evaluate(p.pre_model, eval);
        r.post = evaluate(*r.post_model, eval);
    }
    return r;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

/// Writes the parked state and asks the service to enqueue it. An
/// unreachable service leaves the run parked.
bool park(const PreparedRun& p) {
    const auto& cfg = p.config;
    const auto dir = run_directory(cfg.journal_dir, cfg.run_id);
    fs::create_directories(dir);
    json tasks = json::array();
    for (const auto& t : make_tasks(cfg.run_id, p.selection, p.pool, p.pre_model)) tasks.push_back(t.to_json());
    write_json(dir / "parked.json", {{"run_id", cfg.run_id},
                                     {"config", cfg.to_json()},
                                     {"selection", p.selection.to_json()},
                                     {"classes", p.schema->classes()},
                                     {"tasks", tasks}});
    if (cfg.service_url.empty()) return false;
    httplib::Client client(cfg.service_url);
    client.set_connection_timeout(2);
    auto res = client.Post("/runs/" + cfg.run_id + "/enqueue", "{}", "application/json");
    return res && res->status == 200;
}

}  // namespace

RunResult run(const RunConfig& config) {
    PreparedRun p = prepare(config);
    if (config.strategy == Strategy::full) return run_full(p);
    if (config.oracle == OracleMode::service && p.adapt) {
        const bool enqueued = park(p);
        RunResult r;
        r.run_id = config.run_id;
        r.strategy = to_string(config.strategy);
        r.status = "awaiting_labels";
        r.selection = p.selection;
        r.probe = p.probe;
        r.pre_model = p.pre_model;
        r.timings = p.timings;
        r.labeled_before = p.labeled.size();
        r.unlabeled_before = p.pool.size();
        r.enqueued = enqueued;
        return r;
    }
    SimulatedOracle oracle(p.pool);
    const auto labels = oracle.reveal(p.selection.selected);
    RunResult r = complete(p, labels);
    r.oracle_reveals = oracle.reveals();
    return r;
}

RunResult resume(const fs::path& parked_file, const std::map<std::size_t, int>& labels) {
    const json parked = read_json(parked_file);
    const RunConfig cfg = RunConfig::from_json(parked.at("config"));
    const auto expected = SelectionReport::from_json(parked.at("selection"));
    PreparedRun p = prepare(cfg);
    if (p.selection.selected != expected.selected)
        throw ConflictError("resume: recomputed selection differs from the parked one");
    std::vector<int> y;
    y.reserve(expected.selected.size());
    for (auto i : expected.selected) {
        auto it = labels.find(i);
        if (it == labels.end()) throw ContractError("resume: no label for pool index " + std::to_string(i));
        y.push_back(it->second);
    }
    RunResult r = complete(p, y);
    r.oracle_reveals = y.size();
    return r;
}

// ---------------------------------------------------------------------------
// Artifacts

json RunResult::to_json(bool include_timings) const {
    json j = {{"run_id", run_id},
              {"strategy", strategy},
              {"status", status},
              {"enqueued", enqueued},
              {"selection", selection.to_json(0)},
              {"probe", probe.to_json()},
              {"oracle_reveals", oracle_reveals},
              {"labeled_before", labeled_before},
              {"labeled_after", labeled_after},
              {"unlabeled_before", unlabeled_before},
              {"unlabeled_after", unlabeled_after},
              {"synthetic_retained", synthetic_retained},
              {"training_size", training_size},
              {"evaluation_size", evaluation_indices.size()}};
    j["pre"] = pre ? pre->to_json() : json(nullptr);
    j["post"] = post ? post->to_json() : json(nullptr);
    j["augmentation"] = augmentation ? augmentation->to_json() : json(nullptr);
    j["drift"] = drift ? drift->to_json() : json(nullptr);
    if (include_timings) j["timings"] = timings;
    return j;
}

void write_artifacts(const RunConfig& config, const RunResult& result, const fs::path& dir) {
    fs::create_directories(dir);
    write_json(dir / "config.json", config.to_json());
    write_json(dir / "selection.json", result.selection.to_json());
    if (result.pre) write_json(dir / "metrics_pre.json", result.pre->to_json());
    if (result.post) write_json(dir / "metrics_post.json", result.post->to_json());
    if (result.drift) write_json(dir / "drift.json", result.drift->to_json());
    write_json(dir / "augmentation.json",
               result.augmentation ? result.augmentation->to_json() : json{{"enabled", false}});
    write_json(dir / "result.json", result.to_json());
    write_json(dir / "model_pre.json", result.pre_model.to_json());
    if (result.post_model) write_json(dir / "model_post.json", result.post_model->to_json());
    if (result.synthetic && !result.synthetic->empty()) write_csv(*result.synthetic, dir / "synthetic.csv");
}

}  // namespace flowadapt
