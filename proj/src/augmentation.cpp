#include "flowadapt/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowadapt/error.hpp"
#include "flowadapt/metrics.hpp"
#include "flowadapt/rng.hpp"

namespace flowadapt {

using nlohmann::json;

bool MinorityReport::is_minority(int c) const {
    return std::find(minority.begin(), minority.end(), c) != minority.end();
}

json MinorityReport::to_json() const {
    json cls = json::array();
    for (std::size_t c = 0; c < classes.size(); ++c)
        cls.push_back({{"class", classes[c]},
                       {"count", counts[c]},
                       {"fraction", fractions[c]},
                       {"minority", is_minority(static_cast<int>(c))}});
    std::vector<std::string> names;
    for (int c : minority) names.push_back(classes[static_cast<std::size_t>(c)]);
    return {{"threshold", threshold}, {"classes", cls}, {"minority", names}};
}

MinorityReport identify_minorities(const Dataset& labeled, double threshold) {
    require(labeled.is_labeled(), "identify_minorities: dataset must be labeled");
    require(!labeled.empty(), "identify_minorities: dataset is empty");
    MinorityReport r;
    r.threshold = threshold;
    r.classes = labeled.schema().classes();
    r.counts = labeled.class_counts();
    const auto n = static_cast<double>(labeled.size());
    const int benign = labeled.schema().benign_index();
    for (std::size_t c = 0; c < r.counts.size(); ++c) {
        const double f = static_cast<double>(r.counts[c]) / n;
        r.fractions.push_back(f);
        if (r.counts[c] > 0 && static_cast<int>(c) != benign && f < threshold)
            r.minority.push_back(static_cast<int>(c));
    }
    return r;
}

json GeneratorConfig::to_json() const {
    return {{"components_per_class", components_per_class},
            {"seed", seed},
            {"max_iters", max_iters},
            {"tol", tol},
            {"variance_floor", variance_floor},
            {"jitter", jitter}};
}

GeneratorConfig GeneratorConfig::from_json(const json& j) {
    GeneratorConfig c;
    c.components_per_class = j.value("components_per_class", c.components_per_class);
    c.seed = j.value("seed", c.seed);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.tol = j.value("tol", c.tol);
    c.variance_floor = j.value("variance_floor", c.variance_floor);
    c.jitter = j.value("jitter", c.jitter);
    return c;
}

const ClassGenerator* GeneratorModel::find(int label) const {
    for (const auto& g : classes)
        if (g.label == label) return &g;
    return nullptr;
}

json GeneratorModel::to_json() const {
    json cls = json::array();
    for (const auto& g : classes) {
        json jg = {{"label", g.label},
                   {"class", schema->class_name(g.label)},
                   {"samples", g.samples},
                   {"fallback", g.fallback},
                   {"components_reduced", g.components_reduced}};
        if (g.fallback) {
            json ex = json::array();
            for (const auto& r : g.exemplars) ex.push_back(r.values);
            jg["exemplars"] = ex;
        } else {
            jg["mixture"] = g.mixture.to_json();
            jg["metadata"] = g.metadata;
        }
        cls.push_back(std::move(jg));
    }
    return {{"seed", seed}, {"jitter", jitter}, {"classes", cls}, {"warnings", warnings}};
}

GeneratorModel GeneratorModel::from_json(const json& j, SchemaPtr schema) {
    GeneratorModel m;
    m.schema = std::move(schema);
    m.seed = j.value("seed", std::uint64_t{0});
    m.jitter = j.value("jitter", 0.01);
    m.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& jg : j.at("classes")) {
        ClassGenerator g;
        g.label = jg.at("label").get<int>();
        g.samples = jg.value("samples", std::size_t{0});
        g.fallback = jg.value("fallback", false);
        g.components_reduced = jg.value("components_reduced", false);
        if (g.fallback) {
            for (const auto& v : jg.at("exemplars"))
                g.exemplars.push_back({v.get<std::vector<double>>(), g.label, Provenance::real});
        } else {
            g.mixture = GmmParams::from_json(jg.at("mixture"));
            g.metadata = jg.at("metadata").get<std::vector<std::vector<std::vector<double>>>>();
        }
        m.classes.push_back(std::move(g));
    }
    return m;
}

GeneratorModel fit_generator(const Dataset& minority_records, const GeneratorConfig& config) {
    require(minority_records.is_labeled(), "fit_generator: records must be labeled");
    const auto& schema = minority_records.schema();
    require(!schema.continuous_indices().empty(), "fit_generator: schema has no measurement features");
    require(config.components_per_class >= 1, "fit_generator: need at least one component");

    GeneratorModel model;
    model.schema = minority_records.schema_ptr();
    model.seed = config.seed;
    model.jitter = config.jitter;

    const auto counts = minority_records.class_counts();
    const auto& cat = schema.categorical_indices();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) continue;
        const int label = static_cast<int>(c);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < minority_records.size(); ++i)
            if (*minority_records.record(i).label == label) idx.push_back(i);
        const Dataset cls = minority_records.subset(idx);

        ClassGenerator g;
        g.label = label;
        g.samples = cls.size();
        if (cls.size() < 2) {
            g.fallback = true;
            g.exemplars = cls.records();
            model.warnings.push_back("class '" + schema.class_name(label) +
                                     "' has fewer than 2 samples; using jittered resampling");
            model.classes.push_back(std::move(g));
            continue;
        }

        GmmConfig gc;
        gc.components = std::min(config.components_per_class, cls.size());
        gc.max_iters = config.max_iters;
        gc.tol = config.tol;
        gc.variance_floor = config.variance_floor;
        gc.seed = derive_seed(config.seed, "class-" + std::to_string(label));
        if (gc.components < config.components_per_class) {
            g.components_reduced = true;
            model.warnings.push_back("class '" + schema.class_name(label) + "' reduced to " +
                                     std::to_string(gc.components) + " components");
        }
        const Eigen::MatrixXd x = continuous_matrix(cls);
        g.mixture = fit_gmm(x, gc);
        const Eigen::MatrixXd resp = responsibilities(g.mixture, x);

        const auto K = static_cast<std::size_t>(gc.components);
        g.metadata.assign(K, {});
        for (std::size_t j = 0; j < K; ++j) {
            for (auto f : cat) {
                const std::size_t states = schema.feature(f).vocabulary.size();
                std::vector<double> w(states, 0.0);
                std::vector<double> empirical(states, 0.0);
                for (std::size_t i = 0; i < cls.size(); ++i) {
                    const auto s = static_cast<std::size_t>(cls.record(i).values[f]);
                    w[s] += resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                    empirical[s] += 1.0;
                }
                double total = std::accumulate(w.begin(), w.end(), 0.0);
                if (!(total > 0.0)) {
                    w = empirical;
                    total = static_cast<double>(cls.size());
                }
                for (auto& v : w) v /= total;
                g.metadata[j].push_back(std::move(w));
            }
        }
        model.classes.push_back(std::move(g));
    }
    return model;
}

Dataset synthesize(const GeneratorModel& generator, int label, std::size_t count, std::uint64_t seed) {
    require(generator.schema != nullptr, "synthesize: generator has no schema");
    const ClassGenerator* g = generator.find(label);
    if (g == nullptr) throw ContractError("synthesize: class " + std::to_string(label) + " not in generator");
    const auto& schema = *generator.schema;
    const auto& cont = schema.continuous_indices();
    const auto& cat = schema.categorical_indices();

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<FlowRecord> out;
    out.reserve(count);

    if (g->fallback) {
        std::uniform_int_distribution<std::size_t> pick(0, g->exemplars.size() - 1);
        for (std::size_t k = 0; k < count; ++k) {
            FlowRecord r = g->exemplars[pick(rng)];
            for (auto f : cont) r.values[f] += generator.jitter * normal(rng);
            r.label = label;
            r.origin = Provenance::augmented;
            out.push_back(std::move(r));
        }
        return Dataset::labeled(generator.schema, std::move(out), Provenance::augmented);
    }

    const auto& mix = g->mixture;
    std::discrete_distribution<std::size_t> component(mix.weights.begin(), mix.weights.end());
    std::vector<std::vector<std::discrete_distribution<int>>> states(mix.components());
    for (std::size_t j = 0; j < mix.components(); ++j)
        for (const auto& p : g->metadata[j]) states[j].emplace_back(p.begin(), p.end());

    for (std::size_t k = 0; k < count; ++k) {
        FlowRecord r;
        r.values.assign(schema.size(), 0.0);
        const std::size_t j = component(rng);
        const auto jj = static_cast<Eigen::Index>(j);
        for (std::size_t m = 0; m < cont.size(); ++m) {
            const auto mm = static_cast<Eigen::Index>(m);
            r.values[cont[m]] = mix.means(jj, mm) + std::sqrt(mix.variances(jj, mm)) * normal(rng);
        }
        for (std::size_t m = 0; m < cat.size(); ++m) r.values[cat[m]] = states[j][m](rng);
        r.label = label;
        r.origin = Provenance::augmented;
        out.push_back(std::move(r));
    }
    return Dataset::labeled(generator.schema, std::move(out), Provenance::augmented);
}

FilterResult filter_synthetic(const Dataset& synthetic, const LogisticModel& filter, double threshold) {
    require(synthetic.is_labeled(), "filter_synthetic: synthetic batch must be labeled");
    const int benign = synthetic.schema().benign_index();
    const std::size_t C = synthetic.schema().num_classes();
    FilterResult res{Dataset(synthetic.schema_ptr(), Provenance::augmented), std::vector<std::size_t>(C, 0),
                     std::vector<std::size_t>(C, 0), threshold};
    if (synthetic.empty()) return res;
    for (const auto& r : synthetic.records())
        require(*r.label != benign, "filter_synthetic: synthetic batch contains benign records");

    const Eigen::VectorXd p = benign_probability(filter, synthetic);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < synthetic.size(); ++i) {
        const auto c = static_cast<std::size_t>(*synthetic.record(i).label);
        ++res.generated_per_class[c];
        if (p(static_cast<Eigen::Index>(i)) < threshold) {
            keep.push_back(i);
            ++res.retained_per_class[c];
        }
    }
    res.retained = synthetic.subset(keep);
    return res;
}

Dataset assemble_training_set(const Dataset& labeled, const Dataset& priors, const Dataset& synthetic) {
    if (!(labeled.schema() == priors.schema()) || !(labeled.schema() == synthetic.schema()))
        throw ContractError("assemble_training_set: schema mismatch");
    const Dataset parts[] = {labeled, priors, synthetic};
    return Dataset::concat(parts, synthetic.empty() ? Provenance::real : Provenance::augmented);
}

json AugmentationConfig::to_json() const {
    return {{"enabled", enabled},
            {"ratio", ratio},
            {"minority_threshold", minority_threshold},
            {"filter_threshold", filter_threshold},
            {"generator", generator.to_json()},
            {"filter", filter.to_json()}};
}

AugmentationConfig AugmentationConfig::from_json(const json& j) {
    AugmentationConfig c;
    c.enabled = j.value("enabled", c.enabled);
    c.ratio = j.value("ratio", c.ratio);
    c.minority_threshold = j.value("minority_threshold", c.minority_threshold);
    c.filter_threshold = j.value("filter_threshold", c.filter_threshold);
    if (j.contains("generator")) c.generator = GeneratorConfig::from_json(j.at("generator"));
    if (j.contains("components_per_class"))
        c.generator.components_per_class = j.at("components_per_class").get<std::size_t>();
    if (j.contains("filter")) c.filter = LogisticConfig::from_json(j.at("filter"));
    require(c.ratio >= 0.0, "augmentation ratio must be non-negative");
    return c;
}

json AugmentationReport::to_json() const {
    json cls = json::array();
    for (const auto& c : classes) {
        json jc = {{"class", c.name},
                   {"prior_count", c.prior_count},
                   {"generated", c.generated},
                   {"retained", c.retained}};
        jc["w2"] = c.w2 ? json(*c.w2) : json(nullptr);
        cls.push_back(std::move(jc));
    }
    return {{"ratio", ratio},
            {"filter_threshold", filter_threshold},
            {"minority_threshold", minority_threshold},
            {"classes", cls},
            {"warnings", warnings}};
}

AugmentationOutcome augment_minorities(const Dataset& updated_labeled, const Dataset& original_labeled,
                                       const AugmentationConfig& config) {
    AugmentationOutcome out{identify_minorities(updated_labeled, config.minority_threshold),
                            GeneratorModel{},
                            Dataset(updated_labeled.schema_ptr(), Provenance::augmented),
                            AugmentationReport{}};
    out.report.ratio = config.ratio;
    out.report.filter_threshold = config.filter_threshold;
    out.report.minority_threshold = config.minority_threshold;
    out.generator.schema = updated_labeled.schema_ptr();
    if (out.minorities.minority.empty()) return out;

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < updated_labeled.size(); ++i)
        if (out.minorities.is_minority(*updated_labeled.record(i).label)) idx.push_back(i);
    const Dataset minority = updated_labeled.subset(idx);
    out.generator = fit_generator(minority, config.generator);
    out.report.warnings = out.generator.warnings;

    const LogisticModel filter = train_logistic(original_labeled, config.filter);
    std::vector<Dataset> kept;
    for (int c : out.minorities.minority) {
        const auto cc = static_cast<std::size_t>(c);
        ClassAugmentation ca;
        ca.name = updated_labeled.schema().class_name(c);
        ca.prior_count = out.minorities.counts[cc];
        const auto count = static_cast<std::size_t>(std::llround(config.ratio * static_cast<double>(ca.prior_count)));
        const Dataset synth =
            synthesize(out.generator, c, count, derive_seed(config.generator.seed, "synth-" + std::to_string(c)));
        auto filtered = filter_synthetic(synth, filter, config.filter_threshold);
        ca.generated = synth.size();
        ca.retained = filtered.retained.size();
        if (!filtered.retained.empty()) {
            std::vector<std::size_t> real_idx;
            for (auto i : idx)
                if (*updated_labeled.record(i).label == c) real_idx.push_back(i);
            ca.w2 = w2_fidelity(updated_labeled.subset(real_idx), filtered.retained);
            kept.push_back(std::move(filtered.retained));
        }
        out.report.classes.push_back(std::move(ca));
    }
    if (!kept.empty()) out.retained = Dataset::concat(kept, Provenance::augmented);
    return out;
}

}  // namespace flowadapt
