#include "flowadapt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "flowadapt/error.hpp"

namespace flowadapt {

using nlohmann::json;

MetricsReport classification_report(std::span<const int> y_true, std::span<const int> y_pred,
                                    const std::vector<std::string>& classes, int benign_index) {
    require(!y_true.empty(), "classification_report: empty input");
    require(y_true.size() == y_pred.size(), "classification_report: length mismatch");
    const std::size_t C = classes.size();
    require(benign_index >= 0 && static_cast<std::size_t>(benign_index) < C,
            "classification_report: benign index out of range");

    MetricsReport r;
    r.classes = classes;
    r.n = y_true.size();
    r.confusion.assign(C, std::vector<std::size_t>(C, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || static_cast<std::size_t>(t) >= C)
            throw ContractError("classification_report: true label outside vocabulary");
        if (p < 0 || static_cast<std::size_t>(p) >= C)
            throw ContractError("classification_report: predicted label outside vocabulary");
        ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }

    std::size_t correct = 0;
    std::size_t present = 0;
    double f1_sum = 0.0;
    r.per_class_f1.assign(C, 0.0);
    r.class_present.assign(C, false);
    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t tp = r.confusion[c][c];
        std::size_t fn = 0;
        std::size_t fp = 0;
        for (std::size_t k = 0; k < C; ++k) {
            if (k == c) continue;
            fn += r.confusion[c][k];
            fp += r.confusion[k][c];
        }
        correct += tp;
        const std::size_t denom = 2 * tp + fp + fn;
        r.per_class_f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
        if (tp + fn > 0) {
            r.class_present[c] = true;
            ++present;
            f1_sum += r.per_class_f1[c];
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
    r.micro_f1 = r.accuracy;
    r.macro_f1 = f1_sum / static_cast<double>(present);

    const auto b = static_cast<std::size_t>(benign_index);
    std::size_t attacks = 0;
    std::size_t missed = 0;
    std::size_t benign = 0;
    std::size_t false_alarms = 0;
    for (std::size_t t = 0; t < C; ++t) {
        for (std::size_t p = 0; p < C; ++p) {
            const std::size_t v = r.confusion[t][p];
            if (t == b) {
                benign += v;
                if (p != b) false_alarms += v;
            } else {
                attacks += v;
                if (p == b) missed += v;
            }
        }
    }
    r.fnr = attacks == 0 ? 0.0 : static_cast<double>(missed) / static_cast<double>(attacks);
    r.fpr = benign == 0 ? 0.0 : static_cast<double>(false_alarms) / static_cast<double>(benign);
    return r;
}

json MetricsReport::to_json() const {
    json per_class = json::array();
    for (std::size_t c = 0; c < classes.size(); ++c)
        per_class.push_back({{"class", classes[c]}, {"f1", per_class_f1[c]}, {"present", static_cast<bool>(class_present[c])}});
    return {{"n", n},
            {"macro_f1", macro_f1},
            {"micro_f1", micro_f1},
            {"accuracy", accuracy},
            {"fnr", fnr},
            {"fpr", fpr},
            {"per_class", per_class},
            {"confusion", confusion}};
}

MetricsReport MetricsReport::from_json(const json& j) {
    MetricsReport r;
    r.n = j.at("n").get<std::size_t>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.micro_f1 = j.at("micro_f1").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.fnr = j.at("fnr").get<double>();
    r.fpr = j.at("fpr").get<double>();
    for (const auto& pc : j.at("per_class")) {
        r.classes.push_back(pc.at("class").get<std::string>());
        r.per_class_f1.push_back(pc.at("f1").get<double>());
        r.class_present.push_back(pc.at("present").get<bool>());
    }
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    return r;
}

namespace {

// Integrates cost(|Qa(u) - Qb(u)|) over u in [0,1]. Breakpoints of the two
// quantile functions are i/n and j/m; they are compared in units of 1/(n m)
// so the grid is exact.
template <typename Cost>
double quantile_integral(std::span<const double> a, std::span<const double> b, Cost cost) {
    require(!a.empty() && !b.empty(), "1-D transport: empty input");
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const std::size_t n = sa.size();
    const std::size_t m = sb.size();
    std::size_t ia = 0;
    std::size_t ib = 0;
    std::size_t pos = 0;  // current u, in units of 1/(n m)
    double acc = 0.0;
    while (ia < n && ib < m) {
        const std::size_t next_a = (ia + 1) * m;
        const std::size_t next_b = (ib + 1) * n;
        const std::size_t next = std::min(next_a, next_b);
        acc += static_cast<double>(next - pos) * cost(std::abs(sa[ia] - sb[ib]));
        pos = next;
        if (next_a == next) ++ia;
        if (next_b == next) ++ib;
    }
    return acc / (static_cast<double>(n) * static_cast<double>(m));
}

}  // namespace

double emd_1d(std::span<const double> a, std::span<const double> b) {
    return quantile_integral(a, b, [](double d) { return d; });
}

double w2_1d(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(quantile_integral(a, b, [](double d) { return d * d; }));
}

DriftReport class_drift(const Dataset& source, const Dataset& target) {
    require(source.is_labeled() && target.is_labeled(), "class_drift: both sides must be labeled");
    require(source.schema() == target.schema(), "class_drift: schema mismatch");
    const auto& schema = source.schema();
    const auto& cont = schema.continuous_indices();
    require(!cont.empty(), "class_drift: no continuous features");
    const std::size_t C = schema.num_classes();

    // Per class, per feature column of values.
    auto columns = [&](const Dataset& d) {
        std::vector<std::vector<std::vector<double>>> cols(C, std::vector<std::vector<double>>(cont.size()));
        for (const auto& r : d.records())
            for (std::size_t k = 0; k < cont.size(); ++k)
                cols[static_cast<std::size_t>(*r.label)][k].push_back(r.values[cont[k]]);
        return cols;
    };
    const auto src = columns(source);
    const auto tgt = columns(target);

    DriftReport rep;
    double max_raw = 0.0;
    bool any_shared = false;
    for (std::size_t c = 0; c < C; ++c) {
        ClassDriftEntry e;
        e.name = schema.class_name(static_cast<int>(c));
        e.source_count = src[c].front().size();
        e.target_count = tgt[c].front().size();
        e.shared = e.source_count > 0 && e.target_count > 0;
        if (e.shared) {
            any_shared = true;
            double sum = 0.0;
            for (std::size_t k = 0; k < cont.size(); ++k) sum += emd_1d(src[c][k], tgt[c][k]);
            e.raw = sum / static_cast<double>(cont.size());
            if (e.raw > max_raw) {
                max_raw = e.raw;
                rep.reference_class = e.name;
            }
        }
        rep.classes.push_back(std::move(e));
    }
    require(any_shared, "class_drift: no class present on both sides");
    rep.degenerate = !(max_raw > 0.0);
    if (!rep.degenerate)
        for (auto& e : rep.classes)
            if (e.shared) e.normalized = e.raw / max_raw;
    return rep;
}

json DriftReport::to_json() const {
    json cls = json::array();
    for (const auto& e : classes)
        cls.push_back({{"class", e.name},
                       {"source_count", e.source_count},
                       {"target_count", e.target_count},
                       {"shared", e.shared},
                       {"raw_emd", e.raw},
                       {"normalized_emd", e.normalized}});
    return {{"classes", cls}, {"reference_class", reference_class}, {"degenerate", degenerate}};
}

DriftReport DriftReport::from_json(const json& j) {
    DriftReport r;
    r.reference_class = j.at("reference_class").get<std::string>();
    r.degenerate = j.at("degenerate").get<bool>();
    for (const auto& c : j.at("classes")) {
        ClassDriftEntry e;
        e.name = c.at("class").get<std::string>();
        e.source_count = c.at("source_count").get<std::size_t>();
        e.target_count = c.at("target_count").get<std::size_t>();
        e.shared = c.at("shared").get<bool>();
        e.raw = c.at("raw_emd").get<double>();
        e.normalized = c.at("normalized_emd").get<double>();
        r.classes.push_back(std::move(e));
    }
    return r;
}

double w2_fidelity(const Dataset& real, const Dataset& synthetic) {
    require(!real.empty() && !synthetic.empty(), "w2_fidelity: empty input");
    require(real.schema() == synthetic.schema(), "w2_fidelity: schema mismatch");
    const auto& cont = real.schema().continuous_indices();
    require(!cont.empty(), "w2_fidelity: no continuous features");
    double sum = 0.0;
    for (auto f : cont) {
        std::vector<double> a;
        std::vector<double> b;
        for (const auto& r : real.records()) a.push_back(r.values[f]);
        for (const auto& r : synthetic.records()) b.push_back(r.values[f]);
        sum += w2_1d(a, b);
    }
    return sum / static_cast<double>(cont.size());
}

}  // namespace flowadapt
