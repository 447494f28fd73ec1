#include "flowadapt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowadapt/error.hpp"

namespace flowadapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<json> read_optional(const fs::path& p) {
    std::ifstream in(p);
    if (!in) return std::nullopt;
    return json::parse(in);
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string budget_label(const std::optional<double>& b) {
    if (!b) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g%%", *b * 100.0);
    return buf;
}

/// Left-aligned first column, right-aligned rest.
std::string render(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> w(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size() && c < w.size(); ++c) w[c] = std::max(w[c], r[c].size());
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < w.size(); ++c) {
            const std::string& s = c < cells.size() ? cells[c] : std::string();
            const std::string pad(w[c] - s.size(), ' ');
            if (c > 0) os << "  ";
            os << (c == 0 ? s + pad : pad + s);
        }
        os << '\n';
    };
    line(header);
    std::size_t total = 0;
    for (auto x : w) total += x;
    os << std::string(total + 2 * (w.size() - 1), '-') << '\n';
    for (const auto& r : rows) line(r);
    return os.str();
}

const DriftReport* first_drift(const std::vector<RunArtifacts>& runs) {
    for (const auto& r : runs)
        if (r.drift) return &*r.drift;
    return nullptr;
}

}  // namespace

RunArtifacts load_run_artifacts(const fs::path& dir) {
    const auto cfg = read_optional(dir / "config.json");
    const auto sel = read_optional(dir / "selection.json");
    if (!cfg || !sel) throw NotFoundError(dir.string() + " is not a run directory");
    RunArtifacts a;
    a.strategy = cfg->value("strategy", std::string{"?"});
    const bool budgeted = a.strategy != "none" && a.strategy != "full";
    if (budgeted && cfg->contains("budget") && !cfg->at("budget").is_null())
        a.budget = cfg->at("budget").get<double>();
    a.label = a.strategy + (a.budget ? " " + budget_label(a.budget) : std::string());
    a.selection = SelectionReport::from_json(*sel);
    if (auto j = read_optional(dir / "metrics_pre.json")) a.pre = MetricsReport::from_json(*j);
    if (auto j = read_optional(dir / "metrics_post.json")) a.post = MetricsReport::from_json(*j);
    if (auto j = read_optional(dir / "drift.json")) a.drift = DriftReport::from_json(*j);
    return a;
}

std::string render_selection_table(const std::vector<RunArtifacts>& runs) {
    const DriftReport* drift = first_drift(runs);
    if (drift == nullptr) return "(no drift report available)\n";
    std::vector<std::string> header{"Class", "#Source", "#Target", "Norm. EMD"};
    for (const auto& r : runs) header.push_back(r.label);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < drift->classes.size(); ++c) {
        const auto& e = drift->classes[c];
        std::vector<std::string> row{e.name, std::to_string(e.source_count), std::to_string(e.target_count),
                                     e.shared ? fixed(e.normalized, 4) : "-"};
        for (const auto& r : runs) {
            const auto& pc = r.selection.per_class_selected;
            row.push_back(c < pc.size() ? std::to_string(pc[c]) : "-");
        }
        rows.push_back(std::move(row));
    }
    return render(header, rows);
}

std::string render_performance_table(const std::vector<RunArtifacts>& runs) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : runs) {
        const auto& m = r.post ? r.post : r.pre;
        if (!m) {
            rows.push_back({r.strategy, budget_label(r.budget), "-", "-", "-", "-"});
            continue;
        }
        rows.push_back({r.strategy, r.strategy == "none" ? "0%" : r.strategy == "full" ? "100%" : budget_label(r.budget),
                        fixed(100.0 * m->macro_f1, 2), fixed(m->fnr, 4), fixed(m->fpr, 4),
                        fixed(100.0 * m->accuracy, 2)});
    }
    return render({"Method", "Label", "F1(%)", "FNR", "FPR", "Acc.(%)"}, rows);
}

std::string render_class_table(const std::vector<RunArtifacts>& runs) {
    const RunArtifacts* base = nullptr;
    for (const auto& r : runs)
        if (r.pre) {
            base = &r;
            break;
        }
    if (base == nullptr) return "(no metrics available)\n";
    std::vector<std::string> header{"Class", "No Adapt"};
    for (const auto& r : runs) header.push_back(r.label);
    std::vector<std::vector<std::string>> rows;
    const auto& classes = base->pre->classes;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        auto cell = [&](const std::optional<MetricsReport>& m) {
            if (!m || c >= m->per_class_f1.size() || !m->class_present[c]) return std::string("-");
            return fixed(100.0 * m->per_class_f1[c], 2);
        };
        std::vector<std::string> row{classes[c], cell(base->pre)};
        for (const auto& r : runs) row.push_back(cell(r.post ? r.post : r.pre));
        rows.push_back(std::move(row));
    }
    return render(header, rows);
}

}  // namespace flowadapt
