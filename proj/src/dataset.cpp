#include "flowadapt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "flowadapt/error.hpp"
#include "flowadapt/rng.hpp"

namespace flowadapt {

using nlohmann::json;

// ---------------------------------------------------------------------------
// FeatureSchema

FeatureSchema::FeatureSchema(std::vector<FeatureDescriptor> features, std::string label_column,
                             std::vector<std::string> classes, std::string benign_class)
    : features_(std::move(features)),
      label_column_(std::move(label_column)),
      classes_(std::move(classes)) {
    if (features_.empty()) throw SchemaError("schema has no features");
    if (classes_.empty()) throw SchemaError("schema has no classes");
    if (label_column_.empty()) throw SchemaError("schema has no label column");

    std::set<std::string> names;
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& f = features_[i];
        if (f.name.empty()) throw SchemaError("feature " + std::to_string(i) + " has no name");
        if (!names.insert(f.name).second) throw SchemaError("duplicate feature name: " + f.name);
        if (f.name == label_column_)
            throw SchemaError("label column collides with feature: " + f.name);
        if (f.kind == FeatureKind::categorical) {
            if (f.vocabulary.empty())
                throw SchemaError("categorical feature without vocabulary: " + f.name);
            std::set<std::string> states(f.vocabulary.begin(), f.vocabulary.end());
            if (states.size() != f.vocabulary.size())
                throw SchemaError("duplicate vocabulary entry in feature: " + f.name);
            categorical_.push_back(i);
            encoded_width_ += f.vocabulary.size();
        } else {
            continuous_.push_back(i);
            encoded_width_ += 1;
        }
    }
    std::set<std::string> cls(classes_.begin(), classes_.end());
    if (cls.size() != classes_.size()) throw SchemaError("duplicate class name");

    if (benign_class.empty()) {
        benign_index_ = 0;
    } else {
        auto it = std::find(classes_.begin(), classes_.end(), benign_class);
        if (it == classes_.end()) throw SchemaError("benign class not in vocabulary: " + benign_class);
        benign_index_ = static_cast<int>(it - classes_.begin());
    }
}

std::optional<int> FeatureSchema::find_class(const std::string& name) const {
    auto it = std::find(classes_.begin(), classes_.end(), name);
    if (it == classes_.end()) return std::nullopt;
    return static_cast<int>(it - classes_.begin());
}

int FeatureSchema::class_index(const std::string& name) const {
    auto c = find_class(name);
    if (!c) throw SchemaError("unknown class: " + name);
    return *c;
}

std::optional<std::size_t> FeatureSchema::find_feature(const std::string& name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
        if (features_[i].name == name) return i;
    return std::nullopt;
}

bool FeatureSchema::operator==(const FeatureSchema& o) const {
    if (features_.size() != o.features_.size()) return false;
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& a = features_[i];
        const auto& b = o.features_[i];
        if (a.name != b.name || a.kind != b.kind || a.vocabulary != b.vocabulary) return false;
    }
    return label_column_ == o.label_column_ && classes_ == o.classes_ &&
           benign_index_ == o.benign_index_;
}

json FeatureSchema::to_json() const {
    json feats = json::array();
    for (const auto& f : features_) {
        json jf = {{"name", f.name}};
        if (f.kind == FeatureKind::categorical) {
            jf["kind"] = "categorical";
            jf["vocabulary"] = f.vocabulary;
        } else {
            jf["kind"] = "continuous";
            if (!f.unit.empty()) jf["unit"] = f.unit;
        }
        feats.push_back(std::move(jf));
    }
    return {{"features", feats},
            {"label_column", label_column_},
            {"classes", classes_},
            {"benign_class", classes_[static_cast<std::size_t>(benign_index_)]}};
}

FeatureSchema FeatureSchema::from_json(const json& j) {
    try {
        std::vector<FeatureDescriptor> feats;
        for (const auto& jf : j.at("features")) {
            FeatureDescriptor f;
            f.name = jf.at("name").get<std::string>();
            const auto kind = jf.value("kind", std::string("continuous"));
            if (kind == "categorical") {
                f.kind = FeatureKind::categorical;
                f.vocabulary = jf.at("vocabulary").get<std::vector<std::string>>();
            } else if (kind == "continuous") {
                f.kind = FeatureKind::continuous;
                f.unit = jf.value("unit", std::string());
            } else {
                throw SchemaError("unknown feature kind: " + kind);
            }
            feats.push_back(std::move(f));
        }
        return FeatureSchema(std::move(feats), j.value("label_column", std::string("Label")),
                             j.at("classes").get<std::vector<std::string>>(),
                             j.value("benign_class", std::string()));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed schema: ") + e.what());
    }
}

SchemaPtr load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open schema file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError("schema is not valid JSON: " + std::string(e.what()));
    }
    return std::make_shared<const FeatureSchema>(FeatureSchema::from_json(j));
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::real: return "real";
        case Provenance::synthetic: return "synthetic";
        case Provenance::augmented: return "augmented";
    }
    return "real";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "real") return Provenance::real;
    if (s == "synthetic") return Provenance::synthetic;
    if (s == "augmented") return Provenance::augmented;
    throw ValidationError("unknown provenance: " + s);
}

LabelMode label_mode_from_string(const std::string& s) {
    if (s == "labeled") return LabelMode::labeled;
    if (s == "hidden" || s == "hidden_truth" || s == "unlabeled-with-hidden-truth")
        return LabelMode::hidden_truth;
    if (s == "unlabeled") return LabelMode::unlabeled;
    throw ValidationError("unknown label mode: " + s);
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(SchemaPtr schema, Provenance provenance)
    : schema_(std::move(schema)), provenance_(provenance) {
    require(schema_ != nullptr, "dataset requires a schema");
}

Dataset Dataset::labeled(SchemaPtr schema, std::vector<FlowRecord> records, Provenance provenance) {
    Dataset d(std::move(schema), provenance);
    d.records_ = std::move(records);
    d.labeled_ = true;
    d.validate();
    return d;
}

Dataset Dataset::unlabeled(SchemaPtr schema, std::vector<FlowRecord> records,
                           std::optional<std::vector<int>> hidden_truth) {
    Dataset d(std::move(schema), Provenance::real);
    d.records_ = std::move(records);
    d.labeled_ = false;
    for (auto& r : d.records_) r.label.reset();
    if (hidden_truth) {
        require(hidden_truth->size() == d.records_.size(),
                "hidden truth length must match record count");
        d.hidden_truth_ = std::move(*hidden_truth);
        d.has_truth_ = true;
    }
    d.validate();
    return d;
}

std::vector<int> Dataset::labels() const {
    require(labeled_, "labels() requires a labeled dataset");
    std::vector<int> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(*r.label);
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    require(labeled_, "class_counts() requires a labeled dataset");
    std::vector<std::size_t> counts(schema_->num_classes(), 0);
    for (const auto& r : records_) ++counts[static_cast<std::size_t>(*r.label)];
    return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset d(schema_, provenance_);
    d.labeled_ = labeled_;
    d.has_truth_ = has_truth_;
    d.records_.reserve(indices.size());
    for (auto i : indices) {
        require(i < records_.size(), "subset index out of range");
        d.records_.push_back(records_[i]);
        if (has_truth_) d.hidden_truth_.push_back(hidden_truth_[i]);
    }
    return d;
}

Dataset Dataset::without(std::span<const std::size_t> indices) const {
    std::vector<char> drop(records_.size(), 0);
    for (auto i : indices) {
        require(i < records_.size(), "index out of range");
        drop[i] = 1;
    }
    std::vector<std::size_t> keep;
    keep.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (!drop[i]) keep.push_back(i);
    return subset(keep);
}

Dataset Dataset::with_labels(std::span<const int> labels) const {
    require(labels.size() == records_.size(), "label count must match record count");
    std::vector<FlowRecord> recs = records_;
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].label = labels[i];
    return Dataset::labeled(schema_, std::move(recs), provenance_);
}

Dataset Dataset::hide_labels() const {
    if (!labeled_) return *this;
    return Dataset::unlabeled(schema_, records_, labels());
}

Dataset Dataset::with_records(std::vector<FlowRecord> records) const {
    require(records.size() == records_.size(), "replacement must keep the record count");
    Dataset d(schema_, provenance_);
    d.labeled_ = labeled_;
    d.has_truth_ = has_truth_;
    d.hidden_truth_ = hidden_truth_;
    d.records_ = std::move(records);
    d.validate();
    return d;
}

Dataset Dataset::concat(std::span<const Dataset> parts, Provenance provenance) {
    require(!parts.empty(), "concat requires at least one dataset");
    const auto& schema = parts.front().schema_ptr();
    std::vector<FlowRecord> recs;
    for (const auto& p : parts) {
        if (!(p.schema() == *schema)) throw ContractError("concat: schema mismatch");
        require(p.is_labeled(), "concat requires labeled datasets");
        recs.insert(recs.end(), p.records().begin(), p.records().end());
    }
    return Dataset::labeled(schema, std::move(recs), provenance);
}

void Dataset::validate_record(const FlowRecord& r, std::size_t row) const {
    const auto& s = *schema_;
    if (r.values.size() != s.size())
        throw ValidationError("record width " + std::to_string(r.values.size()) +
                              " != schema width " + std::to_string(s.size()) + " (row " +
                              std::to_string(row) + ")");
    for (std::size_t f = 0; f < s.size(); ++f) {
        const double v = r.values[f];
        const auto& fd = s.feature(f);
        if (fd.kind == FeatureKind::continuous) {
            if (!std::isfinite(v))
                throw ValidationError("non-finite value in " + fd.name + " (row " +
                                      std::to_string(row) + ")");
        } else {
            if (v < 0 || v >= static_cast<double>(fd.vocabulary.size()) || v != std::floor(v))
                throw VocabularyError("categorical index out of range in " + fd.name, row);
        }
    }
    if (labeled_) {
        if (!r.label) throw ValidationError("unlabeled record in labeled dataset (row " +
                                            std::to_string(row) + ")");
        if (*r.label < 0 || static_cast<std::size_t>(*r.label) >= s.num_classes())
            throw VocabularyError("label out of class vocabulary", row);
    }
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < records_.size(); ++i) validate_record(records_[i], i);
    if (has_truth_) {
        for (std::size_t i = 0; i < hidden_truth_.size(); ++i) {
            const int c = hidden_truth_[i];
            if (c < 0 || static_cast<std::size_t>(c) >= schema_->num_classes())
                throw VocabularyError("hidden label out of class vocabulary", i);
        }
    }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r' && c != '\n') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// Non-finite values come back as NaN/inf; anything unparsable is an error.
std::optional<double> parse_number(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

LoadedCsv load_csv(const std::filesystem::path& path, SchemaPtr schema, LabelMode mode) {
    require(schema != nullptr, "load_csv requires a schema");
    std::ifstream in(path);
    if (!in) throw Error("cannot open CSV file: " + path.string());

    std::string line;
    if (!std::getline(in, line) || trim(line).empty())
        throw EmptyDatasetError("empty CSV file: " + path.string());
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    auto header = split_csv_line(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col.emplace(trim(header[i]), i);

    const auto& s = *schema;
    std::vector<std::size_t> feature_col(s.size());
    for (std::size_t f = 0; f < s.size(); ++f) {
        auto it = col.find(s.feature(f).name);
        if (it == col.end()) throw SchemaError("missing column: " + s.feature(f).name);
        feature_col[f] = it->second;
    }
    std::optional<std::size_t> label_col;
    if (mode != LabelMode::unlabeled) {
        auto it = col.find(s.label_column());
        if (it == col.end()) throw SchemaError("missing label column: " + s.label_column());
        label_col = it->second;
    }

    std::vector<std::unordered_map<std::string, int>> vocab(s.size());
    for (auto f : s.categorical_indices()) {
        const auto& v = s.feature(f).vocabulary;
        for (std::size_t k = 0; k < v.size(); ++k) vocab[f].emplace(v[k], static_cast<int>(k));
    }

    std::vector<FlowRecord> records;
    std::vector<int> truth;
    std::size_t dropped = 0;
    std::size_t row = 0;
    std::size_t data_rows = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        ++data_rows;
        auto fields = split_csv_line(line);
        if (fields.size() < header.size())
            throw ValidationError("row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
        FlowRecord r;
        r.values.resize(s.size());
        bool finite = true;
        for (std::size_t f = 0; f < s.size(); ++f) {
            const auto& raw = fields[feature_col[f]];
            const auto& fd = s.feature(f);
            if (fd.kind == FeatureKind::categorical) {
                auto it = vocab[f].find(trim(raw));
                if (it == vocab[f].end())
                    throw VocabularyError("unknown state '" + trim(raw) + "' for " + fd.name, row);
                r.values[f] = it->second;
            } else {
                auto v = parse_number(raw);
                if (!v)
                    throw ValidationError("unparsable value '" + raw + "' in " + fd.name +
                                          " (row " + std::to_string(row) + ")");
                if (!std::isfinite(*v)) finite = false;
                r.values[f] = *v;
            }
        }
        if (!finite) {
            ++dropped;
            continue;
        }
        if (label_col) {
            const std::string name = trim(fields[*label_col]);
            auto c = s.find_class(name);
            if (!c) throw VocabularyError("unknown class '" + name + "'", row);
            if (mode == LabelMode::labeled)
                r.label = *c;
            else
                truth.push_back(*c);
        }
        records.push_back(std::move(r));
    }
    if (data_rows == 0) throw EmptyDatasetError("CSV has no data rows: " + path.string());

    switch (mode) {
        case LabelMode::labeled:
            return {Dataset::labeled(schema, std::move(records)), dropped};
        case LabelMode::hidden_truth:
            return {Dataset::unlabeled(schema, std::move(records), std::move(truth)), dropped};
        case LabelMode::unlabeled:
            break;
    }
    return {Dataset::unlabeled(schema, std::move(records)), dropped};
}

void write_csv(const Dataset& data, const std::filesystem::path& path, bool include_hidden_truth) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write CSV file: " + path.string());
    const auto& s = data.schema();
    const bool with_label = data.is_labeled() || (include_hidden_truth && data.has_truth_);
    for (std::size_t f = 0; f < s.size(); ++f) {
        if (f) out << ',';
        out << csv_escape(s.feature(f).name);
    }
    if (with_label) out << ',' << csv_escape(s.label_column());
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& r = data.record(i);
        for (std::size_t f = 0; f < s.size(); ++f) {
            if (f) out << ',';
            const auto& fd = s.feature(f);
            if (fd.kind == FeatureKind::categorical)
                out << csv_escape(fd.vocabulary[static_cast<std::size_t>(r.values[f])]);
            else
                out << format_double(r.values[f]);
        }
        if (with_label) {
            const int c = data.is_labeled() ? *r.label : data.hidden_truth_[i];
            out << ',' << csv_escape(s.class_name(c));
        }
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Normalization

bool NormStats::any_constant() const {
    return std::any_of(constant.begin(), constant.end(), [](bool b) { return b; });
}

NormStats fit_norm_stats(const Dataset& train) {
    require(!train.empty(), "normalize: training set is empty");
    const auto& idx = train.schema().continuous_indices();
    NormStats st;
    st.features = idx;
    st.min.assign(idx.size(), std::numeric_limits<double>::infinity());
    st.max.assign(idx.size(), -std::numeric_limits<double>::infinity());
    for (const auto& r : train.records()) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            st.min[k] = std::min(st.min[k], r.values[idx[k]]);
            st.max[k] = std::max(st.max[k], r.values[idx[k]]);
        }
    }
    st.constant.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) st.constant[k] = !(st.max[k] > st.min[k]);
    return st;
}

Dataset NormStats::apply(const Dataset& data) const {
    require(data.schema().continuous_indices() == features,
            "normalization stats do not match dataset schema");
    std::vector<FlowRecord> recs = data.records();
    for (auto& r : recs) {
        for (std::size_t k = 0; k < features.size(); ++k) {
            double& v = r.values[features[k]];
            v = constant[k] ? 0.0 : (v - min[k]) / (max[k] - min[k]);
        }
    }
    return data.with_records(std::move(recs));
}

json NormStats::to_json() const {
    return {{"features", features}, {"min", min}, {"max", max}, {"constant", constant}};
}

NormStats NormStats::from_json(const json& j) {
    NormStats s;
    s.features = j.at("features").get<std::vector<std::size_t>>();
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    s.constant = j.at("constant").get<std::vector<bool>>();
    return s;
}

Normalized normalize(const Dataset& train, std::span<const Dataset> others) {
    require(train.is_labeled(), "normalize: training set must be labeled");
    NormStats st = fit_norm_stats(train);
    Normalized out{st.apply(train), {}, st};
    out.others.reserve(others.size());
    for (const auto& o : others) out.others.push_back(st.apply(o));
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

SplitResult split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    require(train_fraction > 0.0 && train_fraction < 1.0, "split: fraction must lie in (0,1)");
    Rng rng(seed);
    const std::size_t n = data.size();
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    std::vector<std::string> warnings;

    if (!data.is_labeled()) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
        train_idx.assign(order.begin(), order.begin() + n_train);
        test_idx.assign(order.begin() + n_train, order.end());
    } else {
        const std::size_t C = data.schema().num_classes();
        std::vector<std::vector<std::size_t>> by_class(C);
        for (std::size_t i = 0; i < n; ++i)
            by_class[static_cast<std::size_t>(*data.record(i).label)].push_back(i);

        const auto target = static_cast<long long>(std::llround(train_fraction * n));
        std::vector<std::size_t> take(C, 0);
        std::vector<double> rem(C, 0.0);
        long long assigned = 0;
        for (std::size_t c = 0; c < C; ++c) {
            const auto nc = by_class[c].size();
            if (nc == 0) continue;
            if (nc == 1) {
                take[c] = 1;
                warnings.push_back("class '" + data.schema().class_name(static_cast<int>(c)) +
                                   "' has a single sample; kept on the training side");
            } else {
                const double exact = train_fraction * static_cast<double>(nc);
                take[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
                rem[c] = exact - static_cast<double>(take[c]);
            }
            assigned += static_cast<long long>(take[c]);
        }
        // Largest remainder for the leftover quota.
        std::vector<std::size_t> order(C);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
        for (std::size_t k = 0; assigned < target && k < C; ++k) {
            const auto c = order[k];
            if (by_class[c].size() >= 2 && take[c] < by_class[c].size() && rem[c] > 0.0) {
                ++take[c];
                ++assigned;
            }
        }
        for (std::size_t c = 0; c < C; ++c) {
            auto idx = by_class[c];
            std::shuffle(idx.begin(), idx.end(), rng);
            train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + take[c]);
            test_idx.insert(test_idx.end(), idx.begin() + take[c], idx.end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(test_idx.begin(), test_idx.end());
    }
    SplitResult out{data.subset(train_idx), data.subset(test_idx), std::move(train_idx),
                    std::move(test_idx), std::move(warnings)};
    return out;
}

Dataset stratified_subsample(const Dataset& data, std::size_t n, std::uint64_t seed) {
    if (n >= data.size()) return data;
    require(n > 0, "subsample size must be positive");
    return split(data, static_cast<double>(n) / static_cast<double>(data.size()), seed).train;
}

// ---------------------------------------------------------------------------
// Encoding

FeatureEncoder::FeatureEncoder(const FeatureSchema& schema) {
    for (std::size_t f = 0; f < schema.size(); ++f) {
        const auto& fd = schema.feature(f);
        const std::size_t v = fd.kind == FeatureKind::categorical ? fd.vocabulary.size() : 0;
        columns_.push_back({f, width_, v});
        width_ += v == 0 ? 1 : v;
    }
}

void FeatureEncoder::encode_row(const FlowRecord& r, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) const {
    out.setZero();
    for (const auto& c : columns_) {
        if (c.vocab == 0)
            out(static_cast<Eigen::Index>(c.offset)) = r.values[c.feature];
        else
            out(static_cast<Eigen::Index>(c.offset + static_cast<std::size_t>(r.values[c.feature]))) =
                1.0;
    }
}

Eigen::MatrixXd FeatureEncoder::encode(const Dataset& data) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(width_));
    for (std::size_t i = 0; i < data.size(); ++i)
        encode_row(data.record(i), m.row(static_cast<Eigen::Index>(i)));
    return m;
}

Eigen::MatrixXd continuous_matrix(const Dataset& data) {
    const auto& idx = data.schema().continuous_indices();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t k = 0; k < idx.size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                data.record(i).values[idx[k]];
    return m;
}

// ---------------------------------------------------------------------------
// Drift benchmark

void DriftSpec::validate() const {
    if (classes.size() < 2) throw ValidationError("drift spec needs at least 2 classes");
    const std::size_t d = continuous_features.size();
    if (d == 0) throw ValidationError("drift spec needs at least one continuous feature");
    for (const auto& c : classes) {
        if (c.mean.size() != d) throw ValidationError("class " + c.name + ": mean has wrong width");
        if (c.stddev.size() != d)
            throw ValidationError("class " + c.name + ": stddev has wrong width");
        if (c.shift.size() != d) throw ValidationError("class " + c.name + ": shift has wrong width");
        if (c.source_count == 0 && c.target_count == 0)
            throw ValidationError("class " + c.name + " is absent from both domains");
        for (std::size_t k = 0; k < d; ++k) {
            if (!std::isfinite(c.shift[k]) || !std::isfinite(c.mean[k]))
                throw ValidationError("class " + c.name + ": non-finite mean or shift");
            if (!(c.stddev[k] > 0.0)) throw ValidationError("class " + c.name + ": stddev must be > 0");
        }
        auto check_probs = [&](const std::vector<std::vector<double>>& probs) {
            if (probs.size() != metadata_features.size())
                throw ValidationError("class " + c.name + ": one probability row per metadata feature");
            for (std::size_t m = 0; m < probs.size(); ++m) {
                if (probs[m].size() != metadata_features[m].vocabulary.size())
                    throw ValidationError("class " + c.name + ": probability row width mismatch");
                double sum = 0;
                for (double p : probs[m]) {
                    if (!(p >= 0.0)) throw ValidationError("negative metadata probability");
                    sum += p;
                }
                if (!(sum > 0.0)) throw ValidationError("metadata probabilities sum to zero");
            }
        };
        check_probs(c.metadata_probs);
        if (!c.target_metadata_probs.empty()) check_probs(c.target_metadata_probs);
    }
    (void)schema();
}

SchemaPtr DriftSpec::schema() const {
    std::vector<FeatureDescriptor> feats;
    for (const auto& n : continuous_features) feats.push_back({n, FeatureKind::continuous, {}, ""});
    for (auto m : metadata_features) {
        m.kind = FeatureKind::categorical;
        feats.push_back(std::move(m));
    }
    std::vector<std::string> names;
    for (const auto& c : classes) names.push_back(c.name);
    return std::make_shared<const FeatureSchema>(std::move(feats), "Label", std::move(names),
                                                 benign_class);
}

json DriftSpec::to_json() const {
    json meta = json::array();
    for (const auto& m : metadata_features)
        meta.push_back({{"name", m.name}, {"vocabulary", m.vocabulary}});
    json cls = json::array();
    for (const auto& c : classes) {
        json jc = {{"name", c.name},         {"mean", c.mean},
                   {"stddev", c.stddev},     {"shift", c.shift},
                   {"source_count", c.source_count}, {"target_count", c.target_count},
                   {"metadata_probs", c.metadata_probs}};
        if (!c.target_metadata_probs.empty()) jc["target_metadata_probs"] = c.target_metadata_probs;
        cls.push_back(std::move(jc));
    }
    json j = {{"continuous_features", continuous_features},
              {"metadata_features", meta},
              {"benign_class", benign_class},
              {"classes", cls},
              {"seed", seed}};
    if (target_seed) j["target_seed"] = *target_seed;
    return j;
}

DriftSpec DriftSpec::from_json(const json& j) {
    try {
        DriftSpec s;
        s.continuous_features = j.at("continuous_features").get<std::vector<std::string>>();
        if (j.contains("metadata_features")) {
            for (const auto& m : j.at("metadata_features")) {
                FeatureDescriptor f;
                f.name = m.at("name").get<std::string>();
                f.kind = FeatureKind::categorical;
                f.vocabulary = m.at("vocabulary").get<std::vector<std::string>>();
                s.metadata_features.push_back(std::move(f));
            }
        }
        const std::size_t d = s.continuous_features.size();
        auto vec_or_scalar = [d](const json& v, double dflt) {
            if (v.is_null()) return std::vector<double>(d, dflt);
            if (v.is_number()) return std::vector<double>(d, v.get<double>());
            return v.get<std::vector<double>>();
        };
        for (const auto& jc : j.at("classes")) {
            ClassDrift c;
            c.name = jc.at("name").get<std::string>();
            c.mean = vec_or_scalar(jc.value("mean", json()), 0.0);
            c.stddev = vec_or_scalar(jc.value("stddev", json()), 1.0);
            c.shift = vec_or_scalar(jc.value("shift", json()), 0.0);
            c.source_count = jc.value("source_count", std::size_t{0});
            c.target_count = jc.value("target_count", std::size_t{0});
            if (jc.contains("metadata_probs"))
                c.metadata_probs = jc.at("metadata_probs").get<std::vector<std::vector<double>>>();
            if (jc.contains("target_metadata_probs"))
                c.target_metadata_probs =
                    jc.at("target_metadata_probs").get<std::vector<std::vector<double>>>();
            if (c.metadata_probs.empty()) {
                for (const auto& m : s.metadata_features)
                    c.metadata_probs.emplace_back(m.vocabulary.size(), 1.0);
            }
            s.classes.push_back(std::move(c));
        }
        s.benign_class = j.value("benign_class", s.classes.empty() ? std::string() : s.classes[0].name);
        s.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("target_seed")) s.target_seed = j.at("target_seed").get<std::uint64_t>();
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed drift spec: ") + e.what());
    }
}

DriftSpec load_drift_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open drift spec: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("drift spec is not valid JSON: " + std::string(e.what()));
    }
    return DriftSpec::from_json(j);
}

namespace {

struct DomainDraw {
    std::vector<FlowRecord> records;
    std::vector<int> labels;
};

DomainDraw draw_domain(const DriftSpec& spec, bool target, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t d = spec.continuous_features.size();
    DomainDraw out;
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        const auto& cd = spec.classes[c];
        const std::size_t count = target ? cd.target_count : cd.source_count;
        const auto& probs =
            target && !cd.target_metadata_probs.empty() ? cd.target_metadata_probs : cd.metadata_probs;
        std::vector<std::discrete_distribution<int>> meta;
        for (const auto& p : probs) meta.emplace_back(p.begin(), p.end());
        for (std::size_t k = 0; k < count; ++k) {
            FlowRecord r;
            r.values.resize(d + meta.size());
            for (std::size_t f = 0; f < d; ++f) {
                const double mu = cd.mean[f] + (target ? cd.shift[f] : 0.0);
                r.values[f] = mu + cd.stddev[f] * normal(rng);
            }
            for (std::size_t m = 0; m < meta.size(); ++m) r.values[d + m] = meta[m](rng);
            out.records.push_back(std::move(r));
            out.labels.push_back(static_cast<int>(c));
        }
    }
    std::vector<std::size_t> order(out.records.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    DomainDraw shuffled;
    for (auto i : order) {
        shuffled.records.push_back(std::move(out.records[i]));
        shuffled.labels.push_back(out.labels[i]);
    }
    return shuffled;
}

}  // namespace

DriftBenchmark generate_drift_benchmark(const DriftSpec& spec) {
    spec.validate();
    const auto schema = spec.schema();
    auto src = draw_domain(spec, false, spec.seed);
    auto tgt = draw_domain(spec, true, spec.target_seed.value_or(derive_seed(spec.seed, "target")));
    for (std::size_t i = 0; i < src.records.size(); ++i) src.records[i].label = src.labels[i];
    return {Dataset::labeled(schema, std::move(src.records)),
            Dataset::unlabeled(schema, std::move(tgt.records), std::move(tgt.labels))};
}

}  // namespace flowadapt
