#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "flowadapt/dataset.hpp"
#include "flowadapt/pipeline.hpp"

namespace fixtures {

using namespace flowadapt;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "flowadapt-XXXXXX").string();
        if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

/// Protocol (categorical), Bytes and Packets (continuous); three classes.
inline SchemaPtr small_schema() {
    std::vector<FeatureDescriptor> f{
        {"Protocol", FeatureKind::categorical, {"TCP", "UDP", "ICMP"}, ""},
        {"Bytes", FeatureKind::continuous, {}, "B"},
        {"Packets", FeatureKind::continuous, {}, ""},
    };
    return std::make_shared<const FeatureSchema>(std::move(f), "Label",
                                                 std::vector<std::string>{"Benign", "DoS", "Bot"}, "Benign");
}

/// Small benchmark for pipeline tests: a shifted minority class and a
/// target-only cluster.
inline DriftSpec tiny_spec(std::uint64_t seed = 11) {
    auto spec = DriftSpec::from_json(nlohmann::json::parse(R"({
      "benign_class": "Benign",
      "continuous_features": ["f0", "f1", "f2"],
      "metadata_features": [{"name": "Protocol", "vocabulary": ["TCP", "UDP"]}],
      "classes": [
        {"name": "Benign", "mean": [0, 0, 0], "stddev": 1, "shift": [0.2, 0, 0],
         "source_count": 500, "target_count": 500, "metadata_probs": [[0.7, 0.3]]},
        {"name": "DoS", "mean": [4, 4, 0], "stddev": 1, "shift": [0.5, 0, 0],
         "source_count": 250, "target_count": 250, "metadata_probs": [[0.9, 0.1]]},
        {"name": "Bot", "mean": [0, 4, 4], "stddev": 1, "shift": [0, -2.5, -2.5],
         "source_count": 30, "target_count": 60, "metadata_probs": [[0.5, 0.5]]},
        {"name": "Novel", "mean": [4, 0, 4], "stddev": 1, "shift": 0,
         "source_count": 0, "target_count": 30, "metadata_probs": [[0.8, 0.2]]}
      ]
    })"));
    spec.seed = seed;
    return spec;
}

inline RunConfig tiny_run(Strategy strategy, std::optional<double> budget = 0.05, std::uint64_t seed = 3) {
    RunConfig c;
    c.run_id = "tiny";
    c.data.drift = tiny_spec();
    c.strategy = strategy;
    c.budget = budget;
    c.seed = seed;
    c.classifier.hidden = {16};
    c.classifier.epochs = 15;
    c.classifier.batch_size = 64;
    c.gmm.components = 4;
    c.probe_size = 50;
    return c;
}

inline std::filesystem::path repo_path(const std::string& rel) {
    return std::filesystem::path(FLOWADAPT_SOURCE_DIR) / rel;
}

}  // namespace fixtures
