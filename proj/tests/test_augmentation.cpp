#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "flowadapt/augmentation.hpp"
#include "flowadapt/error.hpp"
#include "flowadapt/rng.hpp"
#include "oracles.hpp"

using namespace flowadapt;
using oracles::schema_valid;

namespace {

// Benign around 0, DoS around 4, Bot around (0, 4); Protocol skewed per class.
Dataset labeled_set(const std::vector<std::size_t>& counts, std::uint64_t seed) {
    const auto schema = fixtures::small_schema();
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 0.7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double centers[3][2] = {{0.0, 0.0}, {4.0, 4.0}, {0.0, 4.0}};
    std::vector<FlowRecord> recs;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
            const double proto = u(rng) < 0.8 ? c : (c + 1) % 3;
            recs.push_back({{proto, centers[c][0] + z(rng), centers[c][1] + z(rng)}, c, Provenance::real});
        }
    return Dataset::labeled(schema, std::move(recs));
}

Dataset attack_slice(const Dataset& d) {
    std::vector<FlowRecord> recs;
    for (const auto& r : d.records())
        if (*r.label != 0) recs.push_back(r);
    return Dataset::labeled(d.schema_ptr(), std::move(recs));
}

}  // namespace

TEST(Minorities, ThresholdIsStrict) {
    // 4% Bot is a minority; 10% DoS is not; benign is never one.
    const auto d = labeled_set({86, 10, 4}, 1);
    const auto m = identify_minorities(d, 0.05);
    EXPECT_EQ(m.minority, std::vector<int>{2});
    EXPECT_TRUE(m.is_minority(2));
    EXPECT_FALSE(m.is_minority(1));
    EXPECT_FALSE(m.is_minority(0));
    EXPECT_DOUBLE_EQ(m.fractions[2], 0.04);

    const auto exact = labeled_set({90, 5, 5}, 1);
    EXPECT_TRUE(identify_minorities(exact, 0.05).minority.empty());
}

TEST(Minorities, AbsentClassIsNotMinority) {
    const auto d = labeled_set({98, 2, 0}, 2);
    EXPECT_EQ(identify_minorities(d, 0.05).minority, std::vector<int>{1});
}

TEST(Generator, SynthesisIsDeterministicAndSchemaValid) {
    const auto d = attack_slice(labeled_set({0, 40, 25}, 3));
    GeneratorConfig cfg;
    cfg.seed = 5;
    const auto g = fit_generator(d, cfg);
    ASSERT_EQ(g.classes.size(), 2u);
    for (int label : {1, 2}) {
        const auto a = synthesize(g, label, 200, 17);
        const auto b = synthesize(g, label, 200, 17);
        ASSERT_EQ(a.size(), 200u);
        EXPECT_EQ(a.records(), b.records());
        EXPECT_TRUE(schema_valid(a));
        for (const auto& r : a.records()) {
            EXPECT_EQ(*r.label, label);
            EXPECT_EQ(r.origin, Provenance::augmented);
        }
        EXPECT_NE(synthesize(g, label, 200, 18).records(), a.records());
    }
    EXPECT_THROW(synthesize(g, 0, 5, 1), ContractError);
}

TEST(Generator, SamplesTrackClassStatistics) {
    const auto d = attack_slice(labeled_set({0, 300, 0}, 4));
    GeneratorConfig cfg;
    cfg.components_per_class = 2;
    const auto g = fit_generator(d, cfg);
    const auto s = synthesize(g, 1, 4000, 2);
    double mean = 0.0;
    std::size_t tcp_like = 0;
    for (const auto& r : s.records()) {
        mean += r.values[1];
        tcp_like += r.values[0] == 1.0;
    }
    mean /= static_cast<double>(s.size());
    EXPECT_NEAR(mean, 4.0, 0.15);
    EXPECT_NEAR(static_cast<double>(tcp_like) / static_cast<double>(s.size()), 0.8, 0.06);
}

TEST(Generator, SmallClassesReduceComponentsOrFallBack) {
    const auto schema = fixtures::small_schema();
    std::vector<FlowRecord> recs{{{1, 4.0, 4.0}, 1, Provenance::real},
                                 {{2, 0.0, 4.0}, 2, Provenance::real},
                                 {{2, 0.2, 3.9}, 2, Provenance::real}};
    const auto d = Dataset::labeled(schema, recs);
    GeneratorConfig cfg;
    cfg.components_per_class = 3;
    const auto g = fit_generator(d, cfg);
    const auto* dos = g.find(1);
    const auto* bot = g.find(2);
    ASSERT_NE(dos, nullptr);
    ASSERT_NE(bot, nullptr);
    EXPECT_TRUE(dos->fallback);
    EXPECT_TRUE(bot->components_reduced);
    EXPECT_EQ(bot->mixture.components(), 2u);
    EXPECT_FALSE(g.warnings.empty());
    const auto s = synthesize(g, 1, 20, 3);
    EXPECT_TRUE(schema_valid(s));
    for (const auto& r : s.records()) {
        EXPECT_EQ(r.values[0], 1.0);
        EXPECT_NEAR(r.values[1], 4.0, 0.1);
    }
}

TEST(Generator, JsonRoundTripReproducesSamples) {
    const auto d = attack_slice(labeled_set({0, 30, 30}, 5));
    const auto g = fit_generator(d, GeneratorConfig{});
    const auto back = GeneratorModel::from_json(nlohmann::json::parse(g.to_json().dump()), d.schema_ptr());
    EXPECT_EQ(synthesize(back, 2, 50, 9).records(), synthesize(g, 2, 50, 9).records());
}

TEST(Filter, RetainedSetGrowsWithThreshold) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto original = labeled_set({300, 60, 30}, seed);
        LogisticConfig lc;
        lc.seed = seed;
        const auto filter = train_logistic(original, lc);
        GeneratorConfig gc;
        gc.seed = seed;
        const auto g = fit_generator(attack_slice(original), gc);
        const auto syn = synthesize(g, 2, 300, seed);
        const auto p = benign_probability(filter, syn);
        std::size_t prev = 0;
        for (double t : {0.0, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
            const auto r = filter_synthetic(syn, filter, t);
            EXPECT_GE(r.retained.size(), prev) << "seed " << seed << " t " << t;
            prev = r.retained.size();
            std::size_t expect = 0;
            for (Eigen::Index i = 0; i < p.size(); ++i) expect += p(i) < t;
            EXPECT_EQ(r.retained.size(), expect);
            EXPECT_EQ(r.generated_per_class[2], 300u);
            EXPECT_EQ(r.retained_per_class[2], expect);
        }
        EXPECT_EQ(filter_synthetic(syn, filter, 0.0).retained.size(), 0u);
    }
}

TEST(Filter, RejectsBenignSynthetics) {
    const auto original = labeled_set({100, 30, 30}, 1);
    const auto filter = train_logistic(original, LogisticConfig{});
    EXPECT_THROW(filter_synthetic(original, filter, 0.5), ContractError);
}

TEST(Assemble, ConcatenatesAndChecksSchema) {
    const auto a = labeled_set({20, 5, 5}, 1);
    const auto b = labeled_set({0, 3, 2}, 2);
    const auto g = fit_generator(attack_slice(a), GeneratorConfig{});
    const auto s = synthesize(g, 2, 7, 1);
    const auto t = assemble_training_set(a, b, s);
    EXPECT_EQ(t.size(), 30u + 5u + 7u);
    EXPECT_EQ(t.provenance(), Provenance::augmented);

    auto other = std::make_shared<const FeatureSchema>(
        std::vector<FeatureDescriptor>{{"x", FeatureKind::continuous, {}, ""}}, "Label",
        std::vector<std::string>{"Benign", "DoS"}, "Benign");
    const auto foreign = Dataset::labeled(other, {{{1.0}, 1, Provenance::real}});
    EXPECT_THROW(assemble_training_set(a, foreign, s), ContractError);
}

TEST(AugmentMinorities, SynthesizesRequestedRatioAndReports) {
    const auto original = labeled_set({400, 60, 12}, 6);
    AugmentationConfig cfg;
    cfg.ratio = 2.0;
    const auto out = augment_minorities(original, original, cfg);
    EXPECT_EQ(out.minorities.minority, std::vector<int>{2});
    ASSERT_EQ(out.report.classes.size(), 1u);
    const auto& c = out.report.classes[0];
    EXPECT_EQ(c.name, "Bot");
    EXPECT_EQ(c.prior_count, 12u);
    EXPECT_EQ(c.generated, 24u);
    EXPECT_LE(c.retained, c.generated);
    EXPECT_EQ(out.retained.size(), c.retained);
    if (c.retained > 0) {
        ASSERT_TRUE(c.w2.has_value());
        EXPECT_GE(*c.w2, 0.0);
    }
    EXPECT_TRUE(schema_valid(out.retained));

    const auto again = augment_minorities(original, original, cfg);
    EXPECT_EQ(again.retained.records(), out.retained.records());
}

TEST(AugmentMinorities, ConfigParsing) {
    const auto c = AugmentationConfig::from_json(nlohmann::json::parse(R"({"ratio": 1.5, "components_per_class": 4})"));
    EXPECT_EQ(c.ratio, 1.5);
    EXPECT_EQ(c.generator.components_per_class, 4u);
    EXPECT_THROW(AugmentationConfig::from_json(nlohmann::json::parse(R"({"ratio": -1})")), Error);
}

TEST(Minorities, CicStyleCountsFlagRareClasses) {
    // Class sizes of a 100k CIC-IDS 2017 subsample.
    const std::vector<std::pair<std::string, std::size_t>> counts{
        {"Benign", 37937},       {"Bot", 1956},        {"DDoS", 11555},         {"DoS GoldenEye", 9078},
        {"DoS Hulk", 12131},     {"Slowhttptest", 5499}, {"Slowloris", 5796},    {"FTP-BruteForce", 7935},
        {"Infiltration", 36},    {"SSH-BruteForce", 5897}, {"Web Attack", 2180}};
    std::vector<std::string> classes;
    for (const auto& [name, n] : counts) classes.push_back(name);
    auto schema = std::make_shared<const FeatureSchema>(
        std::vector<FeatureDescriptor>{{"PSH Flag Count", FeatureKind::continuous, {}, ""}}, "Label", classes, "Benign");
    std::vector<FlowRecord> recs;
    for (std::size_t c = 0; c < counts.size(); ++c)
        for (std::size_t i = 0; i < counts[c].second; ++i) recs.push_back({{0.0}, static_cast<int>(c), Provenance::real});
    const auto d = Dataset::labeled(schema, std::move(recs));
    ASSERT_EQ(d.size(), 100000u);
    const auto m = identify_minorities(d, 0.05);
    EXPECT_EQ(m.minority, (std::vector<int>{1, 8, 10}));
}

TEST(Generator, PerComponentProtocolUsageIsRecovered) {
    // Two far-apart modes; one mostly TCP, the other mostly UDP.
    const auto schema = fixtures::small_schema();
    Rng rng(50);
    std::normal_distribution<double> z(0.0, 0.3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<FlowRecord> recs;
    for (int i = 0; i < 400; ++i) {
        const bool first = i < 200;
        const double proto = first ? (u(rng) < 0.9 ? 0 : 1) : (u(rng) < 0.7 ? 1 : 2);
        recs.push_back({{proto, (first ? 0.0 : 8.0) + z(rng), z(rng)}, 2, Provenance::real});
    }
    GeneratorConfig cfg;
    cfg.components_per_class = 2;
    const auto g = fit_generator(Dataset::labeled(schema, recs), cfg);
    const auto* bot = g.find(2);
    ASSERT_NE(bot, nullptr);
    const std::size_t lo = bot->mixture.means(0, 0) < bot->mixture.means(1, 0) ? 0 : 1;
    const std::size_t hi = 1 - lo;
    const auto& pl = bot->metadata[lo][0];
    const auto& ph = bot->metadata[hi][0];
    EXPECT_NEAR(pl[0], 0.9, 0.1);
    EXPECT_NEAR(pl[1], 0.1, 0.1);
    EXPECT_NEAR(pl[2], 0.0, 0.1);
    EXPECT_NEAR(ph[0], 0.0, 0.1);
    EXPECT_NEAR(ph[1], 0.7, 0.1);
    EXPECT_NEAR(ph[2], 0.3, 0.1);
}

TEST(Generator, SyntheticStaysCloserToItsClassThanToOthers) {
    const auto real = attack_slice(labeled_set({0, 1000, 1000}, 51));
    const auto fresh = attack_slice(labeled_set({0, 1000, 1000}, 52));
    const auto g = fit_generator(real, GeneratorConfig{});
    auto slice = [](const Dataset& d, int c) {
        std::vector<FlowRecord> out;
        for (const auto& r : d.records())
            if (*r.label == c) out.push_back(r);
        return Dataset::labeled(d.schema_ptr(), std::move(out));
    };
    for (int c : {1, 2}) {
        const auto syn = synthesize(g, c, 1000, 7);
        const auto same = slice(fresh, c);
        const auto other = slice(fresh, c == 1 ? 2 : 1);
        for (std::size_t f : {1u, 2u}) {
            std::vector<double> s, a, o;
            for (const auto& r : syn.records()) s.push_back(r.values[f]);
            for (const auto& r : same.records()) a.push_back(r.values[f]);
            for (const auto& r : other.records()) o.push_back(r.values[f]);
            // Feature 2 is shared by both classes' centers, so only require
            // separation where the classes differ.
            if (f == 1) EXPECT_LT(emd_1d(s, a), emd_1d(a, o)) << "class " << c;
            EXPECT_LT(emd_1d(s, a), 0.15) << "class " << c << " feature " << f;
        }
    }
}

TEST(Filter, RemovesExactlyTheBenignLookingHalf) {
    // Benign at (0,0), attacks at (4,4): a wide gap puts the filter's
    // boundary between them.
    const auto schema = fixtures::small_schema();
    Rng rng(53);
    std::normal_distribution<double> z(0.0, 0.3);
    std::vector<FlowRecord> train;
    for (int i = 0; i < 200; ++i) train.push_back({{0, z(rng), z(rng)}, 0, Provenance::real});
    for (int i = 0; i < 200; ++i) train.push_back({{0, 4 + z(rng), 4 + z(rng)}, 1, Provenance::real});
    const auto filter = train_logistic(Dataset::labeled(schema, train), LogisticConfig{});

    std::vector<FlowRecord> syn;
    for (int i = 0; i < 50; ++i) syn.push_back({{0, z(rng), z(rng)}, 1, Provenance::augmented});
    for (int i = 0; i < 50; ++i) syn.push_back({{0, 4 + z(rng), 4 + z(rng)}, 1, Provenance::augmented});
    const auto batch = Dataset::labeled(schema, syn, Provenance::augmented);
    const auto p = benign_probability(filter, batch);
    for (Eigen::Index i = 0; i < 50; ++i) ASSERT_GT(p(i), 0.5);
    for (Eigen::Index i = 50; i < 100; ++i) ASSERT_LT(p(i), 0.5);
    const auto r = filter_synthetic(batch, filter, 0.5);
    ASSERT_EQ(r.retained.size(), 50u);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(r.retained.record(i), batch.record(50 + i));
    EXPECT_EQ(filter_synthetic(batch, filter, 1.0).retained.size(), 100u);
}

TEST(Generator, ZeroCountAndRatioArithmetic) {
    const auto d = attack_slice(labeled_set({0, 100, 0}, 54));
    const auto g = fit_generator(d, GeneratorConfig{});
    EXPECT_TRUE(synthesize(g, 1, 0, 1).empty());
    AugmentationConfig cfg;
    cfg.minority_threshold = 0.5;
    const auto with_benign = labeled_set({300, 100, 0}, 55);
    const auto out = augment_minorities(with_benign, with_benign, cfg);
    ASSERT_EQ(out.report.classes.size(), 1u);
    EXPECT_EQ(out.report.classes[0].generated, 300u);
}
