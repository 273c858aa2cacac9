#include <cmath>
#include <numeric>

#include "doctest.h"

#include "cloudvote/dataset.hpp"
#include "cloudvote/error.hpp"
#include "cloudvote/evaluation.hpp"
#include "cloudvote/synthetic.hpp"
#include "cloudvote/text.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cloudvote;
using namespace cloudvote::evaluation;

namespace {

EvaluationReport score_vectors(const std::vector<int>& truth, const std::vector<int>& predicted, int classes) {
    std::vector<std::string> ids;
    TruthMap map;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ids.push_back("i" + std::to_string(i));
        map[ids.back()] = truth[i];
    }
    return score_labels(ids, predicted, map, classes);
}

BuiltinBackendConfig builtin(std::string id, int pool, int bins, std::uint64_t feature_seed) {
    BuiltinBackendConfig b;
    b.id = std::move(id);
    b.input_side = 16;
    b.features = classifier::FeatureConfig{pool, bins, feature_seed};
    b.train.seed = 1;
    return b;
}

// Writes a small separable fixture and returns its manifest.
dataset::DatasetManifest fixture(const testsupport::TempDir& dir, std::vector<int> per_class, int side = 16) {
    synthetic::FixtureSpec spec;
    spec.class_names.clear();
    for (std::size_t c = 0; c < per_class.size(); ++c)
        spec.class_names.push_back(std::vector<std::string>{"clear_sky", "thick_dark", "thick_white"}[c % 3] +
                                   std::to_string(c));
    spec.per_class = std::move(per_class);
    spec.side = side;
    synthetic::write_fixture(spec, dir.path());
    return dataset::ingest(dir.path(), "fixture");
}

}  // namespace

TEST_CASE("all correct gives a diagonal confusion") {
    const std::vector<int> truth{1, 2, 3, 1, 2, 3, 1, 2, 3, 1};
    const auto r = score_vectors(truth, truth, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.total == 10);
    for (int t = 1; t <= 3; ++t)
        for (int p = 1; p <= 3; ++p)
            if (t != p) CHECK(r.at(t, p) == 0);
}

TEST_CASE("constant predictor on a balanced two-class test") {
    const std::vector<int> truth{1, 1, 1, 1, 1, 2, 2, 2, 2, 2};
    const auto r = score_vectors(truth, std::vector<int>(10, 1), 2);
    CHECK(r.accuracy == 0.5);
    CHECK(r.per_class[0].recall == 1.0);
    CHECK(r.per_class[1].recall == 0.0);
    CHECK(r.per_class[0].precision == 0.5);
    CHECK_FALSE(r.per_class[1].precision.has_value());
    CHECK_FALSE(r.per_class[1].f1.has_value());
}

TEST_CASE("metrics match the tally oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const int x = trial == 0 ? 3 : 2 + static_cast<int>(rng.below(6));
        const std::size_t k = trial == 0 ? 30 : 1 + rng.below(60);
        std::vector<int> truth, pred;
        for (std::size_t i = 0; i < k; ++i) {
            truth.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(x))));
            pred.push_back(1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(x))));
        }
        const auto r = score_vectors(truth, pred, x);
        const auto t = oracle::tally(truth, pred, x);
        CHECK(r.accuracy == t.accuracy);
        std::size_t mass = 0;
        for (int a = 1; a <= x; ++a)
            for (int b = 1; b <= x; ++b) {
                CHECK(r.at(a, b) == t.counts[a - 1][b - 1]);
                mass += r.at(a, b);
            }
        CHECK(mass == k);
        for (int c = 0; c < x; ++c) {
            const auto& m = r.per_class[static_cast<std::size_t>(c)];
            CHECK(m.precision.has_value() == !std::isnan(t.precision[static_cast<std::size_t>(c)]));
            if (m.precision) CHECK(*m.precision == t.precision[static_cast<std::size_t>(c)]);
            CHECK(m.recall.has_value() == !std::isnan(t.recall[static_cast<std::size_t>(c)]));
            if (m.recall) CHECK(*m.recall == t.recall[static_cast<std::size_t>(c)]);
        }
    }
}

TEST_CASE("missing truth names the id") {
    std::vector<voting::VoteOutcome> outs(1);
    outs[0].image_id = "ghost.png";
    outs[0].dm = 1;
    try {
        score(outs, TruthMap{{"other", 1}}, 2);
        FAIL("expected missing_truth");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::missing_truth);
        CHECK(std::string(e.what()).find("ghost.png") != std::string::npos);
    }
}

TEST_CASE("kfold protocol on a separable fixture") {
    testsupport::TempDir dir("proto");
    const auto manifest = fixture(dir, {30, 30, 30});
    const std::vector<BackendConfig> backends{builtin("a", 4, 8, 1), builtin("b", 2, 16, 2), builtin("c", 3, 4, 3)};
    const auto report = run_protocol(manifest, dataset::parse_plan("kfold:5", 42), backends);
    REQUIRE(report.runs.size() == 5);
    CHECK(report.mean_accuracy == 1.0);
    std::size_t scored = 0;
    for (const auto& run : report.runs) {
        CHECK(run.test_size == 18);
        CHECK(run.ensemble.total == 18);
        scored += run.ensemble.total;
    }
    CHECK(report.pooled.total == scored);
    CHECK(report.pooled.total == 90);
}

TEST_CASE("single backend ensemble equals the backend") {
    testsupport::TempDir dir("solo");
    const auto manifest = fixture(dir, {12, 12, 12});
    auto weak = builtin("weak", 1, 2, 5);
    weak.train.max_epochs = 1;
    const std::vector<BackendConfig> backends{weak};
    const auto report = run_protocol(manifest, dataset::parse_plan("perclass:4:8:5", 9), backends);
    REQUIRE(report.runs.size() == 5);
    for (const auto& run : report.runs) {
        CHECK(run.ensemble.accuracy == run.backends[0].report.accuracy);
        CHECK(run.ensemble.confusion == run.backends[0].report.confusion);
    }
    CHECK(report.mean_accuracy == report.backend_mean_accuracy[0].second);
}

TEST_CASE("mean accuracy is the arithmetic mean of runs") {
    testsupport::TempDir dir("mean");
    const auto manifest = fixture(dir, {10, 10});
    auto weak = builtin("weak", 1, 0, 5);
    weak.train.max_epochs = 1;
    weak.train.learn_rate = 1e-6;
    const std::vector<BackendConfig> backends{weak, builtin("ok", 2, 2, 6)};
    const auto report = run_protocol(manifest, dataset::parse_plan("holdout:0.5:7", 3), backends);
    REQUIRE(report.runs.size() == 7);
    double sum = 0.0;
    for (const auto& run : report.runs) sum += run.ensemble.accuracy;
    CHECK(std::abs(report.mean_accuracy - sum / 7.0) <= 1e-12);
}

TEST_CASE("external backends are sliced per split") {
    testsupport::TempDir dir("external");
    const auto manifest = fixture(dir, {8, 8});
    prediction::PredictionMatrix oracle_net;
    oracle_net.backend_id = "perfect";
    oracle_net.classes = 2;
    for (auto it = manifest.items.rbegin(); it != manifest.items.rend(); ++it) {
        oracle_net.image_ids.push_back(it->path);
        oracle_net.posteriors.push_back(it->label == 1 ? 0.9 : 0.1);
        oracle_net.posteriors.push_back(it->label == 1 ? 0.1 : 0.9);
    }
    prediction::save_predictions(oracle_net, dir / "perfect.tsv");
    const std::vector<BackendConfig> backends{ExternalBackendConfig{"perfect", dir / "perfect.tsv"}};
    const auto report = run_protocol(manifest, dataset::parse_plan("kfold:4", 1), backends);
    CHECK(report.mean_accuracy == 1.0);
    for (const auto& run : report.runs)
        for (const auto& o : run.outcomes) CHECK(o.ds == 0.9);
}

TEST_CASE("parallel jobs give identical reports") {
    testsupport::TempDir dir("jobs");
    const auto manifest = fixture(dir, {10, 10, 10});
    const std::vector<BackendConfig> backends{builtin("a", 2, 4, 1), builtin("b", 1, 8, 2)};
    const auto plan = dataset::parse_plan("perclass:3:5:6", 11);
    const auto serial = run_protocol(manifest, plan, backends, ProtocolOptions{1});
    const auto parallel = run_protocol(manifest, plan, backends, ProtocolOptions{4});
    CHECK(format_kv(serial) == format_kv(parallel));
    CHECK(format_text(serial) == format_text(parallel));
}

TEST_CASE("report files embed the version and seed") {
    testsupport::TempDir dir("kv");
    const auto manifest = fixture(dir, {6, 6});
    const std::vector<BackendConfig> backends{builtin("a", 2, 4, 1)};
    const auto report = run_protocol(manifest, dataset::parse_plan("kfold:2", 123), backends);
    const auto kv = format_kv(report);
    CHECK(kv.find("tool_version=" + std::string(kToolVersion)) != std::string::npos);
    CHECK(kv.find("seed=123") != std::string::npos);
    CHECK(kv.find("plan=kfold:2") != std::string::npos);
    CHECK(format_text(report).find("123") != std::string::npos);
}
