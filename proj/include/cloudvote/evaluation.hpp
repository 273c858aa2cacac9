#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "cloudvote/classifier.hpp"
#include "cloudvote/dataset.hpp"
#include "cloudvote/voting.hpp"

namespace cloudvote::evaluation {

// Undefined metrics (zero denominators) are std::nullopt, never 0.
struct ClassMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::size_t support = 0;  // truth items of this class
};

struct EvaluationReport {
    int classes = 0;
    std::size_t total = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::vector<std::size_t> confusion;  // classes x classes; row = truth, column = predicted
    std::vector<ClassMetrics> per_class;

    std::size_t at(int truth, int predicted) const {
        return confusion[static_cast<std::size_t>(truth - 1) * static_cast<std::size_t>(classes) +
                         static_cast<std::size_t>(predicted - 1)];
    }
};

using TruthMap = std::unordered_map<std::string, int>;

TruthMap truth_from_manifest(const dataset::DatasetManifest& manifest);

// Fills accuracy and per-class metrics from a confusion matrix.
EvaluationReport report_from_confusion(int classes, std::vector<std::size_t> confusion);

// Throws Errc::missing_truth naming the first id without a label.
EvaluationReport score(std::span<const voting::VoteOutcome> outcomes, const TruthMap& truth, int classes);
EvaluationReport score_labels(std::span<const std::string> image_ids, std::span<const int> predicted,
                              const TruthMap& truth, int classes);

struct BuiltinBackendConfig {
    std::string id;
    int input_side = 32;
    classifier::FeatureConfig features;
    classifier::TrainConfig train;
};

// Interchange file covering (at least) every test image of every split.
struct ExternalBackendConfig {
    std::string id;
    std::filesystem::path path;
};

using BackendConfig = std::variant<BuiltinBackendConfig, ExternalBackendConfig>;

std::string backend_id(const BackendConfig& config);

struct BackendResult {
    std::string id;
    EvaluationReport report;
};

struct RunResult {
    std::size_t index = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    EvaluationReport ensemble;
    std::vector<BackendResult> backends;
    std::vector<voting::VoteOutcome> outcomes;
};

struct ProtocolReport {
    std::string manifest_name;
    std::string plan;
    std::uint64_t seed = 0;
    std::vector<std::string> class_names;
    std::vector<RunResult> runs;
    double mean_accuracy = 0.0;                                 // ensemble, averaged over runs
    std::vector<std::pair<std::string, double>> backend_mean_accuracy;
    EvaluationReport pooled;                                    // confusion summed over runs
};

struct ProtocolOptions {
    std::size_t jobs = 1;
};

// Trains/predicts every backend on every split, votes, scores, and averages.
// Run r trains builtin backends with TrainConfig::seed + r.
ProtocolReport run_protocol(const dataset::DatasetManifest& manifest, const dataset::SplitPlan& plan,
                            std::span<const BackendConfig> backends, const ProtocolOptions& options = {});

// Same, over precomputed splits (e.g. from a split file).
ProtocolReport run_protocol(const dataset::DatasetManifest& manifest, std::span<const dataset::SplitPair> splits,
                            std::string plan_description, std::uint64_t seed,
                            std::span<const BackendConfig> backends, const ProtocolOptions& options = {});

std::string format_text(const ProtocolReport& report);
std::string format_kv(const ProtocolReport& report);
std::string format_text(const EvaluationReport& report, std::span<const std::string> class_names);
std::string format_kv(const EvaluationReport& report, std::span<const std::string> class_names);

}  // namespace cloudvote::evaluation
