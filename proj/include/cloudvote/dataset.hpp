#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cloudvote::dataset {

struct ClassInfo {
    int index = 0;  // 1-based
    std::string label;
    std::size_t count = 0;
};

struct ImageRecord {
    std::string path;  // relative to the manifest's source root, '/'-separated; doubles as the image id
    int label = 0;     // ClassInfo::index
};

// Labeled image inventory. Class indices are 1..x in lexicographic order of
// the class directory names; items are grouped by class in that order.
struct DatasetManifest {
    std::string name;
    std::vector<ClassInfo> classes;
    std::vector<ImageRecord> items;
    std::filesystem::path source_root;

    int class_count() const noexcept { return static_cast<int>(classes.size()); }
    std::size_t size() const noexcept { return items.size(); }
    std::vector<std::string> class_labels() const;
    std::filesystem::path resolve(const ImageRecord& item) const { return source_root / item.path; }
};

// Throws Errc::schema when an invariant is broken (non-contiguous indices,
// count mismatch, duplicate path, label out of range).
void validate(const DatasetManifest& manifest);

// Builds a manifest from in-memory records; counts are derived from the items.
DatasetManifest make_manifest(std::string name, std::filesystem::path source_root,
                              std::vector<std::string> class_labels, std::vector<ImageRecord> items);

// One subdirectory per class, each holding decodable images.
DatasetManifest ingest(const std::filesystem::path& root, std::string name);

// `seed`, when given, is recorded as a "#seed=" header.
std::string serialize_manifest(const DatasetManifest& manifest, std::optional<std::uint64_t> seed = {});
DatasetManifest parse_manifest(const std::vector<std::string>& lines);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   std::optional<std::uint64_t> seed = {});
// A relative source_root is resolved against the manifest file's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

struct KFold {
    int folds = 5;
};

struct PerClassCounts {
    std::size_t train = 40;
    std::size_t test = 45;
};

// Per class, round(train_fraction * count) items train and the rest test.
struct Holdout {
    double train_fraction = 0.5;
};

struct SplitPlan {
    std::variant<KFold, PerClassCounts, Holdout> kind = KFold{};
    std::uint64_t seed = 0;
    int runs = 1;  // ignored by k-fold, which always yields `folds` pairs
};

// "kfold:K" | "perclass:TRAIN:TEST:RUNS" | "holdout:FRACTION[:RUNS]"
SplitPlan parse_plan(std::string_view spec, std::uint64_t seed);
std::string describe(const SplitPlan& plan);

// Item indices into DatasetManifest::items, ascending.
struct SplitPair {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified, seeded and deterministic. Throws Errc::infeasible naming the
// offending class when the plan cannot be satisfied.
std::vector<SplitPair> make_splits(const DatasetManifest& manifest, const SplitPlan& plan);

struct SplitFile {
    std::string plan;
    std::uint64_t seed = 0;
    std::vector<SplitPair> splits;
};

std::string serialize_splits(const DatasetManifest& manifest, const SplitPlan& plan,
                             const std::vector<SplitPair>& splits);
SplitFile parse_splits(const DatasetManifest& manifest, const std::vector<std::string>& lines);
SplitFile load_splits(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace cloudvote::dataset
