#include "cloudvote/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "cloudvote/error.hpp"
#include "cloudvote/preprocess.hpp"
#include "cloudvote/rng.hpp"
#include "cloudvote/text.hpp"

namespace fs = std::filesystem;

namespace cloudvote::dataset {

namespace {

bool valid_label(std::string_view label) {
    return !label.empty() && !text::has_control_chars(label) && label.find(',') == std::string_view::npos;
}

bool valid_path(std::string_view path) {
    return !path.empty() && !text::has_control_chars(path);
}

std::vector<std::vector<std::size_t>> items_by_class(const DatasetManifest& manifest) {
    std::vector<std::vector<std::size_t>> groups(manifest.classes.size());
    for (std::size_t i = 0; i < manifest.items.size(); ++i) {
        groups[static_cast<std::size_t>(manifest.items[i].label - 1)].push_back(i);
    }
    return groups;
}

[[noreturn]] void infeasible(const ClassInfo& cls, const std::string& why) {
    throw Error(Errc::infeasible, "class '" + cls.label + "' (index " + std::to_string(cls.index) + "): " + why);
}

}  // namespace

std::vector<std::string> DatasetManifest::class_labels() const {
    std::vector<std::string> labels;
    labels.reserve(classes.size());
    for (const auto& c : classes) labels.push_back(c.label);
    return labels;
}

void validate(const DatasetManifest& manifest) {
    if (manifest.classes.empty()) throw Error(Errc::schema, "manifest has no classes");
    std::vector<std::size_t> counts(manifest.classes.size(), 0);
    for (std::size_t i = 0; i < manifest.classes.size(); ++i) {
        const auto& c = manifest.classes[i];
        if (c.index != static_cast<int>(i) + 1) {
            throw Error(Errc::schema, "class indices must be contiguous from 1; found " + std::to_string(c.index) +
                                          " at position " + std::to_string(i + 1));
        }
        if (!valid_label(c.label)) throw Error(Errc::schema, "invalid class label '" + c.label + "'");
    }
    std::set<std::string_view> seen;
    for (const auto& item : manifest.items) {
        if (item.label < 1 || item.label > manifest.class_count()) {
            throw Error(Errc::schema, "item '" + item.path + "' has label " + std::to_string(item.label) +
                                          " outside 1.." + std::to_string(manifest.class_count()));
        }
        if (!valid_path(item.path)) throw Error(Errc::schema, "invalid item path '" + item.path + "'");
        if (!seen.insert(item.path).second) throw Error(Errc::schema, "duplicate item path '" + item.path + "'");
        ++counts[static_cast<std::size_t>(item.label - 1)];
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& c = manifest.classes[i];
        if (counts[i] == 0) throw Error(Errc::schema, "class '" + c.label + "' has no items");
        if (counts[i] != c.count) {
            throw Error(Errc::schema, "class '" + c.label + "' declares " + std::to_string(c.count) +
                                          " items but has " + std::to_string(counts[i]));
        }
    }
}

DatasetManifest make_manifest(std::string name, fs::path source_root, std::vector<std::string> class_labels,
                              std::vector<ImageRecord> items) {
    DatasetManifest m;
    m.name = std::move(name);
    m.source_root = std::move(source_root);
    for (std::size_t i = 0; i < class_labels.size(); ++i) {
        m.classes.push_back({static_cast<int>(i) + 1, std::move(class_labels[i]), 0});
    }
    for (const auto& item : items) {
        if (item.label >= 1 && item.label <= m.class_count()) ++m.classes[static_cast<std::size_t>(item.label - 1)].count;
    }
    m.items = std::move(items);
    validate(m);
    return m;
}

DatasetManifest ingest(const fs::path& root, std::string name) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw Error(Errc::ingest, "'" + root.string() + "' is not a directory");

    std::vector<std::string> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        const std::string dir = entry.path().filename().string();
        if (entry.is_directory() && !dir.starts_with('.')) class_dirs.push_back(dir);
    }
    if (class_dirs.empty()) throw Error(Errc::ingest, "'" + root.string() + "' contains no class directories");
    std::sort(class_dirs.begin(), class_dirs.end());

    std::vector<ImageRecord> items;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        const std::string& cls = class_dirs[c];
        if (!valid_label(cls)) throw Error(Errc::ingest, "class directory name '" + cls + "' is not a valid label");
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(root / cls)) {
            if (!entry.is_regular_file()) continue;
            const std::string file = entry.path().filename().string();
            if (file.starts_with('.') || !preprocess::is_decodable(entry.path())) continue;
            if (!valid_path(file)) throw Error(Errc::ingest, "file name '" + file + "' in class '" + cls + "' is not usable as an id");
            files.push_back(file);
        }
        if (files.empty()) throw Error(Errc::ingest, "class '" + cls + "' contains no decodable images");
        std::sort(files.begin(), files.end());
        for (const auto& f : files) items.push_back({cls + "/" + f, static_cast<int>(c) + 1});
    }
    return make_manifest(std::move(name), root, std::move(class_dirs), std::move(items));
}

std::string serialize_manifest(const DatasetManifest& manifest, std::optional<std::uint64_t> seed) {
    validate(manifest);
    std::string out;
    out += "#manifest=" + manifest.name + "\n";
    out += "#source_root=" + manifest.source_root.generic_string() + "\n";
    out += "#tool_version=" + std::string(kToolVersion) + "\n";
    if (seed) out += "#seed=" + std::to_string(*seed) + "\n";
    for (const auto& c : manifest.classes) {
        out += "class\t" + std::to_string(c.index) + "\t" + c.label + "\t" + std::to_string(c.count) + "\n";
    }
    for (const auto& item : manifest.items) {
        const auto& cls = manifest.classes[static_cast<std::size_t>(item.label - 1)];
        out += std::to_string(item.label) + "\t" + cls.label + "\t" + item.path + "\n";
    }
    return out;
}

DatasetManifest parse_manifest(const std::vector<std::string>& lines) {
    DatasetManifest m;
    bool have_name = false;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string_view line = lines[ln];
        const std::string where = "manifest line " + std::to_string(ln + 1);
        if (line.empty()) continue;
        std::string_view key, value;
        if (text::parse_header(line, key, value)) {
            if (key == "manifest") {
                m.name = value;
                have_name = true;
            } else if (key == "source_root") {
                m.source_root = fs::path(std::string(value));
            }
            continue;
        }
        if (line.front() == '#') continue;
        const auto fields = text::split(line, '\t');
        if (fields.size() == 4 && fields[0] == "class") {
            ClassInfo c;
            c.index = static_cast<int>(text::parse_int(fields[1], where));
            c.label = fields[2];
            c.count = static_cast<std::size_t>(text::parse_uint(fields[3], where));
            m.classes.push_back(std::move(c));
        } else if (fields.size() == 3) {
            ImageRecord item;
            item.label = static_cast<int>(text::parse_int(fields[0], where));
            item.path = fields[2];
            if (item.label >= 1 && item.label <= m.class_count() &&
                fields[1] != m.classes[static_cast<std::size_t>(item.label - 1)].label) {
                throw Error(Errc::schema, where + ": label name '" + std::string(fields[1]) +
                                              "' does not match class " + std::to_string(item.label));
            }
            m.items.push_back(std::move(item));
        } else {
            throw Error(Errc::schema, where + ": expected a class header or an item record");
        }
    }
    if (!have_name) throw Error(Errc::schema, "manifest is missing the #manifest= header");
    validate(m);
    return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path, std::optional<std::uint64_t> seed) {
    text::write_file(path, serialize_manifest(manifest, seed));
}

DatasetManifest load_manifest(const fs::path& path) {
    DatasetManifest m = parse_manifest(text::read_lines(path));
    if (m.source_root.is_relative()) m.source_root = (path.parent_path() / m.source_root).lexically_normal();
    return m;
}

SplitPlan parse_plan(std::string_view spec, std::uint64_t seed) {
    const auto parts = text::split(spec, ':');
    SplitPlan plan;
    plan.seed = seed;
    auto bad = [&](const std::string& why) {
        return Error(Errc::usage, "invalid plan '" + std::string(spec) + "': " + why);
    };
    try {
        if (parts[0] == "kfold" && parts.size() == 2) {
            plan.kind = KFold{static_cast<int>(text::parse_int(parts[1], "fold count"))};
        } else if (parts[0] == "perclass" && parts.size() == 4) {
            plan.kind = PerClassCounts{static_cast<std::size_t>(text::parse_uint(parts[1], "train count")),
                                       static_cast<std::size_t>(text::parse_uint(parts[2], "test count"))};
            plan.runs = static_cast<int>(text::parse_int(parts[3], "run count"));
        } else if (parts[0] == "holdout" && (parts.size() == 2 || parts.size() == 3)) {
            plan.kind = Holdout{text::parse_double(parts[1], "train fraction")};
            if (parts.size() == 3) plan.runs = static_cast<int>(text::parse_int(parts[2], "run count"));
        } else {
            throw bad("expected kfold:K, perclass:TRAIN:TEST:RUNS or holdout:FRACTION[:RUNS]");
        }
    } catch (const Error& e) {
        if (e.code() == Errc::usage) throw;
        throw bad(e.what());
    }
    if (plan.runs < 1) throw bad("runs must be >= 1");
    return plan;
}

std::string describe(const SplitPlan& plan) {
    return std::visit(
        [&](const auto& kind) -> std::string {
            using T = std::decay_t<decltype(kind)>;
            if constexpr (std::is_same_v<T, KFold>) {
                return "kfold:" + std::to_string(kind.folds);
            } else if constexpr (std::is_same_v<T, PerClassCounts>) {
                return "perclass:" + std::to_string(kind.train) + ":" + std::to_string(kind.test) + ":" +
                       std::to_string(plan.runs);
            } else {
                return "holdout:" + text::format_shortest(kind.train_fraction) + ":" + std::to_string(plan.runs);
            }
        },
        plan.kind);
}

std::vector<SplitPair> make_splits(const DatasetManifest& manifest, const SplitPlan& plan) {
    validate(manifest);
    const auto groups = items_by_class(manifest);
    std::vector<SplitPair> result;

    if (const auto* kf = std::get_if<KFold>(&plan.kind)) {
        const int k = kf->folds;
        if (k < 2) throw Error(Errc::infeasible, "k-fold needs at least 2 folds, got " + std::to_string(k));
        if (manifest.size() < static_cast<std::size_t>(k)) {
            throw Error(Errc::infeasible, "k-fold with " + std::to_string(k) + " folds needs at least " +
                                              std::to_string(k) + " items, manifest has " +
                                              std::to_string(manifest.size()));
        }
        // Per-class shuffle, then round-robin. The cursor carries over between
        // classes so overall fold sizes stay within one of each other too.
        std::vector<int> fold_of(manifest.size(), 0);
        Rng rng(plan.seed);
        std::size_t cursor = 0;
        for (auto group : groups) {
            rng.shuffle(std::span<std::size_t>(group));
            for (std::size_t idx : group) fold_of[idx] = static_cast<int>(cursor++ % static_cast<std::size_t>(k));
        }
        result.resize(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            for (int f = 0; f < k; ++f) {
                auto& pair = result[static_cast<std::size_t>(f)];
                (fold_of[i] == f ? pair.test : pair.train).push_back(i);
            }
        }
        return result;
    }

    if (plan.runs < 1) throw Error(Errc::infeasible, "runs must be >= 1");

    for (int run = 0; run < plan.runs; ++run) {
        Rng rng(plan.seed + static_cast<std::uint64_t>(run));
        SplitPair pair;
        for (std::size_t c = 0; c < groups.size(); ++c) {
            const auto& cls = manifest.classes[c];
            auto group = groups[c];
            std::size_t n_train = 0;
            std::size_t n_test = 0;
            if (const auto* pc = std::get_if<PerClassCounts>(&plan.kind)) {
                if (pc->train < 1 || pc->test < 1) {
                    throw Error(Errc::infeasible, "per-class plan needs train >= 1 and test >= 1");
                }
                if (group.size() < pc->train + pc->test) {
                    infeasible(cls, "has " + std::to_string(group.size()) + " items, plan needs " +
                                        std::to_string(pc->train) + " train + " + std::to_string(pc->test) + " test");
                }
                n_train = pc->train;
                n_test = pc->test;
            } else {
                const double f = std::get<Holdout>(plan.kind).train_fraction;
                if (!(f > 0.0 && f < 1.0)) {
                    throw Error(Errc::infeasible, "holdout fraction must lie in (0, 1), got " + text::format_shortest(f));
                }
                if (group.size() < 2) infeasible(cls, "holdout needs at least 2 items per class");
                const auto rounded = static_cast<std::size_t>(std::llround(f * static_cast<double>(group.size())));
                n_train = std::clamp<std::size_t>(rounded, 1, group.size() - 1);
                n_test = group.size() - n_train;
            }
            rng.shuffle(std::span<std::size_t>(group));
            pair.train.insert(pair.train.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_train));
            pair.test.insert(pair.test.end(), group.begin() + static_cast<std::ptrdiff_t>(n_train),
                             group.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
        }
        std::sort(pair.train.begin(), pair.train.end());
        std::sort(pair.test.begin(), pair.test.end());
        result.push_back(std::move(pair));
    }
    return result;
}

std::string serialize_splits(const DatasetManifest& manifest, const SplitPlan& plan,
                             const std::vector<SplitPair>& splits) {
    std::string out;
    out += "#tool_version=" + std::string(kToolVersion) + "\n";
    out += "#manifest=" + manifest.name + "\n";
    out += "#plan=" + describe(plan) + "\n";
    out += "#seed=" + std::to_string(plan.seed) + "\n";
    out += "#runs=" + std::to_string(splits.size()) + "\n";
    for (std::size_t r = 0; r < splits.size(); ++r) {
        out += "#run=" + std::to_string(r) + "\n";
        std::vector<char> role(manifest.size(), 0);
        for (auto i : splits[r].train) role[i] = 'r';
        for (auto i : splits[r].test) role[i] = 'e';
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            if (role[i] == 0) continue;
            out += manifest.items[i].path;
            out += role[i] == 'r' ? "\ttrain\n" : "\ttest\n";
        }
    }
    return out;
}

SplitFile parse_splits(const DatasetManifest& manifest, const std::vector<std::string>& lines) {
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < manifest.size(); ++i) index.emplace(manifest.items[i].path, i);

    SplitFile file;
    std::size_t declared_runs = 0;
    bool have_runs = false;
    std::vector<std::vector<char>> roles;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string_view line = lines[ln];
        const std::string where = "split line " + std::to_string(ln + 1);
        if (line.empty()) continue;
        std::string_view key, value;
        if (text::parse_header(line, key, value)) {
            if (key == "plan") file.plan = value;
            else if (key == "seed") file.seed = text::parse_uint(value, where);
            else if (key == "runs") {
                declared_runs = text::parse_uint(value, where);
                have_runs = true;
            } else if (key == "run") {
                if (text::parse_uint(value, where) != roles.size()) {
                    throw Error(Errc::schema, where + ": runs must be numbered consecutively from 0");
                }
                roles.emplace_back(manifest.size(), 0);
            }
            continue;
        }
        const auto fields = text::split(line, '\t');
        if (fields.size() != 2 || (fields[1] != "train" && fields[1] != "test")) {
            throw Error(Errc::schema, where + ": expected item_id<TAB>{train|test}");
        }
        if (roles.empty()) throw Error(Errc::schema, where + ": item listed before the first #run= marker");
        const auto it = index.find(fields[0]);
        if (it == index.end()) throw Error(Errc::schema, where + ": unknown item id '" + std::string(fields[0]) + "'");
        char& role = roles.back()[it->second];
        if (role != 0) throw Error(Errc::schema, where + ": item '" + std::string(fields[0]) + "' listed twice in one run");
        role = fields[1] == "train" ? 'r' : 'e';
    }
    if (have_runs && declared_runs != roles.size()) {
        throw Error(Errc::schema, "split file declares " + std::to_string(declared_runs) + " runs but lists " +
                                      std::to_string(roles.size()));
    }
    for (const auto& r : roles) {
        SplitPair pair;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (r[i] == 'r') pair.train.push_back(i);
            else if (r[i] == 'e') pair.test.push_back(i);
        }
        file.splits.push_back(std::move(pair));
    }
    return file;
}

SplitFile load_splits(const DatasetManifest& manifest, const fs::path& path) {
    return parse_splits(manifest, text::read_lines(path));
}

}  // namespace cloudvote::dataset
