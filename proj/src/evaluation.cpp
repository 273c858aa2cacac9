#include "cloudvote/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <thread>

#include "cloudvote/error.hpp"
#include "cloudvote/prediction.hpp"
#include "cloudvote/preprocess.hpp"
#include "cloudvote/text.hpp"

namespace cloudvote::evaluation {

namespace {

// Runs body(i) for i in [0, count) on up to `jobs` threads. The first failure
// by index is rethrown after all workers finish.
template <typename Body>
void parallel_for(std::size_t count, std::size_t jobs, Body&& body) {
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::string metric_text(const std::optional<double>& v) {
    return v ? text::format_g17(*v) : std::string("undefined");
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.insert(0, width - s.size(), ' ');
    return s;
}

std::string class_name(std::span<const std::string> names, int c) {
    if (c >= 1 && static_cast<std::size_t>(c) <= names.size()) return names[static_cast<std::size_t>(c - 1)];
    return std::to_string(c);
}

// Builtin backend state shared by all runs: features depend only on the image.
struct PreparedBackend {
    std::string id;
    const BuiltinBackendConfig* builtin = nullptr;
    std::vector<classifier::FeatureVector> features;  // per manifest item (empty when unused)
    prediction::PredictionMatrix external;
};

}  // namespace

TruthMap truth_from_manifest(const dataset::DatasetManifest& manifest) {
    TruthMap truth;
    truth.reserve(manifest.size());
    for (const auto& item : manifest.items) truth.emplace(item.path, item.label);
    return truth;
}

EvaluationReport report_from_confusion(int classes, std::vector<std::size_t> confusion) {
    if (classes < 1) throw Error(Errc::invalid_argument, "class count must be >= 1");
    const auto x = static_cast<std::size_t>(classes);
    if (confusion.size() != x * x) throw Error(Errc::dimension, "confusion matrix does not match the class count");
    EvaluationReport r;
    r.classes = classes;
    r.confusion = std::move(confusion);
    for (std::size_t t = 0; t < x; ++t) {
        for (std::size_t p = 0; p < x; ++p) {
            r.total += r.confusion[t * x + p];
            if (t == p) r.correct += r.confusion[t * x + p];
        }
    }
    r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
    r.per_class.resize(x);
    for (std::size_t c = 0; c < x; ++c) {
        std::size_t predicted = 0;
        std::size_t actual = 0;
        for (std::size_t k = 0; k < x; ++k) {
            predicted += r.confusion[k * x + c];
            actual += r.confusion[c * x + k];
        }
        const double tp = static_cast<double>(r.confusion[c * x + c]);
        auto& m = r.per_class[c];
        m.support = actual;
        if (predicted) m.precision = tp / static_cast<double>(predicted);
        if (actual) m.recall = tp / static_cast<double>(actual);
        if (m.precision && m.recall) {
            const double denom = *m.precision + *m.recall;
            m.f1 = denom > 0.0 ? 2.0 * *m.precision * *m.recall / denom : 0.0;
        }
    }
    return r;
}

EvaluationReport score_labels(std::span<const std::string> image_ids, std::span<const int> predicted,
                              const TruthMap& truth, int classes) {
    if (image_ids.size() != predicted.size()) throw Error(Errc::dimension, "ids and predictions differ in length");
    if (classes < 1) throw Error(Errc::invalid_argument, "class count must be >= 1");
    const auto x = static_cast<std::size_t>(classes);
    std::vector<std::size_t> confusion(x * x, 0);
    for (std::size_t i = 0; i < image_ids.size(); ++i) {
        const auto it = truth.find(image_ids[i]);
        if (it == truth.end()) throw Error(Errc::missing_truth, "no truth label for image '" + image_ids[i] + "'");
        const int t = it->second;
        const int p = predicted[i];
        if (t < 1 || t > classes || p < 1 || p > classes) {
            throw Error(Errc::schema, "label out of range for image '" + image_ids[i] + "'");
        }
        ++confusion[static_cast<std::size_t>(t - 1) * x + static_cast<std::size_t>(p - 1)];
    }
    return report_from_confusion(classes, std::move(confusion));
}

EvaluationReport score(std::span<const voting::VoteOutcome> outcomes, const TruthMap& truth, int classes) {
    std::vector<std::string> ids;
    std::vector<int> predicted;
    ids.reserve(outcomes.size());
    predicted.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        ids.push_back(o.image_id);
        predicted.push_back(o.dm);
    }
    return score_labels(ids, predicted, truth, classes);
}

std::string backend_id(const BackendConfig& config) {
    return std::visit([](const auto& c) { return c.id; }, config);
}

ProtocolReport run_protocol(const dataset::DatasetManifest& manifest, const dataset::SplitPlan& plan,
                            std::span<const BackendConfig> backends, const ProtocolOptions& options) {
    const auto splits = dataset::make_splits(manifest, plan);
    return run_protocol(manifest, splits, dataset::describe(plan), plan.seed, backends, options);
}

ProtocolReport run_protocol(const dataset::DatasetManifest& manifest, std::span<const dataset::SplitPair> splits,
                            std::string plan_description, std::uint64_t seed,
                            std::span<const BackendConfig> backends, const ProtocolOptions& options) {
    dataset::validate(manifest);
    if (backends.empty()) throw Error(Errc::usage, "at least one backend is required");
    if (splits.empty()) throw Error(Errc::infeasible, "the protocol produced no splits");
    const int x = manifest.class_count();
    const TruthMap truth = truth_from_manifest(manifest);

    std::vector<char> used(manifest.size(), 0);
    for (const auto& s : splits) {
        if (s.test.empty()) throw Error(Errc::infeasible, "a split has an empty test set");
        for (auto i : s.train) used[i] = 1;
        for (auto i : s.test) used[i] = 1;
    }
    std::vector<std::size_t> needed;
    for (std::size_t i = 0; i < used.size(); ++i) {
        if (used[i]) needed.push_back(i);
    }

    std::vector<PreparedBackend> prepared(backends.size());
    std::map<int, std::vector<preprocess::RasterImage>> resized;  // side -> per needed image
    for (std::size_t b = 0; b < backends.size(); ++b) {
        auto& p = prepared[b];
        p.id = backend_id(backends[b]);
        for (std::size_t o = 0; o < b; ++o) {
            if (prepared[o].id == p.id) throw Error(Errc::schema, "duplicate backend id '" + p.id + "'");
        }
        if (const auto* ext = std::get_if<ExternalBackendConfig>(&backends[b])) {
            p.external = prediction::load_predictions(ext->path);
            if (p.external.classes != x) {
                throw Error(Errc::schema, "interchange file '" + ext->path.string() + "' has " +
                                              std::to_string(p.external.classes) + " classes, manifest has " + std::to_string(x));
            }
            p.external.backend_id = p.id;
            continue;
        }
        p.builtin = &std::get<BuiltinBackendConfig>(backends[b]);
        classifier::validate(p.builtin->train);
        const int side = p.builtin->input_side;
        if (side < 1) throw Error(Errc::invalid_argument, "backend '" + p.id + "' input side must be >= 1");
        if (!resized.contains(side)) resized.emplace(side, std::vector<preprocess::RasterImage>(needed.size()));
    }

    // Decode each needed image once, then resize per distinct input side.
    if (!resized.empty()) {
        parallel_for(needed.size(), options.jobs, [&](std::size_t n) {
            const auto img = preprocess::decode(manifest.resolve(manifest.items[needed[n]]));
            for (auto& [side, images] : resized) images[n] = preprocess::resize(img, side, side);
        });
    }
    for (auto& p : prepared) {
        if (!p.builtin) continue;
        const auto& images = resized.at(p.builtin->input_side);
        p.features.assign(manifest.size(), {});
        parallel_for(needed.size(), options.jobs, [&](std::size_t n) {
            p.features[needed[n]] = classifier::extract_features(images[n], p.builtin->features);
        });
    }

    ProtocolReport report;
    report.manifest_name = manifest.name;
    report.plan = std::move(plan_description);
    report.seed = seed;
    report.class_names = manifest.class_labels();
    report.runs.resize(splits.size());

    parallel_for(splits.size(), options.jobs, [&](std::size_t r) {
        const auto& split = splits[r];
        std::vector<std::string> test_ids;
        test_ids.reserve(split.test.size());
        for (auto i : split.test) test_ids.push_back(manifest.items[i].path);

        std::vector<prediction::PredictionMatrix> matrices;
        for (const auto& p : prepared) {
            if (!p.builtin) {
                matrices.push_back(prediction::select_rows(p.external, test_ids));
                continue;
            }
            std::vector<classifier::Sample> train;
            train.reserve(split.train.size());
            for (auto i : split.train) train.push_back({p.features[i], manifest.items[i].label});
            auto cfg = p.builtin->train;
            cfg.seed += r;
            const auto trained = classifier::train_softmax(train, x, cfg, p.builtin->features);

            prediction::PredictionMatrix m;
            m.backend_id = p.id;
            m.classes = x;
            m.image_ids = test_ids;
            m.posteriors.reserve(test_ids.size() * static_cast<std::size_t>(x));
            for (auto i : split.test) {
                const auto row = trained.model.predict_one(p.features[i]);
                m.posteriors.insert(m.posteriors.end(), row.begin(), row.end());
            }
            matrices.push_back(std::move(m));
        }

        RunResult& result = report.runs[r];
        result.index = r;
        result.train_size = split.train.size();
        result.test_size = split.test.size();
        for (const auto& m : matrices) {
            std::vector<int> argmax;
            argmax.reserve(m.rows());
            for (std::size_t i = 0; i < m.rows(); ++i) argmax.push_back(prediction::argmax_class(m.row(i)));
            result.backends.push_back({m.backend_id, score_labels(m.image_ids, argmax, truth, x)});
        }
        const auto run = prediction::EnsembleRun::assemble(std::move(matrices));
        result.outcomes = voting::aggregate(run);
        result.ensemble = score(result.outcomes, truth, x);
    });

    std::vector<std::size_t> pooled(static_cast<std::size_t>(x) * static_cast<std::size_t>(x), 0);
    std::vector<double> backend_sums(prepared.size(), 0.0);
    double sum = 0.0;
    for (const auto& run : report.runs) {
        sum += run.ensemble.accuracy;
        for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += run.ensemble.confusion[k];
        for (std::size_t b = 0; b < run.backends.size(); ++b) backend_sums[b] += run.backends[b].report.accuracy;
    }
    const double runs = static_cast<double>(report.runs.size());
    report.mean_accuracy = sum / runs;
    for (std::size_t b = 0; b < prepared.size(); ++b) {
        report.backend_mean_accuracy.emplace_back(prepared[b].id, backend_sums[b] / runs);
    }
    report.pooled = report_from_confusion(x, std::move(pooled));
    return report;
}

std::string format_kv(const EvaluationReport& report, std::span<const std::string> class_names) {
    std::string out;
    out += "classes=" + std::to_string(report.classes) + "\n";
    for (int c = 1; c <= report.classes; ++c) out += "class." + std::to_string(c) + ".name=" + class_name(class_names, c) + "\n";
    out += "total=" + std::to_string(report.total) + "\n";
    out += "correct=" + std::to_string(report.correct) + "\n";
    out += "accuracy=" + text::format_g17(report.accuracy) + "\n";
    for (int t = 1; t <= report.classes; ++t) {
        for (int p = 1; p <= report.classes; ++p) {
            out += "confusion." + std::to_string(t) + "." + std::to_string(p) + "=" + std::to_string(report.at(t, p)) + "\n";
        }
    }
    for (int c = 1; c <= report.classes; ++c) {
        const auto& m = report.per_class[static_cast<std::size_t>(c - 1)];
        const std::string key = "class." + std::to_string(c);
        out += key + ".support=" + std::to_string(m.support) + "\n";
        out += key + ".precision=" + metric_text(m.precision) + "\n";
        out += key + ".recall=" + metric_text(m.recall) + "\n";
        out += key + ".f1=" + metric_text(m.f1) + "\n";
    }
    return out;
}

std::string format_text(const EvaluationReport& report, std::span<const std::string> class_names) {
    std::string out;
    out += "Accuracy: " + fixed(100.0 * report.accuracy, 2) + "% (" + std::to_string(report.correct) + "/" +
           std::to_string(report.total) + ")\n\n";
    std::size_t width = 9;
    for (int c = 1; c <= report.classes; ++c) width = std::max(width, class_name(class_names, c).size() + 1);
    out += "Confusion matrix (rows = truth, columns = predicted)\n";
    out += pad("", width);
    for (int p = 1; p <= report.classes; ++p) out += pad(std::to_string(p), 7);
    out += "\n";
    for (int t = 1; t <= report.classes; ++t) {
        out += pad(class_name(class_names, t), width);
        for (int p = 1; p <= report.classes; ++p) out += pad(std::to_string(report.at(t, p)), 7);
        out += "\n";
    }
    out += "\n" + pad("class", width) + pad("support", 9) + pad("precision", 11) + pad("recall", 9) + pad("f1", 9) + "\n";
    auto cell = [](const std::optional<double>& v, std::size_t w) { return pad(v ? fixed(*v, 4) : "n/a", w); };
    for (int c = 1; c <= report.classes; ++c) {
        const auto& m = report.per_class[static_cast<std::size_t>(c - 1)];
        out += pad(class_name(class_names, c), width) + pad(std::to_string(m.support), 9) + cell(m.precision, 11) +
               cell(m.recall, 9) + cell(m.f1, 9) + "\n";
    }
    return out;
}

std::string format_kv(const ProtocolReport& report) {
    std::string out;
    out += "tool_version=" + std::string(kToolVersion) + "\n";
    out += "seed=" + std::to_string(report.seed) + "\n";
    out += "manifest=" + report.manifest_name + "\n";
    out += "plan=" + report.plan + "\n";
    out += "runs=" + std::to_string(report.runs.size()) + "\n";
    for (const auto& run : report.runs) {
        const std::string key = "run." + std::to_string(run.index);
        out += key + ".train=" + std::to_string(run.train_size) + "\n";
        out += key + ".test=" + std::to_string(run.test_size) + "\n";
        out += key + ".accuracy=" + text::format_g17(run.ensemble.accuracy) + "\n";
        for (const auto& b : run.backends) {
            out += key + ".backend." + b.id + ".accuracy=" + text::format_g17(b.report.accuracy) + "\n";
        }
    }
    out += "ensemble_accuracy=" + text::format_g17(report.mean_accuracy) + "\n";
    out += "mean_accuracy=" + text::format_g17(report.mean_accuracy) + "\n";
    for (const auto& [id, acc] : report.backend_mean_accuracy) {
        out += "backend." + id + ".mean_accuracy=" + text::format_g17(acc) + "\n";
    }
    std::string pooled = format_kv(report.pooled, report.class_names);
    std::size_t start = 0;
    while (start < pooled.size()) {
        const auto end = pooled.find('\n', start);
        out += "pooled." + pooled.substr(start, end - start + 1);
        start = end + 1;
    }
    return out;
}

std::string format_text(const ProtocolReport& report) {
    std::string out;
    out += "cloudvote evaluation report (" + std::string(kToolVersion) + ")\n";
    out += "manifest: " + report.manifest_name + "\n";
    out += "plan: " + report.plan + "    seed: " + std::to_string(report.seed) + "    runs: " +
           std::to_string(report.runs.size()) + "\n\n";

    out += pad("run", 5) + pad("train", 8) + pad("test", 8) + pad("ensemble", 10);
    for (const auto& [id, acc] : report.backend_mean_accuracy) out += pad(id, std::max<std::size_t>(10, id.size() + 2));
    out += "\n";
    for (const auto& run : report.runs) {
        out += pad(std::to_string(run.index), 5) + pad(std::to_string(run.train_size), 8) +
               pad(std::to_string(run.test_size), 8) + pad(fixed(100.0 * run.ensemble.accuracy, 2), 10);
        for (const auto& b : run.backends) {
            out += pad(fixed(100.0 * b.report.accuracy, 2), std::max<std::size_t>(10, b.id.size() + 2));
        }
        out += "\n";
    }
    out += pad("mean", 21) + pad(fixed(100.0 * report.mean_accuracy, 2), 10);
    for (const auto& [id, acc] : report.backend_mean_accuracy) {
        out += pad(fixed(100.0 * acc, 2), std::max<std::size_t>(10, id.size() + 2));
    }
    out += "\n\nPooled over all runs\n";
    out += format_text(report.pooled, report.class_names);
    return out;
}

}  // namespace cloudvote::evaluation
