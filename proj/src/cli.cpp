#include "cloudvote/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <ostream>

#include "cloudvote/classifier.hpp"
#include "cloudvote/dataset.hpp"
#include "cloudvote/error.hpp"
#include "cloudvote/prediction.hpp"
#include "cloudvote/preprocess.hpp"
#include "cloudvote/synthetic.hpp"
#include "cloudvote/text.hpp"
#include "cloudvote/voting.hpp"

namespace fs = std::filesystem;

namespace cloudvote::cli {

namespace {

fs::path resolve(const fs::path& base, const std::string& value) {
    fs::path p(value);
    return p.is_relative() ? (base / p).lexically_normal() : p;
}

// Decodes the given manifest items and resizes them to `side`.
std::vector<preprocess::RasterImage> load_images(const dataset::DatasetManifest& manifest,
                                                 const std::vector<std::size_t>& items, int side) {
    std::vector<preprocess::RasterImage> images;
    images.reserve(items.size());
    for (auto i : items) {
        images.push_back(preprocess::resize(preprocess::decode(manifest.resolve(manifest.items[i])), side, side));
    }
    return images;
}

const dataset::SplitPair& pick_run(const dataset::SplitFile& split, std::size_t run) {
    if (run >= split.splits.size()) {
        throw Error(Errc::usage, "split file has " + std::to_string(split.splits.size()) + " runs, asked for run " +
                                     std::to_string(run));
    }
    return split.splits[run];
}

std::string number_text(double v) {
    std::string s = text::format_shortest(v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

void write_reports(const fs::path& dir, ReportFormat format, const std::string& text_report,
                   const std::string& kv_report) {
    if (format != ReportFormat::kv) text::write_file(dir / "report.txt", text_report);
    if (format != ReportFormat::text) text::write_file(dir / "report.kv", kv_report);
}

struct TrainOptions {
    std::string id = "builtin";
    int side = 32;
    int pool = 4;
    int bins = 8;
    std::uint64_t feature_seed = 0;
    int epochs = 6;
    std::size_t minibatch = 10;
    double lr = 3e-4;
    double momentum = 0.9;
};

void add_train_options(CLI::App* cmd, TrainOptions& t) {
    cmd->add_option("--id", t.id, "Backend id")->capture_default_str();
    cmd->add_option("--side", t.side, "Square input side in pixels")->capture_default_str();
    cmd->add_option("--pool", t.pool, "Mean-pooling grid side")->capture_default_str();
    cmd->add_option("--bins", t.bins, "Histogram bins per channel")->capture_default_str();
    cmd->add_option("--feature-seed", t.feature_seed, "Weight initialisation seed")->capture_default_str();
    cmd->add_option("--epochs", t.epochs, "Maximum epochs")->capture_default_str();
    cmd->add_option("--minibatch", t.minibatch, "Minibatch size")->capture_default_str();
    cmd->add_option("--lr", t.lr, "Initial learning rate")->capture_default_str();
    cmd->add_option("--momentum", t.momentum, "SGD momentum")->capture_default_str();
}

evaluation::ProtocolReport run_config(const RunConfig& cfg, std::ostream& out) {
    const auto manifest = dataset::load_manifest(cfg.manifest);
    evaluation::ProtocolOptions options;
    options.jobs = cfg.jobs;
    evaluation::ProtocolReport report;
    if (cfg.split_file) {
        const auto split = dataset::load_splits(manifest, *cfg.split_file);
        report = evaluation::run_protocol(manifest, split.splits, split.plan, split.seed, cfg.backends, options);
    } else {
        const auto plan = dataset::parse_plan(cfg.plan, cfg.seed);
        report = evaluation::run_protocol(manifest, plan, cfg.backends, options);
    }
    for (const auto& run : report.runs) {
        voting::VoteReport votes;
        votes.metadata = {{"tool_version", std::string(kToolVersion)},
                          {"seed", std::to_string(report.seed)},
                          {"plan", report.plan},
                          {"run", std::to_string(run.index)},
                          {"classes", std::to_string(manifest.class_count())}};
        votes.outcomes = run.outcomes;
        char name[32];
        std::snprintf(name, sizeof(name), "run_%03zu.tsv", run.index);
        voting::save_votes(votes, cfg.out / "votes" / name);
    }
    write_reports(cfg.out, cfg.format, evaluation::format_text(report), evaluation::format_kv(report));
    out << "mean accuracy " << text::format_g17(report.mean_accuracy) << " over " << report.runs.size() << " runs\n";
    return report;
}

}  // namespace

ReportFormat parse_format(std::string_view s) {
    if (s == "text") return ReportFormat::text;
    if (s == "kv") return ReportFormat::kv;
    if (s == "both") return ReportFormat::both;
    throw Error(Errc::usage, "unknown report format '" + std::string(s) + "' (expected text, kv or both)");
}

RunConfig parse_run_config(const std::vector<std::string>& lines, const fs::path& base_dir) {
    RunConfig cfg;
    cfg.out = base_dir / "out";
    // Builtin keys are collected first and folded into a variant at the end.
    struct Group {
        std::string id;
        std::string kind = "builtin";
        evaluation::BuiltinBackendConfig builtin;
        std::optional<std::uint64_t> train_seed;
        bool have_feature_seed = false;
        fs::path path;
    };
    std::vector<Group> groups;

    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        const std::string where = "config line " + std::to_string(ln + 1);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw Error(Errc::schema, where + ": expected key=value");
        const std::string key(line.substr(0, eq));
        const std::string value(line.substr(eq + 1));

        if (key.starts_with("backend.")) {
            const std::string sub = key.substr(8);
            if (sub == "id") {
                groups.emplace_back();
                groups.back().id = value;
                continue;
            }
            if (groups.empty()) throw Error(Errc::schema, where + ": backend key before any backend.id");
            auto& g = groups.back();
            auto& b = g.builtin;
            if (sub == "kind") {
                if (value != "builtin" && value != "external") throw Error(Errc::schema, where + ": backend.kind must be builtin or external");
                g.kind = value;
            } else if (sub == "path") g.path = resolve(base_dir, value);
            else if (sub == "side") b.input_side = static_cast<int>(text::parse_int(value, where));
            else if (sub == "pool") b.features.pool_side = static_cast<int>(text::parse_int(value, where));
            else if (sub == "bins") b.features.hist_bins = static_cast<int>(text::parse_int(value, where));
            else if (sub == "feature_seed") {
                b.features.seed = text::parse_uint(value, where);
                g.have_feature_seed = true;
            } else if (sub == "seed") g.train_seed = text::parse_uint(value, where);
            else if (sub == "epochs") b.train.max_epochs = static_cast<int>(text::parse_int(value, where));
            else if (sub == "minibatch") b.train.minibatch = text::parse_uint(value, where);
            else if (sub == "lr") b.train.learn_rate = text::parse_double(value, where);
            else if (sub == "momentum") b.train.momentum = text::parse_double(value, where);
            else throw Error(Errc::schema, where + ": unknown key '" + key + "'");
            continue;
        }
        if (key == "manifest") cfg.manifest = resolve(base_dir, value);
        else if (key == "split") cfg.split_file = resolve(base_dir, value);
        else if (key == "plan") cfg.plan = value;
        else if (key == "seed") cfg.seed = text::parse_uint(value, where);
        else if (key == "out") cfg.out = resolve(base_dir, value);
        else if (key == "format") cfg.format = parse_format(value);
        else if (key == "jobs") cfg.jobs = text::parse_uint(value, where);
        else throw Error(Errc::schema, where + ": unknown key '" + key + "'");
    }
    if (cfg.manifest.empty()) throw Error(Errc::schema, "config is missing 'manifest'");
    if (groups.empty()) throw Error(Errc::schema, "config declares no backends");
    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto& g = groups[i];
        if (g.kind == "external") {
            if (g.path.empty()) throw Error(Errc::schema, "external backend '" + g.id + "' has no backend.path");
            cfg.backends.emplace_back(evaluation::ExternalBackendConfig{g.id, g.path});
        } else {
            g.builtin.id = g.id;
            if (!g.have_feature_seed) g.builtin.features.seed = i + 1;
            g.builtin.train.seed = g.train_seed.value_or(cfg.seed);
            cfg.backends.emplace_back(g.builtin);
        }
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    return parse_run_config(text::read_lines(path), path.parent_path());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Ensemble image classification by modal voting over classifier backends", "cloudvote"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    std::uint64_t seed = 0;
    std::string out_path;

    // ingest
    std::string ingest_root, ingest_name;
    auto* ingest = app.add_subcommand("ingest", "Build a manifest from a directory-per-class image tree");
    ingest->add_option("root", ingest_root, "Dataset root")->required();
    ingest->add_option("--name", ingest_name, "Dataset name");
    ingest->add_option("--out", out_path, "Manifest file")->required();
    ingest->add_option("--seed", seed, "Seed recorded in the output");

    // split
    std::string split_manifest, plan_spec;
    auto* split = app.add_subcommand("split", "Generate train/test splits");
    split->add_option("manifest", split_manifest, "Manifest file")->required();
    split->add_option("--plan", plan_spec, "kfold:K | perclass:TRAIN:TEST:RUNS | holdout:FRACTION[:RUNS]")->required();
    split->add_option("--seed", seed, "Split seed");
    split->add_option("--out", out_path, "Split file")->required();

    // train
    std::string train_manifest, train_split;
    std::size_t train_run = 0;
    TrainOptions topt;
    auto* train = app.add_subcommand("train", "Train a builtin softmax backend on one split's training items");
    train->add_option("manifest", train_manifest, "Manifest file")->required();
    train->add_option("--split", train_split, "Split file (all items when omitted)");
    train->add_option("--run", train_run, "Run/fold index within the split file");
    train->add_option("--seed", seed, "Shuffle seed");
    train->add_option("--out", out_path, "Model file")->required();
    add_train_options(train, topt);

    // predict
    std::string predict_model, predict_manifest, predict_split, subset = "test", dump_dir;
    std::size_t predict_run = 0;
    auto* predict = app.add_subcommand("predict", "Write an interchange prediction file for a trained model");
    predict->add_option("model", predict_model, "Model file")->required();
    predict->add_option("manifest", predict_manifest, "Manifest file")->required();
    predict->add_option("--split", predict_split, "Split file (all items when omitted)");
    predict->add_option("--run", predict_run, "Run/fold index within the split file");
    predict->add_option("--subset", subset, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
    predict->add_option("--debug-dump", dump_dir, "Write the resized network inputs here as PNG");
    predict->add_option("--out", out_path, "Prediction file")->required();

    // vote
    std::vector<std::string> vote_files;
    std::optional<std::uint64_t> vote_seed;
    auto* vote = app.add_subcommand("vote", "Combine prediction files by modal voting");
    vote->add_option("predictions", vote_files, "Interchange prediction files")->required();
    vote->add_option("--seed", vote_seed, "Seed recorded in the report (defaults to the first file's)");
    vote->add_option("--out", out_path, "Vote report")->required();

    // eval
    std::string eval_votes, eval_manifest, eval_config, eval_plan;
    std::optional<std::uint64_t> eval_seed;
    std::optional<std::size_t> eval_jobs;
    std::optional<std::string> eval_format;
    auto* eval = app.add_subcommand("eval", "Score a vote report, or run a full protocol from a run config");
    eval->add_option("--votes", eval_votes, "Vote report to score");
    eval->add_option("--manifest", eval_manifest, "Manifest with the truth labels");
    eval->add_option("--config", eval_config, "Run config (full pipeline)");
    eval->add_option("--plan", eval_plan, "Override the config's plan");
    eval->add_option("--seed", eval_seed, "Override the config's seed");
    eval->add_option("--jobs", eval_jobs, "Parallel runs");
    eval->add_option("--format", eval_format, "text, kv or both")->check(CLI::IsMember({"text", "kv", "both"}));
    eval->add_option("--out", out_path, "Output directory");

    // groupedmode
    std::vector<double> grouped;
    auto* gmode = app.add_subcommand("groupedmode", "Grouped-data mode l + (f1-f0)/(2f1-f0-f2)*h");
    gmode->add_option("values", grouped, "l h f0 f1 f2")->required()->expected(5)->allow_extra_args(false);

    // synth
    int synth_classes = 3, synth_per_class = 100, synth_side = 32;
    std::uint64_t synth_seed = 7;
    auto* synth = app.add_subcommand("synth", "Write a synthetic separable sky-image fixture");
    synth->add_option("--classes", synth_classes, "Class count (1..5)")->capture_default_str();
    synth->add_option("--per-class", synth_per_class, "Images per class")->capture_default_str();
    synth->add_option("--side", synth_side, "Image side")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", out_path, "Output root")->required();

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << "\n";
        return exit_status(Errc::usage);
    }

    try {
        if (ingest->parsed()) {
            const fs::path root(ingest_root);
            const fs::path target(out_path);
            std::string name = ingest_name.empty() ? root.filename().string() : ingest_name;
            if (name.empty()) name = fs::absolute(root).lexically_normal().parent_path().filename().string();
            auto manifest = dataset::ingest(root, name);
            const fs::path out_dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
            manifest.source_root = fs::absolute(root).lexically_normal().lexically_relative(fs::absolute(out_dir).lexically_normal());
            if (manifest.source_root.empty()) manifest.source_root = fs::absolute(root);
            dataset::save_manifest(manifest, target, seed);
            out << "ingested " << manifest.size() << " images in " << manifest.class_count() << " classes\n";
        } else if (split->parsed()) {
            const auto manifest = dataset::load_manifest(split_manifest);
            const auto plan = dataset::parse_plan(plan_spec, seed);
            const auto splits = dataset::make_splits(manifest, plan);
            text::write_file(out_path, dataset::serialize_splits(manifest, plan, splits));
            out << "wrote " << splits.size() << " splits\n";
        } else if (train->parsed()) {
            const auto manifest = dataset::load_manifest(train_manifest);
            std::vector<std::size_t> items;
            if (train_split.empty()) {
                items.resize(manifest.size());
                for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
            } else {
                items = pick_run(dataset::load_splits(manifest, train_split), train_run).train;
            }
            if (items.empty()) throw Error(Errc::infeasible, "no training items");
            const classifier::FeatureConfig fc{topt.pool, topt.bins, topt.feature_seed};
            classifier::TrainConfig cfg;
            cfg.minibatch = topt.minibatch;
            cfg.max_epochs = topt.epochs;
            cfg.learn_rate = topt.lr;
            cfg.momentum = topt.momentum;
            cfg.seed = seed;
            classifier::validate(cfg);
            if (topt.side < 1) throw Error(Errc::invalid_argument, "--side must be >= 1");
            const auto images = load_images(manifest, items, topt.side);
            std::vector<classifier::Sample> samples;
            samples.reserve(items.size());
            for (std::size_t k = 0; k < items.size(); ++k) {
                samples.push_back({classifier::extract_features(images[k], fc), manifest.items[items[k]].label});
            }
            const auto result = classifier::train_softmax(samples, manifest.class_count(), cfg, fc);
            classifier::ModelFile file;
            file.backend = {topt.id, {topt.side, "builtin"}, classifier::BackendKind::builtin_softmax};
            file.model = result.model;
            file.class_names = manifest.class_labels();
            file.seed = seed;
            classifier::save_model(file, out_path);
            out << "trained '" << topt.id << "' on " << samples.size() << " images, final epoch loss "
                << text::format_g17(result.log.epoch_loss.back()) << "\n";
        } else if (predict->parsed()) {
            const auto model = classifier::load_model(predict_model);
            const auto manifest = dataset::load_manifest(predict_manifest);
            if (model.model.class_count() != manifest.class_count()) {
                throw Error(Errc::schema, "model has " + std::to_string(model.model.class_count()) +
                                              " classes, manifest has " + std::to_string(manifest.class_count()));
            }
            std::vector<std::size_t> items;
            if (predict_split.empty() || subset == "all") {
                items.resize(manifest.size());
                for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
            } else {
                const auto split_file = dataset::load_splits(manifest, predict_split);
                const auto& pair = pick_run(split_file, predict_run);
                items = subset == "train" ? pair.train : pair.test;
            }
            const auto images = load_images(manifest, items, model.backend.input_spec.side);
            std::vector<std::string> ids;
            for (auto i : items) ids.push_back(manifest.items[i].path);
            if (!dump_dir.empty()) {
                for (std::size_t k = 0; k < images.size(); ++k) {
                    std::string flat = ids[k];
                    std::replace(flat.begin(), flat.end(), '/', '_');
                    preprocess::encode(images[k], fs::path(dump_dir) / (fs::path(flat).replace_extension(".png")));
                }
            }
            auto m = classifier::predict(model.backend, model.model, ids, images);
            m.class_names = manifest.class_labels();
            m.metadata = {{"tool_version", std::string(kToolVersion)}, {"seed", std::to_string(model.seed)}};
            prediction::save_predictions(m, out_path);
            out << "wrote " << m.rows() << " prediction rows for backend '" << m.backend_id << "'\n";
        } else if (vote->parsed()) {
            std::vector<prediction::PredictionMatrix> matrices;
            for (const auto& f : vote_files) matrices.push_back(prediction::load_predictions(f));
            std::string seed_text = "0";
            if (vote_seed) {
                seed_text = std::to_string(*vote_seed);
            } else {
                for (const auto& [k, v] : matrices.front().metadata) {
                    if (k == "seed") seed_text = v;
                }
            }
            std::string backends;
            for (const auto& m : matrices) backends += (backends.empty() ? "" : ",") + m.backend_id;
            const auto run = prediction::EnsembleRun::assemble(std::move(matrices));
            voting::VoteReport report;
            report.metadata = {{"tool_version", std::string(kToolVersion)},
                               {"seed", seed_text},
                               {"classes", std::to_string(run.classes())},
                               {"backends", backends}};
            report.outcomes = voting::aggregate(run);
            voting::save_votes(report, out_path);
            const auto ties = std::count_if(report.outcomes.begin(), report.outcomes.end(),
                                            [](const auto& o) { return o.tie_broken; });
            out << "voted " << report.outcomes.size() << " images over " << run.backend_count() << " backends ("
                << ties << " count ties)\n";
        } else if (eval->parsed()) {
            if (!eval_config.empty()) {
                auto cfg = load_run_config(eval_config);
                if (!eval_plan.empty()) {
                    cfg.plan = eval_plan;
                    cfg.split_file.reset();
                }
                if (eval_seed) {
                    cfg.seed = *eval_seed;
                    for (auto& b : cfg.backends) {
                        if (auto* bi = std::get_if<evaluation::BuiltinBackendConfig>(&b)) bi->train.seed = *eval_seed;
                    }
                }
                if (eval_jobs) cfg.jobs = *eval_jobs;
                if (eval_format) cfg.format = parse_format(*eval_format);
                if (!out_path.empty()) cfg.out = out_path;
                run_config(cfg, out);
            } else {
                if (eval_votes.empty() || eval_manifest.empty()) {
                    throw Error(Errc::usage, "eval needs --config, or both --votes and --manifest");
                }
                if (out_path.empty()) throw Error(Errc::usage, "eval needs --out");
                const auto manifest = dataset::load_manifest(eval_manifest);
                const auto votes = voting::load_votes(eval_votes);
                const auto report = evaluation::score(votes.outcomes, evaluation::truth_from_manifest(manifest),
                                                      manifest.class_count());
                std::string seed_text = eval_seed ? std::to_string(*eval_seed) : "0";
                if (!eval_seed) {
                    for (const auto& [k, v] : votes.metadata) {
                        if (k == "seed") seed_text = v;
                    }
                }
                const auto labels = manifest.class_labels();
                const std::string head = "tool_version=" + std::string(kToolVersion) + "\nseed=" + seed_text + "\n";
                write_reports(out_path, parse_format(eval_format.value_or("both")),
                              "cloudvote evaluation report (" + std::string(kToolVersion) + ")\nseed: " + seed_text +
                                  "\n\n" + evaluation::format_text(report, labels),
                              head + evaluation::format_kv(report, labels));
                out << "accuracy " << text::format_g17(report.accuracy) << " on " << report.total << " images\n";
            }
        } else if (gmode->parsed()) {
            const voting::GroupedModeInput g{grouped[0], grouped[1], grouped[3], grouped[2], grouped[4]};
            out << number_text(voting::grouped_mode(g)) << "\n";
        } else if (synth->parsed()) {
            if (synth_classes < 1 || synth_classes > 5) throw Error(Errc::usage, "--classes must lie in 1..5");
            synthetic::FixtureSpec spec;
            const std::vector<std::string> names{"clear_sky", "thick_dark", "thick_white", "green_tint", "sunset"};
            spec.class_names.assign(names.begin(), names.begin() + synth_classes);
            spec.per_class.assign(static_cast<std::size_t>(synth_classes), synth_per_class);
            spec.side = synth_side;
            spec.seed = synth_seed;
            synthetic::write_fixture(spec, out_path);
            out << "wrote " << synth_classes * synth_per_class << " images under " << out_path << "\n";
        }
    } catch (const Error& e) {
        err << "error[" << errc_name(e.code()) << "]: " << e.what() << "\n";
        return exit_status(e.code());
    } catch (const fs::filesystem_error& e) {
        err << "error[io]: " << e.what() << "\n";
        return exit_status(Errc::io);
    }
    return 0;
}

}  // namespace cloudvote::cli
