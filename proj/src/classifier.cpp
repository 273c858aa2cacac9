#include "cloudvote/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cloudvote/error.hpp"
#include "cloudvote/rng.hpp"
#include "cloudvote/text.hpp"

namespace cloudvote::classifier {

namespace {

void softmax_inplace(std::vector<double>& z) {
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - peak);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

// Mean loss over samples[indices]; gradient accumulated into grad when given.
double batch_loss(const SoftmaxModel& model, std::span<const Sample> samples, std::span<const std::size_t> indices,
                  Gradient* grad) {
    const auto x = static_cast<std::size_t>(model.class_count());
    const auto f = static_cast<std::size_t>(model.feature_dim());
    if (grad) {
        grad->weights.assign(x * f, 0.0);
        grad->biases.assign(x, 0.0);
    }
    double loss = 0.0;
    for (std::size_t idx : indices) {
        const Sample& s = samples[idx];
        const auto z = model.normalize(s.features);
        std::vector<double> p(model.biases());
        for (std::size_t c = 0; c < x; ++c) {
            const double* w = model.weights().data() + c * f;
            p[c] += std::inner_product(w, w + f, z.begin(), 0.0);
        }
        softmax_inplace(p);
        const auto y = static_cast<std::size_t>(s.label - 1);
        loss -= std::log(std::max(p[y], 1e-300));
        if (!grad) continue;
        for (std::size_t c = 0; c < x; ++c) {
            const double delta = p[c] - (c == y ? 1.0 : 0.0);
            grad->biases[c] += delta;
            double* row = grad->weights.data() + c * f;
            for (std::size_t j = 0; j < f; ++j) row[j] += delta * z[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    if (grad) {
        for (double& g : grad->weights) g *= inv;
        for (double& g : grad->biases) g *= inv;
    }
    return loss * inv;
}

void check_samples(std::span<const Sample> samples, int class_count, std::size_t dim, const char* what) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.label < 1 || s.label > class_count) {
            throw Error(Errc::invalid_argument, std::string(what) + " sample " + std::to_string(i) + " has label " +
                                                    std::to_string(s.label) + " outside 1.." + std::to_string(class_count));
        }
        if (s.features.size() != dim) {
            throw Error(Errc::dimension, std::string(what) + " sample " + std::to_string(i) + " has " +
                                             std::to_string(s.features.size()) + " features, expected " + std::to_string(dim));
        }
        for (double v : s.features) {
            if (!std::isfinite(v)) throw Error(Errc::invalid_argument, std::string(what) + " sample " + std::to_string(i) + " has a non-finite feature");
        }
    }
}

std::string join_doubles(std::span<const double> values) {
    std::string out;
    for (double v : values) {
        out += '\t';
        out += text::format_shortest(v);
    }
    return out;
}

}  // namespace

int feature_dimension(const FeatureConfig& config) {
    return 3 * config.pool_side * config.pool_side + 3 * config.hist_bins;
}

FeatureVector extract_features(const preprocess::RasterImage& img, const FeatureConfig& config) {
    const int d = config.pool_side;
    const int b = config.hist_bins;
    if (d < 0 || b < 0 || (d == 0 && b == 0)) {
        throw Error(Errc::invalid_argument, "feature config needs pool_side >= 0, hist_bins >= 0, not both zero");
    }
    if (img.width < d || img.height < d) {
        throw Error(Errc::dimension, "image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                         " is smaller than the pooling grid " + std::to_string(d));
    }
    FeatureVector out(static_cast<std::size_t>(feature_dimension(config)), 0.0);

    if (d > 0) {
        std::vector<double> sums(static_cast<std::size_t>(3 * d * d), 0.0);
        std::vector<std::size_t> counts(static_cast<std::size_t>(d * d), 0);
        for (int y = 0; y < img.height; ++y) {
            const int by = y * d / img.height;
            for (int x = 0; x < img.width; ++x) {
                const int bx = x * d / img.width;
                const auto cell = static_cast<std::size_t>(by * d + bx);
                ++counts[cell];
                for (int c = 0; c < 3; ++c) sums[static_cast<std::size_t>(c * d * d) + cell] += img.at(x, y, c);
            }
        }
        for (int c = 0; c < 3; ++c) {
            for (std::size_t cell = 0; cell < counts.size(); ++cell) {
                const auto k = static_cast<std::size_t>(c * d * d) + cell;
                out[k] = sums[k] / static_cast<double>(counts[cell]);
            }
        }
    }

    if (b > 0) {
        const auto base = static_cast<std::size_t>(3 * d * d);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                for (int c = 0; c < 3; ++c) {
                    const double v = img.at(x, y, c);
                    const int bin = std::clamp(static_cast<int>(std::floor(v * b)), 0, b - 1);
                    out[base + static_cast<std::size_t>(c * b + bin)] += 1.0;
                }
            }
        }
        const double total = static_cast<double>(img.width) * img.height;
        for (std::size_t k = base; k < out.size(); ++k) out[k] /= total;
    }
    return out;
}

void validate(const TrainConfig& cfg) {
    if (cfg.minibatch < 1) throw Error(Errc::invalid_argument, "minibatch must be >= 1");
    if (cfg.max_epochs < 1) throw Error(Errc::invalid_argument, "max_epochs must be >= 1");
    if (!(cfg.learn_rate > 0.0)) throw Error(Errc::invalid_argument, "learn_rate must be > 0");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw Error(Errc::invalid_argument, "momentum must lie in [0, 1)");
    if (!(cfg.init_scale >= 0.0)) throw Error(Errc::invalid_argument, "init_scale must be >= 0");
}

SoftmaxModel::SoftmaxModel(int class_count, FeatureConfig feature_config)
    : SoftmaxModel(class_count, feature_dimension(feature_config), feature_config) {}

SoftmaxModel::SoftmaxModel(int class_count, int feature_dim, FeatureConfig feature_config)
    : class_count_(class_count), feature_dim_(feature_dim), feature_config_(feature_config) {
    if (class_count < 1) throw Error(Errc::invalid_argument, "class count must be >= 1");
    if (feature_dim < 1) throw Error(Errc::invalid_argument, "feature dimension must be >= 1");
    weights_.assign(static_cast<std::size_t>(class_count) * static_cast<std::size_t>(feature_dim), 0.0);
    biases_.assign(static_cast<std::size_t>(class_count), 0.0);
    feature_mean_.assign(static_cast<std::size_t>(feature_dim), 0.0);
    feature_scale_.assign(static_cast<std::size_t>(feature_dim), 1.0);
}

std::vector<double> SoftmaxModel::normalize(std::span<const double> features) const {
    if (features.size() != static_cast<std::size_t>(feature_dim_)) {
        throw Error(Errc::dimension, "feature vector has " + std::to_string(features.size()) + " entries, model expects " +
                                         std::to_string(feature_dim_));
    }
    std::vector<double> z(features.begin(), features.end());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = (z[j] - feature_mean_[j]) / feature_scale_[j];
    return z;
}

std::vector<double> SoftmaxModel::logits(std::span<const double> features) const {
    const auto input = normalize(features);
    const auto f = static_cast<std::size_t>(feature_dim_);
    std::vector<double> z(biases_);
    for (std::size_t c = 0; c < z.size(); ++c) {
        const double* row = weights_.data() + c * f;
        z[c] += std::inner_product(row, row + f, input.begin(), 0.0);
    }
    return z;
}

std::vector<double> SoftmaxModel::predict_one(std::span<const double> features) const {
    auto z = logits(features);
    softmax_inplace(z);
    return z;
}

double loss_and_gradient(const SoftmaxModel& model, std::span<const Sample> batch, Gradient* grad) {
    if (batch.empty()) throw Error(Errc::invalid_argument, "empty batch");
    check_samples(batch, model.class_count(), static_cast<std::size_t>(model.feature_dim()), "batch");
    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return batch_loss(model, batch, all, grad);
}

TrainResult train_softmax(std::span<const Sample> train, int class_count, const TrainConfig& cfg,
                          const FeatureConfig& feature_config, std::span<const Sample> validation) {
    validate(cfg);
    if (train.empty()) throw Error(Errc::invalid_argument, "training set is empty");
    if (class_count < 1) throw Error(Errc::invalid_argument, "class count must be >= 1");
    const std::size_t dim = train.front().features.size();
    check_samples(train, class_count, dim, "training");
    check_samples(validation, class_count, dim, "validation");

    TrainResult result{SoftmaxModel(class_count, static_cast<int>(dim), feature_config), {}};
    SoftmaxModel& model = result.model;
    if (cfg.standardize) {
        auto& mean = model.feature_mean();
        auto& scale = model.feature_scale();
        for (const auto& s : train) {
            for (std::size_t j = 0; j < dim; ++j) mean[j] += s.features[j];
        }
        for (double& m : mean) m /= static_cast<double>(train.size());
        std::vector<double> var(dim, 0.0);
        for (const auto& s : train) {
            for (std::size_t j = 0; j < dim; ++j) var[j] += (s.features[j] - mean[j]) * (s.features[j] - mean[j]);
        }
        // Constant features keep scale 1 so they normalise to exactly 0.
        for (std::size_t j = 0; j < dim; ++j) {
            const double sd = std::sqrt(var[j] / static_cast<double>(train.size()));
            scale[j] = sd > 1e-12 ? sd : 1.0;
        }
    }
    if (cfg.init_scale > 0.0) {
        Rng init(feature_config.seed);
        for (double& w : model.weights()) w = cfg.init_scale * init.normal();
    }

    // The trailing partial minibatch is dropped each epoch. Shuffling every
    // epoch varies which samples it holds.
    const std::size_t batch = std::min(cfg.minibatch, train.size());
    const std::size_t per_epoch = train.size() / batch;
    const std::size_t validation_every =
        cfg.validation_frequency > 0 ? cfg.validation_frequency : std::max<std::size_t>(1, train.size() / cfg.minibatch);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> vel_w(model.weights().size(), 0.0);
    std::vector<double> vel_b(model.biases().size(), 0.0);
    Rng shuffler(cfg.seed);
    Gradient grad;

    std::vector<std::size_t> all_validation(validation.size());
    std::iota(all_validation.begin(), all_validation.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        if (cfg.shuffle_every_epoch) shuffler.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t it = 0; it < per_epoch; ++it) {
            const std::span<const std::size_t> idx(order.data() + it * batch, batch);
            epoch_loss += batch_loss(model, train, idx, &grad);
            for (std::size_t k = 0; k < vel_w.size(); ++k) {
                vel_w[k] = cfg.momentum * vel_w[k] - cfg.learn_rate * grad.weights[k];
                model.weights()[k] += vel_w[k];
            }
            for (std::size_t k = 0; k < vel_b.size(); ++k) {
                vel_b[k] = cfg.momentum * vel_b[k] - cfg.learn_rate * grad.biases[k];
                model.biases()[k] += vel_b[k];
            }
            ++result.log.iterations;
            if (!validation.empty() && result.log.iterations % validation_every == 0) {
                ValidationRecord rec;
                rec.iteration = result.log.iterations;
                rec.loss = batch_loss(model, validation, all_validation, nullptr);
                std::size_t hits = 0;
                for (const auto& s : validation) {
                    if (prediction::argmax_class(model.predict_one(s.features)) == s.label) ++hits;
                }
                rec.accuracy = static_cast<double>(hits) / static_cast<double>(validation.size());
                result.log.validation.push_back(rec);
            }
        }
        result.log.epoch_loss.push_back(epoch_loss / static_cast<double>(per_epoch));
    }
    return result;
}

prediction::PredictionMatrix predict(const ClassifierBackend& backend, const SoftmaxModel& model,
                                     std::span<const std::string> image_ids,
                                     std::span<const preprocess::RasterImage> images) {
    if (image_ids.size() != images.size()) {
        throw Error(Errc::dimension, "got " + std::to_string(image_ids.size()) + " ids for " +
                                         std::to_string(images.size()) + " images");
    }
    prediction::PredictionMatrix m;
    m.backend_id = backend.id;
    m.classes = model.class_count();
    m.image_ids.assign(image_ids.begin(), image_ids.end());
    m.posteriors.reserve(images.size() * static_cast<std::size_t>(m.classes));
    const int side = backend.input_spec.side;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = images[i];
        if (img.width != side || img.height != side) {
            throw Error(Errc::dimension, "image '" + m.image_ids[i] + "' is " + std::to_string(img.width) + "x" +
                                             std::to_string(img.height) + ", backend '" + backend.id + "' expects " +
                                             std::to_string(side) + "x" + std::to_string(side));
        }
        const auto p = model.predict_one(extract_features(img, model.feature_config()));
        m.posteriors.insert(m.posteriors.end(), p.begin(), p.end());
    }
    return m;
}

std::string serialize_model(const ModelFile& file) {
    const auto& m = file.model;
    std::string out;
    out += "#model=softmax\n";
    out += "#tool_version=" + std::string(kToolVersion) + "\n";
    out += "#seed=" + std::to_string(file.seed) + "\n";
    out += "backend_id\t" + file.backend.id + "\n";
    out += "input_side\t" + std::to_string(file.backend.input_spec.side) + "\n";
    out += "class_names";
    for (const auto& name : file.class_names) out += "\t" + name;
    out += "\n";
    out += "classes\t" + std::to_string(m.class_count()) + "\n";
    out += "features\t" + std::to_string(m.feature_dim()) + "\n";
    out += "pool_side\t" + std::to_string(m.feature_config().pool_side) + "\n";
    out += "hist_bins\t" + std::to_string(m.feature_config().hist_bins) + "\n";
    out += "feature_seed\t" + std::to_string(m.feature_config().seed) + "\n";
    out += "feature_mean" + join_doubles(m.feature_mean()) + "\n";
    out += "feature_scale" + join_doubles(m.feature_scale()) + "\n";
    out += "bias" + join_doubles(m.biases()) + "\n";
    const auto f = static_cast<std::size_t>(m.feature_dim());
    for (std::size_t c = 0; c < static_cast<std::size_t>(m.class_count()); ++c) {
        out += "weights" + join_doubles(std::span<const double>(m.weights().data() + c * f, f)) + "\n";
    }
    return out;
}

ModelFile parse_model(const std::vector<std::string>& lines) {
    ModelFile file;
    file.backend.kind = BackendKind::builtin_softmax;
    int classes = 0;
    int features = 0;
    FeatureConfig fc;
    std::vector<double> bias;
    std::vector<double> mean;
    std::vector<double> scale;
    std::vector<double> weights;
    std::size_t weight_rows = 0;
    bool is_model = false;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string_view line = lines[ln];
        const std::string where = "model line " + std::to_string(ln + 1);
        if (line.empty()) continue;
        std::string_view key, value;
        if (text::parse_header(line, key, value)) {
            if (key == "model") is_model = value == "softmax";
            else if (key == "seed") file.seed = text::parse_uint(value, where);
            continue;
        }
        const auto fields = text::split(line, '\t');
        const auto tag = fields[0];
        auto single = [&]() {
            if (fields.size() != 2) throw Error(Errc::schema, where + ": expected one value for '" + std::string(tag) + "'");
            return fields[1];
        };
        auto numbers = [&]() {
            std::vector<double> v;
            for (std::size_t i = 1; i < fields.size(); ++i) v.push_back(text::parse_double(fields[i], where));
            return v;
        };
        if (tag == "backend_id") file.backend.id = single();
        else if (tag == "input_side") file.backend.input_spec.side = static_cast<int>(text::parse_int(single(), where));
        else if (tag == "class_names") {
            for (std::size_t i = 1; i < fields.size(); ++i) file.class_names.emplace_back(fields[i]);
        } else if (tag == "classes") classes = static_cast<int>(text::parse_int(single(), where));
        else if (tag == "features") features = static_cast<int>(text::parse_int(single(), where));
        else if (tag == "pool_side") fc.pool_side = static_cast<int>(text::parse_int(single(), where));
        else if (tag == "hist_bins") fc.hist_bins = static_cast<int>(text::parse_int(single(), where));
        else if (tag == "feature_seed") fc.seed = text::parse_uint(single(), where);
        else if (tag == "bias") bias = numbers();
        else if (tag == "feature_mean") mean = numbers();
        else if (tag == "feature_scale") scale = numbers();
        else if (tag == "weights") {
            auto row = numbers();
            if (row.size() != static_cast<std::size_t>(features)) {
                throw Error(Errc::schema, where + ": weight row has " + std::to_string(row.size()) + " values, expected " +
                                              std::to_string(features));
            }
            weights.insert(weights.end(), row.begin(), row.end());
            ++weight_rows;
        } else {
            throw Error(Errc::schema, where + ": unknown field '" + std::string(tag) + "'");
        }
    }
    if (!is_model) throw Error(Errc::schema, "not a softmax model file (missing #model=softmax)");
    if (classes < 1 || features < 1) throw Error(Errc::schema, "model file has invalid dimensions");
    if (features != feature_dimension(fc)) {
        throw Error(Errc::schema, "model feature count does not match its pooling/histogram configuration");
    }
    if (bias.size() != static_cast<std::size_t>(classes) || weight_rows != static_cast<std::size_t>(classes)) {
        throw Error(Errc::schema, "model file parameter blocks do not match " + std::to_string(classes) + " classes");
    }
    if (file.backend.id.empty() || file.backend.input_spec.side < 1) {
        throw Error(Errc::schema, "model file is missing its backend id or input side");
    }
    if (!file.class_names.empty() && file.class_names.size() != static_cast<std::size_t>(classes)) {
        throw Error(Errc::schema, "model file class names do not match its class count");
    }
    if (mean.size() != static_cast<std::size_t>(features) || scale.size() != static_cast<std::size_t>(features)) {
        throw Error(Errc::schema, "model file normalisation blocks do not match " + std::to_string(features) + " features");
    }
    for (double v : scale) {
        if (!(v > 0.0)) throw Error(Errc::schema, "model file has a non-positive feature scale");
    }
    file.model = SoftmaxModel(classes, features, fc);
    file.model.feature_mean() = std::move(mean);
    file.model.feature_scale() = std::move(scale);
    file.model.weights() = std::move(weights);
    file.model.biases() = std::move(bias);
    return file;
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
    text::write_file(path, serialize_model(file));
}

ModelFile load_model(const std::filesystem::path& path) {
    return parse_model(text::read_lines(path));
}

}  // namespace cloudvote::classifier
