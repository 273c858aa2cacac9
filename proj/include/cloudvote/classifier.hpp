#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cloudvote/prediction.hpp"
#include "cloudvote/preprocess.hpp"

namespace cloudvote::classifier {

// Pooled-intensity + histogram descriptor; the desk-scale stand-in for
// convolutional features. `seed` seeds the weight initialisation of any model
// trained on these features, so backends that share (pool_side, hist_bins)
// still differ.
struct FeatureConfig {
    int pool_side = 4;
    int hist_bins = 8;
    std::uint64_t seed = 0;

    bool operator==(const FeatureConfig&) const = default;
};

// 3 * pool_side^2 + 3 * hist_bins
int feature_dimension(const FeatureConfig& config);

using FeatureVector = std::vector<double>;

// Layout: for each channel the pool_side x pool_side block means (row-major),
// then for each channel the normalised hist_bins histogram.
FeatureVector extract_features(const preprocess::RasterImage& img, const FeatureConfig& config);

enum class BackendKind { builtin_softmax, external_predictions };

struct ClassifierBackend {
    std::string id;
    preprocess::InputSpec input_spec;
    BackendKind kind = BackendKind::builtin_softmax;
};

struct TrainConfig {
    std::size_t minibatch = 10;
    int max_epochs = 6;
    double learn_rate = 3e-4;
    double momentum = 0.9;
    bool shuffle_every_epoch = true;
    // Iterations between validation evaluations; 0 means floor(train_size / minibatch).
    std::size_t validation_frequency = 0;
    std::uint64_t seed = 0;
    // Std-dev of the initial weights; biases start at zero.
    double init_scale = 0.01;
    // Fit per-feature centring/scaling on the training set and store it in the model.
    bool standardize = true;
};

// Throws Errc::invalid_argument on minibatch < 1, learn_rate <= 0, momentum outside [0, 1).
void validate(const TrainConfig& cfg);

class SoftmaxModel {
public:
    SoftmaxModel() = default;
    // Zero weights and biases.
    SoftmaxModel(int class_count, FeatureConfig feature_config);
    // For feature vectors that do not come from extract_features.
    SoftmaxModel(int class_count, int feature_dim, FeatureConfig feature_config);

    int class_count() const noexcept { return class_count_; }
    int feature_dim() const noexcept { return feature_dim_; }
    const FeatureConfig& feature_config() const noexcept { return feature_config_; }

    // class_count x feature_dim, row-major.
    std::vector<double>& weights() noexcept { return weights_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    std::vector<double>& biases() noexcept { return biases_; }
    const std::vector<double>& biases() const noexcept { return biases_; }

    // Input normalisation applied before the linear layer: (f - mean) / scale.
    // Identity (0, 1) unless set.
    std::vector<double>& feature_mean() noexcept { return feature_mean_; }
    const std::vector<double>& feature_mean() const noexcept { return feature_mean_; }
    std::vector<double>& feature_scale() noexcept { return feature_scale_; }
    const std::vector<double>& feature_scale() const noexcept { return feature_scale_; }

    std::vector<double> normalize(std::span<const double> features) const;

    std::vector<double> logits(std::span<const double> features) const;
    // Probability vector over class_count classes.
    std::vector<double> predict_one(std::span<const double> features) const;

    bool operator==(const SoftmaxModel&) const = default;

private:
    int class_count_ = 0;
    int feature_dim_ = 0;
    FeatureConfig feature_config_;
    std::vector<double> weights_;
    std::vector<double> biases_;
    std::vector<double> feature_mean_;
    std::vector<double> feature_scale_;
};

struct Sample {
    FeatureVector features;
    int label = 0;  // 1-based
};

struct Gradient {
    std::vector<double> weights;
    std::vector<double> biases;
};

// Mean cross-entropy over `batch`; fills `grad` (if non-null) with its analytic
// gradient with respect to weights and biases (normalisation held fixed).
double loss_and_gradient(const SoftmaxModel& model, std::span<const Sample> batch, Gradient* grad);

struct ValidationRecord {
    std::size_t iteration = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainLog {
    std::vector<double> epoch_loss;  // mean minibatch loss seen during each epoch
    std::vector<ValidationRecord> validation;
    std::size_t iterations = 0;
};

struct TrainResult {
    SoftmaxModel model;
    TrainLog log;
};

// Minibatch SGD with momentum on the cross-entropy objective:
//   v <- momentum * v - learn_rate * grad;  params <- params + v
TrainResult train_softmax(std::span<const Sample> train, int class_count, const TrainConfig& cfg,
                          const FeatureConfig& feature_config, std::span<const Sample> validation = {});

// Rows follow `images`; every image must already be backend.input_spec sized.
prediction::PredictionMatrix predict(const ClassifierBackend& backend, const SoftmaxModel& model,
                                     std::span<const std::string> image_ids,
                                     std::span<const preprocess::RasterImage> images);

// Self-describing text file; parameters are written in shortest round-trip
// form so save/load is bit-exact.
struct ModelFile {
    ClassifierBackend backend;
    SoftmaxModel model;
    std::vector<std::string> class_names;
    std::uint64_t seed = 0;
};

std::string serialize_model(const ModelFile& file);
ModelFile parse_model(const std::vector<std::string>& lines);
void save_model(const ModelFile& file, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace cloudvote::classifier
