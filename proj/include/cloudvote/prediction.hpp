#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cloudvote::prediction {

// One backend's posterior rows, one per image.
struct PredictionMatrix {
    std::string backend_id;
    std::vector<std::string> image_ids;
    std::vector<std::string> class_names;  // empty or exactly `classes` entries
    int classes = 0;
    std::vector<double> posteriors;  // image_ids.size() x classes, row-major
    // Extra "#key=value" header lines, written back in order (tool version, seed, ...).
    std::vector<std::pair<std::string, std::string>> metadata;

    std::size_t rows() const noexcept { return image_ids.size(); }
    std::span<const double> row(std::size_t i) const {
        return {posteriors.data() + i * static_cast<std::size_t>(classes), static_cast<std::size_t>(classes)};
    }
};

inline constexpr double kRowSumTolerance = 1e-6;

// Shape, range and row-sum checks. Throws Errc::schema or Errc::row_sum.
void validate(const PredictionMatrix& m);

// Keeps the rows named in `ids`, in that order. Throws Errc::id_mismatch for a missing id.
PredictionMatrix select_rows(const PredictionMatrix& m, std::span<const std::string> ids);

// The CN pairing: n backends over one shared, ordered image list.
class EnsembleRun {
public:
    // Throws Errc::id_mismatch when id sequences differ, Errc::schema for a
    // class count mismatch or a duplicate backend id.
    static EnsembleRun assemble(std::vector<PredictionMatrix> backends);

    std::size_t backend_count() const noexcept { return backends_.size(); }
    std::size_t image_count() const noexcept { return backends_.front().rows(); }
    int classes() const noexcept { return backends_.front().classes; }
    const std::vector<std::string>& image_ids() const noexcept { return backends_.front().image_ids; }
    const std::vector<PredictionMatrix>& backends() const noexcept { return backends_; }

private:
    explicit EnsembleRun(std::vector<PredictionMatrix> backends) : backends_(std::move(backends)) {}
    std::vector<PredictionMatrix> backends_;
};

// n x k, row-major by backend.
template <typename T>
struct BackendImageMatrix {
    std::size_t backends = 0;
    std::size_t images = 0;
    std::vector<T> values;

    T at(std::size_t backend, std::size_t image) const { return values[backend * images + image]; }
};

// Argmax of a posterior row, 1-based; ties go to the lowest class index.
int argmax_class(std::span<const double> row);

// D: per-backend decision for every image.
BackendImageMatrix<int> decisions(const EnsembleRun& run);
// S: the posterior attached to each decision in D.
BackendImageMatrix<double> scores(const EnsembleRun& run);

// Interchange text format: "#backend_id=", "#classes=", "#class_names=" headers,
// then "image_id<TAB>p1<TAB>...<TAB>px" per image with 17 significant digits.
std::string serialize(const PredictionMatrix& m);
PredictionMatrix parse(const std::vector<std::string>& lines);

void save_predictions(const PredictionMatrix& m, const std::filesystem::path& path);
PredictionMatrix load_predictions(const std::filesystem::path& path);

}  // namespace cloudvote::prediction
