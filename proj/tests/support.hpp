#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "cloudvote/prediction.hpp"
#include "cloudvote/rng.hpp"

namespace testsupport {

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("cloudvote_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Row-stochastic posteriors. With `quantized`, entries are small integers
// normalised by their sum, which makes argmax and score ties common.
inline std::vector<double> random_row(cloudvote::Rng& rng, int classes, bool quantized) {
    std::vector<double> row(static_cast<std::size_t>(classes));
    double sum = 0.0;
    for (auto& v : row) {
        v = quantized ? static_cast<double>(rng.below(4)) : rng.uniform() + 1e-3;
        sum += v;
    }
    if (sum == 0.0) {
        row[rng.below(static_cast<std::uint64_t>(classes))] = 1.0;
        return row;
    }
    for (auto& v : row) v /= sum;
    return row;
}

inline std::vector<cloudvote::prediction::PredictionMatrix> random_backends(cloudvote::Rng& rng, int n, int classes,
                                                                           int images, bool quantized) {
    std::vector<std::string> ids;
    for (int i = 0; i < images; ++i) ids.push_back("img" + std::to_string(i));
    std::vector<cloudvote::prediction::PredictionMatrix> out;
    for (int b = 0; b < n; ++b) {
        cloudvote::prediction::PredictionMatrix m;
        m.backend_id = "b" + std::to_string(b);
        m.classes = classes;
        m.image_ids = ids;
        for (int i = 0; i < images; ++i) {
            const auto row = random_row(rng, classes, quantized);
            m.posteriors.insert(m.posteriors.end(), row.begin(), row.end());
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace testsupport
