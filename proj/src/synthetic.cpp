#include "cloudvote/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "cloudvote/error.hpp"
#include "cloudvote/rng.hpp"

namespace cloudvote::synthetic {

namespace {

struct Prototype {
    std::array<double, 3> top;
    std::array<double, 3> bottom;
    double blob_gain;  // brightness added inside cloud blobs
};

// Cycled for class indices beyond the list.
constexpr std::array<Prototype, 5> kPrototypes{{
    {{0.15, 0.35, 0.85}, {0.45, 0.65, 0.95}, 0.00},  // clear sky: blue gradient
    {{0.30, 0.30, 0.33}, {0.20, 0.20, 0.22}, 0.05},  // thick dark clouds
    {{0.88, 0.88, 0.90}, {0.78, 0.78, 0.80}, 0.08},  // thick white clouds
    {{0.55, 0.75, 0.55}, {0.45, 0.60, 0.40}, 0.04},
    {{0.85, 0.55, 0.35}, {0.70, 0.40, 0.25}, 0.04},
}};

}  // namespace

preprocess::RasterImage make_image(std::size_t class_index, int side, std::uint64_t seed) {
    const Prototype& proto = kPrototypes[class_index % kPrototypes.size()];
    Rng rng(seed);
    const double jitter = 0.04 * (2.0 * rng.uniform() - 1.0);
    const double bx = rng.uniform() * side;
    const double by = rng.uniform() * side;
    const double radius = side * (0.15 + 0.2 * rng.uniform());

    preprocess::RasterImage img(side, side);
    for (int y = 0; y < side; ++y) {
        const double t = side > 1 ? static_cast<double>(y) / (side - 1) : 0.0;
        for (int x = 0; x < side; ++x) {
            const double dx = x - bx;
            const double dy = y - by;
            const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
            for (int c = 0; c < 3; ++c) {
                const auto ch = static_cast<std::size_t>(c);
                double v = proto.top[ch] + t * (proto.bottom[ch] - proto.top[ch]);
                v += jitter + proto.blob_gain * blob + 0.02 * rng.normal();
                img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

void write_fixture(const FixtureSpec& spec, const std::filesystem::path& root) {
    if (spec.class_names.size() != spec.per_class.size() || spec.class_names.empty()) {
        throw Error(Errc::invalid_argument, "fixture needs one count per class name");
    }
    std::filesystem::create_directories(root);
    std::uint64_t counter = 0;
    for (std::size_t c = 0; c < spec.class_names.size(); ++c) {
        const auto dir = root / spec.class_names[c];
        std::filesystem::create_directories(dir);
        for (int i = 0; i < spec.per_class[c]; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "img_%04d.png", i);
            const auto img = make_image(c, spec.side, spec.seed * 1000003ULL + counter++);
            preprocess::encode(img, dir / name);
        }
    }
}

}  // namespace cloudvote::synthetic
