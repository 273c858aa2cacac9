#include "cloudvote/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cloudvote/error.hpp"

namespace cloudvote::preprocess {

namespace {

void check_dims(int w, int h) {
    if (w < 1 || h < 1) {
        throw Error(Errc::invalid_argument,
                    "image dimensions must be positive, got " + std::to_string(w) + "x" + std::to_string(h));
    }
}

// a + t*(b - a), clamped to the segment so rounding never leaves [min, max].
inline double lerp_clamped(double a, double b, double t) {
    if (a == b) return a;
    const double v = a + t * (b - a);
    return std::clamp(v, std::min(a, b), std::max(a, b));
}

struct Tap {
    int lo;
    int hi;
    double t;
};

std::vector<Tap> make_taps(int in, int out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int lo = static_cast<int>(std::floor(src));
        const int hi = std::min(lo + 1, in - 1);
        taps[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
    }
    return taps;
}

}  // namespace

RasterImage::RasterImage(int w, int h) : width(w), height(h) {
    check_dims(w, h);
    pixels.assign(static_cast<std::size_t>(w) * h * kChannels, 0.0);
}

RasterImage RasterImage::filled(int w, int h, double r, double g, double b) {
    RasterImage img(w, h);
    for (std::size_t i = 0; i < img.pixels.size(); i += kChannels) {
        img.pixels[i] = r;
        img.pixels[i + 1] = g;
        img.pixels[i + 2] = b;
    }
    return img;
}

bool is_decodable(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) return false;
    try {
        return cv::haveImageReader(path.string());
    } catch (const cv::Exception&) {
        return false;
    }
}

RasterImage decode(const std::filesystem::path& path) {
    cv::Mat mat;
    try {
        mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception&) {
        mat.release();
    }
    if (mat.empty()) throw Error(Errc::decode, "cannot decode image '" + path.string() + "'");

    double scale = 1.0;
    switch (mat.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        case CV_32F:
        case CV_64F: scale = 1.0; break;
        default:
            throw Error(Errc::decode, "unsupported pixel depth in '" + path.string() + "'");
    }
    cv::Mat converted;
    mat.convertTo(converted, CV_64F, scale);

    const int channels = converted.channels();
    if (channels != 1 && channels != 3 && channels != 4) {
        throw Error(Errc::decode, "unsupported channel count in '" + path.string() + "'");
    }
    RasterImage img(converted.cols, converted.rows);
    for (int y = 0; y < converted.rows; ++y) {
        const double* row = converted.ptr<double>(y);
        for (int x = 0; x < converted.cols; ++x) {
            const double* px = row + static_cast<std::ptrdiff_t>(x) * channels;
            for (int c = 0; c < 3; ++c) {
                // OpenCV stores BGR(A)
                const double v = channels == 1 ? px[0] : px[2 - c];
                img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

void encode(const RasterImage& img, const std::filesystem::path& path) {
    cv::Mat mat(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[x * 3 + (2 - c)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    bool ok = false;
    try {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception&) {
        ok = false;
    } catch (const std::filesystem::filesystem_error&) {
        ok = false;
    }
    if (!ok) throw Error(Errc::io, "cannot write image '" + path.string() + "'");
}

RasterImage from_rgb8(int width, int height, std::span<const std::uint8_t> rgb) {
    RasterImage img(width, height);
    if (rgb.size() != img.pixels.size()) {
        throw Error(Errc::dimension, "rgb buffer size does not match " + std::to_string(width) + "x" +
                                         std::to_string(height) + "x3");
    }
    std::transform(rgb.begin(), rgb.end(), img.pixels.begin(),
                   [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });
    return img;
}

RasterImage resize(const RasterImage& img, int width, int height) {
    check_dims(img.width, img.height);
    check_dims(width, height);
    if (img.width == width && img.height == height) return img;

    const auto xs = make_taps(img.width, width);
    const auto ys = make_taps(img.height, height);
    RasterImage out(width, height);
    for (int y = 0; y < height; ++y) {
        const Tap& ty = ys[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            const Tap& tx = xs[static_cast<std::size_t>(x)];
            for (int c = 0; c < RasterImage::kChannels; ++c) {
                const double top = lerp_clamped(img.at(tx.lo, ty.lo, c), img.at(tx.hi, ty.lo, c), tx.t);
                const double bottom = lerp_clamped(img.at(tx.lo, ty.hi, c), img.at(tx.hi, ty.hi, c), tx.t);
                out.at(x, y, c) = lerp_clamped(top, bottom, ty.t);
            }
        }
    }
    return out;
}

RasterImage resize(const RasterImage& img, const InputSpec& spec) {
    return resize(img, spec.side, spec.side);
}

}  // namespace cloudvote::preprocess
