#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cloudvote::preprocess {

// Interleaved RGB, row-major, values in [0, 1].
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    static constexpr int kChannels = 3;

    RasterImage() = default;
    RasterImage(int w, int h);

    static RasterImage filled(int w, int h, double r, double g, double b);

    double& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
    double at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }

    bool operator==(const RasterImage&) const = default;
};

// Square network input side, e.g. 224, 227 or 331 for common CNNs.
struct InputSpec {
    int side = 224;
    std::string source_note;
};

// Cheap signature check; does not decode pixel data.
bool is_decodable(const std::filesystem::path& path);

// Grayscale sources are replicated to three channels; alpha is dropped.
// Throws Errc::decode carrying the path.
RasterImage decode(const std::filesystem::path& path);

// Writes an 8-bit image; the format follows the file extension.
void encode(const RasterImage& img, const std::filesystem::path& path);

RasterImage from_rgb8(int width, int height, std::span<const std::uint8_t> rgb);

// Bilinear, half-pixel-centred sampling. Non-square inputs are stretched.
// Returns an exact copy when the input already has the target size.
RasterImage resize(const RasterImage& img, int width, int height);
RasterImage resize(const RasterImage& img, const InputSpec& spec);

}  // namespace cloudvote::preprocess
