#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cloudvote/preprocess.hpp"

namespace cloudvote::synthetic {

// Sky-like class prototypes with well separated mean colours, so a linear
// model over pooled colour features separates them perfectly.
struct FixtureSpec {
    std::vector<std::string> class_names{"clear_sky", "thick_dark", "thick_white"};
    std::vector<int> per_class{100, 100, 100};
    int side = 32;
    std::uint64_t seed = 7;
};

preprocess::RasterImage make_image(std::size_t class_index, int side, std::uint64_t seed);

// Writes <root>/<class_name>/img_NNNN.png for every class.
void write_fixture(const FixtureSpec& spec, const std::filesystem::path& root);

}  // namespace cloudvote::synthetic
