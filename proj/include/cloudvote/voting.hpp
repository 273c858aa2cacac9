#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cloudvote/prediction.hpp"

namespace cloudvote::voting {

// Result of the statistical mode over one image's votes (one column of D).
struct ModeResult {
    std::vector<int> vote_counts;  // index c-1 holds the votes for class c
    std::vector<int> modal_set;    // classes reaching the maximal count, ascending
    int modal_count = 0;
    int dm = 0;
    double ds = 0.0;                   // mean score of the backends voting dm
    std::vector<std::size_t> voters;   // 0-based backend positions voting dm
    bool tie_broken = false;           // |modal_set| > 1
};

// Mean of a set of scores, summed in ascending order so the result does not
// depend on the order the backends were listed in.
double mean_score(std::vector<double> values);

// Modal class of `votes` (1-based, each in 1..class_count). Count ties are
// broken by the highest mean score among each tied class's voters, then by the
// lowest class index. Throws Errc::invalid_argument on empty or misaligned input.
ModeResult discrete_mode(std::span<const int> votes, std::span<const double> scores, int class_count);

struct VoteOutcome {
    std::string image_id;
    int dm = 0;
    double ds = 0.0;
    std::vector<int> vote_counts;
    std::vector<int> modal_set;
    std::vector<std::size_t> voters;
    bool tie_broken = false;
};

// DM and DS for every image of the run, in image order.
std::vector<VoteOutcome> aggregate(const prediction::EnsembleRun& run);

// Frequency table around the modal class of binned data.
struct GroupedModeInput {
    double lower = 0.0;       // l, lower limit of the modal class
    double width = 1.0;       // h, class interval size
    double modal = 0.0;       // f1
    double preceding = 0.0;   // f0
    double succeeding = 0.0;  // f2
};

// l + (f1 - f0) / (2 f1 - f0 - f2) * h. Throws Errc::degenerate_mode when
// 2 f1 - f0 - f2 <= 0, Errc::invalid_argument for h <= 0 or f1 < max(f0, f2).
double grouped_mode(const GroupedModeInput& g);

// Vote report: "#key=value" headers, then per image
// "image_id<TAB>dm<TAB>ds<TAB>c1,c2,...<TAB>true|false".
struct VoteReport {
    std::vector<VoteOutcome> outcomes;
    std::vector<std::pair<std::string, std::string>> metadata;
};

std::string serialize_votes(const VoteReport& report);
VoteReport parse_votes(const std::vector<std::string>& lines);
void save_votes(const VoteReport& report, const std::filesystem::path& path);
VoteReport load_votes(const std::filesystem::path& path);

}  // namespace cloudvote::voting
