#include "cloudvote/error.hpp"

namespace cloudvote {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::usage: return "usage";
        case Errc::io: return "io";
        case Errc::decode: return "decode";
        case Errc::ingest: return "ingest";
        case Errc::schema: return "schema";
        case Errc::row_sum: return "row_sum";
        case Errc::id_mismatch: return "id_mismatch";
        case Errc::dimension: return "dimension";
        case Errc::invalid_argument: return "invalid_argument";
        case Errc::degenerate_mode: return "degenerate_mode";
        case Errc::missing_truth: return "missing_truth";
        case Errc::infeasible: return "infeasible";
    }
    return "unknown";
}

int exit_status(Errc code) noexcept {
    switch (code) {
        case Errc::usage:
            return 2;
        case Errc::io:
        case Errc::decode:
        case Errc::ingest:
            return 3;
        case Errc::schema:
        case Errc::row_sum:
        case Errc::id_mismatch:
        case Errc::dimension:
        case Errc::invalid_argument:
        case Errc::degenerate_mode:
        case Errc::missing_truth:
            return 4;
        case Errc::infeasible:
            return 5;
    }
    return 1;
}

}  // namespace cloudvote
