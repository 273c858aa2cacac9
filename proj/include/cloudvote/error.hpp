#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cloudvote {

// Machine-readable error codes. Every code maps to one process exit status.
enum class Errc {
    usage,
    io,
    decode,
    ingest,
    schema,
    row_sum,
    id_mismatch,
    dimension,
    invalid_argument,
    degenerate_mode,
    missing_truth,
    infeasible,
};

std::string_view errc_name(Errc code) noexcept;

// Exit statuses: 2 usage, 3 I/O, 4 schema/validation, 5 infeasible protocol.
int exit_status(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace cloudvote
