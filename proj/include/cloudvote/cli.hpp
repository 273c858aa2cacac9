#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cloudvote/evaluation.hpp"

namespace cloudvote::cli {

enum class ReportFormat { text, kv, both };

ReportFormat parse_format(std::string_view s);

// Flat key=value run description. Each "backend.id=" line opens a new backend
// group; later "backend.*" keys apply to the most recent group. Relative paths
// resolve against the config file's directory.
struct RunConfig {
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> split_file;
    std::string plan = "kfold:5";
    std::uint64_t seed = 0;
    std::filesystem::path out;
    ReportFormat format = ReportFormat::both;
    std::size_t jobs = 1;
    std::vector<evaluation::BackendConfig> backends;
};

RunConfig parse_run_config(const std::vector<std::string>& lines, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// args[0] is the program name. Errors print one "error[<code>]: <text>" line
// to `err` and return the matching exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cloudvote::cli
