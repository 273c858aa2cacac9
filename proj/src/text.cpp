#include "cloudvote/text.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cloudvote/error.hpp"

namespace cloudvote::text {

std::string format_g17(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    if (ec != std::errc{}) throw Error(Errc::invalid_argument, "cannot format number");
    return std::string(buf, end);
}

std::string format_shortest(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw Error(Errc::invalid_argument, "cannot format number");
    return std::string(buf, end);
}

double parse_double(std::string_view token, std::string_view what) {
    double value = 0.0;
    const char* first = token.data();
    const char* last = first + token.size();
    if (!token.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (token.empty() || ec != std::errc{} || ptr != last) {
        throw Error(Errc::schema, "invalid number '" + std::string(token) + "' for " + std::string(what));
    }
    return value;
}

std::int64_t parse_int(std::string_view token, std::string_view what) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
        throw Error(Errc::schema, "invalid integer '" + std::string(token) + "' for " + std::string(what));
    }
    return value;
}

std::uint64_t parse_uint(std::string_view token, std::string_view what) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
        throw Error(Errc::schema, "invalid unsigned integer '" + std::string(token) + "' for " + std::string(what));
    }
    return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < contents.size()) {
        auto pos = contents.find('\n', start);
        if (pos == std::string::npos) pos = contents.size();
        lines.emplace_back(contents, start, pos - start);
        start = pos + 1;
    }
    return lines;
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(Errc::io, "write to '" + path.string() + "' failed");
}

bool parse_header(std::string_view line, std::string_view& key, std::string_view& value) {
    if (line.empty() || line.front() != '#') return false;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) return false;
    key = line.substr(1, eq - 1);
    value = line.substr(eq + 1);
    return true;
}

bool has_control_chars(std::string_view s) {
    for (unsigned char c : s) {
        if (c < 0x20 || c == 0x7f) return true;
    }
    return false;
}

}  // namespace cloudvote::text
