#include "cloudvote/voting.hpp"

#include <algorithm>
#include <cmath>

#include "cloudvote/error.hpp"
#include "cloudvote/text.hpp"

namespace cloudvote::voting {

double mean_score(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

ModeResult discrete_mode(std::span<const int> votes, std::span<const double> scores, int class_count) {
    if (votes.empty()) throw Error(Errc::invalid_argument, "mode of an empty vote list");
    if (scores.size() != votes.size()) {
        throw Error(Errc::invalid_argument, "got " + std::to_string(scores.size()) + " scores for " +
                                                std::to_string(votes.size()) + " votes");
    }
    if (class_count < 1) throw Error(Errc::invalid_argument, "class count must be >= 1");

    ModeResult r;
    r.vote_counts.assign(static_cast<std::size_t>(class_count), 0);
    for (int v : votes) {
        if (v < 1 || v > class_count) {
            throw Error(Errc::invalid_argument, "vote " + std::to_string(v) + " outside 1.." + std::to_string(class_count));
        }
        ++r.vote_counts[static_cast<std::size_t>(v - 1)];
    }
    r.modal_count = *std::max_element(r.vote_counts.begin(), r.vote_counts.end());
    for (int c = 1; c <= class_count; ++c) {
        if (r.vote_counts[static_cast<std::size_t>(c - 1)] == r.modal_count) r.modal_set.push_back(c);
    }
    r.tie_broken = r.modal_set.size() > 1;

    auto scores_of = [&](int cls) {
        std::vector<double> s;
        for (std::size_t b = 0; b < votes.size(); ++b) {
            if (votes[b] == cls) s.push_back(scores[b]);
        }
        return s;
    };

    // modal_set is ascending, so a strict '>' keeps the lowest index on equal means.
    r.dm = r.modal_set.front();
    r.ds = mean_score(scores_of(r.dm));
    for (std::size_t i = 1; i < r.modal_set.size(); ++i) {
        const double m = mean_score(scores_of(r.modal_set[i]));
        if (m > r.ds) {
            r.dm = r.modal_set[i];
            r.ds = m;
        }
    }
    for (std::size_t b = 0; b < votes.size(); ++b) {
        if (votes[b] == r.dm) r.voters.push_back(b);
    }
    return r;
}

std::vector<VoteOutcome> aggregate(const prediction::EnsembleRun& run) {
    const auto d = prediction::decisions(run);
    const auto s = prediction::scores(run);
    const auto& ids = run.image_ids();
    std::vector<VoteOutcome> out;
    out.reserve(run.image_count());
    std::vector<int> column(run.backend_count());
    std::vector<double> column_scores(run.backend_count());
    for (std::size_t i = 0; i < run.image_count(); ++i) {
        for (std::size_t b = 0; b < run.backend_count(); ++b) {
            column[b] = d.at(b, i);
            column_scores[b] = s.at(b, i);
        }
        auto mode = discrete_mode(column, column_scores, run.classes());
        VoteOutcome o;
        o.image_id = ids[i];
        o.dm = mode.dm;
        o.ds = mode.ds;
        o.vote_counts = std::move(mode.vote_counts);
        o.modal_set = std::move(mode.modal_set);
        o.voters = std::move(mode.voters);
        o.tie_broken = mode.tie_broken;
        out.push_back(std::move(o));
    }
    return out;
}

double grouped_mode(const GroupedModeInput& g) {
    const double l = g.lower, h = g.width, f1 = g.modal, f0 = g.preceding, f2 = g.succeeding;
    if (!std::isfinite(l) || !std::isfinite(h) || !std::isfinite(f0) || !std::isfinite(f1) || !std::isfinite(f2)) {
        throw Error(Errc::invalid_argument, "grouped mode inputs must be finite");
    }
    if (!(h > 0.0)) throw Error(Errc::invalid_argument, "class interval size must be > 0");
    const double denom = 2.0 * f1 - f0 - f2;
    if (!(denom > 0.0)) {
        throw Error(Errc::degenerate_mode, "2*f1 - f0 - f2 = " + text::format_shortest(denom) + " <= 0: no strict modal class");
    }
    if (f1 < f0 || f1 < f2) {
        throw Error(Errc::invalid_argument, "modal frequency f1 must be >= both neighbouring frequencies");
    }
    return l + ((f1 - f0) / denom) * h;
}

std::string serialize_votes(const VoteReport& report) {
    std::string out;
    for (const auto& [key, value] : report.metadata) out += "#" + key + "=" + value + "\n";
    for (const auto& o : report.outcomes) {
        out += o.image_id + "\t" + std::to_string(o.dm) + "\t" + text::format_g17(o.ds) + "\t";
        for (std::size_t c = 0; c < o.vote_counts.size(); ++c) {
            if (c) out += ',';
            out += std::to_string(o.vote_counts[c]);
        }
        out += o.tie_broken ? "\ttrue\n" : "\tfalse\n";
    }
    return out;
}

VoteReport parse_votes(const std::vector<std::string>& lines) {
    VoteReport report;
    std::size_t classes = 0;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string_view line = lines[ln];
        const std::string where = "vote line " + std::to_string(ln + 1);
        if (line.empty()) continue;
        std::string_view key, value;
        if (text::parse_header(line, key, value)) {
            report.metadata.emplace_back(key, value);
            continue;
        }
        const auto fields = text::split(line, '\t');
        if (fields.size() != 5) throw Error(Errc::schema, where + ": expected 5 tab-separated fields");
        VoteOutcome o;
        o.image_id = fields[0];
        o.dm = static_cast<int>(text::parse_int(fields[1], where));
        o.ds = text::parse_double(fields[2], where);
        for (auto c : text::split(fields[3], ',')) o.vote_counts.push_back(static_cast<int>(text::parse_int(c, where)));
        if (fields[4] != "true" && fields[4] != "false") throw Error(Errc::schema, where + ": tie flag must be true or false");
        o.tie_broken = fields[4] == "true";
        if (classes == 0) classes = o.vote_counts.size();
        if (o.vote_counts.size() != classes) throw Error(Errc::schema, where + ": vote count list length changes between rows");
        if (o.dm < 1 || static_cast<std::size_t>(o.dm) > classes) throw Error(Errc::schema, where + ": dm outside the class range");
        const int top = *std::max_element(o.vote_counts.begin(), o.vote_counts.end());
        for (std::size_t c = 0; c < classes; ++c) {
            if (o.vote_counts[c] == top) o.modal_set.push_back(static_cast<int>(c) + 1);
        }
        report.outcomes.push_back(std::move(o));
    }
    return report;
}

void save_votes(const VoteReport& report, const std::filesystem::path& path) {
    text::write_file(path, serialize_votes(report));
}

VoteReport load_votes(const std::filesystem::path& path) {
    return parse_votes(text::read_lines(path));
}

}  // namespace cloudvote::voting
