#include "cloudvote/prediction.hpp"

#include <cmath>
#include <set>
#include <unordered_map>

#include "cloudvote/error.hpp"
#include "cloudvote/text.hpp"

namespace cloudvote::prediction {

void validate(const PredictionMatrix& m) {
    if (m.backend_id.empty() || text::has_control_chars(m.backend_id)) {
        throw Error(Errc::schema, "backend id must be non-empty printable text");
    }
    if (m.classes < 1) throw Error(Errc::schema, "backend '" + m.backend_id + "': class count must be >= 1");
    if (m.image_ids.empty()) throw Error(Errc::schema, "backend '" + m.backend_id + "': no image rows");
    if (!m.class_names.empty() && m.class_names.size() != static_cast<std::size_t>(m.classes)) {
        throw Error(Errc::schema, "backend '" + m.backend_id + "': " + std::to_string(m.class_names.size()) +
                                      " class names for " + std::to_string(m.classes) + " classes");
    }
    if (m.posteriors.size() != m.rows() * static_cast<std::size_t>(m.classes)) {
        throw Error(Errc::schema, "backend '" + m.backend_id + "': posterior storage does not match shape");
    }
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const std::string& id = m.image_ids[i];
        if (id.empty() || text::has_control_chars(id)) {
            throw Error(Errc::schema, "backend '" + m.backend_id + "': row " + std::to_string(i + 1) + " has an invalid image id");
        }
        if (!seen.insert(id).second) {
            throw Error(Errc::schema, "backend '" + m.backend_id + "': duplicate image id '" + id + "'");
        }
        double sum = 0.0;
        for (double p : m.row(i)) {
            if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
                throw Error(Errc::schema, "backend '" + m.backend_id + "': row " + std::to_string(i + 1) + " (" + id +
                                              ") has a probability outside [0, 1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            throw Error(Errc::row_sum, "backend '" + m.backend_id + "': row " + std::to_string(i + 1) + " (" + id +
                                           ") sums to " + text::format_shortest(sum));
        }
    }
}

PredictionMatrix select_rows(const PredictionMatrix& m, std::span<const std::string> ids) {
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < m.rows(); ++i) index.emplace(m.image_ids[i], i);
    PredictionMatrix out;
    out.backend_id = m.backend_id;
    out.class_names = m.class_names;
    out.classes = m.classes;
    out.metadata = m.metadata;
    out.image_ids.reserve(ids.size());
    out.posteriors.reserve(ids.size() * static_cast<std::size_t>(m.classes));
    for (const auto& id : ids) {
        const auto it = index.find(id);
        if (it == index.end()) {
            throw Error(Errc::id_mismatch, "backend '" + m.backend_id + "' has no prediction for image '" + id + "'");
        }
        out.image_ids.push_back(id);
        const auto row = m.row(it->second);
        out.posteriors.insert(out.posteriors.end(), row.begin(), row.end());
    }
    return out;
}

EnsembleRun EnsembleRun::assemble(std::vector<PredictionMatrix> backends) {
    if (backends.empty()) throw Error(Errc::schema, "an ensemble run needs at least one backend");
    std::set<std::string_view> ids;
    const auto& first = backends.front();
    for (const auto& b : backends) {
        validate(b);
        if (!ids.insert(b.backend_id).second) throw Error(Errc::schema, "duplicate backend id '" + b.backend_id + "'");
        if (b.classes != first.classes) {
            throw Error(Errc::schema, "backend '" + b.backend_id + "' has " + std::to_string(b.classes) +
                                          " classes, expected " + std::to_string(first.classes));
        }
        if (b.image_ids != first.image_ids) {
            throw Error(Errc::id_mismatch, "backend '" + b.backend_id + "' image id sequence differs from backend '" +
                                               first.backend_id + "'");
        }
    }
    return EnsembleRun(std::move(backends));
}

int argmax_class(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
        if (row[c] > row[best]) best = c;
    }
    return static_cast<int>(best) + 1;
}

BackendImageMatrix<int> decisions(const EnsembleRun& run) {
    BackendImageMatrix<int> d{run.backend_count(), run.image_count(), {}};
    d.values.reserve(d.backends * d.images);
    for (const auto& b : run.backends()) {
        for (std::size_t i = 0; i < b.rows(); ++i) d.values.push_back(argmax_class(b.row(i)));
    }
    return d;
}

BackendImageMatrix<double> scores(const EnsembleRun& run) {
    BackendImageMatrix<double> s{run.backend_count(), run.image_count(), {}};
    s.values.reserve(s.backends * s.images);
    for (const auto& b : run.backends()) {
        for (std::size_t i = 0; i < b.rows(); ++i) {
            const auto row = b.row(i);
            s.values.push_back(row[static_cast<std::size_t>(argmax_class(row) - 1)]);
        }
    }
    return s;
}

std::string serialize(const PredictionMatrix& m) {
    validate(m);
    std::string out;
    out += "#backend_id=" + m.backend_id + "\n";
    out += "#classes=" + std::to_string(m.classes) + "\n";
    if (!m.class_names.empty()) {
        out += "#class_names=";
        for (std::size_t c = 0; c < m.class_names.size(); ++c) {
            if (c) out += ',';
            out += m.class_names[c];
        }
        out += "\n";
    }
    for (const auto& [key, value] : m.metadata) out += "#" + key + "=" + value + "\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out += m.image_ids[i];
        for (double p : m.row(i)) {
            out += '\t';
            out += text::format_g17(p);
        }
        out += '\n';
    }
    return out;
}

PredictionMatrix parse(const std::vector<std::string>& lines) {
    PredictionMatrix m;
    bool have_backend = false;
    bool have_classes = false;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const std::string_view line = lines[ln];
        const std::string where = "prediction line " + std::to_string(ln + 1);
        if (line.empty()) continue;
        std::string_view key, value;
        if (text::parse_header(line, key, value)) {
            if (!m.image_ids.empty()) throw Error(Errc::schema, where + ": header after data rows");
            if (key == "backend_id") {
                m.backend_id = value;
                have_backend = true;
            } else if (key == "classes") {
                const auto x = text::parse_int(value, where);
                if (x < 1) throw Error(Errc::schema, where + ": class count must be >= 1");
                m.classes = static_cast<int>(x);
                have_classes = true;
            } else if (key == "class_names") {
                m.class_names.clear();
                for (auto name : text::split(value, ',')) m.class_names.emplace_back(name);
            } else {
                m.metadata.emplace_back(key, value);
            }
            continue;
        }
        if (line.front() == '#') throw Error(Errc::schema, where + ": malformed header, expected #key=value");
        if (!have_classes) throw Error(Errc::schema, where + ": data row before the #classes= header");
        const auto fields = text::split(line, '\t');
        if (fields.size() != static_cast<std::size_t>(m.classes) + 1) {
            throw Error(Errc::schema, where + ": expected " + std::to_string(m.classes + 1) + " tab-separated fields, got " +
                                          std::to_string(fields.size()));
        }
        m.image_ids.emplace_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) m.posteriors.push_back(text::parse_double(fields[c], where));
    }
    if (!have_backend) throw Error(Errc::schema, "prediction file is missing the #backend_id= header");
    if (!have_classes) throw Error(Errc::schema, "prediction file is missing the #classes= header");
    validate(m);
    return m;
}

void save_predictions(const PredictionMatrix& m, const std::filesystem::path& path) {
    text::write_file(path, serialize(m));
}

PredictionMatrix load_predictions(const std::filesystem::path& path) {
    try {
        return parse(text::read_lines(path));
    } catch (const Error& e) {
        if (e.code() == Errc::io) throw;
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

}  // namespace cloudvote::prediction
