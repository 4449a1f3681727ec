#include "sier/io.hpp"

#include "sier/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace sier::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw DataError("error while reading '" + path.string() + "'");
    return ss.str();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_number(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

[[noreturn]] void csv_fail(const std::string& source, std::size_t line, std::size_t col,
                           const std::string& what) {
    throw DataError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
}

} // namespace

CsvTable parse_csv(const std::string& text, const std::string& source) {
    const auto lines = split_lines(text);
    CsvTable table;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    bool first = true;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const std::string_view line = trim(lines[li]);
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (first) {
            first = false;
            width = fields.size();
            double dummy = 0.0;
            bool header = false;
            for (auto f : fields) header = header || !parse_number(f, dummy);
            if (header) {
                for (auto f : fields) table.header.emplace_back(f);
                continue;
            }
        }
        if (fields.size() != width) {
            csv_fail(source, li + 1, std::min(fields.size(), width) + 1,
                     "expected " + std::to_string(width) + " fields, found " +
                         std::to_string(fields.size()));
        }
        std::vector<double> row(width);
        for (std::size_t c = 0; c < width; ++c) {
            if (!parse_number(fields[c], row[c])) {
                csv_fail(source, li + 1, c + 1, "not a number: '" + std::string(fields[c]) + "'");
            }
            if (!std::isfinite(row[c])) csv_fail(source, li + 1, c + 1, "non-finite value");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(source + ": no data rows");
    table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < width; ++c)
            table.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return table;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path), path.string()); }

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_text(const Matrix& m, const std::vector<std::string>& header) {
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c) out += ',';
        out += header[c];
    }
    if (!header.empty()) out += '\n';
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw DataError("error while writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot move output into place at '" + path.string() + "'");
    }
}

void write_csv(const fs::path& path, const Matrix& m, const std::vector<std::string>& header) {
    write_atomic(path, csv_text(m, header));
}

// ---------------------------------------------------------------------------
// Model file

namespace {

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Matrix matrix_from(const json& j, Index rows, Index cols, const char* name) {
    if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
        throw DataError(std::string("model file: '") + name + "' must have " +
                        std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
            throw DataError(std::string("model file: row ") + std::to_string(i) + " of '" + name +
                            "' must have " + std::to_string(cols) + " entries");
        }
        for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Vector vector_from(const json& j, Index size, const char* name) {
    if (!j.is_array() || static_cast<Index>(j.size()) != size) {
        throw DataError(std::string("model file: '") + name + "' must have " +
                        std::to_string(size) + " entries");
    }
    Vector v(size);
    for (Index i = 0; i < size; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

} // namespace

std::string model_to_json(const FittedModel& model) {
    const auto& st = model.standardizer;
    const auto& dec = model.decomposition;
    json doc;
    doc["schema"] = "sier-model";
    doc["version"] = kModelSchemaVersion;
    doc["p"] = st.p();
    doc["q"] = st.q();
    doc["K"] = dec.k;
    doc["k_opt"] = model.k_opt;
    doc["tau"] = model.tau;
    doc["lambda"] = model.lambda;
    doc["converged"] = dec.converged;
    doc["scale_mode"] = model.scale == ScaleMode::unit_diagonal ? "unit_diagonal" : "center_only";
    doc["penalty_scale"] = model.penalty == PenaltyScale::total ? "total" : "per_observation";
    doc["A"] = matrix_json(dec.a);
    doc["W"] = matrix_json(dec.w);
    doc["mu"] = vector_json(dec.mu);
    doc["x_mean"] = vector_json(st.x_mean);
    doc["x_scale"] = vector_json(st.x_scale);
    doc["dropped"] = st.dropped;
    doc["y_mean"] = vector_json(st.y_mean);
    return doc.dump(1) + "\n";
}

FittedModel model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
    try {
        if (doc.value("schema", std::string()) != "sier-model") {
            throw DataError("model file: missing schema tag 'sier-model'");
        }
        const int version = doc.at("version").get<int>();
        if (version != kModelSchemaVersion) {
            throw DataError("model file: unsupported version " + std::to_string(version));
        }
        FittedModel m;
        const auto p = doc.at("p").get<Index>();
        const auto q = doc.at("q").get<Index>();
        const auto k = doc.at("K").get<Index>();
        m.k_opt = doc.at("k_opt").get<Index>();
        m.tau = doc.at("tau").get<double>();
        m.lambda = doc.at("lambda").get<double>();
        if (p < 1 || q < 1 || k < 0 || m.k_opt < 0 || m.k_opt > k) {
            throw DataError("model file: inconsistent dimensions");
        }
        const std::string scale = doc.value("scale_mode", std::string("unit_diagonal"));
        if (scale != "unit_diagonal" && scale != "center_only") {
            throw DataError("model file: unknown scale_mode '" + scale + "'");
        }
        m.scale = scale == "center_only" ? ScaleMode::center_only : ScaleMode::unit_diagonal;
        const std::string pen = doc.value("penalty_scale", std::string("per_observation"));
        if (pen != "per_observation" && pen != "total") {
            throw DataError("model file: unknown penalty_scale '" + pen + "'");
        }
        m.penalty = pen == "total" ? PenaltyScale::total : PenaltyScale::per_observation;
        auto& st = m.standardizer;
        st.x_mean = vector_from(doc.at("x_mean"), p, "x_mean");
        st.x_scale = vector_from(doc.at("x_scale"), p, "x_scale");
        st.y_mean = vector_from(doc.at("y_mean"), q, "y_mean");
        st.dropped = doc.at("dropped").get<std::vector<Index>>();
        for (std::size_t i = 0; i < st.dropped.size(); ++i) {
            if (st.dropped[i] < 0 || st.dropped[i] >= p || (i && st.dropped[i] <= st.dropped[i - 1])) {
                throw DataError("model file: 'dropped' must be ascending indices below p");
            }
        }
        st.rebuild_kept();
        auto& dec = m.decomposition;
        dec.k = k;
        dec.converged = doc.value("converged", true);
        dec.a = matrix_from(doc.at("A"), st.p_kept(), k, "A");
        dec.w = matrix_from(doc.at("W"), q, k, "W");
        dec.mu = vector_from(doc.at("mu"), k, "mu");
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model file: ") + e.what());
    }
}

void save_model(const fs::path& path, const FittedModel& model) {
    write_atomic(path, model_to_json(model));
}

FittedModel load_model(const fs::path& path) { return model_from_json(read_file(path)); }

// ---------------------------------------------------------------------------
// CV report

std::string cv_report_csv(const CvReport& r) {
    std::string out = "kind,pair,tau,lambda,k,fold,value\n";
    auto pair_cols = [&](std::size_t i) {
        return std::to_string(i) + "," + format_double(r.pairs[i].tau) + "," +
               format_double(r.pairs[i].lambda);
    };
    out += "folds,,,,,," + std::to_string(r.folds) + "\n";
    for (std::size_t i = 0; i < r.pairs.size(); ++i) {
        out += "cap," + pair_cols(i) + "," + std::to_string(r.k_caps[i]) + ",,\n";
    }
    for (std::size_t i = 0; i < r.pairs.size(); ++i) {
        for (std::size_t j = 0; j < r.mean_errors[i].size(); ++j) {
            for (std::size_t f = 0; f < r.fold_errors[i][j].size(); ++f) {
                out += "error," + pair_cols(i) + "," + std::to_string(j + 1) + "," +
                       std::to_string(f) + "," + format_double(r.fold_errors[i][j][f]) + "\n";
            }
            out += "mean," + pair_cols(i) + "," + std::to_string(j + 1) + ",," +
                   format_double(r.mean_errors[i][j]) + "\n";
        }
    }
    for (std::size_t obs = 0; obs < r.fold_of.size(); ++obs) {
        out += "assign,,,," + std::to_string(obs) + "," + std::to_string(r.fold_of[obs]) + ",\n";
    }
    const auto ci = static_cast<std::size_t>(r.chosen_pair);
    const double best = r.chosen_k > 0 ? r.mean_errors[ci][static_cast<std::size_t>(r.chosen_k - 1)] : 0.0;
    out += "chosen," + pair_cols(ci) + "," + std::to_string(r.chosen_k) + ",," +
           format_double(best) + "\n";
    return out;
}

CvReport parse_cv_report(const std::string& text) {
    const auto lines = split_lines(text);
    CvReport r;
    bool have_chosen = false;
    auto fail = [](std::size_t line, const std::string& what) -> void {
        throw DataError("cv report:" + std::to_string(line) + ": " + what);
    };
    auto as_index = [&](std::string_view s, std::size_t line) {
        double v = 0.0;
        if (!parse_number(s, v) || v < 0 || v != static_cast<double>(static_cast<Index>(v))) {
            fail(line, "expected a non-negative integer, got '" + std::string(s) + "'");
        }
        return static_cast<Index>(v);
    };
    auto as_double = [&](std::string_view s, std::size_t line) {
        double v = 0.0;
        if (!parse_number(s, v)) fail(line, "expected a number, got '" + std::string(s) + "'");
        return v;
    };
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::string_view line = trim(lines[li]);
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 7) fail(li + 1, "expected 7 fields");
        const std::string_view kind = f[0];
        if (kind == "folds") {
            r.folds = as_index(f[6], li + 1);
            continue;
        }
        if (kind == "assign") {
            const Index obs = as_index(f[4], li + 1);
            if (obs != static_cast<Index>(r.fold_of.size())) fail(li + 1, "assign rows out of order");
            r.fold_of.push_back(as_index(f[5], li + 1));
            continue;
        }
        const Index pair = as_index(f[1], li + 1);
        const PenaltyPair pp{as_double(f[2], li + 1), as_double(f[3], li + 1)};
        const auto pi = static_cast<std::size_t>(pair);
        if (kind == "cap") {
            if (pi != r.pairs.size()) fail(li + 1, "cap rows out of order");
            r.pairs.push_back(pp);
            r.k_caps.push_back(as_index(f[4], li + 1));
            r.mean_errors.emplace_back();
            r.fold_errors.emplace_back();
            continue;
        }
        if (pi >= r.pairs.size()) fail(li + 1, "unknown pair " + std::to_string(pair));
        const Index k = as_index(f[4], li + 1);
        if (kind == "error") {
            auto& per_k = r.fold_errors[pi];
            if (k < 1 || k > static_cast<Index>(per_k.size()) + 1) fail(li + 1, "error row out of order");
            if (k > static_cast<Index>(per_k.size())) per_k.emplace_back();
            per_k[static_cast<std::size_t>(k - 1)].push_back(as_double(f[6], li + 1));
        } else if (kind == "mean") {
            if (k != static_cast<Index>(r.mean_errors[pi].size()) + 1) fail(li + 1, "mean row out of order");
            r.mean_errors[pi].push_back(as_double(f[6], li + 1));
        } else if (kind == "chosen") {
            r.chosen_pair = pair;
            r.chosen_k = k;
            have_chosen = true;
        } else {
            fail(li + 1, "unknown row kind '" + std::string(kind) + "'");
        }
    }
    if (lines.empty() || trim(lines[0]) != "kind,pair,tau,lambda,k,fold,value") {
        throw DataError("cv report: missing header");
    }
    if (!have_chosen || r.pairs.empty()) throw DataError("cv report: incomplete file");
    return r;
}

CvReport read_cv_report(const fs::path& path) { return parse_cv_report(read_file(path)); }

// ---------------------------------------------------------------------------
// Study and curve output

std::string study_csv(const StudyResult& study) {
    std::string out = "rep,mspe,k_opt,se,sp,n_selected,tau,lambda,agg\n";
    for (const auto& r : study.rows) {
        out += std::to_string(r.rep) + "," + format_double(r.mspe) + "," +
               std::to_string(r.k_opt) + "," + (r.se ? format_double(*r.se) : std::string()) + "," +
               format_double(r.sp) + "," + std::to_string(r.n_selected) + "," +
               format_double(r.tau) + "," + format_double(r.lambda) + ",false\n";
    }
    const Aggregate a[] = {study.mspe(), study.k_opt(), study.se(), study.sp(), study.n_selected()};
    const bool any_se = std::any_of(study.rows.begin(), study.rows.end(),
                                    [](const ReplicateResult& r) { return r.se.has_value(); });
    auto agg_row = [&](const char* label, auto pick) {
        out += std::string(label) + "," + format_double(pick(a[0])) + "," + format_double(pick(a[1])) +
               "," + (any_se ? format_double(pick(a[2])) : std::string()) + "," +
               format_double(pick(a[3])) + "," + format_double(pick(a[4])) + ",,,true\n";
    };
    agg_row("mean", [](const Aggregate& g) { return g.mean; });
    agg_row("sd", [](const Aggregate& g) { return g.sd; });
    return out;
}

std::string curve_csv(const ApproxCurve& curve) {
    std::string out = "k,err_sier,err_svd\n";
    for (Index k = 0; k < curve.sier.size(); ++k) {
        out += std::to_string(k + 1) + "," + format_double(curve.sier(k)) + "," +
               format_double(curve.svd(k)) + "\n";
    }
    return out;
}

TuningGrid read_grid(const fs::path& path, double threshold) {
    const std::string text = read_file(path);
    std::string cleaned;
    for (auto line : split_lines(text)) {
        const auto hash = line.find('#');
        cleaned += std::string(line.substr(0, hash));
        cleaned += '\n';
    }
    const CsvTable t = parse_csv(cleaned, path.string());
    if (t.values.cols() != 2) {
        throw ValidationError(path.string() + ": a grid file needs exactly two columns (tau, lambda)");
    }
    TuningGrid g;
    g.threshold = threshold;
    for (Index i = 0; i < t.values.rows(); ++i) g.pairs.push_back({t.values(i, 0), t.values(i, 1)});
    g.validate();
    return g;
}

} // namespace sier::io
