#include "strata/ingest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace strata {

namespace {

const char* kind_name(CovariateKind k) {
    switch (k) {
        case CovariateKind::Binary: return "binary";
        case CovariateKind::Categorical: return "categorical";
        case CovariateKind::Real: return "real";
    }
    return "real";
}

CovariateKind parse_kind(const std::string& s) {
    if (s == "binary") return CovariateKind::Binary;
    if (s == "categorical") return CovariateKind::Categorical;
    if (s == "real") return CovariateKind::Real;
    throw ValidationError("unknown covariate kind '" + s + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

bool parse_int(const std::string& s, int& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(v);
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RowError {
    std::string reason;
    std::string detail;
};

const std::vector<std::string> kFixedColumns = {"student_id", "school_id", "cohort", "track",
                                                "score",      "R",         "Y"};

}  // namespace

nlohmann::json schema_to_json(const Schema& schema) {
    nlohmann::json j;
    j["score_range"] = {schema.range.lo, schema.range.hi};
    for (const auto& t : schema.tracks.tracks()) {
        nlohmann::json tj{{"id", t.id}, {"group", t.group}};
        tj["cutoff"] = t.cutoff ? nlohmann::json(*t.cutoff) : nlohmann::json(nullptr);
        j["tracks"].push_back(tj);
    }
    j["covariates"] = nlohmann::json::array();
    for (const auto& c : schema.covariates) {
        nlohmann::json cj{{"name", c.name},
                          {"kind", kind_name(c.kind)},
                          {"missing_indicator", c.missing_indicator}};
        if (c.kind == CovariateKind::Categorical) cj["levels"] = c.levels;
        j["covariates"].push_back(cj);
    }
    return j;
}

Schema schema_from_json(const nlohmann::json& j) {
    Schema s;
    try {
        if (j.contains("score_range")) {
            s.range.lo = j["score_range"].at(0).get<int>();
            s.range.hi = j["score_range"].at(1).get<int>();
            if (s.range.lo > s.range.hi) throw ValidationError("score_range is empty");
        }
        if (j.contains("tracks")) {
            std::vector<TrackSpec> tracks;
            for (const auto& tj : j["tracks"]) {
                TrackSpec t;
                t.id = tj.at("id").get<std::string>();
                t.group = tj.value("group", std::string("All"));
                if (tj.contains("cutoff") && !tj["cutoff"].is_null())
                    t.cutoff = tj["cutoff"].get<int>();
                tracks.push_back(std::move(t));
            }
            s.tracks = TrackTable(std::move(tracks));
        }
        std::set<std::string> names;
        for (const auto& cj : j.value("covariates", nlohmann::json::array())) {
            CovariateSpec c;
            c.name = cj.at("name").get<std::string>();
            c.kind = parse_kind(cj.at("kind").get<std::string>());
            c.missing_indicator = cj.value("missing_indicator", false);
            if (c.kind == CovariateKind::Categorical) {
                c.levels = cj.at("levels").get<std::vector<std::string>>();
                if (c.levels.empty()) throw ValidationError("categorical '" + c.name + "' has no levels");
            }
            if (!names.insert(c.name).second) throw ValidationError("duplicate covariate '" + c.name + "'");
            for (const auto& f : kFixedColumns)
                if (f == c.name) throw ValidationError("covariate name '" + c.name + "' is reserved");
            s.covariates.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed schema: ") + e.what());
    }
    return s;
}

Schema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("schema '" + path + "' is not valid JSON: " + e.what());
    }
    return schema_from_json(j);
}

void save_schema(const Schema& schema, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write schema '" + path + "'");
    out << schema_to_json(schema).dump(2) << '\n';
}

Schema default_schema() {
    Schema s;
    s.covariates = {
        {"female", CovariateKind::Binary, false, {}},
        {"immigrant", CovariateKind::Binary, false, {}},
        {"income", CovariateKind::Real, false, {}},
        {"college_mother", CovariateKind::Binary, true, {}},
        {"region", CovariateKind::Categorical, false, {"north", "middle", "south"}},
    };
    return s;
}

LoadResult parse_csv(std::istream& in, const Schema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("input has no header", "HeaderMismatch");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> expected = kFixedColumns;
    for (const auto& c : schema.covariates) expected.push_back(c.name);
    const auto header = split_csv_line(line);
    if (header != expected) {
        std::string want;
        for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
        throw ValidationError("header mismatch; expected: " + want, "HeaderMismatch");
    }

    LoadResult res;
    res.dataset.schema = schema;
    std::set<std::string> ids;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        auto fail = [&](RowError e) { res.rejects.push_back({lineno, e.reason, e.detail}); };
        if (fields.size() != expected.size()) {
            fail({"Malformed", "expected " + std::to_string(expected.size()) + " fields, got " +
                                   std::to_string(fields.size())});
            continue;
        }
        StudentRecord r;
        r.student_id = fields[0];
        r.school_id = fields[1];
        r.cohort = fields[2];
        r.track = fields[3];
        if (r.student_id.empty() || r.school_id.empty() || r.cohort.empty()) {
            fail({"Malformed", "empty identifier"});
            continue;
        }
        if (!parse_int(fields[4], r.score)) {
            fail({"Malformed", "score '" + fields[4] + "' is not an integer"});
            continue;
        }
        if (!schema.range.contains(r.score)) {
            fail({"OutOfRange", "score " + fields[4]});
            continue;
        }
        const TrackSpec* spec = schema.tracks.find(r.track);
        if (!spec) {
            fail({"UnknownTrack", r.track});
            continue;
        }
        if (!spec->cutoff) {
            fail({"NotUpgradeable", r.track});
            continue;
        }
        if (!parse_int(fields[5], r.R) || (r.R != 0 && r.R != 1)) {
            fail({"Malformed", "R must be 0 or 1"});
            continue;
        }
        if (!parse_int(fields[6], r.Y) || (r.Y != 0 && r.Y != 1)) {
            fail({"Malformed", "Y must be 0 or 1"});
            continue;
        }
        bool ok = true;
        r.x.resize(schema.covariates.size());
        for (std::size_t c = 0; c < schema.covariates.size() && ok; ++c) {
            const auto& cs = schema.covariates[c];
            const auto& f = fields[kFixedColumns.size() + c];
            if (f.empty()) {
                if (!cs.missing_indicator) {
                    fail({"MissingValue", cs.name});
                    ok = false;
                }
                r.x[c] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            switch (cs.kind) {
                case CovariateKind::Binary: {
                    int v = 0;
                    if (!parse_int(f, v) || (v != 0 && v != 1)) {
                        fail({"InvalidCovariate", cs.name + "='" + f + "'"});
                        ok = false;
                    }
                    r.x[c] = v;
                    break;
                }
                case CovariateKind::Categorical: {
                    auto it = std::find(cs.levels.begin(), cs.levels.end(), f);
                    if (it == cs.levels.end()) {
                        fail({"InvalidCovariate", cs.name + "='" + f + "'"});
                        ok = false;
                    }
                    r.x[c] = static_cast<double>(it - cs.levels.begin());
                    break;
                }
                case CovariateKind::Real:
                    if (!parse_double(f, r.x[c])) {
                        fail({"InvalidCovariate", cs.name + "='" + f + "'"});
                        ok = false;
                    }
                    break;
            }
        }
        if (!ok) continue;
        if (!ids.insert(r.student_id).second) {
            fail({"DuplicateId", r.student_id});
            continue;
        }
        res.dataset.records.push_back(std::move(r));
    }
    derive_instrument(res.dataset.records, schema.tracks);
    return res;
}

LoadResult load_csv(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open input '" + path + "'");
    return parse_csv(in, schema);
}

void write_csv(const Dataset& ds, std::ostream& out) {
    const auto& cov = ds.schema.covariates;
    for (std::size_t i = 0; i < kFixedColumns.size(); ++i) out << (i ? "," : "") << kFixedColumns[i];
    for (const auto& c : cov) out << ',' << c.name;
    out << '\n';
    for (const auto& r : ds.records) {
        out << r.student_id << ',' << r.school_id << ',' << r.cohort << ',' << r.track << ','
            << r.score << ',' << r.R << ',' << r.Y;
        for (std::size_t c = 0; c < cov.size(); ++c) {
            out << ',';
            const double v = r.x[c];
            if (std::isnan(v)) continue;
            switch (cov[c].kind) {
                case CovariateKind::Binary: out << static_cast<int>(v); break;
                case CovariateKind::Categorical: out << cov[c].levels.at(static_cast<std::size_t>(v)); break;
                case CovariateKind::Real: out << format_real(v); break;
            }
        }
        out << '\n';
    }
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_csv(ds, out);
}

void write_rejects(const std::vector<Reject>& rejects, std::ostream& out) {
    for (const auto& r : rejects) {
        nlohmann::json j{{"line", r.line}, {"reason", r.reason}};
        if (!r.detail.empty()) j["detail"] = r.detail;
        out << j.dump() << '\n';
    }
}

Dataset near_cutoff_subset(const Dataset& ds) {
    Dataset out;
    out.schema = ds.schema;
    for (const auto& r : ds.records)
        if (r.z != Instrument::Else) out.records.push_back(r);
    return out;
}

std::map<CellKey, std::vector<StudentRecord>> partition_cells(const std::vector<StudentRecord>& records) {
    std::map<CellKey, std::vector<StudentRecord>> cells;
    for (const auto& r : records) cells[{r.cohort, r.track}].push_back(r);
    return cells;
}

}  // namespace strata
