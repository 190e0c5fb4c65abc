#include "strata/report.hpp"

#include <cmath>
#include <cstdio>

namespace strata {

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

nlohmann::json flags_json(const BoundFlags& f) {
    return {{"numerator_rounded_to_zero", f.numerator_rounded_to_zero},
            {"ub_forced_to_one", f.ub_forced_to_one},
            {"clamped", f.clamped},
            {"denominators_crossed", f.denominators_crossed},
            {"adjusted_probability_clamped", f.adjusted_probability_clamped}};
}

nlohmann::json se_json(const BoundSe& s) {
    return {{"numerator", num(s.numerator)},
            {"denom_lb", num(s.denom_lb)},
            {"denom_ub", num(s.denom_ub)},
            {"apce_lb", num(s.apce_lb)},
            {"apce_ub", num(s.apce_ub)}};
}

template <typename Est>
void fill_common(nlohmann::json& j, const Est& e) {
    j["stratum"] = to_string(e.stratum);
    j["numerator"] = num(e.numerator);
    j["raw_numerator"] = num(e.raw_numerator);
    j["denom_lb"] = num(e.denom_lb);
    j["denom_ub"] = num(e.denom_ub);
    j["apce_lb"] = num(e.apce_lb);
    j["apce_ub"] = num(e.apce_ub);
    j["se"] = se_json(e.se);
    j["flags"] = flags_json(e.flags);
    if (!e.error.empty()) j["error"] = e.error;
}

template <typename Est>
void write_row(std::ostream& out, const std::string& kind, const std::string& group, const std::string& cohort,
               const std::string& track, const std::string& n, const Est& e) {
    out << kind << ',' << csv_field(group) << ',' << cohort << ',' << csv_field(track) << ',' << to_string(e.stratum)
        << ',' << n << ',' << fmt4(e.numerator) << ',' << fmt4(e.denom_lb) << ',' << fmt4(e.denom_ub) << ','
        << fmt4(e.apce_lb) << ',' << fmt4(e.apce_ub) << ',' << fmt4(e.se.numerator) << ',' << fmt4(e.se.denom_lb)
        << ',' << fmt4(e.se.denom_ub) << ',' << fmt4(e.se.apce_lb) << ',' << fmt4(e.se.apce_ub) << ','
        << flag_string(e.flags) << ',' << csv_field(e.error) << '\n';
}

}  // namespace

std::string fmt4(double v) {
    if (std::isnan(v)) return "NA";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s = buf;
    if (s == "-0.0000") s = "0.0000";
    return s;
}

std::string flag_string(const BoundFlags& f) {
    std::string s;
    auto add = [&](bool on, const char* name) {
        if (on) s += (s.empty() ? "" : ";") + std::string(name);
    };
    add(f.numerator_rounded_to_zero, "rounded");
    add(f.ub_forced_to_one, "forced");
    add(f.clamped, "clamped");
    add(f.denominators_crossed, "crossed");
    add(f.adjusted_probability_clamped, "adj_clamped");
    return s;
}

void write_apce_csv(const ApceTable& t, std::ostream& out) {
    out << "row,group,cohort,track,stratum,n,numerator,denom_lb,denom_ub,apce_lb,apce_ub,"
           "se_numerator,se_denom_lb,se_denom_ub,se_apce_lb,se_apce_ub,flags,error\n";
    for (const auto& e : t.cells) write_row(out, "cell", e.cell.track, e.cell.cohort, e.cell.track, std::to_string(e.n), e);
    for (const auto& a : t.aggregates) write_row(out, "aggregate", a.group, "", "", "", a);
}

void write_balance_csv(const BalanceReport& r, std::ostream& out) {
    out << "cohort,track,covariate,mean_below,mean_at,diff,se,p_raw,p_holm,n_below,n_at,n_schools,flags\n";
    for (const auto& row : r.rows)
        out << row.cell.cohort << ',' << csv_field(row.cell.track) << ',' << csv_field(row.covariate) << ','
            << fmt4(row.mean_below) << ',' << fmt4(row.mean_at) << ',' << fmt4(row.diff) << ',' << fmt4(row.se) << ','
            << fmt4(row.p_raw) << ',' << fmt4(row.p_holm) << ',' << row.n_below << ',' << row.n_at << ','
            << row.n_schools << ',' << (row.zero_variance ? "zero_variance" : "") << '\n';
}

void write_first_stage_csv(const std::vector<FirstStageRow>& rows, std::ostream& out) {
    out << "cohort,track,adjustment,delta,se,n,dropped\n";
    for (const auto& r : rows) {
        std::string dropped;
        for (const auto& d : r.dropped) dropped += (dropped.empty() ? "" : ";") + d;
        out << r.cell.cohort << ',' << csv_field(r.cell.track) << ',' << r.adjustment << ',' << fmt4(r.delta) << ','
            << fmt4(r.se) << ',' << r.n << ',' << csv_field(dropped) << '\n';
    }
}

void write_loss_csv(const std::vector<LossCurve>& curves, std::ostream& out) {
    out << "track_group,l10,diff,se,p_value,p_percentile,flags\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            out << csv_field(c.group) << ',' << fmt4(p.l10) << ',' << fmt4(p.diff) << ',' << fmt4(p.se) << ','
                << fmt4(p.p_value) << ',' << fmt4(p.p_percentile) << ',' << (p.zero_se ? "zero_se" : "") << '\n';
}

void write_eta_csv(const std::map<CellKey, EtaEstimate>& eta, std::ostream& out) {
    out << "cohort,track,eta,se,mean_above,weighted_mean_below,n_above,n_below,flags\n";
    for (const auto& [k, e] : eta) {
        std::string flags;
        if (e.unweighted_fallback) flags = "unweighted";
        if (e.nt_model.ridge) flags += (flags.empty() ? "" : ";") + std::string("ridge");
        out << k.cohort << ',' << csv_field(k.track) << ',' << fmt4(e.eta) << ',' << fmt4(e.se) << ','
            << fmt4(e.mean_above) << ',' << fmt4(e.weighted_mean_below) << ',' << e.n_above << ',' << e.n_below << ','
            << flags << '\n';
    }
}

void write_interval_overlay_csv(const ApceTable& er, const ApceTable& noer, const std::vector<UnconfPointRow>& points,
                                std::ostream& out) {
    out << "group,stratum,kind,lower,upper,se_lower,se_upper\n";
    auto bounds = [&](const ApceTable& t, const char* kind) {
        for (const auto& a : t.aggregates)
            out << csv_field(a.group) << ',' << to_string(a.stratum) << ',' << kind << ',' << fmt4(a.apce_lb) << ','
                << fmt4(a.apce_ub) << ',' << fmt4(a.se.apce_lb) << ',' << fmt4(a.se.apce_ub) << '\n';
    };
    bounds(er, "er");
    bounds(noer, "noer");
    for (const auto& p : points)
        out << csv_field(p.group) << ',' << to_string(p.stratum) << ",unconf," << fmt4(p.estimate) << ','
            << fmt4(p.estimate) << ',' << fmt4(p.se) << ',' << fmt4(p.se) << '\n';
}

void write_fairness_csv(const std::vector<FairnessRow>& rows, std::ostream& out) {
    out << "group,attribute,stratum,z,delta,se,ci_low,ci_high\n";
    for (const auto& r : rows) {
        const double lo = r.d.delta - 1.96 * r.d.se, hi = r.d.delta + 1.96 * r.d.se;
        out << csv_field(r.group) << ',' << csv_field(r.d.attribute) << ',' << to_string(r.d.stratum) << ',' << r.d.z
            << ',' << fmt4(r.d.delta) << ',' << fmt4(r.d.se) << ',' << fmt4(lo) << ',' << fmt4(hi) << '\n';
    }
}

nlohmann::json to_json(const CellEstimate& e) {
    nlohmann::json j{{"cohort", e.cell.cohort}, {"track", e.cell.track}, {"n", e.n}};
    fill_common(j, e);
    return j;
}

nlohmann::json to_json(const AggregateEstimate& a) {
    nlohmann::json j{{"group", a.group}};
    fill_common(j, a);
    for (const auto& [k, w] : a.weights) j["weights"].push_back({{"cohort", k.cohort}, {"track", k.track}, {"weight", w}});
    return j;
}

nlohmann::json to_json(const ApceTable& t) {
    nlohmann::json j;
    j["cells"] = nlohmann::json::array();
    for (const auto& e : t.cells) j["cells"].push_back(to_json(e));
    j["aggregates"] = nlohmann::json::array();
    for (const auto& a : t.aggregates) j["aggregates"].push_back(to_json(a));
    j["replications"] = t.replications;
    j["warnings"] = t.warnings;
    j["aggregation_weights"] = "near-cutoff sample size per cell, held fixed across bootstrap replicates";
    return j;
}

nlohmann::json to_json(const BalanceReport& r) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : r.rows)
        j["rows"].push_back({{"cohort", row.cell.cohort},
                             {"track", row.cell.track},
                             {"covariate", row.covariate},
                             {"mean_below", num(row.mean_below)},
                             {"mean_at", num(row.mean_at)},
                             {"diff", num(row.diff)},
                             {"se", num(row.se)},
                             {"p_raw", num(row.p_raw)},
                             {"p_holm", num(row.p_holm)},
                             {"n_below", row.n_below},
                             {"n_at", row.n_at},
                             {"n_schools", row.n_schools},
                             {"zero_variance", row.zero_variance}});
    j["warnings"] = r.warnings;
    j["test"] = "difference in arm means, school-cluster bootstrap SE, normal two-sided p, Holm within cell";
    return j;
}

nlohmann::json to_json(const std::vector<FirstStageRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"cohort", r.cell.cohort},
                     {"track", r.cell.track},
                     {"adjustment", r.adjustment},
                     {"delta", num(r.delta)},
                     {"se", num(r.se)},
                     {"n", r.n},
                     {"dropped", r.dropped}});
    return j;
}

nlohmann::json to_json(const std::vector<LossCurve>& curves) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : curves) {
        nlohmann::json cj{{"group", c.group}};
        cj["first_rejection_l10"] = c.first_rejection ? nlohmann::json(*c.first_rejection) : nlohmann::json(nullptr);
        for (const auto& p : c.points)
            cj["points"].push_back({{"l10", p.l10},
                                    {"diff", num(p.diff)},
                                    {"se", num(p.se)},
                                    {"p_value", num(p.p_value)},
                                    {"p_percentile", num(p.p_percentile)},
                                    {"zero_se", p.zero_se}});
        j.push_back(cj);
    }
    return j;
}

nlohmann::json to_json(const std::map<CellKey, EtaEstimate>& eta) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [k, e] : eta)
        j.push_back({{"cohort", k.cohort},
                     {"track", k.track},
                     {"eta", num(e.eta)},
                     {"se", num(e.se)},
                     {"mean_above", num(e.mean_above)},
                     {"weighted_mean_below", num(e.weighted_mean_below)},
                     {"n_above", e.n_above},
                     {"n_below", e.n_below},
                     {"unweighted_fallback", e.unweighted_fallback},
                     {"score_model_converged", e.nt_model.converged},
                     {"score_model_ridge", e.nt_model.ridge}});
    return j;
}

nlohmann::json to_json(const std::vector<UnconfPointRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"group", r.group}, {"stratum", to_string(r.stratum)}, {"estimate", num(r.estimate)}, {"se", num(r.se)}});
    return j;
}

nlohmann::json to_json(const std::vector<FairnessRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"group", r.group},
                     {"attribute", r.d.attribute},
                     {"stratum", to_string(r.d.stratum)},
                     {"z", r.d.z},
                     {"delta", num(r.d.delta)},
                     {"se", num(r.d.se)}});
    return j;
}

}  // namespace strata
