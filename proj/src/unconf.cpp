#include "strata/unconf.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "strata/apce.hpp"
#include "strata/design.hpp"
#include "strata/ingest.hpp"

namespace strata {

namespace {

constexpr double kMinStratumMass = 1e-6;

std::size_t idx(Stratum s) { return static_cast<std::size_t>(s); }

std::vector<StudentRecord> near_only(const std::vector<StudentRecord>& records) {
    std::vector<StudentRecord> out;
    for (const auto& r : records)
        if (r.z != Instrument::Else) out.push_back(r);
    return out;
}

}  // namespace

PrincipalScoreSet fit_principal_scores(const std::vector<StudentRecord>& records, const Schema& schema,
                                       const std::vector<std::string>& covariates) {
    std::vector<StudentRecord> r1, r0;
    for (const auto& r : records) (r.R ? r1 : r0).push_back(r);
    if (r1.empty() || r0.empty())
        throw EmptyArmError(std::string("principal scores: no records with R=") + (r1.empty() ? "1" : "0"));

    auto labels = [](const std::vector<StudentRecord>& v) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) y(static_cast<Eigen::Index>(i)) = v[i].Y;
        return y;
    };
    PrincipalScoreSet s;
    s.outcome_r1 = fit_logistic(covariate_design(r1, schema, covariates).X, labels(r1));
    s.outcome_r0 = fit_logistic(covariate_design(r0, schema, covariates).X, labels(r0));

    const auto all = covariate_design(records, schema, covariates).X;
    const Eigen::VectorXd p1 = s.outcome_r1.predict(all);
    const Eigen::VectorXd p0 = s.outcome_r0.predict(all);
    auto& al = s.e[idx(Stratum::AL)];
    auto& ah = s.e[idx(Stratum::AH)];
    auto& h = s.e[idx(Stratum::H)];
    al = (1.0 - p1.array()).matrix();
    ah = p0;
    h = p1 - p0;
    for (Eigen::Index i = 0; i < h.size(); ++i)
        if (h(i) < 0.0) {
            h(i) = 0.0;
            ++s.h_clamped;
        }
    for (auto st : kAllStrata) s.mean[idx(st)] = s.of(st).mean();
    return s;
}

double apce_point(const std::vector<StudentRecord>& records, const PrincipalScoreSet& scores, Stratum stratum) {
    const auto& e = scores.of(stratum);
    if (static_cast<std::size_t>(e.size()) != records.size())
        throw ValidationError("principal scores do not match the records");
    const double m = e.mean();
    if (!(m >= kMinStratumMass))
        throw EmptyStratumError(std::string("stratum ") + to_string(stratum) + " has negligible mass");
    double s[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].z == Instrument::Else) continue;
        const int z = records[i].z == Instrument::At ? 1 : 0;
        s[z] += e(static_cast<Eigen::Index>(i)) / m * records[i].R;
        ++n[z];
    }
    if (n[0] == 0 || n[1] == 0) throw EmptyArmError("apce_point: an instrument arm is empty");
    return s[1] / static_cast<double>(n[1]) - s[0] / static_cast<double>(n[0]);
}

std::array<double, 3> apce_points(const std::vector<StudentRecord>& records, const Schema& schema,
                                  const std::vector<std::string>& covariates) {
    const auto near = near_only(records);
    const auto scores = fit_principal_scores(near, schema, covariates);
    std::array<double, 3> out{};
    for (auto s : kAllStrata) out[idx(s)] = apce_point(near, scores, s);
    return out;
}

std::vector<FairnessDelta> fairness_delta(const std::vector<StudentRecord>& records, const Schema& schema,
                                          const std::string& attribute, int z, int focal,
                                          const std::vector<std::string>& covariates) {
    const auto a = schema.covariate_index(attribute);
    if (!a) throw ValidationError("unknown attribute '" + attribute + "'");
    if (schema.covariates[*a].kind != CovariateKind::Binary)
        throw ValidationError("attribute '" + attribute + "' is not binary");
    if (z != 0 && z != 1) throw ValidationError("arm must be 0 or 1");
    if (focal != 0 && focal != 1) throw ValidationError("focal level must be 0 or 1");

    std::vector<std::string> cov = covariates;
    if (cov.empty())
        for (const auto& c : schema.covariates)
            if (c.name != attribute) cov.push_back(c.name);
    cov.erase(std::remove(cov.begin(), cov.end(), attribute), cov.end());

    const Instrument arm = z ? Instrument::At : Instrument::Below;
    // Weighted upgrade rate within attribute group b, for each stratum.
    auto group_rate = [&](int b) {
        std::vector<StudentRecord> g;
        for (const auto& r : records)
            if (r.z != Instrument::Else && !std::isnan(r.x[*a]) && static_cast<int>(r.x[*a]) == b) g.push_back(r);
        std::size_t n_arm = 0;
        for (const auto& r : g) n_arm += r.z == arm ? 1 : 0;
        if (n_arm == 0)
            throw EmptyArmError("fairness: no records with " + attribute + "=" + std::to_string(b) + " in arm " +
                                std::to_string(z));
        const auto scores = fit_principal_scores(g, schema, cov);
        std::array<double, 3> rate{};
        for (auto s : kAllStrata) {
            const auto& e = scores.of(s);
            const double m = e.mean();
            if (!(m >= kMinStratumMass))
                throw EmptyStratumError(std::string("stratum ") + to_string(s) + " has negligible mass in group " +
                                        std::to_string(b));
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (g[i].z == arm) acc += e(static_cast<Eigen::Index>(i)) / m * g[i].R;
            rate[idx(s)] = acc / static_cast<double>(n_arm);
        }
        return rate;
    };
    const auto rf = group_rate(focal);
    const auto ro = group_rate(1 - focal);
    std::vector<FairnessDelta> out;
    for (auto s : kAllStrata) out.push_back({s, z, attribute, rf[idx(s)] - ro[idx(s)]});
    return out;
}

namespace {

// Per-cell values combined into per-group weighted means, with optional
// block-bootstrap SEs. `per_cell` returns a fixed-length vector.
struct GroupedResult {
    std::vector<std::string> groups;
    std::vector<double> estimate;  // groups x width
    std::vector<double> se;
};

GroupedResult grouped(const std::vector<StudentRecord>& records, const Schema& schema, const BootstrapConfig* cfg,
                      std::size_t width,
                      const std::function<std::vector<double>(const std::vector<StudentRecord>&)>& per_cell) {
    const auto near = near_only(records);
    if (near.empty()) throw EmptyArmError("no near-cutoff records");
    std::vector<CellKey> keys;
    std::map<CellKey, double> weights;
    for (const auto& [key, cell] : partition_cells(near)) {
        keys.push_back(key);
        weights[key] = static_cast<double>(cell.size());
    }
    const auto groups = standard_groups(keys, schema.tracks);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    auto stat = [&](const std::vector<StudentRecord>& s) {
        const auto cells = partition_cells(s);
        std::map<CellKey, std::vector<double>> vals;
        for (const auto& k : keys) {
            auto it = cells.find(k);
            if (it == cells.end()) continue;
            try {
                vals[k] = per_cell(it->second);
            } catch (const EstimationError&) {
            }
        }
        std::vector<double> out;
        for (const auto& [name, members] : groups) {
            std::vector<double> acc(width, 0.0);
            double total = 0.0;
            bool ok = true;
            for (const auto& m : members) {
                auto it = vals.find(m);
                if (it == vals.end()) {
                    ok = false;
                    break;
                }
                total += weights.at(m);
                for (std::size_t j = 0; j < width; ++j) acc[j] += weights.at(m) * it->second[j];
            }
            for (std::size_t j = 0; j < width; ++j) out.push_back(ok ? acc[j] / total : nan);
        }
        return out;
    };

    GroupedResult res;
    for (const auto& g : groups) res.groups.push_back(g.first);
    if (cfg && cfg->replications > 0) {
        const auto boot = block_bootstrap(near, stat, *cfg);
        res.estimate = boot.estimate;
        res.se = boot.se;
    } else {
        res.estimate = stat(near);
        res.se.assign(res.estimate.size(), nan);
    }
    return res;
}

}  // namespace

std::vector<UnconfPointRow> unconf_point_table(const std::vector<StudentRecord>& records, const Schema& schema,
                                               const BootstrapConfig* cfg,
                                               const std::vector<std::string>& covariates) {
    const auto res = grouped(records, schema, cfg, 3, [&](const std::vector<StudentRecord>& cell) {
        const auto p = apce_points(cell, schema, covariates);
        return std::vector<double>(p.begin(), p.end());
    });
    std::vector<UnconfPointRow> rows;
    for (std::size_t g = 0; g < res.groups.size(); ++g)
        for (auto s : kAllStrata)
            rows.push_back({res.groups[g], s, res.estimate[g * 3 + idx(s)], res.se[g * 3 + idx(s)]});
    return rows;
}

std::vector<FairnessRow> fairness_table(const std::vector<StudentRecord>& records, const Schema& schema,
                                        const std::string& attribute, const BootstrapConfig* cfg,
                                        const std::vector<std::string>& covariates) {
    const auto res = grouped(records, schema, cfg, 6, [&](const std::vector<StudentRecord>& cell) {
        std::vector<double> v;
        for (int z = 0; z < 2; ++z)
            for (const auto& d : fairness_delta(cell, schema, attribute, z, 1, covariates)) v.push_back(d.delta);
        return v;
    });
    std::vector<FairnessRow> rows;
    for (std::size_t g = 0; g < res.groups.size(); ++g)
        for (int z = 0; z < 2; ++z)
            for (auto s : kAllStrata) {
                const std::size_t j = g * 6 + static_cast<std::size_t>(z) * 3 + idx(s);
                rows.push_back({res.groups[g], {s, z, attribute, res.estimate[j], res.se[j]}});
            }
    return rows;
}

}  // namespace strata
