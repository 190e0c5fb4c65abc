#include "strata/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "strata/design.hpp"
#include "strata/ingest.hpp"

namespace strata {

EtaEstimate estimate_eta(const std::vector<StudentRecord>& records, const Schema& schema,
                         const std::vector<std::string>& covariates) {
    std::vector<StudentRecord> at, below_r0;
    for (const auto& r : records) {
        if (r.z == Instrument::At) at.push_back(r);
        else if (r.z == Instrument::Below && r.R == 0) below_r0.push_back(r);
    }
    EtaEstimate e;
    double sum_above = 0.0;
    for (const auto& r : at)
        if (r.R == 0) {
            sum_above += r.Y;
            ++e.n_above;
        }
    e.n_below = below_r0.size();
    if (e.n_above == 0) throw EmptyArmError("eta: no non-upgraded students at the cutoff");
    if (e.n_below == 0) throw EmptyArmError("eta: no non-upgraded students below the cutoff");
    e.mean_above = sum_above / static_cast<double>(e.n_above);

    bool degenerate = schema.covariates.empty();
    if (!degenerate) {
        const auto Xa = covariate_design(at, schema, covariates);
        Eigen::VectorXd nt(static_cast<Eigen::Index>(at.size()));
        for (std::size_t i = 0; i < at.size(); ++i) nt(static_cast<Eigen::Index>(i)) = 1.0 - at[i].R;
        e.nt_model = fit_logistic(Xa.X, nt);
        degenerate = e.nt_model.constant || e.nt_model.columns.size() <= 1;
    }
    double num = 0.0, den = 0.0;
    if (degenerate) {
        e.unweighted_fallback = true;
        for (const auto& r : below_r0) num += r.Y;
        den = static_cast<double>(below_r0.size());
    } else {
        const auto Xb = covariate_design(below_r0, schema, covariates);
        const Eigen::VectorXd w = e.nt_model.predict(Xb.X);
        for (std::size_t i = 0; i < below_r0.size(); ++i) {
            num += w(static_cast<Eigen::Index>(i)) * below_r0[i].Y;
            den += w(static_cast<Eigen::Index>(i));
        }
    }
    e.weighted_mean_below = num / den;
    e.eta = e.mean_above - e.weighted_mean_below;
    return e;
}

BoundParts noer_parts(Stratum stratum, const ArmProbabilities& p, double eta) {
    using std::max;
    using std::min;
    const double shifted_y1 = p.y1[1] - eta;                       // Pr(Y=1|Z=1) - eta
    const double shifted_y0_r1 = p.y0_r1[1] + eta * p.r1[1];       // Pr(Y=0,R=1|Z=1) + eta Pr(R=1|Z=1)
    const double shifted_y1_r0 = p.y1_r0[1] - eta * (1.0 - p.r1[1]);  // Pr(Y=1,R=0|Z=1) - eta Pr(R=0|Z=1)
    switch (stratum) {
        case Stratum::H:
            return {p.y1[1] - p.y1[0] - eta,
                    max(shifted_y1, p.y1[0]) - min(shifted_y1, p.y1[0]),
                    1.0 - max(shifted_y0_r1, p.y0_r1[0]) - max(shifted_y1_r0, p.y1_r0[0])};
        case Stratum::AH:
            return {p.y1_r0[0] - p.y1_r0[1] + eta * (1.0 - p.r1[1]), max(shifted_y1_r0, p.y1_r0[0]),
                    min(shifted_y1, p.y1[0])};
        case Stratum::AL:
            return {p.y0_r1[1] - p.y0_r1[0] + eta * p.r1[1], max(shifted_y0_r1, p.y0_r1[0]),
                    1.0 - max(shifted_y1, p.y1[0])};
    }
    return {};
}

CellEstimate noer_bounds(const std::vector<StudentRecord>& records, Stratum stratum, const AdjustmentSpec& adj,
                         double eta, const Schema& schema, const BoundOptions& opts) {
    if (!std::isfinite(eta)) throw ValidationError("eta must be finite");
    const auto p = estimate_arm_probabilities(records, adj, schema);
    auto e = bounds_from_parts(stratum, noer_parts(stratum, p, eta), opts);
    e.flags.adjusted_probability_clamped = p.clamped;
    e.n = p.n[0] + p.n[1];
    if (!records.empty()) e.cell = {records.front().cohort, records.front().track};
    return e;
}

EtaMode parse_eta_mode(const std::string& s) {
    EtaMode m;
    auto number = [&](const std::string& t) {
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
            throw ValidationError("bad number '" + t + "' in --eta");
        return v;
    };
    if (s == "estimate") return m;
    if (s.rfind("fixed=", 0) == 0) {
        m.kind = EtaMode::Kind::Fixed;
        m.value = number(s.substr(6));
        return m;
    }
    if (s.rfind("sweep=", 0) == 0) {
        m.kind = EtaMode::Kind::Sweep;
        const auto body = s.substr(6);
        const auto c1 = body.find(':'), c2 = body.find(':', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ValidationError("--eta sweep expects sweep=<a:b:step>");
        const double a = number(body.substr(0, c1)), b = number(body.substr(c1 + 1, c2 - c1 - 1)),
                     step = number(body.substr(c2 + 1));
        if (!(step > 0.0) || b < a) throw ValidationError("--eta sweep needs a <= b and step > 0");
        const auto count = static_cast<long>(std::floor((b - a) / step + 1e-9));
        for (long i = 0; i <= count; ++i) m.grid.push_back(a + static_cast<double>(i) * step);
        return m;
    }
    throw ValidationError("unknown --eta mode '" + s + "' (estimate|fixed=<v>|sweep=<a:b:step>)");
}

namespace {

CellParts noer_cell_parts(const std::vector<StudentRecord>& cell, const AdjustmentSpec& adj, const Schema& schema,
                          double eta) {
    const auto p = estimate_arm_probabilities(cell, adj, schema);
    CellParts cp;
    for (auto s : kAllStrata) cp.parts[static_cast<std::size_t>(s)] = noer_parts(s, p, eta);
    cp.adjusted_probability_clamped = p.clamped;
    return cp;
}

}  // namespace

SensitivityTable estimate_noer_table(const std::vector<StudentRecord>& records, const std::vector<Stratum>& strata,
                                     const AdjustmentSpec& adj, const Schema& schema, const BoundOptions& opts,
                                     const BootstrapConfig* cfg, const EtaMode& mode,
                                     const std::vector<std::string>& score_covariates) {
    if (mode.kind == EtaMode::Kind::Sweep) throw ValidationError("use eta_sweep for sweep mode");
    SensitivityTable out;
    if (mode.kind == EtaMode::Kind::Fixed) {
        const double eta = mode.value;
        PartsFn fn = [&](const std::vector<StudentRecord>& cell) { return noer_cell_parts(cell, adj, schema, eta); };
        out.joint = estimate_apce_table(records, strata, adj, schema, opts, cfg, fn);
        out.eta_fixed = out.joint;
        return out;
    }

    std::vector<StudentRecord> near;
    for (const auto& r : records)
        if (r.z != Instrument::Else) near.push_back(r);
    const auto cells = partition_cells(near);
    std::vector<CellKey> keys;
    for (const auto& [key, cell] : cells) {
        keys.push_back(key);
        out.eta[key] = estimate_eta(cell, schema, score_covariates);
    }
    if (cfg && cfg->replications > 0) {
        auto stat = [&](const std::vector<StudentRecord>& s) {
            const auto rc = partition_cells(s);
            std::vector<double> v;
            for (const auto& k : keys) {
                auto it = rc.find(k);
                double eta = std::numeric_limits<double>::quiet_NaN();
                if (it != rc.end()) {
                    try {
                        eta = estimate_eta(it->second, schema, score_covariates).eta;
                    } catch (const EstimationError&) {
                    }
                }
                v.push_back(eta);
            }
            return v;
        };
        const auto boot = block_bootstrap(near, stat, *cfg);
        for (std::size_t i = 0; i < keys.size(); ++i) out.eta[keys[i]].se = boot.se[i];
    }

    PartsFn joint = [&](const std::vector<StudentRecord>& cell) {
        const double eta = estimate_eta(cell, schema, score_covariates).eta;
        return noer_cell_parts(cell, adj, schema, eta);
    };
    PartsFn fixed = [&](const std::vector<StudentRecord>& cell) {
        const CellKey key{cell.front().cohort, cell.front().track};
        return noer_cell_parts(cell, adj, schema, out.eta.at(key).eta);
    };
    out.joint = estimate_apce_table(records, strata, adj, schema, opts, cfg, joint);
    out.eta_fixed = estimate_apce_table(records, strata, adj, schema, opts, cfg, fixed);
    return out;
}

std::vector<EtaSweepRow> eta_sweep(const std::vector<StudentRecord>& records, const std::vector<Stratum>& strata,
                                   const AdjustmentSpec& adj, const Schema& schema, const BoundOptions& opts,
                                   const BootstrapConfig* cfg, const std::vector<double>& grid) {
    if (grid.empty()) throw ValidationError("eta sweep grid is empty");
    std::vector<EtaSweepRow> rows;
    for (double eta : grid) {
        EtaMode m;
        m.kind = EtaMode::Kind::Fixed;
        m.value = eta;
        rows.push_back({eta, estimate_noer_table(records, strata, adj, schema, opts, cfg, m).joint});
    }
    return rows;
}

}  // namespace strata
