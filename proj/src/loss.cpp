#include "strata/loss.hpp"

#include <algorithm>
#include <cmath>

#include "strata/apce.hpp"
#include "strata/ingest.hpp"

namespace strata {

ConfusionCells estimate_confusion(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                  const Schema& schema) {
    const auto p = estimate_arm_probabilities(records, adj, schema);
    ConfusionCells c;
    c.pi_11 = p.y1_r1;
    c.pi_10 = p.y0_r1;
    c.clamped = p.clamped;
    return c;
}

double loss_difference(const ConfusionCells& c, double l10, LossSign sign) {
    const double s = sign == LossSign::Plus ? 1.0 : -1.0;
    return (c.pi_11[0] - c.pi_11[1]) + s * l10 * (c.pi_10[1] - c.pi_10[0]);
}

std::vector<double> default_loss_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 20; ++i) g.push_back(i / 20.0);
    return g;
}

double one_sided_p(double diff, double se, bool* zero_se) {
    if (zero_se) *zero_se = false;
    if (se > 0.0) return 1.0 - normal_cdf(diff / se);
    if (zero_se) *zero_se = true;
    if (diff == 0.0) return 0.5;
    return diff > 0.0 ? 0.0 : 1.0;
}

namespace {

void validate_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw ValidationError("loss grid is empty");
    for (double v : grid)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("loss grid values must lie in [0,1]");
}

// Four numbers per group: pi_11(0), pi_11(1), pi_10(0), pi_10(1).
LossCurve make_curve(const std::string& group, const double* pis, const std::vector<const double*>& reps,
                     const std::vector<double>& grid, const LossOptions& opts) {
    LossCurve curve;
    curve.group = group;
    auto cells_of = [](const double* v) {
        ConfusionCells c;
        c.pi_11 = {v[0], v[1]};
        c.pi_10 = {v[2], v[3]};
        return c;
    };
    const auto est = cells_of(pis);
    std::vector<double> diffs(reps.size());
    for (double l10 : grid) {
        LossCurvePoint pt;
        pt.l10 = l10;
        pt.diff = loss_difference(est, l10, opts.sign);
        std::size_t ok = 0, nonpos = 0;
        for (std::size_t r = 0; r < reps.size(); ++r) {
            const double* v = reps[r];
            diffs[r] = std::isnan(v[0]) ? std::numeric_limits<double>::quiet_NaN()
                                        : loss_difference(cells_of(v), l10, opts.sign);
            if (!std::isnan(diffs[r])) {
                ++ok;
                nonpos += diffs[r] <= 0.0 ? 1 : 0;
            }
        }
        pt.se = reps.size() >= 2 ? sample_sd(diffs) : 0.0;
        if (std::isnan(pt.se)) pt.se = 0.0;
        pt.p_value = one_sided_p(pt.diff, pt.se, &pt.zero_se);
        if (ok > 0) pt.p_percentile = static_cast<double>(nonpos) / static_cast<double>(ok);
        if (!curve.first_rejection && pt.p_value < opts.alpha) curve.first_rejection = l10;
        curve.points.push_back(pt);
    }
    return curve;
}

}  // namespace

LossCurve loss_test_curve(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                          const Schema& schema, const std::vector<double>& grid, const BootstrapConfig& cfg,
                          const LossOptions& opts) {
    validate_grid(grid);
    auto stat = [&](const std::vector<StudentRecord>& s) {
        const auto c = estimate_confusion(s, adj, schema);
        return std::vector<double>{c.pi_11[0], c.pi_11[1], c.pi_10[0], c.pi_10[1]};
    };
    const auto boot = block_bootstrap(records, stat, cfg);
    std::vector<const double*> reps;
    for (const auto& r : boot.replicates) reps.push_back(r.data());
    return make_curve("sample", boot.estimate.data(), reps, grid, opts);
}

std::vector<LossCurve> loss_test_curves(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                        const Schema& schema, const std::vector<double>& grid,
                                        const BootstrapConfig& cfg, const LossOptions& opts) {
    validate_grid(grid);
    std::vector<StudentRecord> near;
    for (const auto& r : records)
        if (r.z != Instrument::Else) near.push_back(r);
    if (near.empty()) throw EmptyArmError("no near-cutoff records");

    std::vector<CellKey> keys;
    std::map<CellKey, double> weights;
    for (const auto& [key, cell] : partition_cells(near)) {
        keys.push_back(key);
        weights[key] = static_cast<double>(cell.size());
    }
    const auto groups = standard_groups(keys, schema.tracks);

    auto stat = [&](const std::vector<StudentRecord>& s) {
        const auto cells = partition_cells(s);
        std::map<CellKey, ConfusionCells> cc;
        for (const auto& key : keys) {
            auto it = cells.find(key);
            if (it == cells.end()) continue;
            try {
                cc[key] = estimate_confusion(it->second, adj, schema);
            } catch (const EstimationError&) {
            }
        }
        std::vector<double> out;
        for (const auto& [name, members] : groups) {
            double v[4] = {0, 0, 0, 0}, total = 0.0;
            bool ok = true;
            for (const auto& m : members) {
                auto it = cc.find(m);
                if (it == cc.end()) {
                    ok = false;
                    break;
                }
                const double w = weights.at(m);
                total += w;
                v[0] += w * it->second.pi_11[0];
                v[1] += w * it->second.pi_11[1];
                v[2] += w * it->second.pi_10[0];
                v[3] += w * it->second.pi_10[1];
            }
            for (double x : v) out.push_back(ok ? x / total : std::numeric_limits<double>::quiet_NaN());
        }
        return out;
    };
    const auto boot = block_bootstrap(near, stat, cfg);

    std::vector<LossCurve> curves;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (std::isnan(boot.estimate[4 * g]))
            throw EmptyArmError("loss curve for '" + groups[g].first + "' has a cell with an empty arm");
        std::vector<const double*> reps;
        for (const auto& r : boot.replicates) reps.push_back(r.data() + 4 * g);
        auto curve = make_curve(groups[g].first, boot.estimate.data() + 4 * g, reps, grid, opts);
        double total = 0.0;
        for (const auto& m : groups[g].second) total += weights.at(m);
        for (const auto& m : groups[g].second) curve.weights[m] = weights.at(m) / total;
        curves.push_back(std::move(curve));
    }
    return curves;
}

}  // namespace strata
