#include "strata/apce.hpp"

#include <algorithm>
#include <cmath>

#include "strata/ingest.hpp"

namespace strata {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t idx(Stratum s) { return static_cast<std::size_t>(s); }

// Rounds a negative numerator to zero and orders the denominators.
template <typename Est>
void normalise(Est& e, const BoundParts& parts) {
    e.raw_numerator = parts.numerator;
    e.numerator = parts.numerator;
    if (e.numerator < 0.0) {
        e.numerator = 0.0;
        e.flags.numerator_rounded_to_zero = true;
    }
    e.denom_lb = parts.denom_lb;
    e.denom_ub = parts.denom_ub;
    if (e.denom_lb > e.denom_ub) {
        std::swap(e.denom_lb, e.denom_ub);
        e.flags.denominators_crossed = true;
    }
}

double clamp_bound(double v, BoundFlags& flags) {
    if (v < 0.0 || v > 1.0) {
        flags.clamped = true;
        return std::clamp(v, 0.0, 1.0);
    }
    return v;
}

template <typename Est>
void ratios(Est& e, const BoundOptions& opts) {
    const char* name = to_string(e.stratum);
    if (!(e.denom_ub > 0.0))
        throw DegenerateDenominatorError(std::string("APCE_") + name + " lower bound", e.numerator, e.denom_ub);
    e.apce_lb = clamp_bound(e.numerator / e.denom_ub, e.flags);
    if (e.stratum == Stratum::H && opts.force_h_upper_to_one) {
        e.apce_ub = 1.0;
        e.flags.ub_forced_to_one = true;
        return;
    }
    if (!(e.denom_lb > 0.0))
        throw DegenerateDenominatorError(std::string("APCE_") + name + " upper bound", e.numerator, e.denom_lb);
    e.apce_ub = clamp_bound(e.numerator / e.denom_lb, e.flags);
}

// Like bounds_from_parts but records a degenerate denominator instead of
// throwing, so the parts can still enter aggregates.
template <typename Est>
void fill_tolerant(Est& e, const BoundParts& parts, const BoundOptions& opts) {
    normalise(e, parts);
    try {
        ratios(e, opts);
    } catch (const DegenerateDenominatorError& err) {
        e.apce_lb = kNaN;
        e.apce_ub = kNaN;
        e.error = err.what();
    }
}

}  // namespace

CellEstimate bounds_from_parts(Stratum stratum, const BoundParts& parts, const BoundOptions& opts) {
    CellEstimate e;
    e.stratum = stratum;
    normalise(e, parts);
    ratios(e, opts);
    return e;
}

BoundParts er_parts(Stratum stratum, const ArmProbabilities& p) {
    using std::max;
    using std::min;
    switch (stratum) {
        case Stratum::H:
            return {p.y1[1] - p.y1[0],
                    max(p.y1[1], p.y1[0]) - min(p.y1[1], p.y1[0]),
                    1.0 - max(p.y0_r1[1], p.y0_r1[0]) - max(p.y1_r0[1], p.y1_r0[0])};
        case Stratum::AH:
            return {p.y1_r0[0] - p.y1_r0[1], max(p.y1_r0[1], p.y1_r0[0]), min(p.y1[1], p.y1[0])};
        case Stratum::AL:
            return {p.y0_r1[1] - p.y0_r1[0], max(p.y0_r1[1], p.y0_r1[0]), 1.0 - max(p.y1[1], p.y1[0])};
    }
    return {};
}

PotentialOutcomeBounds bounds_y0_y1(const ArmProbabilities& p) {
    PotentialOutcomeBounds b;
    b.lb_y0 = std::max(p.y1_r0[1], p.y1_r0[0]);
    b.ub_y0 = std::min(p.y1[1], p.y1[0]);
    b.lb_y1 = std::max(p.y1[1], p.y1[0]);
    b.ub_y1 = 1.0 - std::max(p.y0_r1[1], p.y0_r1[0]);
    return b;
}

PotentialOutcomeBounds bounds_y0_y1(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                    const Schema& schema) {
    return bounds_y0_y1(estimate_arm_probabilities(records, adj, schema));
}

double apce_h_numerator(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj, const Schema& schema) {
    const auto p = estimate_arm_probabilities(records, adj, schema);
    return p.y1[1] - p.y1[0];
}

CellEstimate apce_bounds(const std::vector<StudentRecord>& records, Stratum stratum, const AdjustmentSpec& adj,
                         const Schema& schema, const BoundOptions& opts) {
    const auto p = estimate_arm_probabilities(records, adj, schema);
    auto e = bounds_from_parts(stratum, er_parts(stratum, p), opts);
    e.flags.adjusted_probability_clamped = p.clamped;
    e.n = p.n[0] + p.n[1];
    if (!records.empty()) e.cell = {records.front().cohort, records.front().track};
    return e;
}

CellEstimate apce_h_bounds(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                           const Schema& schema, const BoundOptions& opts) {
    return apce_bounds(records, Stratum::H, adj, schema, opts);
}

CellEstimate apce_ah_bounds(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                            const Schema& schema) {
    return apce_bounds(records, Stratum::AH, adj, schema);
}

CellEstimate apce_al_bounds(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                            const Schema& schema) {
    return apce_bounds(records, Stratum::AL, adj, schema);
}

AggregateEstimate aggregate(const std::vector<CellEstimate>& estimates, const std::map<CellKey, double>& weights,
                            const std::string& group, const BoundOptions& opts) {
    if (estimates.empty()) throw ValidationError("aggregate: empty group '" + group + "'");
    AggregateEstimate a;
    a.group = group;
    a.stratum = estimates.front().stratum;
    double total = 0.0;
    for (const auto& e : estimates) {
        if (e.stratum != a.stratum) throw ValidationError("aggregate: mixed strata in group '" + group + "'");
        auto it = weights.find(e.cell);
        if (it == weights.end() || !(it->second >= 0.0))
            throw ValidationError("aggregate: no weight for cell " + to_string(e.cell));
        total += it->second;
    }
    if (!(total > 0.0)) throw ValidationError("aggregate: weights of group '" + group + "' sum to zero");
    BoundParts parts;
    double raw = 0.0;
    for (const auto& e : estimates) {
        const double w = weights.at(e.cell) / total;
        a.weights[e.cell] = w;
        parts.numerator += w * e.numerator;
        parts.denom_lb += w * e.denom_lb;
        parts.denom_ub += w * e.denom_ub;
        raw += w * e.raw_numerator;
        a.flags.adjusted_probability_clamped |= e.flags.adjusted_probability_clamped;
    }
    normalise(a, parts);
    a.raw_numerator = raw;
    ratios(a, opts);
    return a;
}

std::vector<std::pair<std::string, std::vector<CellKey>>> standard_groups(const std::vector<CellKey>& cells,
                                                                          const TrackTable& tracks) {
    std::vector<std::pair<std::string, std::vector<CellKey>>> out;
    auto add = [&](const std::string& name, auto pred) {
        std::vector<CellKey> members;
        for (const auto& c : cells)
            if (pred(c)) members.push_back(c);
        if (!members.empty()) out.emplace_back(name, std::move(members));
    };
    for (const auto& t : tracks.tracks())
        if (t.cutoff) add(t.id, [&](const CellKey& c) { return c.track == t.id; });
    for (const auto& g : tracks.groups())
        add(g, [&](const CellKey& c) { return tracks.at(c.track).group == g; });
    add("All", [](const CellKey&) { return true; });
    return out;
}

CellParts er_cell_parts(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj, const Schema& schema) {
    const auto p = estimate_arm_probabilities(records, adj, schema);
    CellParts cp;
    for (auto s : kAllStrata) cp.parts[idx(s)] = er_parts(s, p);
    cp.adjusted_probability_clamped = p.clamped;
    return cp;
}

namespace {

constexpr std::size_t kFields = 5;

template <typename Est>
void push_fields(std::vector<double>& out, const Est& e) {
    out.insert(out.end(), {e.numerator, e.denom_lb, e.denom_ub, e.apce_lb, e.apce_ub});
}

template <typename Est>
void pull_se(Est& e, const std::vector<double>& se, std::size_t at) {
    e.se = {se[at], se[at + 1], se[at + 2], se[at + 3], se[at + 4]};
}

struct TableEval {
    std::vector<CellEstimate> cells;       // keys × strata, in that order
    std::vector<bool> cell_ok;             // parts available
    std::vector<AggregateEstimate> aggs;   // groups × strata
    std::vector<bool> agg_ok;
};

}  // namespace

ApceTable estimate_apce_table(const std::vector<StudentRecord>& records, const std::vector<Stratum>& strata,
                              const AdjustmentSpec& adj, const Schema& schema, const BoundOptions& opts,
                              const BootstrapConfig* cfg, const PartsFn& parts_fn) {
    std::vector<StudentRecord> near;
    for (const auto& r : records)
        if (r.z != Instrument::Else) near.push_back(r);
    if (near.empty()) throw EmptyArmError("no near-cutoff records");
    if (strata.empty()) throw ValidationError("no strata requested");

    ApceTable table;
    std::vector<CellKey> keys;
    for (const auto& [key, cell] : partition_cells(near)) {
        keys.push_back(key);
        table.weights[key] = static_cast<double>(cell.size());
    }
    const auto groups = standard_groups(keys, schema.tracks);
    const PartsFn fn = parts_fn ? parts_fn
                                : PartsFn([&](const std::vector<StudentRecord>& cell) {
                                      return er_cell_parts(cell, adj, schema);
                                  });

    auto evaluate = [&](const std::vector<StudentRecord>& sample, bool strict) {
        TableEval ev;
        const auto cells = partition_cells(sample);
        for (const auto& key : keys) {
            CellParts cp;
            bool ok = false;
            std::string err;
            std::size_t n = 0;
            auto it = cells.find(key);
            if (it != cells.end()) {
                n = it->second.size();
                try {
                    cp = fn(it->second);
                    ok = true;
                } catch (const Error& e) {
                    if (strict && e.kind() != ErrorKind::Estimation) throw;
                    err = e.what();
                }
            } else {
                err = "cell absent from sample";
            }
            for (auto s : strata) {
                CellEstimate e;
                e.cell = key;
                e.stratum = s;
                e.n = n;
                if (ok) {
                    fill_tolerant(e, cp.parts[idx(s)], opts);
                    e.flags.adjusted_probability_clamped = cp.adjusted_probability_clamped;
                } else {
                    e.numerator = e.raw_numerator = e.denom_lb = e.denom_ub = e.apce_lb = e.apce_ub = kNaN;
                    e.error = err;
                }
                ev.cells.push_back(e);
                ev.cell_ok.push_back(ok);
            }
        }
        for (const auto& [name, members] : groups) {
            for (std::size_t si = 0; si < strata.size(); ++si) {
                std::vector<CellEstimate> ests;
                bool ok = true;
                for (const auto& m : members) {
                    const auto k = static_cast<std::size_t>(std::find(keys.begin(), keys.end(), m) - keys.begin());
                    const auto pos = k * strata.size() + si;
                    ok = ok && ev.cell_ok[pos];
                    ests.push_back(ev.cells[pos]);
                }
                AggregateEstimate a;
                a.group = name;
                a.stratum = strata[si];
                if (ok) {
                    // Same arithmetic as aggregate(), tolerant of degenerate ratios.
                    try {
                        a = aggregate(ests, table.weights, name, opts);
                    } catch (const DegenerateDenominatorError& err) {
                        BoundParts parts;
                        double total = 0.0;
                        for (const auto& e : ests) total += table.weights.at(e.cell);
                        for (const auto& e : ests) {
                            const double w = table.weights.at(e.cell) / total;
                            a.weights[e.cell] = w;
                            parts.numerator += w * e.numerator;
                            parts.denom_lb += w * e.denom_lb;
                            parts.denom_ub += w * e.denom_ub;
                        }
                        normalise(a, parts);
                        a.apce_lb = a.apce_ub = kNaN;
                        a.error = err.what();
                    }
                } else {
                    a.numerator = a.raw_numerator = a.denom_lb = a.denom_ub = a.apce_lb = a.apce_ub = kNaN;
                    a.error = "a member cell could not be estimated";
                }
                ev.aggs.push_back(a);
                ev.agg_ok.push_back(ok);
            }
        }
        return ev;
    };

    auto flatten = [&](const TableEval& ev) {
        std::vector<double> out;
        out.reserve((ev.cells.size() + ev.aggs.size()) * kFields);
        for (const auto& e : ev.cells) push_fields(out, e);
        for (const auto& a : ev.aggs) push_fields(out, a);
        return out;
    };

    auto main = evaluate(near, true);
    table.cells = main.cells;
    table.aggregates = main.aggs;

    if (cfg && cfg->replications > 0) {
        const auto boot = block_bootstrap(
            near, [&](const std::vector<StudentRecord>& s) { return flatten(evaluate(s, false)); }, *cfg);
        table.replications = cfg->replications;
        table.warnings = boot.warnings;
        std::size_t at = 0;
        for (auto& e : table.cells) {
            pull_se(e, boot.se, at);
            at += kFields;
        }
        for (auto& a : table.aggregates) {
            pull_se(a, boot.se, at);
            at += kFields;
        }
    }
    return table;
}

}  // namespace strata
