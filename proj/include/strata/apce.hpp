#pragma once

#include <array>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "strata/domain.hpp"
#include "strata/estimation.hpp"
#include "strata/inference.hpp"

namespace strata {

struct BoundOptions {
    // The H-stratum upper bound is 1 under monotonicity; switch off to use
    // numerator / denom_lb instead.
    bool force_h_upper_to_one = true;
};

struct BoundFlags {
    bool numerator_rounded_to_zero = false;
    bool ub_forced_to_one = false;
    bool clamped = false;                // a bound left [0,1] and was clamped
    bool denominators_crossed = false;   // denom_lb > denom_ub before reordering
    bool adjusted_probability_clamped = false;
};

struct BoundParts {
    double numerator = 0.0;
    double denom_lb = 0.0;
    double denom_ub = 0.0;
};

struct BoundSe {
    static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
    double numerator = kNaN;
    double denom_lb = kNaN;
    double denom_ub = kNaN;
    double apce_lb = kNaN;
    double apce_ub = kNaN;
};

struct CellEstimate {
    CellKey cell;
    Stratum stratum = Stratum::H;
    double numerator = 0.0;      // after rounding negatives to zero
    double raw_numerator = 0.0;  // as estimated
    double denom_lb = 0.0;
    double denom_ub = 0.0;
    double apce_lb = 0.0;
    double apce_ub = 0.0;
    BoundSe se;
    BoundFlags flags;
    std::size_t n = 0;
    std::string error;  // set by table drivers when the ratios are undefined
};

struct AggregateEstimate {
    std::string group;
    Stratum stratum = Stratum::H;
    double numerator = 0.0;
    double raw_numerator = 0.0;
    double denom_lb = 0.0;
    double denom_ub = 0.0;
    double apce_lb = 0.0;
    double apce_ub = 0.0;
    BoundSe se;
    BoundFlags flags;
    std::map<CellKey, double> weights;  // normalised to sum to one
    std::string error;
};

// Ratios from already-estimated numerator and denominator bounds.
CellEstimate bounds_from_parts(Stratum stratum, const BoundParts& parts, const BoundOptions& opts = {});

// Numerator and denominator bounds for one stratum under exclusion.
BoundParts er_parts(Stratum stratum, const ArmProbabilities& p);

struct PotentialOutcomeBounds {
    double lb_y0 = 0.0;
    double ub_y0 = 0.0;
    double lb_y1 = 0.0;
    double ub_y1 = 0.0;
};
PotentialOutcomeBounds bounds_y0_y1(const ArmProbabilities& p);
PotentialOutcomeBounds bounds_y0_y1(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                    const Schema& schema = {});

double apce_h_numerator(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                        const Schema& schema = {});

CellEstimate apce_bounds(const std::vector<StudentRecord>& records, Stratum stratum, const AdjustmentSpec& adj,
                         const Schema& schema = {}, const BoundOptions& opts = {});
CellEstimate apce_h_bounds(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                           const Schema& schema = {}, const BoundOptions& opts = {});
CellEstimate apce_ah_bounds(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                            const Schema& schema = {});
CellEstimate apce_al_bounds(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                            const Schema& schema = {});

// Weighted means of numerator and denominator bounds; APCE bounds are then
// recomputed from the aggregated parts. Weights need not be normalised.
AggregateEstimate aggregate(const std::vector<CellEstimate>& estimates, const std::map<CellKey, double>& weights,
                            const std::string& group, const BoundOptions& opts = {});

// Named groups of cells: one per track (pooled over cohorts), one per track
// group, and "All".
std::vector<std::pair<std::string, std::vector<CellKey>>> standard_groups(const std::vector<CellKey>& cells,
                                                                          const TrackTable& tracks);

struct ApceTable {
    std::vector<CellEstimate> cells;
    std::vector<AggregateEstimate> aggregates;
    std::map<CellKey, double> weights;  // near-cutoff sample sizes, fixed across replicates
    std::size_t replications = 0;
    std::vector<std::string> warnings;
};

struct CellParts {
    std::array<BoundParts, 3> parts;  // indexed by Stratum
    bool adjusted_probability_clamped = false;
};

// Parts for every stratum of one cell; the default evaluates the
// exclusion-restriction formulas.
using PartsFn = std::function<CellParts(const std::vector<StudentRecord>&)>;
CellParts er_cell_parts(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                        const Schema& schema);

// Every cell and aggregate for the given strata, with school-block bootstrap
// SEs when cfg.replications > 0.
ApceTable estimate_apce_table(const std::vector<StudentRecord>& records, const std::vector<Stratum>& strata,
                              const AdjustmentSpec& adj, const Schema& schema, const BoundOptions& opts,
                              const BootstrapConfig* cfg, const PartsFn& parts = {});

}  // namespace strata
