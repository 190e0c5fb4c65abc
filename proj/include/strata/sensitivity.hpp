#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "strata/apce.hpp"
#include "strata/estimation.hpp"

namespace strata {

struct EtaEstimate {
    static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
    double eta = 0.0;
    double mean_above = 0.0;           // mean Y over Z=at, R=0
    double weighted_mean_below = 0.0;  // Never-Taker-score weighted mean Y over Z=below, R=0
    double se = kNaN;
    FittedLogisticModel nt_model;      // Pr(R=0 | X, Z=at)
    bool unweighted_fallback = false;  // score model was degenerate
    std::size_t n_above = 0;
    std::size_t n_below = 0;
};

// Covariates default to every schema covariate.
EtaEstimate estimate_eta(const std::vector<StudentRecord>& records, const Schema& schema,
                         const std::vector<std::string>& covariates = {});

// Numerator and denominator bounds without the exclusion restriction, for a
// homogeneous direct effect eta of scoring at the cutoff.
BoundParts noer_parts(Stratum stratum, const ArmProbabilities& p, double eta);

CellEstimate noer_bounds(const std::vector<StudentRecord>& records, Stratum stratum, const AdjustmentSpec& adj,
                         double eta, const Schema& schema = {}, const BoundOptions& opts = {});

struct EtaMode {
    enum class Kind { Estimate, Fixed, Sweep };
    Kind kind = Kind::Estimate;
    double value = 0.0;          // Fixed
    std::vector<double> grid;    // Sweep
};

EtaMode parse_eta_mode(const std::string& s);

struct SensitivityTable {
    std::map<CellKey, EtaEstimate> eta;  // Estimate mode only
    // Bootstrap re-estimates eta in every replicate.
    ApceTable joint;
    // Eta held at the full-sample estimate in every replicate.
    ApceTable eta_fixed;
};

// noER bounds for every cell and aggregate. In Estimate mode eta is
// estimated per (cohort, track) cell; in Fixed mode the given value is used
// everywhere and both tables coincide.
SensitivityTable estimate_noer_table(const std::vector<StudentRecord>& records, const std::vector<Stratum>& strata,
                                     const AdjustmentSpec& adj, const Schema& schema, const BoundOptions& opts,
                                     const BootstrapConfig* cfg, const EtaMode& mode,
                                     const std::vector<std::string>& score_covariates = {});

struct EtaSweepRow {
    double eta = 0.0;
    ApceTable table;
};
std::vector<EtaSweepRow> eta_sweep(const std::vector<StudentRecord>& records, const std::vector<Stratum>& strata,
                                   const AdjustmentSpec& adj, const Schema& schema, const BoundOptions& opts,
                                   const BootstrapConfig* cfg, const std::vector<double>& grid);

}  // namespace strata
