#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/domain.hpp"
#include "strata/estimation.hpp"
#include "strata/inference.hpp"

namespace strata {

// Per-record principal scores under unconfoundedness of R:
//   e_AL = Pr(Y=0 | R=1, X), e_AH = Pr(Y=1 | R=0, X), e_H = e_1 - e_AH
struct PrincipalScoreSet {
    std::array<Eigen::VectorXd, 3> e;  // indexed by Stratum
    std::array<double, 3> mean{};      // over the fitting sample
    std::size_t h_clamped = 0;         // records where e_H was negative and set to 0
    FittedLogisticModel outcome_r1;    // Pr(Y=1 | R=1, X)
    FittedLogisticModel outcome_r0;    // Pr(Y=1 | R=0, X)

    const Eigen::VectorXd& of(Stratum s) const { return e[static_cast<std::size_t>(s)]; }
};

// Covariates default to every schema covariate.
PrincipalScoreSet fit_principal_scores(const std::vector<StudentRecord>& records, const Schema& schema,
                                       const std::vector<std::string>& covariates = {});

// E[w R | Z=at] - E[w R | Z=below] with w = e_J / mean(e_J). Scores must be
// fitted on the same records in the same order.
double apce_point(const std::vector<StudentRecord>& records, const PrincipalScoreSet& scores, Stratum stratum);

std::array<double, 3> apce_points(const std::vector<StudentRecord>& records, const Schema& schema,
                                  const std::vector<std::string>& covariates = {});

struct FairnessDelta {
    Stratum stratum = Stratum::H;
    int z = 1;
    std::string attribute;
    double delta = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN();
};

// Delta_J(z) = E[w^1 R | Z=z, B=focal] - E[w^0 R | Z=z, B=other], with scores
// fitted separately within each attribute group. The attribute must be a
// binary covariate and is excluded from the score covariates.
std::vector<FairnessDelta> fairness_delta(const std::vector<StudentRecord>& records, const Schema& schema,
                                          const std::string& attribute, int z, int focal = 1,
                                          const std::vector<std::string>& covariates = {});

struct UnconfPointRow {
    std::string group;
    Stratum stratum = Stratum::H;
    double estimate = 0.0;
    double se = std::numeric_limits<double>::quiet_NaN();
};

// Point estimates per track and track group; aggregate rows weight cells by
// near-cutoff sample size.
std::vector<UnconfPointRow> unconf_point_table(const std::vector<StudentRecord>& records, const Schema& schema,
                                               const BootstrapConfig* cfg,
                                               const std::vector<std::string>& covariates = {});

struct FairnessRow {
    std::string group;
    FairnessDelta d;
};

// Deltas for both arms per track and track group.
std::vector<FairnessRow> fairness_table(const std::vector<StudentRecord>& records, const Schema& schema,
                                        const std::string& attribute, const BootstrapConfig* cfg,
                                        const std::vector<std::string>& covariates = {});

}  // namespace strata
