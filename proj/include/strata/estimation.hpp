#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/domain.hpp"

namespace strata {

struct AdjustmentSpec {
    enum class Mode { Raw, ZTilde, Full };
    Mode mode = Mode::Raw;
    std::vector<std::string> covariates;  // Full mode; empty means all schema covariates

    static AdjustmentSpec raw() { return {}; }
    static AdjustmentSpec ztilde() { return {Mode::ZTilde, {}}; }
    static AdjustmentSpec full(std::vector<std::string> names = {}) { return {Mode::Full, std::move(names)}; }
};

AdjustmentSpec::Mode parse_adjust_mode(const std::string& s);
const char* to_string(AdjustmentSpec::Mode m);

// Events over (R, Y) used by the bound formulas.
enum class Event { Y1, R1, Y1R0, Y0R1, Y1R1 };
bool event_holds(Event e, int R, int Y);

struct CondProb {
    double value = 0.0;
    bool clamped = false;
    // Per-record influence values, ordered like the input records; their
    // sample mean is zero and their variance over n approximates Var(value).
    std::vector<double> influence;
};

// Index 0 is the below-cutoff arm, index 1 the at-cutoff arm.
struct ArmProbabilities {
    std::array<double, 2> y1{};     // Pr(Y=1 | z)
    std::array<double, 2> r1{};     // Pr(R=1 | z)
    std::array<double, 2> y1_r0{};  // Pr(Y=1, R=0 | z)
    std::array<double, 2> y0_r1{};  // Pr(Y=0, R=1 | z)
    std::array<double, 2> y1_r1{};  // Pr(Y=1, R=1 | z)
    std::array<std::size_t, 2> n{};
    bool clamped = false;
};

struct ArmCounts {
    std::size_t below = 0;
    std::size_t at = 0;
};
ArmCounts count_arms(const std::vector<StudentRecord>& records);
void require_both_arms(const std::vector<StudentRecord>& records, const std::string& what);

// Schema is only consulted in Full mode.
CondProb cond_prob(const std::vector<StudentRecord>& records, Event event, Instrument arm,
                   const AdjustmentSpec& adj, const Schema& schema = {});

ArmProbabilities estimate_arm_probabilities(const std::vector<StudentRecord>& records,
                                            const AdjustmentSpec& adj, const Schema& schema = {});

struct FittedLinearModel {
    std::vector<std::string> names;     // retained columns
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
    std::vector<std::string> dropped;   // collinear columns removed before fitting

    double coefficient(const std::string& name) const;
    bool has(const std::string& name) const;
};

// Least squares via Householder QR after dropping collinear columns.
FittedLinearModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const std::vector<std::string>& names);

// Regression of R on [1, Z, Z~?, X?] within one cell; the "Z" coefficient is
// the first-stage effect.
FittedLinearModel fit_first_stage(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                  const Schema& schema = {});

struct FittedLogisticModel {
    Eigen::VectorXd coefficients;       // over retained columns, intercept first
    std::vector<Eigen::Index> columns;  // retained feature indices (0 = intercept)
    bool converged = false;
    bool ridge = false;                 // ridge-stabilised fallback was used
    bool constant = false;              // all labels identical
    int iterations = 0;

    static constexpr double kFloor = 0.001;
    static constexpr double kCeil = 0.999;

    // Features exclude the intercept, same layout as at fit time.
    Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
    double predict_one(const Eigen::RowVectorXd& features) const;
};

// Weighted IRLS with an intercept added internally. Empty weights mean 1.
FittedLogisticModel fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                                 const Eigen::VectorXd& weights = {});

}  // namespace strata
