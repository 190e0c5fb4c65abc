#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strata/domain.hpp"
#include "strata/estimation.hpp"
#include "strata/inference.hpp"

namespace strata {

// Pr(R=1, Y=1 | z) and Pr(R=1, Y=0 | z), index 0 below, 1 at the cutoff.
struct ConfusionCells {
    std::array<double, 2> pi_11{};
    std::array<double, 2> pi_10{};
    bool clamped = false;
};

ConfusionCells estimate_confusion(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                  const Schema& schema = {});

// Plus: derived directly from L = Pi_01 + l10 * Pi_10. Minus: the variant
// with the opposite sign on the l10 term, kept for comparison.
enum class LossSign { Plus, Minus };

// L(1) - L(0).
double loss_difference(const ConfusionCells& cells, double l10, LossSign sign = LossSign::Plus);

std::vector<double> default_loss_grid();  // 0, 0.05, ..., 1

struct LossCurvePoint {
    double l10 = 0.0;
    double diff = 0.0;
    double se = 0.0;
    double p_value = 1.0;       // 1 - Phi(diff / se)
    double p_percentile = std::numeric_limits<double>::quiet_NaN();  // share of replicates with diff <= 0
    bool zero_se = false;       // se was 0; p set by convention
};

struct LossOptions {
    LossSign sign = LossSign::Plus;
    double alpha = 0.05;
};

struct LossCurve {
    std::string group;
    std::vector<LossCurvePoint> points;
    std::optional<double> first_rejection;  // smallest l10 with p < alpha
    std::map<CellKey, double> weights;
};

// One-sided p-value for H1: diff > 0.
double one_sided_p(double diff, double se, bool* zero_se = nullptr);

// Single-sample curve (the records are treated as one cell).
LossCurve loss_test_curve(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                          const Schema& schema, const std::vector<double>& grid, const BootstrapConfig& cfg,
                          const LossOptions& opts = {});

// Curves for every track and track group; the confusion cells of a group are
// weighted means over its (cohort, track) cells with near-cutoff sample-size
// weights. All points share one bootstrap replicate set.
std::vector<LossCurve> loss_test_curves(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                        const Schema& schema, const std::vector<double>& grid,
                                        const BootstrapConfig& cfg, const LossOptions& opts = {});

}  // namespace strata
