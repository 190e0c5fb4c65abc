#include "strata/estimation.hpp"

#include <algorithm>
#include <cmath>

#include "strata/design.hpp"

namespace strata {

AdjustmentSpec::Mode parse_adjust_mode(const std::string& s) {
    if (s == "raw") return AdjustmentSpec::Mode::Raw;
    if (s == "ztilde") return AdjustmentSpec::Mode::ZTilde;
    if (s == "full") return AdjustmentSpec::Mode::Full;
    throw ValidationError("unknown adjustment mode '" + s + "' (raw|ztilde|full)");
}

const char* to_string(AdjustmentSpec::Mode m) {
    switch (m) {
        case AdjustmentSpec::Mode::Raw: return "raw";
        case AdjustmentSpec::Mode::ZTilde: return "ztilde";
        case AdjustmentSpec::Mode::Full: return "full";
    }
    return "?";
}

bool event_holds(Event e, int R, int Y) {
    switch (e) {
        case Event::Y1: return Y == 1;
        case Event::R1: return R == 1;
        case Event::Y1R0: return Y == 1 && R == 0;
        case Event::Y0R1: return Y == 0 && R == 1;
        case Event::Y1R1: return Y == 1 && R == 1;
    }
    return false;
}

ArmCounts count_arms(const std::vector<StudentRecord>& records) {
    ArmCounts c;
    for (const auto& r : records) {
        if (r.z == Instrument::Below) ++c.below;
        else if (r.z == Instrument::At) ++c.at;
    }
    return c;
}

void require_both_arms(const std::vector<StudentRecord>& records, const std::string& what) {
    const auto c = count_arms(records);
    if (c.below == 0 || c.at == 0)
        throw EmptyArmError(what + ": " + (c.below == 0 ? "below" : "at") + "-cutoff arm is empty");
}

namespace {

constexpr Event kEvents[] = {Event::Y1, Event::R1, Event::Y1R0, Event::Y0R1, Event::Y1R1};

// Near-cutoff records only, with [1, Z, Z~?, X?] columns.
struct AdjustedDesign {
    std::vector<std::size_t> rows;  // indices into the input records
    Design d;
};

AdjustedDesign adjustment_design(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                 const Schema& schema) {
    AdjustedDesign out;
    std::vector<StudentRecord> kept;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].z != Instrument::Else) {
            out.rows.push_back(i);
            if (adj.mode == AdjustmentSpec::Mode::Full) kept.push_back(records[i]);
        }
    const auto n = static_cast<Eigen::Index>(out.rows.size());
    Design cov;
    if (adj.mode == AdjustmentSpec::Mode::Full) {
        if (schema.covariates.empty()) throw ValidationError("full adjustment needs covariates in the schema");
        cov = covariate_design(kept, schema, adj.covariates);
    }
    const bool zt = adj.mode != AdjustmentSpec::Mode::Raw;
    out.d.names = {"(Intercept)", "Z"};
    if (zt) out.d.names.push_back("z_tilde");
    out.d.names.insert(out.d.names.end(), cov.names.begin(), cov.names.end());
    out.d.X.resize(n, static_cast<Eigen::Index>(out.d.names.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[out.rows[static_cast<std::size_t>(i)]];
        out.d.X(i, 0) = 1.0;
        out.d.X(i, 1) = r.z == Instrument::At ? 1.0 : 0.0;
        Eigen::Index c = 2;
        if (zt) out.d.X(i, c++) = r.z_tilde;
        if (cov.X.cols() > 0) out.d.X.block(i, c, 1, cov.X.cols()) = cov.X.row(i);
    }
    return out;
}

struct RegressionAdjustment {
    AdjustedDesign ad;
    std::vector<Eigen::Index> keep;
    Eigen::MatrixXd Xk;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr;
    Eigen::RowVectorXd means;  // column means of the retained design
    Eigen::Index z_col = -1;

    RegressionAdjustment(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                         const Schema& schema)
        : ad(adjustment_design(records, adj, schema)) {
        keep = independent_columns(ad.d.X);
        Xk = select_columns(ad.d.X, keep);
        qr.compute(Xk);
        means = Xk.colwise().mean();
        for (std::size_t k = 0; k < keep.size(); ++k)
            if (keep[k] == 1) z_col = static_cast<Eigen::Index>(k);
        if (z_col < 0) throw EmptyArmError("instrument column is degenerate");
    }

    // Fitted value averaged over the cell with Z forced to the given arm.
    Eigen::RowVectorXd contrast(int z) const {
        Eigen::RowVectorXd a = means;
        a(0) = 1.0;
        a(z_col) = static_cast<double>(z);
        return a;
    }
};

double clamp01(double v, bool& clamped) {
    if (v < 0.0) {
        clamped = true;
        return 0.0;
    }
    if (v > 1.0) {
        clamped = true;
        return 1.0;
    }
    return v;
}

}  // namespace

CondProb cond_prob(const std::vector<StudentRecord>& records, Event event, Instrument arm,
                   const AdjustmentSpec& adj, const Schema& schema) {
    if (arm == Instrument::Else) throw ValidationError("cond_prob arm must be below or at");
    CondProb out;
    out.influence.assign(records.size(), 0.0);
    if (adj.mode == AdjustmentSpec::Mode::Raw) {
        std::size_t n_arm = 0, hits = 0;
        for (const auto& r : records)
            if (r.z == arm) {
                ++n_arm;
                hits += event_holds(event, r.R, r.Y) ? 1 : 0;
            }
        if (n_arm == 0) throw EmptyArmError(std::string(to_string(arm)) + "-cutoff arm is empty");
        out.value = static_cast<double>(hits) / static_cast<double>(n_arm);
        const double scale = static_cast<double>(records.size()) / static_cast<double>(n_arm);
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].z == arm)
                out.influence[i] = ((event_holds(event, records[i].R, records[i].Y) ? 1.0 : 0.0) - out.value) * scale;
        return out;
    }

    require_both_arms(records, "cond_prob");
    RegressionAdjustment ra(records, adj, schema);
    const auto n = ra.Xk.rows();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[ra.ad.rows[static_cast<std::size_t>(i)]];
        y(i) = event_holds(event, r.R, r.Y) ? 1.0 : 0.0;
    }
    const Eigen::VectorXd beta = ra.qr.solve(y);
    const int z = arm == Instrument::At ? 1 : 0;
    const Eigen::RowVectorXd a = ra.contrast(z);
    const double raw_value = a.dot(beta);
    out.value = clamp01(raw_value, out.clamped);

    // a' (X'X/n)^-1 x_i e_i  +  (a_i - a)' beta
    const Eigen::MatrixXd R = ra.qr.matrixQR().topRows(ra.Xk.cols()).triangularView<Eigen::Upper>();
    const Eigen::VectorXd u = R.triangularView<Eigen::Upper>().solve(
        R.transpose().triangularView<Eigen::Lower>().solve(a.transpose()));
    const Eigen::VectorXd resid = y - ra.Xk * beta;
    // Influence values are defined over the near-cutoff rows; records with
    // Z = else contribute zero.
    const double scale = static_cast<double>(records.size()) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd ai = ra.Xk.row(i);
        ai(0) = 1.0;
        ai(ra.z_col) = static_cast<double>(z);
        const double v = static_cast<double>(n) * ra.Xk.row(i).dot(u) * resid(i) + (ai - a).dot(beta);
        out.influence[ra.ad.rows[static_cast<std::size_t>(i)]] = v * scale;
    }
    return out;
}

ArmProbabilities estimate_arm_probabilities(const std::vector<StudentRecord>& records,
                                            const AdjustmentSpec& adj, const Schema& schema) {
    ArmProbabilities p;
    const auto counts = count_arms(records);
    p.n = {counts.below, counts.at};
    require_both_arms(records, "arm probabilities");
    std::array<std::array<double, 2>*, 5> slots = {&p.y1, &p.r1, &p.y1_r0, &p.y0_r1, &p.y1_r1};

    if (adj.mode == AdjustmentSpec::Mode::Raw) {
        std::array<std::array<std::size_t, 2>, 5> hits{};
        for (const auto& r : records) {
            if (r.z == Instrument::Else) continue;
            const int z = r.z == Instrument::At ? 1 : 0;
            for (std::size_t e = 0; e < 5; ++e) hits[e][z] += event_holds(kEvents[e], r.R, r.Y) ? 1 : 0;
        }
        for (std::size_t e = 0; e < 5; ++e)
            for (int z = 0; z < 2; ++z)
                (*slots[e])[z] = static_cast<double>(hits[e][z]) / static_cast<double>(p.n[z]);
        return p;
    }

    RegressionAdjustment ra(records, adj, schema);
    const auto n = ra.Xk.rows();
    Eigen::MatrixXd Y(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = records[ra.ad.rows[static_cast<std::size_t>(i)]];
        for (Eigen::Index e = 0; e < 5; ++e) Y(i, e) = event_holds(kEvents[e], r.R, r.Y) ? 1.0 : 0.0;
    }
    const Eigen::MatrixXd B = ra.qr.solve(Y);
    for (int z = 0; z < 2; ++z) {
        const Eigen::RowVectorXd v = ra.contrast(z) * B;
        for (std::size_t e = 0; e < 5; ++e) (*slots[e])[z] = clamp01(v(static_cast<Eigen::Index>(e)), p.clamped);
    }
    return p;
}

double FittedLinearModel::coefficient(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return coefficients(static_cast<Eigen::Index>(i));
    throw EstimationError("DroppedColumn", "coefficient '" + name + "' not in the fitted model");
}

bool FittedLinearModel::has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

FittedLinearModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names) {
    if (X.rows() != y.size()) throw ValidationError("fit_ols: row mismatch");
    if (static_cast<std::size_t>(X.cols()) != names.size()) throw ValidationError("fit_ols: name count mismatch");
    FittedLinearModel m;
    const auto keep = independent_columns(X);
    std::vector<bool> kept(names.size(), false);
    for (auto k : keep) {
        kept[static_cast<std::size_t>(k)] = true;
        m.names.push_back(names[static_cast<std::size_t>(k)]);
    }
    for (std::size_t j = 0; j < names.size(); ++j)
        if (!kept[j]) m.dropped.push_back(names[j]);
    const Eigen::MatrixXd Xk = select_columns(X, keep);
    if (Xk.cols() == 0) {
        m.coefficients.resize(0);
        m.residuals = y;
        return m;
    }
    m.coefficients = Xk.householderQr().solve(y);
    m.residuals = y - Xk * m.coefficients;
    return m;
}

FittedLinearModel fit_first_stage(const std::vector<StudentRecord>& records, const AdjustmentSpec& adj,
                                  const Schema& schema) {
    require_both_arms(records, "first stage");
    const auto ad = adjustment_design(records, adj, schema);
    Eigen::VectorXd y(static_cast<Eigen::Index>(ad.rows.size()));
    for (std::size_t i = 0; i < ad.rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = records[ad.rows[i]].R;
    auto m = fit_ols(ad.d.X, y, ad.d.names);
    if (!m.has("Z")) throw EmptyArmError("instrument column is degenerate");
    return m;
}

}  // namespace strata
