#include <cmath>

#include "strata/design.hpp"
#include "strata/estimation.hpp"

namespace strata {

namespace {

constexpr int kMaxIter = 100;
constexpr double kTol = 1e-8;
constexpr double kRidge = 1e-6;
constexpr double kDivergence = 30.0;  // |coef| beyond this on a logit scale means separation

double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double clamp_prob(double p) {
    return std::min(FittedLogisticModel::kCeil, std::max(FittedLogisticModel::kFloor, p));
}

struct IrlsResult {
    Eigen::VectorXd beta;
    int iterations = 0;
    bool converged = false;
    bool failed = false;  // singular system or diverging coefficients
};

IrlsResult irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double ridge) {
    const auto p = X.cols();
    IrlsResult r;
    r.beta = Eigen::VectorXd::Zero(p);
    const double ybar = (w.array() * y.array()).sum() / w.sum();
    r.beta(0) = std::log(ybar / (1.0 - ybar));
    Eigen::MatrixXd penalty = Eigen::MatrixXd::Identity(p, p) * ridge;
    penalty(0, 0) = 0.0;

    for (r.iterations = 1; r.iterations <= kMaxIter; ++r.iterations) {
        const Eigen::VectorXd eta = X * r.beta;
        Eigen::VectorXd mu(eta.size()), wt(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            mu(i) = sigmoid(eta(i));
            wt(i) = w(i) * std::max(mu(i) * (1.0 - mu(i)), 1e-12);
        }
        // Newton step: (X'WX + P) d = X'w(y - mu) - P beta
        const Eigen::MatrixXd H = X.transpose() * wt.asDiagonal() * X + penalty;
        const Eigen::VectorXd g = X.transpose() * (w.array() * (y - mu).array()).matrix() - penalty * r.beta;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            r.failed = true;
            return r;
        }
        const Eigen::VectorXd step = ldlt.solve(g);
        if (!step.allFinite()) {
            r.failed = true;
            return r;
        }
        r.beta += step;
        if (r.beta.cwiseAbs().maxCoeff() > kDivergence) {
            r.failed = true;
            return r;
        }
        if (step.cwiseAbs().maxCoeff() < kTol) {
            r.converged = true;
            return r;
        }
    }
    r.iterations = kMaxIter;
    return r;
}

}  // namespace

Eigen::VectorXd FittedLogisticModel::predict(const Eigen::MatrixXd& features) const {
    Eigen::VectorXd out(features.rows());
    for (Eigen::Index i = 0; i < features.rows(); ++i) out(i) = predict_one(features.row(i));
    return out;
}

double FittedLogisticModel::predict_one(const Eigen::RowVectorXd& features) const {
    double eta = 0.0;
    for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto c = columns[k];
        eta += coefficients(static_cast<Eigen::Index>(k)) * (c == 0 ? 1.0 : features(c - 1));
    }
    return clamp_prob(sigmoid(eta));
}

FittedLogisticModel fit_logistic(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                                 const Eigen::VectorXd& weights) {
    const auto n = features.rows();
    if (labels.size() != n) throw ValidationError("fit_logistic: label count mismatch");
    if (n == 0) throw EstimationError("EmptySample", "fit_logistic: no observations");
    Eigen::VectorXd w = weights.size() == 0 ? Eigen::VectorXd::Ones(n) : weights;
    if (w.size() != n) throw ValidationError("fit_logistic: weight count mismatch");
    if ((w.array() < 0).any() || w.sum() <= 0) throw ValidationError("fit_logistic: invalid weights");

    FittedLogisticModel m;
    const double ybar = (w.array() * labels.array()).sum() / w.sum();
    if (ybar <= 0.0 || ybar >= 1.0) {
        // Degenerate: constant model at the clamped frequency.
        m.constant = true;
        m.converged = true;
        m.columns = {0};
        const double p = clamp_prob(ybar);
        m.coefficients = Eigen::VectorXd::Constant(1, std::log(p / (1.0 - p)));
        return m;
    }

    Eigen::MatrixXd X(n, features.cols() + 1);
    X.col(0).setOnes();
    X.rightCols(features.cols()) = features;
    m.columns = independent_columns(X);
    const Eigen::MatrixXd Xk = select_columns(X, m.columns);

    auto r = irls(Xk, labels, w, 0.0);
    if (r.failed || !r.converged) {
        r = irls(Xk, labels, w, kRidge);
        m.ridge = true;
        m.converged = false;
    } else {
        m.converged = true;
    }
    m.coefficients = r.beta;
    m.iterations = r.iterations;
    if (r.failed) {
        // Even the ridge path diverged: keep the last finite coefficients.
        if (!m.coefficients.allFinite()) m.coefficients.setZero();
    }
    return m;
}

}  // namespace strata
