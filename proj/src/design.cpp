#include "strata/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace strata {

namespace {

std::vector<std::size_t> resolve(const Schema& schema, const std::vector<std::string>& names) {
    std::vector<std::size_t> idx;
    if (names.empty()) {
        for (std::size_t i = 0; i < schema.covariates.size(); ++i) idx.push_back(i);
        return idx;
    }
    for (const auto& n : names) {
        auto i = schema.covariate_index(n);
        if (!i) throw ValidationError("unknown covariate '" + n + "'");
        idx.push_back(*i);
    }
    return idx;
}

}  // namespace

Design covariate_design(const std::vector<StudentRecord>& records, const Schema& schema,
                        const std::vector<std::string>& names) {
    const auto idx = resolve(schema, names);
    Design d;
    for (auto c : idx) {
        const auto& cs = schema.covariates[c];
        if (cs.kind == CovariateKind::Categorical) {
            for (std::size_t l = 1; l < cs.levels.size(); ++l) d.names.push_back(cs.name + "=" + cs.levels[l]);
        } else {
            d.names.push_back(cs.name);
        }
        if (cs.missing_indicator) d.names.push_back(cs.name + "_missing");
    }
    d.X.setZero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(d.names.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& x = records[i].x;
        Eigen::Index col = 0;
        for (auto c : idx) {
            const auto& cs = schema.covariates[c];
            const double v = x.at(c);
            const bool miss = std::isnan(v);
            if (cs.kind == CovariateKind::Categorical) {
                if (!miss && v >= 1) d.X(i, col + static_cast<Eigen::Index>(v) - 1) = 1.0;
                col += static_cast<Eigen::Index>(cs.levels.size()) - 1;
            } else {
                d.X(i, col++) = miss ? 0.0 : v;
            }
            if (cs.missing_indicator) d.X(i, col++) = miss ? 1.0 : 0.0;
        }
    }
    return d;
}

Design balance_columns(const std::vector<StudentRecord>& records, const Schema& schema) {
    Design d;
    for (const auto& cs : schema.covariates) {
        d.names.push_back(cs.name);
        if (cs.missing_indicator) d.names.push_back(cs.name + "_missing");
    }
    d.X.setZero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(d.names.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        Eigen::Index col = 0;
        for (std::size_t c = 0; c < schema.covariates.size(); ++c) {
            const double v = records[i].x.at(c);
            d.X(i, col++) = std::isnan(v) ? 0.0 : v;
            if (schema.covariates[c].missing_indicator) d.X(i, col++) = std::isnan(v) ? 1.0 : 0.0;
        }
    }
    return d;
}

std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& X, double rel_tol) {
    std::vector<Eigen::Index> keep;
    std::vector<Eigen::VectorXd> basis;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        Eigen::VectorXd v = X.col(j);
        const double norm0 = v.norm();
        if (norm0 == 0.0) continue;
        // Two passes of modified Gram-Schmidt keep the residual accurate.
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis) v -= q.dot(v) * q;
        const double norm = v.norm();
        if (norm <= rel_tol * norm0) continue;
        basis.push_back(v / norm);
        keep.push_back(j);
    }
    return keep;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& cols) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(cols[k]);
    return out;
}

Dataset add_below_median_indicator(const Dataset& ds, const std::string& source, const std::string& name) {
    const auto src = ds.schema.covariate_index(source);
    if (!src) throw ValidationError("unknown covariate '" + source + "'");
    if (ds.schema.covariates[*src].kind != CovariateKind::Real)
        throw ValidationError("covariate '" + source + "' is not real-valued");
    if (ds.schema.covariate_index(name)) throw ValidationError("covariate '" + name + "' already exists");

    std::map<std::string, std::vector<double>> by_cohort;
    for (const auto& r : ds.records)
        if (!std::isnan(r.x[*src])) by_cohort[r.cohort].push_back(r.x[*src]);
    std::map<std::string, double> median;
    for (auto& [cohort, v] : by_cohort) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        median[cohort] = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    Dataset out = ds;
    out.schema.covariates.push_back(
        {name, CovariateKind::Binary, ds.schema.covariates[*src].missing_indicator, {}});
    for (auto& r : out.records) {
        const double v = r.x[*src];
        r.x.push_back(std::isnan(v) ? std::numeric_limits<double>::quiet_NaN()
                                    : (v < median.at(r.cohort) ? 1.0 : 0.0));
    }
    return out;
}

}  // namespace strata
