#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/domain.hpp"

namespace strata {

struct Design {
    Eigen::MatrixXd X;
    std::vector<std::string> names;
};

// Model-ready covariate columns, no intercept. Categorical covariates are
// one-hot encoded against their first level; covariates that allow missing
// values get a "<name>_missing" indicator and are imputed to 0.
// An empty name list selects every schema covariate.
Design covariate_design(const std::vector<StudentRecord>& records, const Schema& schema,
                        const std::vector<std::string>& names = {});

// Raw covariate values plus missing indicators, categorical kept as level
// codes. Used for balance tables.
Design balance_columns(const std::vector<StudentRecord>& records, const Schema& schema);

// Indices of a maximal linearly independent subset of columns, chosen
// greedily in column order.
std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& X, double rel_tol = 1e-10);

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& cols);

// Adds a binary covariate equal to 1 when `source` is below its median
// within the record's cohort. Missing source values stay missing.
Dataset add_below_median_indicator(const Dataset& ds, const std::string& source,
                                   const std::string& name);

}  // namespace strata
