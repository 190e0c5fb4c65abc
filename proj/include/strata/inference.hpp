#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "strata/domain.hpp"

namespace strata {

struct BootstrapConfig {
    std::size_t replications = 1000;
    std::uint64_t seed = 20240501;
    // 0 reads STRATA_BOUNDS_THREADS, falling back to the hardware count.
    std::size_t threads = 0;
};

std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t index);
std::size_t resolve_threads(std::size_t requested);

using Statistic = std::function<std::vector<double>(const std::vector<StudentRecord>&)>;

struct BootstrapResult {
    std::vector<double> estimate;                  // statistic on the original sample
    std::vector<double> se;                        // SD over non-missing replicates
    std::vector<std::vector<double>> replicates;   // [replicate][statistic], NaN when missing
    std::vector<std::size_t> missing;              // per statistic
    std::size_t failed_replicates = 0;             // statistic threw
    std::vector<std::string> warnings;
};

// Resamples schools with replacement independently within each cohort.
// Replicate r draws from a generator seeded by splitmix64(seed, r), so the
// result does not depend on the thread count.
BootstrapResult block_bootstrap(const std::vector<StudentRecord>& records, const Statistic& statistic,
                                const BootstrapConfig& cfg);

// One resampled dataset, as used for replicate r.
std::vector<StudentRecord> resample_schools(const std::vector<StudentRecord>& records, std::uint64_t seed,
                                            std::uint64_t replicate);

double sample_sd(const std::vector<double>& values);  // n-1 denominator, NaN skipped
double normal_cdf(double x);

std::vector<double> holm_bonferroni(const std::vector<double>& p_values);

struct BalanceRow {
    CellKey cell;
    std::string covariate;
    double mean_below = 0.0;
    double mean_at = 0.0;
    double diff = 0.0;  // at minus below
    double se = 0.0;
    double p_raw = 1.0;
    double p_holm = 1.0;
    std::size_t n_below = 0;
    std::size_t n_at = 0;
    std::size_t n_schools = 0;  // clusters in the cell; t reference has n_schools - 1 df
    bool zero_variance = false;
};

struct BalanceReport {
    std::vector<BalanceRow> rows;
    std::vector<std::string> warnings;
};

// Two-sided equal-means test per (cell, covariate) with school-cluster
// bootstrap SE, referred to t with (schools - 1) df after a G/(G-1)
// variance factor; Holm adjustment across covariates within each cell.
BalanceReport balance_test(const std::vector<StudentRecord>& records, const Schema& schema,
                           const BootstrapConfig& cfg);

}  // namespace strata
