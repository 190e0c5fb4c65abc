#include "strata/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "strata/design.hpp"
#include "strata/ingest.hpp"

namespace strata {

std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + (index + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("STRATA_BOUNDS_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double sample_sd(const std::vector<double>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : values)
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : values)
        if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

namespace {

// Records grouped by cohort, then by school, in first-seen order.
struct ClusterIndex {
    std::vector<std::vector<std::vector<std::size_t>>> cohorts;

    explicit ClusterIndex(const std::vector<StudentRecord>& records) {
        std::map<std::string, std::size_t> cohort_pos;
        std::map<std::pair<std::string, std::string>, std::size_t> school_pos;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            auto [cit, cnew] = cohort_pos.try_emplace(r.cohort, cohorts.size());
            if (cnew) cohorts.emplace_back();
            auto& schools = cohorts[cit->second];
            auto [sit, snew] = school_pos.try_emplace({r.cohort, r.school_id}, schools.size());
            if (snew) schools.emplace_back();
            schools[sit->second].push_back(i);
        }
    }
};

std::vector<StudentRecord> draw(const std::vector<StudentRecord>& records, const ClusterIndex& idx,
                                std::uint64_t seed, std::uint64_t replicate) {
    std::mt19937_64 rng(splitmix64(seed, replicate));
    std::vector<StudentRecord> out;
    out.reserve(records.size());
    for (const auto& schools : idx.cohorts) {
        std::uniform_int_distribution<std::size_t> pick(0, schools.size() - 1);
        for (std::size_t k = 0; k < schools.size(); ++k)
            for (auto i : schools[pick(rng)]) out.push_back(records[i]);
    }
    return out;
}

}  // namespace

std::vector<StudentRecord> resample_schools(const std::vector<StudentRecord>& records, std::uint64_t seed,
                                            std::uint64_t replicate) {
    return draw(records, ClusterIndex(records), seed, replicate);
}

BootstrapResult block_bootstrap(const std::vector<StudentRecord>& records, const Statistic& statistic,
                                const BootstrapConfig& cfg) {
    if (cfg.replications < 1) throw ValidationError("bootstrap needs at least one replication");
    if (records.empty()) throw ValidationError("bootstrap on an empty sample");
    BootstrapResult res;
    res.estimate = statistic(records);
    const std::size_t k = res.estimate.size();

    const ClusterIndex idx(records);
    if (std::all_of(idx.cohorts.begin(), idx.cohorts.end(), [](const auto& s) { return s.size() == 1; }))
        res.warnings.push_back("single school per cohort: every replicate is identical");

    const std::size_t R = cfg.replications;
    res.replicates.assign(R, std::vector<double>(k, std::numeric_limits<double>::quiet_NaN()));
    std::vector<char> failed(R, 0);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r; (r = next.fetch_add(1)) < R;) {
            try {
                auto out = statistic(draw(records, idx, cfg.seed, r));
                if (out.size() != k) throw std::logic_error("statistic changed length");
                res.replicates[r] = std::move(out);
            } catch (const std::logic_error&) {
                throw;
            } catch (const std::exception&) {
                failed[r] = 1;
            }
        }
    };
    const std::size_t nt = std::min(resolve_threads(cfg.threads), R);
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(nt);
        for (std::size_t t = 0; t < nt; ++t)
            pool.emplace_back([&, t] {
                try {
                    worker();
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    res.failed_replicates = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
    if (res.failed_replicates == R) throw EstimationError("BootstrapFailed", "every bootstrap replicate failed");
    if (res.failed_replicates > 0)
        res.warnings.push_back(std::to_string(res.failed_replicates) + " bootstrap replicates failed");

    res.se.assign(k, 0.0);
    res.missing.assign(k, 0);
    std::vector<double> col(R);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t r = 0; r < R; ++r) {
            col[r] = res.replicates[r][j];
            if (std::isnan(col[r])) ++res.missing[j];
        }
        res.se[j] = R - res.missing[j] >= 2 ? sample_sd(col)
                                             : std::numeric_limits<double>::quiet_NaN();
    }
    return res;
}

std::vector<double> holm_bonferroni(const std::vector<double>& p) {
    const std::size_t m = p.size();
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("p-values must lie in [0,1]");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    std::vector<double> adj(m);
    double running = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double v = std::min(1.0, static_cast<double>(m - i) * p[order[i]]);
        running = std::max(running, v);
        adj[order[i]] = running;
    }
    return adj;
}

BalanceReport balance_test(const std::vector<StudentRecord>& records, const Schema& schema,
                           const BootstrapConfig& cfg) {
    std::vector<StudentRecord> near;
    for (const auto& r : records)
        if (r.z != Instrument::Else) near.push_back(r);
    if (near.empty()) throw EmptyArmError("balance test: no near-cutoff records");

    const auto names = balance_columns({}, schema).names;
    const std::size_t k = names.size();
    std::vector<CellKey> keys;
    for (const auto& [key, cell] : partition_cells(near)) keys.push_back(key);

    // Per cell: arm mean differences for every column.
    auto statistic = [&](const std::vector<StudentRecord>& sample) {
        std::vector<double> out(keys.size() * k, std::numeric_limits<double>::quiet_NaN());
        const auto cells = partition_cells(sample);
        for (std::size_t c = 0; c < keys.size(); ++c) {
            auto it = cells.find(keys[c]);
            if (it == cells.end()) continue;
            const auto d = balance_columns(it->second, schema);
            Eigen::VectorXd sum[2] = {Eigen::VectorXd::Zero(k), Eigen::VectorXd::Zero(k)};
            double n[2] = {0, 0};
            for (std::size_t i = 0; i < it->second.size(); ++i) {
                const int z = it->second[i].z == Instrument::At ? 1 : 0;
                sum[z] += d.X.row(static_cast<Eigen::Index>(i)).transpose();
                n[z] += 1;
            }
            if (n[0] == 0 || n[1] == 0) continue;
            for (std::size_t j = 0; j < k; ++j)
                out[c * k + j] = sum[1](static_cast<Eigen::Index>(j)) / n[1] - sum[0](static_cast<Eigen::Index>(j)) / n[0];
        }
        return out;
    };
    const auto boot = block_bootstrap(near, statistic, cfg);

    BalanceReport rep;
    rep.warnings = boot.warnings;
    const auto cells = partition_cells(near);
    for (std::size_t c = 0; c < keys.size(); ++c) {
        const auto& cell = cells.at(keys[c]);
        const auto d = balance_columns(cell, schema);
        std::set<std::string> ids;
        for (const auto& r : cell) ids.insert(r.school_id);
        const std::size_t schools = ids.size();
        std::vector<BalanceRow> rows;
        for (std::size_t j = 0; j < k; ++j) {
            BalanceRow row;
            row.cell = keys[c];
            row.covariate = names[j];
            double sum[2] = {0, 0};
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t i = 0; i < cell.size(); ++i) {
                const int z = cell[i].z == Instrument::At ? 1 : 0;
                const double v = d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                sum[z] += v;
                (z ? row.n_at : row.n_below) += 1;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (row.n_below == 0 || row.n_at == 0)
                throw EmptyArmError("balance test: cell " + to_string(keys[c]) + " has an empty arm");
            row.n_schools = schools;
            row.mean_below = sum[0] / static_cast<double>(row.n_below);
            row.mean_at = sum[1] / static_cast<double>(row.n_at);
            row.diff = boot.estimate[c * k + j];
            row.se = boot.se[c * k + j];
            if (lo == hi) {
                row.zero_variance = true;
                row.p_raw = 1.0;
            } else if (std::isnan(row.se)) {
                row.p_raw = 1.0;  // too few usable replicates
            } else if (schools < 2) {
                row.p_raw = 1.0;  // no between-school variation to test against
            } else if (row.se == 0.0) {
                row.p_raw = row.diff == 0.0 ? 1.0 : 0.0;
            } else {
                // Small-cluster correction: G/(G-1) variance factor, t with G-1 df.
                const double g = static_cast<double>(schools);
                const double t = std::fabs(row.diff) / (row.se * std::sqrt(g / (g - 1.0)));
                const boost::math::students_t ref(g - 1.0);
                row.p_raw = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(ref, t)));
            }
            rows.push_back(row);
        }
        std::vector<double> p;
        for (const auto& r : rows) p.push_back(r.p_raw);
        const auto adj = holm_bonferroni(p);
        for (std::size_t j = 0; j < rows.size(); ++j) {
            rows[j].p_holm = adj[j];
            rep.rows.push_back(rows[j]);
        }
    }
    return rep;
}

}  // namespace strata
