#include <atomic>
#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "fixtures.hpp"
#include "strata/errors.hpp"
#include "strata/inference.hpp"
#include "strata/ingest.hpp"

using namespace strata;
using fixtures::rec;

namespace {

std::vector<double> mean_y(const std::vector<StudentRecord>& s) {
    double m = 0;
    for (const auto& r : s) m += r.Y;
    return {m / static_cast<double>(s.size())};
}

}  // namespace

TEST_CASE("Holm step-down example") {
    const auto adj = holm_bonferroni({0.01, 0.04, 0.03});
    CHECK(adj[0] == doctest::Approx(0.03));
    CHECK(adj[1] == doctest::Approx(0.06));
    CHECK(adj[2] == doctest::Approx(0.06));
    CHECK(holm_bonferroni({}).empty());
    CHECK_THROWS_AS(holm_bonferroni({1.5}), ValidationError);
}

TEST_CASE("property: Holm-adjusted p-values dominate raw ones and keep their order") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> p(1 + t % 12);
        for (double& v : p) v = u(rng) * u(rng);
        const auto a = holm_bonferroni(p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(a[i] >= p[i]);
            CHECK(a[i] <= 1.0);
            for (std::size_t j = 0; j < p.size(); ++j)
                if (p[i] < p[j]) CHECK(a[i] <= a[j]);
        }
    }
}

TEST_CASE("splitmix64 is a pure function of its arguments") {
    CHECK(splitmix64(1, 2) == splitmix64(1, 2));
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(splitmix64(42, i));
    CHECK(seen.size() == 1000);
}

TEST_CASE("resampling draws whole schools within each cohort") {
    std::vector<StudentRecord> rs;
    for (int s = 0; s < 10; ++s)
        for (int k = 0; k <= s; ++k) {
            rs.push_back(rec("s" + std::to_string(s), "V:GT", 533, 0, s % 2, {}, "2015"));
            rs.push_back(rec("s" + std::to_string(s), "V:GT", 533, 0, s % 2, {}, "2016"));
        }
    const auto a = resample_schools(rs, 9, 3);
    CHECK(a.size() > 0);
    const auto b = resample_schools(rs, 9, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].student_id == b[i].student_id);
    // Every drawn school brings all of its students for that cohort.
    std::map<std::pair<std::string, std::string>, std::size_t> count;
    for (const auto& r : a) ++count[{r.school_id, r.cohort}];
    for (const auto& [key, c] : count) {
        const std::size_t size = static_cast<std::size_t>(std::stoi(key.first.substr(1))) + 1;
        CHECK(c % size == 0);
    }
    std::map<std::string, std::size_t> draws;
    for (const auto& [key, c] : count) {
        const std::size_t size = static_cast<std::size_t>(std::stoi(key.first.substr(1))) + 1;
        draws[key.second] += c / size;
    }
    CHECK(draws["2015"] == 10);
    CHECK(draws["2016"] == 10);
}

TEST_CASE("bootstrap SE of a mean of one-student clusters") {
    // n = 400, variance 0.25: SE 0.025.
    std::vector<StudentRecord> rs;
    for (int i = 0; i < 400; ++i) rs.push_back(rec("c" + std::to_string(i), "V:GT", 533, 0, i % 2));
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        BootstrapConfig cfg;
        cfg.replications = 1000;
        cfg.seed = seed;
        const auto b = block_bootstrap(rs, mean_y, cfg);
        CHECK(b.estimate[0] == 0.5);
        CHECK(std::fabs(b.se[0] / 0.025 - 1.0) < 0.15);
    }
}

TEST_CASE("bootstrap is independent of the thread count") {
    std::vector<StudentRecord> rs;
    for (int i = 0; i < 300; ++i) rs.push_back(rec("c" + std::to_string(i / 3), "V:GT", 533, 0, (i * 7) % 3 == 0));
    BootstrapConfig one;
    one.replications = 300;
    one.threads = 1;
    BootstrapConfig many = one;
    many.threads = 4;
    const auto a = block_bootstrap(rs, mean_y, one);
    const auto b = block_bootstrap(rs, mean_y, many);
    CHECK(a.se == b.se);
    CHECK(a.replicates == b.replicates);
}

TEST_CASE("failing replicates become missing") {
    std::vector<StudentRecord> rs;
    for (int i = 0; i < 50; ++i) rs.push_back(rec("c" + std::to_string(i), "V:GT", 533, 0, i % 2));
    BootstrapConfig cfg;
    cfg.replications = 200;
    std::atomic<int> calls{0};
    const auto b = block_bootstrap(
        rs,
        [&](const std::vector<StudentRecord>& s) -> std::vector<double> {
            if (calls++ % 4 == 3) throw EstimationError("Test", "fails sometimes");
            return mean_y(s);
        },
        cfg);
    CHECK(b.failed_replicates > 0);
    CHECK(b.missing[0] == b.failed_replicates);
    CHECK(std::isfinite(b.se[0]));

    CHECK_THROWS_AS(block_bootstrap(
                        rs, [](const std::vector<StudentRecord>&) -> std::vector<double> {
                            throw EstimationError("Test", "always");
                        },
                        cfg),
                    EstimationError);
    cfg.replications = 0;
    CHECK_THROWS_AS(block_bootstrap(rs, mean_y, cfg), ValidationError);
}

TEST_CASE("single school per cohort is flagged") {
    std::vector<StudentRecord> rs = {rec("only", "V:GT", 533, 0, 1), rec("only", "V:GT", 532, 0, 0)};
    BootstrapConfig cfg;
    cfg.replications = 5;
    const auto b = block_bootstrap(rs, mean_y, cfg);
    CHECK_FALSE(b.warnings.empty());
}

TEST_CASE("sample_sd and normal_cdf") {
    CHECK(sample_sd({1, 2, 3, 4}) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(sample_sd({1, NAN, 3}) == doctest::Approx(std::sqrt(2.0)));
    CHECK(normal_cdf(0) == 0.5);
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975));
}

TEST_CASE("balance test detects a three-SD shift") {
    Schema schema;
    schema.covariates = {{"score_x", CovariateKind::Real, false, {}}, {"flat", CovariateKind::Binary, false, {}}};
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    std::vector<StudentRecord> rs;
    for (int i = 0; i < 400; ++i) {
        const bool at = i % 2 == 0;
        rs.push_back(rec("c" + std::to_string(i / 4), "V:GT", at ? 533 : 532, 0, 0, {nd(rng) + (at ? 3.0 : 0.0), 1.0}));
    }
    rs = fixtures::derived(rs);
    BootstrapConfig cfg;
    cfg.replications = 200;
    const auto rep = balance_test(rs, schema, cfg);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].covariate == "score_x");
    CHECK(rep.rows[0].diff == doctest::Approx(3.0).epsilon(0.1));
    CHECK(rep.rows[0].p_holm < 0.01);
    CHECK(rep.rows[1].zero_variance);
    CHECK(rep.rows[1].p_raw == 1.0);
    CHECK(rep.rows[0].n_at == 200);
    CHECK(rep.rows[0].n_below == 200);
}

TEST_CASE("balance p-values use a t reference with schools - 1 df") {
    Schema schema;
    schema.covariates = {{"x", CovariateKind::Real, false, {}}};
    std::mt19937_64 rng(21);
    std::normal_distribution<double> nd;
    std::vector<StudentRecord> rs;
    for (int i = 0; i < 60; ++i) {
        const bool at = i % 2 == 0;
        rs.push_back(rec("c" + std::to_string(i / 6), "V:GT", at ? 533 : 532, 0, 0, {nd(rng) + (at ? 0.4 : 0.0)}));
    }
    rs = fixtures::derived(rs);
    BootstrapConfig cfg;
    cfg.replications = 300;
    const auto rep = balance_test(rs, schema, cfg);
    REQUIRE(rep.rows.size() == 1);
    const auto& row = rep.rows[0];
    CHECK(row.n_schools == 10);
    // Heavier tails than the normal at 9 df.
    const double t = std::fabs(row.diff) / (row.se * std::sqrt(10.0 / 9.0));
    const double normal_p = 2.0 * (1.0 - normal_cdf(t));
    CHECK(row.p_raw > normal_p);

    // One school: nothing to test against.
    std::vector<StudentRecord> one;
    for (int i = 0; i < 20; ++i) one.push_back(rec("solo", "V:GT", i % 2 ? 533 : 532, 0, 0, {nd(rng)}));
    const auto solo = balance_test(fixtures::derived(one), schema, cfg);
    CHECK(solo.rows[0].p_raw == 1.0);
    CHECK(solo.rows[0].n_schools == 1);
}
