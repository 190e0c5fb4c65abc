#include <cmath>
#include <numeric>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "strata/design.hpp"
#include "strata/errors.hpp"
#include "strata/estimation.hpp"
#include "strata/inference.hpp"
#include "strata/ingest.hpp"

using namespace strata;
using fixtures::rec;

namespace {

// V:GT cell: 4 below (R,Y) = (0,0),(0,1),(1,1),(0,0); 2 at (1,1),(1,0).
std::vector<StudentRecord> tiny_cell() {
    return fixtures::derived({rec("a", "V:GT", 532, 0, 0), rec("a", "V:GT", 532, 0, 1), rec("b", "V:GT", 532, 1, 1),
                              rec("b", "V:GT", 532, 0, 0), rec("a", "V:GT", 533, 1, 1), rec("b", "V:GT", 533, 1, 0),
                              rec("b", "V:GT", 520, 1, 1)});
}

}  // namespace

TEST_CASE("raw conditional probabilities") {
    const auto rs = tiny_cell();
    CHECK(cond_prob(rs, Event::R1, Instrument::Below, AdjustmentSpec::raw()).value == doctest::Approx(0.25));
    CHECK(cond_prob(rs, Event::R1, Instrument::At, AdjustmentSpec::raw()).value == doctest::Approx(1.0));
    CHECK(cond_prob(rs, Event::Y1R0, Instrument::Below, AdjustmentSpec::raw()).value == doctest::Approx(0.25));
    CHECK(cond_prob(rs, Event::Y0R1, Instrument::At, AdjustmentSpec::raw()).value == doctest::Approx(0.5));
    const auto p = estimate_arm_probabilities(rs, AdjustmentSpec::raw());
    CHECK(p.n[0] == 4);
    CHECK(p.n[1] == 2);
    CHECK(p.y1[0] == doctest::Approx(0.5));
    CHECK(p.y1[1] == doctest::Approx(0.5));
    CHECK(p.y1_r1[1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(cond_prob(rs, Event::Y1, Instrument::Else, AdjustmentSpec::raw()), ValidationError);
}

TEST_CASE("property: raw influence values have mean zero and reproduce the binomial variance") {
    const auto gen = generate(fixtures::single_cell(30, 40, 5));
    const auto& rs = gen.dataset.records;
    for (auto ev : {Event::Y1, Event::R1, Event::Y1R0, Event::Y0R1, Event::Y1R1}) {
        for (auto arm : {Instrument::Below, Instrument::At}) {
            const auto c = cond_prob(rs, ev, arm, AdjustmentSpec::raw());
            const double n = static_cast<double>(rs.size());
            const double sum = std::accumulate(c.influence.begin(), c.influence.end(), 0.0);
            double ss = 0.0;
            for (double v : c.influence) ss += v * v;
            const double n_arm = static_cast<double>(count_arms(rs).at * (arm == Instrument::At) +
                                                     count_arms(rs).below * (arm == Instrument::Below));
            CHECK(std::fabs(sum / n) < 1e-12);
            CHECK(ss / (n * n) == doctest::Approx(c.value * (1 - c.value) / n_arm).epsilon(1e-9));
        }
    }
}

TEST_CASE("empty arm") {
    const auto rs = fixtures::derived({rec("a", "V:GT", 533, 1, 1), rec("a", "V:GT", 533, 0, 0)});
    CHECK_THROWS_AS(cond_prob(rs, Event::Y1, Instrument::Below, AdjustmentSpec::raw()), EmptyArmError);
    CHECK_THROWS_AS(estimate_arm_probabilities(rs, AdjustmentSpec::raw()), EmptyArmError);
}

TEST_CASE("z_tilde adjustment with a constant z_tilde equals the raw frequency") {
    // Everyone in one school: z_tilde is constant and gets dropped.
    auto rs = tiny_cell();
    for (auto& r : rs) r.school_id = "a";
    rs = fixtures::derived(rs);
    for (auto ev : {Event::Y1, Event::R1, Event::Y1R0, Event::Y0R1}) {
        for (auto arm : {Instrument::Below, Instrument::At}) {
            const double raw = cond_prob(rs, ev, arm, AdjustmentSpec::raw()).value;
            const double adj = cond_prob(rs, ev, arm, AdjustmentSpec::ztilde()).value;
            CHECK(std::fabs(raw - adj) < 1e-12);
        }
    }
}

TEST_CASE("property: adjusted arm probabilities average back to the pooled frequency") {
    const auto gen = generate(fixtures::single_cell(60, 50, 11));
    const auto& rs = gen.dataset.records;
    const auto schema = gen.dataset.schema;
    const auto counts = count_arms(rs);
    const double n = static_cast<double>(counts.at + counts.below);
    for (auto ev : {Event::Y1, Event::R1, Event::Y1R0, Event::Y0R1, Event::Y1R1}) {
        const auto lo = cond_prob(rs, ev, Instrument::Below, AdjustmentSpec::full(), schema);
        const auto hi = cond_prob(rs, ev, Instrument::At, AdjustmentSpec::full(), schema);
        REQUIRE_FALSE(lo.clamped);
        REQUIRE_FALSE(hi.clamped);
        double pooled = 0.0;
        for (const auto& r : rs) pooled += event_holds(ev, r.R, r.Y);
        pooled /= n;
        const double mix = (counts.below * lo.value + counts.at * hi.value) / n;
        CHECK(mix == doctest::Approx(pooled).epsilon(1e-10));
        const double sum = std::accumulate(hi.influence.begin(), hi.influence.end(), 0.0);
        CHECK(std::fabs(sum / n) < 1e-10);
    }
}

TEST_CASE("adjusted estimate recovers the generator's conditional probability") {
    auto cfg = fixtures::single_cell(100, 100, 21);
    cfg.compliance_probs = {0.30, 0.60, 0.10};
    const auto gen = generate(cfg);
    const auto& rs = gen.dataset.records;
    const double truth = 0.40;  // Pr(R=1 | at) = C + AT
    const auto p = cond_prob(rs, Event::R1, Instrument::At, AdjustmentSpec::full(), gen.dataset.schema);
    const double se = std::sqrt(truth * (1 - truth) / static_cast<double>(count_arms(rs).at));
    CHECK(std::fabs(p.value - truth) < 2 * se);
}

TEST_CASE("first-stage effect reproduces its generator value") {
    auto cfg = fixtures::single_cell(200, 25, 31);
    cfg.compliance_probs = {0.1639, 0.8361, 0.0};
    const auto gen = generate(cfg);
    const auto& rs = gen.dataset.records;
    double truth = 0.0;
    for (const auto& l : gen.latent) truth += l.compliance == Compliance::C;
    truth /= static_cast<double>(gen.latent.size());

    const auto m = fit_first_stage(rs, AdjustmentSpec::raw());
    BootstrapConfig bc;
    bc.replications = 200;
    const auto b = block_bootstrap(
        rs, [](const std::vector<StudentRecord>& s) { return std::vector<double>{fit_first_stage(s, AdjustmentSpec::raw()).coefficient("Z")}; },
        bc);
    CHECK(b.estimate[0] == m.coefficient("Z"));
    CHECK(std::fabs(m.coefficient("Z") - truth) < 2 * b.se[0]);

    const auto full = fit_first_stage(rs, AdjustmentSpec::full(), gen.dataset.schema);
    CHECK(full.has("z_tilde"));
    CHECK(full.has("region=south"));
    CHECK(std::fabs(full.coefficient("Z") - truth) < 2 * b.se[0]);
}

TEST_CASE("fit_ols recovers noiseless coefficients and drops duplicate columns") {
    Eigen::MatrixXd X(6, 4);
    X << 1, 0, 0, 0,  //
        1, 1, 2, 0,   //
        1, 2, 4, 1,   //
        1, 3, 6, 1,   //
        1, 4, 8, 0,   //
        1, 5, 10, 1;
    Eigen::VectorXd y = 0.5 + 2.0 * X.col(1).array() - 1.0 * X.col(3).array();
    const auto m = fit_ols(X, y, {"c", "a", "twice_a", "b"});
    CHECK(m.dropped == std::vector<std::string>{"twice_a"});
    CHECK(m.coefficient("c") == doctest::Approx(0.5));
    CHECK(m.coefficient("a") == doctest::Approx(2.0));
    CHECK(m.coefficient("b") == doctest::Approx(-1.0));
    CHECK(m.residuals.norm() < 1e-10);
    CHECK_THROWS_AS(m.coefficient("twice_a"), EstimationError);
}

TEST_CASE("independent_columns keeps the first of each collinear set") {
    Eigen::MatrixXd X(5, 5);
    X << 1, 2, 0, 1, 3,  //
        1, 2, 0, 0, 2,   //
        1, 2, 0, 1, 3,   //
        1, 2, 0, 0, 2,   //
        1, 2, 0, 1, 4;
    CHECK(independent_columns(X) == std::vector<Eigen::Index>{0, 3, 4});
}

TEST_CASE("logistic regression on a 2x2 table gives the log odds ratio") {
    Eigen::MatrixXd x(60, 1);
    Eigen::VectorXd y(60);
    int i = 0;
    auto add = [&](double xv, double yv, int k) {
        for (int j = 0; j < k; ++j, ++i) {
            x(i, 0) = xv;
            y(i) = yv;
        }
    };
    add(1, 1, 20);
    add(1, 0, 10);
    add(0, 1, 10);
    add(0, 0, 20);
    const auto m = fit_logistic(x, y);
    CHECK(m.converged);
    CHECK_FALSE(m.ridge);
    CHECK(m.coefficients(1) == doctest::Approx(std::log(4.0)).epsilon(1e-8));
    CHECK(m.coefficients(0) == doctest::Approx(std::log(0.5)).epsilon(1e-8));
    CHECK(m.predict_one(Eigen::RowVectorXd::Constant(1, 1.0)) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("weighted logistic regression matches replicated rows") {
    Eigen::MatrixXd x(4, 1);
    x << 1, 1, 0, 0;
    Eigen::VectorXd y(4), w(4);
    y << 1, 0, 1, 0;
    w << 20, 10, 10, 20;
    const auto m = fit_logistic(x, y, w);
    CHECK(m.coefficients(1) == doctest::Approx(std::log(4.0)).epsilon(1e-8));
}

TEST_CASE("separable data falls back to ridge and stays within the clamp") {
    Eigen::MatrixXd x(10, 1);
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = i;
        y(i) = i >= 5 ? 1.0 : 0.0;
    }
    const auto m = fit_logistic(x, y);
    CHECK(m.ridge);
    CHECK_FALSE(m.converged);
    const auto p = m.predict(x);
    CHECK(p.minCoeff() >= FittedLogisticModel::kFloor);
    CHECK(p.maxCoeff() <= FittedLogisticModel::kCeil);
}

TEST_CASE("constant labels give a constant clamped model") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 2);
    const auto m = fit_logistic(x, Eigen::VectorXd::Ones(8));
    CHECK(m.constant);
    CHECK(m.predict(x).isApproxToConstant(FittedLogisticModel::kCeil));
}

TEST_CASE("property: logistic predictions always lie in the clamp range") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 10; ++t) {
        Eigen::MatrixXd x(200, 3);
        Eigen::VectorXd y(200);
        for (int i = 0; i < 200; ++i) {
            for (int c = 0; c < 3; ++c) x(i, c) = nd(rng) * (t + 1);
            y(i) = x(i, 0) + 0.3 * nd(rng) > 0 ? 1.0 : 0.0;
        }
        const auto p = fit_logistic(x, y).predict(x);
        CHECK(p.minCoeff() >= 0.001);
        CHECK(p.maxCoeff() <= 0.999);
    }
}

TEST_CASE("covariate design encodes categories and missing values") {
    const auto schema = default_schema();
    std::vector<StudentRecord> rs = {rec("a", "V:GT", 533, 0, 0, {1, 0, 0.5, NAN, 2}),
                                     rec("a", "V:GT", 533, 0, 0, {0, 1, -1.0, 1, 0})};
    const auto d = covariate_design(rs, schema);
    const std::vector<std::string> names = {"female", "immigrant", "income", "college_mother", "college_mother_missing",
                                            "region=middle", "region=south"};
    CHECK(d.names == names);
    CHECK(d.X(0, 3) == 0.0);
    CHECK(d.X(0, 4) == 1.0);
    CHECK(d.X(0, 6) == 1.0);
    CHECK(d.X(1, 5) == 0.0);
    CHECK(d.X(1, 3) == 1.0);
    CHECK_THROWS_AS(covariate_design(rs, schema, {"nope"}), ValidationError);
}

TEST_CASE("adjustment mode names") {
    CHECK(parse_adjust_mode("raw") == AdjustmentSpec::Mode::Raw);
    CHECK(parse_adjust_mode("ztilde") == AdjustmentSpec::Mode::ZTilde);
    CHECK(parse_adjust_mode("full") == AdjustmentSpec::Mode::Full);
    CHECK_THROWS_AS(parse_adjust_mode("x"), ValidationError);
}
