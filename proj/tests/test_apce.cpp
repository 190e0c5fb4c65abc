#include <cmath>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "published.hpp"
#include "strata/apce.hpp"
#include "strata/errors.hpp"
#include "strata/ingest.hpp"

using namespace strata;

namespace {

template <std::size_t N>
std::vector<CellEstimate> fixture_cells(Stratum s, const std::array<published::Row, N>& rows) {
    std::vector<CellEstimate> out;
    for (const auto& r : rows) {
        auto e = bounds_from_parts(s, {r.numerator, r.denom_lb, r.denom_ub});
        e.cell = {"pooled", r.track};
        out.push_back(e);
    }
    return out;
}

std::map<CellKey, double> fixture_weights(const std::vector<std::string>& tracks) {
    std::map<CellKey, double> w;
    const auto& all = published::kH;
    for (std::size_t i = 0; i < all.size(); ++i)
        for (const auto& t : tracks)
            if (t == all[i].track) w[{"pooled", t}] = published::kWeights[i];
    return w;
}

ArmProbabilities random_probs(std::mt19937_64& rng) {
    // Joint (R,Y) distributions per arm, then the derived events.
    std::gamma_distribution<double> g(1.0, 1.0);
    ArmProbabilities p;
    for (int z = 0; z < 2; ++z) {
        double c[4];
        double sum = 0;
        for (double& v : c) sum += (v = g(rng));
        for (double& v : c) v /= sum;
        // c: (R0,Y0) (R0,Y1) (R1,Y0) (R1,Y1)
        p.y1[z] = c[1] + c[3];
        p.r1[z] = c[2] + c[3];
        p.y1_r0[z] = c[1];
        p.y0_r1[z] = c[2];
        p.y1_r1[z] = c[3];
        p.n[z] = 100;
    }
    return p;
}

}  // namespace

TEST_CASE("published ALL rows from their parts") {
    const auto h = bounds_from_parts(Stratum::H, {published::kAllH.numerator, published::kAllH.denom_lb, published::kAllH.denom_ub});
    CHECK(std::fabs(h.apce_lb - .0653) <= 0.0005);
    CHECK(h.apce_ub == 1.0);
    CHECK(h.flags.ub_forced_to_one);

    const auto ah = bounds_from_parts(Stratum::AH, {published::kAllAH.numerator, published::kAllAH.denom_lb, published::kAllAH.denom_ub});
    CHECK(std::fabs(ah.apce_lb - .0558) <= 0.0005);
    CHECK(std::fabs(ah.apce_ub - .0568) <= 0.0005);

    const auto al = bounds_from_parts(Stratum::AL, {published::kAllAL.numerator, published::kAllAL.denom_lb, published::kAllAL.denom_ub});
    CHECK(std::fabs(al.apce_lb - .0733) <= 0.0005);
    CHECK(std::fabs(al.apce_ub - .9026) <= 0.0005);
}

TEST_CASE("published per-track rows from their parts") {
    // Published per-track ratios come from cohort-level estimates, so the
    // ratio of pooled parts agrees only to about 0.01.
    auto check = [](Stratum s, const auto& rows) {
        for (const auto& r : rows) {
            const auto e = bounds_from_parts(s, {r.numerator, r.denom_lb, r.denom_ub});
            INFO(r.track);
            CHECK(std::fabs(e.apce_lb - r.apce_lb) <= 0.01);
            CHECK(std::fabs(e.apce_ub - r.apce_ub) <= 0.01);
        }
    };
    check(Stratum::H, published::kH);
    check(Stratum::AH, published::kAH);
    check(Stratum::AL, published::kAL);
}

TEST_CASE("aggregating published per-track parts with near-cutoff weights") {
    const std::vector<std::string> voc = {"V:BL", "V:BL/KL", "V:KL", "V:KL/GT", "V:GT", "V:GT/HAVO"};
    const std::vector<std::string> aca = {"A:HAVO", "A:HAVO/VWO"};
    std::vector<std::string> all = voc;
    all.insert(all.end(), aca.begin(), aca.end());

    struct Want {
        const std::vector<std::string>* tracks;
        Stratum s;
        double lb, ub, tol_ub;
    };
    const std::vector<Want> wants = {
        {&voc, Stratum::H, .0686, 1, 0.0005},     {&aca, Stratum::H, .0609, 1, 0.0005},
        {&all, Stratum::H, .0653, 1, 0.0005},     {&voc, Stratum::AH, .0618, .063, 0.0005},
        {&aca, Stratum::AH, .0429, .0436, 0.0005}, {&all, Stratum::AH, .0558, .0568, 0.0005},
        {&voc, Stratum::AL, .0703, .9059, 0.001}, {&aca, Stratum::AL, .0771, .8988, 0.0005},
        {&all, Stratum::AL, .0733, .9026, 0.0005},
    };
    for (const auto& w : wants) {
        const auto cells = w.s == Stratum::H ? fixture_cells(w.s, published::kH)
                           : w.s == Stratum::AH ? fixture_cells(w.s, published::kAH)
                                                : fixture_cells(w.s, published::kAL);
        std::vector<CellEstimate> group;
        for (const auto& c : cells)
            for (const auto& t : *w.tracks)
                if (c.cell.track == t) group.push_back(c);
        const auto a = aggregate(group, fixture_weights(*w.tracks), "g");
        INFO(to_string(w.s), " ", w.tracks->size());
        CHECK(std::fabs(a.apce_lb - w.lb) <= 0.0005);
        CHECK(std::fabs(a.apce_ub - w.ub) <= w.tol_ub);
        double total = 0.0;
        for (const auto& [k, v] : a.weights) total += v;
        CHECK(total == doctest::Approx(1.0));
    }
}

TEST_CASE("bound flags") {
    const auto neg = bounds_from_parts(Stratum::AL, {-0.01, 0.05, 0.5});
    CHECK(neg.flags.numerator_rounded_to_zero);
    CHECK(neg.raw_numerator == -0.01);
    CHECK(neg.numerator == 0.0);
    CHECK(neg.apce_lb == 0.0);
    CHECK(neg.apce_ub == 0.0);

    const auto crossed = bounds_from_parts(Stratum::AH, {0.01, 0.3, 0.2});
    CHECK(crossed.flags.denominators_crossed);
    CHECK(crossed.denom_lb == 0.2);
    CHECK(crossed.denom_ub == 0.3);
    CHECK(crossed.apce_lb <= crossed.apce_ub);

    const auto big = bounds_from_parts(Stratum::AL, {0.05, 0.02, 0.5});
    CHECK(big.flags.clamped);
    CHECK(big.apce_ub == 1.0);

    BoundOptions free;
    free.force_h_upper_to_one = false;
    const auto h = bounds_from_parts(Stratum::H, {0.02, 0.04, 0.5}, free);
    CHECK_FALSE(h.flags.ub_forced_to_one);
    CHECK(h.apce_ub == doctest::Approx(0.5));
    CHECK(h.apce_lb == doctest::Approx(0.04));

    CHECK_THROWS_AS(bounds_from_parts(Stratum::AL, {0.01, 0.0, 0.5}), DegenerateDenominatorError);
    CHECK_THROWS_AS(bounds_from_parts(Stratum::AH, {0.01, -0.1, 0.0}), DegenerateDenominatorError);
}

TEST_CASE("exclusion-restriction parts from arm probabilities") {
    ArmProbabilities p;
    p.y1 = {0.40, 0.45};
    p.r1 = {0.01, 0.20};
    p.y1_r0 = {0.39, 0.30};
    p.y0_r1 = {0.005, 0.05};
    p.y1_r1 = {0.005, 0.15};
    const auto h = er_parts(Stratum::H, p);
    CHECK(h.numerator == doctest::Approx(0.05));
    CHECK(h.denom_lb == doctest::Approx(0.05));
    CHECK(h.denom_ub == doctest::Approx(1 - 0.05 - 0.39));
    const auto ah = er_parts(Stratum::AH, p);
    CHECK(ah.numerator == doctest::Approx(0.09));
    CHECK(ah.denom_lb == doctest::Approx(0.39));
    CHECK(ah.denom_ub == doctest::Approx(0.40));
    const auto al = er_parts(Stratum::AL, p);
    CHECK(al.numerator == doctest::Approx(0.045));
    CHECK(al.denom_lb == doctest::Approx(0.05));
    CHECK(al.denom_ub == doctest::Approx(0.55));
    const auto po = bounds_y0_y1(p);
    CHECK(po.lb_y0 == doctest::Approx(0.39));
    CHECK(po.ub_y0 == doctest::Approx(0.40));
    CHECK(po.lb_y1 == doctest::Approx(0.45));
    CHECK(po.ub_y1 == doctest::Approx(0.95));
}

TEST_CASE("property: bounds are ordered and inside [0,1] on random probabilities") {
    std::mt19937_64 rng(17);
    int evaluated = 0;
    for (int t = 0; t < 2000; ++t) {
        const auto p = random_probs(rng);
        for (auto s : kAllStrata) {
            try {
                const auto e = bounds_from_parts(s, er_parts(s, p));
                ++evaluated;
                CHECK(e.apce_lb >= 0.0);
                CHECK(e.apce_ub <= 1.0);
                CHECK(e.apce_lb <= e.apce_ub);
                CHECK(e.denom_lb <= e.denom_ub);
                CHECK(e.numerator >= 0.0);
            } catch (const DegenerateDenominatorError&) {
            }
        }
    }
    CHECK(evaluated > 3000);
}

TEST_CASE("synthetic cell: bounds contain the latent truth") {
    auto cfg = fixtures::single_cell(200, 100, 41);
    // Compliance differs by stratum so that no bound sits on its truth.
    cfg.compliance_by_stratum = std::array<std::array<double, 3>, 3>{{
        {0.30, 0.50, 0.20},
        {0.35, 0.25, 0.40},
        {0.15, 0.80, 0.05},
    }};
    const auto gen = generate(cfg);
    const auto& rs = gen.dataset.records;
    const auto key = gen.truth.cells.begin()->first;

    double helped = 0.0, y0 = 0.0, y1 = 0.0;
    for (const auto& l : gen.latent) {
        helped += l.stratum == Stratum::H && l.compliance == Compliance::C;
        y0 += l.y[0][0];
        y1 += l.y[0][1];
    }
    const double n = static_cast<double>(gen.latent.size());
    helped /= n;
    y0 /= n;
    y1 /= n;

    const auto num = apce_h_numerator(rs, AdjustmentSpec::raw());
    const double se = std::sqrt(0.25 / count_arms(rs).at + 0.25 / count_arms(rs).below);
    CHECK(std::fabs(num - helped) < 2 * se);

    const auto po = bounds_y0_y1(rs, AdjustmentSpec::raw());
    CHECK(po.lb_y0 <= y0 + 2 * se);
    CHECK(y0 <= po.ub_y0 + 2 * se);
    CHECK(po.lb_y1 <= y1 + 2 * se);
    CHECK(y1 <= po.ub_y1 + 2 * se);

    const auto h = apce_h_bounds(rs, AdjustmentSpec::raw());
    const auto ah = apce_ah_bounds(rs, AdjustmentSpec::raw());
    const auto al = apce_al_bounds(rs, AdjustmentSpec::raw());
    CHECK(h.apce_ub == 1.0);
    CHECK(h.cell == key);
    const double th = truth_apce(gen.truth, Stratum::H, key);
    const double tah = truth_apce(gen.truth, Stratum::AH, key);
    const double tal = truth_apce(gen.truth, Stratum::AL, key);
    CHECK(h.apce_lb <= th);
    CHECK(ah.apce_lb <= tah);
    CHECK(tah <= ah.apce_ub);
    CHECK(al.apce_lb <= tal);
    CHECK(tal <= al.apce_ub);
}

TEST_CASE("standard groups and table weights") {
    SynthConfig cfg;
    cfg.n_schools = 60;
    cfg.students_per_school = 60;
    const auto gen = generate(cfg);
    const auto t = estimate_apce_table(gen.dataset.records, {Stratum::H, Stratum::AH, Stratum::AL},
                                       AdjustmentSpec::raw(), gen.dataset.schema, {}, nullptr);
    CHECK(t.cells.size() == 48);
    // 8 tracks, 2 track groups and All, each for three strata.
    CHECK(t.aggregates.size() == 33);
    const auto near = partition_cells(near_cutoff_subset(gen.dataset).records);
    for (const auto& [k, rs] : near) CHECK(t.weights.at(k) == static_cast<double>(rs.size()));
    for (const auto& a : t.aggregates) {
        double total = 0.0;
        for (const auto& [k, v] : a.weights) total += v;
        CHECK(total == doctest::Approx(1.0));
        CHECK(a.apce_lb <= a.apce_ub);
    }
}

TEST_CASE("aggregate input checks") {
    auto e = bounds_from_parts(Stratum::AL, {0.05, 0.06, 0.6});
    e.cell = {"2015", "V:BL"};
    CHECK_THROWS_AS(aggregate({}, {}, "g"), ValidationError);
    CHECK_THROWS_AS(aggregate({e}, {}, "g"), ValidationError);
    const auto a = aggregate({e}, {{e.cell, 3.0}}, "g");
    CHECK(a.apce_lb == e.apce_lb);
    CHECK(a.apce_ub == e.apce_ub);
}
