#include <cmath>

#include <doctest.h>

#include "fixtures.hpp"
#include "strata/errors.hpp"
#include "strata/ingest.hpp"
#include "strata/synth.hpp"

using namespace strata;

TEST_CASE("generated strata and compliance shares match the configuration") {
    SynthConfig cfg;
    cfg.n_schools = 200;
    cfg.students_per_school = 100;
    const auto gen = generate(cfg);
    std::array<double, 3> js{}, gs{};
    for (const auto& l : gen.latent) {
        js[static_cast<std::size_t>(l.stratum)] += 1;
        gs[static_cast<std::size_t>(l.compliance)] += 1;
    }
    const double n = static_cast<double>(gen.latent.size());
    for (std::size_t k = 0; k < 3; ++k) {
        const double pj = cfg.strata_probs[k], pg = cfg.compliance_probs[k];
        CHECK(std::fabs(js[k] / n - pj) < 4 * std::sqrt(pj * (1 - pj) / n));
        CHECK(std::fabs(gs[k] / n - pg) < 4 * std::sqrt(pg * (1 - pg) / n));
    }
}

TEST_CASE("property: latent labels are consistent with the observed data") {
    SynthConfig cfg;
    cfg.n_schools = 30;
    cfg.students_per_school = 50;
    cfg.eta_direct = 0.05;
    const auto gen = generate(cfg);
    const auto& tracks = gen.dataset.schema.tracks;
    for (std::size_t i = 0; i < gen.latent.size(); ++i) {
        const auto& r = gen.dataset.records[i];
        const auto& l = gen.latent[i];
        const int z = r.score >= *tracks.at(r.track).cutoff;
        CHECK(r.R == l.r[z]);
        CHECK(r.Y == l.y[z][r.R]);
        CHECK(l.r[0] <= l.r[1]);  // no defiers
        CHECK(l.near == (r.z != Instrument::Else));
        // Y(0, r) defines the stratum; no Rebels.
        CHECK(l.y[0][0] <= l.y[0][1]);
    }
}

TEST_CASE("truth_apce") {
    CellTruth all;
    all.counts[0] = {5, 0, 0};
    CHECK(truth_apce(all, Stratum::H) == 1.0);
    CellTruth none;
    none.counts[1] = {0, 4, 2};
    CHECK(truth_apce(none, Stratum::AH) == 0.0);
    CellTruth mixed;
    mixed.counts[2] = {3, 6, 1};
    CHECK(truth_apce(mixed, Stratum::AL) == doctest::Approx(0.3));
    CHECK_THROWS_AS(truth_apce(mixed, Stratum::H), EmptyStratumError);
}

TEST_CASE("same seed, same data") {
    SynthConfig cfg;
    cfg.n_schools = 10;
    cfg.students_per_school = 20;
    cfg.seed = 99;
    const auto a = generate(cfg);
    const auto b = generate(cfg);
    REQUIRE(a.dataset.records.size() == b.dataset.records.size());
    for (std::size_t i = 0; i < a.dataset.records.size(); ++i) {
        CHECK(a.dataset.records[i].score == b.dataset.records[i].score);
        CHECK(a.dataset.records[i].Y == b.dataset.records[i].Y);
    }
    cfg.seed = 100;
    const auto c = generate(cfg);
    bool differs = c.dataset.records.size() != a.dataset.records.size();
    for (std::size_t i = 0; !differs && i < a.dataset.records.size(); ++i)
        differs = a.dataset.records[i].score != c.dataset.records[i].score;
    CHECK(differs);
}

TEST_CASE("configuration validation") {
    const auto schema = default_schema();
    SynthConfig bad;
    bad.strata_probs = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(bad.validate(schema), ValidationError);
    SynthConfig eta;
    eta.eta_direct = 0.3;
    CHECK_THROWS_AS(eta.validate(schema), ValidationError);
    SynthConfig disc;
    disc.discrimination = SynthConfig::Discrimination{"income", std::nullopt, 0.1};
    CHECK_THROWS_AS(disc.validate(schema), ValidationError);
    SynthConfig mix;
    mix.track_mix = {1, 1};
    CHECK_THROWS_AS(mix.validate(schema), ValidationError);
}

TEST_CASE("configuration JSON round trip") {
    SynthConfig cfg;
    cfg.n_schools = 7;
    cfg.eta_direct = 0.03;
    cfg.compliance_by_stratum = std::array<std::array<double, 3>, 3>{{{0.3, 0.5, 0.2}, {0.35, 0.25, 0.4}, {0.15, 0.8, 0.05}}};
    cfg.discrimination = SynthConfig::Discrimination{"female", Stratum::H, 0.2};
    const auto j = synth_config_to_json(cfg);
    CHECK(synth_config_to_json(synth_config_from_json(j)) == j);
}

TEST_CASE("direct effect shifts outcomes by eta on average") {
    auto cfg = fixtures::single_cell(200, 100, 8);
    cfg.eta_direct = 0.1;
    const auto gen = generate(cfg);
    double d = 0.0;
    for (const auto& l : gen.latent) d += l.y[1][0] - l.y[0][0];
    d /= static_cast<double>(gen.latent.size());
    CHECK(std::fabs(d - 0.1) < 4 * std::sqrt(0.1 * 0.9 / static_cast<double>(gen.latent.size())));
    CHECK(gen.truth.eta == 0.1);
}

TEST_CASE("truth JSON") {
    SynthConfig cfg;
    cfg.n_schools = 10;
    cfg.students_per_school = 20;
    const auto gen = generate(cfg);
    const auto j = truth_to_json(gen, true);
    CHECK(j.contains("pooled"));
    CHECK(j.contains("cells"));
    CHECK(j.contains("latent"));
    CHECK_FALSE(truth_to_json(gen, false).contains("latent"));
}
