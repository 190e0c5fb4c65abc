#include <algorithm>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "strata/errors.hpp"

using namespace strata;
using fixtures::rec;

TEST_CASE("assign_instrument at, below and else") {
    const auto& gt = TrackTable::standard().at("V:GT");
    CHECK(*gt.cutoff == 533);
    CHECK(assign_instrument(533, gt) == Instrument::At);
    CHECK(assign_instrument(532, gt) == Instrument::Below);
    CHECK(assign_instrument(501, gt) == Instrument::Else);
    CHECK(assign_instrument(534, gt) == Instrument::Else);
}

TEST_CASE("assign_instrument rejects the top track") {
    const auto& top = TrackTable::standard().at("A:VWO");
    CHECK_FALSE(top.cutoff.has_value());
    CHECK_THROWS_AS(assign_instrument(540, top), NotUpgradeableError);
}

TEST_CASE("every track splits the score range into one at, one below and 48 else") {
    const ScoreRange range;
    for (const auto& t : TrackTable::standard().tracks()) {
        if (!t.cutoff) continue;
        int at = 0, below = 0, other = 0;
        for (int s = range.lo; s <= range.hi; ++s) {
            switch (assign_instrument(s, t)) {
                case Instrument::At: ++at; break;
                case Instrument::Below: ++below; break;
                case Instrument::Else: ++other; break;
            }
        }
        CHECK(at == 1);
        CHECK(below == 1);
        CHECK(other == 48);
    }
}

TEST_CASE("standard track table") {
    const auto t = TrackTable::standard();
    CHECK(t.tracks().size() == 9);
    CHECK(t.upgradeable_ids().size() == 8);
    int prev = 0;
    for (const auto& s : t.tracks()) {
        if (!s.cutoff) continue;
        CHECK(*s.cutoff >= prev);
        prev = *s.cutoff;
    }
    CHECK(*t.at("V:BL").cutoff == 519);
    CHECK(*t.at("A:HAVO/VWO").cutoff == 545);
    CHECK(t.at("A:HAVO").group == "Academic");
    CHECK(t.at("V:GT/HAVO").group == "Vocational");
    CHECK_THROWS_AS(t.at("V:XX"), ValidationError);
}

TEST_CASE("track table validation") {
    CHECK_THROWS_AS(TrackTable({{"a", 520, "g"}, {"b", 510, "g"}}), ValidationError);
    CHECK_THROWS_AS(TrackTable({{"a", 520, "g"}, {"a", 530, "g"}}), ValidationError);
    CHECK_THROWS_AS(TrackTable({{"top", std::nullopt, "g"}, {"b", 530, "g"}}), ValidationError);
    CHECK_NOTHROW(TrackTable({{"a", 520, "g"}, {"b", 520, "g"}, {"top", std::nullopt, "g"}}));
}

TEST_CASE("z_tilde small schools") {
    const auto tracks = TrackTable::standard();
    auto half = compute_z_tilde({rec("s1", "V:GT", 533, 0, 0), rec("s1", "V:GT", 532, 0, 0)}, tracks);
    CHECK(half.at({"s1", "2015"}) == doctest::Approx(0.5));

    auto none = compute_z_tilde({rec("s2", "V:GT", 510, 0, 0), rec("s2", "V:BL", 518, 0, 0)}, tracks);
    CHECK(none.at({"s2", "2015"}) == 0.0);
}

TEST_CASE("z_tilde mixed tracks, four of six at or above") {
    std::vector<StudentRecord> rs = {
        rec("s", "V:BL", 519, 0, 0),   rec("s", "V:KL", 530, 0, 0), rec("s", "A:HAVO", 545, 0, 0),
        rec("s", "V:GT", 533, 0, 0),   rec("s", "V:KL", 528, 0, 0), rec("s", "V:GT", 532, 0, 0),
    };
    const auto z = compute_z_tilde(rs, TrackTable::standard());
    CHECK(z.at({"s", "2015"}) == doctest::Approx(0.6667).epsilon(1e-4));
    derive_instrument(rs, TrackTable::standard());
    for (const auto& r : rs) CHECK(r.z_tilde == z.at({"s", "2015"}));
}

TEST_CASE("z_tilde separates cohorts of the same school") {
    std::vector<StudentRecord> rs = {rec("s", "V:GT", 533, 0, 0, {}, "2015"), rec("s", "V:GT", 510, 0, 0, {}, "2016")};
    const auto z = compute_z_tilde(rs, TrackTable::standard());
    CHECK(z.at({"s", "2015"}) == 1.0);
    CHECK(z.at({"s", "2016"}) == 0.0);
}

TEST_CASE("property: z_tilde is order invariant, in [0,1], and 1 only when all pass") {
    std::mt19937_64 rng(7);
    const auto tracks = TrackTable::standard();
    const auto ids = tracks.upgradeable_ids();
    std::uniform_int_distribution<int> score(501, 550);
    std::uniform_int_distribution<std::size_t> track(0, ids.size() - 1);
    std::uniform_int_distribution<int> school(0, 9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<StudentRecord> rs;
        for (int i = 0; i < 200; ++i)
            rs.push_back(rec("s" + std::to_string(school(rng)), ids[track(rng)], score(rng), 0, 0));
        const auto a = compute_z_tilde(rs, tracks);
        std::shuffle(rs.begin(), rs.end(), rng);
        const auto b = compute_z_tilde(rs, tracks);
        CHECK(a == b);
        for (const auto& [key, v] : a) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            bool all = true;
            for (const auto& r : rs)
                if (r.school_id == key.first && r.score < *tracks.at(r.track).cutoff) all = false;
            CHECK((v == 1.0) == all);
        }
    }
}

TEST_CASE("derive_instrument sets z from each record's own track") {
    auto rs = fixtures::derived({rec("s", "V:BL", 519, 0, 0), rec("s", "V:BL", 518, 0, 0), rec("s", "A:HAVO", 519, 0, 0)});
    CHECK(rs[0].z == Instrument::At);
    CHECK(rs[1].z == Instrument::Below);
    CHECK(rs[2].z == Instrument::Else);
}

TEST_CASE("stratum names round trip") {
    for (auto s : kAllStrata) CHECK(parse_stratum(to_string(s)) == s);
    CHECK_THROWS_AS(parse_stratum("R"), ValidationError);
}
