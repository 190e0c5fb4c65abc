#pragma once

#include <string>
#include <vector>

#include "strata/domain.hpp"
#include "strata/synth.hpp"

namespace fixtures {

inline strata::StudentRecord rec(std::string school, std::string track, int score, int R, int Y,
                                 std::vector<double> x = {}, std::string cohort = "2015") {
    static int next = 0;
    strata::StudentRecord r;
    r.student_id = "t" + std::to_string(next++);
    r.school_id = std::move(school);
    r.cohort = std::move(cohort);
    r.track = std::move(track);
    r.score = score;
    r.R = R;
    r.Y = Y;
    r.x = std::move(x);
    return r;
}

// Records with Z and Z~ filled in from the standard track table.
inline std::vector<strata::StudentRecord> derived(std::vector<strata::StudentRecord> rs) {
    strata::derive_instrument(rs, strata::TrackTable::standard());
    return rs;
}

// One cohort, one track, every student placed at or just below the cutoff.
inline strata::SynthConfig single_cell(std::size_t schools, double per_school, std::uint64_t seed) {
    strata::SynthConfig c;
    c.n_schools = schools;
    c.students_per_school = per_school;
    c.cohorts = {"2015"};
    c.track_mix = {0, 0, 1, 0, 0, 0, 0, 0};
    c.near_cutoff_share = 1.0;
    c.seed = seed;
    return c;
}

}  // namespace fixtures
