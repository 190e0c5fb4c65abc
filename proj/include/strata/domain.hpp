#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "strata/errors.hpp"

namespace strata {

enum class Instrument { Below, At, Else };
enum class Stratum { H, AH, AL };
enum class Compliance { C, NT, AT };

inline constexpr Stratum kAllStrata[] = {Stratum::H, Stratum::AH, Stratum::AL};

const char* to_string(Instrument z);
const char* to_string(Stratum s);
const char* to_string(Compliance g);
Stratum parse_stratum(const std::string& s);

struct TrackSpec {
    std::string id;
    std::optional<int> cutoff;  // absent for the top track
    std::string group;          // aggregate the track belongs to, e.g. "Vocational"
};

struct ScoreRange {
    int lo = 501;
    int hi = 550;
    bool contains(int s) const { return s >= lo && s <= hi; }
};

// Ordered from least to most demanding track.
class TrackTable {
public:
    TrackTable() = default;
    explicit TrackTable(std::vector<TrackSpec> tracks);

    static TrackTable standard();

    const std::vector<TrackSpec>& tracks() const { return tracks_; }
    const TrackSpec* find(const std::string& id) const;
    const TrackSpec& at(const std::string& id) const;
    // Position in difficulty order; throws for unknown ids.
    std::size_t index_of(const std::string& id) const;
    std::vector<std::string> upgradeable_ids() const;
    std::vector<std::string> groups() const;

private:
    std::vector<TrackSpec> tracks_;
};

enum class CovariateKind { Binary, Categorical, Real };

struct CovariateSpec {
    std::string name;
    CovariateKind kind = CovariateKind::Real;
    bool missing_indicator = false;   // missing values allowed, paired 0/1 column
    std::vector<std::string> levels;  // categorical only; first level is the reference
};

struct Schema {
    std::vector<CovariateSpec> covariates;
    TrackTable tracks = TrackTable::standard();
    ScoreRange range;

    std::optional<std::size_t> covariate_index(const std::string& name) const;
};

struct StudentRecord {
    std::string student_id;
    std::string school_id;
    std::string cohort;
    std::string track;
    int score = 0;
    int R = 0;
    int Y = 0;
    // One entry per schema covariate. NaN marks a missing value; categorical
    // values hold the level index.
    std::vector<double> x;
    Instrument z = Instrument::Else;
    double z_tilde = 0.0;
};

struct CellKey {
    std::string cohort;
    std::string track;
    auto operator<=>(const CellKey&) const = default;
};

std::string to_string(const CellKey& k);

struct Dataset {
    std::vector<StudentRecord> records;
    Schema schema;
};

Instrument assign_instrument(int score, const TrackSpec& spec);

using SchoolCohort = std::pair<std::string, std::string>;  // (school_id, cohort)

// Fraction of each school-cohort's students scoring at or above their own
// track's cutoff.
std::map<SchoolCohort, double> compute_z_tilde(const std::vector<StudentRecord>& records,
                                               const TrackTable& tracks);

// Fills z and z_tilde on every record.
void derive_instrument(std::vector<StudentRecord>& records, const TrackTable& tracks);

}  // namespace strata
