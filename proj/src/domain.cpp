#include "strata/domain.hpp"

#include <algorithm>

namespace strata {

const char* to_string(Instrument z) {
    switch (z) {
        case Instrument::Below: return "below";
        case Instrument::At: return "at";
        case Instrument::Else: return "else";
    }
    return "?";
}

const char* to_string(Stratum s) {
    switch (s) {
        case Stratum::H: return "H";
        case Stratum::AH: return "AH";
        case Stratum::AL: return "AL";
    }
    return "?";
}

const char* to_string(Compliance g) {
    switch (g) {
        case Compliance::C: return "C";
        case Compliance::NT: return "NT";
        case Compliance::AT: return "AT";
    }
    return "?";
}

Stratum parse_stratum(const std::string& s) {
    if (s == "H") return Stratum::H;
    if (s == "AH") return Stratum::AH;
    if (s == "AL") return Stratum::AL;
    throw ValidationError("unknown stratum '" + s + "'");
}

std::string to_string(const CellKey& k) { return k.cohort + "/" + k.track; }

TrackTable::TrackTable(std::vector<TrackSpec> tracks) : tracks_(std::move(tracks)) {
    int prev = -1;
    bool seen_top = false;
    for (const auto& t : tracks_) {
        if (t.id.empty()) throw ValidationError("track with empty id");
        if (std::count_if(tracks_.begin(), tracks_.end(),
                          [&](const TrackSpec& o) { return o.id == t.id; }) > 1)
            throw ValidationError("duplicate track '" + t.id + "'");
        if (!t.cutoff) {
            seen_top = true;
            continue;
        }
        if (seen_top) throw ValidationError("track '" + t.id + "' listed after the top track");
        if (*t.cutoff < prev)
            throw ValidationError("cutoffs must be non-decreasing; '" + t.id + "' breaks order");
        prev = *t.cutoff;
    }
}

TrackTable TrackTable::standard() {
    return TrackTable({
        {"V:BL", 519, "Vocational"},
        {"V:BL/KL", 526, "Vocational"},
        {"V:KL", 529, "Vocational"},
        {"V:KL/GT", 529, "Vocational"},
        {"V:GT", 533, "Vocational"},
        {"V:GT/HAVO", 537, "Vocational"},
        {"A:HAVO", 540, "Academic"},
        {"A:HAVO/VWO", 545, "Academic"},
        {"A:VWO", std::nullopt, "Academic"},
    });
}

const TrackSpec* TrackTable::find(const std::string& id) const {
    for (const auto& t : tracks_)
        if (t.id == id) return &t;
    return nullptr;
}

const TrackSpec& TrackTable::at(const std::string& id) const {
    if (const auto* t = find(id)) return *t;
    throw ValidationError("unknown track '" + id + "'", "UnknownTrack");
}

std::size_t TrackTable::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < tracks_.size(); ++i)
        if (tracks_[i].id == id) return i;
    throw ValidationError("unknown track '" + id + "'", "UnknownTrack");
}

std::vector<std::string> TrackTable::upgradeable_ids() const {
    std::vector<std::string> out;
    for (const auto& t : tracks_)
        if (t.cutoff) out.push_back(t.id);
    return out;
}

std::vector<std::string> TrackTable::groups() const {
    std::vector<std::string> out;
    for (const auto& t : tracks_)
        if (t.cutoff && std::find(out.begin(), out.end(), t.group) == out.end())
            out.push_back(t.group);
    return out;
}

std::optional<std::size_t> Schema::covariate_index(const std::string& name) const {
    for (std::size_t i = 0; i < covariates.size(); ++i)
        if (covariates[i].name == name) return i;
    return std::nullopt;
}

Instrument assign_instrument(int score, const TrackSpec& spec) {
    if (!spec.cutoff) throw NotUpgradeableError(spec.id);
    if (score == *spec.cutoff) return Instrument::At;
    if (score == *spec.cutoff - 1) return Instrument::Below;
    return Instrument::Else;
}

std::map<SchoolCohort, double> compute_z_tilde(const std::vector<StudentRecord>& records,
                                               const TrackTable& tracks) {
    std::map<SchoolCohort, std::pair<long, long>> counts;  // (above, total)
    for (const auto& r : records) {
        const auto& spec = tracks.at(r.track);
        if (!spec.cutoff) throw NotUpgradeableError(spec.id);
        auto& c = counts[{r.school_id, r.cohort}];
        c.first += r.score >= *spec.cutoff ? 1 : 0;
        c.second += 1;
    }
    std::map<SchoolCohort, double> out;
    for (const auto& [key, c] : counts) {
        if (c.second == 0) throw ValidationError("empty school group " + key.first);
        out[key] = static_cast<double>(c.first) / static_cast<double>(c.second);
    }
    return out;
}

void derive_instrument(std::vector<StudentRecord>& records, const TrackTable& tracks) {
    const auto zt = compute_z_tilde(records, tracks);
    for (auto& r : records) {
        r.z = assign_instrument(r.score, tracks.at(r.track));
        r.z_tilde = zt.at({r.school_id, r.cohort});
    }
}

}  // namespace strata
