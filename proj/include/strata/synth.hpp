#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "strata/domain.hpp"

namespace strata {

struct SynthConfig {
    std::size_t n_schools = 200;
    double students_per_school = 100.0;  // mean per school and cohort
    double size_dispersion = 0.0;        // 0 gives Poisson sizes; >0 adds gamma heterogeneity
    std::vector<std::string> cohorts = {"2015", "2016"};
    // Mix over the upgradeable tracks of the schema, in table order. Empty
    // means uniform.
    std::vector<double> track_mix;
    double near_cutoff_share = 0.3;  // students placed at cutoff-1 or cutoff
    double score_at_prob = 0.43;     // at vs below among near-cutoff students
    // Stratum probabilities indexed by Stratum {H, AH, AL}; a per-track
    // override may be given in table order.
    std::array<double, 3> strata_probs = {0.29, 0.26, 0.45};
    std::vector<std::array<double, 3>> strata_probs_by_track;
    // P(AL|X) = logistic(logit pAL - s), P(AH|X) = logistic(logit pAH + s),
    // s = strata_loading * income.
    double strata_loading = 0.0;
    // Compliance probabilities indexed by Compliance {C, NT, AT}; optionally
    // per stratum.
    std::array<double, 3> compliance_probs = {0.15, 0.83, 0.02};
    std::optional<std::array<std::array<double, 3>, 3>> compliance_by_stratum;
    double leniency_sd = 0.5;   // school leniency, shifts the far-from-cutoff pass rate
    double nt_leniency = 0.0;   // logit shift of the Never-Taker share per unit leniency
    double nt_loading = 0.0;    // logit shift of the Never-Taker share per unit income
    double eta_direct = 0.0;    // direct effect of scoring at/above the cutoff on Y
    struct Discrimination {
        std::string attribute = "immigrant";
        std::optional<Stratum> stratum;  // absent: every stratum
        double rate = 0.1;               // extra upgrade probability at the cutoff for attribute = 1
    };
    std::optional<Discrimination> discrimination;
    std::uint64_t seed = 1;

    void validate(const Schema& schema) const;
};

struct Latent {
    Stratum stratum = Stratum::H;
    Compliance compliance = Compliance::NT;
    std::array<int, 2> r{};                  // R(z)
    std::array<std::array<int, 2>, 2> y{};   // Y(z, r)
    bool near = false;
};

struct CellTruth {
    std::array<std::array<std::size_t, 3>, 3> counts{};  // [stratum][compliance], near-cutoff only
    std::array<double, 2> pi_11{};  // Pr(R(z)=1, Y(z,1)=1)
    std::array<double, 2> pi_10{};  // Pr(R(z)=1, Y(z,1)=0)
    // Delta_J(z) for the discrimination attribute (or "immigrant"), [z][stratum].
    std::array<std::array<double, 3>, 2> fairness{};
    std::size_t n = 0;
};

struct SynthTruth {
    std::map<CellKey, CellTruth> cells;
    CellTruth pooled;
    double eta = 0.0;
    std::string fairness_attribute;
    std::size_t phi_clamped = 0;  // direct-effect flips capped at probability 1
};

struct SynthOutput {
    Dataset dataset;
    SynthTruth truth;
    std::vector<Latent> latent;  // aligned with dataset.records
};

// Schema defaults to default_schema() from ingest.
SynthOutput generate(const SynthConfig& cfg);
SynthOutput generate(const SynthConfig& cfg, const Schema& schema);

// Complier share within the stratum, from latent counts. No cell means the
// pooled near-cutoff sample.
double truth_apce(const SynthTruth& truth, Stratum stratum, const std::optional<CellKey>& cell = std::nullopt);
double truth_apce(const CellTruth& cell, Stratum stratum);

nlohmann::json truth_to_json(const SynthOutput& out, bool include_latent);
SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

}  // namespace strata
