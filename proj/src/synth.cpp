#include "strata/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "strata/ingest.hpp"

namespace strata {

namespace {

constexpr double kTol = 1e-9;

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double logit(double p) { return std::log(p / (1.0 - p)); }
std::size_t idx(Stratum s) { return static_cast<std::size_t>(s); }
std::size_t idx(Compliance g) { return static_cast<std::size_t>(g); }

void check_block(const std::array<double, 3>& p, const std::string& what) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(what + ": probabilities must lie in [0,1]");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > kTol) throw ValidationError(what + ": probabilities must sum to 1");
}

std::string padded(const char* prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

void SynthConfig::validate(const Schema& schema) const {
    if (n_schools == 0) throw ValidationError("n_schools must be positive");
    if (!(students_per_school > 0.0)) throw ValidationError("students_per_school must be positive");
    if (!(size_dispersion >= 0.0)) throw ValidationError("size_dispersion must be non-negative");
    if (cohorts.empty()) throw ValidationError("at least one cohort is required");
    const auto tracks = schema.tracks.upgradeable_ids();
    if (!track_mix.empty()) {
        if (track_mix.size() != tracks.size())
            throw ValidationError("track_mix needs one entry per upgradeable track");
        double s = 0.0;
        for (double v : track_mix) {
            if (!(v >= 0.0)) throw ValidationError("track_mix entries must be non-negative");
            s += v;
        }
        if (std::fabs(s - 1.0) > kTol) throw ValidationError("track_mix must sum to 1");
    }
    if (!(near_cutoff_share >= 0.0 && near_cutoff_share <= 1.0))
        throw ValidationError("near_cutoff_share must lie in [0,1]");
    if (!(score_at_prob > 0.0 && score_at_prob < 1.0)) throw ValidationError("score_at_prob must lie in (0,1)");
    check_block(strata_probs, "strata_probs");
    if (!strata_probs_by_track.empty() && strata_probs_by_track.size() != tracks.size())
        throw ValidationError("strata_probs_by_track needs one row per upgradeable track");
    for (const auto& p : strata_probs_by_track) check_block(p, "strata_probs_by_track");
    if (strata_loading != 0.0) {
        const auto inc = schema.covariate_index("income");
        if (!inc || schema.covariates[*inc].kind != CovariateKind::Real)
            throw ValidationError("strata_loading needs a real covariate named 'income'");
        auto ok = [](const std::array<double, 3>& p) {
            return p[idx(Stratum::AL)] > 0 && p[idx(Stratum::AH)] > 0 && p[idx(Stratum::H)] > 0;
        };
        if (!ok(strata_probs)) throw ValidationError("strata_loading needs all stratum probabilities positive");
        for (const auto& p : strata_probs_by_track)
            if (!ok(p)) throw ValidationError("strata_loading needs all stratum probabilities positive");
    }
    check_block(compliance_probs, "compliance_probs");
    if (compliance_by_stratum)
        for (const auto& p : *compliance_by_stratum) check_block(p, "compliance_by_stratum");
    if (nt_loading != 0.0) {
        const auto inc = schema.covariate_index("income");
        if (!inc || schema.covariates[*inc].kind != CovariateKind::Real)
            throw ValidationError("nt_loading needs a real covariate named 'income'");
    }
    if (!(leniency_sd >= 0.0)) throw ValidationError("leniency_sd must be non-negative");
    if (!(eta_direct >= -0.2 && eta_direct <= 0.2)) throw ValidationError("eta_direct must lie in [-0.2, 0.2]");
    if (discrimination) {
        const auto a = schema.covariate_index(discrimination->attribute);
        if (!a || schema.covariates[*a].kind != CovariateKind::Binary)
            throw ValidationError("discrimination attribute must be a binary covariate");
        if (!(discrimination->rate >= 0.0 && discrimination->rate <= 1.0))
            throw ValidationError("discrimination rate must lie in [0,1]");
    }
}

double truth_apce(const CellTruth& cell, Stratum stratum) {
    const auto& row = cell.counts[idx(stratum)];
    const std::size_t n = row[0] + row[1] + row[2];
    if (n == 0) throw EmptyStratumError(std::string("no latent members of stratum ") + to_string(stratum));
    return static_cast<double>(row[idx(Compliance::C)]) / static_cast<double>(n);
}

double truth_apce(const SynthTruth& truth, Stratum stratum, const std::optional<CellKey>& cell) {
    if (!cell) return truth_apce(truth.pooled, stratum);
    auto it = truth.cells.find(*cell);
    if (it == truth.cells.end()) throw ValidationError("no truth for cell " + to_string(*cell));
    return truth_apce(it->second, stratum);
}

SynthOutput generate(const SynthConfig& cfg) { return generate(cfg, default_schema()); }

SynthOutput generate(const SynthConfig& cfg, const Schema& schema) {
    cfg.validate(schema);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto bern = [&](double p) { return unif(rng) < p; };

    const auto track_ids = schema.tracks.upgradeable_ids();
    std::vector<double> mix = cfg.track_mix;
    if (mix.empty()) mix.assign(track_ids.size(), 1.0 / static_cast<double>(track_ids.size()));
    std::discrete_distribution<std::size_t> pick_track(mix.begin(), mix.end());

    const auto income = schema.covariate_index("income");
    std::optional<std::size_t> attr;
    SynthOutput out;
    out.dataset.schema = schema;
    if (cfg.discrimination) {
        attr = schema.covariate_index(cfg.discrimination->attribute);
        out.truth.fairness_attribute = cfg.discrimination->attribute;
    } else if (auto a = schema.covariate_index("immigrant"); a && schema.covariates[*a].kind == CovariateKind::Binary) {
        attr = a;
        out.truth.fairness_attribute = "immigrant";
    }
    out.truth.eta = cfg.eta_direct;

    const int width = std::max(4, static_cast<int>(std::to_string(cfg.n_schools).size()));
    std::size_t student = 0;
    for (std::size_t s = 0; s < cfg.n_schools; ++s) {
        const double leniency = cfg.leniency_sd * normal(rng);
        const double pass_far = logistic(logit(0.43) + leniency);
        const std::string school = padded("sch", s, width);
        for (const auto& cohort : cfg.cohorts) {
            double mean = cfg.students_per_school;
            if (cfg.size_dispersion > 0.0) {
                std::gamma_distribution<double> g(1.0 / cfg.size_dispersion, cfg.size_dispersion);
                mean *= g(rng);
            }
            std::poisson_distribution<long> size(std::max(mean, 1e-9));
            const long n = std::max(1L, size(rng));
            for (long k = 0; k < n; ++k) {
                StudentRecord r;
                Latent lat;
                r.student_id = padded("s", student++, 7);
                r.school_id = school;
                r.cohort = cohort;
                const std::size_t t = pick_track(rng);
                r.track = track_ids[t];
                const int cutoff = *schema.tracks.at(r.track).cutoff;

                // Score.
                lat.near = bern(cfg.near_cutoff_share);
                if (lat.near) {
                    r.score = bern(cfg.score_at_prob) ? cutoff : cutoff - 1;
                } else {
                    const bool above_ok = cutoff + 1 <= schema.range.hi;
                    const bool below_ok = cutoff - 2 >= schema.range.lo;
                    bool above = bern(pass_far);
                    if (above && !above_ok) above = false;
                    if (!above && !below_ok) above = true;
                    if (above && !above_ok) {
                        r.score = cutoff;  // no room on either side
                    } else if (above) {
                        std::uniform_int_distribution<int> u(cutoff + 1, schema.range.hi);
                        r.score = u(rng);
                    } else {
                        std::uniform_int_distribution<int> u(schema.range.lo, cutoff - 2);
                        r.score = u(rng);
                    }
                }

                // Covariates.
                r.x.resize(schema.covariates.size());
                for (std::size_t c = 0; c < schema.covariates.size(); ++c) {
                    const auto& cs = schema.covariates[c];
                    switch (cs.kind) {
                        case CovariateKind::Binary:
                            r.x[c] = bern(cs.name == "immigrant" ? 0.2 : 0.5) ? 1.0 : 0.0;
                            break;
                        case CovariateKind::Categorical: {
                            std::uniform_int_distribution<std::size_t> u(0, cs.levels.size() - 1);
                            r.x[c] = static_cast<double>(u(rng));
                            break;
                        }
                        case CovariateKind::Real: r.x[c] = normal(rng); break;
                    }
                    if (cs.missing_indicator && bern(0.1)) r.x[c] = std::numeric_limits<double>::quiet_NaN();
                }
                const double inc = income && !std::isnan(r.x[*income]) ? r.x[*income] : 0.0;

                // Stratum.
                const auto& base = cfg.strata_probs_by_track.empty() ? cfg.strata_probs : cfg.strata_probs_by_track[t];
                std::array<double, 3> ps = base;
                if (cfg.strata_loading != 0.0) {
                    const double sx = cfg.strata_loading * inc;
                    ps[idx(Stratum::AL)] = logistic(logit(base[idx(Stratum::AL)]) - sx);
                    ps[idx(Stratum::AH)] = logistic(logit(base[idx(Stratum::AH)]) + sx);
                    ps[idx(Stratum::H)] = 1.0 - ps[idx(Stratum::AL)] - ps[idx(Stratum::AH)];
                }
                {
                    const double u = unif(rng);
                    lat.stratum = u < ps[0] ? Stratum::H : (u < ps[0] + ps[1] ? Stratum::AH : Stratum::AL);
                }

                // Compliance.
                const auto& cb = cfg.compliance_by_stratum ? (*cfg.compliance_by_stratum)[idx(lat.stratum)]
                                                           : cfg.compliance_probs;
                const double p_at = cb[idx(Compliance::AT)];
                double rel = p_at < 1.0 ? cb[idx(Compliance::NT)] / (1.0 - p_at) : 0.0;
                const double shift = cfg.nt_leniency * leniency + cfg.nt_loading * inc;
                if (shift != 0.0 && rel > 0.0 && rel < 1.0) rel = logistic(logit(rel) + shift);
                const double p_nt = (1.0 - p_at) * rel;
                {
                    const double u = unif(rng);
                    lat.compliance = u < p_at ? Compliance::AT : (u < p_at + p_nt ? Compliance::NT : Compliance::C);
                }
                if (cfg.discrimination && attr && !std::isnan(r.x[*attr]) && r.x[*attr] == 1.0 &&
                    (!cfg.discrimination->stratum || *cfg.discrimination->stratum == lat.stratum) &&
                    lat.compliance == Compliance::NT && p_nt > 0.0) {
                    if (bern(std::min(1.0, cfg.discrimination->rate / p_nt))) lat.compliance = Compliance::C;
                }
                lat.r = {lat.compliance == Compliance::AT ? 1 : 0, lat.compliance == Compliance::NT ? 0 : 1};

                // Potential outcomes Y(z, r).
                for (int rr = 0; rr < 2; ++rr) {
                    const int y0 = lat.stratum == Stratum::AL ? 0 : (lat.stratum == Stratum::AH ? 1 : rr);
                    lat.y[0][rr] = y0;
                    int y1 = y0;
                    if (cfg.eta_direct != 0.0) {
                        const double p_zero = ps[idx(Stratum::AL)] + (rr == 0 ? ps[idx(Stratum::H)] : 0.0);
                        const double eta = std::fabs(cfg.eta_direct);
                        const bool up = cfg.eta_direct > 0.0;
                        if ((up && y0 == 0) || (!up && y0 == 1)) {
                            const double denom = up ? p_zero : 1.0 - p_zero;
                            double phi = denom > 0.0 ? eta / denom : 1.0;
                            if (phi > 1.0) {
                                phi = 1.0;
                                ++out.truth.phi_clamped;
                            }
                            if (bern(phi)) y1 = 1 - y0;
                        }
                    }
                    lat.y[1][rr] = y1;
                }
                const int z_eff = r.score >= cutoff ? 1 : 0;
                r.R = lat.r[z_eff];
                r.Y = lat.y[z_eff][r.R];
                out.dataset.records.push_back(std::move(r));
                out.latent.push_back(lat);
            }
        }
    }
    derive_instrument(out.dataset.records, schema.tracks);

    // Truth from the latent labels of near-cutoff students.
    std::map<CellKey, std::array<std::array<std::array<double, 2>, 3>, 2>> fair_sum, fair_n;  // [b][J][z]
    std::array<std::array<std::array<double, 2>, 3>, 2> pooled_sum{}, pooled_n{};
    auto tally = [&](CellTruth& ct, const Latent& lat) {
        ct.counts[idx(lat.stratum)][idx(lat.compliance)] += 1;
        ct.n += 1;
        for (int z = 0; z < 2; ++z) {
            ct.pi_11[z] += lat.r[z] * lat.y[z][1];
            ct.pi_10[z] += lat.r[z] * (1 - lat.y[z][1]);
        }
    };
    for (std::size_t i = 0; i < out.latent.size(); ++i) {
        const auto& lat = out.latent[i];
        if (!lat.near) continue;
        const auto& r = out.dataset.records[i];
        const CellKey key{r.cohort, r.track};
        tally(out.truth.cells[key], lat);
        tally(out.truth.pooled, lat);
        if (attr && !std::isnan(r.x[*attr])) {
            const int b = static_cast<int>(r.x[*attr]);
            auto& fs = fair_sum[key];
            auto& fn = fair_n[key];
            for (int z = 0; z < 2; ++z) {
                fs[b][idx(lat.stratum)][z] += lat.r[z];
                fn[b][idx(lat.stratum)][z] += 1;
                pooled_sum[b][idx(lat.stratum)][z] += lat.r[z];
                pooled_n[b][idx(lat.stratum)][z] += 1;
            }
        }
    }
    auto finish = [](CellTruth& ct, const auto& sum, const auto& n) {
        for (int z = 0; z < 2; ++z) {
            if (ct.n > 0) {
                ct.pi_11[z] /= static_cast<double>(ct.n);
                ct.pi_10[z] /= static_cast<double>(ct.n);
            }
            for (std::size_t j = 0; j < 3; ++j) {
                const double a = n[1][j][z] > 0 ? sum[1][j][z] / n[1][j][z] : std::numeric_limits<double>::quiet_NaN();
                const double b = n[0][j][z] > 0 ? sum[0][j][z] / n[0][j][z] : std::numeric_limits<double>::quiet_NaN();
                ct.fairness[z][j] = a - b;
            }
        }
    };
    for (auto& [key, ct] : out.truth.cells) finish(ct, fair_sum[key], fair_n[key]);
    finish(out.truth.pooled, pooled_sum, pooled_n);
    return out;
}

namespace {

nlohmann::json cell_truth_json(const CellTruth& ct) {
    nlohmann::json j;
    j["n"] = ct.n;
    for (auto s : kAllStrata) {
        nlohmann::json sj;
        for (auto g : {Compliance::C, Compliance::NT, Compliance::AT}) sj[to_string(g)] = ct.counts[idx(s)][idx(g)];
        const auto n = ct.counts[idx(s)][0] + ct.counts[idx(s)][1] + ct.counts[idx(s)][2];
        sj["apce"] = n ? nlohmann::json(truth_apce(ct, s)) : nlohmann::json(nullptr);
        j["strata"][to_string(s)] = sj;
    }
    j["pi_11"] = ct.pi_11;
    j["pi_10"] = ct.pi_10;
    for (int z = 0; z < 2; ++z)
        for (auto s : kAllStrata) {
            const double v = ct.fairness[z][idx(s)];
            j["fairness"][std::to_string(z)][to_string(s)] = std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
        }
    return j;
}

}  // namespace

nlohmann::json truth_to_json(const SynthOutput& out, bool include_latent) {
    nlohmann::json j;
    j["eta"] = out.truth.eta;
    j["fairness_attribute"] = out.truth.fairness_attribute;
    j["phi_clamped"] = out.truth.phi_clamped;
    j["pooled"] = cell_truth_json(out.truth.pooled);
    for (const auto& [key, ct] : out.truth.cells) {
        auto cj = cell_truth_json(ct);
        cj["cohort"] = key.cohort;
        cj["track"] = key.track;
        j["cells"].push_back(cj);
    }
    if (include_latent) {
        for (std::size_t i = 0; i < out.latent.size(); ++i) {
            const auto& l = out.latent[i];
            j["latent"].push_back({{"student_id", out.dataset.records[i].student_id},
                                   {"stratum", to_string(l.stratum)},
                                   {"compliance", to_string(l.compliance)},
                                   {"near", l.near}});
        }
    }
    return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    try {
        c.n_schools = j.value("n_schools", c.n_schools);
        c.students_per_school = j.value("students_per_school", c.students_per_school);
        c.size_dispersion = j.value("size_dispersion", c.size_dispersion);
        c.cohorts = j.value("cohorts", c.cohorts);
        c.track_mix = j.value("track_mix", c.track_mix);
        c.near_cutoff_share = j.value("near_cutoff_share", c.near_cutoff_share);
        c.score_at_prob = j.value("score_at_prob", c.score_at_prob);
        c.strata_probs = j.value("strata_probs", c.strata_probs);
        c.strata_probs_by_track = j.value("strata_probs_by_track", c.strata_probs_by_track);
        c.strata_loading = j.value("strata_loading", c.strata_loading);
        c.compliance_probs = j.value("compliance_probs", c.compliance_probs);
        if (j.contains("compliance_by_stratum"))
            c.compliance_by_stratum = j["compliance_by_stratum"].get<std::array<std::array<double, 3>, 3>>();
        c.leniency_sd = j.value("leniency_sd", c.leniency_sd);
        c.nt_leniency = j.value("nt_leniency", c.nt_leniency);
        c.nt_loading = j.value("nt_loading", c.nt_loading);
        c.eta_direct = j.value("eta_direct", c.eta_direct);
        if (j.contains("discrimination") && !j["discrimination"].is_null()) {
            const auto& d = j["discrimination"];
            SynthConfig::Discrimination disc;
            disc.attribute = d.value("attribute", disc.attribute);
            disc.rate = d.value("rate", disc.rate);
            if (d.contains("stratum") && !d["stratum"].is_null()) disc.stratum = parse_stratum(d["stratum"]);
            c.discrimination = disc;
        }
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed generator config: ") + e.what());
    }
    return c;
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
    nlohmann::json j{{"n_schools", c.n_schools},
                     {"students_per_school", c.students_per_school},
                     {"size_dispersion", c.size_dispersion},
                     {"cohorts", c.cohorts},
                     {"track_mix", c.track_mix},
                     {"near_cutoff_share", c.near_cutoff_share},
                     {"score_at_prob", c.score_at_prob},
                     {"strata_probs", c.strata_probs},
                     {"strata_probs_by_track", c.strata_probs_by_track},
                     {"strata_loading", c.strata_loading},
                     {"compliance_probs", c.compliance_probs},
                     {"leniency_sd", c.leniency_sd},
                     {"nt_leniency", c.nt_leniency},
                     {"nt_loading", c.nt_loading},
                     {"eta_direct", c.eta_direct},
                     {"seed", c.seed}};
    j["compliance_by_stratum"] = c.compliance_by_stratum ? nlohmann::json(*c.compliance_by_stratum) : nlohmann::json(nullptr);
    if (c.discrimination) {
        j["discrimination"] = {{"attribute", c.discrimination->attribute}, {"rate", c.discrimination->rate}};
        j["discrimination"]["stratum"] = c.discrimination->stratum ? nlohmann::json(to_string(*c.discrimination->stratum))
                                                                   : nlohmann::json(nullptr);
    } else {
        j["discrimination"] = nullptr;
    }
    return j;
}

}  // namespace strata
