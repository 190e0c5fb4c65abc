// Batch front end: each subcommand reads a dataset, runs one analysis and
// writes CSV tables (4 decimals) plus a full-precision JSON file to --out.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "strata/apce.hpp"
#include "strata/design.hpp"
#include "strata/ingest.hpp"
#include "strata/inference.hpp"
#include "strata/loss.hpp"
#include "strata/report.hpp"
#include "strata/sensitivity.hpp"
#include "strata/synth.hpp"
#include "strata/unconf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace strata;

namespace {

constexpr const char* kVersion = "1.0.0";

struct RunConfig {
    std::string input;
    std::string schema;
    std::string out = ".";
    std::uint64_t seed = 20240501;
    std::size_t reps = 1000;
    std::string adjust = "raw";
    std::string eta = "estimate";
    std::string grid;
    std::vector<std::string> attributes;
    bool free_h_upper = false;
    bool loss_minus = false;
};

struct SimConfig {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 1;
    bool seed_given = false;
    bool latent = false;
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    f << content;
    if (!f) throw IoError("write failed for '" + p.string() + "'");
}

template <typename Fn>
void write_with(const fs::path& p, Fn fn) {
    std::ostringstream s;
    fn(s);
    write_file(p, s.str());
}

fs::path out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "'");
    return fs::path(dir);
}

Dataset load(const RunConfig& rc) {
    if (rc.input.empty()) throw ValidationError("--input is required");
    const Schema schema = rc.schema.empty() ? default_schema() : load_schema(rc.schema);
    auto res = load_csv(rc.input, schema);
    if (!res.rejects.empty()) {
        std::ostringstream s;
        write_rejects(res.rejects, s);
        write_file(out_dir(rc.out) / "rejects.jsonl", s.str());
        std::cerr << json{{"warning", "rows rejected"}, {"count", res.rejects.size()}}.dump() << '\n';
    }
    if (res.dataset.records.empty()) throw ValidationError("input has no valid records", "EmptyInput");
    return std::move(res.dataset);
}

BootstrapConfig boot(const RunConfig& rc) {
    BootstrapConfig b;
    b.replications = rc.reps;
    b.seed = rc.seed;
    return b;
}

AdjustmentSpec adjustment(const RunConfig& rc) {
    AdjustmentSpec a;
    a.mode = parse_adjust_mode(rc.adjust);
    return a;
}

BoundOptions bound_options(const RunConfig& rc) {
    BoundOptions o;
    o.force_h_upper_to_one = !rc.free_h_upper;
    return o;
}

std::vector<double> parse_grid(const std::string& s) {
    if (s.empty()) return default_loss_grid();
    std::vector<double> g;
    auto number = [](const std::string& t) {
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (t.empty() || end != t.c_str() + t.size()) throw ValidationError("bad number '" + t + "' in --grid");
        return v;
    };
    if (s.find(':') != std::string::npos) {
        const auto m = parse_eta_mode("sweep=" + s);
        return m.grid;
    }
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');) g.push_back(number(tok));
    return g;
}

json metadata(const RunConfig& rc, const std::string& command) {
    return {{"command", command},
            {"version", kVersion},
            {"input", rc.input},
            {"seed", rc.seed},
            {"replications", rc.reps},
            {"adjustment", rc.adjust},
            {"h_upper_forced_to_one", !rc.free_h_upper},
            {"loss_sign", rc.loss_minus ? "minus" : "plus"},
            {"p_values", "one-sided normal approximation with bootstrap SE"},
            {"balance_p_values", "two-sided t with schools - 1 df, bootstrap SE scaled by sqrt(G/(G-1))"},
            {"bootstrap", "school blocks resampled within cohort"}};
}

void dump_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

// --- analyses shared by the individual commands and the report bundle ---

json run_balance(const RunConfig& rc, const Dataset& ds, const fs::path& dir) {
    const auto rep = balance_test(ds.records, ds.schema, boot(rc));
    write_with(dir / "balance.csv", [&](std::ostream& o) { write_balance_csv(rep, o); });
    return to_json(rep);
}

json run_first_stage(const RunConfig& rc, const Dataset& ds, const fs::path& dir) {
    const auto near = near_cutoff_subset(ds);
    std::vector<FirstStageRow> rows;
    std::vector<AdjustmentSpec> specs = {AdjustmentSpec::raw()};
    if (!ds.schema.covariates.empty()) specs.push_back(AdjustmentSpec::full());
    const auto cells = partition_cells(near.records);
    for (const auto& spec : specs) {
        std::vector<CellKey> keys;
        for (const auto& [k, c] : cells) keys.push_back(k);
        auto stat = [&](const std::vector<StudentRecord>& s) {
            const auto rcells = partition_cells(s);
            std::vector<double> v;
            for (const auto& k : keys) {
                double d = std::nan("");
                auto it = rcells.find(k);
                if (it != rcells.end()) {
                    try {
                        d = fit_first_stage(it->second, spec, ds.schema).coefficient("Z");
                    } catch (const EstimationError&) {
                    }
                }
                v.push_back(d);
            }
            return v;
        };
        const auto b = block_bootstrap(near.records, stat, boot(rc));
        for (std::size_t i = 0; i < keys.size(); ++i) {
            const auto m = fit_first_stage(cells.at(keys[i]), spec, ds.schema);
            rows.push_back({keys[i], to_string(spec.mode), b.estimate[i], b.se[i], cells.at(keys[i]).size(), m.dropped});
        }
    }
    write_with(dir / "first_stage.csv", [&](std::ostream& o) { write_first_stage_csv(rows, o); });
    return to_json(rows);
}

std::vector<Stratum> all_strata() { return {Stratum::H, Stratum::AH, Stratum::AL}; }

void write_per_stratum(const fs::path& dir, const std::string& prefix, const ApceTable& t) {
    for (auto s : all_strata()) {
        ApceTable part;
        part.replications = t.replications;
        for (const auto& e : t.cells)
            if (e.stratum == s) part.cells.push_back(e);
        for (const auto& a : t.aggregates)
            if (a.stratum == s) part.aggregates.push_back(a);
        write_with(dir / (prefix + "_" + to_string(s) + ".csv"), [&](std::ostream& o) { write_apce_csv(part, o); });
    }
}

ApceTable run_apce_table(const RunConfig& rc, const Dataset& ds) {
    const auto b = boot(rc);
    return estimate_apce_table(ds.records, all_strata(), adjustment(rc), ds.schema, bound_options(rc), &b);
}

json run_apce(const RunConfig& rc, const Dataset& ds, const fs::path& dir) {
    const auto t = run_apce_table(rc, ds);
    write_per_stratum(dir, "apce", t);
    return to_json(t);
}

json run_loss(const RunConfig& rc, const Dataset& ds, const fs::path& dir) {
    LossOptions lo;
    lo.sign = rc.loss_minus ? LossSign::Minus : LossSign::Plus;
    const auto curves = loss_test_curves(ds.records, adjustment(rc), ds.schema, parse_grid(rc.grid), boot(rc), lo);
    write_with(dir / "loss.csv", [&](std::ostream& o) { write_loss_csv(curves, o); });
    json summary = json::array();
    for (const auto& c : curves)
        summary.push_back({{"group", c.group},
                           {"first_rejection_l10", c.first_rejection ? json(*c.first_rejection) : json(nullptr)}});
    return {{"curves", to_json(curves)}, {"summary", summary}};
}

json run_sensitivity(const RunConfig& rc, const Dataset& ds, const fs::path& dir) {
    const auto b = boot(rc);
    const auto mode = parse_eta_mode(rc.eta);
    const auto adj = adjustment(rc);
    const auto opts = bound_options(rc);
    json j;
    if (mode.kind == EtaMode::Kind::Sweep) {
        const auto rows = eta_sweep(ds.records, all_strata(), adj, ds.schema, opts, &b, mode.grid);
        for (const auto& r : rows) {
            j["sweep"].push_back({{"eta", r.eta}, {"table", to_json(r.table)}});
            std::ostringstream name;
            name << "noer_eta_" << fmt4(r.eta);
            write_per_stratum(dir, name.str(), r.table);
        }
        return j;
    }
    const auto noer = estimate_noer_table(ds.records, all_strata(), adj, ds.schema, opts, &b, mode);
    const auto er = estimate_apce_table(ds.records, all_strata(), adj, ds.schema, opts, &b);
    const auto points = unconf_point_table(ds.records, ds.schema, &b);
    write_per_stratum(dir, "noer", noer.joint);
    if (mode.kind == EtaMode::Kind::Estimate) {
        write_with(dir / "eta.csv", [&](std::ostream& o) { write_eta_csv(noer.eta, o); });
        write_per_stratum(dir, "noer_eta_fixed", noer.eta_fixed);
    }
    write_with(dir / "intervals.csv", [&](std::ostream& o) { write_interval_overlay_csv(er, noer.joint, points, o); });
    j["eta"] = to_json(noer.eta);
    j["noer"] = to_json(noer.joint);
    j["noer_eta_fixed"] = to_json(noer.eta_fixed);
    j["er"] = to_json(er);
    j["unconfoundedness"] = to_json(points);
    return j;
}

json run_fairness(const RunConfig& rc, const Dataset& ds_in, const fs::path& dir) {
    if (rc.attributes.empty()) throw ValidationError("--attribute is required for fairness");
    const auto b = boot(rc);
    json j = json::array();
    std::vector<FairnessRow> all;
    for (const auto& attr : rc.attributes) {
        Dataset ds = ds_in;
        if (attr == "low_ses" && !ds.schema.covariate_index("low_ses"))
            ds = add_below_median_indicator(ds_in, "income", "low_ses");
        const auto rows = fairness_table(ds.records, ds.schema, attr, &b);
        all.insert(all.end(), rows.begin(), rows.end());
        j.push_back({{"attribute", attr}, {"rows", to_json(rows)}});
    }
    write_with(dir / "fairness.csv", [&](std::ostream& o) { write_fairness_csv(all, o); });
    return j;
}

template <typename Fn>
int guarded(Fn fn) {
    try {
        fn();
        return 0;
    } catch (const Error& e) {
        std::cerr << json{{"error", e.code()}, {"exit_code", static_cast<int>(e.kind())}, {"message", e.what()}}.dump()
                  << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Internal"}, {"exit_code", 3}, {"message", e.what()}}.dump() << '\n';
        return 3;
    }
}

void add_run_options(CLI::App* cmd, RunConfig& rc, bool eta, bool grid, bool attribute) {
    cmd->add_option("--input", rc.input, "Input CSV")->required();
    cmd->add_option("--schema", rc.schema, "Schema JSON (covariates, tracks, score range)");
    cmd->add_option("--out", rc.out, "Output directory");
    cmd->add_option("--seed", rc.seed, "Bootstrap seed");
    cmd->add_option("--reps", rc.reps, "Bootstrap replications")->check(CLI::PositiveNumber);
    cmd->add_option("--adjust", rc.adjust, "raw|ztilde|full")->check(CLI::IsMember({"raw", "ztilde", "full"}));
    cmd->add_flag("--free-h-upper", rc.free_h_upper, "Compute the H upper bound instead of fixing it at 1");
    if (eta) cmd->add_option("--eta", rc.eta, "estimate|fixed=<v>|sweep=<a:b:step>");
    if (grid) {
        cmd->add_option("--grid", rc.grid, "l10 grid: a:b:step or comma list");
        cmd->add_flag("--loss-minus", rc.loss_minus, "Use the opposite sign on the l10 term");
    }
    if (attribute) cmd->add_option("--attribute", rc.attributes, "Binary covariate (repeatable); low_ses is derived");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Principal-stratification bounds for recommendations at test-score cutoffs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    SimConfig sc;
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with known truth");
    sim->add_option("--config", sc.config, "Generator config JSON");
    sim->add_option("--out", sc.out, "Output directory");
    sim->add_option("--seed", sc.seed, "Generator seed")->each([&](const std::string&) { sc.seed_given = true; });
    sim->add_flag("--latent", sc.latent, "Include latent labels in truth.json");

    RunConfig rc;
    auto* bal = app.add_subcommand("balance", "Covariate balance across the cutoff");
    add_run_options(bal, rc, false, false, false);
    auto* fst = app.add_subcommand("first-stage", "First-stage effect of the cutoff on upgrades");
    add_run_options(fst, rc, false, false, false);
    auto* apc = app.add_subcommand("apce", "Bounds per stratum under the exclusion restriction");
    add_run_options(apc, rc, false, false, false);
    auto* los = app.add_subcommand("loss", "Loss-difference test over the l10 grid");
    add_run_options(los, rc, false, true, false);
    auto* sen = app.add_subcommand("sensitivity", "Direct-effect estimates and bounds without exclusion");
    add_run_options(sen, rc, true, false, false);
    auto* fai = app.add_subcommand("fairness", "Principal fairness deltas");
    add_run_options(fai, rc, false, false, true);
    auto* rep = app.add_subcommand("report", "All analyses in one JSON bundle");
    add_run_options(rep, rc, true, true, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << json{{"error", "Usage"}, {"exit_code", 2}, {"message", e.what()}}.dump() << '\n';
        return 2;
    }

    return guarded([&] {
        if (sim->parsed()) {
            SynthConfig cfg;
            if (!sc.config.empty()) {
                std::ifstream in(sc.config);
                if (!in) throw IoError("cannot open config '" + sc.config + "'");
                json j;
                try {
                    in >> j;
                } catch (const json::exception& e) {
                    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
                }
                cfg = synth_config_from_json(j);
            }
            if (sc.seed_given) cfg.seed = sc.seed;
            const auto dir = out_dir(sc.out);
            const auto out = generate(cfg);
            write_csv(out.dataset, (dir / "data.csv").string());
            save_schema(out.dataset.schema, (dir / "schema.json").string());
            dump_json(dir / "truth.json", truth_to_json(out, sc.latent));
            dump_json(dir / "config.json", synth_config_to_json(cfg));
            return;
        }
        const auto dir = out_dir(rc.out);
        const Dataset ds = load(rc);
        if (bal->parsed()) {
            dump_json(dir / "balance.json", {{"metadata", metadata(rc, "balance")}, {"balance", run_balance(rc, ds, dir)}});
        } else if (fst->parsed()) {
            dump_json(dir / "first_stage.json",
                      {{"metadata", metadata(rc, "first-stage")}, {"first_stage", run_first_stage(rc, ds, dir)}});
        } else if (apc->parsed()) {
            dump_json(dir / "apce.json", {{"metadata", metadata(rc, "apce")}, {"apce", run_apce(rc, ds, dir)}});
        } else if (los->parsed()) {
            dump_json(dir / "loss.json", {{"metadata", metadata(rc, "loss")}, {"loss", run_loss(rc, ds, dir)}});
        } else if (sen->parsed()) {
            auto m = metadata(rc, "sensitivity");
            m["eta_mode"] = rc.eta;
            m["eta_bootstrap"] = "noer: eta re-estimated per replicate; noer_eta_fixed: eta held at full-sample value";
            dump_json(dir / "sensitivity.json", {{"metadata", m}, {"sensitivity", run_sensitivity(rc, ds, dir)}});
        } else if (fai->parsed()) {
            dump_json(dir / "fairness.json", {{"metadata", metadata(rc, "fairness")}, {"fairness", run_fairness(rc, ds, dir)}});
        } else if (rep->parsed()) {
            auto m = metadata(rc, "report");
            m["eta_mode"] = rc.eta;
            json bundle{{"metadata", m}};
            bundle["balance"] = run_balance(rc, ds, dir);
            bundle["first_stage"] = run_first_stage(rc, ds, dir);
            bundle["apce"] = run_apce(rc, ds, dir);
            bundle["loss"] = run_loss(rc, ds, dir);
            bundle["sensitivity"] = run_sensitivity(rc, ds, dir);
            if (!rc.attributes.empty()) bundle["fairness"] = run_fairness(rc, ds, dir);
            dump_json(dir / "report.json", bundle);
        }
    });
}
