#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "strata/apce.hpp"
#include "strata/inference.hpp"
#include "strata/loss.hpp"
#include "strata/sensitivity.hpp"
#include "strata/unconf.hpp"

namespace strata {

// Fixed four-decimal rendering; NaN prints as "NA".
std::string fmt4(double v);
std::string flag_string(const BoundFlags& f);

void write_apce_csv(const ApceTable& t, std::ostream& out);
void write_balance_csv(const BalanceReport& r, std::ostream& out);

struct FirstStageRow {
    CellKey cell;
    std::string adjustment;
    double delta = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    std::vector<std::string> dropped;
};
void write_first_stage_csv(const std::vector<FirstStageRow>& rows, std::ostream& out);

void write_loss_csv(const std::vector<LossCurve>& curves, std::ostream& out);
void write_eta_csv(const std::map<CellKey, EtaEstimate>& eta, std::ostream& out);

// One row per (group, stratum, kind): kind is "er", "noer" or "unconf".
void write_interval_overlay_csv(const ApceTable& er, const ApceTable& noer, const std::vector<UnconfPointRow>& points,
                                std::ostream& out);
void write_fairness_csv(const std::vector<FairnessRow>& rows, std::ostream& out);

// Full-precision JSON; NaN becomes null.
nlohmann::json to_json(const CellEstimate& e);
nlohmann::json to_json(const AggregateEstimate& a);
nlohmann::json to_json(const ApceTable& t);
nlohmann::json to_json(const BalanceReport& r);
nlohmann::json to_json(const std::vector<FirstStageRow>& rows);
nlohmann::json to_json(const std::vector<LossCurve>& curves);
nlohmann::json to_json(const std::map<CellKey, EtaEstimate>& eta);
nlohmann::json to_json(const std::vector<UnconfPointRow>& rows);
nlohmann::json to_json(const std::vector<FairnessRow>& rows);

}  // namespace strata
