#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "strata/domain.hpp"

namespace strata {

struct Reject {
    std::size_t line = 0;  // 1-based, header is line 1
    std::string reason;
    std::string detail;
};

struct LoadResult {
    Dataset dataset;
    std::vector<Reject> rejects;
};

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);
Schema load_schema(const std::string& path);
void save_schema(const Schema& schema, const std::string& path);

// Built-in covariate set used by the generator and as the CLI fallback.
Schema default_schema();

LoadResult load_csv(const std::string& path, const Schema& schema);
LoadResult parse_csv(std::istream& in, const Schema& schema);
void write_csv(const Dataset& ds, const std::string& path);
void write_csv(const Dataset& ds, std::ostream& out);
void write_rejects(const std::vector<Reject>& rejects, std::ostream& out);

Dataset near_cutoff_subset(const Dataset& ds);
std::map<CellKey, std::vector<StudentRecord>> partition_cells(const std::vector<StudentRecord>& records);

}  // namespace strata
