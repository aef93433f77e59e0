#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hmf/errors.hpp"

namespace hmf::allocation {

class EmptyInputError : public DataError {
public:
    using DataError::DataError;
};

enum class BadMaf { High, Medium, Low };
enum class LowResponse { High, Low };

const char* to_string(BadMaf v);
const char* to_string(LowResponse v);
BadMaf bad_maf_from_string(const std::string& s);
LowResponse low_response_from_string(const std::string& s);

struct TractStat {
    std::string tract_id;
    std::string zipcode;
    BadMaf bad_maf = BadMaf::Low;
    LowResponse low_response = LowResponse::Low;
    std::optional<long long> population;
};

struct EffortRow {
    BadMaf bad_maf = BadMaf::Low;
    LowResponse low_response = LowResponse::Low;
    double fraction = 0.0;
};

// Rows are kept in source order; lookups take the first matching row, which
// is what keeps the duplicated (High, High) source rows well-defined.
struct EffortTable {
    std::vector<EffortRow> rows;
};

// The published four-row table, verbatim and in source order:
//   (High, Low)   0.50
//   (High, High)  0.20
//   (Medium, Low) 0.15
//   (High, High)  0.15
EffortTable default_effort_table();

// First matching row's fraction; 0 for unlisted combinations.
double effort_for(const EffortTable& table, BadMaf bad_maf, LowResponse low_response);

struct TractAllocation {
    std::string tract_id;
    double effort_fraction = 0.0; // this tract's share of the total effort
    long long canvassers = 0;
};

struct AllocationPlan {
    std::vector<TractAllocation> tracts;
    long long budget = 0;
};

// Tracts matching the same table row split that row's fraction equally;
// integer canvasser counts by largest remainder. Unmatched tracts get 0.
AllocationPlan allocate(const std::vector<TractStat>& tracts, const EffortTable& table,
                        long long budget);

// Zipcodes ordered by the summed effort fractions of their tracts,
// descending; ties broken lexicographically. Front = the effective area.
std::vector<std::string> rank_zipcodes(const std::vector<TractStat>& tracts,
                                       const EffortTable& table);

// Numeric score columns are mapped to levels with these cuts.
struct LevelCuts {
    double bad_maf_high = 0.66;   // score >= high  -> High
    double bad_maf_medium = 0.33; // score >= medium -> Medium, else Low
    double low_response_high = 0.5;
};

// Tract stats CSV: tract_id,zipcode,bad_maf_score,low_response_score.
// Score columns may be numeric or level names (High/Medium/Low).
std::vector<TractStat> parse_tract_csv(const std::string& text, const LevelCuts& cuts = {});

// Effort table CSV: bad_maf,low_response,fraction (levels + decimal fraction).
EffortTable parse_effort_table_csv(const std::string& text);

std::string write_plan_csv(const AllocationPlan& plan);
std::string write_ranking_csv(const std::vector<std::string>& zipcodes,
                              const std::vector<TractStat>& tracts, const EffortTable& table);

} // namespace hmf::allocation
