#include "hmf/allocation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "hmf/csv.hpp"

namespace hmf::allocation {

const char* to_string(BadMaf v) {
    switch (v) {
    case BadMaf::High: return "High";
    case BadMaf::Medium: return "Medium";
    case BadMaf::Low: return "Low";
    }
    return "?";
}

const char* to_string(LowResponse v) {
    return v == LowResponse::High ? "High" : "Low";
}

BadMaf bad_maf_from_string(const std::string& s) {
    if (s == "High") return BadMaf::High;
    if (s == "Medium") return BadMaf::Medium;
    if (s == "Low") return BadMaf::Low;
    throw DataError("bad MAF level '" + s + "' (High|Medium|Low)");
}

LowResponse low_response_from_string(const std::string& s) {
    if (s == "High") return LowResponse::High;
    if (s == "Low") return LowResponse::Low;
    throw DataError("low response level '" + s + "' (High|Low)");
}

EffortTable default_effort_table() {
    EffortTable t;
    t.rows = {
        {BadMaf::High, LowResponse::Low, 0.50},
        {BadMaf::High, LowResponse::High, 0.20},
        {BadMaf::Medium, LowResponse::Low, 0.15},
        {BadMaf::High, LowResponse::High, 0.15},
    };
    return t;
}

double effort_for(const EffortTable& table, BadMaf bad_maf, LowResponse low_response) {
    for (const auto& row : table.rows) {
        if (row.bad_maf == bad_maf && row.low_response == low_response) return row.fraction;
    }
    return 0.0;
}

namespace {

// index of the first matching row, or -1
int match_row(const EffortTable& table, const TractStat& t) {
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        if (table.rows[i].bad_maf == t.bad_maf && table.rows[i].low_response == t.low_response) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

} // namespace

AllocationPlan allocate(const std::vector<TractStat>& tracts, const EffortTable& table,
                        long long budget) {
    if (budget < 0) throw ConfigError("allocate: negative budget");
    if (tracts.empty() && budget > 0) {
        throw EmptyInputError("allocate: no tracts for a positive budget");
    }

    std::vector<int> row_of(tracts.size(), -1);
    std::vector<long long> bucket_count(table.rows.size(), 0);
    for (std::size_t i = 0; i < tracts.size(); ++i) {
        row_of[i] = match_row(table, tracts[i]);
        if (row_of[i] >= 0) ++bucket_count[static_cast<std::size_t>(row_of[i])];
    }

    AllocationPlan plan;
    plan.budget = budget;
    plan.tracts.resize(tracts.size());

    std::vector<double> quota(tracts.size(), 0.0);
    double quota_sum = 0.0;
    for (std::size_t i = 0; i < tracts.size(); ++i) {
        plan.tracts[i].tract_id = tracts[i].tract_id;
        if (row_of[i] < 0) continue;
        const auto& row = table.rows[static_cast<std::size_t>(row_of[i])];
        const double share = row.fraction / static_cast<double>(bucket_count[row_of[i]]);
        plan.tracts[i].effort_fraction = share;
        quota[i] = share * static_cast<double>(budget);
        quota_sum += quota[i];
    }

    // largest-remainder rounding of the quotas
    const long long total = static_cast<long long>(std::floor(quota_sum + 1e-9));
    long long assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t i = 0; i < tracts.size(); ++i) {
        const long long base = static_cast<long long>(std::floor(quota[i] + 1e-9));
        plan.tracts[i].canvassers = base;
        assigned += base;
        remainders.emplace_back(quota[i] - static_cast<double>(base), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
        plan.tracts[remainders[k].second].canvassers += 1;
        ++assigned;
    }
    return plan;
}

std::vector<std::string> rank_zipcodes(const std::vector<TractStat>& tracts,
                                       const EffortTable& table) {
    std::map<std::string, double> totals;
    for (const auto& t : tracts) {
        totals[t.zipcode] += effort_for(table, t.bad_maf, t.low_response);
    }
    std::vector<std::pair<std::string, double>> items(totals.begin(), totals.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& [zip, score] : items) out.push_back(zip);
    return out;
}

namespace {

bool parse_number(const std::string& s, double& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

} // namespace

std::vector<TractStat> parse_tract_csv(const std::string& text, const LevelCuts& cuts) {
    std::istringstream in(text);
    auto rows = csv::read(in);
    const std::vector<std::string> header = {"tract_id", "zipcode", "bad_maf_score",
                                             "low_response_score"};
    if (rows.empty() || rows[0] != header) {
        throw DataError("tract csv: header must be tract_id,zipcode,bad_maf_score,"
                        "low_response_score");
    }
    std::vector<TractStat> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 4) {
            throw DataError("tract csv: row " + std::to_string(i + 1) + " has " +
                            std::to_string(rows[i].size()) + " fields");
        }
        TractStat t;
        t.tract_id = rows[i][0];
        t.zipcode = rows[i][1];
        double v = 0.0;
        if (parse_number(rows[i][2], v)) {
            t.bad_maf = v >= cuts.bad_maf_high ? BadMaf::High
                        : v >= cuts.bad_maf_medium ? BadMaf::Medium
                                                   : BadMaf::Low;
        } else {
            t.bad_maf = bad_maf_from_string(rows[i][2]);
        }
        if (parse_number(rows[i][3], v)) {
            t.low_response = v >= cuts.low_response_high ? LowResponse::High : LowResponse::Low;
        } else {
            t.low_response = low_response_from_string(rows[i][3]);
        }
        out.push_back(std::move(t));
    }
    return out;
}

EffortTable parse_effort_table_csv(const std::string& text) {
    std::istringstream in(text);
    auto rows = csv::read(in);
    const std::vector<std::string> header = {"bad_maf", "low_response", "fraction"};
    if (rows.empty() || rows[0] != header) {
        throw DataError("effort table csv: header must be bad_maf,low_response,fraction");
    }
    EffortTable t;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 3) {
            throw DataError("effort table csv: bad row " + std::to_string(i + 1));
        }
        EffortRow row;
        row.bad_maf = bad_maf_from_string(rows[i][0]);
        row.low_response = low_response_from_string(rows[i][1]);
        double f = 0.0;
        if (!parse_number(rows[i][2], f) || f < 0.0 || f > 1.0) {
            throw DataError("effort table csv: fraction out of [0,1] on row " +
                            std::to_string(i + 1));
        }
        row.fraction = f;
        t.rows.push_back(row);
    }
    if (t.rows.empty()) throw DataError("effort table csv: no rows");
    return t;
}

std::string write_plan_csv(const AllocationPlan& plan) {
    std::ostringstream out;
    out << "tract_id,effort_fraction,canvassers\n";
    char buf[128];
    for (const auto& t : plan.tracts) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%lld\n", t.tract_id.c_str(), t.effort_fraction,
                      t.canvassers);
        out << buf;
    }
    return out.str();
}

std::string write_ranking_csv(const std::vector<std::string>& zipcodes,
                              const std::vector<TractStat>& tracts, const EffortTable& table) {
    std::map<std::string, double> totals;
    for (const auto& t : tracts) {
        totals[t.zipcode] += effort_for(table, t.bad_maf, t.low_response);
    }
    std::ostringstream out;
    out << "rank,zipcode,total_effort\n";
    char buf[96];
    for (std::size_t i = 0; i < zipcodes.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.6f\n", i + 1, zipcodes[i].c_str(),
                      totals[zipcodes[i]]);
        out << buf;
    }
    return out.str();
}

} // namespace hmf::allocation
