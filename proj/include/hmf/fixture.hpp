#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmf/dataset.hpp"
#include "hmf/geo.hpp"
#include "hmf/records.hpp"

namespace hmf::dataset {

// Parameters of the synthetic benchmark. Multi-family houses get a second
// roof block and a dividing fence stripe, blended in with opacity
// pattern_strength; at strength 0 the two classes are drawn identically.
struct FixtureSpec {
    std::size_t n_single = 360;
    std::size_t n_multi = 80;
    double hidden_fraction = 0.5; // fraction of multis recorded as SingleFamily
    double gsd = 0.5;             // meters per pixel
    double pattern_strength = 1.0;
    double tile_side_m = 50.0;
    int cells_per_scene_side = 10; // addresses per scene row/column
    std::string hot_zipcode = "77004";
    std::vector<std::string> cool_zipcodes = {"77005", "77021"};
    std::string crs = "LOCAL-TM:lat0=29.7,lon0=-95.4,k=111320";
};

struct OracleRow {
    std::string address_id;
    int true_label = 1;
    records::OfficialLabel official_label = records::OfficialLabel::SingleFamily;
};

struct TractRow {
    std::string tract_id;
    std::string zipcode;
    double bad_maf_score = 0.0;
    double low_response_score = 0.0;
};

struct Fixture {
    std::vector<geo::RasterScene> scenes;
    std::vector<records::AddressRecord> records;
    std::vector<OracleRow> oracle; // the hidden multis only
    std::vector<TractRow> tracts;
};

Fixture synthesize_fixture(const FixtureSpec& spec, std::uint64_t seed);

// Oracle CSV: address_id,true_label,official_label
std::string write_oracle_csv(const std::vector<OracleRow>& rows);
std::vector<OracleRow> parse_oracle_csv(const std::string& text);

// Tract stats CSV: tract_id,zipcode,bad_maf_score,low_response_score
std::string write_tract_csv(const std::vector<TractRow>& rows);

} // namespace hmf::dataset
