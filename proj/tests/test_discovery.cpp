#include <doctest.h>

#include <cmath>
#include <set>

#include <json.hpp>

#include "hmf/discovery.hpp"
#include "hmf/fixture.hpp"

using namespace hmf;
using namespace hmf::discovery;

namespace {

records::AddressRecord rec(const std::string& id, bool multi, double lat = 29.72,
                           double lon = -95.36) {
    records::AddressRecord r;
    r.address_id = id;
    r.street_text = id + " St";
    r.category_code = multi ? "B1" : "A1";
    r.official_label = multi ? records::OfficialLabel::MultiFamily
                             : records::OfficialLabel::SingleFamily;
    r.lat = lat;
    r.lon = lon;
    r.zipcode = "77004";
    r.tract_id = "T";
    return r;
}

model::TrainedModel zero_model(int input_side = 16) {
    model::ModelSpec spec;
    spec.input_side = input_side;
    spec.stages = {{4, 1}};
    model::Network net(spec); // zero params -> every score is 0.5
    model::TrainedModel m;
    m.spec = spec;
    m.params = net.params();
    return m;
}

} // namespace

TEST_CASE("sweep_region: one score per croppable address, deterministic") {
    dataset::FixtureSpec spec;
    spec.n_single = 12;
    spec.n_multi = 4;
    spec.gsd = 1.0;
    auto fx = dataset::synthesize_fixture(spec, 5);

    auto m = zero_model();
    SweepStats stats;
    auto scores = sweep_region(fx.records, fx.scenes, m, spec.tile_side_m, &stats);
    CHECK(scores.size() == 16);
    CHECK(stats.scored == 16);
    CHECK(stats.skipped == 0);
    for (const auto& s : scores) CHECK(s.score == 0.5);

    auto again = sweep_region(fx.records, fx.scenes, m, spec.tile_side_m);
    REQUIRE(again.size() == scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        CHECK(again[i].address_id == scores[i].address_id);
        CHECK(again[i].score == scores[i].score);
    }
}

TEST_CASE("sweep_region: addresses with no usable scene are skipped") {
    dataset::FixtureSpec spec;
    spec.n_single = 6;
    spec.n_multi = 2;
    spec.gsd = 1.0;
    auto fx = dataset::synthesize_fixture(spec, 6);
    auto far = rec("FAR", false, 45.0, -120.0);
    fx.records.push_back(far);

    SweepStats stats;
    auto scores = sweep_region(fx.records, fx.scenes, zero_model(), spec.tile_side_m, &stats);
    CHECK(scores.size() == 8);
    CHECK(stats.skipped == 1);

    CHECK_THROWS_AS(sweep_region({far}, fx.scenes, zero_model(), spec.tile_side_m),
                    EmptyRegionError);
}

TEST_CASE("rank_suspects: officially multi-family addresses are confirmations") {
    std::vector<records::AddressRecord> records = {rec("S1", false), rec("S2", false),
                                                   rec("M1", true)};
    std::vector<ScoredAddress> scores = {{"S1", 0.8}, {"S2", 0.3}, {"M1", 0.99}};
    auto report = rank_suspects(scores, records, 0.5);
    REQUIRE(report.entries.size() == 1);
    CHECK(report.entries[0].address_id == "S1");
    REQUIRE(report.confirmations.size() == 1);
    CHECK(report.confirmations[0].address_id == "M1");
}

TEST_CASE("rank_suspects: a threshold above every score empties the report") {
    std::vector<records::AddressRecord> records = {rec("S1", false), rec("S2", false)};
    std::vector<ScoredAddress> scores = {{"S1", 0.9}, {"S2", 0.99}};
    auto report = rank_suspects(scores, records, 1.0);
    CHECK(report.entries.empty());
}

TEST_CASE("rank_suspects: descending score, address_id tie-break") {
    std::vector<records::AddressRecord> records = {rec("B", false), rec("A", false),
                                                   rec("C", false)};
    std::vector<ScoredAddress> scores = {{"B", 0.7}, {"A", 0.7}, {"C", 0.9}};
    auto report = rank_suspects(scores, records, 0.0);
    REQUIRE(report.entries.size() == 3);
    CHECK(report.entries[0].address_id == "C");
    CHECK(report.entries[1].address_id == "A");
    CHECK(report.entries[2].address_id == "B");
}

TEST_CASE("rank_suspects: monotone score transforms keep the ordering") {
    std::vector<records::AddressRecord> records;
    std::vector<ScoredAddress> raw;
    for (int i = 0; i < 12; ++i) {
        const std::string id = "S" + std::to_string(i);
        records.push_back(rec(id, false));
        raw.push_back({id, 0.05 + 0.07 * i});
    }
    auto base = rank_suspects(raw, records, 0.0);
    auto transformed = raw;
    for (auto& s : transformed) s.score = s.score * s.score * s.score; // increasing on [0,1]
    auto moved = rank_suspects(transformed, records, 0.0);
    REQUIRE(base.entries.size() == moved.entries.size());
    for (std::size_t i = 0; i < base.entries.size(); ++i) {
        CHECK(base.entries[i].address_id == moved.entries[i].address_id);
    }
}

TEST_CASE("rank_suspects: suspects are a subset of officially single records") {
    std::vector<records::AddressRecord> records;
    std::vector<ScoredAddress> scores;
    std::set<std::string> singles;
    for (int i = 0; i < 20; ++i) {
        const std::string id = "A" + std::to_string(i);
        const bool multi = i % 4 == 0;
        records.push_back(rec(id, multi));
        if (!multi) singles.insert(id);
        scores.push_back({id, 0.1 + 0.04 * i});
    }
    auto report = rank_suspects(scores, records, 0.3);
    for (const auto& e : report.entries) {
        CHECK(singles.count(e.address_id) == 1);
        CHECK(e.score >= 0.3);
        CHECK(e.official_label == records::OfficialLabel::SingleFamily);
    }
}

TEST_CASE("rank_suspects: unknown address ids are a join error") {
    std::vector<records::AddressRecord> records = {rec("S1", false)};
    std::vector<ScoredAddress> scores = {{"GHOST", 0.9}};
    CHECK_THROWS_AS(rank_suspects(scores, records, 0.5), JoinError);
}

TEST_CASE("export_geojson: feature collection shape and axis order") {
    SuspectReport report;
    report.threshold = 0.5;
    report.entries.push_back({"H1", 0.9, records::OfficialLabel::SingleFamily, 29.72, -95.36});
    report.entries.push_back({"H2", 0.8, records::OfficialLabel::SingleFamily, 29.73, -95.37});

    const std::string text = export_geojson(report);
    auto parsed = nlohmann::json::parse(text);
    CHECK(parsed.at("type") == "FeatureCollection");
    REQUIRE(parsed.at("features").size() == 2);
    const auto& f0 = parsed.at("features")[0];
    CHECK(f0.at("type") == "Feature");
    CHECK(f0.at("geometry").at("type") == "Point");
    // GeoJSON axis order is [lon, lat]
    CHECK(f0.at("geometry").at("coordinates")[0].get<double>() == doctest::Approx(-95.36));
    CHECK(f0.at("geometry").at("coordinates")[1].get<double>() == doctest::Approx(29.72));
    CHECK(f0.at("properties").at("rank") == 1);
    CHECK(parsed.at("features")[1].at("properties").at("rank") == 2);
    CHECK(f0.at("properties").at("official_label") == "SingleFamily");

    // byte determinism
    CHECK(export_geojson(report) == text);
}

TEST_CASE("export_geojson: empty report still parses") {
    SuspectReport report;
    auto parsed = nlohmann::json::parse(export_geojson(report));
    CHECK(parsed.at("type") == "FeatureCollection");
    CHECK(parsed.at("features").empty());
}

TEST_CASE("export_geojson: unusable coordinates name the address") {
    SuspectReport report;
    report.entries.push_back({"H1", 0.9, records::OfficialLabel::SingleFamily,
                              std::numeric_limits<double>::quiet_NaN(), -95.36});
    CHECK_THROWS_AS(export_geojson(report), ExportError);
}

TEST_CASE("suspect CSV format") {
    std::vector<SuspectEntry> entries = {
        {"H1", 0.875, records::OfficialLabel::SingleFamily, 29.72, -95.36}};
    const std::string csv = write_suspect_csv(entries);
    CHECK(csv.find("rank,address_id,score,lat,lon") == 0);
    CHECK(csv.find("1,H1,0.875000000,29.720000000,-95.360000000") != std::string::npos);
}
