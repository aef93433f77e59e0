#include "hmf/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

namespace hmf::discovery {

std::vector<ScoredAddress> sweep_region(const std::vector<records::AddressRecord>& region_records,
                                        const std::vector<geo::RasterScene>& scenes,
                                        const model::TrainedModel& model, double side_m,
                                        SweepStats* stats) {
    model::Scorer scorer(model);
    SweepStats local;
    std::vector<ScoredAddress> out;
    out.reserve(region_records.size());

    for (const auto& rec : region_records) {
        if (!rec.has_coords()) {
            ++local.skipped;
            continue;
        }
        bool scored = false;
        for (const auto& scene : scenes) {
            geo::ProjPoint p = records::project_wgs84(*rec.lat, *rec.lon, scene.crs);
            if (!geo::scene_contains(scene, p) || !geo::crop_feasible(scene, p, side_m)) continue;
            geo::ImageTile tile = geo::crop_tile(scene, p, side_m);
            out.push_back({rec.address_id, scorer.score(tile)});
            scored = true;
            break;
        }
        if (scored) ++local.scored;
        else ++local.skipped;
    }
    if (stats) *stats = local;
    if (out.empty()) {
        throw EmptyRegionError("sweep: no croppable addresses in the region");
    }
    return out;
}

SuspectReport rank_suspects(const std::vector<ScoredAddress>& scores,
                            const std::vector<records::AddressRecord>& records, double threshold,
                            const std::string& region, const std::string& model_id) {
    std::map<std::string, const records::AddressRecord*> by_id;
    for (const auto& r : records) by_id[r.address_id] = &r;

    SuspectReport report;
    report.region = region;
    report.threshold = threshold;
    report.model_id = model_id;

    for (const auto& s : scores) {
        auto it = by_id.find(s.address_id);
        if (it == by_id.end()) {
            throw JoinError("rank_suspects: score for unknown address " + s.address_id);
        }
        if (s.score < threshold) continue;
        const auto& rec = *it->second;
        SuspectEntry e;
        e.address_id = s.address_id;
        e.score = s.score;
        e.official_label = rec.official_label;
        e.lat = rec.lat.value_or(0.0);
        e.lon = rec.lon.value_or(0.0);
        if (rec.official_label == records::OfficialLabel::SingleFamily) {
            report.entries.push_back(std::move(e));
        } else {
            report.confirmations.push_back(std::move(e));
        }
    }

    auto by_rank = [](const SuspectEntry& a, const SuspectEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.address_id < b.address_id;
    };
    std::sort(report.entries.begin(), report.entries.end(), by_rank);
    std::sort(report.confirmations.begin(), report.confirmations.end(), by_rank);
    return report;
}

namespace {

double round9(double v) { return std::round(v * 1e9) / 1e9; }

} // namespace

std::string export_geojson(const SuspectReport& report) {
    nlohmann::json features = nlohmann::json::array();
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        const auto& e = report.entries[i];
        if (!std::isfinite(e.lat) || !std::isfinite(e.lon)) {
            throw ExportError("export_geojson: address " + e.address_id +
                              " has no usable coordinates");
        }
        nlohmann::json f;
        f["type"] = "Feature";
        f["geometry"]["type"] = "Point";
        f["geometry"]["coordinates"] = {round9(e.lon), round9(e.lat)};
        f["properties"]["address_id"] = e.address_id;
        f["properties"]["score"] = e.score;
        f["properties"]["rank"] = i + 1;
        f["properties"]["official_label"] = records::to_string(e.official_label);
        features.push_back(std::move(f));
    }
    nlohmann::json fc;
    fc["type"] = "FeatureCollection";
    fc["features"] = std::move(features);
    return fc.dump(2) + "\n";
}

std::string write_suspect_csv(const std::vector<SuspectEntry>& entries) {
    std::ostringstream out;
    out << "rank,address_id,score,lat,lon\n";
    char buf[160];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.9f,%.9f,%.9f\n", i + 1, e.address_id.c_str(),
                      e.score, e.lat, e.lon);
        out << buf;
    }
    return out.str();
}

} // namespace hmf::discovery
