#pragma once

#include <string>
#include <vector>

#include "hmf/errors.hpp"
#include "hmf/geo.hpp"
#include "hmf/model.hpp"
#include "hmf/records.hpp"

namespace hmf::discovery {

class EmptyRegionError : public DataError {
public:
    using DataError::DataError;
};
class JoinError : public DataError {
public:
    using DataError::DataError;
};
class ExportError : public DataError {
public:
    using DataError::DataError;
};

struct ScoredAddress {
    std::string address_id;
    double score = 0.0;
};

struct SweepStats {
    std::size_t scored = 0;
    std::size_t skipped = 0; // no coordinates or no croppable scene
};

// Scores every croppable address in the record set, officially single- and
// multi-family alike; filtering happens at report time.
std::vector<ScoredAddress> sweep_region(const std::vector<records::AddressRecord>& region_records,
                                        const std::vector<geo::RasterScene>& scenes,
                                        const model::TrainedModel& model, double side_m,
                                        SweepStats* stats = nullptr);

struct SuspectEntry {
    std::string address_id;
    double score = 0.0;
    records::OfficialLabel official_label = records::OfficialLabel::SingleFamily;
    double lat = 0.0;
    double lon = 0.0;
};

struct SuspectReport {
    std::string region; // zipcode, empty = whole record set
    std::vector<SuspectEntry> entries;       // officially single-family, score >= threshold
    std::vector<SuspectEntry> confirmations; // officially multi-family, score >= threshold
    double threshold = 0.5;
    std::string model_id;
};

// Entries sorted by descending score, ties by ascending address_id.
SuspectReport rank_suspects(const std::vector<ScoredAddress>& scores,
                            const std::vector<records::AddressRecord>& records, double threshold,
                            const std::string& region = "", const std::string& model_id = "");

// FeatureCollection of Point features, coordinates [lon, lat], 9-decimal
// precision, properties {address_id, score, rank, official_label}.
std::string export_geojson(const SuspectReport& report);

// CSV: rank,address_id,score,lat,lon
std::string write_suspect_csv(const std::vector<SuspectEntry>& entries);

} // namespace hmf::discovery
