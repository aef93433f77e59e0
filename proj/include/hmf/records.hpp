#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hmf/errors.hpp"
#include "hmf/geo.hpp"

namespace hmf::records {

class IngestError : public DataError {
public:
    using DataError::DataError;
};
class GeocodeUnavailableError : public DataError {
public:
    using DataError::DataError;
};
class LowConfidenceError : public DataError {
public:
    using DataError::DataError;
};
class UnsupportedCrsError : public DataError {
public:
    using DataError::DataError;
};

enum class OfficialLabel { SingleFamily, MultiFamily };

inline const char* to_string(OfficialLabel l) {
    return l == OfficialLabel::MultiFamily ? "MultiFamily" : "SingleFamily";
}

struct AddressRecord {
    std::string address_id;
    std::string street_text;
    std::string category_code;
    OfficialLabel official_label = OfficialLabel::SingleFamily;
    std::optional<double> lat; // WGS84 degrees
    std::optional<double> lon;
    std::string tract_id;
    std::string zipcode;

    bool has_coords() const { return lat.has_value() && lon.has_value(); }
};

// MultiFamily iff code is in multi_codes. The code set is configuration:
// only "B1" (residential, multi-family) is known from the source taxonomy.
OfficialLabel label_from_category(const std::string& code,
                                  const std::set<std::string>& multi_codes);

inline std::set<std::string> default_multi_codes() { return {"B1"}; }

// CSV schema: address_id,street_text,category_code,lat,lon,tract_id,zipcode
std::vector<AddressRecord> parse_address_csv(const std::string& text,
                                             const std::set<std::string>& multi_codes =
                                                 default_multi_codes());
std::string write_address_csv(const std::vector<AddressRecord>& records);

struct GeocodeResult {
    double lat = 0.0;
    double lon = 0.0;
    double confidence = 1.0;
    enum class Source { Cache, Client, Stub } source = Source::Client;
};

class GeocodeClient {
public:
    virtual ~GeocodeClient() = default;
    // nullopt = no result for this address; throwing = transient failure
    virtual std::optional<GeocodeResult> lookup(const std::string& street_text) = 0;
};

// Deterministic client answering from a fixed table; entries keyed by
// normalized street text.
class StubGeocodeClient : public GeocodeClient {
public:
    void add(const std::string& street_text, double lat, double lon, double confidence = 1.0);
    std::optional<GeocodeResult> lookup(const std::string& street_text) override;
    int calls() const { return calls_; }

private:
    std::map<std::string, GeocodeResult> table_;
    int calls_ = 0;
};

// Line-oriented persistent cache:
//   normalized_address<TAB>lat<TAB>lon<TAB>confidence
class GeocodeCache {
public:
    GeocodeCache() = default;
    explicit GeocodeCache(std::string path); // loads if the file exists

    static std::string normalize(const std::string& street_text);

    std::optional<GeocodeResult> get(const std::string& street_text) const;
    void put(const std::string& street_text, const GeocodeResult& r); // appends to file
    std::size_t size() const { return entries_.size(); }

private:
    std::string path_; // empty = in-memory only
    std::map<std::string, GeocodeResult> entries_;
};

struct GeocodeOptions {
    int attempts = 3;
    int backoff_ms = 50; // doubles per retry
    double confidence_floor = 0.5;
};

GeocodeResult geocode(const AddressRecord& record, GeocodeClient& client,
                      GeocodeCache& cache, const GeocodeOptions& opts = {});

// Supported CRS declarations:
//   "IDENT"                              x = lon*k, y = lat*k with k = 111320
//   "IDENT:k=<m-per-deg>"                same with explicit k
//   "LOCAL-TM:lat0=<d>,lon0=<d>,k=<m>"   local plate-carree style anchor:
//                                        x = (lon-lon0)*k*cos(lat0), y = (lat-lat0)*k
geo::ProjPoint project_wgs84(double lat, double lon, const std::string& crs);

// Inverse of project_wgs84 (used when synthesizing records from scenes).
void unproject_wgs84(const geo::ProjPoint& p, const std::string& crs, double& lat, double& lon);

inline constexpr double kMetersPerDegree = 111320.0;

} // namespace hmf::records
