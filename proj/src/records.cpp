#include "hmf/records.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "hmf/csv.hpp"

namespace hmf::records {

OfficialLabel label_from_category(const std::string& code,
                                  const std::set<std::string>& multi_codes) {
    return multi_codes.count(code) ? OfficialLabel::MultiFamily : OfficialLabel::SingleFamily;
}

namespace {

double parse_coord(const std::string& s, const char* what, double lo, double hi, int line_no) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        std::ostringstream msg;
        msg << "records row " << line_no << ": unparseable " << what << " '" << s << "'";
        throw IngestError(msg.str());
    }
    if (v < lo || v > hi) {
        std::ostringstream msg;
        msg << "records row " << line_no << ": " << what << " " << v << " outside [" << lo
            << "," << hi << "]";
        throw IngestError(msg.str());
    }
    return v;
}

const char* kHeader = "address_id,street_text,category_code,lat,lon,tract_id,zipcode";

} // namespace

std::vector<AddressRecord> parse_address_csv(const std::string& text,
                                             const std::set<std::string>& multi_codes) {
    std::istringstream in(text);
    auto rows = csv::read(in);
    if (rows.empty()) throw IngestError("records: missing header row");

    std::vector<std::string> expected = {"address_id", "street_text", "category_code",
                                         "lat",        "lon",         "tract_id",
                                         "zipcode"};
    if (rows[0] != expected) {
        throw IngestError(std::string("records: header must be '") + kHeader + "'");
    }

    std::vector<AddressRecord> out;
    std::set<std::string> seen;
    std::vector<std::string> dups;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const int line_no = static_cast<int>(i) + 1;
        if (r.size() != 7) {
            std::ostringstream msg;
            msg << "records row " << line_no << ": expected 7 fields, got " << r.size();
            throw IngestError(msg.str());
        }
        AddressRecord rec;
        rec.address_id = r[0];
        rec.street_text = r[1];
        rec.category_code = r[2];
        rec.official_label = label_from_category(rec.category_code, multi_codes);
        const bool has_lat = !r[3].empty();
        const bool has_lon = !r[4].empty();
        if (has_lat != has_lon) {
            std::ostringstream msg;
            msg << "records row " << line_no << ": lat/lon must both be present or both blank";
            throw IngestError(msg.str());
        }
        if (has_lat) {
            rec.lat = parse_coord(r[3], "lat", -90.0, 90.0, line_no);
            rec.lon = parse_coord(r[4], "lon", -180.0, 180.0, line_no);
        }
        rec.tract_id = r[5];
        rec.zipcode = r[6];
        if (!seen.insert(rec.address_id).second) dups.push_back(rec.address_id);
        out.push_back(std::move(rec));
    }
    if (!dups.empty()) {
        std::ostringstream msg;
        msg << "records: duplicate address_id:";
        for (const auto& d : dups) msg << " " << d;
        throw IngestError(msg.str());
    }
    return out;
}

std::string write_address_csv(const std::vector<AddressRecord>& records) {
    std::ostringstream out;
    out << kHeader << "\n";
    char buf[64];
    for (const auto& r : records) {
        out << csv::escape(r.address_id) << "," << csv::escape(r.street_text) << ","
            << csv::escape(r.category_code) << ",";
        if (r.has_coords()) {
            std::snprintf(buf, sizeof(buf), "%.17g", *r.lat);
            out << buf << ",";
            std::snprintf(buf, sizeof(buf), "%.17g", *r.lon);
            out << buf;
        } else {
            out << ",";
        }
        out << "," << csv::escape(r.tract_id) << "," << csv::escape(r.zipcode) << "\n";
    }
    return out.str();
}

void StubGeocodeClient::add(const std::string& street_text, double lat, double lon,
                            double confidence) {
    GeocodeResult r;
    r.lat = lat;
    r.lon = lon;
    r.confidence = confidence;
    r.source = GeocodeResult::Source::Stub;
    table_[GeocodeCache::normalize(street_text)] = r;
}

std::optional<GeocodeResult> StubGeocodeClient::lookup(const std::string& street_text) {
    ++calls_;
    auto it = table_.find(GeocodeCache::normalize(street_text));
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

std::string GeocodeCache::normalize(const std::string& street_text) {
    std::string out;
    bool pending_space = false;
    for (char c : street_text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return out;
}

GeocodeCache::GeocodeCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key, lat, lon, conf;
        if (!std::getline(ls, key, '\t') || !std::getline(ls, lat, '\t') ||
            !std::getline(ls, lon, '\t') || !std::getline(ls, conf)) {
            throw IngestError("geocode cache " + path_ + ": malformed line " +
                              std::to_string(line_no));
        }
        GeocodeResult r;
        r.lat = std::stod(lat);
        r.lon = std::stod(lon);
        r.confidence = std::stod(conf);
        r.source = GeocodeResult::Source::Cache;
        entries_[key] = r;
    }
}

std::optional<GeocodeResult> GeocodeCache::get(const std::string& street_text) const {
    auto it = entries_.find(normalize(street_text));
    if (it == entries_.end()) return std::nullopt;
    GeocodeResult r = it->second;
    r.source = GeocodeResult::Source::Cache;
    return r;
}

void GeocodeCache::put(const std::string& street_text, const GeocodeResult& r) {
    const std::string key = normalize(street_text);
    if (entries_.count(key)) return;
    entries_[key] = r;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw DataError("cannot append to geocode cache: " + path_);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s\t%.17g\t%.17g\t%.17g\n", key.c_str(), r.lat, r.lon,
                  r.confidence);
    out << buf;
}

GeocodeResult geocode(const AddressRecord& record, GeocodeClient& client, GeocodeCache& cache,
                      const GeocodeOptions& opts) {
    if (record.street_text.empty()) {
        throw IngestError("geocode: empty street_text for address " + record.address_id);
    }
    if (auto hit = cache.get(record.street_text)) return *hit;

    int backoff = opts.backoff_ms;
    for (int attempt = 0; attempt < opts.attempts; ++attempt) {
        if (attempt > 0 && backoff > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        std::optional<GeocodeResult> result;
        try {
            result = client.lookup(record.street_text);
        } catch (const std::exception&) {
            continue; // transient client failure, retry
        }
        if (!result) break; // definitive no-result, retrying will not help
        if (result->confidence < opts.confidence_floor) {
            std::ostringstream msg;
            msg << "geocode: confidence " << result->confidence << " below floor "
                << opts.confidence_floor << " for address " << record.address_id;
            throw LowConfidenceError(msg.str());
        }
        cache.put(record.street_text, *result);
        return *result;
    }
    throw GeocodeUnavailableError("geocode: no result for address " + record.address_id);
}

namespace {

// "key=value,key=value" suffix parser for CRS declarations
std::map<std::string, double> parse_crs_params(const std::string& s, const std::string& crs) {
    std::map<std::string, double> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw UnsupportedCrsError("malformed CRS declaration: " + crs);
        }
        try {
            out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw UnsupportedCrsError("malformed CRS parameter in: " + crs);
        }
    }
    return out;
}

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

} // namespace

geo::ProjPoint project_wgs84(double lat, double lon, const std::string& crs) {
    if (crs == "IDENT") {
        return {lon * kMetersPerDegree, lat * kMetersPerDegree};
    }
    if (crs.rfind("IDENT:", 0) == 0) {
        auto params = parse_crs_params(crs.substr(6), crs);
        if (!params.count("k")) throw UnsupportedCrsError("IDENT CRS needs k: " + crs);
        return {lon * params["k"], lat * params["k"]};
    }
    if (crs.rfind("LOCAL-TM:", 0) == 0) {
        auto params = parse_crs_params(crs.substr(9), crs);
        if (!params.count("lat0") || !params.count("lon0") || !params.count("k")) {
            throw UnsupportedCrsError("LOCAL-TM CRS needs lat0, lon0, k: " + crs);
        }
        const double k = params["k"];
        const double coslat = std::cos(params["lat0"] * kDegToRad);
        return {(lon - params["lon0"]) * k * coslat, (lat - params["lat0"]) * k};
    }
    throw UnsupportedCrsError("unsupported CRS: " + crs);
}

void unproject_wgs84(const geo::ProjPoint& p, const std::string& crs, double& lat, double& lon) {
    if (crs == "IDENT") {
        lon = p.x / kMetersPerDegree;
        lat = p.y / kMetersPerDegree;
        return;
    }
    if (crs.rfind("IDENT:", 0) == 0) {
        auto params = parse_crs_params(crs.substr(6), crs);
        if (!params.count("k")) throw UnsupportedCrsError("IDENT CRS needs k: " + crs);
        lon = p.x / params["k"];
        lat = p.y / params["k"];
        return;
    }
    if (crs.rfind("LOCAL-TM:", 0) == 0) {
        auto params = parse_crs_params(crs.substr(9), crs);
        if (!params.count("lat0") || !params.count("lon0") || !params.count("k")) {
            throw UnsupportedCrsError("LOCAL-TM CRS needs lat0, lon0, k: " + crs);
        }
        const double k = params["k"];
        const double coslat = std::cos(params["lat0"] * kDegToRad);
        lon = params["lon0"] + p.x / (k * coslat);
        lat = params["lat0"] + p.y / k;
        return;
    }
    throw UnsupportedCrsError("unsupported CRS: " + crs);
}

} // namespace hmf::records
