#include "hmf/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hmf/csv.hpp"
#include "hmf/rng.hpp"

namespace hmf::dataset {

namespace {

// ground sizes of the drawn features, in meters
constexpr double kHouseMinM = 10.0;
constexpr double kHouseMaxM = 13.0;
constexpr double kGapM = 2.0;
constexpr double kFenceM = 1.0;

struct Painter {
    geo::RasterScene* scene;

    void blend(long long col, long long row, std::uint8_t r, std::uint8_t g, std::uint8_t b,
               double alpha) {
        if (col < 0 || row < 0 || col >= scene->width || row >= scene->height) return;
        std::size_t i = (static_cast<std::size_t>(row) * scene->width + col) * 3;
        auto mix = [alpha](std::uint8_t base, std::uint8_t over) {
            double v = (1.0 - alpha) * base + alpha * over;
            return static_cast<std::uint8_t>(std::llround(std::clamp(v, 0.0, 255.0)));
        };
        scene->pixels[i + 0] = mix(scene->pixels[i + 0], r);
        scene->pixels[i + 1] = mix(scene->pixels[i + 1], g);
        scene->pixels[i + 2] = mix(scene->pixels[i + 2], b);
    }

    void rect(long long c0, long long r0, long long w, long long h, std::uint8_t r,
              std::uint8_t g, std::uint8_t b, double alpha) {
        for (long long rr = r0; rr < r0 + h; ++rr)
            for (long long cc = c0; cc < c0 + w; ++cc) blend(cc, rr, r, g, b, alpha);
    }
};

int px(double meters, double gsd) {
    return std::max(1, static_cast<int>(std::llround(meters / gsd)));
}

struct CellDraw {
    // house footprint in scene pixels, centered on the address point
    long long house_c0, house_r0;
    int house_w, house_h;
};

// Base house + distractors; identical draw order for both classes.
CellDraw draw_base(Painter& p, Rng& rng, long long center_col, long long center_row,
                   double gsd, int cell_px, long long cell_c0, long long cell_r0) {
    // distractors first so the house stays on top
    const int n_distract = static_cast<int>(rng.range(1, 2));
    for (int i = 0; i < n_distract; ++i) {
        const int dw = static_cast<int>(rng.range(3, 6));
        const int dh = static_cast<int>(rng.range(3, 6));
        const long long dc = cell_c0 + rng.range(0, cell_px - dw - 1);
        const long long dr = cell_r0 + rng.range(0, cell_px - dh - 1);
        const auto shade = static_cast<std::uint8_t>(rng.range(100, 180));
        p.rect(dc, dr, dw, dh, shade, shade, shade, 1.0);
    }

    CellDraw d;
    d.house_w = px(rng.uniform(kHouseMinM, kHouseMaxM), gsd);
    d.house_h = px(rng.uniform(kHouseMinM * 0.7, kHouseMaxM * 0.8), gsd);
    d.house_c0 = center_col - d.house_w / 2;
    d.house_r0 = center_row - d.house_h / 2;

    // roof: gray or reddish shade, with a lighter ridge line
    const bool reddish = rng.unit() < 0.5;
    const auto base = static_cast<std::uint8_t>(rng.range(95, 150));
    std::uint8_t r = base, g = base, b = base;
    if (reddish) {
        r = static_cast<std::uint8_t>(std::min(255, base + 45));
        g = static_cast<std::uint8_t>(base * 2 / 3);
        b = static_cast<std::uint8_t>(base * 3 / 5);
    }
    p.rect(d.house_c0, d.house_r0, d.house_w, d.house_h, r, g, b, 1.0);
    const auto ridge = static_cast<std::uint8_t>(std::min(255, base + 60));
    p.rect(d.house_c0, center_row, d.house_w, 1, ridge, ridge, ridge, 1.0);
    return d;
}

// Second roof block plus dividing fence, blended with the pattern strength.
void draw_multi_extras(Painter& p, Rng& rng, const CellDraw& d, double gsd, double strength) {
    const int gap = px(kGapM, gsd);
    const int fence_w = px(kFenceM, gsd);
    const bool to_right = rng.unit() < 0.5;

    const auto base = static_cast<std::uint8_t>(rng.range(95, 150));
    const auto fence_shade = static_cast<std::uint8_t>(rng.range(195, 230));

    if (to_right) {
        const long long c1 = d.house_c0 + d.house_w + gap;
        p.rect(c1, d.house_r0, d.house_w, d.house_h, base, base, base, strength);
        const long long fc = d.house_c0 + d.house_w + (gap - fence_w) / 2;
        const long long fr = d.house_r0 - d.house_h;
        p.rect(fc, fr, fence_w, 3LL * d.house_h, fence_shade, fence_shade, fence_shade,
               strength);
    } else {
        const long long r1 = d.house_r0 + d.house_h + gap;
        p.rect(d.house_c0, r1, d.house_w, d.house_h, base, base, base, strength);
        const long long fr = d.house_r0 + d.house_h + (gap - fence_w) / 2;
        const long long fc = d.house_c0 - d.house_w;
        p.rect(fc, fr, 3LL * d.house_w, fence_w, fence_shade, fence_shade, fence_shade,
               strength);
    }
}

} // namespace

Fixture synthesize_fixture(const FixtureSpec& spec, std::uint64_t seed) {
    if (spec.gsd <= 0.0) throw ConfigError("fixture: gsd must be positive");
    if (spec.tile_side_m <= 0.0) throw ConfigError("fixture: tile_side_m must be positive");
    if (spec.pattern_strength < 0.0 || spec.pattern_strength > 1.0) {
        throw ConfigError("fixture: pattern_strength must be in [0,1]");
    }
    if (spec.hidden_fraction < 0.0 || spec.hidden_fraction > 1.0) {
        throw ConfigError("fixture: hidden_fraction must be in [0,1]");
    }
    if (spec.n_single + spec.n_multi == 0) throw ConfigError("fixture: no addresses requested");
    if (spec.cells_per_scene_side < 1) throw ConfigError("fixture: cells_per_scene_side < 1");

    const int tile_px = static_cast<int>(std::llround(spec.tile_side_m / spec.gsd));
    if (tile_px < 8) throw ConfigError("fixture: tile under 8 px, lower the gsd");
    // worst-case multi pattern footprint from the address point outward
    const int worst_house = px(kHouseMaxM, spec.gsd);
    const int worst_span = worst_house / 2 + px(kGapM, spec.gsd) + worst_house;
    if (worst_span > tile_px / 2) {
        throw ConfigError("fixture: planted pattern larger than tile; increase tile_side_m");
    }

    const int pad = std::max(2, tile_px / 5);
    const int cell_px = tile_px + 2 * pad;
    const int side_cells = spec.cells_per_scene_side;
    const int scene_px = cell_px * side_cells;
    const std::size_t per_scene = static_cast<std::size_t>(side_cells) * side_cells;
    const std::size_t total = spec.n_single + spec.n_multi;
    const std::size_t n_scenes = (total + per_scene - 1) / per_scene;

    // true labels scattered over cells
    std::vector<int> true_labels(total, 0);
    std::fill(true_labels.begin(), true_labels.begin() + static_cast<std::ptrdiff_t>(spec.n_multi),
              1);
    {
        Rng rng(derive_seed(seed, 0x4c41424c)); // label placement stream
        rng.shuffle(true_labels);
    }

    // which multis are recorded as single-family
    std::vector<std::size_t> multi_idx;
    for (std::size_t i = 0; i < total; ++i)
        if (true_labels[i] == 1) multi_idx.push_back(i);
    std::vector<bool> hidden(total, false);
    {
        Rng rng(derive_seed(seed, 0x48494444)); // hidden selection stream
        rng.shuffle(multi_idx);
        const auto n_hidden = static_cast<std::size_t>(
            std::llround(spec.hidden_fraction * static_cast<double>(spec.n_multi)));
        for (std::size_t i = 0; i < n_hidden && i < multi_idx.size(); ++i)
            hidden[multi_idx[i]] = true;
    }

    const double scene_w_m = scene_px * spec.gsd;
    const double scene_gap_m = 100.0;

    Fixture fx;
    fx.scenes.reserve(n_scenes);
    fx.records.reserve(total);

    auto zipcode_of_scene = [&](std::size_t s) -> const std::string& {
        const std::size_t all = 1 + spec.cool_zipcodes.size();
        const std::size_t pick = s % all;
        return pick == 0 ? spec.hot_zipcode : spec.cool_zipcodes[pick - 1];
    };

    char idbuf[32];
    for (std::size_t s = 0; s < n_scenes; ++s) {
        geo::RasterScene scene;
        std::snprintf(idbuf, sizeof(idbuf), "scene%03zu", s);
        scene.scene_id = idbuf;
        scene.width = scene_px;
        scene.height = scene_px;
        scene.crs = spec.crs;
        scene.transform.a = spec.gsd;
        scene.transform.e = -spec.gsd;
        scene.transform.c = static_cast<double>(s) * (scene_w_m + scene_gap_m);
        scene.transform.f = scene_px * spec.gsd;

        // background: grass green with per-pixel speckle
        Rng bg_rng(derive_seed(seed, 0xb0000000ULL + s));
        scene.pixels.resize(static_cast<std::size_t>(scene_px) * scene_px * 3);
        for (std::size_t i = 0; i < scene.pixels.size(); i += 3) {
            const auto jitter = static_cast<int>(bg_rng.range(-10, 10));
            scene.pixels[i + 0] = static_cast<std::uint8_t>(std::clamp(88 + jitter, 0, 255));
            scene.pixels[i + 1] = static_cast<std::uint8_t>(std::clamp(112 + jitter, 0, 255));
            scene.pixels[i + 2] = static_cast<std::uint8_t>(std::clamp(70 + jitter, 0, 255));
        }

        Painter painter{&scene};
        const std::string& zip = zipcode_of_scene(s);
        const std::string tract_id = "T" + std::string(idbuf + 5);

        for (std::size_t k = 0; k < per_scene; ++k) {
            const std::size_t idx = s * per_scene + k;
            if (idx >= total) break;
            const long long cell_c0 = static_cast<long long>(k % side_cells) * cell_px;
            const long long cell_r0 = static_cast<long long>(k / side_cells) * cell_px;

            Rng cell_rng(derive_seed(seed, 0xc0000000ULL + idx * 4));
            const long long jc = cell_rng.range(-pad / 2, pad / 2);
            const long long jr = cell_rng.range(-pad / 2, pad / 2);
            const long long center_col = cell_c0 + cell_px / 2 + jc;
            const long long center_row = cell_r0 + cell_px / 2 + jr;

            CellDraw d = draw_base(painter, cell_rng, center_col, center_row, spec.gsd,
                                   cell_px, cell_c0, cell_r0);
            if (true_labels[idx] == 1) {
                Rng extra_rng(derive_seed(seed, 0xc0000000ULL + idx * 4 + 1));
                draw_multi_extras(painter, extra_rng, d, spec.gsd, spec.pattern_strength);
            }

            {
                records::AddressRecord rec;
                std::snprintf(idbuf, sizeof(idbuf), "A%05zu", idx);
                rec.address_id = idbuf;
                rec.street_text = std::to_string(100 + idx) + " Pattern Ave";
                const bool official_multi = true_labels[idx] == 1 && !hidden[idx];
                rec.category_code = official_multi ? "B1" : "A1";
                rec.official_label = official_multi ? records::OfficialLabel::MultiFamily
                                                    : records::OfficialLabel::SingleFamily;
                geo::ProjPoint center = geo::pixel_to_projected(
                    scene.transform, static_cast<double>(center_col),
                    static_cast<double>(center_row));
                double lat = 0.0, lon = 0.0;
                records::unproject_wgs84(center, scene.crs, lat, lon);
                rec.lat = lat;
                rec.lon = lon;
                rec.tract_id = tract_id;
                rec.zipcode = zip;
                fx.records.push_back(std::move(rec));

                if (hidden[idx]) {
                    OracleRow row;
                    row.address_id = fx.records.back().address_id;
                    row.true_label = 1;
                    row.official_label = records::OfficialLabel::SingleFamily;
                    fx.oracle.push_back(row);
                }
            }
        }

        TractRow tract;
        tract.tract_id = tract_id;
        tract.zipcode = zip;
        if (zip == spec.hot_zipcode) {
            tract.bad_maf_score = 0.90;  // High
            tract.low_response_score = 0.30; // Low
        } else if (!spec.cool_zipcodes.empty() && zip == spec.cool_zipcodes[0]) {
            tract.bad_maf_score = 0.50;  // Medium
            tract.low_response_score = 0.30;
        } else {
            tract.bad_maf_score = 0.20;  // Low
            tract.low_response_score = 0.70;
        }
        fx.tracts.push_back(tract);

        fx.scenes.push_back(std::move(scene));
    }
    return fx;
}

std::string write_oracle_csv(const std::vector<OracleRow>& rows) {
    std::ostringstream out;
    out << "address_id,true_label,official_label\n";
    for (const auto& r : rows) {
        out << r.address_id << "," << r.true_label << "," << records::to_string(r.official_label)
            << "\n";
    }
    return out.str();
}

std::vector<OracleRow> parse_oracle_csv(const std::string& text) {
    std::istringstream in(text);
    auto rows = csv::read(in);
    if (rows.empty() || rows[0] != std::vector<std::string>{"address_id", "true_label",
                                                            "official_label"}) {
        throw DataError("oracle csv: bad header");
    }
    std::vector<OracleRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 3) throw DataError("oracle csv: bad row " + std::to_string(i + 1));
        OracleRow r;
        r.address_id = rows[i][0];
        r.true_label = std::stoi(rows[i][1]);
        r.official_label = rows[i][2] == "MultiFamily" ? records::OfficialLabel::MultiFamily
                                                       : records::OfficialLabel::SingleFamily;
        out.push_back(std::move(r));
    }
    return out;
}

std::string write_tract_csv(const std::vector<TractRow>& rows) {
    std::ostringstream out;
    out << "tract_id,zipcode,bad_maf_score,low_response_score\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f\n", r.tract_id.c_str(),
                      r.zipcode.c_str(), r.bad_maf_score, r.low_response_score);
        out << buf;
    }
    return out.str();
}

} // namespace hmf::dataset
