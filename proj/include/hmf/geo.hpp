#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmf/errors.hpp"

namespace hmf::geo {

class WorldFileParseError : public DataError {
public:
    using DataError::DataError;
};
class DegenerateTransformError : public DataError {
public:
    using DataError::DataError;
};
class OutOfSceneError : public DataError {
public:
    using DataError::DataError;
};
class PartialCoverageError : public DataError {
public:
    using DataError::DataError;
};
class UnsupportedRasterError : public DataError {
public:
    using DataError::DataError;
};

// Affine pixel->ground mapping:
//   x = a*col + b*row + c
//   y = d*col + e*row + f
// For north-up axis-aligned imagery b = d = 0 and |a| = |e| = GSD.
struct GeoTransform {
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    double e = 1.0;
    double f = 0.0;

    double det() const { return a * e - b * d; }
};

struct ProjPoint {
    double x = 0.0;
    double y = 0.0;
};

struct PixelPos {
    double col = 0.0;
    double row = 0.0;
};

// 6 decimal lines in world-file order a, d, b, e, c, f.
GeoTransform parse_world_file(const std::string& text);
std::string write_world_file(const GeoTransform& gt);

ProjPoint pixel_to_projected(const GeoTransform& gt, double col, double row);
PixelPos projected_to_pixel(const GeoTransform& gt, double x, double y);

// Ground sample distance of an axis-aligned transform; |a| must equal |e|
// within 1e-9, otherwise UnsupportedRasterError.
double gsd_of(const GeoTransform& gt);

// 8-bit RGB raster with its ground mapping.
struct RasterScene {
    std::string scene_id;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // RGB interleaved, row-major
    GeoTransform transform;
    std::string crs;

    std::uint8_t sample(int col, int row, int band) const {
        return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + band];
    }
};

// Square ground-referenced image chip, values in [0,1] (= sample/255).
struct ImageTile {
    int side_px = 0;
    std::vector<double> pixels; // side_px*side_px*3, row-major RGB
    double side_m = 0.0;
    ProjPoint center;
    std::string scene_id;
    std::string address_id;
    bool padded = false;

    double at(int row, int col, int band) const {
        return pixels[(static_cast<std::size_t>(row) * side_px + col) * 3 + band];
    }
};

// Crops a square tile of round(side_m / gsd) pixels per side, centered at
// the pixel nearest to `center`. Up to 10% of the tile area may fall
// outside the scene and is zero-padded (tile.padded set); beyond that a
// PartialCoverageError is raised. A center outside the scene raises
// OutOfSceneError.
ImageTile crop_tile(const RasterScene& scene, ProjPoint center, double side_m);

// True when the projected point rounds to a pixel inside the scene.
bool scene_contains(const RasterScene& scene, ProjPoint p);

// Cheap feasibility probe for crop_tile (same window rules, no pixel copy).
bool crop_feasible(const RasterScene& scene, ProjPoint center, double side_m);

// P6 PPM (maxval 255) + sidecars <stem>.wld and <stem>.crs.
RasterScene load_scene(const std::filesystem::path& ppm_path);
void save_scene(const RasterScene& scene, const std::filesystem::path& dir);
std::vector<RasterScene> load_scene_dir(const std::filesystem::path& dir);

} // namespace hmf::geo
