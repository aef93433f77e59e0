#include "hmf/geo.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hmf::geo {

namespace {

double parse_decimal(const std::string& line, int line_no) {
    const char* begin = line.data();
    const char* end = begin + line.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || begin == end) {
        throw WorldFileParseError("world file: line " + std::to_string(line_no) +
                                  " is not a decimal number: '" + line + "'");
    }
    return value;
}

} // namespace

GeoTransform parse_world_file(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur)) lines.push_back(cur);
    // ignore trailing blank lines only
    while (!lines.empty()) {
        const std::string& back = lines.back();
        if (back.find_first_not_of(" \t\r") == std::string::npos) lines.pop_back();
        else break;
    }
    if (lines.size() != 6) {
        throw WorldFileParseError("world file: expected 6 lines, got " +
                                  std::to_string(lines.size()));
    }
    GeoTransform gt;
    gt.a = parse_decimal(lines[0], 1);
    gt.d = parse_decimal(lines[1], 2);
    gt.b = parse_decimal(lines[2], 3);
    gt.e = parse_decimal(lines[3], 4);
    gt.c = parse_decimal(lines[4], 5);
    gt.f = parse_decimal(lines[5], 6);
    if (gt.det() == 0.0) {
        throw DegenerateTransformError("world file: transform has zero determinant");
    }
    return gt;
}

std::string write_world_file(const GeoTransform& gt) {
    char buf[64];
    std::string out;
    const double vals[6] = {gt.a, gt.d, gt.b, gt.e, gt.c, gt.f};
    for (double v : vals) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out += buf;
        out += '\n';
    }
    return out;
}

ProjPoint pixel_to_projected(const GeoTransform& gt, double col, double row) {
    return {gt.a * col + gt.b * row + gt.c, gt.d * col + gt.e * row + gt.f};
}

PixelPos projected_to_pixel(const GeoTransform& gt, double x, double y) {
    const double det = gt.det();
    if (det == 0.0) throw DegenerateTransformError("projected_to_pixel: zero determinant");
    const double dx = x - gt.c;
    const double dy = y - gt.f;
    return {(dx * gt.e - dy * gt.b) / det, (gt.a * dy - gt.d * dx) / det};
}

double gsd_of(const GeoTransform& gt) {
    if (gt.b != 0.0 || gt.d != 0.0) {
        throw UnsupportedRasterError("gsd_of: rotated transforms are not supported");
    }
    const double ax = std::fabs(gt.a);
    const double ey = std::fabs(gt.e);
    if (std::fabs(ax - ey) > 1e-9) {
        std::ostringstream msg;
        msg << "gsd_of: anisotropic pixel scale |a|=" << ax << " |e|=" << ey;
        throw UnsupportedRasterError(msg.str());
    }
    return ax;
}

bool scene_contains(const RasterScene& scene, ProjPoint p) {
    PixelPos px = projected_to_pixel(scene.transform, p.x, p.y);
    const long long col = std::llround(px.col);
    const long long row = std::llround(px.row);
    return col >= 0 && col < scene.width && row >= 0 && row < scene.height;
}

namespace {

struct Window {
    int n = 0;        // tile side in pixels
    long long col0 = 0;
    long long row0 = 0;
    bool padded = false;
};

Window tile_window(const RasterScene& scene, ProjPoint center, double side_m) {
    if (side_m <= 0.0) throw DataError("crop_tile: side_m must be positive");
    const double gsd = gsd_of(scene.transform);
    const int n = static_cast<int>(std::llround(side_m / gsd));
    if (n < 1) throw DataError("crop_tile: tile smaller than one pixel");

    PixelPos px = projected_to_pixel(scene.transform, center.x, center.y);
    const long long cc = std::llround(px.col);
    const long long cr = std::llround(px.row);
    if (cc < 0 || cc >= scene.width || cr < 0 || cr >= scene.height) {
        std::ostringstream msg;
        msg << "crop_tile: center pixel (" << cc << "," << cr << ") outside scene '"
            << scene.scene_id << "' (" << scene.width << "x" << scene.height << ")";
        throw OutOfSceneError(msg.str());
    }

    Window w;
    w.n = n;
    w.col0 = cc - n / 2;
    w.row0 = cr - n / 2;

    const long long c_lo = std::max(w.col0, 0LL);
    const long long c_hi = std::min(w.col0 + n, static_cast<long long>(scene.width));
    const long long r_lo = std::max(w.row0, 0LL);
    const long long r_hi = std::min(w.row0 + n, static_cast<long long>(scene.height));
    const long long inside = std::max(0LL, c_hi - c_lo) * std::max(0LL, r_hi - r_lo);
    const long long total = static_cast<long long>(n) * n;
    const double outside_frac = static_cast<double>(total - inside) / static_cast<double>(total);
    if (outside_frac >= 0.10) {
        std::ostringstream msg;
        msg << "crop_tile: " << outside_frac * 100.0 << "% of the window falls outside scene '"
            << scene.scene_id << "'";
        throw PartialCoverageError(msg.str());
    }
    w.padded = inside != total;
    return w;
}

} // namespace

bool crop_feasible(const RasterScene& scene, ProjPoint center, double side_m) {
    try {
        tile_window(scene, center, side_m);
        return true;
    } catch (const DataError&) {
        return false;
    }
}

ImageTile crop_tile(const RasterScene& scene, ProjPoint center, double side_m) {
    const Window w = tile_window(scene, center, side_m);

    ImageTile tile;
    tile.side_px = w.n;
    tile.side_m = side_m;
    tile.center = center;
    tile.scene_id = scene.scene_id;
    tile.padded = w.padded;
    tile.pixels.assign(static_cast<std::size_t>(w.n) * w.n * 3, 0.0);

    for (int r = 0; r < w.n; ++r) {
        const long long src_row = w.row0 + r;
        if (src_row < 0 || src_row >= scene.height) continue;
        for (int c = 0; c < w.n; ++c) {
            const long long src_col = w.col0 + c;
            if (src_col < 0 || src_col >= scene.width) continue;
            const std::size_t src = (static_cast<std::size_t>(src_row) * scene.width + src_col) * 3;
            const std::size_t dst = (static_cast<std::size_t>(r) * w.n + c) * 3;
            tile.pixels[dst + 0] = scene.pixels[src + 0] / 255.0;
            tile.pixels[dst + 1] = scene.pixels[src + 1] / 255.0;
            tile.pixels[dst + 2] = scene.pixels[src + 2] / 255.0;
        }
    }
    return tile;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// next whitespace-delimited token, skipping '#' comments (PPM allows them)
std::string ppm_token(const std::string& data, std::size_t& pos) {
    while (pos < data.size()) {
        char c = data[pos];
        if (c == '#') {
            while (pos < data.size() && data[pos] != '\n') ++pos;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
}

} // namespace

RasterScene load_scene(const std::filesystem::path& ppm_path) {
    const std::string data = read_file(ppm_path);
    std::size_t pos = 0;
    if (ppm_token(data, pos) != "P6") {
        throw DataError("scene " + ppm_path.string() + ": not a binary P6 PPM");
    }
    RasterScene scene;
    try {
        scene.width = std::stoi(ppm_token(data, pos));
        scene.height = std::stoi(ppm_token(data, pos));
        const int maxval = std::stoi(ppm_token(data, pos));
        if (maxval != 255) throw DataError("scene " + ppm_path.string() + ": maxval must be 255");
    } catch (const std::invalid_argument&) {
        throw DataError("scene " + ppm_path.string() + ": malformed PPM header");
    }
    if (scene.width < 1 || scene.height < 1) {
        throw DataError("scene " + ppm_path.string() + ": bad dimensions");
    }
    ++pos; // single whitespace byte after maxval
    const std::size_t need = static_cast<std::size_t>(scene.width) * scene.height * 3;
    if (data.size() - pos < need) {
        throw DataError("scene " + ppm_path.string() + ": truncated pixel data");
    }
    scene.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                        data.begin() + static_cast<std::ptrdiff_t>(pos + need));

    scene.scene_id = ppm_path.stem().string();
    std::filesystem::path wld = ppm_path;
    wld.replace_extension(".wld");
    scene.transform = parse_world_file(read_file(wld));
    std::filesystem::path crs = ppm_path;
    crs.replace_extension(".crs");
    std::string crs_text = read_file(crs);
    while (!crs_text.empty() && (crs_text.back() == '\n' || crs_text.back() == '\r')) crs_text.pop_back();
    scene.crs = crs_text;
    return scene;
}

void save_scene(const RasterScene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path ppm = dir / (scene.scene_id + ".ppm");
    {
        std::ofstream out(ppm, std::ios::binary);
        if (!out) throw DataError("cannot write " + ppm.string());
        out << "P6\n" << scene.width << " " << scene.height << "\n255\n";
        out.write(reinterpret_cast<const char*>(scene.pixels.data()),
                  static_cast<std::streamsize>(scene.pixels.size()));
    }
    {
        std::ofstream out(dir / (scene.scene_id + ".wld"), std::ios::binary);
        out << write_world_file(scene.transform);
    }
    {
        std::ofstream out(dir / (scene.scene_id + ".crs"), std::ios::binary);
        out << scene.crs << "\n";
    }
}

std::vector<RasterScene> load_scene_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("scene directory does not exist: " + dir.string());
    }
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".ppm") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    std::vector<RasterScene> scenes;
    scenes.reserve(paths.size());
    for (const auto& p : paths) scenes.push_back(load_scene(p));
    return scenes;
}

} // namespace hmf::geo
