#include "hmf/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "hmf/csv.hpp"
#include "hmf/discovery.hpp"
#include "hmf/eval.hpp"
#include "hmf/fixture.hpp"

namespace hmf::pipeline {

namespace fs = std::filesystem;

namespace {

// One command at a time per output directory.
class OutDirLock {
public:
    explicit OutDirLock(const fs::path& out_dir) : path_(out_dir / ".lock") {
        fs::create_directories(out_dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw ConfigError("output directory is locked by another command: " +
                              path_.string());
        }
    }
    ~OutDirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string(what) + " is not configured");
    if (!fs::exists(path)) {
        throw ConfigError(std::string(what) + " does not exist: " + path);
    }
}

std::string hash_hex(std::string_view data) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config::fnv1a64(data)));
    return buf;
}

// Run provenance: hash of the effective config plus hashes of every input
// consumed, so stale artifact mixes are detectable.
void write_run_manifest(const config::RunConfig& cfg, const std::string& command,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs) {
    nlohmann::json m;
    m["command"] = command;
    m["config_hash"] = config::config_hash(cfg);
    m["seed"] = cfg.seed;
    nlohmann::json in = nlohmann::json::object();
    for (const auto& p : inputs) in[p] = hash_hex(read_file(p));
    m["inputs"] = std::move(in);
    m["outputs"] = outputs;
    write_file(fs::path(cfg.out_dir) / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

fs::path sibling(const std::string& anchor, const char* name) {
    return fs::path(anchor).parent_path() / name;
}

std::string oracle_path(const config::RunConfig& cfg) {
    return cfg.oracle_csv.empty() ? sibling(cfg.records_csv, "oracle.csv").string()
                                  : cfg.oracle_csv;
}

std::string tracts_path(const config::RunConfig& cfg) {
    return cfg.tracts_csv.empty() ? sibling(cfg.records_csv, "tracts.csv").string()
                                  : cfg.tracts_csv;
}

std::string manifest_path(const config::RunConfig& cfg) {
    return (fs::path(cfg.out_dir) / "dataset_manifest.csv").string();
}

} // namespace

void cmd_fixture(const config::RunConfig& cfg) {
    if (cfg.scenes_dir.empty()) throw ConfigError("paths.scenes_dir is not configured");
    if (cfg.records_csv.empty()) throw ConfigError("paths.records_csv is not configured");
    OutDirLock lock(cfg.out_dir);

    dataset::Fixture fx = dataset::synthesize_fixture(cfg.fixture, cfg.seed);

    fs::create_directories(cfg.scenes_dir);
    for (const auto& scene : fx.scenes) geo::save_scene(scene, cfg.scenes_dir);

    write_file(cfg.records_csv, records::write_address_csv(fx.records));
    write_file(oracle_path(cfg), dataset::write_oracle_csv(fx.oracle));
    write_file(tracts_path(cfg), dataset::write_tract_csv(fx.tracts));

    std::vector<std::string> outputs = {cfg.records_csv, oracle_path(cfg), tracts_path(cfg)};
    for (const auto& scene : fx.scenes) {
        outputs.push_back((fs::path(cfg.scenes_dir) / (scene.scene_id + ".ppm")).string());
    }
    std::sort(outputs.begin(), outputs.end());
    write_run_manifest(cfg, "fixture", {}, outputs);
}

namespace {

std::vector<records::AddressRecord> load_records(const config::RunConfig& cfg) {
    require_file(cfg.records_csv, "records CSV");
    return records::parse_address_csv(read_file(cfg.records_csv));
}

// Fill in missing coordinates through the cache + stub client.
void geocode_missing(const config::RunConfig& cfg, std::vector<records::AddressRecord>& recs) {
    bool any_missing = false;
    for (const auto& r : recs) {
        if (!r.has_coords()) {
            any_missing = true;
            break;
        }
    }
    if (!any_missing) return;

    records::GeocodeCache cache(cfg.cache_file);
    records::StubGeocodeClient client;
    if (!cfg.stub_geocode_file.empty()) {
        require_file(cfg.stub_geocode_file, "stub geocode file");
        std::istringstream in(read_file(cfg.stub_geocode_file));
        auto rows = csv::read(in);
        for (const auto& row : rows) {
            if (row.size() != 3) throw DataError("stub geocode file: rows are street,lat,lon");
            client.add(row[0], std::stod(row[1]), std::stod(row[2]));
        }
    }
    records::GeocodeOptions opts;
    opts.backoff_ms = 0; // stub clients do not need backoff
    for (auto& r : recs) {
        if (r.has_coords()) continue;
        auto res = records::geocode(r, client, cache, opts);
        r.lat = res.lat;
        r.lon = res.lon;
    }
}

} // namespace

void cmd_ingest(const config::RunConfig& cfg) {
    require_file(cfg.records_csv, "records CSV");
    require_file(cfg.scenes_dir, "scenes directory");
    OutDirLock lock(cfg.out_dir);

    auto recs = load_records(cfg);
    geocode_missing(cfg, recs);
    auto scenes = geo::load_scene_dir(cfg.scenes_dir);

    dataset::AssemblyStats stats;
    auto entries = dataset::assemble_entries(recs, scenes, cfg.assembly, &stats);

    std::vector<int> labels;
    labels.reserve(entries.size());
    for (const auto& e : entries) labels.push_back(e.label);
    dataset::DatasetSplit sp = dataset::split(entries.size(), cfg.ratios, cfg.seed,
                                              cfg.stratified ? &labels : nullptr);

    std::vector<std::string> split_of(entries.size());
    for (std::size_t i : sp.train) split_of[i] = "train";
    for (std::size_t i : sp.val) split_of[i] = "val";
    for (std::size_t i : sp.test) split_of[i] = "test";

    std::ostringstream out;
    out << "address_id,label,split,scene_id,center_x,center_y\n";
    char buf[256];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        std::snprintf(buf, sizeof(buf), "%s,%d,%s,%s,%.9f,%.9f\n", e.address_id.c_str(), e.label,
                      split_of[i].c_str(), e.scene_id.c_str(), e.center.x, e.center.y);
        out << buf;
    }
    write_file(manifest_path(cfg), out.str());

    if (stats.skipped_no_scene + stats.skipped_uncroppable > 0) {
        std::fprintf(stderr, "ingest: skipped %zu records outside scenes, %zu uncroppable\n",
                     stats.skipped_no_scene, stats.skipped_uncroppable);
    }
    write_run_manifest(cfg, "ingest", {cfg.records_csv}, {manifest_path(cfg)});
}

std::vector<ManifestRow> read_dataset_manifest(const std::string& path) {
    require_file(path, "dataset manifest");
    std::istringstream in(read_file(path));
    auto rows = csv::read(in);
    const std::vector<std::string> header = {"address_id", "label", "split",
                                             "scene_id",   "center_x", "center_y"};
    if (rows.empty() || rows[0] != header) {
        throw DataError("dataset manifest: unexpected header");
    }
    std::vector<ManifestRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 6) throw DataError("dataset manifest: bad row");
        ManifestRow r;
        r.address_id = rows[i][0];
        r.label = std::stoi(rows[i][1]);
        r.split = rows[i][2];
        r.scene_id = rows[i][3];
        r.center_x = std::stod(rows[i][4]);
        r.center_y = std::stod(rows[i][5]);
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

// Crop every manifest row's tile and rebuild the split index lists.
struct LoadedDataset {
    std::vector<dataset::LabeledTile> tiles;
    dataset::DatasetSplit split;
};

LoadedDataset load_dataset(const config::RunConfig& cfg) {
    auto manifest = read_dataset_manifest(manifest_path(cfg));
    require_file(cfg.scenes_dir, "scenes directory");
    auto scenes = geo::load_scene_dir(cfg.scenes_dir);
    std::map<std::string, const geo::RasterScene*> by_id;
    for (const auto& s : scenes) by_id[s.scene_id] = &s;

    LoadedDataset ds;
    ds.tiles.reserve(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& row = manifest[i];
        auto it = by_id.find(row.scene_id);
        if (it == by_id.end()) {
            throw DataError("dataset manifest references unknown scene: " + row.scene_id);
        }
        dataset::LabeledTile lt;
        lt.tile = geo::crop_tile(*it->second, {row.center_x, row.center_y}, cfg.assembly.side_m);
        lt.tile.address_id = row.address_id;
        lt.label = row.label;
        lt.address_id = row.address_id;
        ds.tiles.push_back(std::move(lt));

        if (row.split == "train") ds.split.train.push_back(i);
        else if (row.split == "val") ds.split.val.push_back(i);
        else if (row.split == "test") ds.split.test.push_back(i);
        else throw DataError("dataset manifest: unknown split '" + row.split + "'");
    }
    ds.split.seed = cfg.seed;
    return ds;
}

std::string checkpoint_path(const config::RunConfig& cfg) {
    return (fs::path(cfg.out_dir) /
            ("model_" + std::string(model::to_string(cfg.spec.family)) + ".ckpt"))
        .string();
}

} // namespace

std::string cmd_train(const config::RunConfig& cfg) {
    OutDirLock lock(cfg.out_dir);
    LoadedDataset ds = load_dataset(cfg);

    model::TrainedModel trained = model::train(ds.tiles, ds.split, cfg.spec, cfg.train);

    const std::string ckpt = checkpoint_path(cfg);
    model::save_model(trained, ckpt);

    std::ostringstream hist;
    hist << "epoch,loss,val_auc\n";
    char buf[96];
    for (const auto& h : trained.history) {
        std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f\n", h.epoch, h.loss, h.val_auc);
        hist << buf;
    }
    const std::string hist_path =
        (fs::path(cfg.out_dir) /
         ("train_history_" + std::string(model::to_string(cfg.spec.family)) + ".csv"))
            .string();
    write_file(hist_path, hist.str());

    write_run_manifest(cfg, "train", {manifest_path(cfg)}, {ckpt, hist_path});
    return ckpt;
}

void cmd_eval(const config::RunConfig& cfg, const std::vector<std::string>& checkpoints) {
    if (checkpoints.empty()) throw ConfigError("eval: at least one checkpoint required");
    for (const auto& c : checkpoints) require_file(c, "checkpoint");
    OutDirLock lock(cfg.out_dir);
    LoadedDataset ds = load_dataset(cfg);

    std::vector<dataset::LabeledTile> test_tiles;
    for (std::size_t i : ds.split.test) test_tiles.push_back(ds.tiles[i]);
    if (test_tiles.empty()) throw DataError("eval: manifest has an empty test split");

    std::vector<model::TrainedModel> models;
    models.reserve(checkpoints.size());
    std::vector<std::pair<std::string, const model::TrainedModel*>> named;
    for (const auto& c : checkpoints) models.push_back(model::load_model(c));
    for (const auto& m : models) named.emplace_back(model::to_string(m.spec.family), &m);

    eval::ComparisonReport report =
        eval::compare_models(test_tiles, named, cfg.eval_threshold);

    std::vector<std::string> outputs;
    for (const auto& row : report.rows) {
        const std::string path =
            (fs::path(cfg.out_dir) / ("roc_" + row.family + ".csv")).string();
        write_file(path, eval::write_roc_csv(row.curve));
        outputs.push_back(path);
    }
    const std::string cmp = (fs::path(cfg.out_dir) / "comparison.csv").string();
    write_file(cmp, eval::write_comparison_csv(report));
    outputs.push_back(cmp);

    std::vector<std::string> inputs = checkpoints;
    inputs.push_back(manifest_path(cfg));
    write_run_manifest(cfg, "eval", inputs, outputs);
}

void cmd_discover(const config::RunConfig& cfg, const std::string& checkpoint,
                  const std::string& region) {
    require_file(checkpoint, "checkpoint");
    require_file(cfg.records_csv, "records CSV");
    require_file(cfg.scenes_dir, "scenes directory");
    OutDirLock lock(cfg.out_dir);

    auto recs = load_records(cfg);
    geocode_missing(cfg, recs);
    std::vector<records::AddressRecord> region_recs;
    for (const auto& r : recs) {
        if (region.empty() || r.zipcode == region) region_recs.push_back(r);
    }
    if (region_recs.empty()) {
        throw discovery::EmptyRegionError("discover: no records in region '" + region + "'");
    }

    auto scenes = geo::load_scene_dir(cfg.scenes_dir);
    auto trained = model::load_model(checkpoint);

    discovery::SweepStats stats;
    auto scores = discovery::sweep_region(region_recs, scenes, trained, cfg.assembly.side_m,
                                          &stats);
    auto report = discovery::rank_suspects(scores, region_recs, cfg.discover_threshold, region,
                                           fs::path(checkpoint).filename().string());

    const std::string suspects = (fs::path(cfg.out_dir) / "suspects.csv").string();
    const std::string confirmations = (fs::path(cfg.out_dir) / "confirmations.csv").string();
    const std::string geojson = (fs::path(cfg.out_dir) / "suspects.geojson").string();
    write_file(suspects, discovery::write_suspect_csv(report.entries));
    write_file(confirmations, discovery::write_suspect_csv(report.confirmations));
    write_file(geojson, discovery::export_geojson(report));

    if (stats.skipped > 0) {
        std::fprintf(stderr, "discover: skipped %zu uncroppable addresses\n", stats.skipped);
    }
    write_run_manifest(cfg, "discover", {checkpoint, cfg.records_csv},
                       {suspects, confirmations, geojson});
}

void cmd_allocate(const config::RunConfig& cfg, const std::string& tracts_csv,
                  long long budget) {
    const std::string tracts_file = tracts_csv.empty() ? tracts_path(cfg) : tracts_csv;
    require_file(tracts_file, "tract stats CSV");

    allocation::EffortTable table;
    if (cfg.effort_table == "default") {
        table = allocation::default_effort_table();
    } else {
        require_file(cfg.effort_table, "effort table CSV");
        table = allocation::parse_effort_table_csv(read_file(cfg.effort_table));
    }
    OutDirLock lock(cfg.out_dir);

    auto tracts = allocation::parse_tract_csv(read_file(tracts_file), cfg.cuts);
    auto plan = allocation::allocate(tracts, table, budget);
    auto ranking = allocation::rank_zipcodes(tracts, table);

    const std::string plan_path = (fs::path(cfg.out_dir) / "allocation_plan.csv").string();
    const std::string rank_path = (fs::path(cfg.out_dir) / "zipcode_ranking.csv").string();
    write_file(plan_path, allocation::write_plan_csv(plan));
    write_file(rank_path, allocation::write_ranking_csv(ranking, tracts, table));

    std::vector<std::string> inputs = {tracts_file};
    if (cfg.effort_table != "default") inputs.push_back(cfg.effort_table);
    write_run_manifest(cfg, "allocate", inputs, {plan_path, rank_path});
}

} // namespace hmf::pipeline
