#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "hmf/allocation.hpp"
#include "hmf/dataset.hpp"
#include "hmf/errors.hpp"
#include "hmf/fixture.hpp"
#include "hmf/model.hpp"

namespace hmf::config {

// Flat key = value file with [sections]; '#' and ';' start comments.
struct RunConfig {
    // [paths]
    std::string scenes_dir;
    std::string records_csv;
    std::string cache_file;
    std::string out_dir = "out";
    std::string oracle_csv;        // defaults to <records dir>/oracle.csv
    std::string tracts_csv;        // defaults to <records dir>/tracts.csv
    std::string stub_geocode_file; // optional stub client table

    // [assembly]
    dataset::AssemblyConfig assembly;

    // [split]
    dataset::SplitRatios ratios;
    bool stratified = true;

    // [train]
    model::ModelSpec spec;
    model::TrainConfig train;

    // [eval] / [discover]
    double eval_threshold = 0.5;
    double discover_threshold = 0.5;
    std::string region; // zipcode filter, empty = all records

    // [allocate]
    std::string effort_table = "default"; // "default" or a CSV path
    long long budget = 200;
    allocation::LevelCuts cuts;

    // [fixture]
    dataset::FixtureSpec fixture;

    // [run]
    std::uint64_t seed = 0;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

// Deterministic serialization of the effective configuration; the run hash
// is computed over this.
std::string canonical_text(const RunConfig& cfg);

std::uint64_t fnv1a64(std::string_view data);
std::string config_hash(const RunConfig& cfg); // 16 hex digits

} // namespace hmf::config
