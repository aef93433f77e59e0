#pragma once

#include <string>
#include <vector>

#include "hmf/config.hpp"

namespace hmf::pipeline {

// Each command validates its inputs up front, takes the output-directory
// lock, writes its artifacts under out_dir, and records a run manifest
// (config hash, seed, input hashes, output list). Reruns with identical
// inputs produce byte-identical artifacts.

void cmd_fixture(const config::RunConfig& cfg);
void cmd_ingest(const config::RunConfig& cfg);
std::string cmd_train(const config::RunConfig& cfg); // returns checkpoint path
void cmd_eval(const config::RunConfig& cfg, const std::vector<std::string>& checkpoints);
void cmd_discover(const config::RunConfig& cfg, const std::string& checkpoint,
                  const std::string& region);
void cmd_allocate(const config::RunConfig& cfg, const std::string& tracts_csv,
                  long long budget);

// Dataset manifest row (CSV: address_id,label,split,scene_id,center_x,center_y).
struct ManifestRow {
    std::string address_id;
    int label = 0;
    std::string split; // train|val|test
    std::string scene_id;
    double center_x = 0.0;
    double center_y = 0.0;
};

std::vector<ManifestRow> read_dataset_manifest(const std::string& path);

} // namespace hmf::pipeline
