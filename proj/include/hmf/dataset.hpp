#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hmf/errors.hpp"
#include "hmf/geo.hpp"
#include "hmf/records.hpp"

namespace hmf::dataset {

class EmptyClassError : public DataError {
public:
    using DataError::DataError;
};
class StratificationError : public DataError {
public:
    using DataError::DataError;
};

struct LabeledTile {
    geo::ImageTile tile;
    int label = 0; // 0 = single-family, 1 = multi-family
    std::string address_id;
};

struct SplitRatios {
    double train = 0.64;
    double val = 0.16;
    double test = 0.20;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    SplitRatios ratios;
    std::uint64_t seed = 0;
    bool stratified = false;
};

// Integer split sizes by largest remainder: floor each n*r, then hand the
// leftover items out in descending fractional-part order, ties broken
// train > val > test.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& ratios);

// Seeded permutation split. With stratify_labels, apportionment is applied
// per class and the per-class picks are unioned.
DatasetSplit split(std::size_t n, const SplitRatios& ratios, std::uint64_t seed,
                   const std::vector<int>* stratify_labels = nullptr);

struct AssemblyConfig {
    double negative_ratio = 9.0; // negatives kept per positive
    double side_m = 50.0;
    std::uint64_t seed = 0;
};

struct AssemblyStats {
    std::size_t skipped_no_scene = 0;   // no scene covers the address
    std::size_t skipped_uncroppable = 0; // window overhangs past tolerance
};

// Joins records with scenes into labeled tiles. Every positive is kept;
// negatives are subsampled uniformly at random (seeded) down to
// negative_ratio per positive. Records no scene can serve are skipped and
// tallied.
std::vector<LabeledTile> assemble(const std::vector<records::AddressRecord>& records,
                                  const std::vector<geo::RasterScene>& scenes,
                                  const AssemblyConfig& cfg, AssemblyStats* stats = nullptr);

// Same record selection and bookkeeping as assemble() but without copying
// pixel data; used to build dataset manifests.
struct AssemblyEntry {
    std::string address_id;
    int label = 0;
    std::string scene_id;
    geo::ProjPoint center; // projected, in the owning scene's CRS
};
std::vector<AssemblyEntry> assemble_entries(const std::vector<records::AddressRecord>& records,
                                            const std::vector<geo::RasterScene>& scenes,
                                            const AssemblyConfig& cfg,
                                            AssemblyStats* stats = nullptr);

} // namespace hmf::dataset
