#include "hmf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hmf/rng.hpp"

namespace hmf::dataset {

std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& ratios) {
    const double r[3] = {ratios.train, ratios.val, ratios.test};
    const double sum = r[0] + r[1] + r[2];
    if (std::fabs(sum - 1.0) > 1e-9) {
        std::ostringstream msg;
        msg << "split ratios must sum to 1, got " << sum;
        throw ConfigError(msg.str());
    }
    for (double ri : r) {
        if (ri < 0.0) throw ConfigError("split ratios must be non-negative");
    }

    std::array<std::size_t, 3> sizes{};
    double fracs[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double quota = static_cast<double>(n) * r[i];
        sizes[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        fracs[i] = quota - static_cast<double>(sizes[i]);
        if (fracs[i] < 1e-9) fracs[i] = 0.0; // integer quota, floor absorbed it
        assigned += sizes[i];
    }
    // leftover to largest fractional parts; ties go train > val > test
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return fracs[a] > fracs[b]; });
    for (std::size_t k = 0; assigned < n; ++k) {
        sizes[order[k % 3]] += 1;
        ++assigned;
    }
    return sizes;
}

namespace {

void deal(const std::vector<std::size_t>& shuffled, const std::array<std::size_t, 3>& sizes,
          DatasetSplit& out) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(shuffled[pos++]);
    for (std::size_t i = 0; i < sizes[1]; ++i) out.val.push_back(shuffled[pos++]);
    for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(shuffled[pos++]);
}

} // namespace

DatasetSplit split(std::size_t n, const SplitRatios& ratios, std::uint64_t seed,
                   const std::vector<int>* stratify_labels) {
    apportion(0, ratios); // validates ratios up front

    DatasetSplit out;
    out.ratios = ratios;
    out.seed = seed;
    out.stratified = stratify_labels != nullptr;

    if (stratify_labels) {
        if (stratify_labels->size() != n) {
            throw ConfigError("stratify labels length does not match n");
        }
        std::map<int, std::vector<std::size_t>> classes;
        for (std::size_t i = 0; i < n; ++i) classes[(*stratify_labels)[i]].push_back(i);
        Rng rng(seed);
        for (auto& [label, members] : classes) {
            if (members.size() < 3) {
                std::ostringstream msg;
                msg << "stratified split: class " << label << " has " << members.size()
                    << " items, need at least 3";
                throw StratificationError(msg.str());
            }
            rng.shuffle(members);
            deal(members, apportion(members.size(), ratios), out);
        }
    } else {
        if (n < 3) throw ConfigError("split requires n >= 3");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        Rng rng(seed);
        rng.shuffle(idx);
        deal(idx, apportion(n, ratios), out);
    }

    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

namespace {

struct Located {
    std::size_t record_index;
    std::size_t scene_index;
    geo::ProjPoint center;
    int label;
};

std::vector<Located> locate_records(const std::vector<records::AddressRecord>& recs,
                                    const std::vector<geo::RasterScene>& scenes,
                                    const AssemblyConfig& cfg, AssemblyStats* stats) {
    if (cfg.negative_ratio <= 0.0) throw ConfigError("negative_ratio must be positive");
    if (cfg.side_m <= 0.0) throw ConfigError("side_m must be positive");

    AssemblyStats local;
    std::vector<Located> located;
    located.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& rec = recs[i];
        if (!rec.has_coords()) {
            throw DataError("assemble: address " + rec.address_id + " has no coordinates");
        }
        bool found = false;
        bool covered = false;
        for (std::size_t s = 0; s < scenes.size(); ++s) {
            geo::ProjPoint p = records::project_wgs84(*rec.lat, *rec.lon, scenes[s].crs);
            if (!geo::scene_contains(scenes[s], p)) continue;
            covered = true;
            if (!geo::crop_feasible(scenes[s], p, cfg.side_m)) continue;
            Located loc;
            loc.record_index = i;
            loc.scene_index = s;
            loc.center = p;
            loc.label = rec.official_label == records::OfficialLabel::MultiFamily ? 1 : 0;
            located.push_back(loc);
            found = true;
            break;
        }
        if (!found) {
            if (covered) ++local.skipped_uncroppable;
            else ++local.skipped_no_scene;
        }
    }
    if (stats) *stats = local;

    std::size_t positives = 0;
    for (const auto& l : located) positives += static_cast<std::size_t>(l.label);
    if (positives == 0) {
        throw EmptyClassError("assemble: no multi-family addresses are croppable");
    }

    // all positives kept; negatives subsampled without replacement
    std::vector<std::size_t> negative_slots;
    for (std::size_t i = 0; i < located.size(); ++i) {
        if (located[i].label == 0) negative_slots.push_back(i);
    }
    const std::size_t want =
        static_cast<std::size_t>(std::llround(static_cast<double>(positives) * cfg.negative_ratio));
    if (negative_slots.size() > want) {
        Rng rng(derive_seed(cfg.seed, 0x6e656761)); // negative-sampling stream
        rng.shuffle(negative_slots);
        negative_slots.resize(want);
        std::sort(negative_slots.begin(), negative_slots.end());
        std::vector<Located> kept;
        kept.reserve(positives + want);
        std::size_t next_neg = 0;
        for (std::size_t i = 0; i < located.size(); ++i) {
            if (located[i].label == 1) {
                kept.push_back(located[i]);
            } else if (next_neg < negative_slots.size() && negative_slots[next_neg] == i) {
                kept.push_back(located[i]);
                ++next_neg;
            }
        }
        return kept;
    }
    return located;
}

} // namespace

std::vector<LabeledTile> assemble(const std::vector<records::AddressRecord>& recs,
                                  const std::vector<geo::RasterScene>& scenes,
                                  const AssemblyConfig& cfg, AssemblyStats* stats) {
    auto located = locate_records(recs, scenes, cfg, stats);
    std::vector<LabeledTile> tiles;
    tiles.reserve(located.size());
    for (const auto& loc : located) {
        LabeledTile lt;
        lt.tile = geo::crop_tile(scenes[loc.scene_index], loc.center, cfg.side_m);
        lt.tile.address_id = recs[loc.record_index].address_id;
        lt.label = loc.label;
        lt.address_id = recs[loc.record_index].address_id;
        tiles.push_back(std::move(lt));
    }
    return tiles;
}

std::vector<AssemblyEntry> assemble_entries(const std::vector<records::AddressRecord>& recs,
                                            const std::vector<geo::RasterScene>& scenes,
                                            const AssemblyConfig& cfg, AssemblyStats* stats) {
    auto located = locate_records(recs, scenes, cfg, stats);
    std::vector<AssemblyEntry> entries;
    entries.reserve(located.size());
    for (const auto& loc : located) {
        AssemblyEntry e;
        e.address_id = recs[loc.record_index].address_id;
        e.label = loc.label;
        e.scene_id = scenes[loc.scene_index].scene_id;
        e.center = loc.center;
        entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace hmf::dataset
