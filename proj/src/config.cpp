#include "hmf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace hmf::config {

namespace {

struct IniData {
    std::map<std::string, std::map<std::string, std::string>> sections;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

IniData parse_ini(const std::string& text, std::vector<std::string>& errors) {
    IniData ini;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back("line " + std::to_string(line_no) + ": unterminated section");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            ini.sections[section];
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            errors.push_back("line " + std::to_string(line_no) + ": empty key");
            continue;
        }
        ini.sections[section][key] = value;
    }
    return ini;
}

class Reader {
public:
    Reader(IniData ini, std::vector<std::string>& errors) : ini_(std::move(ini)), errors_(errors) {}

    bool has(const std::string& sec, const std::string& key) {
        auto s = ini_.sections.find(sec);
        return s != ini_.sections.end() && s->second.count(key);
    }

    void str(const std::string& sec, const std::string& key, std::string& out) {
        if (has(sec, key)) {
            out = ini_.sections[sec][key];
            used_[sec].insert(key);
        }
    }

    template <class T>
    void num(const std::string& sec, const std::string& key, T& out, double lo, double hi) {
        if (!has(sec, key)) return;
        used_[sec].insert(key);
        const std::string& v = ini_.sections[sec][key];
        double d = 0.0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
        if (ec != std::errc() || ptr != v.data() + v.size()) {
            errors_.push_back("[" + sec + "] " + key + ": not a number: '" + v + "'");
            return;
        }
        if (d < lo || d > hi) {
            std::ostringstream msg;
            msg << "[" << sec << "] " << key << ": " << d << " outside [" << lo << "," << hi
                << "]";
            errors_.push_back(msg.str());
            return;
        }
        out = static_cast<T>(d);
    }

    void u64(const std::string& sec, const std::string& key, std::uint64_t& out) {
        if (!has(sec, key)) return;
        used_[sec].insert(key);
        const std::string& v = ini_.sections[sec][key];
        std::uint64_t d = 0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
        if (ec != std::errc() || ptr != v.data() + v.size()) {
            errors_.push_back("[" + sec + "] " + key + ": not an unsigned integer: '" + v + "'");
            return;
        }
        out = d;
    }

    void flag(const std::string& sec, const std::string& key, bool& out) {
        if (!has(sec, key)) return;
        used_[sec].insert(key);
        const std::string& v = ini_.sections[sec][key];
        if (v == "true" || v == "1" || v == "yes") out = true;
        else if (v == "false" || v == "0" || v == "no") out = false;
        else errors_.push_back("[" + sec + "] " + key + ": expected true/false, got '" + v + "'");
    }

    void report_unknown() {
        for (const auto& [sec, kv] : ini_.sections) {
            for (const auto& [key, value] : kv) {
                if (!used_[sec].count(key)) {
                    errors_.push_back("[" + sec + "] " + key + ": unknown option");
                }
            }
        }
    }

private:
    IniData ini_;
    std::vector<std::string>& errors_;
    std::map<std::string, std::set<std::string>> used_;
};

std::vector<model::StageSpec> parse_stages(const std::string& text,
                                           std::vector<std::string>& errors) {
    // "8x1,16x1" = (filters x blocks) per stage
    std::vector<model::StageSpec> stages;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        auto x = item.find('x');
        if (x == std::string::npos) {
            errors.push_back("[train] stages: expected <filters>x<blocks>, got '" + item + "'");
            return {};
        }
        try {
            model::StageSpec st;
            st.filters = std::stoi(item.substr(0, x));
            st.blocks = std::stoi(item.substr(x + 1));
            stages.push_back(st);
        } catch (const std::exception&) {
            errors.push_back("[train] stages: bad stage '" + item + "'");
            return {};
        }
    }
    return stages;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    std::vector<std::string> errors;
    Reader r(parse_ini(text, errors), errors);
    RunConfig cfg;

    r.str("paths", "scenes_dir", cfg.scenes_dir);
    r.str("paths", "records_csv", cfg.records_csv);
    r.str("paths", "cache_file", cfg.cache_file);
    r.str("paths", "out_dir", cfg.out_dir);
    r.str("paths", "oracle_csv", cfg.oracle_csv);
    r.str("paths", "tracts_csv", cfg.tracts_csv);
    r.str("paths", "stub_geocode_file", cfg.stub_geocode_file);

    r.num("assembly", "negative_ratio", cfg.assembly.negative_ratio, 1e-9, 1e9);
    r.num("assembly", "side_m", cfg.assembly.side_m, 1e-9, 1e9);

    r.num("split", "train", cfg.ratios.train, 0.0, 1.0);
    r.num("split", "val", cfg.ratios.val, 0.0, 1.0);
    r.num("split", "test", cfg.ratios.test, 0.0, 1.0);
    r.flag("split", "stratified", cfg.stratified);

    std::string family = "plain";
    r.str("train", "family", family);
    try {
        cfg.spec = model::default_spec(model::family_from_string(family));
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    if (r.has("train", "stages")) {
        std::string stages;
        r.str("train", "stages", stages);
        auto parsed = parse_stages(stages, errors);
        if (!parsed.empty()) cfg.spec.stages = parsed;
    }
    r.num("train", "input_side", cfg.spec.input_side, 4, 4096);
    r.num("train", "learning_rate", cfg.train.learning_rate, 0.0, 1e6);
    r.num("train", "epochs", cfg.train.epochs, 1, 1000000);
    r.num("train", "batch_size", cfg.train.batch_size, 1, 1000000);
    r.num("train", "pos_weight", cfg.train.pos_weight, 0.0, 1e9);
    r.num("train", "momentum", cfg.train.momentum, 0.0, 1.0);
    std::string optimizer = "momentum";
    r.str("train", "optimizer", optimizer);
    if (optimizer == "momentum") cfg.train.optimizer = model::TrainConfig::Optimizer::Momentum;
    else if (optimizer == "sgd") cfg.train.optimizer = model::TrainConfig::Optimizer::SGD;
    else errors.push_back("[train] optimizer: expected sgd|momentum, got '" + optimizer + "'");

    r.num("eval", "threshold", cfg.eval_threshold, 0.0, 1.0);
    r.num("discover", "threshold", cfg.discover_threshold, 0.0, 1.0);
    r.str("discover", "region", cfg.region);

    r.str("allocate", "effort_table", cfg.effort_table);
    r.num("allocate", "budget", cfg.budget, 0, 1e15);
    r.num("allocate", "bad_maf_high", cfg.cuts.bad_maf_high, 0.0, 1e9);
    r.num("allocate", "bad_maf_medium", cfg.cuts.bad_maf_medium, 0.0, 1e9);
    r.num("allocate", "low_response_high", cfg.cuts.low_response_high, 0.0, 1e9);

    r.num("fixture", "singles", cfg.fixture.n_single, 0, 1e9);
    r.num("fixture", "multis", cfg.fixture.n_multi, 0, 1e9);
    r.num("fixture", "hidden_fraction", cfg.fixture.hidden_fraction, 0.0, 1.0);
    r.num("fixture", "gsd", cfg.fixture.gsd, 1e-9, 1e9);
    r.num("fixture", "pattern_strength", cfg.fixture.pattern_strength, 0.0, 1.0);
    r.num("fixture", "tile_side_m", cfg.fixture.tile_side_m, 1e-9, 1e9);
    r.num("fixture", "cells_per_scene_side", cfg.fixture.cells_per_scene_side, 1, 4096);
    r.str("fixture", "hot_zipcode", cfg.fixture.hot_zipcode);

    r.u64("run", "seed", cfg.seed);

    r.report_unknown();
    if (!errors.empty()) {
        std::string msg = "config validation failed:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }

    cfg.fixture.tile_side_m = cfg.assembly.side_m; // one tile size for the whole run
    cfg.assembly.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string canonical_text(const RunConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    auto num = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << key << "=" << buf << "\n";
    };
    out << "scenes_dir=" << cfg.scenes_dir << "\n";
    out << "records_csv=" << cfg.records_csv << "\n";
    out << "cache_file=" << cfg.cache_file << "\n";
    out << "out_dir=" << cfg.out_dir << "\n";
    out << "oracle_csv=" << cfg.oracle_csv << "\n";
    out << "tracts_csv=" << cfg.tracts_csv << "\n";
    out << "stub_geocode_file=" << cfg.stub_geocode_file << "\n";
    num("negative_ratio", cfg.assembly.negative_ratio);
    num("side_m", cfg.assembly.side_m);
    num("ratio_train", cfg.ratios.train);
    num("ratio_val", cfg.ratios.val);
    num("ratio_test", cfg.ratios.test);
    out << "stratified=" << (cfg.stratified ? 1 : 0) << "\n";
    out << "family=" << model::to_string(cfg.spec.family) << "\n";
    out << "stages=";
    for (std::size_t i = 0; i < cfg.spec.stages.size(); ++i) {
        if (i) out << ",";
        out << cfg.spec.stages[i].filters << "x" << cfg.spec.stages[i].blocks;
    }
    out << "\n";
    out << "input_side=" << cfg.spec.input_side << "\n";
    num("learning_rate", cfg.train.learning_rate);
    out << "epochs=" << cfg.train.epochs << "\n";
    out << "batch_size=" << cfg.train.batch_size << "\n";
    num("pos_weight", cfg.train.pos_weight);
    out << "optimizer="
        << (cfg.train.optimizer == model::TrainConfig::Optimizer::Momentum ? "momentum" : "sgd")
        << "\n";
    num("momentum", cfg.train.momentum);
    num("eval_threshold", cfg.eval_threshold);
    num("discover_threshold", cfg.discover_threshold);
    out << "region=" << cfg.region << "\n";
    out << "effort_table=" << cfg.effort_table << "\n";
    out << "budget=" << cfg.budget << "\n";
    num("bad_maf_high", cfg.cuts.bad_maf_high);
    num("bad_maf_medium", cfg.cuts.bad_maf_medium);
    num("low_response_high", cfg.cuts.low_response_high);
    out << "fixture_singles=" << cfg.fixture.n_single << "\n";
    out << "fixture_multis=" << cfg.fixture.n_multi << "\n";
    num("fixture_hidden_fraction", cfg.fixture.hidden_fraction);
    num("fixture_gsd", cfg.fixture.gsd);
    num("fixture_pattern_strength", cfg.fixture.pattern_strength);
    num("fixture_tile_side_m", cfg.fixture.tile_side_m);
    out << "fixture_cells_per_scene_side=" << cfg.fixture.cells_per_scene_side << "\n";
    out << "fixture_hot_zipcode=" << cfg.fixture.hot_zipcode << "\n";
    out << "seed=" << cfg.seed << "\n";
    return out.str();
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const RunConfig& cfg) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_text(cfg))));
    return buf;
}

} // namespace hmf::config
