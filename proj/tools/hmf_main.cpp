// hmf: overhead-imagery screening for hidden multi-family households.
// Subcommands cover the whole pipeline: synthesize a benchmark fixture,
// ingest records into a labeled dataset, train a detector, evaluate it,
// sweep a region for suspects, and turn tract risk scores into a
// canvassing allocation plan.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hmf/config.hpp"
#include "hmf/errors.hpp"
#include "hmf/pipeline.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
};

hmf::config::RunConfig load_config(const GlobalOpts& g) {
    if (g.config_path.empty()) {
        throw hmf::ConfigError("--config is required");
    }
    auto cfg = hmf::config::parse_config_file(g.config_path);
    if (!g.out_override.empty()) cfg.out_dir = g.out_override;
    if (g.seed_set) {
        cfg.seed = g.seed_override;
        cfg.assembly.seed = g.seed_override;
        cfg.train.seed = g.seed_override;
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hidden multi-family household detection pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "run configuration file");
    app.add_option("--out", g.out_override, "override [paths] out_dir");
    auto* seed_opt = app.add_option("--seed", g.seed_override, "override [run] seed");

    auto* fixture = app.add_subcommand("fixture", "write synthetic scenes, records and oracle");
    auto* ingest = app.add_subcommand("ingest", "build the labeled dataset manifest");
    auto* train = app.add_subcommand("train", "train the configured detector family");
    auto* eval_cmd = app.add_subcommand("eval", "ROC/AUC + confusion report for checkpoints");
    std::vector<std::string> checkpoints;
    eval_cmd->add_option("checkpoints", checkpoints, "model checkpoint files")->required();
    auto* discover = app.add_subcommand("discover", "rank suspect hidden multi-family addresses");
    std::string checkpoint;
    std::string region;
    discover->add_option("checkpoint", checkpoint, "model checkpoint file")->required();
    discover->add_option("--region", region, "zipcode filter (default: config, then all)");
    bool region_set = false;
    discover->callback([&] { region_set = discover->count("--region") > 0; });
    auto* allocate = app.add_subcommand("allocate", "canvasser allocation plan from tract stats");
    std::string tracts_csv;
    long long budget = -1;
    allocate->add_option("--tracts", tracts_csv, "tract stats CSV (default: config)");
    allocate->add_option("--budget", budget, "canvasser budget (default: config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        g.seed_set = seed_opt->count() > 0;
        auto cfg = load_config(g);
        if (fixture->parsed()) {
            hmf::pipeline::cmd_fixture(cfg);
        } else if (ingest->parsed()) {
            hmf::pipeline::cmd_ingest(cfg);
        } else if (train->parsed()) {
            const std::string ckpt = hmf::pipeline::cmd_train(cfg);
            std::printf("%s\n", ckpt.c_str());
        } else if (eval_cmd->parsed()) {
            hmf::pipeline::cmd_eval(cfg, checkpoints);
        } else if (discover->parsed()) {
            hmf::pipeline::cmd_discover(cfg, checkpoint,
                                        region_set ? region : cfg.region);
        } else if (allocate->parsed()) {
            hmf::pipeline::cmd_allocate(cfg, tracts_csv,
                                        budget >= 0 ? budget : cfg.budget);
        }
    } catch (const hmf::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
