// Command-line front door: one subcommand per process, artifacts chained
// through --out.

#include <cstdio>
#include <exception>
#include <iostream>

#include "CLI11.hpp"

#include "dinf/commands.hpp"
#include "dinf/parallel.hpp"

int main(int argc, char** argv) {
    CLI::App app{"influence-function data attribution for small diffusion models"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    int workers = 0;
    std::uint64_t seed_override = 0;
    bool have_seed_override = false;

    app.add_option("--config", config_path, "path to the JSON run config")->required();
    app.add_option("--workers", workers, "worker cap (default: hardware concurrency)");
    app.add_option("--out", out_dir, "artifact directory (default: out)");
    app.add_option("--seed-override", seed_override, "replace the training seed")
        ->each([&](const std::string&) { have_seed_override = true; });

    for (const std::string& name : dinf::command_names()) {
        app.add_subcommand(name);
    }

    CLI11_PARSE(app, argc, argv);

    if (workers > 0) dinf::parallel::set_max_workers(workers);

    try {
        dinf::RunConfig cfg = dinf::parse_config(config_path);
        if (have_seed_override) cfg.training.seed = seed_override;
        const std::string cmd = app.get_subcommands().front()->get_name();
        return dinf::run_command(cmd, cfg, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
