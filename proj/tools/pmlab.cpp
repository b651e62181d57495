#include <CLI11.hpp>

#include <iostream>

#include "pmlab/config.hpp"
#include "pmlab/runner.hpp"

namespace {

void print_warnings(std::vector<std::string> const& w)
{
    for (auto const& s : w) std::cerr << "warning: " << s << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"pmlab: numerical experiments for sequential and random Pomeau-Manneville compositions"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(PMLAB_VERSION));

    pmlab::RunOptions opt;
    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    std::size_t grid = 0;

    auto* run = app.add_subcommand("run", "Run the experiment described by a config (YAML or manifest.json)");
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--workers", opt.workers, "Worker threads")->check(CLI::PositiveNumber);
    auto* out_opt = run->add_option("--output-dir", output_dir, "Output directory");
    auto* seed_opt = run->add_option("--seed-override", seed, "Replace the master seed");
    auto* grid_opt = run->add_option("--grid-override", grid, "Replace the grid cell count")->check(CLI::Range(2, 1 << 26));

    auto* validate = app.add_subcommand("validate", "Parse and validate a config");
    validate->add_option("config", config_path, "Config file")->required();

    auto* list = app.add_subcommand("list-experiments", "List experiment kinds");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e);
        return code == 0 ? 0 : pmlab::exit_config_error;
    }

    if (list->parsed()) {
        for (auto const& k : pmlab::experiment_kinds()) std::cout << k << "\t" << pmlab::experiment_summary(k) << '\n';
        return 0;
    }

    pmlab::ExperimentConfig cfg;
    try {
        cfg = pmlab::parse_config(config_path);
    } catch (pmlab::ConfigError const& e) {
        std::cerr << "config error:\n" << e.what() << '\n';
        return pmlab::exit_config_error;
    }

    if (validate->parsed()) {
        print_warnings(cfg.warnings);
        std::cout << "ok: " << cfg.experiment << '\n' << pmlab::to_json(cfg).dump(2) << '\n';
        return 0;
    }

    if (*out_opt) opt.output_dir = output_dir;
    if (*seed_opt) opt.seed_override = seed;
    if (*grid_opt) opt.grid_override = grid;
    try {
        auto const res = pmlab::run_experiment(cfg, opt);
        print_warnings(res.warnings);
        for (auto const& g : res.gates)
            std::cout << (g.passed ? "PASS " : "FAIL ") << g.name << ": " << g.detail << '\n';
        if (res.degenerate) std::cout << "degenerate: true\n";
        std::cout << "output: " << res.output_dir.string() << " (" << pmlab::format_number(res.wall_seconds) << " s)\n";
        if (res.exit_code != 0) std::cerr << "error: " << res.error << '\n';
        return res.exit_code;
    } catch (pmlab::ConfigError const& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return pmlab::exit_config_error;
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return pmlab::exit_numerical_failure;
    }
}
