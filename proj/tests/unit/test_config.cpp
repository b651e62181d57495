#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pmlab/config.hpp"
#include "pmlab/runner.hpp"

using namespace pmlab;
namespace fs = std::filesystem;

namespace {

std::string error_of(std::string const& text)
{
    try {
        parse_config_text(text);
    } catch (ConfigError const& e) {
        return e.what();
    }
    return {};
}

std::string slurp(fs::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(std::string const& name)
{
    auto const p = fs::temp_directory_path() / ("pmlab_test_config_" + name);
    fs::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("minimal decay config takes the defaults")
{
    auto const c = parse_config_text("experiment: decay\nschedule:\n  kind: constant\n  alpha: 0.3\n");
    CHECK(c.experiment == "decay");
    CHECK(c.grid.cells == 4096);
    CHECK(!c.grid.graded);
    CHECK(c.cone.a == 25.0);
    CHECK(c.cone.alpha == 0.3);
    CHECK(c.decay.p == 1.0);
    CHECK(c.seed == 12345);
    CHECK(c.warnings.empty());
    CHECK(parse_config_text("experiment: lp-decay\nschedule:\n  kind: constant\n  alpha: 0.3\n").decay.p == 2.0);
}

TEST_CASE("alpha outside the family is a hard error naming the constraint")
{
    auto const e = error_of("experiment: decay\nschedule:\n  kind: constant\n  alpha: 1.2\n");
    CHECK(e.find("0 < alpha < 1") != std::string::npos);
    CHECK(!error_of("experiment: decay\nschedule:\n  kind: constant\n  alpha: 0.0\n").empty());
    // alpha p >= 1
    CHECK(!error_of("experiment: lp-decay\nschedule:\n  kind: constant\n  alpha: 0.6\n").empty());
}

TEST_CASE("CLT outside its regime loads with a warning")
{
    auto const c = parse_config_text("experiment: clt\nschedule:\n  kind: constant\n  alpha: 0.2\n");
    REQUIRE(!c.warnings.empty());
    bool found = false;
    for (auto const& w : c.warnings) found = found || w.find("0 < alpha < 1/9") != std::string::npos;
    CHECK(found);
    CHECK(parse_config_text("experiment: clt\nschedule:\n  kind: constant\n  alpha: 0.05\n").warnings.empty());
}

TEST_CASE("schema errors carry line numbers")
{
    auto const e = error_of("experiment: decay\nschedule:\n  kind: constant\n  alpha: 0.3\n  alpah: 0.2\n");
    CHECK(e.find("alpah") != std::string::npos);
    CHECK(e.find("line 5") != std::string::npos);
    CHECK(error_of("experiment: nope\n").find("must be one of") != std::string::npos);
    CHECK(!error_of("experiment: slln\nschedule:\n  kind: constant\n  alpha: 0.3\n").empty());
    CHECK(!error_of("experiment: decay\n").empty());
    CHECK(!error_of("experiment: decay\nschedule:\n  kind: constant\n  alpha: [1, 2]\n").empty());
    CHECK_THROWS_AS(parse_config("/nonexistent/pmlab.yaml"), ConfigError);
}

TEST_CASE("probability vectors must sum to one")
{
    std::string const base = "experiment: quenched-clt\nschedule:\n  kind: random\n  maps: [0.03, 0.05]\n";
    CHECK(error_of(base + "  probabilities: [0.5, 0.4]\n").find("sum") != std::string::npos);
    CHECK(error_of(base + "  probabilities: [0.5, 0.5]\n").empty());
    CHECK(!error_of(base + "  probabilities: [0.5, 0.25, 0.25]\n").empty());
}

TEST_CASE("resolved config echoes and reloads")
{
    auto const c = parse_config_text("experiment: variance-scan\nseed: 9\nscan:\n  schedules: 3\n");
    auto const j = to_json(c);
    CHECK(j["experiment"] == "variance-scan");
    CHECK(j["seed"] == 9);
    auto const again = parse_config_text(Json{{"pmlab_manifest", 1}, {"config", j}}.dump());
    CHECK(to_json(again) == j);
}

TEST_CASE("constant observable runs are degenerate and succeed")
{
    auto c = parse_config_text(
        "experiment: martingale-identities\ngrid:\n  cells: 256\nschedule:\n  kind: constant\n  alpha: 0.3\n"
        "observable:\n  kind: constant\n  value: 2.0\nmartingale:\n  horizon: 10\n  hn_horizon: 20\n");
    RunOptions opt;
    opt.output_dir = scratch("degenerate");
    auto const r = run_experiment(c, opt);
    CHECK(r.exit_code == 0);
    CHECK(r.degenerate);
    auto const m = Json::parse(slurp(*opt.output_dir / "manifest.json"));
    CHECK(m["degenerate"] == true);
    CHECK(m["exit_code"] == 0);
    fs::remove_all(*opt.output_dir);
}

TEST_CASE("failures map to exit codes")
{
    RunOptions opt;
    opt.output_dir = scratch("exit");
    auto c = parse_config_text("experiment: slln\nslln:\n  sequence: coin\n  gamma: 1.0\n  n_max: 1000\n  sequences: 3\n");
    CHECK(run_experiment(c, opt).exit_code == 0);
    // an impossible threshold fails its gate
    auto f = parse_config_text("experiment: composite-decay\ngrid:\n  cells: 256\nschedule:\n  kind: constant\n  alpha: 0.25\n"
                               "composite:\n  ladder: {lo: 16, hi: 64}\n  fit_window: [16, 64]\n  max_slope: -50\n");
    auto const r = run_experiment(f, opt);
    CHECK(r.exit_code == 1);
    CHECK(r.error.find("slope_at_most") != std::string::npos);
    fs::remove_all(*opt.output_dir);
}

TEST_CASE("rerunning a manifest reproduces the outputs byte for byte")
{
    auto c = parse_config_text("experiment: sbc\nseed: 5\ngrid:\n  cells: 512\nschedule:\n  kind: constant\n  alpha: 0.3\n"
                               "sbc:\n  trajectories: 8\n  n_min: 100\n  n_max: 10000\n  window_lo: 1000\n");
    RunOptions a;
    a.output_dir = scratch("rerun_a");
    a.workers = 1;
    auto const first = run_experiment(c, a);
    REQUIRE(first.exit_code <= 1);
    RunOptions b;
    b.output_dir = scratch("rerun_b");
    b.workers = 3;
    auto const second = run_experiment(*a.output_dir / "manifest.json", b);
    CHECK(second.exit_code == first.exit_code);
    REQUIRE(first.files == second.files);
    for (auto const& f : first.files) {
        if (f == "manifest.json") continue;
        INFO(f);
        CHECK(slurp(*a.output_dir / f) == slurp(*b.output_dir / f));
    }
    auto const ma = Json::parse(slurp(*a.output_dir / "manifest.json"));
    auto const mb = Json::parse(slurp(*b.output_dir / "manifest.json"));
    CHECK(ma["config"] == mb["config"]);
    CHECK(ma["results"] == mb["results"]);
    fs::remove_all(*a.output_dir);
    fs::remove_all(*b.output_dir);
}
