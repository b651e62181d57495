#include <catch_amalgamated.hpp>

#include <filesystem>

#include "oracles.hpp"
#include "pmlab/experiments.hpp"
#include "pmlab/ulam.hpp"

using namespace pmlab;
using Catch::Matchers::WithinAbs;

TEST_CASE("N=2: the right cell maps onto both cells equally")
{
    for (double a : {0.1, 0.5, 0.9}) {
        UlamMatrix M(MapParameter(a), Grid::uniform(2));
        CHECK_THAT(M.entry(1, 0), WithinAbs(0.5, 1e-15));
        CHECK_THAT(M.entry(1, 1), WithinAbs(0.5, 1e-15));
    }
}

TEST_CASE("rows are stochastic")
{
    for (double a : {0.05, 0.1, 0.3, 0.5, 0.9}) {
        UlamMatrix M(MapParameter(a), Grid::uniform(4096));
        double worst = 0.0;
        for (std::size_t i = 0; i < M.size(); ++i) {
            worst = std::max(worst, std::abs(M.row_sum(i) - 1.0));
            for (double v : M.row_values(i)) CHECK((v >= 0.0 && v <= 1.0 + 1e-15));
        }
        CHECK(worst <= 1e-12);
    }
    UlamMatrix G(MapParameter(0.7), Grid::graded(512, 1e-16, 1.05));
    for (std::size_t i = 0; i < G.size(); ++i) CHECK(std::abs(G.row_sum(i) - 1.0) <= 1e-12);
}

TEST_CASE("matches the dense preimage-intersection oracle")
{
    for (double a : {0.2, 0.75}) {
        auto g = Grid::uniform(64);
        UlamMatrix M(MapParameter(a), g);
        auto const ref = oracle::ulam_dense(a, oracle::uniform_edges(64));
        double worst = 0.0;
        for (std::size_t i = 0; i < 64; ++i)
            for (std::size_t j = 0; j < 64; ++j) worst = std::max(worst, std::abs(M.entry(i, j) - ref[i][j]));
        CHECK(worst <= 1e-12);
    }
    auto gg = Grid::graded(32, 1e-9, 1.3);
    UlamMatrix M(MapParameter(0.4), gg);
    std::vector<double> e(gg->edges().begin(), gg->edges().end());
    auto const ref = oracle::ulam_dense(0.4, e);
    double worst = 0.0;
    for (std::size_t i = 0; i < gg->size(); ++i)
        for (std::size_t j = 0; j < gg->size(); ++j) worst = std::max(worst, std::abs(M.entry(i, j) - ref[i][j]));
    CHECK(worst <= 1e-10);
}

TEST_CASE("agrees with Monte Carlo transition frequencies")
{
    auto g = Grid::uniform(1024);
    UlamMatrix M(MapParameter(0.5), g);
    auto const e = oracle::uniform_edges(1024);
    std::uint64_t seed = 1;
    for (std::size_t i : {0u, 300u, 1000u}) {
        auto const freq = oracle::mc_row(0.5, e, i, 10'000'000, seed++);
        double worst = 0.0;
        for (std::size_t j = 0; j < 1024; ++j) worst = std::max(worst, std::abs(M.entry(i, j) - freq[j]));
        CHECK(worst <= 2e-3);
    }
}

TEST_CASE("push conserves mass and reaches a fixed point")
{
    auto g = Grid::uniform(4096);
    UlamMatrix M(MapParameter(0.5), g);
    auto f = GridDensity::lebesgue(g);
    auto p = push_density(M, f);
    CHECK_THAT(p.integral(), WithinAbs(1.0, 1e-12));

    double res = 0.0;
    auto h = ulam_fixed_point(M, 10000, 0.0, &res);
    CHECK(res <= 1e-8);
    CHECK_THAT(grid_integral(*g, h), WithinAbs(1.0, 1e-10));

    // near-0 profile: slope -alpha
    std::vector<double> lx, ly;
    auto x = g->midpoints();
    for (std::size_t i = 0; i < h.size(); ++i)
        if (x[i] >= std::exp2(-12) && x[i] <= std::exp2(-4)) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(h[i]));
        }
    double const slope = linear_fit(lx, ly).slope;
    CHECK(slope >= -0.6);
    CHECK(slope <= -0.4);
}

TEST_CASE("apply_schedule composition order")
{
    auto g = Grid::uniform(256);
    UlamCache cache;
    auto f = GridDensity::from_function(g, [](double x) { return 2.0 * x; }, GridDensity::Kind::density);
    auto s = MapSchedule::explicit_list({MapParameter(0.2), MapParameter(0.8)});
    auto const zero = apply_schedule(s, f, 0, cache);
    CHECK(std::equal(zero.values().begin(), zero.values().end(), f.values().begin()));
    auto const two = apply_schedule(s, f, 2, cache);
    UlamMatrix M1(MapParameter(0.2), g), M2(MapParameter(0.8), g);
    auto const ref = push_density(M2, push_density(M1, f));
    for (std::size_t i = 0; i < g->size(); ++i) CHECK_THAT(two[i], WithinAbs(ref[i], 1e-14));
    auto const wrong = push_density(M1, push_density(M2, f));
    double diff = 0.0;
    for (std::size_t i = 0; i < g->size(); ++i) diff = std::max(diff, std::abs(two[i] - wrong[i]));
    CHECK(diff > 1e-6);

    auto c = MapSchedule::constant(MapParameter(0.3));
    auto const three = apply_schedule(c, f, 3, cache);
    UlamMatrix M(MapParameter(0.3), g);
    auto const r3 = push_density(M, push_density(M, push_density(M, f)));
    for (std::size_t i = 0; i < g->size(); ++i) CHECK_THAT(three[i], WithinAbs(r3[i], 1e-14));
    CHECK_THROWS_AS(apply_schedule(s, f, 3, cache), DomainError);
}

TEST_CASE("pull is the transpose action")
{
    auto g = Grid::uniform(128);
    UlamMatrix M(MapParameter(0.4), g);
    std::vector<double> f(128), v(128);
    for (std::size_t i = 0; i < 128; ++i) {
        f[i] = 1.0 + std::sin(double(i));
        v[i] = std::cos(0.1 * double(i));
    }
    // int (P f) g = int f (K g)
    auto pf = M.push(f);
    auto kg = M.pull(v);
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < 128; ++i) {
        a += pf[i] * v[i] * g->width(i);
        b += f[i] * kg[i] * g->width(i);
    }
    CHECK_THAT(a, WithinAbs(b, 1e-13));
}

TEST_CASE("binary round trip for uniform grids")
{
    auto g = Grid::uniform(64);
    UlamMatrix M(MapParameter(0.35), g);
    auto const path = std::filesystem::temp_directory_path() / "pmlab_ulam_test.bin";
    M.write_binary(path);
    auto const R = UlamMatrix::read_binary(path);
    CHECK(R.parameter().alpha() == 0.35);
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 64; ++j) CHECK(R.entry(i, j) == M.entry(i, j));
    std::filesystem::remove(path);
    UlamMatrix G(MapParameter(0.35), Grid::graded(16, 1e-6, 2.0));
    CHECK_THROWS_AS(G.write_binary(path), DomainError);
}

TEST_CASE("cache returns one matrix per key, also under parallel prebuild")
{
    UlamCache cache;
    auto g = Grid::uniform(256);
    auto const a = cache.get(MapParameter(0.3), g);
    CHECK(cache.get(MapParameter(0.3), Grid::uniform(256)) == a);
    std::vector<MapParameter> ps;
    for (int k = 1; k <= 12; ++k) ps.emplace_back(0.05 * k);
    cache.prebuild(ps, g, 4);
    CHECK(cache.size() == 12);
    cache.get(MapParameter(0.3), Grid::uniform(128));
    CHECK(cache.size() == 13);
}
