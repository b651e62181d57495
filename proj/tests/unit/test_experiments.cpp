#include <catch_amalgamated.hpp>

#include "pmlab/experiments.hpp"

using namespace pmlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("geometric ladder")
{
    CHECK(geometric_ladder(16, 128) == std::vector<std::size_t>{16, 32, 64, 128});
    CHECK(geometric_ladder(16, 64, 2) == std::vector<std::size_t>{16, 23, 32, 45, 64});
    CHECK(geometric_ladder(10, 50).back() == 50);
    CHECK_THROWS_AS(geometric_ladder(0, 5), DomainError);
    CHECK_THROWS_AS(require_ladder(std::vector<std::size_t>{4, 4}), DomainError);
}

TEST_CASE("fit recovers synthetic power laws")
{
    DecayCurve c;
    for (std::size_t n = 16; n <= 1024; n *= 2) {
        c.n.push_back(n);
        c.norm.push_back(3.0 * std::pow(double(n), -1.5));
    }
    auto const f = fit_decay_rate(c, 16, 1024);
    CHECK_THAT(f.slope, WithinAbs(-1.5, 1e-12));
    CHECK_THAT(f.intercept, WithinAbs(std::log(3.0), 1e-10));
    CHECK(f.points == 7);
    CHECK(fit_decay_rate(c, 64, 1024).points == 5);

    double const a = 0.4;
    DecayCurve l;
    for (std::size_t n = 16; n <= 1024; n *= 2) {
        l.n.push_back(n);
        l.norm.push_back(std::pow(double(n), -1.5) * std::pow(std::log(double(n)), 1.0 / a));
    }
    auto const g = fit_decay_rate(l, 16, 1024, true, a);
    CHECK(g.log_corrected);
    CHECK_THAT(g.slope, WithinAbs(-1.5, 1e-10));
    CHECK(std::abs(fit_decay_rate(l, 16, 1024).slope + 1.5) > 0.1);
    CHECK_THROWS_AS(fit_decay_rate(c, 512, 1024), NumericalFailure);
    CHECK_THROWS_AS(fit_decay_rate(l, 16, 1024, true, 1.5), DomainError);
}

TEST_CASE("equal inputs give a zero curve")
{
    UlamCache cache;
    auto g = Grid::uniform(512);
    auto const f = GridDensity::constant(g, 1.0);
    auto const ladder = geometric_ladder(16, 128);
    auto const c = loss_of_memory_curve(MapSchedule::constant(MapParameter(0.3)), f, f, 1.0, ladder, cache);
    REQUIRE(c.n == ladder);
    for (double v : c.norm) CHECK(v == 0.0);
    CHECK_THROWS_AS(fit_decay_rate(c, 16, 128), NumericalFailure);
}

TEST_CASE("cone pair curve decreases")
{
    UlamCache cache;
    double const a = 0.4;
    auto g = Grid::graded(4096, 1e-14, 1.05);
    auto const [f, h] = cone_pair(g, a);
    CHECK_THAT(h.integral(), WithinAbs(1.0, 1e-12));
    LossOfMemoryOptions opt;
    opt.cone = ConeParams{25.0, a};
    std::vector<std::size_t> ladder;
    for (std::size_t n = 1; n <= 256; ++n) ladder.push_back(n);
    auto const c = loss_of_memory_curve(MapSchedule::constant(MapParameter(a)), f, h, 1.0, ladder, cache, opt);
    for (std::size_t i = 8; i < c.norm.size(); ++i) CHECK(c.norm[i] <= c.norm[i - 1] * (1.0 + 1e-12));
    CHECK(c.norm.back() < 0.5 * c.norm[7]);

    // inputs outside the cone are refused
    auto const up = GridDensity::from_function(g, [](double x) { return 2.0 * x; });
    CHECK_THROWS_AS(loss_of_memory_curve(MapSchedule::constant(MapParameter(a)), up, f, 1.0, ladder, cache, opt),
                    DomainError);
    // and alpha p >= 1 is rejected for p > 1
    CHECK_THROWS_AS(loss_of_memory_curve(MapSchedule::constant(MapParameter(0.6)), f, h, 2.0, ladder, cache), DomainError);
}

TEST_CASE("observable inputs of equal mean")
{
    UlamCache cache;
    auto g = Grid::uniform(1024);
    auto const ladder = geometric_ladder(8, 64);
    auto const c = loss_of_memory_curve(MapSchedule::constant(MapParameter(0.3)), Observable::cosine(),
                                        Observable::polynomial({0.0}), g, 1.0, ladder, cache, {25.0, 0.3});
    CHECK(c.inputs == "cosine vs polynomial(0)");
    CHECK(c.norm.back() < c.norm.front());
    CHECK_THROWS_AS(loss_of_memory_curve(MapSchedule::constant(MapParameter(0.3)), Observable::identity(),
                                         Observable::constant(0.0), g, 1.0, ladder, cache, {25.0, 0.3}),
                    DomainError);
}

TEST_CASE("composite decay degenerate cases")
{
    UlamCache cache;
    auto g = Grid::uniform(1024);
    auto const ladder = geometric_ladder(8, 64);
    auto const s = MapSchedule::constant(MapParameter(0.25));
    MartingaleState c(s, Observable::constant(1.5), g, 10, cache);
    auto const d = composite_decay_check(c, 10, ladder, 1.0, 0.25, cache);
    CHECK(d.constant <= 1e-12);
    MartingaleState st(s, Observable::cosine(), g, 10, cache);
    auto const one = composite_decay_check(st, 1, ladder, 1.0, 0.25, cache);
    CHECK(one.degenerate);
    auto const ten = composite_decay_check(st, 10, ladder, 1.0, 0.25, cache);
    CHECK(!ten.degenerate);
    CHECK(ten.curve.norm.back() < ten.curve.norm.front());
    CHECK_THROWS_AS(composite_decay_check(st, 10, ladder, 4.0, 0.25, cache), DomainError);
}

TEST_CASE("variance scan flags constant observables")
{
    UlamCache cache;
    ScanSettings s;
    s.schedules = 2;
    s.levels = 4;
    s.ladder = {50, 100, 200};
    s.fit_lo = 50;
    s.band_lo = 100;
    s.band_hi = 200;
    auto const r = variance_growth_scan(s, Observable::constant(2.0), Grid::uniform(256), cache);
    CHECK(r.degenerate);
    auto const c = variance_growth_scan(s, Observable::cosine(), Grid::uniform(256), cache);
    CHECK(!c.degenerate);
    REQUIRE(c.schedules.size() == 2);
    CHECK(c.schedules[0].seed != c.schedules[1].seed);
    CHECK(c.min_exponent > 0.8);
    CHECK(c.max_exponent < 1.2);
    CHECK(c.to_csv().rfind("n,sigma_sq_0,sigma_sq_1\n50,", 0) == 0);
}

TEST_CASE("Green-Kubo verdicts")
{
    UlamCache cache;
    auto g = Grid::uniform(2048);
    auto const c = green_kubo_variance(MapParameter(0.1), Observable::constant(1.0), g, cache);
    CHECK(c.verdict == "inconclusive: degenerate (constant observable)");
    CHECK_THAT(c.sigma_sq, WithinAbs(0.0, 1e-12));

    auto const cob = green_kubo_variance(MapParameter(0.1), Observable::identity_coboundary(0.1), g, cache);
    INFO("sigma^2 " << cob.sigma_sq << " tail " << cob.tail << " disc " << cob.discretization);
    CHECK(cob.verdict == "inconclusive: coboundary-consistent");
    CHECK(std::abs(cob.sigma_sq) < 1e-2);

    auto const cos = green_kubo_variance(MapParameter(0.1), Observable::cosine(), g, cache);
    CHECK(cos.converged);
    CHECK(cos.verdict == "not a coboundary");
    CHECK(cos.sigma_sq > 0.1);
}
