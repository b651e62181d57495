#include <catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "pmlab/martingale.hpp"

using namespace pmlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

} // namespace

TEST_CASE("H_1 vanishes and constant observables give zero martingale data")
{
    UlamCache cache;
    auto g = Grid::uniform(256);
    MartingaleState st(MapSchedule::constant(MapParameter(0.3)), Observable::cosine(), g, 5, cache);
    for (double v : st.H(1)) CHECK(v == 0.0);
    CHECK_THROWS_AS(st.H(0), DomainError);
    CHECK_THROWS_AS(st.H(7), DomainError);

    MartingaleState c(MapSchedule::constant(MapParameter(0.3)), Observable::constant(2.0), g, 5, cache);
    for (std::size_t k = 1; k <= 6; ++k)
        for (double v : c.H(k)) CHECK_THAT(v, WithinAbs(0.0, 1e-13));
    CHECK_THAT(sigma_sq_direct(c, 5), WithinAbs(0.0, 1e-13));
    CHECK_THAT(martingale_residual(c, 5), WithinAbs(0.0, 1e-13));
}

TEST_CASE("n = 1 identities")
{
    UlamCache cache;
    auto g = Grid::uniform(512);
    MartingaleState st(MapSchedule::constant(MapParameter(0.4)), Observable::identity(), g, 2, cache);
    // sigma_1^2 = E[phibar_1^2] under P 1
    auto pb = st.phibar(1);
    double e2 = 0.0;
    for (std::size_t i = 0; i < pb.size(); ++i) e2 += pb[i] * pb[i] * st.mu(1)[i] * g->width(i);
    CHECK_THAT(sigma_sq_direct(st, 1), WithinRel(e2, 1e-13));
    CHECK_THAT(sigma_sq_identity_e(st, 1), WithinRel(e2, 1e-13));
    CHECK_THAT(sigma_sq_identity_c(st, 1), WithinRel(e2, 1e-10));
    CHECK(st.mean(0) == 0.0);
    double const exact = oracle::simpson([](double x) { return oracle::map(0.4, x); }, 0.0, 0.5, 1 << 14) + 0.25;
    CHECK_THAT(st.mean(1), WithinAbs(exact, 1e-4));
}

TEST_CASE("martingale residual vanishes at N = 4096")
{
    UlamCache cache;
    auto g = Grid::uniform(4096);
    for (auto const& phi : {Observable::cosine(), Observable::identity()}) {
        MartingaleState st(MapSchedule::constant(MapParameter(0.3)), phi, g, 50, cache);
        double worst = 0.0;
        for (std::size_t n = 1; n <= 50; ++n) worst = std::max(worst, martingale_residual(st, n));
        INFO(phi.name());
        CHECK(worst <= 1e-8);
    }
    // a perturbed schedule too
    MartingaleState p(MapSchedule::perturbed(0.3, 0.05, 17), Observable::cosine(), g, 30, cache);
    for (std::size_t n = 1; n <= 30; ++n) CHECK(martingale_residual(p, n) <= 1e-8);
}

TEST_CASE("three variance routes agree")
{
    UlamCache cache;
    auto g = Grid::uniform(4096);
    MartingaleState st(MapSchedule::perturbed(0.3, 0.05, 5), Observable::cosine(), g, 50, cache);
    for (std::size_t n : {1u, 2u, 10u, 25u, 50u}) {
        double const d = sigma_sq_direct(st, n), c = sigma_sq_identity_c(st, n), e = sigma_sq_identity_e(st, n);
        INFO("n = " << n);
        CHECK(rel(d, c) <= 1e-6);
        CHECK(rel(d, e) <= 1e-6);
    }
    auto const s = st.schedule();
    auto const prof = variance_profile_direct(s, Observable::cosine(), g, 50, std::nullopt, cache);
    auto const prof_e = variance_profile_identity_e(s, Observable::cosine(), g, 50, cache);
    for (std::size_t n : {1u, 7u, 50u}) {
        CHECK(rel(prof.sigma_sq[n - 1], sigma_sq_direct(st, n)) <= 1e-10);
        CHECK(rel(prof_e.sigma_sq[n - 1], sigma_sq_direct(st, n)) <= 1e-10);
    }
    auto const means = stream_means(s, Observable::cosine(), g, 50, cache);
    for (std::size_t k = 1; k <= 50; ++k) CHECK(means[k - 1] == st.mean(k));
}

TEST_CASE("direct variance matches a dense covariance sum")
{
    UlamCache cache;
    std::size_t const N = 64, n = 12;
    auto g = Grid::uniform(N);
    auto const e = oracle::uniform_edges(N);
    std::vector<MapParameter> seq;
    for (std::size_t k = 0; k < n + 1; ++k) seq.emplace_back(k % 3 == 0 ? 0.2 : (k % 3 == 1 ? 0.5 : 0.7));
    auto const s = MapSchedule::explicit_list(seq);
    std::vector<oracle::Dense> Ms;
    for (std::size_t k = 0; k < n; ++k) Ms.push_back(oracle::ulam_dense(seq[k].alpha(), e));
    auto phi = [](double x) { return std::cos(2.0 * M_PI * x); };
    MartingaleState st(s, Observable::cosine(), g, n, cache);
    for (std::size_t m : {1u, 5u, 12u}) CHECK_THAT(sigma_sq_direct(st, m), WithinRel(oracle::chain_variance(Ms, e, phi, m), 1e-10));
    // capping the lags changes the sum
    CHECK(std::abs(sigma_sq_direct(st, 12, 2) - sigma_sq_direct(st, 12)) > 0.0);
}

TEST_CASE("discrete variance agrees with Monte Carlo on the map")
{
    double const a = 0.3;
    std::size_t const n = 100, orbits = 100'000;
    UlamCache cache;
    MartingaleState st(MapSchedule::constant(MapParameter(a)), Observable::cosine(), Grid::uniform(4096), n, cache);
    double const s2 = sigma_sq_direct(st, n);

    std::mt19937_64 gen(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> S(orbits);
    for (auto& v : S) {
        double x = u(gen), sum = 0.0;
        for (std::size_t k = 1; k <= n; ++k) {
            x = oracle::map(a, x);
            if (x > 1.0) x = 1.0;
            sum += std::cos(2.0 * M_PI * x);
        }
        v = sum;
    }
    double mean = 0.0;
    for (double v : S) mean += v;
    mean /= double(orbits);
    double var = 0.0, m4 = 0.0;
    for (double v : S) {
        var += (v - mean) * (v - mean);
        m4 += std::pow(v - mean, 4);
    }
    var /= double(orbits - 1);
    m4 /= double(orbits);
    double const se = std::sqrt((m4 - var * var) / double(orbits));
    INFO("operator " << s2 << " MC " << var << " se " << se);
    CHECK(std::abs(s2 - var) <= 3.0 * se);
}

TEST_CASE("H_n weighted sup stays bounded")
{
    UlamCache cache;
    double const a = 0.3;
    MartingaleState st(MapSchedule::constant(MapParameter(a)), Observable::cosine(), Grid::uniform(4096), 200, cache);
    std::vector<std::size_t> early, late;
    for (std::size_t n = 2; n <= 100; ++n) early.push_back(n);
    for (std::size_t n = 101; n <= 200; ++n) late.push_back(n);
    auto const e = hn_pointwise_stat(st, early, a);
    auto const l = hn_pointwise_stat(st, late, a);
    double const me = *std::max_element(e.begin(), e.end()), ml = *std::max_element(l.begin(), l.end());
    CHECK(me > 0.0);
    CHECK(ml / me <= 1.5);
}

TEST_CASE("grid refinement changes sigma_n^2 by less than 5%")
{
    UlamCache cache;
    auto const s = MapSchedule::constant(MapParameter(0.3));
    MartingaleState a(s, Observable::cosine(), Grid::uniform(2048), 50, cache);
    MartingaleState b(s, Observable::cosine(), Grid::uniform(4096), 50, cache);
    CHECK(rel(sigma_sq_direct(a, 50), sigma_sq_direct(b, 50)) < 0.05);
}

TEST_CASE("H_n L^q norms stay of one size for small alpha")
{
    UlamCache cache;
    MartingaleState st(MapSchedule::constant(MapParameter(0.1)), Observable::cosine(), Grid::uniform(2048), 100, cache);
    std::vector<std::size_t> ns;
    for (std::size_t n = 10; n <= 100; n += 10) ns.push_back(n);
    auto const r = hn_lq_norms(st, ns, 2.0, 2.0);
    std::vector<double> v;
    for (auto const& h : r) v.push_back(h.lq);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    double const med = sorted[sorted.size() / 2];
    CHECK(*std::max_element(v.begin(), v.end()) / med <= 2.0);
    CHECK_THROWS_AS(hn_lq_norms(st, ns, 0.5, 2.0), DomainError);
}

TEST_CASE("centering constants converge for phi = x")
{
    UlamCache cache;
    MartingaleState st(MapSchedule::constant(MapParameter(0.2)), Observable::identity(), Grid::uniform(2048), 300, cache);
    CHECK(std::abs(st.mean(300) - st.mean(299)) < 1e-4);
    CHECK(std::abs(st.mean(300) - st.mean(150)) < 1e-2);
    auto const t = transported_term_norms(st, 1);
    CHECK(t.back() < t.front());
}
