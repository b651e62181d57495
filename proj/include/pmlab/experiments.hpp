#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmlab/cone.hpp"
#include "pmlab/csv.hpp"
#include "pmlab/errors.hpp"
#include "pmlab/grid.hpp"
#include "pmlab/maps.hpp"
#include "pmlab/martingale.hpp"
#include "pmlab/observable.hpp"
#include "pmlab/stats.hpp"
#include "pmlab/ulam.hpp"

namespace pmlab {

struct DecayCurve {
    std::vector<std::size_t> n;
    std::vector<double> norm;
    double p = 1.0;
    std::string schedule;
    std::string inputs;

    std::string to_csv() const
    {
        CsvTable t({"n", "norm"});
        for (std::size_t i = 0; i < n.size(); ++i) t.row(n[i], norm[i]);
        return t.str();
    }
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t window_lo = 0;
    std::size_t window_hi = 0;
    double residual = 0.0;
    std::size_t points = 0;
    bool log_corrected = false;
};

/// Equal-mean cone pair: Lebesgue density 1 and the cell averages of
/// (1 - alpha) x^-alpha.
inline std::pair<GridDensity, GridDensity> cone_pair(GridPtr const& grid, double alpha)
{
    return {GridDensity::constant(grid, 1.0),
            GridDensity::from_antiderivative(grid, [alpha](double x) { return std::pow(x, 1.0 - alpha); })};
}

/// Geometric ladder from lo to hi with `per_octave` points per doubling.
inline std::vector<std::size_t> geometric_ladder(std::size_t lo, std::size_t hi, std::size_t per_octave = 1)
{
    if (lo == 0 || hi < lo) throw DomainError("ladder needs 1 <= lo <= hi");
    std::vector<std::size_t> out;
    double const steps = std::log2(double(hi) / double(lo)) * double(per_octave);
    std::size_t const m = static_cast<std::size_t>(std::llround(steps));
    for (std::size_t i = 0; i <= m; ++i) {
        double const v = double(lo) * std::exp2(double(i) / double(per_octave));
        auto n = static_cast<std::size_t>(std::llround(v));
        n = std::min(n, hi);
        if (out.empty() || n > out.back()) out.push_back(n);
    }
    if (out.back() != hi) out.push_back(hi);
    return out;
}

inline void require_ladder(std::span<std::size_t const> ladder)
{
    if (ladder.empty()) throw DomainError("empty ladder");
    for (std::size_t i = 0; i < ladder.size(); ++i)
        if (ladder[i] == 0 || (i && ladder[i] <= ladder[i - 1]))
            throw DomainError("ladder must be strictly increasing positive integers");
}

struct LossOfMemoryOptions {
    /// Verify that both inputs lie in this cone first.
    std::optional<ConeParams> cone;
    ConeCheckOptions check{};
    std::size_t workers = 1;
};

/// |P^n phi - P^n psi|_p at the ladder points.
inline DecayCurve loss_of_memory_curve(MapSchedule const& s, GridDensity const& phi, GridDensity const& psi,
                                       double p, std::span<std::size_t const> ladder, UlamCache& cache,
                                       LossOfMemoryOptions const& opt = {})
{
    require_same_grid(phi.grid(), psi.grid());
    require_ladder(ladder);
    if (!(p >= 1.0)) throw DomainError("decay curves need p >= 1");
    if (p > 1.0 && !(s.alpha_max() * p < 1.0))
        throw DomainError("L^p decay requires alpha*p < 1 (alpha_max=" + format_number(s.alpha_max()) +
                          ", p=" + format_number(p) + ")");
    if (opt.cone) {
        auto const a = cone_check(phi, *opt.cone, opt.check);
        auto const b = cone_check(psi, *opt.cone, opt.check);
        if (!a) throw DomainError("first input not in the cone: " + a.describe());
        if (!b) throw DomainError("second input not in the cone: " + b.describe());
        if (std::abs(phi.integral() - psi.integral()) > 1e-10)
            throw DomainError("cone inputs must have equal expectation");
    }
    std::size_t const n_max = ladder.back();
    ScheduleOperators const ops(s, n_max, phi.grid_ptr(), cache, opt.workers);
    std::vector<double> d(phi.size()), next(phi.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = phi[i] - psi[i];
    DecayCurve c;
    c.p = p;
    c.schedule = s.describe();
    std::size_t li = 0;
    for (std::size_t k = 1; k <= n_max; ++k) {
        ops[k].push(d, next);
        d.swap(next);
        if (k == ladder[li]) {
            c.n.push_back(k);
            c.norm.push_back(GridDensity(phi.grid_ptr(), d).lp_norm(p));
            ++li;
        }
    }
    return c;
}

/// C^1 inputs of equal mean: the difference is split into a cone pair with
/// h = 1 (this validates the split) and transported directly.
inline DecayCurve loss_of_memory_curve(MapSchedule const& s, Observable const& phi, Observable const& psi,
                                       GridPtr const& grid, double p, std::span<std::size_t const> ladder,
                                       UlamCache& cache, ConeParams const& cone, std::size_t workers = 1)
{
    auto const f = GridDensity::from_function(grid, [&](double x) { return phi(x); });
    auto const g = GridDensity::from_function(grid, [&](double x) { return psi(x); });
    if (std::abs(f.integral() - g.integral()) > 1e-10) throw DomainError("observables must have equal mean");
    auto const split = cone_split(Observable::difference(phi, psi), GridDensity::constant(grid, 1.0), cone);
    if (!split.F_report || !split.G_report)
        throw NumericalFailure("cone split of the difference failed: " +
                               (split.F_report ? split.G_report : split.F_report).describe());
    LossOfMemoryOptions opt;
    opt.workers = workers;
    auto c = loss_of_memory_curve(s, f, g, p, ladder, cache, opt);
    c.inputs = phi.name() + " vs " + psi.name();
    return c;
}

/// Least squares of log norm on log n over ladder points in [lo, hi].
/// Points at or below the discretization floor 10 eps N are dropped.
inline RateFit fit_decay_rate(DecayCurve const& c, std::size_t lo, std::size_t hi, bool log_correction = false,
                              double alpha = 0.0, std::size_t cells = 0)
{
    if (log_correction && !(alpha > 0.0 && alpha < 1.0)) throw DomainError("log correction needs alpha in (0,1)");
    double const floor = 10.0 * std::numeric_limits<double>::epsilon() * double(cells);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < c.n.size(); ++i) {
        if (c.n[i] < lo || c.n[i] > hi) continue;
        if (c.norm[i] == 0.0) throw NumericalFailure("zero norm at n=" + std::to_string(c.n[i]) + " inside the fit window");
        if (c.norm[i] <= floor) continue;
        double const ln = std::log(double(c.n[i]));
        double v = std::log(c.norm[i]);
        if (log_correction) v -= std::log(ln) / alpha;
        x.push_back(ln);
        y.push_back(v);
    }
    if (x.size() < 4) throw NumericalFailure("fewer than 4 usable points in the fit window");
    auto const f = linear_fit(x, y);
    return {f.slope, f.intercept, lo, hi, f.residual, f.points, log_correction};
}

/// lp_norm_bound applied pointwise to an L^1 curve.
inline std::vector<double> lp_bound_curve(DecayCurve const& l1, double K, double alpha, double p)
{
    std::vector<double> out;
    for (double v : l1.norm) out.push_back(lp_norm_bound(v, K, alpha, p));
    return out;
}

struct CompositeDecay {
    DecayCurve curve;
    /// max over the ladder of norm / (i n^(1 - 1/(p alpha)))
    double constant = 0.0;
    bool degenerate = false;
};

/// |P_{i+1}^n (mu_i H_i phibar_i - mu_i m((phibar_i H_i) o T^i))|_p at the ladder.
inline CompositeDecay composite_decay_check(MartingaleState const& st, std::size_t i, std::span<std::size_t const> ladder,
                                            double p, double alpha, UlamCache& cache)
{
    require_index(st, i);
    require_ladder(ladder);
    if (!(alpha * p < 1.0)) throw DomainError("composite decay requires alpha*p < 1");
    Grid const& g = st.grid();
    auto mu = st.mu(i);
    auto H = st.H(i);
    auto pb = st.phibar(i);
    std::vector<double> prod(g.size());
    for (std::size_t c = 0; c < prod.size(); ++c) prod[c] = pb[c] * H[c];
    double const m = detail::weighted_dot(g, prod, mu);
    std::vector<double> v(g.size()), next(g.size());
    for (std::size_t c = 0; c < v.size(); ++c) v[c] = mu[c] * (prod[c] - m);
    std::size_t const n_max = ladder.back();
    st.schedule().require_length(i + n_max);
    cache.prebuild(st.schedule().distinct(i + n_max), st.grid_ptr(), 1);
    CompositeDecay out;
    out.curve.p = p;
    out.curve.schedule = st.schedule().describe();
    out.curve.inputs = "composite i=" + std::to_string(i);
    std::size_t li = 0;
    double const expo = 1.0 - 1.0 / (p * alpha);
    for (std::size_t k = 1; k <= n_max; ++k) {
        cache.get(st.schedule().entry(i + k), st.grid_ptr())->push(v, next);
        v.swap(next);
        if (k == ladder[li]) {
            double const norm = GridDensity(st.grid_ptr(), v).lp_norm(p);
            out.curve.n.push_back(k);
            out.curve.norm.push_back(norm);
            out.constant = std::max(out.constant, norm / (double(i) * std::pow(double(k), expo)));
            ++li;
        }
    }
    out.degenerate = std::all_of(out.curve.norm.begin(), out.curve.norm.end(), [](double x) { return x == 0.0; });
    return out;
}

//---------------------------------------------------------------------------//
// Green-Kubo
//---------------------------------------------------------------------------//

/// Fixed point of one Ulam operator by power iteration from 1.
inline std::vector<double> ulam_fixed_point(UlamMatrix const& M, std::size_t max_iter = 100000, double tol = 1e-14,
                                            double* residual = nullptr)
{
    std::vector<double> h(M.size(), 1.0), next(M.size());
    double r = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < max_iter; ++it) {
        M.push(h, next);
        r = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) r += std::abs(next[i] - h[i]) * M.grid().width(i);
        h.swap(next);
        if (r <= tol) break;
    }
    if (residual) *residual = r;
    return h;
}

struct GreenKubo {
    double sigma_sq = 0.0;
    /// sum of |terms| over the last decade summed
    double tail = 0.0;
    /// |sigma^2(N) - sigma^2(N/2)|
    double discretization = 0.0;
    std::size_t terms = 0;
    bool converged = false;
    std::string verdict;
};

namespace detail {

inline GreenKubo green_kubo_on(MapParameter beta, Observable const& phi, GridPtr const& grid, UlamCache& cache,
                               std::size_t k_max, double tol)
{
    auto const M = cache.get(beta, grid);
    auto const h = ulam_fixed_point(*M);
    Grid const& g = *grid;
    auto x = g.midpoints();
    std::vector<double> ph(g.size());
    for (std::size_t i = 0; i < ph.size(); ++i) ph[i] = phi(x[i]);
    double const mean = weighted_dot(g, ph, h);
    for (double& v : ph) v -= mean;
    std::vector<double> v(g.size()), next(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = ph[i] * h[i];
    GreenKubo out;
    double sum = weighted_dot(g, ph, v);
    double at_decade = sum;
    std::size_t decade = 10;
    std::vector<double> abs_terms;
    for (std::size_t k = 1; k <= k_max; ++k) {
        M->push(v, next);
        v.swap(next);
        double const t = 2.0 * weighted_dot(g, ph, v);
        sum += t;
        abs_terms.push_back(std::abs(t));
        out.terms = k;
        if (k == decade || k == k_max) {
            std::size_t const from = k / 10;
            double tail = 0.0;
            for (std::size_t j = from; j < k; ++j) tail += abs_terms[j];
            out.tail = tail;
            if (std::abs(sum - at_decade) < tol) {
                out.converged = true;
                break;
            }
            at_decade = sum;
            decade *= 10;
        }
    }
    out.sigma_sq = sum;
    return out;
}

} // namespace detail

/// sigma^2 = m(phihat^2 h) + 2 sum_{k=1}^{K_max} m(phihat P^k(phihat h)) in the
/// Ulam discretization, with early stop once a decade moves the partial sum
/// by less than `tol`. The verdict is one-sided: "not a coboundary" needs
/// sigma^2 above ten times the tail plus the discretization change from
/// halving the grid; otherwise "inconclusive".
inline GreenKubo green_kubo_variance(MapParameter beta, Observable const& phi, GridPtr const& grid, UlamCache& cache,
                                     std::size_t k_max = 10000, double tol = 1e-10)
{
    auto out = detail::green_kubo_on(beta, phi, grid, cache, k_max, tol);
    if (phi.is_constant()) {
        out.verdict = "inconclusive: degenerate (constant observable)";
        return out;
    }
    GridPtr const coarse = grid->is_uniform() ? Grid::uniform(grid->base_cells() / 2)
                                              : Grid::graded(grid->base_cells() / 2, grid->x_min(), grid->ratio());
    auto const half = detail::green_kubo_on(beta, phi, coarse, cache, k_max, tol);
    out.discretization = std::abs(out.sigma_sq - half.sigma_sq);
    if (!out.converged)
        out.verdict = "inconclusive: non-convergent tail";
    else if (out.sigma_sq > 10.0 * (out.tail + out.discretization))
        out.verdict = "not a coboundary";
    else
        out.verdict = "inconclusive: coboundary-consistent";
    return out;
}

//---------------------------------------------------------------------------//
// Variance growth for nearby maps
//---------------------------------------------------------------------------//

struct ScanSettings {
    double center = 0.1;
    double epsilon = 0.02;
    std::size_t levels = 16;
    std::size_t schedules = 10;
    std::vector<std::size_t> ladder;
    /// ladder points >= fit_lo enter the exponent fit
    std::size_t fit_lo = 500;
    std::size_t band_lo = 2000;
    std::size_t band_hi = 4000;
    std::optional<std::size_t> cap;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct ScanSchedule {
    std::uint64_t seed = 0;
    std::vector<double> sigma_sq;  // at the ladder points
    double exponent = 0.0;
    double band = 0.0;
    double tail_estimate = 0.0;
};

struct ScanResult {
    std::vector<std::size_t> ladder;
    std::vector<ScanSchedule> schedules;
    double min_exponent = 0.0;
    double median_exponent = 0.0;
    double max_exponent = 0.0;
    double max_band = 0.0;
    bool degenerate = false;
    std::string warning;

    std::string to_csv() const
    {
        std::vector<std::string> header{"n"};
        for (std::size_t s = 0; s < schedules.size(); ++s) header.push_back("sigma_sq_" + std::to_string(s));
        CsvTable t(header);
        for (std::size_t i = 0; i < ladder.size(); ++i) {
            std::vector<double> row{double(ladder[i])};
            for (auto const& s : schedules) row.push_back(s.sigma_sq[i]);
            t.row_values(row);
        }
        return t.str();
    }
};

/// Draws perturbed schedules beta_k in (center - eps, center + eps), computes
/// sigma_n^2 by the direct route and fits the growth exponent per schedule.
inline ScanResult variance_growth_scan(ScanSettings const& cfg, Observable const& phi, GridPtr const& grid,
                                       UlamCache& cache)
{
    require_ladder(cfg.ladder);
    if (!(cfg.center + cfg.epsilon < 1.0)) throw DomainError("scan needs center + epsilon < 1");
    ScanResult out;
    out.ladder = cfg.ladder;
    if (phi.is_constant()) out.degenerate = true;
    std::size_t const n_max = cfg.ladder.back();
    std::vector<double> exps;
    for (std::size_t s = 0; s < cfg.schedules; ++s) {
        ScanSchedule row;
        row.seed = derive_key(cfg.seed, s, StreamTag::scan);
        auto const sched = MapSchedule::perturbed(cfg.center, cfg.epsilon, row.seed, cfg.levels);
        auto const prof = variance_profile_direct(sched, phi, grid, n_max, cfg.cap, cache, cfg.workers);
        row.tail_estimate = prof.tail_estimate;
        std::vector<double> lx, ly, band;
        for (std::size_t n : cfg.ladder) {
            double const v = prof.sigma_sq[n - 1];
            row.sigma_sq.push_back(v);
            if (n >= cfg.fit_lo && v > 0.0) {
                lx.push_back(std::log(double(n)));
                ly.push_back(std::log(v));
            }
            if (n >= cfg.band_lo && n <= cfg.band_hi) band.push_back(v / double(n));
        }
        if (!out.degenerate) {
            if (lx.size() < 2) throw NumericalFailure("variance scan: fewer than 2 ladder points in the fit window");
            row.exponent = linear_fit(lx, ly).slope;
            row.band = relative_band(band);
            exps.push_back(row.exponent);
            out.max_band = std::max(out.max_band, row.band);
        }
        out.schedules.push_back(std::move(row));
    }
    if (!exps.empty()) {
        std::sort(exps.begin(), exps.end());
        out.min_exponent = exps.front();
        out.max_exponent = exps.back();
        out.median_exponent = exps.size() % 2 ? exps[exps.size() / 2]
                                              : 0.5 * (exps[exps.size() / 2 - 1] + exps[exps.size() / 2]);
    }
    return out;
}

} // namespace pmlab
