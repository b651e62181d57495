#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pmlab/errors.hpp"
#include "pmlab/grid.hpp"
#include "pmlab/observable.hpp"

namespace pmlab {

/// Cone C2 = { f >= 0, f nonincreasing, x^(alpha+1) f nondecreasing,
///             f(x) <= a x^-alpha m(f) }.
struct ConeParams {
    double a = 25.0;
    double alpha = 0.5;

    void validate() const
    {
        if (!(a > 1.0) || !std::isfinite(a)) throw DomainError("cone constant a must exceed 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("cone exponent alpha must lie in (0,1)");
    }
};

enum class ConeCondition { none, nonnegative, nonincreasing, weighted_nondecreasing, upper_bound };

inline char const* to_string(ConeCondition c)
{
    switch (c) {
    case ConeCondition::none: return "none";
    case ConeCondition::nonnegative: return "f >= 0";
    case ConeCondition::nonincreasing: return "f nonincreasing";
    case ConeCondition::weighted_nondecreasing: return "x^(alpha+1) f nondecreasing";
    case ConeCondition::upper_bound: return "f <= a x^-alpha m(f)";
    }
    return "?";
}

struct ConeReport {
    bool ok = true;
    ConeCondition violated = ConeCondition::none;
    std::size_t cell = 0;
    double x = 0.0;
    /// Size of the violation in the units of the failed condition.
    double excess = 0.0;

    explicit operator bool() const noexcept { return ok; }

    std::string describe() const
    {
        if (ok) return "in cone";
        return std::string(to_string(violated)) + " fails at cell " + std::to_string(cell) + " (x=" +
               format_number(x) + ", excess " + format_number(excess) + ")";
    }
};

struct ConeCheckOptions {
    /// Leading cells excluded from the checks (C2 functions may blow up at 0).
    std::size_t skip = 1;
    /// Monotonicity slack relative to the largest checked magnitude.
    double rel_tol = 1e-12;
};

/// Checks the four cone conditions at grid midpoints.
inline ConeReport cone_check(GridDensity const& f, ConeParams const& c, ConeCheckOptions opt = {})
{
    c.validate();
    Grid const& g = f.grid();
    auto v = f.values();
    auto x = g.midpoints();
    std::size_t const n = v.size();
    std::size_t const s = std::min(opt.skip, n);
    double const m = f.integral();
    double vmax = 0.0, wmax = 0.0;
    for (std::size_t i = s; i < n; ++i) {
        vmax = std::max(vmax, std::abs(v[i]));
        wmax = std::max(wmax, std::abs(std::pow(x[i], c.alpha + 1.0) * v[i]));
    }
    auto fail = [&](ConeCondition cond, std::size_t i, double excess) {
        return ConeReport{false, cond, i, x[i], excess};
    };
    for (std::size_t i = s; i < n; ++i)
        if (v[i] < -opt.rel_tol * vmax) return fail(ConeCondition::nonnegative, i, -v[i]);
    for (std::size_t i = s + 1; i < n; ++i)
        if (v[i] - v[i - 1] > opt.rel_tol * vmax) return fail(ConeCondition::nonincreasing, i, v[i] - v[i - 1]);
    double prev = 0.0;
    for (std::size_t i = s; i < n; ++i) {
        double const u = std::pow(x[i], c.alpha + 1.0) * v[i];
        if (i > s && prev - u > opt.rel_tol * wmax)
            return fail(ConeCondition::weighted_nondecreasing, i, prev - u);
        prev = u;
    }
    for (std::size_t i = s; i < n; ++i) {
        double const bound = c.a * std::pow(x[i], -c.alpha) * m;
        if (v[i] > bound * (1.0 + opt.rel_tol) + opt.rel_tol * vmax)
            return fail(ConeCondition::upper_bound, i, v[i] - bound);
    }
    return {};
}

/// Decomposition phi h - m(phi h) = F - G with F, G in the cone and
/// m(F) = m(G).
struct ConeSplit {
    double lambda = 0.0;
    double nu = 0.0;
    double delta = 0.0;
    GridDensity F;
    GridDensity G;
    ConeReport F_report;
    ConeReport G_report;
    /// nu was raised to |lambda| so that lambda X + nu stays nonnegative.
    bool nu_raised = false;
};

/// lambda = -|phi'|_inf, nu = |phi + lambda X|_inf and delta the largest of
///   (a/(alpha+1)) (|phi'|_inf + |lambda|) m(h),
///   (a/(a-1)) |phi + lambda X + nu|_inf m(h),
/// together with the conditions that put G = (lambda X + nu) h + delta + m(phi h)
/// in the cone as well:
///   delta + m(phi h) >= (a/(alpha+1)) |lambda| m(h),
///   delta + m(phi h) >= (a/(a-1)) |lambda X + nu|_inf m(h).
/// phi + lambda X is nonincreasing, so its sup norm is attained at 0 or 1.
inline ConeSplit cone_split(Observable const& phi, GridDensity const& h, ConeParams const& c,
                            ConeCheckOptions opt = {})
{
    auto const hr = cone_check(h, c, opt);
    if (!hr) throw DomainError("cone_split: h is not in the cone: " + hr.describe());
    Grid const& g = h.grid();
    auto x = g.midpoints();
    auto hv = h.values();
    double const mh = h.integral();

    double const lambda = -phi.deriv_sup();
    double const shifted_sup = std::max(std::abs(phi(0.0)), std::abs(phi(1.0) + lambda));

    std::vector<double> phih(hv.size());
    for (std::size_t i = 0; i < hv.size(); ++i) phih[i] = phi(x[i]) * hv[i];
    double const mphih = grid_integral(g, phih);

    auto build = [&](double nu) {
        double const f_sup = shifted_sup + nu;
        double const g_sup = std::max(std::abs(nu), std::abs(lambda + nu));
        double delta = std::max(c.a / (c.alpha + 1.0) * (phi.deriv_sup() + std::abs(lambda)) * mh,
                                c.a / (c.a - 1.0) * f_sup * mh);
        delta = std::max(delta, c.a / (c.alpha + 1.0) * std::abs(lambda) * mh - mphih);
        delta = std::max(delta, c.a / (c.a - 1.0) * g_sup * mh - mphih);
        delta = std::max(delta, -mphih);
        std::vector<double> F(hv.size()), G(hv.size());
        for (std::size_t i = 0; i < hv.size(); ++i) {
            F[i] = (phi(x[i]) + lambda * x[i] + nu) * hv[i] + delta;
            G[i] = (lambda * x[i] + nu) * hv[i] + delta + mphih;
        }
        GridDensity Fd(h.grid_ptr(), std::move(F)), Gd(h.grid_ptr(), std::move(G));
        auto fr = cone_check(Fd, c, opt);
        auto gr = cone_check(Gd, c, opt);
        return ConeSplit{lambda, nu, delta, std::move(Fd), std::move(Gd), fr, gr, false};
    };

    // 0 <= phi + lambda X + nu <= shifted_sup + nu, the bound used for delta.
    auto split = build(shifted_sup);
    if (!split.G_report && shifted_sup < std::abs(lambda)) {
        split = build(std::abs(lambda));
        split.nu_raised = true;
    }
    return split;
}

/// Stationary point x* = (alpha (p-1) l1 / K)^(1/(1-alpha)) of G, clamped to (0,1].
inline double lp_minimizer(double l1, double K, double alpha, double p)
{
    double const xs = std::pow(alpha * (p - 1.0) * l1 / K, 1.0 / (1.0 - alpha));
    return std::min(xs, 1.0);
}

/// Bound on |f|_p for |f| <= K x^-alpha with |f|_1 = l1:
/// min over x* in (0,1] of G(x*)^(1/p), G(x*) = A x*^(-alpha(p-1)) + B x*^(1-alpha p),
/// A = K^(p-1) l1, B = K^p / (1 - alpha p).
inline double lp_norm_bound(double l1, double K, double alpha, double p)
{
    if (!(p >= 1.0)) throw DomainError("lp_norm_bound: p must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("lp_norm_bound: alpha must lie in (0,1)");
    if (!(alpha * p < 1.0)) throw DomainError("lp_norm_bound: requires alpha*p < 1");
    if (!(l1 >= 0.0) || !(K >= 0.0)) throw DomainError("lp_norm_bound: l1 and K must be >= 0");
    if (p == 1.0) return l1;
    if (l1 == 0.0 || K == 0.0) return 0.0;
    double const xs = lp_minimizer(l1, K, alpha, p);
    double const A = std::pow(K, p - 1.0) * l1;
    double const B = std::pow(K, p) / (1.0 - alpha * p);
    double const G = A * std::pow(xs, -alpha * (p - 1.0)) + B * std::pow(xs, 1.0 - alpha * p);
    return std::pow(G, 1.0 / p);
}

} // namespace pmlab
