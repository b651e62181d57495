#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>

#include "pmlab/errors.hpp"
#include "pmlab/grid.hpp"

namespace pmlab {

/// Composite Simpson rule on [a,b] with `intervals` (even) subintervals.
template <class F>
double simpson(F&& f, double a, double b, std::size_t intervals)
{
    if (intervals < 2 || intervals % 2 != 0) throw DomainError("Simpson needs an even interval count >= 2");
    double const h = (b - a) / static_cast<double>(intervals);
    double odd = 0.0, even = 0.0;
    for (std::size_t k = 1; k < intervals; ++k) {
        double const v = f(a + static_cast<double>(k) * h);
        (k % 2 ? odd : even) += v;
    }
    double const ends = f(a) + f(b);
    double const s = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    if (!std::isfinite(s)) throw NumericalFailure("Simpson quadrature produced a non-finite value");
    return s;
}

/// Composite midpoint rule on [a,b]; usable for integrands singular at a.
template <class F>
double midpoint_rule(F&& f, double a, double b, std::size_t intervals)
{
    if (intervals == 0) throw DomainError("midpoint rule needs intervals >= 1");
    double const h = (b - a) / static_cast<double>(intervals);
    double s = 0.0;
    for (std::size_t k = 0; k < intervals; ++k) s += f(a + (static_cast<double>(k) + 0.5) * h);
    s *= h;
    if (!std::isfinite(s)) throw NumericalFailure("midpoint quadrature produced a non-finite value");
    return s;
}

/// Integral of a grid function over [0,1].
inline double quadrature(GridDensity const& f) { return f.integral(); }

/// Integral of a smooth function over [0,1] by Simpson with `intervals` subintervals.
template <class F>
    requires std::invocable<F&, double>
double quadrature(F&& f, std::size_t intervals = 1u << 16)
{
    return simpson(std::forward<F>(f), 0.0, 1.0, intervals);
}

} // namespace pmlab
