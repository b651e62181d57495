#pragma once

#include "pmlab/maps.hpp"

namespace pmlab {

/// (P f)(x) = f(y_L)/T'(y_L) + f(y_R)/T'(y_R), the sum over the two preimages.
template <class F>
double transfer_exact(double alpha, F&& f, double x)
{
    if (!(x > 0.0 && x <= 1.0)) throw DomainError("transfer_exact: x must lie in (0,1]");
    double const yl = left_branch_inverse(alpha, x);
    double const yr = right_branch_inverse(x);
    return f(yl) / eval_derivative(alpha, yl) + f(yr) / eval_derivative(alpha, yr);
}

template <class F>
double transfer_exact(MapParameter const& p, F&& f, double x)
{
    return transfer_exact(p.alpha(), std::forward<F>(f), x);
}

} // namespace pmlab
