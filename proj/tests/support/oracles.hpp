#pragma once

// Reference implementations used as test oracles. They share no code with
// the library: plain formulas, bisection, dense matrices, std::mt19937_64.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

inline double map(double a, double x)
{
    return x <= 0.5 ? x + std::pow(2.0, a) * std::pow(x, 1.0 + a) : 2.0 * x - 1.0;
}

inline double derivative(double a, double x)
{
    return x <= 0.5 ? 1.0 + (1.0 + a) * std::pow(2.0, a) * std::pow(x, a) : 2.0;
}

inline double left_inverse(double a, double y)
{
    double lo = 0.0, hi = std::min(0.5, y);
    for (int i = 0; i < 200; ++i) {
        double const mid = 0.5 * (lo + hi);
        (mid + std::pow(2.0, a) * std::pow(mid, 1.0 + a) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double transfer(double a, std::function<double(double)> const& f, double x)
{
    double const yl = left_inverse(a, x), yr = 0.5 * (x + 1.0);
    return f(yl) / derivative(a, yl) + f(yr) / 2.0;
}

inline double simpson(std::function<double(double)> const& f, double a, double b, std::size_t n)
{
    double const h = (b - a) / double(n);
    double s = f(a) + f(b);
    for (std::size_t k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + double(k) * h);
    return s * h / 3.0;
}

using Dense = std::vector<std::vector<double>>;

/// M[i][j] = |cell i ∩ T^-1(cell j)| / |cell i| for arbitrary edges.
inline Dense ulam_dense(double a, std::vector<double> const& e)
{
    std::size_t const n = e.size() - 1;
    Dense M(n, std::vector<double>(n, 0.0));
    auto overlap = [](double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); };
    for (std::size_t j = 0; j < n; ++j) {
        double const l0 = left_inverse(a, e[j]), l1 = left_inverse(a, e[j + 1]);
        double const r0 = 0.5 * (e[j] + 1.0), r1 = 0.5 * (e[j + 1] + 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            double const w = e[i + 1] - e[i];
            M[i][j] = (overlap(e[i], e[i + 1], l0, l1) + overlap(e[i], e[i + 1], r0, r1)) / w;
        }
    }
    return M;
}

inline std::vector<double> uniform_edges(std::size_t n)
{
    std::vector<double> e(n + 1);
    for (std::size_t i = 0; i <= n; ++i) e[i] = double(i) / double(n);
    return e;
}

/// Landing frequencies of `samples` uniform points of cell i.
inline std::vector<double> mc_row(double a, std::vector<double> const& e, std::size_t i, std::size_t samples,
                                  std::uint64_t seed)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(e[i], e[i + 1]);
    std::vector<double> freq(e.size() - 1, 0.0);
    for (std::size_t s = 0; s < samples; ++s) {
        double const y = map(a, u(gen));
        auto it = std::upper_bound(e.begin(), e.end(), y);
        std::size_t j = std::size_t(std::max<std::ptrdiff_t>(0, it - e.begin() - 1));
        freq[std::min(j, freq.size() - 1)] += 1.0;
    }
    for (double& f : freq) f /= double(samples);
    return freq;
}

/// density push g_j = sum_i f_i w_i M_ij / w_j
inline std::vector<double> push(Dense const& M, std::vector<double> const& e, std::vector<double> const& f)
{
    std::size_t const n = f.size();
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += f[i] * (e[i + 1] - e[i]) * M[i][j];
    for (std::size_t j = 0; j < n; ++j) g[j] /= e[j + 1] - e[j];
    return g;
}

/// Var(S_n) of the cell chain started from Lebesgue, computed from the
/// definition sum_{k,l} Cov with dense matrices.
inline double chain_variance(std::vector<Dense> const& Ms, std::vector<double> const& e,
                             std::function<double(double)> const& phi, std::size_t n)
{
    std::size_t const N = e.size() - 1;
    std::vector<double> x(N), w(N);
    for (std::size_t i = 0; i < N; ++i) {
        x[i] = 0.5 * (e[i] + e[i + 1]);
        w[i] = e[i + 1] - e[i];
    }
    std::vector<std::vector<double>> mu(n + 1);
    mu[0].assign(N, 1.0);
    for (std::size_t k = 1; k <= n; ++k) mu[k] = push(Ms[k - 1], e, mu[k - 1]);
    std::vector<std::vector<double>> pb(n + 1, std::vector<double>(N));
    for (std::size_t k = 1; k <= n; ++k) {
        double c = 0.0;
        for (std::size_t i = 0; i < N; ++i) c += phi(x[i]) * mu[k][i] * w[i];
        for (std::size_t i = 0; i < N; ++i) pb[k][i] = phi(x[i]) - c;
    }
    double var = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        for (std::size_t l = k; l <= n; ++l) {
            // E[pb_k(X_k) pb_l(X_l)] = sum_i mu_k w pb_k (M_{k+1}...M_l pb_l)(i)
            std::vector<double> g = pb[l];
            for (std::size_t m = l; m > k; --m) {
                std::vector<double> h(N, 0.0);
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < N; ++j) h[i] += Ms[m - 1][i][j] * g[j];
                g = h;
            }
            double s = 0.0;
            for (std::size_t i = 0; i < N; ++i) s += mu[k][i] * w[i] * pb[k][i] * g[i];
            var += (k == l ? 1.0 : 2.0) * s;
        }
    }
    return var;
}

/// argmin of G over `points` equally spaced values in (0, 1].
inline double grid_search_min(std::function<double(double)> const& G, std::size_t points, double* value = nullptr)
{
    double best = 1.0, bv = G(1.0);
    for (std::size_t k = 1; k <= points; ++k) {
        double const x = double(k) / double(points);
        double const v = G(x);
        if (v < bv) {
            bv = v;
            best = x;
        }
    }
    if (value) *value = bv;
    return best;
}

/// Golden-section refinement on [lo, hi] of a unimodal G.
inline double golden_min(std::function<double(double)> const& G, double lo, double hi)
{
    double const r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    for (int i = 0; i < 300; ++i) {
        double const c = b - r * (b - a), d = a + r * (b - a);
        if (G(c) < G(d)) b = d;
        else a = c;
    }
    return 0.5 * (a + b);
}

} // namespace oracle
