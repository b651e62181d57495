#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmlab/csv.hpp"
#include "pmlab/errors.hpp"
#include "pmlab/grid.hpp"
#include "pmlab/maps.hpp"
#include "pmlab/observable.hpp"
#include "pmlab/ulam.hpp"

namespace pmlab {

// Everything below lives in one Ulam discretization. The Ulam operators turn
// the sequential system into a Markov chain on cells: X_0 is distributed by
// the cell widths, X_k moves by the row-stochastic matrix of beta_k, and
// P(X_k = i) = mu_k(i) w_i with mu_k = P^k 1. In that chain
//
//   A_1 = 0,  A_{k+1} = P_{k+1}(A_k + phibar_k mu_k),  H_k = A_k / mu_k
//
// is the explicit H_k formula, and the increment attached to a transition
// i -> j of step k+1,
//
//   psi_k(i, j) = phibar_k(i) + H_k(i) - H_{k+1}(j),
//
// plays the role of phibar_k + H_k - H_{k+1} o T_{k+1}. The reverse
// martingale property and both variance identities then hold to rounding,
// so residuals measure algebra only.

namespace detail {

inline double neumaier(std::span<double const> v)
{
    double s = 0.0, c = 0.0;
    for (double t : v) {
        double const u = s + t;
        c += std::abs(s) >= std::abs(t) ? (s - u) + t : (t - u) + s;
        s = u;
    }
    return s + c;
}

/// sum_i a_i b_i w_i
inline double weighted_dot(Grid const& g, std::span<double const> a, std::span<double const> b)
{
    auto w = g.widths();
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double const t = a[i] * b[i] * w[i];
        double const u = s + t;
        c += std::abs(s) >= std::abs(t) ? (s - u) + t : (t - u) + s;
        s = u;
    }
    return s + c;
}

inline void check_floor(std::span<double const> mu, double floor, std::size_t k)
{
    for (std::size_t i = 0; i < mu.size(); ++i)
        if (!(mu[i] >= floor))
            throw NumericalFailure("density P^" + std::to_string(k) + "1 fell below the floor " +
                                   format_number(floor) + " in cell " + std::to_string(i) +
                                   " (discretization failure)");
}

} // namespace detail

struct MartingaleOptions {
    /// Minimum admissible value of P^k 1 before dividing by it.
    double density_floor = 1e-12;
    std::size_t workers = 1;
};

/// Densities, centering constants and H_k for k up to horizon + 1.
class MartingaleState {
public:
    MartingaleState(MapSchedule schedule, Observable phi, GridPtr grid, std::size_t horizon, UlamCache& cache,
                    MartingaleOptions opt = {})
        : schedule_(std::move(schedule)), phi_(std::move(phi)), grid_(std::move(grid)), horizon_(horizon),
          ops_(schedule_, horizon + 1, grid_, cache, opt.workers)
    {
        if (horizon == 0) throw DomainError("martingale horizon must be >= 1");
        std::size_t const n = grid_->size();
        auto x = grid_->midpoints();
        phi_mid_.resize(n);
        for (std::size_t i = 0; i < n; ++i) phi_mid_[i] = phi_(x[i]);

        mu_.assign(horizon + 2, {});
        mu_[0].assign(n, 1.0);
        for (std::size_t k = 1; k <= horizon + 1; ++k) {
            mu_[k] = ops_[k].push(mu_[k - 1]);
            detail::check_floor(mu_[k], opt.density_floor, k);
        }

        c_.assign(horizon + 2, 0.0);
        for (std::size_t k = 1; k <= horizon + 1; ++k) c_[k] = detail::weighted_dot(*grid_, phi_mid_, mu_[k]);

        H_.assign(horizon + 2, std::vector<double>(n, 0.0));
        std::vector<double> A(n, 0.0), src(n);
        for (std::size_t k = 1; k <= horizon; ++k) {
            auto pb = phibar(k);
            for (std::size_t i = 0; i < n; ++i) src[i] = A[i] + pb[i] * mu_[k][i];
            A = ops_[k + 1].push(src);
            for (std::size_t i = 0; i < n; ++i) H_[k + 1][i] = A[i] / mu_[k + 1][i];
        }
    }

    MapSchedule const& schedule() const noexcept { return schedule_; }
    Observable const& observable() const noexcept { return phi_; }
    Grid const& grid() const noexcept { return *grid_; }
    GridPtr const& grid_ptr() const noexcept { return grid_; }
    std::size_t horizon() const noexcept { return horizon_; }
    ScheduleOperators const& operators() const noexcept { return ops_; }

    /// P^k 1, k = 0..horizon+1.
    std::span<double const> mu(std::size_t k) const { return mu_.at(k); }
    GridDensity density(std::size_t k) const { return {grid_, mu_.at(k), GridDensity::Kind::density}; }

    /// c_k = m(phi o T^k); c_0 = 0 by convention.
    double mean(std::size_t k) const { return c_.at(k); }

    /// phi at the cell midpoints.
    std::span<double const> phi_values() const noexcept { return phi_mid_; }

    /// phibar_k = phi - c_k on the grid; identically 0 for k = 0.
    std::vector<double> phibar(std::size_t k) const
    {
        std::vector<double> v(phi_mid_.size(), 0.0);
        if (k == 0) return v;
        double const c = mean(k);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = phi_mid_[i] - c;
        return v;
    }

    /// H_k, k = 1..horizon+1.
    std::span<double const> H(std::size_t k) const
    {
        if (k == 0 || k > horizon_ + 1) throw DomainError("H_k available for 1 <= k <= horizon+1");
        return H_[k];
    }

private:
    MapSchedule schedule_;
    Observable phi_;
    GridPtr grid_;
    std::size_t horizon_;
    ScheduleOperators ops_;
    std::vector<double> phi_mid_;
    std::vector<std::vector<double>> mu_;
    std::vector<double> c_;
    std::vector<std::vector<double>> H_;
};

inline void require_index(MartingaleState const& st, std::size_t n, std::size_t extra = 0)
{
    if (n == 0 || n + extra > st.horizon() + 1)
        throw DomainError("index " + std::to_string(n) + " outside the computed horizon " +
                          std::to_string(st.horizon()));
}

/// c_1..c_n.
inline std::vector<double> compute_means(MartingaleState const& st, std::optional<std::size_t> n = {})
{
    std::size_t const m = n.value_or(st.horizon());
    require_index(st, m);
    std::vector<double> c(m);
    for (std::size_t k = 1; k <= m; ++k) c[k - 1] = st.mean(k);
    return c;
}

inline GridDensity compute_Hn(MartingaleState const& st, std::size_t n)
{
    require_index(st, n);
    auto h = st.H(n);
    return {st.grid_ptr(), std::vector<double>(h.begin(), h.end())};
}

/// Linear interpolation between midpoints, constant beyond the outer ones.
inline double interpolate_midpoints(Grid const& g, std::span<double const> v, double y)
{
    auto x = g.midpoints();
    if (y <= x.front()) return v.front();
    if (y >= x.back()) return v.back();
    std::size_t j = g.locate(y);
    if (x[j] > y) --j;
    double const t = (y - x[j]) / (x[j + 1] - x[j]);
    return v[j] + t * (v[j + 1] - v[j]);
}

/// Pointwise sample of phibar_n + H_n - H_{n+1} o T_{n+1}: the composition
/// uses the exact image of each midpoint and linear interpolation of H_{n+1}
/// between midpoints. Its martingale residual is O(1/N); the chain
/// increments below are the exact discrete counterpart.
inline GridDensity compute_psi(MartingaleState const& st, std::size_t n)
{
    require_index(st, n, 1);
    Grid const& g = st.grid();
    auto x = g.midpoints();
    auto Hn = st.H(n);
    auto Hn1 = st.H(n + 1);
    auto pb = st.phibar(n);
    MapParameter const beta = st.schedule().entry(n + 1);
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double const y = eval_map(beta, x[i]);
        out[i] = pb[i] + Hn[i] - interpolate_midpoints(g, Hn1, y);
    }
    return {st.grid_ptr(), std::move(out)};
}

/// Chain increment psi_n(i, j) on a transition i -> j of step n+1.
inline double psi_edge(MartingaleState const& st, std::size_t n, std::size_t i, std::size_t j)
{
    return st.phi_values()[i] - st.mean(n) + st.H(n)[i] - st.H(n + 1)[j];
}

/// |P_{n+1}(psi_n P^n 1)|_1 with the chain increments:
/// R_j = sum_i mu_n(i) w_i M_ij psi_n(i,j) / w_j.
inline double martingale_residual(MartingaleState const& st, std::size_t n)
{
    require_index(st, n, 1);
    Grid const& g = st.grid();
    auto w = g.widths();
    auto mu = st.mu(n);
    auto Hn = st.H(n);
    auto Hn1 = st.H(n + 1);
    auto phi = st.phi_values();
    double const c = st.mean(n);
    UlamMatrix const& M = st.operators()[n + 1];
    std::vector<double> R(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        double const mass = mu[i] * w[i];
        double const base = phi[i] - c + Hn[i];
        auto cols = M.row_cols(i);
        auto vals = M.row_values(i);
        for (std::size_t k = 0; k < cols.size(); ++k) R[cols[k]] += mass * vals[k] * (base - Hn1[cols[k]]);
    }
    double s = 0.0;
    for (double r : R) s += std::abs(r);
    return s;
}

/// Same residual for the interpolated pointwise psi_n (diagnostic).
inline double interpolated_residual(MartingaleState const& st, std::size_t n)
{
    auto psi = compute_psi(st, n);
    auto mu = st.mu(n);
    std::vector<double> v(mu.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = psi[i] * mu[i];
    auto out = st.operators()[n + 1].push(v);
    return GridDensity(st.grid_ptr(), std::move(out)).lp_norm(1.0);
}

/// E[psi_n^2] over the transitions of step n+1.
inline double psi_second_moment(MartingaleState const& st, std::size_t n)
{
    require_index(st, n, 1);
    Grid const& g = st.grid();
    auto w = g.widths();
    auto mu = st.mu(n);
    auto Hn = st.H(n);
    auto Hn1 = st.H(n + 1);
    auto phi = st.phi_values();
    double const c = st.mean(n);
    UlamMatrix const& M = st.operators()[n + 1];
    std::vector<double> terms(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double const base = phi[i] - c + Hn[i];
        auto cols = M.row_cols(i);
        auto vals = M.row_values(i);
        double s = 0.0;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            double const d = base - Hn1[cols[k]];
            s += vals[k] * d * d;
        }
        terms[i] = mu[i] * w[i] * s;
    }
    return detail::neumaier(terms);
}

/// Var(S_n) = sum_i E[phibar_i^2] + 2 sum_{i<j} m(phibar_j P_{i+1}^{j-i}(phibar_i mu_i)).
/// With `cap`, lags j - i beyond cap are dropped.
inline double sigma_sq_direct(MartingaleState const& st, std::size_t n, std::optional<std::size_t> cap = {})
{
    require_index(st, n);
    Grid const& g = st.grid();
    std::size_t const lag_max = cap.value_or(n);
    std::vector<double> terms;
    std::vector<double> v(g.size()), next(g.size());
    for (std::size_t i = 1; i <= n; ++i) {
        auto pbi = st.phibar(i);
        auto mu = st.mu(i);
        for (std::size_t c = 0; c < v.size(); ++c) v[c] = pbi[c] * mu[c];
        terms.push_back(detail::weighted_dot(g, pbi, v));
        for (std::size_t j = i + 1; j <= n && j - i <= lag_max; ++j) {
            st.operators()[j].push(v, next);
            v.swap(next);
            terms.push_back(2.0 * detail::weighted_dot(g, st.phibar(j), v));
        }
    }
    return detail::neumaier(terms);
}

/// sum_i E[psi_i^2] + E[H_{n+1}^2 o T^{n+1}].
inline double sigma_sq_identity_c(MartingaleState const& st, std::size_t n)
{
    require_index(st, n, 1);
    std::vector<double> terms;
    for (std::size_t i = 1; i <= n; ++i) terms.push_back(psi_second_moment(st, i));
    auto H = st.H(n + 1);
    std::vector<double> h2(H.size());
    for (std::size_t i = 0; i < H.size(); ++i) h2[i] = H[i] * H[i];
    terms.push_back(detail::weighted_dot(st.grid(), h2, st.mu(n + 1)));
    return detail::neumaier(terms);
}

/// sum_i E[phibar_i^2] + 2 sum_i E[H_i phibar_i].
inline double sigma_sq_identity_e(MartingaleState const& st, std::size_t n)
{
    require_index(st, n);
    Grid const& g = st.grid();
    std::vector<double> terms;
    std::vector<double> tmp(g.size());
    for (std::size_t i = 1; i <= n; ++i) {
        auto pb = st.phibar(i);
        auto H = st.H(i);
        auto mu = st.mu(i);
        for (std::size_t c = 0; c < tmp.size(); ++c) tmp[c] = pb[c] * (pb[c] + 2.0 * H[c]);
        terms.push_back(detail::weighted_dot(g, tmp, mu));
    }
    return detail::neumaier(terms);
}

/// sup over cells (first `skip` excluded) of x^(alpha+1) |H_n(x)|, per n.
inline std::vector<double> hn_pointwise_stat(MartingaleState const& st, std::span<std::size_t const> ns,
                                             double alpha, std::size_t skip = 1)
{
    Grid const& g = st.grid();
    auto x = g.midpoints();
    std::vector<double> out;
    for (std::size_t n : ns) {
        require_index(st, n);
        auto H = st.H(n);
        double m = 0.0;
        for (std::size_t i = skip; i < H.size(); ++i) m = std::max(m, std::pow(x[i], alpha + 1.0) * std::abs(H[i]));
        out.push_back(m);
    }
    return out;
}

struct HnNorms {
    std::size_t n;
    /// |H_n|_q
    double lq;
    /// |H_n o T^n|_r = (int |H_n|^r P^n 1)^(1/r)
    double composed_lr;
};

inline std::vector<HnNorms> hn_lq_norms(MartingaleState const& st, std::span<std::size_t const> ns, double q,
                                        double r)
{
    if (!(q >= 1.0) || !(r >= 1.0)) throw DomainError("norm exponents must be >= 1");
    Grid const& g = st.grid();
    std::vector<HnNorms> out;
    std::vector<double> a(g.size()), b(g.size());
    for (std::size_t n : ns) {
        require_index(st, n);
        auto H = st.H(n);
        for (std::size_t i = 0; i < H.size(); ++i) {
            a[i] = std::pow(std::abs(H[i]), q);
            b[i] = std::pow(std::abs(H[i]), r);
        }
        double const lq = std::pow(grid_integral(g, a), 1.0 / q);
        double const lr = std::pow(detail::weighted_dot(g, b, st.mu(n)), 1.0 / r);
        out.push_back({n, lq, lr});
    }
    return out;
}

/// |P_{k+1}^{m}(phibar_k mu_k)|_1 for m = 1..horizon+1-k.
inline std::vector<double> transported_term_norms(MartingaleState const& st, std::size_t k)
{
    require_index(st, k);
    Grid const& g = st.grid();
    auto pb = st.phibar(k);
    auto mu = st.mu(k);
    std::vector<double> v(g.size()), next(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pb[i] * mu[i];
    std::vector<double> out;
    for (std::size_t j = k + 1; j <= st.horizon() + 1; ++j) {
        st.operators()[j].push(v, next);
        v.swap(next);
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += std::abs(v[i]) * g.width(i);
        out.push_back(s);
    }
    return out;
}

/// Per-n table: n, mean_n, sigma_n^2 (identity e), |H_n|_2, pointwise stat.
inline std::string martingale_table_csv(MartingaleState const& st, double alpha)
{
    CsvTable t({"n", "mean", "sigma_sq", "hn_l2", "hn_weighted_sup"});
    double acc = 0.0;
    Grid const& g = st.grid();
    std::vector<double> tmp(g.size());
    for (std::size_t n = 1; n <= st.horizon(); ++n) {
        auto pb = st.phibar(n);
        auto H = st.H(n);
        for (std::size_t c = 0; c < tmp.size(); ++c) tmp[c] = pb[c] * (pb[c] + 2.0 * H[c]);
        acc += detail::weighted_dot(g, tmp, st.mu(n));
        std::size_t const idx[1] = {n};
        auto norms = hn_lq_norms(st, idx, 2.0, 2.0);
        auto stat = hn_pointwise_stat(st, idx, alpha);
        t.row(n, st.mean(n), acc, norms[0].lq, stat[0]);
    }
    return t.str();
}

//---------------------------------------------------------------------------//
// Streaming versions for long horizons (no per-k storage)
//---------------------------------------------------------------------------//

/// c_1..c_n from n density pushes.
inline std::vector<double> stream_means(MapSchedule const& s, Observable const& phi, GridPtr const& grid,
                                        std::size_t n, UlamCache& cache, std::size_t workers = 1)
{
    s.require_length(n);
    cache.prebuild(s.distinct(n), grid, workers);
    auto x = grid->midpoints();
    std::vector<double> ph(grid->size());
    for (std::size_t i = 0; i < ph.size(); ++i) ph[i] = phi(x[i]);
    std::vector<double> mu(grid->size(), 1.0), next(grid->size());
    std::vector<double> c(n);
    for (std::size_t k = 1; k <= n; ++k) {
        cache.get(s.entry(k), grid)->push(mu, next);
        mu.swap(next);
        c[k - 1] = detail::weighted_dot(*grid, ph, mu);
    }
    return c;
}

struct VarianceProfile {
    /// sigma_k^2 for k = 1..n (index k-1).
    std::vector<double> sigma_sq;
    /// Lag cap used by the direct route (0: none).
    std::size_t cap = 0;
    /// Sum over i of the magnitude of the last retained cross term times the
    /// cap: a rough size of what truncation dropped.
    double tail_estimate = 0.0;
};

/// Direct-route sigma_k^2 for all k <= n in one sweep: each i spawns
/// phibar_i mu_i, transported for up to `cap` steps.
inline VarianceProfile variance_profile_direct(MapSchedule const& s, Observable const& phi, GridPtr const& grid,
                                               std::size_t n, std::optional<std::size_t> cap, UlamCache& cache,
                                               std::size_t workers = 1)
{
    s.require_length(n);
    std::size_t const lag_max = cap.value_or(n);
    ScheduleOperators const ops(s, n, grid, cache, workers);
    auto const c = stream_means(s, phi, grid, n, cache, workers);
    auto x = grid->midpoints();
    std::vector<double> ph(grid->size());
    for (std::size_t i = 0; i < ph.size(); ++i) ph[i] = phi(x[i]);

    // increments d_j = E[phibar_j^2] + 2 sum_{i<j} C_ij; sigma_k^2 = sum_{j<=k} d_j
    std::vector<double> d(n, 0.0), dc(n, 0.0);
    auto add = [&](std::size_t j, double t) {
        double const u = d[j - 1] + t;
        dc[j - 1] += std::abs(d[j - 1]) >= std::abs(t) ? (d[j - 1] - u) + t : (t - u) + d[j - 1];
        d[j - 1] = u;
    };
    std::vector<double> mu(grid->size(), 1.0), tmp(grid->size()), v(grid->size()), next(grid->size());
    VarianceProfile out;
    out.cap = cap.value_or(0);
    for (std::size_t i = 1; i <= n; ++i) {
        ops[i].push(mu, tmp);
        mu.swap(tmp);
        double const ci = c[i - 1];
        for (std::size_t q = 0; q < v.size(); ++q) v[q] = (ph[q] - ci) * mu[q];
        std::vector<double> pbi(ph.size());
        for (std::size_t q = 0; q < ph.size(); ++q) pbi[q] = ph[q] - ci;
        add(i, detail::weighted_dot(*grid, pbi, v));
        double last = 0.0;
        for (std::size_t j = i + 1; j <= n && j - i <= lag_max; ++j) {
            ops[j].push(v, next);
            v.swap(next);
            double const cj = c[j - 1];
            double cov = detail::weighted_dot(*grid, ph, v);
            // m(v) = 0 up to rounding, so the c_j shift only removes rounding
            double mv = grid_integral(*grid, v);
            cov -= cj * mv;
            add(j, 2.0 * cov);
            last = cov;
        }
        if (cap && i + lag_max <= n) out.tail_estimate += 2.0 * std::abs(last) * static_cast<double>(lag_max);
    }
    out.sigma_sq.resize(n);
    double acc = 0.0, comp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double const t = d[k] + dc[k];
        double const u = acc + t;
        comp += std::abs(acc) >= std::abs(t) ? (acc - u) + t : (t - u) + acc;
        acc = u;
        out.sigma_sq[k] = acc + comp;
    }
    return out;
}

/// Identity-e sigma_k^2 for all k <= n at O(n N) cost.
inline VarianceProfile variance_profile_identity_e(MapSchedule const& s, Observable const& phi, GridPtr const& grid,
                                                   std::size_t n, UlamCache& cache, std::size_t workers = 1,
                                                   double density_floor = 1e-12)
{
    s.require_length(n);
    cache.prebuild(s.distinct(n), grid, workers);
    auto x = grid->midpoints();
    std::size_t const N = grid->size();
    std::vector<double> ph(N);
    for (std::size_t i = 0; i < N; ++i) ph[i] = phi(x[i]);
    std::vector<double> mu(N, 1.0), A(N, 0.0), src(N), tmp(N);
    VarianceProfile out;
    out.sigma_sq.resize(n);
    double acc = 0.0, comp = 0.0;
    double prev_c = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        UlamMatrix const& M = *cache.get(s.entry(k), grid);
        // A_k = P_k(A_{k-1} + phibar_{k-1} mu_{k-1}), mu_k = P_k mu_{k-1}
        for (std::size_t i = 0; i < N; ++i) src[i] = A[i] + (k > 1 ? (ph[i] - prev_c) * mu[i] : 0.0);
        M.push(src, A);
        M.push(mu, tmp);
        mu.swap(tmp);
        detail::check_floor(mu, density_floor, k);
        double const ck = detail::weighted_dot(*grid, ph, mu);
        // E[phibar_k^2 + 2 H_k phibar_k] = sum (phibar^2 mu + 2 A phibar) w
        double t = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double const pb = ph[i] - ck;
            t += (pb * pb * mu[i] + 2.0 * A[i] * pb) * grid->width(i);
        }
        double const u = acc + t;
        comp += std::abs(acc) >= std::abs(t) ? (acc - u) + t : (t - u) + acc;
        acc = u;
        out.sigma_sq[k - 1] = acc + comp;
        prev_c = ck;
    }
    return out;
}

} // namespace pmlab
