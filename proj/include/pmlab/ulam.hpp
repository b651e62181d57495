#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmlab/grid.hpp"
#include "pmlab/maps.hpp"
#include "pmlab/parallel.hpp"

namespace pmlab {

/// Ulam discretization of one transfer operator:
/// M_ij = m(I_i ∩ T^-1 I_j) / m(I_i), row-stochastic, stored as CSR.
///
/// Entries come from the branch preimages of the grid edges,
/// p_k = T_L^-1(e_k) and q_k = (e_k + 1)/2, so a build costs one inverse
/// solve per edge and no sampling. A cell [A,B) inside [0,1/2] meets the
/// preimage of cell j in [max(A,p_j), min(B,p_{j+1})); the pieces of a row
/// telescope to B - A.
class UlamMatrix {
public:
    UlamMatrix(MapParameter p, GridPtr grid) : param_(p), grid_(std::move(grid))
    {
        Grid const& g = *grid_;
        std::size_t const n = g.size();
        auto e = g.edges();
        std::vector<double> pl(n + 1), pr(n + 1);
        for (std::size_t k = 0; k <= n; ++k) {
            pl[k] = left_branch_inverse(p.alpha(), e[k]);
            pr[k] = right_branch_inverse(e[k]);
        }
        row_ptr_.reserve(n + 1);
        row_ptr_.push_back(0);
        for (std::size_t i = 0; i < n; ++i) {
            double const a = e[i], b = e[i + 1], w = b - a;
            if (b <= 0.5) {
                add_run(pl, a, b, w);
            } else if (a >= 0.5) {
                add_run(pr, a, b, w);
            } else {
                add_run(pl, a, 0.5, w);
                add_run(pr, 0.5, b, w);
            }
            row_ptr_.push_back(col_.size());
        }
    }

    MapParameter parameter() const noexcept { return param_; }
    Grid const& grid() const noexcept { return *grid_; }
    GridPtr const& grid_ptr() const noexcept { return grid_; }
    std::size_t size() const noexcept { return grid_->size(); }
    std::size_t nonzeros() const noexcept { return col_.size(); }

    std::span<std::uint32_t const> row_cols(std::size_t i) const
    {
        return {col_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
    }
    std::span<double const> row_values(std::size_t i) const
    {
        return {val_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
    }

    double entry(std::size_t i, std::size_t j) const
    {
        auto c = row_cols(i);
        auto v = row_values(i);
        for (std::size_t k = 0; k < c.size(); ++k)
            if (c[k] == j) return v[k];
        return 0.0;
    }

    double row_sum(std::size_t i) const
    {
        double s = 0.0;
        for (double v : row_values(i)) s += v;
        return s;
    }

    /// Density push: out_j = sum_i f_i w_i M_ij / w_j. Conserves sum f_i w_i.
    void push(std::span<double const> f, std::span<double> out) const
    {
        auto w = grid_->widths();
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            double const m = f[i] * w[i];
            if (m == 0.0) continue;
            for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) out[col_[k]] += m * val_[k];
        }
        for (std::size_t j = 0; j < out.size(); ++j) out[j] /= w[j];
    }

    std::vector<double> push(std::span<double const> f) const
    {
        std::vector<double> out(f.size());
        push(f, out);
        return out;
    }

    /// Koopman pull: (K g)_i = sum_j M_ij g_j, the discrete g o T.
    std::vector<double> pull(std::span<double const> g) const
    {
        std::vector<double> out(size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            double s = 0.0;
            for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += val_[k] * g[col_[k]];
            out[i] = s;
        }
        return out;
    }

    /// Dense layout: uint64 N, double alpha, then N*N row-major doubles.
    /// Only uniform grids, since N alone must identify the partition.
    void write_binary(std::filesystem::path const& path) const
    {
        if (!grid_->is_uniform()) throw DomainError("binary Ulam layout supports uniform grids only");
        std::uint64_t const n = size();
        double const alpha = param_.alpha();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + path.string());
        out.write(reinterpret_cast<char const*>(&n), sizeof n);
        out.write(reinterpret_cast<char const*>(&alpha), sizeof alpha);
        std::vector<double> row(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::fill(row.begin(), row.end(), 0.0);
            auto c = row_cols(i);
            auto v = row_values(i);
            for (std::size_t k = 0; k < c.size(); ++k) row[c[k]] = v[k];
            out.write(reinterpret_cast<char const*>(row.data()), static_cast<std::streamsize>(n * sizeof(double)));
        }
        if (!out) throw std::runtime_error("write failed: " + path.string());
    }

    static UlamMatrix read_binary(std::filesystem::path const& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        std::uint64_t n = 0;
        double alpha = 0.0;
        in.read(reinterpret_cast<char*>(&n), sizeof n);
        in.read(reinterpret_cast<char*>(&alpha), sizeof alpha);
        if (!in || n < 2 || n > (1u << 20)) throw NumericalFailure("corrupt Ulam matrix header in " + path.string());
        UlamMatrix m(MapParameter(alpha), Grid::uniform(n), Empty{});
        std::vector<double> row(n);
        m.row_ptr_.push_back(0);
        for (std::size_t i = 0; i < n; ++i) {
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(n * sizeof(double)));
            if (!in) throw NumericalFailure("truncated Ulam matrix file " + path.string());
            for (std::size_t j = 0; j < n; ++j)
                if (row[j] != 0.0) {
                    m.col_.push_back(static_cast<std::uint32_t>(j));
                    m.val_.push_back(row[j]);
                }
            m.row_ptr_.push_back(m.col_.size());
        }
        return m;
    }

private:
    struct Empty {};
    UlamMatrix(MapParameter p, GridPtr grid, Empty) : param_(p), grid_(std::move(grid)) {}

    /// Pieces of [a,b) against the preimage partition `br` (increasing).
    void add_run(std::vector<double> const& br, double a, double b, double w)
    {
        auto j = static_cast<std::size_t>(std::upper_bound(br.begin(), br.end(), a) - br.begin());
        j = j == 0 ? 0 : j - 1;
        std::size_t const last = br.size() - 1;
        for (; j < last && br[j] < b; ++j) {
            double const lo = std::max(a, br[j]);
            double const hi = std::min(b, br[j + 1]);
            if (hi > lo) {
                double const v = (hi - lo) / w;
                if (!col_.empty() && col_.size() > row_ptr_.back() && col_.back() == j) {
                    val_.back() += v;
                } else {
                    col_.push_back(static_cast<std::uint32_t>(j));
                    val_.push_back(v);
                }
            }
        }
    }

    MapParameter param_;
    GridPtr grid_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::uint32_t> col_;
    std::vector<double> val_;
};

using UlamPtr = std::shared_ptr<UlamMatrix const>;

/// Matrices keyed by (alpha rounded to 12 decimals, grid). Concurrent
/// get-or-build; two threads racing on one key both build and the later
/// insert wins, which is harmless because builds are deterministic.
class UlamCache {
public:
    UlamPtr get(MapParameter p, GridPtr const& grid)
    {
        Key const k = key(p, *grid);
        {
            std::shared_lock lock(mutex_);
            if (auto it = store_.find(k); it != store_.end()) return it->second;
        }
        auto m = std::make_shared<UlamMatrix const>(p, grid);
        std::unique_lock lock(mutex_);
        store_[k] = m;
        return m;
    }

    /// Builds the missing matrices for `params` in parallel.
    void prebuild(std::vector<MapParameter> const& params, GridPtr const& grid, std::size_t workers)
    {
        parallel_for(params.size(), workers, [&](std::size_t i) { get(params[i], grid); });
    }

    std::size_t size() const
    {
        std::shared_lock lock(mutex_);
        return store_.size();
    }

private:
    using Key = std::pair<long long, std::string>;
    static Key key(MapParameter p, Grid const& g) { return {std::llround(p.alpha() * 1e12), g.key()}; }

    mutable std::shared_mutex mutex_;
    std::map<Key, UlamPtr> store_;
};

/// The operators P_{beta_1}, ..., P_{beta_n} of a schedule on one grid.
class ScheduleOperators {
public:
    ScheduleOperators(MapSchedule const& s, std::size_t n, GridPtr grid, UlamCache& cache,
                      std::size_t workers = 1)
        : grid_(std::move(grid))
    {
        s.require_length(n);
        cache.prebuild(s.distinct(n), grid_, workers);
        ops_.reserve(n);
        for (std::size_t k = 1; k <= n; ++k) ops_.push_back(cache.get(s.entry(k), grid_));
    }

    std::size_t size() const noexcept { return ops_.size(); }
    /// Operator k (1-based).
    UlamMatrix const& operator[](std::size_t k) const { return *ops_.at(k - 1); }
    GridPtr const& grid_ptr() const noexcept { return grid_; }

private:
    GridPtr grid_;
    std::vector<UlamPtr> ops_;
};

inline GridDensity push_density(UlamMatrix const& m, GridDensity const& f)
{
    require_same_grid(m.grid(), f.grid());
    auto out = m.push(f.values());
    if (f.kind() == GridDensity::Kind::density)
        for (double& v : out) v = std::max(v, 0.0);
    return GridDensity(f.grid_ptr(), std::move(out), f.kind());
}

/// P^n f = P_{beta_n} ... P_{beta_1} f in the Ulam discretization.
inline GridDensity apply_schedule(MapSchedule const& s, GridDensity const& f, std::size_t n, UlamCache& cache)
{
    if (n == 0) return f;
    ScheduleOperators const ops(s, n, f.grid_ptr(), cache);
    std::vector<double> cur(f.values().begin(), f.values().end()), next(cur.size());
    for (std::size_t k = 1; k <= n; ++k) {
        ops[k].push(cur, next);
        cur.swap(next);
    }
    if (f.kind() == GridDensity::Kind::density)
        for (double& v : cur) v = std::max(v, 0.0);
    return GridDensity(f.grid_ptr(), std::move(cur), f.kind());
}

} // namespace pmlab
