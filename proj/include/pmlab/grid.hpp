#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pmlab/csv.hpp"
#include "pmlab/errors.hpp"

namespace pmlab {

/// Partition of [0,1] into cells [e_i, e_{i+1}).
///
/// `uniform(N)` gives N equal cells. `graded(N, x_min, ratio)` keeps the
/// uniform cells 1..N-1 but replaces [0, 1/N) by geometric cells shrinking
/// by `ratio` while above x_min, plus one final cell [0, e1] with
/// x_min < e1 <= ratio * x_min. Ulam matrices on
/// a uniform grid truncate the polynomial tail of the dynamics near the
/// neutral fixed point (the escape rate from the first cell is ~N^-alpha),
/// which turns polynomial decay into geometric decay at large n; the graded
/// grid resolves that tail.
class Grid {
public:
    static std::shared_ptr<Grid const> uniform(std::size_t n)
    {
        if (n < 2) throw DomainError("grid needs at least 2 cells");
        std::vector<double> e(n + 1);
        for (std::size_t i = 0; i <= n; ++i) e[i] = static_cast<double>(i) / static_cast<double>(n);
        return std::shared_ptr<Grid const>(new Grid(std::move(e), n, 0.0, 0.0));
    }

    static std::shared_ptr<Grid const> graded(std::size_t n, double x_min, double ratio)
    {
        if (n < 2) throw DomainError("grid needs at least 2 cells");
        double const h = 1.0 / static_cast<double>(n);
        if (!(x_min > 0.0) || !(x_min < h)) throw DomainError("graded grid: need 0 < x_min < 1/N");
        if (!(ratio > 1.0) || !std::isfinite(ratio)) throw DomainError("graded grid: ratio must exceed 1");
        std::vector<double> fine;
        for (double x = h; x > x_min; x /= ratio) fine.push_back(x);
        std::vector<double> e;
        e.reserve(fine.size() + n + 1);
        e.push_back(0.0);
        e.insert(e.end(), fine.rbegin(), fine.rend());
        for (std::size_t i = 2; i <= n; ++i) e.push_back(static_cast<double>(i) / static_cast<double>(n));
        return std::shared_ptr<Grid const>(new Grid(std::move(e), n, x_min, ratio));
    }

    std::size_t size() const noexcept { return edges_.size() - 1; }
    std::span<double const> edges() const noexcept { return edges_; }
    std::span<double const> widths() const noexcept { return widths_; }
    std::span<double const> midpoints() const noexcept { return mids_; }
    double left(std::size_t i) const { return edges_[i]; }
    double right(std::size_t i) const { return edges_[i + 1]; }
    double width(std::size_t i) const { return widths_[i]; }
    double midpoint(std::size_t i) const { return mids_[i]; }

    bool is_uniform() const noexcept { return ratio_ == 0.0; }
    /// Number of uniform cells the grid was built from.
    std::size_t base_cells() const noexcept { return base_; }
    double x_min() const noexcept { return x_min_; }
    double ratio() const noexcept { return ratio_; }

    /// Cell containing x (x = 1 maps to the last cell).
    std::size_t locate(double x) const
    {
        if (x <= 0.0) return 0;
        if (x >= 1.0) return size() - 1;
        if (is_uniform()) {
            auto i = static_cast<std::size_t>(x * static_cast<double>(base_));
            if (i >= size()) i = size() - 1;
            if (edges_[i] > x) --i;
            else if (edges_[i + 1] <= x) ++i;
            return i;
        }
        auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
        return static_cast<std::size_t>(it - edges_.begin()) - 1;
    }

    /// Identity for caches and equality.
    std::string const& key() const noexcept { return key_; }

    std::string describe() const
    {
        if (is_uniform()) return "uniform N=" + std::to_string(base_);
        return "graded N=" + std::to_string(base_) + " x_min=" + format_number(x_min_) +
               " ratio=" + format_number(ratio_) + " cells=" + std::to_string(size());
    }

    friend bool operator==(Grid const& a, Grid const& b) noexcept { return a.key_ == b.key_; }

private:
    Grid(std::vector<double> edges, std::size_t base, double x_min, double ratio)
        : edges_(std::move(edges)), base_(base), x_min_(x_min), ratio_(ratio)
    {
        widths_.resize(size());
        mids_.resize(size());
        for (std::size_t i = 0; i < size(); ++i) {
            widths_[i] = edges_[i + 1] - edges_[i];
            mids_[i] = 0.5 * (edges_[i] + edges_[i + 1]);
        }
        key_ = is_uniform() ? "u" + std::to_string(base_)
                            : "g" + std::to_string(base_) + ":" + format_number(x_min_) + ":" +
                                  format_number(ratio_);
    }

    std::vector<double> edges_;
    std::vector<double> widths_;
    std::vector<double> mids_;
    std::size_t base_;
    double x_min_;
    double ratio_;
    std::string key_;
};

using GridPtr = std::shared_ptr<Grid const>;

inline void require_same_grid(Grid const& a, Grid const& b)
{
    if (!(a == b)) throw GridMismatch("grid mismatch: " + a.describe() + " vs " + b.describe());
}

/// Sum of v_i w_i with Neumaier compensation.
inline double grid_integral(Grid const& g, std::span<double const> v)
{
    auto w = g.widths();
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double const t = v[i] * w[i];
        double const u = s + t;
        c += std::abs(s) >= std::abs(t) ? (s - u) + t : (t - u) + s;
        s = u;
    }
    return s + c;
}

/// Piecewise-constant function on a grid. Values are cell averages (or
/// midpoint samples, which the midpoint quadrature treats the same way).
class GridDensity {
public:
    enum class Kind { density, function };

    GridDensity(GridPtr grid, std::vector<double> values, Kind kind = Kind::function)
        : grid_(std::move(grid)), values_(std::move(values)), kind_(kind)
    {
        if (!grid_) throw DomainError("grid density without grid");
        if (values_.size() != grid_->size())
            throw GridMismatch("value count " + std::to_string(values_.size()) + " != cell count " +
                               std::to_string(grid_->size()));
        for (double v : values_)
            if (!std::isfinite(v)) throw NumericalFailure("grid function has non-finite values");
        if (kind_ == Kind::density) {
            for (double v : values_)
                if (v < 0.0) throw DomainError("density with negative values");
            double const m = integral();
            if (std::abs(m - 1.0) > 1e-10)
                throw DomainError("density integral " + format_number(m) + " differs from 1");
        }
    }

    static GridDensity constant(GridPtr grid, double c, Kind kind = Kind::function)
    {
        std::vector<double> v(grid->size(), c);
        return GridDensity(std::move(grid), std::move(v), kind);
    }

    /// Lebesgue density 1.
    static GridDensity lebesgue(GridPtr grid) { return constant(std::move(grid), 1.0, Kind::density); }

    static GridDensity from_function(GridPtr grid, std::function<double(double)> const& f,
                                     Kind kind = Kind::function)
    {
        std::vector<double> v(grid->size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid->midpoint(i));
        return GridDensity(std::move(grid), std::move(v), kind);
    }

    /// Exact cell averages (F(b) - F(a)) / (b - a) from an antiderivative.
    static GridDensity from_antiderivative(GridPtr grid, std::function<double(double)> const& F,
                                           Kind kind = Kind::function)
    {
        std::vector<double> v(grid->size());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = (F(grid->right(i)) - F(grid->left(i))) / grid->width(i);
        return GridDensity(std::move(grid), std::move(v), kind);
    }

    GridPtr const& grid_ptr() const noexcept { return grid_; }
    Grid const& grid() const noexcept { return *grid_; }
    std::span<double const> values() const noexcept { return values_; }
    std::vector<double> const& vector() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::size_t size() const noexcept { return values_.size(); }
    Kind kind() const noexcept { return kind_; }

    /// Midpoint-rule integral over [0,1].
    double integral() const { return grid_integral(*grid_, values_); }

    double lp_norm(double p) const
    {
        if (!(p >= 1.0)) throw DomainError("L^p norm needs p >= 1");
        auto w = grid_->widths();
        double s = 0.0;
        if (p == 1.0) {
            for (std::size_t i = 0; i < values_.size(); ++i) s += std::abs(values_[i]) * w[i];
            return s;
        }
        for (std::size_t i = 0; i < values_.size(); ++i) s += std::pow(std::abs(values_[i]), p) * w[i];
        return std::pow(s, 1.0 / p);
    }

    GridDensity as(Kind kind) const { return GridDensity(grid_, values_, kind); }

    std::string to_csv() const
    {
        CsvTable t({"midpoint", "value"});
        for (std::size_t i = 0; i < values_.size(); ++i) t.row(grid_->midpoint(i), values_[i]);
        return t.str();
    }

private:
    GridPtr grid_;
    std::vector<double> values_;
    Kind kind_;
};

} // namespace pmlab
