#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pmlab/errors.hpp"
#include "pmlab/rng.hpp"

namespace pmlab {

//---------------------------------------------------------------------------//
// Pomeau-Manneville family
//
//   T(x) = x + 2^a x^(1+a)   on [0, 1/2]
//   T(x) = 2x - 1            on (1/2, 1]
//
// Functions taking a raw `alpha` only require alpha > 0 (the closed-form
// kernels stay meaningful at alpha = 1); MapParameter enforces 0 < alpha < 1.
//---------------------------------------------------------------------------//

namespace detail {

inline void require_unit(double x, char const* what)
{
    if (!std::isfinite(x) || x < 0.0 || x > 1.0)
        throw DomainError(std::string(what) + ": argument " + std::to_string(x) +
                          " outside [0,1]");
}

inline void require_positive_alpha(double alpha)
{
    if (!std::isfinite(alpha) || alpha <= 0.0)
        throw DomainError("alpha must be a positive finite number");
}

} // namespace detail

/// Intermittency exponent of one map, 0 < alpha < 1.
class MapParameter {
public:
    explicit MapParameter(double alpha) : alpha_(alpha), coef_(std::exp2(alpha))
    {
        if (!std::isfinite(alpha) || alpha <= 0.0 || alpha >= 1.0)
            throw DomainError("map parameter alpha=" + std::to_string(alpha) +
                              " violates 0 < alpha < 1 of the map family "
                              "T(x) = x + 2^alpha x^(1+alpha)");
    }

    double alpha() const noexcept { return alpha_; }
    /// 2^alpha, cached for the hot orbit loop.
    double coefficient() const noexcept { return coef_; }

    friend bool operator==(MapParameter const& a, MapParameter const& b) noexcept
    {
        return a.alpha_ == b.alpha_;
    }

private:
    double alpha_;
    double coef_;
};

/// One step without argument checks. `coef` must equal 2^alpha.
inline double step_unchecked(double alpha, double coef, double x) noexcept
{
    if (x < 0.5) return x + coef * x * std::pow(x, alpha);
    if (x > 0.5) return 2.0 * x - 1.0;
    return 1.0;
}

inline double eval_map(double alpha, double x)
{
    detail::require_positive_alpha(alpha);
    detail::require_unit(x, "eval_map");
    return step_unchecked(alpha, std::exp2(alpha), x);
}

inline double eval_map(MapParameter const& p, double x)
{
    detail::require_unit(x, "eval_map");
    return step_unchecked(p.alpha(), p.coefficient(), x);
}

/// T'(x); the left-branch derivative is used at x = 1/2.
inline double eval_derivative(double alpha, double x)
{
    detail::require_positive_alpha(alpha);
    detail::require_unit(x, "eval_derivative");
    if (x <= 0.5) return 1.0 + std::exp2(alpha) * (1.0 + alpha) * std::pow(x, alpha);
    return 2.0;
}

inline double eval_derivative(MapParameter const& p, double x)
{
    detail::require_unit(x, "eval_derivative");
    if (x <= 0.5) return 1.0 + p.coefficient() * (1.0 + p.alpha()) * std::pow(x, p.alpha());
    return 2.0;
}

/// The x in [0, 1/2] with x + 2^alpha x^(1+alpha) = y.
///
/// Newton's method started at y/2 and kept inside a bracket; whenever an
/// iterate leaves the bracket a bisection step is taken instead. The stopping
/// rule is relative, so preimages of tiny y (graded grids reach 1e-16 and
/// below) are resolved to a few ulp rather than to an absolute 1e-14.
inline double left_branch_inverse(double alpha, double y)
{
    detail::require_positive_alpha(alpha);
    detail::require_unit(y, "left_branch_inverse");
    if (y == 0.0) return 0.0;
    if (y == 1.0) return 0.5;
    double const coef = std::exp2(alpha);
    double lo = 0.0;
    double hi = 0.5;
    double x = 0.5 * y;
    for (int it = 0; it < 200; ++it) {
        double const xa = std::pow(x, alpha);
        double const g = x + coef * x * xa - y;
        if (g == 0.0) return x;
        if (g < 0.0)
            lo = x;
        else
            hi = x;
        double const dg = 1.0 + coef * (1.0 + alpha) * xa;
        double next = x - g / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        double const step = std::abs(next - x);
        x = next;
        if (step <= 4.0 * std::numeric_limits<double>::epsilon() * x) break;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
    }
    return x;
}

inline double left_branch_inverse(MapParameter const& p, double y)
{
    return left_branch_inverse(p.alpha(), y);
}

inline double right_branch_inverse(double y)
{
    detail::require_unit(y, "right_branch_inverse");
    return 0.5 * (y + 1.0);
}

//---------------------------------------------------------------------------//
// Schedules
//---------------------------------------------------------------------------//

/// The sequence beta_1, beta_2, ... of a sequential system; entry 1 is
/// applied first. Immutable once built, cheap to copy.
class MapSchedule {
public:
    enum class Kind { constant, perturbed, explicit_list, realization };

    static MapSchedule constant(MapParameter beta)
    {
        MapSchedule s(Constant{beta});
        s.cap_ = beta.alpha();
        return s;
    }

    /// beta_k = center + epsilon * u_k with u_k drawn from `levels` equally
    /// spaced offsets strictly inside (-1, 1) by a counter-based hash of
    /// (seed, k). A finite level set keeps the number of distinct transfer
    /// operators bounded.
    static MapSchedule perturbed(double center, double epsilon, std::uint64_t seed,
                                 std::size_t levels = 16)
    {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            throw DomainError("perturbed schedule: epsilon must be >= 0");
        if (levels == 0) throw DomainError("perturbed schedule: levels must be >= 1");
        if (!(center - epsilon > 0.0) || !(center + epsilon < 1.0))
            throw DomainError("perturbed schedule: (center-eps, center+eps) must lie in (0,1)");
        Perturbed p{center, epsilon, seed, levels, {}};
        for (std::size_t l = 0; l < levels; ++l) {
            double const u = 2.0 * (static_cast<double>(l) + 0.5) / static_cast<double>(levels) - 1.0;
            p.values.emplace_back(center + epsilon * u);
        }
        MapSchedule s(std::move(p));
        double cap = 0.0;
        for (auto const& v : std::get<Perturbed>(s.kind_).values) cap = std::max(cap, v.alpha());
        s.cap_ = cap;
        return s;
    }

    static MapSchedule explicit_list(std::vector<MapParameter> entries)
    {
        if (entries.empty()) throw DomainError("explicit schedule must not be empty");
        double cap = 0.0;
        for (auto const& e : entries) cap = std::max(cap, e.alpha());
        MapSchedule s(Explicit{std::make_shared<std::vector<MapParameter> const>(std::move(entries))});
        s.cap_ = cap;
        return s;
    }

    /// Symbol k (0-based storage, entry k+1) selects maps[symbols[k]].
    static MapSchedule realization(std::vector<MapParameter> maps, std::vector<std::uint16_t> symbols)
    {
        if (maps.empty() || symbols.empty()) throw DomainError("realization needs maps and symbols");
        double cap = 0.0;
        for (auto const& m : maps) cap = std::max(cap, m.alpha());
        for (auto s : symbols)
            if (s >= maps.size()) throw DomainError("realization symbol out of range");
        MapSchedule s(Realization{std::move(maps),
                                  std::make_shared<std::vector<std::uint16_t> const>(std::move(symbols))});
        s.cap_ = cap;
        return s;
    }

    /// Declares a cap alpha_max >= every entry.
    MapSchedule with_cap(double cap) const
    {
        if (!(cap > 0.0 && cap < 1.0)) throw DomainError("schedule cap must lie in (0,1)");
        if (cap < cap_)
            throw DomainError("schedule cap " + std::to_string(cap) +
                              " is below an entry of the schedule (" + std::to_string(cap_) + ")");
        MapSchedule s = *this;
        s.cap_ = cap;
        return s;
    }

    /// Entry k >= 1.
    MapParameter entry(std::size_t k) const
    {
        if (k == 0) throw DomainError("schedule entries are 1-based");
        return std::visit([k](auto const& v) { return v.entry(k); }, kind_);
    }

    /// Number of entries, or nullopt for unbounded generators.
    std::optional<std::size_t> length() const
    {
        return std::visit([](auto const& v) { return v.length(); }, kind_);
    }

    Kind kind() const noexcept { return static_cast<Kind>(kind_.index()); }
    double alpha_max() const noexcept { return cap_; }

    /// Throws if the schedule cannot produce n entries.
    void require_length(std::size_t n) const
    {
        if (auto len = length(); len && *len < n)
            throw DomainError("schedule has " + std::to_string(*len) + " entries, " +
                              std::to_string(n) + " requested");
    }

    /// Distinct parameters among entries 1..n, in first-use order.
    std::vector<MapParameter> distinct(std::size_t n) const
    {
        require_length(n);
        std::vector<MapParameter> out;
        if (auto const* p = std::get_if<Perturbed>(&kind_)) return p->values;
        if (auto const* r = std::get_if<Realization>(&kind_)) return r->maps;
        for (std::size_t k = 1; k <= n; ++k) {
            auto e = entry(k);
            bool seen = false;
            for (auto const& o : out) seen = seen || o == e;
            if (!seen) out.push_back(e);
        }
        return out;
    }

    std::string describe() const
    {
        switch (kind()) {
        case Kind::constant: return "constant";
        case Kind::perturbed: return "perturbed";
        case Kind::explicit_list: return "explicit";
        case Kind::realization: return "random-realization";
        }
        return "unknown";
    }

private:
    struct Constant {
        MapParameter beta;
        MapParameter entry(std::size_t) const { return beta; }
        std::optional<std::size_t> length() const { return std::nullopt; }
    };
    struct Perturbed {
        double center;
        double epsilon;
        std::uint64_t seed;
        std::size_t levels;
        std::vector<MapParameter> values;
        MapParameter entry(std::size_t k) const
        {
            std::uint64_t const h = derive_key(seed, k, StreamTag::schedule_offsets);
            return values[h % levels];
        }
        std::optional<std::size_t> length() const { return std::nullopt; }
    };
    struct Explicit {
        std::shared_ptr<std::vector<MapParameter> const> entries;
        MapParameter entry(std::size_t k) const
        {
            if (k > entries->size())
                throw DomainError("explicit schedule has only " + std::to_string(entries->size()) +
                                  " entries");
            return (*entries)[k - 1];
        }
        std::optional<std::size_t> length() const { return entries->size(); }
    };
    struct Realization {
        std::vector<MapParameter> maps;
        std::shared_ptr<std::vector<std::uint16_t> const> symbols;
        MapParameter entry(std::size_t k) const
        {
            if (k > symbols->size())
                throw DomainError("realization has only " + std::to_string(symbols->size()) +
                                  " entries");
            return maps[(*symbols)[k - 1]];
        }
        std::optional<std::size_t> length() const { return symbols->size(); }
    };

    using Variant = std::variant<Constant, Perturbed, Explicit, Realization>;

    explicit MapSchedule(Variant v) : kind_(std::move(v)) {}

    Variant kind_;
    double cap_ = 0.0;
};

/// Entries 1..n unpacked for tight loops: (alpha_k, 2^alpha_k).
class ScheduleTable {
public:
    ScheduleTable(MapSchedule const& s, std::size_t n)
    {
        s.require_length(n);
        alpha_.reserve(n);
        coef_.reserve(n);
        for (std::size_t k = 1; k <= n; ++k) {
            auto const e = s.entry(k);
            alpha_.push_back(e.alpha());
            coef_.push_back(e.coefficient());
        }
    }

    std::size_t size() const noexcept { return alpha_.size(); }

    /// Applies map k (1-based).
    double step(std::size_t k, double x) const noexcept
    {
        return step_unchecked(alpha_[k - 1], coef_[k - 1], x);
    }

private:
    std::vector<double> alpha_;
    std::vector<double> coef_;
};

/// (x0, T^1 x0, ..., T^n x0) with T^k = T_{beta_k} o ... o T_{beta_1}.
inline std::vector<double> iterate_orbit(MapSchedule const& s, double x0, std::size_t n)
{
    detail::require_unit(x0, "iterate_orbit");
    ScheduleTable const table(s, n);
    std::vector<double> orbit;
    orbit.reserve(n + 1);
    orbit.push_back(x0);
    double x = x0;
    for (std::size_t k = 1; k <= n; ++k) {
        x = table.step(k, x);
        orbit.push_back(x);
    }
    return orbit;
}

} // namespace pmlab
