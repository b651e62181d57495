#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "pmlab/csv.hpp"
#include "pmlab/errors.hpp"

namespace pmlab {

/// C^1 observable with cached norms |phi|_inf and |phi'|_inf.
class Observable {
public:
    using Fn = std::function<double(double)>;

    Observable(std::string name, Fn value, Fn derivative, double sup_norm, double deriv_sup)
        : name_(std::move(name)), value_(std::move(value)), deriv_(std::move(derivative)),
          sup_(sup_norm), dsup_(deriv_sup)
    {
        if (!(sup_ >= 0.0) || !(dsup_ >= 0.0) || !std::isfinite(sup_) || !std::isfinite(dsup_))
            throw DomainError("observable norms must be finite and nonnegative");
    }

    static Observable constant(double c)
    {
        if (!std::isfinite(c)) throw DomainError("constant observable must be finite");
        return Observable("constant(" + format_number(c) + ")", [c](double) { return c; },
                          [](double) { return 0.0; }, std::abs(c), 0.0);
    }

    static Observable identity()
    {
        return Observable("identity", [](double x) { return x; }, [](double) { return 1.0; }, 1.0, 1.0);
    }

    /// cos(2 pi x).
    static Observable cosine()
    {
        constexpr double tau = 2.0 * std::numbers::pi;
        return Observable(
            "cosine", [](double x) { return std::cos(tau * x); },
            [](double x) { return -tau * std::sin(tau * x); }, 1.0, tau);
    }

    /// sum_k c_k x^k. Norms are rigorous upper bounds: the maximum over a
    /// fine sample plus half a sample spacing times a bound on the next
    /// derivative.
    static Observable polynomial(std::vector<double> coeffs)
    {
        if (coeffs.empty()) throw DomainError("polynomial needs at least one coefficient");
        for (double c : coeffs)
            if (!std::isfinite(c)) throw DomainError("polynomial coefficients must be finite");
        std::vector<double> d1 = derivative_coeffs(coeffs);
        std::vector<double> d2 = derivative_coeffs(d1);
        double const sup = sampled_sup(coeffs) + 0.5 * spacing() * abs_sum(d1);
        double const dsup = sampled_sup(d1) + 0.5 * spacing() * abs_sum(d2);
        std::string name = "polynomial(";
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            if (k) name += ",";
            name += format_number(coeffs[k]);
        }
        name += ")";
        return Observable(
            std::move(name), [coeffs](double x) { return horner(coeffs, x); },
            [d1](double x) { return horner(d1, x); }, sup, dsup);
    }

    /// g o T_beta - g for g(x) = x: an exact coboundary, continuous on the
    /// circle. Its derivative jumps at 1/2; norms are the one-sided bounds.
    static Observable identity_coboundary(double beta)
    {
        if (!(beta > 0.0 && beta < 1.0)) throw DomainError("coboundary parameter must lie in (0,1)");
        double const c = std::exp2(beta);
        return Observable(
            "identity-coboundary(" + format_number(beta) + ")",
            [beta, c](double x) {
                if (x < 0.5) return c * x * std::pow(x, beta);
                if (x > 0.5) return x - 1.0;
                return 0.5;
            },
            [beta, c](double x) { return x <= 0.5 ? c * (1.0 + beta) * std::pow(x, beta) : 1.0; }, 0.5,
            1.0 + beta);
    }

    /// Arbitrary evaluators; norms estimated from a 2^18-point sample with
    /// a 1% margin.
    static Observable from_functions(std::string name, Fn value, Fn derivative)
    {
        double sup = 0.0, dsup = 0.0;
        constexpr std::size_t n = 1u << 18;
        for (std::size_t k = 0; k <= n; ++k) {
            double const x = static_cast<double>(k) / n;
            sup = std::max(sup, std::abs(value(x)));
            dsup = std::max(dsup, std::abs(derivative(x)));
        }
        return Observable(std::move(name), std::move(value), std::move(derivative), 1.01 * sup, 1.01 * dsup);
    }

    /// phi - psi with norms bounded by the triangle inequality.
    static Observable difference(Observable const& a, Observable const& b)
    {
        return Observable(
            a.name() + "-" + b.name(), [f = a.value_, g = b.value_](double x) { return f(x) - g(x); },
            [f = a.deriv_, g = b.deriv_](double x) { return f(x) - g(x); }, a.sup_ + b.sup_,
            a.dsup_ + b.dsup_);
    }

    double operator()(double x) const { return value_(x); }
    double value(double x) const { return value_(x); }
    double derivative(double x) const { return deriv_(x); }
    double sup_norm() const noexcept { return sup_; }
    double deriv_sup() const noexcept { return dsup_; }
    /// |phi|_inf + |phi'|_inf.
    double c1_norm() const noexcept { return sup_ + dsup_; }
    bool is_constant() const noexcept { return dsup_ == 0.0; }
    std::string const& name() const noexcept { return name_; }

private:
    static double horner(std::vector<double> const& c, double x)
    {
        double s = 0.0;
        for (auto it = c.rbegin(); it != c.rend(); ++it) s = s * x + *it;
        return s;
    }
    static std::vector<double> derivative_coeffs(std::vector<double> const& c)
    {
        std::vector<double> d;
        for (std::size_t k = 1; k < c.size(); ++k) d.push_back(static_cast<double>(k) * c[k]);
        if (d.empty()) d.push_back(0.0);
        return d;
    }
    static double abs_sum(std::vector<double> const& c)
    {
        double s = 0.0;
        for (double v : c) s += std::abs(v);
        return s;
    }
    static constexpr double spacing() { return 1.0 / (1u << 16); }
    static double sampled_sup(std::vector<double> const& c)
    {
        double m = 0.0;
        for (std::size_t k = 0; k <= (1u << 16); ++k) m = std::max(m, std::abs(horner(c, k * spacing())));
        return m;
    }

    std::string name_;
    Fn value_;
    Fn deriv_;
    double sup_;
    double dsup_;
};

} // namespace pmlab
