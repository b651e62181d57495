#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pmlab/errors.hpp"
#include "pmlab/rng.hpp"

namespace pmlab {

struct Moments {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
};

/// Two-pass sample moments (skewness/kurtosis use the biased central moments).
inline Moments sample_moments(std::span<double const> x)
{
    Moments m;
    m.count = x.size();
    if (x.empty()) return m;
    double s = 0.0, c = 0.0;
    for (double v : x) {
        double const u = s + v;
        c += std::abs(s) >= std::abs(v) ? (s - u) + v : (v - u) + s;
        s = u;
    }
    double const n = static_cast<double>(x.size());
    m.mean = (s + c) / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        double const d = v - m.mean;
        double const d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.variance = x.size() > 1 ? m2 * n / (n - 1.0) : 0.0;
    if (m2 > 0.0) {
        m.skewness = m3 / std::pow(m2, 1.5);
        m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    }
    return m;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Kolmogorov tail Q(t) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 t^2).
inline double kolmogorov_q(double t)
{
    // 1 - Q(0.2) is below 1e-10, and the series converges slowly there
    if (t < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double const term = std::exp(-2.0 * k * k * t * t);
        s += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sided one-sample KS test against N(0,1). The p-value uses the
/// asymptotic Kolmogorov distribution at t = (sqrt(M) + 0.12 + 0.11/sqrt(M)) D.
inline KsResult ks_test_normal(std::span<double const> sample)
{
    if (sample.empty()) throw DomainError("KS test on an empty sample");
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    double const n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double const F = normal_cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
    }
    double const sn = std::sqrt(n);
    return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    /// Root-mean-square residual (weighted when weights are given).
    double residual = 0.0;
    std::size_t points = 0;
};

/// Least squares y = intercept + slope x, optionally weighted.
inline LinearFit linear_fit(std::span<double const> x, std::span<double const> y, std::span<double const> w = {})
{
    std::size_t const n = x.size();
    if (n < 2 || y.size() != n || (!w.empty() && w.size() != n))
        throw NumericalFailure("linear fit needs at least two matching points");
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double const wi = w.empty() ? 1.0 : w[i];
        sw += wi;
        sx += wi * x[i];
        sy += wi * y[i];
    }
    double const mx = sx / sw, my = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double const wi = w.empty() ? 1.0 : w[i];
        sxx += wi * (x[i] - mx) * (x[i] - mx);
        sxy += wi * (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw NumericalFailure("linear fit with degenerate abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double const wi = w.empty() ? 1.0 : w[i];
        double const e = y[i] - f.intercept - f.slope * x[i];
        r += wi * e * e;
    }
    f.residual = std::sqrt(r / sw);
    f.points = n;
    return f;
}

/// Standard normal draws by Box-Muller on a counter-based stream.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t key) : rng_(key) {}

    double operator()()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do u1 = rng_.uniform();
        while (u1 <= 0.0);
        double const u2 = rng_.uniform();
        double const r = std::sqrt(-2.0 * std::log(u1));
        double const t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    CounterRng rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

struct CltThresholds {
    double p_value = 0.01;
    double skewness = 0.1;
    double excess_kurtosis = 0.2;
};

/// Outcome of a normality test of S_n / sigma_n.
struct StatReport {
    std::size_t sample_size = 0;
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    double ks_statistic = 0.0;
    double ks_p_value = 1.0;
    double sigma = 0.0;
    std::string sigma_source = "empirical";
    bool degenerate = false;
    bool ks_pass = false;
    bool skew_pass = false;
    bool kurtosis_pass = false;
    bool passed = false;
    double runtime_seconds = 0.0;
    std::uint64_t seed = 0;
    CltThresholds thresholds{};
};

/// Normalizes by sigma (empirical sd of the samples unless `sigma_operator`
/// is given), then runs KS against N(0,1) and the moment checks.
inline StatReport self_normed_clt_test(std::span<double const> sn, CltThresholds const& th = {},
                                       double sigma_operator = 0.0)
{
    StatReport r;
    r.thresholds = th;
    r.sample_size = sn.size();
    auto const raw = sample_moments(sn);
    double sigma = std::sqrt(raw.variance);
    if (sigma_operator > 0.0) {
        sigma = sigma_operator;
        r.sigma_source = "operator";
    }
    r.sigma = sigma;
    double const scale = std::max(1.0, std::abs(raw.mean));
    if (!(sigma > 1e-300) || std::sqrt(raw.variance) <= 1e-10 * scale) {
        r.degenerate = true;
        r.mean = raw.mean;
        return r;
    }
    std::vector<double> z(sn.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = sn[i] / sigma;
    auto const m = sample_moments(z);
    auto const ks = ks_test_normal(z);
    r.mean = m.mean;
    r.variance = m.variance;
    r.skewness = m.skewness;
    r.excess_kurtosis = m.excess_kurtosis;
    r.ks_statistic = ks.statistic;
    r.ks_p_value = ks.p_value;
    r.ks_pass = ks.p_value > th.p_value;
    r.skew_pass = std::abs(m.skewness) < th.skewness;
    r.kurtosis_pass = std::abs(m.excess_kurtosis) < th.excess_kurtosis;
    r.passed = r.ks_pass && r.skew_pass && r.kurtosis_pass;
    return r;
}

/// (max - min) / min of positive values.
inline double relative_band(std::span<double const> v)
{
    if (v.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (!(*lo > 0.0)) return std::numeric_limits<double>::infinity();
    return (*hi - *lo) / *lo;
}

} // namespace pmlab
