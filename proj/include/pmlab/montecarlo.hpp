#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pmlab/errors.hpp"
#include "pmlab/maps.hpp"
#include "pmlab/martingale.hpp"
#include "pmlab/observable.hpp"
#include "pmlab/parallel.hpp"
#include "pmlab/rng.hpp"
#include "pmlab/stats.hpp"

namespace pmlab {

struct EnsembleConfig {
    std::size_t samples = 1;
    std::size_t horizon = 1;
    /// Sorted subset of [1, horizon]; empty means {horizon}.
    std::vector<std::size_t> checkpoints;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (samples == 0) throw DomainError("ensemble needs at least one sample");
        if (horizon == 0) throw DomainError("ensemble horizon must be >= 1");
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
            if (checkpoints[i] == 0 || checkpoints[i] > horizon)
                throw DomainError("checkpoint " + std::to_string(checkpoints[i]) + " outside [1, horizon]");
            if (i && checkpoints[i] <= checkpoints[i - 1]) throw DomainError("checkpoints must be strictly increasing");
        }
    }

    std::vector<std::size_t> effective_checkpoints() const
    {
        return checkpoints.empty() ? std::vector<std::size_t>{horizon} : checkpoints;
    }
};

/// Initial point of sample j: uniform on [0,1) from the (seed, j) stream.
inline double initial_point(std::uint64_t seed, std::size_t j)
{
    return CounterRng(derive_key(seed, j, StreamTag::initial_point)).uniform();
}

struct Ensemble {
    std::vector<std::size_t> checkpoints;
    /// values[c][j] = S_{checkpoints[c]} of sample j.
    std::vector<std::vector<double>> values;
};

/// S_k = sum_{i<=k} (phi(T^i x0) - c_i) per sample, recorded at the
/// checkpoints. Samples are independent and written by index, so the output
/// does not depend on `workers`.
inline Ensemble sample_Sn_ensemble(MapSchedule const& s, Observable const& phi, std::span<double const> means,
                                   EnsembleConfig const& cfg, std::size_t workers = 1)
{
    cfg.validate();
    if (means.size() < cfg.horizon)
        throw DomainError("need " + std::to_string(cfg.horizon) + " centering constants, got " +
                          std::to_string(means.size()));
    ScheduleTable const table(s, cfg.horizon);
    Ensemble out;
    out.checkpoints = cfg.effective_checkpoints();
    out.values.assign(out.checkpoints.size(), std::vector<double>(cfg.samples, 0.0));
    parallel_chunks(cfg.samples, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            double x = initial_point(cfg.seed, j);
            double s_sum = 0.0, comp = 0.0;
            std::size_t next_cp = 0;
            for (std::size_t k = 1; k <= cfg.horizon; ++k) {
                x = table.step(k, x);
                double const t = phi(x) - means[k - 1];
                double const u = s_sum + t;
                comp += std::abs(s_sum) >= std::abs(t) ? (s_sum - u) + t : (t - u) + s_sum;
                s_sum = u;
                if (k == out.checkpoints[next_cp]) {
                    out.values[next_cp][j] = s_sum + comp;
                    if (++next_cp == out.checkpoints.size()) break;
                }
            }
        }
    });
    return out;
}

//---------------------------------------------------------------------------//
// Random compositions
//---------------------------------------------------------------------------//

/// i.i.d. choice of one of the maps with probabilities p.
class RandomScheme {
public:
    RandomScheme(std::vector<MapParameter> maps, std::vector<double> probs, std::uint64_t seed)
        : maps_(std::move(maps)), probs_(std::move(probs)), seed_(seed)
    {
        if (maps_.empty()) throw DomainError("random scheme needs at least one map");
        if (maps_.size() != probs_.size()) throw DomainError("one probability per map required");
        if (maps_.size() > 65535) throw DomainError("too many maps");
        double sum = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("probabilities must be >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-15)
            throw DomainError("probability vector sums to " + format_number(sum) + ", not 1");
        cumulative_.resize(probs_.size());
        std::partial_sum(probs_.begin(), probs_.end(), cumulative_.begin());
    }

    std::vector<MapParameter> const& maps() const noexcept { return maps_; }
    std::vector<double> const& probabilities() const noexcept { return probs_; }
    std::uint64_t seed() const noexcept { return seed_; }

    double alpha_max() const
    {
        double m = 0.0;
        for (auto const& a : maps_) m = std::max(m, a.alpha());
        return m;
    }

    RandomScheme with_seed(std::uint64_t seed) const { return RandomScheme(maps_, probs_, seed); }

    /// omega_k, k >= 1; depends on (seed, k) only, so shifting is dropping symbols.
    std::uint16_t symbol(std::size_t k) const
    {
        double const u = CounterRng(derive_key(seed_, 0, StreamTag::omega)).at(k - 1) * 0x1.0p-64;
        for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i)
            if (u < cumulative_[i] && probs_[i] > 0.0) return static_cast<std::uint16_t>(i);
        std::size_t last = cumulative_.size() - 1;
        while (last > 0 && probs_[last] == 0.0) --last;
        return static_cast<std::uint16_t>(last);
    }

    std::vector<std::uint16_t> symbols(std::size_t length, std::size_t offset = 0) const
    {
        std::vector<std::uint16_t> s(length);
        for (std::size_t k = 0; k < length; ++k) s[k] = symbol(offset + k + 1);
        return s;
    }

    /// The schedule of omega_{offset+1}, ..., omega_{offset+length}.
    MapSchedule realization(std::size_t length, std::size_t offset = 0) const
    {
        if (length == 0) throw DomainError("realization length must be >= 1");
        return MapSchedule::realization(maps_, symbols(length, offset));
    }

private:
    std::vector<MapParameter> maps_;
    std::vector<double> probs_;
    std::vector<double> cumulative_;
    std::uint64_t seed_;
};

struct BlockFrequency {
    std::size_t block = 0;
    double observed = 0.0;
    double expected = 0.0;
};

struct QuenchedRealization {
    MapSchedule schedule;
    std::vector<BlockFrequency> blocks;
};

/// Realized schedule plus, per block size m, the frequency of positions
/// starting m consecutive uses of map 1, against p_1^m.
inline QuenchedRealization quenched_realization(RandomScheme const& r, std::size_t length,
                                                std::span<std::size_t const> block_sizes = {})
{
    auto sym = r.symbols(length);
    QuenchedRealization out{MapSchedule::realization(r.maps(), sym), {}};
    for (std::size_t m : block_sizes) {
        if (m == 0 || m > length) throw DomainError("block size must lie in [1, length]");
        std::size_t hits = 0, run = 0;
        for (std::size_t k = 0; k < length; ++k) {
            run = sym[k] == 0 ? run + 1 : 0;
            if (run >= m) ++hits;
        }
        double const positions = static_cast<double>(length - m + 1);
        out.blocks.push_back({m, static_cast<double>(hits) / positions, std::pow(r.probabilities()[0], double(m))});
    }
    return out;
}

//---------------------------------------------------------------------------//
// Strong Borel-Cantelli envelopes
//---------------------------------------------------------------------------//

struct SbcRow {
    std::size_t n = 0;
    /// max over trajectories of D_n / n
    double ratio_b = 0.0;
    /// max over trajectories of D_n / (sqrt(n) (log log n)^1.6)
    double ratio_a = 0.0;
};

inline double sbc_weight(double n) { return std::sqrt(n) * std::pow(std::log(std::log(n)), 1.6); }

/// D_n = |sum_{j<=n} phi(T^j x) - sum_{j<=n} c_j| along `trajectories`
/// uniform initial points, maxima over trajectories at each ladder point.
/// Ladder points must be >= 16 so that log log n > 0.
inline std::vector<SbcRow> sbc_check(MapSchedule const& s, Observable const& phi, std::span<double const> means,
                                     std::span<std::size_t const> ladder, std::size_t trajectories,
                                     std::uint64_t seed, std::size_t workers = 1)
{
    if (ladder.empty() || trajectories == 0) throw DomainError("sbc_check needs a ladder and trajectories");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (ladder[i] < 16) throw DomainError("sbc ladder points must be >= 16");
        if (i && ladder[i] <= ladder[i - 1]) throw DomainError("sbc ladder must be increasing");
    }
    std::size_t const n_max = ladder.back();
    if (means.size() < n_max) throw DomainError("sbc_check: not enough centering constants");
    ScheduleTable const table(s, n_max);
    std::vector<std::vector<double>> D(trajectories, std::vector<double>(ladder.size()));
    parallel_chunks(trajectories, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            double x = CounterRng(derive_key(seed, t, StreamTag::trajectory)).uniform();
            double sum = 0.0, comp = 0.0;
            std::size_t li = 0;
            for (std::size_t k = 1; k <= n_max; ++k) {
                x = table.step(k, x);
                double const v = phi(x) - means[k - 1];
                double const u = sum + v;
                comp += std::abs(sum) >= std::abs(v) ? (sum - u) + v : (v - u) + sum;
                sum = u;
                if (k == ladder[li]) D[t][li++] = std::abs(sum + comp);
            }
        }
    });
    std::vector<SbcRow> rows;
    for (std::size_t li = 0; li < ladder.size(); ++li) {
        double m = 0.0;
        for (auto const& d : D) m = std::max(m, d[li]);
        double const n = static_cast<double>(ladder[li]);
        rows.push_back({ladder[li], m / n, m / sbc_weight(n)});
    }
    return rows;
}

struct SbcGate {
    bool passed = false;
    double statistic = 0.0;
    double reference = 0.0;
    std::string detail;
};

/// Part (a): over ladder points in [lo, hi] the weighted ratio has a
/// nonpositive least-squares trend in log-log and never exceeds its value at lo.
inline SbcGate sbc_part_a_gate(std::span<SbcRow const> rows, std::size_t lo, std::size_t hi)
{
    std::vector<double> lx, ly;
    double at_lo = -1.0, max_ratio = 0.0;
    for (auto const& r : rows) {
        if (r.n < lo || r.n > hi) continue;
        if (r.n == lo) at_lo = r.ratio_a;
        lx.push_back(std::log(double(r.n)));
        ly.push_back(std::log(std::max(r.ratio_a, 1e-300)));
        max_ratio = std::max(max_ratio, r.ratio_a);
    }
    if (at_lo < 0.0 || lx.size() < 3) throw DomainError("sbc part (a) gate: ladder must contain lo and >= 3 points");
    auto const fit = linear_fit(lx, ly);
    SbcGate g;
    g.statistic = fit.slope;
    g.reference = at_lo;
    g.passed = fit.slope <= 0.0 && max_ratio <= at_lo;
    g.detail = "trend slope " + format_number(fit.slope) + ", max ratio " + format_number(max_ratio) +
               " vs ratio at n=" + std::to_string(lo) + " " + format_number(at_lo);
    return g;
}

/// Part (b): D_n / n at `late` below `factor` times its value at `early`.
inline SbcGate sbc_part_b_gate(std::span<SbcRow const> rows, std::size_t early, std::size_t late, double factor)
{
    double e = -1.0, l = -1.0;
    for (auto const& r : rows) {
        if (r.n == early) e = r.ratio_b;
        if (r.n == late) l = r.ratio_b;
    }
    if (e < 0.0 || l < 0.0) throw DomainError("sbc part (b) gate: ladder must contain both reference points");
    SbcGate g;
    g.statistic = e > 0.0 ? l / e : 0.0;
    g.reference = factor;
    g.passed = l <= factor * e;
    g.detail = "ratio at n=" + std::to_string(late) + " is " + format_number(g.statistic) +
               " of its value at n=" + std::to_string(early);
    return g;
}

//---------------------------------------------------------------------------//
// SLLN envelope
//---------------------------------------------------------------------------//

struct SllnResult {
    double eta = 0.0;
    std::vector<std::size_t> ladder;
    /// max over sequences of |S_n| / n^eta at each ladder point
    std::vector<double> ratio;
    bool passed = false;
};

/// S_n = O(n^eta), eta = (gamma + 1)/3 + 0.1, checked on a geometric ladder:
/// the largest ratio over the last decade may not exceed the largest ratio
/// before it. `make_sequence(i)` returns a callable yielding X_1, X_2, ...
template <class Factory>
SllnResult slln_envelope_check(Factory&& make_sequence, std::size_t sequences, std::size_t n_max, double gamma,
                               std::size_t points_per_decade = 4, std::size_t workers = 1)
{
    if (!(gamma >= 0.0) || !(gamma < 2.0)) throw DomainError("SLLN envelope requires 0 <= gamma < 2");
    if (n_max < 100) throw DomainError("SLLN envelope needs n_max >= 100");
    SllnResult r;
    r.eta = (gamma + 1.0) / 3.0 + 0.1;
    double const decades = std::log10(double(n_max));
    std::size_t const steps = static_cast<std::size_t>(std::ceil(decades * double(points_per_decade)));
    for (std::size_t i = 0; i <= steps; ++i) {
        auto n = static_cast<std::size_t>(std::llround(std::pow(10.0, decades * double(i) / double(steps))));
        n = std::min(std::max<std::size_t>(n, 1), n_max);
        if (r.ladder.empty() || n > r.ladder.back()) r.ladder.push_back(n);
    }
    std::vector<std::vector<double>> absS(sequences, std::vector<double>(r.ladder.size()));
    parallel_chunks(sequences, workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t q = b; q < e; ++q) {
            auto next = make_sequence(q);
            double s = 0.0;
            std::size_t li = 0;
            for (std::size_t k = 1; k <= n_max; ++k) {
                s += next();
                if (k == r.ladder[li]) absS[q][li++] = std::abs(s);
            }
        }
    });
    r.ratio.resize(r.ladder.size());
    for (std::size_t li = 0; li < r.ladder.size(); ++li) {
        double m = 0.0;
        for (auto const& a : absS) m = std::max(m, a[li]);
        r.ratio[li] = m / std::pow(double(r.ladder[li]), r.eta);
    }
    double early = 0.0, late = 0.0;
    double const split = double(n_max) / 10.0;
    for (std::size_t li = 0; li < r.ladder.size(); ++li) {
        double& bucket = double(r.ladder[li]) > split ? late : early;
        bucket = std::max(bucket, r.ratio[li]);
    }
    r.passed = late <= early || late == 0.0;
    return r;
}

/// i.i.d. +-1 steps from the (seed, q) stream.
inline auto coin_flip_sequences(std::uint64_t seed)
{
    return [seed](std::size_t q) {
        return [rng = CounterRng(derive_key(seed, q, StreamTag::synthetic))]() mutable {
            return (rng() >> 63) ? 1.0 : -1.0;
        };
    };
}

//---------------------------------------------------------------------------//
// CLT suites
//---------------------------------------------------------------------------//

struct CltRun {
    StatReport report;
    /// empirical Var(S_n) / n
    double variance_per_step = 0.0;
    double mean = 0.0;
    double standard_error = 0.0;
    std::vector<double> samples;
};

/// Means by Ulam transport on `grid`, ensemble of `samples` orbits, KS and
/// moment checks on S_n / sigma_hat.
inline CltRun run_clt(MapSchedule const& s, Observable const& phi, GridPtr const& grid, std::size_t n,
                      std::size_t samples, std::uint64_t seed, CltThresholds const& th, UlamCache& cache,
                      std::size_t workers = 1)
{
    auto const t0 = std::chrono::steady_clock::now();
    auto const means = stream_means(s, phi, grid, n, cache, workers);
    EnsembleConfig cfg{samples, n, {}, seed};
    auto ens = sample_Sn_ensemble(s, phi, means, cfg, workers);
    CltRun out;
    out.samples = std::move(ens.values.back());
    auto const m = sample_moments(out.samples);
    out.mean = m.mean;
    out.variance_per_step = m.variance / double(n);
    out.standard_error = std::sqrt(m.variance / double(samples));
    out.report = self_normed_clt_test(out.samples, th);
    out.report.seed = seed;
    if (phi.is_constant()) {
        out.report.degenerate = true;
        out.report.passed = false;
    }
    out.report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

struct QuenchedOmega {
    std::size_t index = 0;
    std::uint64_t omega_seed = 0;
    std::uint64_t sample_seed = 0;
    StatReport report;
    double variance_per_step = 0.0;
    std::string error;
};

struct QuenchedResult {
    std::vector<QuenchedOmega> omegas;
    std::size_t passes = 0;
    double band = 0.0;
    double min_variance_per_step = 0.0;
    /// KS/moment test of all samples pooled, normalized by the pooled sd.
    StatReport pooled;
    bool pooled_evaluated = false;
};

/// Runs the CLT pipeline on n_omega independent realizations of the scheme.
/// A failure inside one realization is recorded and the suite continues.
inline QuenchedResult quenched_clt_suite(RandomScheme const& r, Observable const& phi, GridPtr const& grid,
                                         std::size_t n, std::size_t samples, std::size_t n_omega,
                                         std::uint64_t seed, CltThresholds const& th, UlamCache& cache,
                                         std::size_t workers = 1)
{
    QuenchedResult out;
    std::vector<double> pooled, per_step;
    bool all_pass = true;
    for (std::size_t w = 0; w < n_omega; ++w) {
        QuenchedOmega q;
        q.index = w;
        q.omega_seed = derive_key(seed, w, StreamTag::omega);
        q.sample_seed = derive_key(seed, w, StreamTag::initial_point);
        try {
            auto const sched = r.with_seed(q.omega_seed).realization(n);
            auto run = run_clt(sched, phi, grid, n, samples, q.sample_seed, th, cache, workers);
            q.report = run.report;
            q.variance_per_step = run.variance_per_step;
            per_step.push_back(run.variance_per_step);
            if (q.report.passed) ++out.passes;
            pooled.insert(pooled.end(), run.samples.begin(), run.samples.end());
        } catch (std::exception const& e) {
            q.error = e.what();
        }
        all_pass = all_pass && q.error.empty() && q.report.passed;
        out.omegas.push_back(std::move(q));
    }
    out.band = relative_band(per_step);
    out.min_variance_per_step = per_step.empty() ? 0.0 : *std::min_element(per_step.begin(), per_step.end());
    if (all_pass && !pooled.empty()) {
        out.pooled = self_normed_clt_test(pooled, th);
        out.pooled_evaluated = true;
    }
    return out;
}

} // namespace pmlab
