#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pmlab/config.hpp"
#include "pmlab/csv.hpp"
#include "pmlab/experiments.hpp"
#include "pmlab/martingale.hpp"
#include "pmlab/montecarlo.hpp"
#include "pmlab/parallel.hpp"

#ifndef PMLAB_VERSION
#define PMLAB_VERSION "0.0.0"
#endif

namespace pmlab {

enum ExitCode : int { exit_ok = 0, exit_gate_failed = 1, exit_config_error = 2, exit_numerical_failure = 3 };

struct Gate {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct RunOptions {
    std::size_t workers = default_workers();
    std::optional<std::filesystem::path> output_dir;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::size_t> grid_override;
    bool quiet = true;
};

struct RunResult {
    int exit_code = exit_ok;
    std::vector<Gate> gates;
    bool degenerate = false;
    std::vector<std::string> warnings;
    std::string error;
    std::filesystem::path output_dir;
    std::vector<std::string> files;
    Json results;
    double wall_seconds = 0.0;

    Gate const* first_failed() const
    {
        for (auto const& g : gates)
            if (!g.passed) return &g;
        return nullptr;
    }
};

namespace detail {

/// What one pipeline produces before anything touches the disk.
struct Report {
    std::vector<Gate> gates;
    bool degenerate = false;
    std::vector<std::string> warnings;
    Json results = Json::object();
    std::map<std::string, std::string> files;
    Json seeds = Json::object();
};

inline Gate gate_le(std::string name, double value, double threshold, std::string detail = {})
{
    if (detail.empty()) detail = format_number(value) + " <= " + format_number(threshold);
    return {std::move(name), value <= threshold, value, threshold, std::move(detail)};
}

inline Gate gate_ge(std::string name, double value, double threshold, std::string detail = {})
{
    if (detail.empty()) detail = format_number(value) + " >= " + format_number(threshold);
    return {std::move(name), value >= threshold, value, threshold, std::move(detail)};
}

inline Gate degenerate_gate(std::string name)
{
    return {std::move(name), true, 0.0, 0.0, "degenerate input, gate not applicable"};
}

inline Json to_json(StatReport const& r)
{
    return Json{{"sample_size", r.sample_size}, {"mean", r.mean}, {"variance", r.variance},
                {"skewness", r.skewness}, {"excess_kurtosis", r.excess_kurtosis},
                {"ks_statistic", r.ks_statistic}, {"ks_p_value", r.ks_p_value}, {"sigma", r.sigma},
                {"sigma_source", r.sigma_source}, {"degenerate", r.degenerate}, {"ks_pass", r.ks_pass},
                {"skew_pass", r.skew_pass}, {"kurtosis_pass", r.kurtosis_pass}, {"passed", r.passed},
                {"seed", r.seed}};
}

inline Json to_json(RateFit const& f)
{
    return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"window", {f.window_lo, f.window_hi}},
                {"residual", f.residual}, {"points", f.points}, {"log_corrected", f.log_corrected}};
}

/// Empirical CDF of z = samples / sigma against Phi, thinned to <= 2000 rows.
inline std::string ecdf_table(std::span<double const> samples, double sigma)
{
    std::vector<double> z(samples.begin(), samples.end());
    for (double& v : z) v /= sigma;
    std::sort(z.begin(), z.end());
    CsvTable t({"z", "empirical_cdf", "normal_cdf"});
    std::size_t const step = std::max<std::size_t>(1, z.size() / 2000);
    for (std::size_t i = step - 1; i < z.size(); i += step)
        t.row(z[i], double(i + 1) / double(z.size()), normal_cdf(z[i]));
    return t.str();
}

inline bool all_zero(std::span<double const> v, double floor = 0.0)
{
    return std::all_of(v.begin(), v.end(), [floor](double x) { return std::abs(x) <= floor; });
}

//---------------------------------------------------------------------------//

inline Report run_decay(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& d = cfg.decay;
    auto const grid = cfg.grid.make();
    auto const ladder = d.ladder.make();
    auto const sched = cfg.schedule.make(cfg.seed, ladder.back());
    r.seeds["schedule_offsets"] = derive_key(cfg.seed, 0, StreamTag::schedule_offsets);

    DecayCurve curve, l1;
    double K = 0.0;
    if (d.inputs == "cone-pair") {
        auto const [f, g] = cone_pair(grid, cfg.cone.alpha);
        LossOfMemoryOptions opt;
        opt.cone = cfg.cone;
        opt.workers = workers;
        curve = loss_of_memory_curve(sched, f, g, d.p, ladder, cache, opt);
        if (d.p > 1.0) l1 = loss_of_memory_curve(sched, f, g, 1.0, ladder, cache, {});
        K = cfg.cone.a * (f.integral() + g.integral());
    } else {
        auto const a = d.first.make(), b = d.second.make();
        auto const fa = GridDensity::from_function(grid, [&](double x) { return a(x); });
        auto const fb = GridDensity::from_function(grid, [&](double x) { return b(x); });
        bool const same = std::equal(fa.values().begin(), fa.values().end(), fb.values().begin());
        if (same) {
            curve.n = ladder;
            curve.norm.assign(ladder.size(), 0.0);
            curve.p = d.p;
        } else {
            curve = loss_of_memory_curve(sched, a, b, grid, d.p, ladder, cache, cfg.cone, workers);
        }
    }

    double const floor = 10.0 * std::numeric_limits<double>::epsilon() * double(grid->size());
    r.degenerate = all_zero(curve.norm, floor);
    CsvTable t = d.p > 1.0 && !l1.n.empty() ? CsvTable({"n", "norm", "l1_norm", "interpolation_bound"})
                                             : CsvTable({"n", "norm"});
    std::vector<double> bound;
    if (!l1.n.empty()) bound = lp_bound_curve(l1, K, cfg.cone.alpha, d.p);
    for (std::size_t i = 0; i < curve.n.size(); ++i) {
        if (bound.empty()) t.row(curve.n[i], curve.norm[i]);
        else t.row(curve.n[i], curve.norm[i], l1.norm[i], bound[i]);
    }
    r.files["decay.csv"] = t.str();

    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < curve.n.size(); ++i)
        if (curve.norm[i] > 0.0) {
            lx.push_back(std::log(double(curve.n[i])));
            ly.push_back(std::log(curve.norm[i]));
        }
    r.files["decay_loglog.dat"] = plot_data(lx, ly);

    r.results["schedule"] = sched.describe();
    r.results["p"] = d.p;
    r.results["inputs"] = d.inputs;
    if (r.degenerate) {
        r.gates.push_back(degenerate_gate("slope_in_range"));
        return r;
    }
    auto const fit = fit_decay_rate(curve, d.fit_lo, d.fit_hi, d.log_correction, cfg.schedule.alpha_max(), grid->size());
    r.results["fit"] = to_json(fit);
    Gate g{"slope_in_range", fit.slope >= d.slope_min && fit.slope <= d.slope_max, fit.slope, d.slope_max,
           "fitted slope " + format_number(fit.slope) + " vs [" + format_number(d.slope_min) + ", " +
               format_number(d.slope_max) + "]"};
    r.gates.push_back(g);
    if (!bound.empty()) {
        double worst = 0.0;
        for (std::size_t i = 0; i < bound.size(); ++i)
            if (bound[i] > 0.0) worst = std::max(worst, curve.norm[i] / bound[i]);
        r.results["interpolation_constant"] = K;
        r.gates.push_back(gate_le("lp_within_interpolation_bound", worst, 1.0 + 1e-9,
                                  "max of L^p norm / bound(L^1 norm) = " + format_number(worst)));
    }
    return r;
}

inline Report run_composite(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& c = cfg.composite;
    auto const grid = cfg.grid.make();
    auto const ladder = c.ladder.make();
    auto const sched = cfg.schedule.make(cfg.seed, c.i + ladder.back() + 1);
    double const alpha = c.alpha.value_or(cfg.schedule.alpha_max());
    MartingaleOptions mo;
    mo.workers = workers;
    MartingaleState st(sched, cfg.observable.make(), grid, c.i, cache, mo);
    auto const out = composite_decay_check(st, c.i, ladder, c.p, alpha, cache);
    r.files["composite_decay.csv"] = out.curve.to_csv();
    r.results["schedule"] = sched.describe();
    r.results["constant"] = out.constant;
    double const floor = 10.0 * std::numeric_limits<double>::epsilon() * double(grid->size());
    r.degenerate = out.degenerate || all_zero(out.curve.norm, floor);
    if (r.degenerate) {
        r.gates.push_back(degenerate_gate("slope_at_most"));
        return r;
    }
    auto const fit = fit_decay_rate(out.curve, c.fit_lo, c.fit_hi, false, 0.0, grid->size());
    r.results["fit"] = to_json(fit);
    r.gates.push_back(gate_le("slope_at_most", fit.slope, c.max_slope,
                              "fitted slope " + format_number(fit.slope)));
    return r;
}

inline Report run_martingale(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& m = cfg.martingale;
    auto const grid = cfg.grid.make();
    std::size_t const h = std::max(m.horizon, m.hn_horizon);
    auto const sched = cfg.schedule.make(cfg.seed, h + 2);
    auto const phi = cfg.observable.make();
    MartingaleOptions mo;
    mo.workers = workers;
    MartingaleState st(sched, phi, grid, h, cache, mo);
    r.degenerate = phi.is_constant();

    CsvTable t({"n", "residual", "sigma_sq_direct", "sigma_sq_identity_c", "sigma_sq_identity_e"});
    double worst_res = 0.0, worst_rel = 0.0;
    for (std::size_t n = 1; n <= m.horizon; ++n) {
        double const res = martingale_residual(st, n);
        double const a = sigma_sq_direct(st, n), b = sigma_sq_identity_c(st, n), e = sigma_sq_identity_e(st, n);
        double const scale = std::max({std::abs(a), std::abs(b), std::abs(e)});
        double const rel = scale > 0.0 ? std::max({std::abs(a - b), std::abs(a - e), std::abs(b - e)}) / scale : 0.0;
        worst_res = std::max(worst_res, res);
        if (scale > 1e-300) worst_rel = std::max(worst_rel, rel);
        t.row(n, res, a, b, e);
    }
    r.files["identities.csv"] = t.str();
    r.files["martingale_table.csv"] = martingale_table_csv(st, sched.alpha_max());
    r.results["schedule"] = sched.describe();
    r.results["max_residual"] = worst_res;
    r.results["max_variance_rel_diff"] = worst_rel;
    r.gates.push_back(gate_le("martingale_residual", worst_res, m.residual_tol));
    if (r.degenerate) r.gates.push_back(degenerate_gate("variance_identities"));
    else r.gates.push_back(gate_le("variance_identities", worst_rel, m.variance_rel_tol));

    if (m.hn_horizon >= 2) {
        std::vector<std::size_t> ns;
        for (std::size_t n = 1; n <= m.hn_horizon; ++n) ns.push_back(n);
        auto const stat = hn_pointwise_stat(st, ns, sched.alpha_max());
        std::size_t const half = m.hn_horizon / 2;
        double const early = *std::max_element(stat.begin(), stat.begin() + half);
        double const late = *std::max_element(stat.begin() + half, stat.end());
        auto const norms = hn_lq_norms(st, ns, m.q, m.q);
        CsvTable ht({"n", "weighted_sup", "hn_lq", "hn_composed_lq"});
        for (std::size_t i = 0; i < ns.size(); ++i) ht.row(ns[i], stat[i], norms[i].lq, norms[i].composed_lr);
        r.files["hn_bounds.csv"] = ht.str();
        r.results["hn_early_max"] = early;
        r.results["hn_late_max"] = late;
        if (early <= 0.0) {
            r.degenerate = true;
            r.gates.push_back(degenerate_gate("hn_pointwise_ratio"));
        } else {
            r.gates.push_back(gate_le("hn_pointwise_ratio", late / early, m.hn_ratio_max,
                                      "late/early window max of x^(alpha+1)|H_n| = " + format_number(late / early)));
        }
    }
    return r;
}

inline Report run_scan(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& v = cfg.scan;
    auto const grid = cfg.grid.make();
    auto const phi = cfg.observable.make();
    ScanSettings s;
    s.center = v.center;
    s.epsilon = v.epsilon;
    s.levels = v.levels;
    s.schedules = v.schedules;
    s.ladder = v.ladder;
    s.fit_lo = v.fit_lo;
    s.band_lo = v.band_lo;
    s.band_hi = v.band_hi;
    s.cap = v.cap;
    s.seed = cfg.seed;
    s.workers = workers;
    auto const res = variance_growth_scan(s, phi, grid, cache);
    r.files["variance_scan.csv"] = res.to_csv();
    CsvTable st({"schedule", "seed", "exponent", "band", "tail_estimate"});
    Json seeds = Json::array();
    for (std::size_t i = 0; i < res.schedules.size(); ++i) {
        auto const& row = res.schedules[i];
        st.row(i, row.seed, row.exponent, row.band, row.tail_estimate);
        seeds.push_back(row.seed);
    }
    r.seeds["schedules"] = seeds;
    r.files["variance_scan_fits.csv"] = st.str();

    auto const gk = green_kubo_variance(MapParameter(v.center), phi, grid, cache, v.k_max);
    ScanSettings s0 = s;
    s0.epsilon = 0.0;
    s0.schedules = 1;
    auto const r0 = variance_growth_scan(s0, phi, grid, cache);
    double const n_max = double(v.ladder.back());
    double const per_step = r0.schedules[0].sigma_sq.back() / n_max;
    double const rel = gk.sigma_sq != 0.0 ? std::abs(per_step / gk.sigma_sq - 1.0) : 0.0;
    CsvTable ct({"green_kubo_sigma_sq", "tail", "discretization", "terms", "direct_sigma_sq_per_step", "rel_diff"});
    ct.row(gk.sigma_sq, gk.tail, gk.discretization, gk.terms, per_step, rel);
    r.files["cross_check.csv"] = ct.str();

    r.results["exponent_min"] = res.min_exponent;
    r.results["exponent_median"] = res.median_exponent;
    r.results["exponent_max"] = res.max_exponent;
    r.results["max_band"] = res.max_band;
    r.results["green_kubo"] = Json{{"sigma_sq", gk.sigma_sq}, {"verdict", gk.verdict}, {"tail", gk.tail},
                                   {"discretization", gk.discretization}};
    r.results["epsilon_zero_sigma_sq_per_step"] = per_step;
    if (gk.verdict != "not a coboundary")
        r.warnings.push_back("coboundary detector at the scan center: " + gk.verdict);
    r.degenerate = res.degenerate;
    if (r.degenerate) {
        for (auto const* n : {"exponent_range", "band", "green_kubo_cross_check"}) r.gates.push_back(degenerate_gate(n));
        return r;
    }
    r.gates.push_back(Gate{"exponent_range", res.min_exponent >= v.exponent_min && res.max_exponent <= v.exponent_max,
                           res.max_exponent, v.exponent_max,
                           "fitted exponents in [" + format_number(res.min_exponent) + ", " +
                               format_number(res.max_exponent) + "] vs [" + format_number(v.exponent_min) + ", " +
                               format_number(v.exponent_max) + "]"});
    r.gates.push_back(Gate{"band", res.max_band < v.band_max, res.max_band, v.band_max,
                           "max relative band of sigma_n^2/n " + format_number(res.max_band)});
    r.gates.push_back(Gate{"green_kubo_cross_check", rel < v.cross_check_tol, rel, v.cross_check_tol,
                           "epsilon=0 sigma_n^2/n vs Green-Kubo relative difference " + format_number(rel)});
    return r;
}

inline Report run_green_kubo(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& g = cfg.green_kubo;
    auto const grid = cfg.grid.make();
    auto const phi = cfg.observable.make();
    auto const gk = green_kubo_variance(MapParameter(g.alpha), phi, grid, cache, g.k_max, g.tol);
    r.results["sigma_sq"] = gk.sigma_sq;
    r.results["tail"] = gk.tail;
    r.results["discretization"] = gk.discretization;
    r.results["terms"] = gk.terms;
    r.results["converged"] = gk.converged;
    r.results["verdict"] = gk.verdict;
    r.degenerate = phi.is_constant();
    CsvTable t({"alpha", "sigma_sq", "tail", "discretization", "terms", "converged"});
    t.row(g.alpha, gk.sigma_sq, gk.tail, gk.discretization, gk.terms, gk.converged ? 1 : 0);
    r.files["green_kubo.csv"] = t.str();
    if (gk.verdict != "not a coboundary") r.warnings.push_back("coboundary detector: " + gk.verdict);
    r.gates.push_back(Gate{"series_converged", gk.converged, double(gk.terms), double(g.k_max), gk.verdict});
    if (g.mc_orbits > 0) {
        auto const sched = MapSchedule::constant(MapParameter(g.alpha));
        auto const means = stream_means(sched, phi, grid, g.mc_horizon, cache, workers);
        EnsembleConfig ec{g.mc_orbits, g.mc_horizon, {}, cfg.seed};
        auto const ens = sample_Sn_ensemble(sched, phi, means, ec, workers);
        auto const mom = sample_moments(ens.values.back());
        double const per_step = mom.variance / double(g.mc_horizon);
        double const rel = gk.sigma_sq != 0.0 ? std::abs(per_step / gk.sigma_sq - 1.0) : 0.0;
        r.results["monte_carlo_sigma_sq"] = per_step;
        CsvTable mt({"orbits", "horizon", "variance_per_step", "rel_diff"});
        mt.row(g.mc_orbits, g.mc_horizon, per_step, rel);
        r.files["monte_carlo.csv"] = mt.str();
        if (r.degenerate) r.gates.push_back(degenerate_gate("monte_carlo_agreement"));
        else r.gates.push_back(gate_le("monte_carlo_agreement", rel, g.mc_rel_tol));
    }
    return r;
}

inline Report run_clt_kind(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& e = cfg.ensemble;
    auto const grid = cfg.grid.make();
    auto const phi = cfg.observable.make();
    r.degenerate = phi.is_constant();
    CsvTable t({"repetition", "master_seed", "n", "ks_statistic", "ks_p_value", "skewness", "excess_kurtosis",
                "variance_per_step", "mean", "passed"});
    Json reps = Json::array(), masters = Json::array();
    std::size_t passes = 0;
    std::vector<std::pair<std::size_t, std::vector<double>>> dumped;
    for (std::size_t rep = 0; rep < cfg.clt.repetitions; ++rep) {
        std::uint64_t const master = cfg.seed + rep;
        masters.push_back(master);
        auto const sched = cfg.schedule.make(master, e.horizon);
        auto const means = stream_means(sched, phi, grid, e.horizon, cache, workers);
        EnsembleConfig ec{e.samples, e.horizon, e.checkpoints, master};
        auto ens = sample_Sn_ensemble(sched, phi, means, ec, workers);
        Json cps = Json::array();
        StatReport last;
        for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) {
            auto rep_report = self_normed_clt_test(ens.values[c], cfg.thresholds);
            rep_report.seed = master;
            if (phi.is_constant()) rep_report.degenerate = true;
            auto const mom = sample_moments(ens.values[c]);
            std::size_t const n = ens.checkpoints[c];
            t.row(rep, master, n, rep_report.ks_statistic, rep_report.ks_p_value, rep_report.skewness,
                  rep_report.excess_kurtosis, mom.variance / double(n), mom.mean, rep_report.passed ? 1 : 0);
            cps.push_back(Json{{"n", n}, {"report", to_json(rep_report)}});
            last = rep_report;
        }
        if (last.passed) ++passes;
        if (!last.degenerate)
            r.files["ecdf_rep" + std::to_string(rep) + ".csv"] = ecdf_table(ens.values.back(), last.sigma);
        if (e.write_samples) {
            if (e.samples * ens.checkpoints.size() <= 10'000'000) {
                std::vector<std::string> header{"sample"};
                for (auto n : ens.checkpoints) header.push_back("S_" + std::to_string(n));
                CsvTable st(header);
                std::vector<double> row(header.size());
                for (std::size_t j = 0; j < e.samples; ++j) {
                    row[0] = double(j);
                    for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) row[c + 1] = ens.values[c][j];
                    st.row_values(row);
                }
                r.files["samples_rep" + std::to_string(rep) + ".csv"] = st.str();
            } else {
                r.warnings.push_back("raw samples not written: more than 1e7 values");
            }
        }
        reps.push_back(Json{{"master_seed", master}, {"schedule", sched.describe()}, {"checkpoints", cps}});
    }
    r.seeds["repetition_master_seeds"] = masters;
    r.files["clt.csv"] = t.str();
    r.results["repetitions"] = reps;
    r.results["passes"] = passes;
    if (r.degenerate) r.gates.push_back(degenerate_gate("clt_passes"));
    else
        r.gates.push_back(gate_ge("clt_passes", double(passes), double(cfg.clt.min_pass),
                                  std::to_string(passes) + "/" + std::to_string(cfg.clt.repetitions) +
                                      " repetitions pass KS and moment checks"));
    return r;
}

inline Report run_quenched(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& e = cfg.ensemble;
    auto const& q = cfg.quenched;
    auto const grid = cfg.grid.make();
    auto const phi = cfg.observable.make();
    auto const scheme = cfg.schedule.scheme(cfg.seed);
    auto const res = quenched_clt_suite(scheme, phi, grid, e.horizon, e.samples, q.realizations, cfg.seed,
                                        cfg.thresholds, cache, workers);
    r.degenerate = phi.is_constant();
    CsvTable t({"omega", "omega_seed", "sample_seed", "ks_statistic", "ks_p_value", "skewness", "excess_kurtosis",
                "variance_per_step", "passed"});
    CsvTable bt({"omega", "block", "observed", "expected"});
    Json omegas = Json::array(), seeds = Json::array();
    for (auto const& w : res.omegas) {
        t.row(w.index, w.omega_seed, w.sample_seed, w.report.ks_statistic, w.report.ks_p_value, w.report.skewness,
              w.report.excess_kurtosis, w.variance_per_step, w.report.passed ? 1 : 0);
        for (auto const& b : quenched_realization(scheme.with_seed(w.omega_seed), e.horizon, q.block_sizes).blocks)
            bt.row(w.index, b.block, b.observed, b.expected);
        Json j{{"index", w.index}, {"omega_seed", w.omega_seed}, {"sample_seed", w.sample_seed},
               {"report", to_json(w.report)}, {"variance_per_step", w.variance_per_step}};
        if (!w.error.empty()) {
            j["error"] = w.error;
            r.warnings.push_back("realization " + std::to_string(w.index) + " failed: " + w.error);
        }
        omegas.push_back(j);
        seeds.push_back(Json{{"omega", w.omega_seed}, {"samples", w.sample_seed}});
    }
    r.seeds["realizations"] = seeds;
    r.files["quenched.csv"] = t.str();
    r.files["block_frequencies.csv"] = bt.str();
    r.results["omegas"] = omegas;
    r.results["passes"] = res.passes;
    r.results["band"] = res.band;
    r.results["min_variance_per_step"] = res.min_variance_per_step;
    if (res.pooled_evaluated) r.results["pooled"] = to_json(res.pooled);
    if (r.degenerate) {
        for (auto const* n : {"quenched_passes", "variance_band", "variance_lower_bound"})
            r.gates.push_back(degenerate_gate(n));
        return r;
    }
    r.gates.push_back(gate_ge("quenched_passes", double(res.passes), double(q.min_pass),
                              std::to_string(res.passes) + "/" + std::to_string(q.realizations) + " realizations pass"));
    r.gates.push_back(Gate{"variance_band", res.band < q.band_max, res.band, q.band_max,
                           "relative band of sigma_n^2(omega)/n " + format_number(res.band)});
    r.gates.push_back(Gate{"variance_lower_bound", res.min_variance_per_step > 0.0, res.min_variance_per_step, 0.0,
                           "min over omega of sigma_n^2/n"});
    return r;
}

inline std::vector<std::size_t> sbc_ladder(SbcSpec const& b)
{
    if (!b.ladder.empty()) return b.ladder;
    std::vector<std::size_t> out;
    double const lo = std::log10(double(b.n_min)), hi = std::log10(double(b.n_max));
    std::size_t const steps = std::max<std::size_t>(1, std::size_t(std::ceil((hi - lo) * double(b.per_decade) - 1e-9)));
    for (std::size_t i = 0; i <= steps; ++i) {
        auto n = std::size_t(std::llround(std::pow(10.0, lo + (hi - lo) * double(i) / double(steps))));
        if (out.empty() || n > out.back()) out.push_back(n);
    }
    auto add = [&](std::size_t n) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    };
    add(b.window_lo);
    std::sort(out.begin(), out.end());
    return out;
}

inline Report run_sbc(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    Report r;
    auto const& b = cfg.sbc;
    auto const grid = cfg.grid.make();
    auto const phi = cfg.observable.make();
    auto const ladder = sbc_ladder(b);
    auto const sched = cfg.schedule.make(cfg.seed, ladder.back());
    auto const means = stream_means(sched, phi, grid, ladder.back(), cache, workers);
    auto const rows = sbc_check(sched, phi, means, ladder, b.trajectories, cfg.seed, workers);
    CsvTable t({"n", "ratio_b", "ratio_a"});
    for (auto const& row : rows) t.row(row.n, row.ratio_b, row.ratio_a);
    r.files["sbc.csv"] = t.str();
    r.seeds["trajectories"] = "derive_key(seed, t, trajectory)";
    r.results["schedule"] = sched.describe();
    r.degenerate = phi.is_constant();
    if (r.degenerate) {
        r.gates.push_back(degenerate_gate(b.part == "a" ? "sbc_part_a" : "sbc_part_b"));
        return r;
    }
    auto const g = b.part == "a" ? sbc_part_a_gate(rows, b.window_lo, ladder.back())
                                 : sbc_part_b_gate(rows, ladder.front(), ladder.back(), b.factor);
    r.gates.push_back(Gate{b.part == "a" ? "sbc_part_a" : "sbc_part_b", g.passed, g.statistic,
                           b.part == "a" ? 0.0 : b.factor, g.detail});
    return r;
}

inline Report run_slln(ExperimentConfig const& cfg, std::size_t workers)
{
    Report r;
    auto const& l = cfg.slln;
    SllnResult res;
    if (l.sequence == "coin") {
        res = slln_envelope_check(coin_flip_sequences(cfg.seed), l.sequences, l.n_max, l.gamma, l.points_per_decade,
                                  workers);
    } else if (l.sequence == "alternating") {
        auto f = [](std::size_t) { return [s = 1.0]() mutable { return s = -s; }; };
        res = slln_envelope_check(f, l.sequences, l.n_max, l.gamma, l.points_per_decade, workers);
    } else {
        auto f = [](std::size_t) { return [] { return 0.0; }; };
        res = slln_envelope_check(f, l.sequences, l.n_max, l.gamma, l.points_per_decade, workers);
        r.degenerate = true;
    }
    CsvTable t({"n", "ratio"});
    for (std::size_t i = 0; i < res.ladder.size(); ++i) t.row(res.ladder[i], res.ratio[i]);
    r.files["slln.csv"] = t.str();
    r.results["eta"] = res.eta;
    r.gates.push_back(Gate{"slln_envelope", res.passed, res.eta, 0.0,
                           "max |S_n|/n^eta over the last decade vs before it, eta=" + format_number(res.eta)});
    return r;
}

inline Report dispatch(ExperimentConfig const& cfg, UlamCache& cache, std::size_t workers)
{
    std::string const& k = cfg.experiment;
    if (k == "decay" || k == "lp-decay") return run_decay(cfg, cache, workers);
    if (k == "composite-decay") return run_composite(cfg, cache, workers);
    if (k == "martingale-identities") return run_martingale(cfg, cache, workers);
    if (k == "variance-scan") return run_scan(cfg, cache, workers);
    if (k == "green-kubo") return run_green_kubo(cfg, cache, workers);
    if (k == "clt") return run_clt_kind(cfg, cache, workers);
    if (k == "quenched-clt") return run_quenched(cfg, cache, workers);
    if (k == "sbc") return run_sbc(cfg, cache, workers);
    if (k == "slln") return run_slln(cfg, workers);
    throw ConfigError("unknown experiment '" + k + "'");
}

inline std::string compiler_id()
{
#if defined(__clang__)
    return "clang " __clang_version__;
#elif defined(__GNUC__)
    return "gcc " __VERSION__;
#else
    return "unknown";
#endif
}

inline std::string utc_timestamp()
{
    auto const t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace detail

/// Applies command-line overrides; the manifest echoes the result.
inline void apply_overrides(ExperimentConfig& cfg, RunOptions const& opt)
{
    if (opt.seed_override) cfg.seed = *opt.seed_override;
    if (opt.grid_override) {
        if (*opt.grid_override < 2) throw ConfigError("--grid-override must be >= 2");
        cfg.grid.cells = *opt.grid_override;
    }
}

inline std::filesystem::path resolve_output_dir(ExperimentConfig const& cfg, RunOptions const& opt)
{
    if (opt.output_dir) return *opt.output_dir;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    std::filesystem::path root = "pmlab-output";
    if (char const* env = std::getenv("PMLAB_OUTPUT_ROOT"); env && *env) root = env;
    std::string stem = cfg.experiment;
    if (!cfg.source.empty()) {
        auto s = std::filesystem::path(cfg.source).stem().string();
        if (s != "manifest") stem = s;
    }
    return root / stem;
}

/// Runs a parsed config, writes CSVs, plot data and manifest.json.
inline RunResult run_experiment(ExperimentConfig cfg, RunOptions const& opt = {})
{
    auto const t0 = std::chrono::steady_clock::now();
    RunResult out;
    apply_overrides(cfg, opt);
    out.output_dir = resolve_output_dir(cfg, opt);
    out.warnings = cfg.warnings;
    std::size_t const workers = std::max<std::size_t>(1, opt.workers);

    detail::Report rep;
    try {
        UlamCache cache;
        rep = detail::dispatch(cfg, cache, workers);
    } catch (ConfigError const& e) {
        out.exit_code = exit_config_error;
        out.error = e.what();
    } catch (DomainError const& e) {
        out.exit_code = exit_config_error;
        out.error = e.what();
    } catch (NumericalFailure const& e) {
        out.exit_code = exit_numerical_failure;
        out.error = e.what();
    } catch (GridMismatch const& e) {
        out.exit_code = exit_numerical_failure;
        out.error = e.what();
    }
    out.gates = rep.gates;
    out.degenerate = rep.degenerate;
    out.results = rep.results;
    out.warnings.insert(out.warnings.end(), rep.warnings.begin(), rep.warnings.end());
    if (out.exit_code == exit_ok) {
        if (auto const* g = out.first_failed()) {
            out.exit_code = exit_gate_failed;
            out.error = "gate '" + g->name + "' failed: " + g->detail;
        }
    }

    std::filesystem::create_directories(out.output_dir);
    for (auto const& [name, text] : rep.files) {
        CsvTable::write_text(out.output_dir / name, text);
        out.files.push_back(name);
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Json gates = Json::array();
    for (auto const& g : out.gates)
        gates.push_back(Json{{"name", g.name}, {"passed", g.passed}, {"value", g.value},
                             {"threshold", g.threshold}, {"detail", g.detail}});
    Json seeds = rep.seeds;
    seeds["master"] = cfg.seed;
    Json manifest{{"pmlab_manifest", 1},
                  {"version", PMLAB_VERSION},
                  {"compiler", detail::compiler_id()},
                  {"experiment", cfg.experiment},
                  {"started_utc", detail::utc_timestamp()},
                  {"wall_time_seconds", out.wall_seconds},
                  {"workers", workers},
                  {"config", to_json(cfg)},
                  {"seeds", seeds},
                  {"gates", gates},
                  {"passed", out.exit_code == exit_ok},
                  {"degenerate", out.degenerate},
                  {"exit_code", out.exit_code},
                  {"error", out.error},
                  {"warnings", out.warnings},
                  {"results", out.results},
                  {"files", out.files}};
    CsvTable::write_text(out.output_dir / "manifest.json", manifest.dump(2) + "\n");
    out.files.push_back("manifest.json");
    return out;
}

inline RunResult run_experiment(std::filesystem::path const& config_path, RunOptions const& opt = {})
{
    return run_experiment(parse_config(config_path), opt);
}

} // namespace pmlab
