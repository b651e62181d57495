#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmlab/cone.hpp"
#include "pmlab/errors.hpp"
#include "pmlab/experiments.hpp"
#include "pmlab/grid.hpp"
#include "pmlab/maps.hpp"
#include "pmlab/montecarlo.hpp"
#include "pmlab/observable.hpp"
#include "pmlab/stats.hpp"

namespace pmlab {

using Json = nlohmann::ordered_json;

inline std::vector<std::string> const& experiment_kinds()
{
    static std::vector<std::string> const kinds{"decay", "lp-decay", "composite-decay", "martingale-identities",
                                                "variance-scan", "green-kubo", "clt", "quenched-clt", "sbc", "slln"};
    return kinds;
}

inline std::string experiment_summary(std::string const& kind)
{
    if (kind == "decay") return "L^1 loss of memory for an equal-mean pair, log-log rate fit";
    if (kind == "lp-decay") return "L^p loss of memory (alpha p < 1) with the interpolation-bound check";
    if (kind == "composite-decay") return "decay of P^n(mu_i H_i phibar_i - const) for a fixed i";
    if (kind == "martingale-identities") return "reverse-martingale residual, three variance routes, H_n bounds";
    if (kind == "variance-scan") return "sigma_n^2 growth exponent for perturbed schedules near one map";
    if (kind == "green-kubo") return "stationary Green-Kubo variance and one-sided coboundary verdict";
    if (kind == "clt") return "self-normed CLT for a deterministic sequential schedule";
    if (kind == "quenched-clt") return "quenched CLT over realizations of an i.i.d. random composition";
    if (kind == "sbc") return "strong Borel-Cantelli envelopes along orbits";
    if (kind == "slln") return "SLLN envelope S_n = O(n^eta) for bounded mean-zero sequences";
    return "";
}

//---------------------------------------------------------------------------//
// Specs
//---------------------------------------------------------------------------//

struct GridSpec {
    std::size_t cells = 4096;
    bool graded = false;
    double x_min = 1e-14;
    double ratio = 1.05;

    GridPtr make() const { return graded ? Grid::graded(cells, x_min, ratio) : Grid::uniform(cells); }
};

struct ScheduleSpec {
    /// constant | perturbed | explicit | random
    std::string kind = "constant";
    double alpha = 0.5;
    double center = 0.0;
    double epsilon = 0.0;
    std::size_t levels = 16;
    std::vector<double> values;
    std::vector<double> maps;
    std::vector<double> probabilities;
    std::optional<double> cap;

    double alpha_max() const
    {
        if (kind == "constant") return alpha;
        if (kind == "perturbed") return center + epsilon;
        auto const& v = kind == "explicit" ? values : maps;
        return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    }

    RandomScheme scheme(std::uint64_t seed) const
    {
        std::vector<MapParameter> m;
        for (double a : maps) m.emplace_back(a);
        return RandomScheme(std::move(m), probabilities, seed);
    }

    /// `length` only matters for random realizations.
    MapSchedule make(std::uint64_t seed, std::size_t length) const
    {
        MapSchedule s = [&] {
            if (kind == "constant") return MapSchedule::constant(MapParameter(alpha));
            if (kind == "perturbed")
                return MapSchedule::perturbed(center, epsilon, derive_key(seed, 0, StreamTag::schedule_offsets), levels);
            if (kind == "explicit") {
                std::vector<MapParameter> v;
                for (double a : values) v.emplace_back(a);
                return MapSchedule::explicit_list(std::move(v));
            }
            return scheme(derive_key(seed, 0, StreamTag::omega)).realization(length);
        }();
        return cap ? s.with_cap(*cap) : s;
    }
};

struct ObservableSpec {
    /// identity | cosine | constant | polynomial | identity-coboundary
    std::string kind = "cosine";
    double value = 1.0;
    std::vector<double> coefficients;
    double beta = 0.1;

    Observable make() const
    {
        if (kind == "identity") return Observable::identity();
        if (kind == "cosine") return Observable::cosine();
        if (kind == "constant") return Observable::constant(value);
        if (kind == "polynomial") return Observable::polynomial(coefficients);
        return Observable::identity_coboundary(beta);
    }
};

struct LadderSpec {
    std::vector<std::size_t> points;
    std::size_t lo = 16;
    std::size_t hi = 1024;
    std::size_t per_octave = 2;

    std::vector<std::size_t> make() const { return points.empty() ? geometric_ladder(lo, hi, per_octave) : points; }
};

struct DecaySpec {
    double p = 1.0;
    LadderSpec ladder{};
    std::size_t fit_lo = 16;
    std::size_t fit_hi = 1024;
    double slope_min = -1.8;
    double slope_max = -1.2;
    bool log_correction = false;
    /// cone-pair | observables
    std::string inputs = "cone-pair";
    ObservableSpec first{"identity", 1.0, {}, 0.1};
    ObservableSpec second{"polynomial", 1.0, {0.5}, 0.1};
};

struct CompositeSpec {
    std::size_t i = 10;
    double p = 1.0;
    std::optional<double> alpha;
    LadderSpec ladder{{}, 16, 512, 2};
    std::size_t fit_lo = 16;
    std::size_t fit_hi = 512;
    double max_slope = -2.0;
};

struct MartingaleSpec {
    std::size_t horizon = 50;
    double residual_tol = 1e-8;
    double variance_rel_tol = 1e-6;
    std::size_t hn_horizon = 200;
    double hn_ratio_max = 1.5;
    double q = 2.0;
};

struct ScanSpec {
    double center = 0.1;
    double epsilon = 0.02;
    std::size_t levels = 16;
    std::size_t schedules = 10;
    std::vector<std::size_t> ladder{250, 500, 1000, 2000, 2500, 3000, 3500, 4000};
    std::size_t fit_lo = 500;
    std::size_t band_lo = 2000;
    std::size_t band_hi = 4000;
    std::optional<std::size_t> cap = 64;
    double exponent_min = 0.85;
    double exponent_max = 1.15;
    double band_max = 0.2;
    double cross_check_tol = 0.05;
    std::size_t k_max = 10000;
};

struct GreenKuboSpec {
    double alpha = 0.1;
    std::size_t k_max = 10000;
    double tol = 1e-10;
    std::size_t mc_orbits = 0;
    std::size_t mc_horizon = 10000;
    double mc_rel_tol = 0.1;
};

struct EnsembleSpec {
    std::size_t samples = 20000;
    std::size_t horizon = 5000;
    std::vector<std::size_t> checkpoints;
    bool write_samples = false;
};

struct CltSpec {
    std::size_t repetitions = 5;
    std::size_t min_pass = 4;
};

struct QuenchedSpec {
    std::size_t realizations = 10;
    std::size_t min_pass = 9;
    double band_max = 0.3;
    std::vector<std::size_t> block_sizes{1, 2, 3};
};

struct SbcSpec {
    /// a | b
    std::string part = "a";
    std::size_t trajectories = 100;
    std::vector<std::size_t> ladder;
    std::size_t n_min = 100;
    std::size_t n_max = 100000;
    std::size_t per_decade = 4;
    std::size_t window_lo = 1000;
    double factor = 0.1;
};

struct SllnSpec {
    /// coin | alternating | zero
    std::string sequence = "coin";
    double gamma = 1.0;
    std::size_t n_max = 1000000;
    std::size_t sequences = 100;
    std::size_t points_per_decade = 4;
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 12345;
    std::string output_dir;
    GridSpec grid;
    ConeParams cone{25.0, 0.0};
    ScheduleSpec schedule;
    ObservableSpec observable;
    CltThresholds thresholds;
    DecaySpec decay;
    CompositeSpec composite;
    MartingaleSpec martingale;
    ScanSpec scan;
    GreenKuboSpec green_kubo;
    EnsembleSpec ensemble;
    CltSpec clt;
    QuenchedSpec quenched;
    SbcSpec sbc;
    SllnSpec slln;
    std::vector<std::string> warnings;
    std::string source;
};

//---------------------------------------------------------------------------//
// YAML reading with schema errors
//---------------------------------------------------------------------------//

namespace detail {

inline std::string where(YAML::Node const& n)
{
    auto const m = n.Mark();
    if (m.line < 0) return "";
    return " (line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ")";
}

/// One mapping node; records which keys were read so leftovers can be
/// reported as unknown.
class Section {
public:
    Section(YAML::Node node, std::string path, std::vector<std::string>& errors)
        : node_(std::move(node)), path_(std::move(path)), errors_(errors)
    {
        if (node_ && !node_.IsMap()) {
            error("must be a mapping", node_);
            node_ = YAML::Node();
        }
    }

    bool present() const { return node_.IsDefined() && !node_.IsNull(); }
    YAML::Node const& node() const { return node_; }
    std::string const& path() const { return path_; }

    bool has(char const* key) const { return present() && node_[key].IsDefined(); }

    template <class T>
    bool get(char const* key, T& out)
    {
        seen_.insert(key);
        if (!present()) return false;
        YAML::Node v = node_[key];
        if (!v.IsDefined() || v.IsNull()) return false;
        try {
            out = convert<T>(v);
            return true;
        } catch (YAML::Exception const&) {
            error(std::string("key '") + key + "': expected " + type_name<T>(), v);
        }
        return false;
    }

    template <class T>
    bool get(char const* key, std::optional<T>& out)
    {
        T v{};
        if (!get(key, v)) return false;
        out = v;
        return true;
    }

    Section child(char const* key)
    {
        seen_.insert(key);
        YAML::Node v = present() ? node_[key] : YAML::Node();
        return Section(v, path_.empty() ? key : path_ + "." + key, errors_);
    }

    void error(std::string const& msg, YAML::Node const& at)
    {
        errors_.push_back((path_.empty() ? std::string("config") : path_) + ": " + msg + where(at));
    }
    void error(std::string const& msg) { error(msg, node_); }

    void finish()
    {
        if (!present()) return;
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            auto const key = it->first.as<std::string>();
            if (!seen_.count(key)) error("unknown key '" + key + "'", it->first);
        }
    }

private:
    template <class T>
    static T convert(YAML::Node const& v)
    {
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            // accept 1e5-style integers written as floats
            auto const s = v.as<std::string>();
            if (s.find_first_of(".eE") != std::string::npos) {
                double const d = v.as<double>();
                if (!(d >= 0.0) || d != std::floor(d) || d > 9.007199254740992e15) throw YAML::BadConversion(v.Mark());
                return static_cast<T>(d);
            }
            if (!s.empty() && s[0] == '-') throw YAML::BadConversion(v.Mark());
            return v.as<T>();
        } else {
            return v.as<T>();
        }
    }

    template <class T>
    static char const* type_name()
    {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_same_v<T, std::string>) return "a string";
        else if constexpr (std::is_integral_v<T>) return "a nonnegative integer";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else return "a list";
    }

    YAML::Node node_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

inline void read_grid(Section s, GridSpec& g)
{
    s.get("cells", g.cells);
    s.get("graded", g.graded);
    s.get("x_min", g.x_min);
    s.get("ratio", g.ratio);
    s.finish();
    if (g.cells < 2) s.error("cells must be >= 2");
    if (g.graded && !(g.x_min > 0.0 && g.x_min < 1.0 / double(std::max<std::size_t>(g.cells, 2))))
        s.error("x_min must lie in (0, 1/cells)");
    if (g.graded && !(g.ratio > 1.0)) s.error("ratio must exceed 1");
}

inline void check_alpha(Section& s, double a, char const* what)
{
    if (!(a > 0.0 && a < 1.0))
        s.error(std::string(what) + "=" + format_number(a) +
                " violates 0 < alpha < 1 of the map family T(x) = x + 2^alpha x^(1+alpha) on [0,1/2], 2x-1 on (1/2,1]");
}

inline void read_schedule(Section s, ScheduleSpec& sc)
{
    s.get("kind", sc.kind);
    if (sc.kind == "constant") {
        s.get("alpha", sc.alpha);
        check_alpha(s, sc.alpha, "alpha");
    } else if (sc.kind == "perturbed") {
        s.get("center", sc.center);
        s.get("epsilon", sc.epsilon);
        s.get("levels", sc.levels);
        if (!(sc.epsilon >= 0.0)) s.error("epsilon must be >= 0");
        check_alpha(s, sc.center - sc.epsilon, "center - epsilon");
        check_alpha(s, sc.center + sc.epsilon, "center + epsilon");
        if (sc.levels == 0) s.error("levels must be >= 1");
    } else if (sc.kind == "explicit") {
        s.get("values", sc.values);
        if (sc.values.empty()) s.error("explicit schedule needs a nonempty 'values' list");
        for (double a : sc.values) check_alpha(s, a, "value");
    } else if (sc.kind == "random") {
        s.get("maps", sc.maps);
        s.get("probabilities", sc.probabilities);
        if (sc.maps.empty()) s.error("random schedule needs 'maps'");
        for (double a : sc.maps) check_alpha(s, a, "map");
        if (sc.probabilities.size() != sc.maps.size()) s.error("one probability per map required");
        double sum = 0.0;
        for (double p : sc.probabilities) {
            if (!(p >= 0.0)) s.error("probabilities must be >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-15) s.error("probabilities sum to " + format_number(sum) + ", not 1");
    } else {
        s.error("unknown schedule kind '" + sc.kind + "' (constant, perturbed, explicit, random)");
    }
    s.get("cap", sc.cap);
    if (sc.cap && !(*sc.cap >= sc.alpha_max() && *sc.cap < 1.0))
        s.error("cap must satisfy alpha_max <= cap < 1");
    s.finish();
}

inline void read_observable(Section s, ObservableSpec& o)
{
    s.get("kind", o.kind);
    if (o.kind == "constant") {
        s.get("value", o.value);
    } else if (o.kind == "polynomial") {
        s.get("coefficients", o.coefficients);
        if (o.coefficients.empty()) s.error("polynomial needs 'coefficients'");
    } else if (o.kind == "identity-coboundary") {
        s.get("beta", o.beta);
        check_alpha(s, o.beta, "beta");
    } else if (o.kind != "identity" && o.kind != "cosine") {
        s.error("unknown observable '" + o.kind + "' (identity, cosine, constant, polynomial, identity-coboundary)");
    }
    s.finish();
}

inline void read_ladder(Section s, LadderSpec& l)
{
    if (s.present() && s.node().IsSequence()) return;
    s.get("lo", l.lo);
    s.get("hi", l.hi);
    s.get("per_octave", l.per_octave);
    s.finish();
    if (l.lo == 0 || l.hi < l.lo || l.per_octave == 0) s.error("ladder needs 1 <= lo <= hi and per_octave >= 1");
}

inline void read_window(Section& s, char const* key, std::size_t& lo, std::size_t& hi)
{
    std::vector<std::size_t> w;
    if (s.get(key, w)) {
        if (w.size() != 2 || w[0] > w[1]) s.error(std::string(key) + " must be [lo, hi]");
        else {
            lo = w[0];
            hi = w[1];
        }
    }
}

} // namespace detail

inline ExperimentConfig config_from_yaml(YAML::Node root, std::string source = {})
{
    std::vector<std::string> errors;
    ExperimentConfig c;
    c.source = std::move(source);
    if (root.IsMap() && root["pmlab_manifest"].IsDefined()) root = root["config"];
    detail::Section top(root, "", errors);
    if (!top.present()) throw ConfigError("config: empty document");
    top.get("experiment", c.experiment);
    auto const& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end()) {
        top.error("'experiment' must be one of: decay, lp-decay, composite-decay, martingale-identities, "
                  "variance-scan, green-kubo, clt, quenched-clt, sbc, slln (got '" + c.experiment + "')");
        throw ConfigError(errors.front());
    }
    std::string const& k = c.experiment;
    top.get("seed", c.seed);
    top.get("output_dir", c.output_dir);

    bool const uses_schedule = k != "variance-scan" && k != "green-kubo" && k != "slln";
    bool const uses_observable = k != "decay" && k != "lp-decay" && k != "slln";
    bool const uses_grid = k != "slln";
    bool const uses_ensemble = k == "clt" || k == "quenched-clt";

    auto section_for = [&](char const* name, bool used) {
        if (!used && top.has(name)) top.error("section '" + std::string(name) + "' is not used by experiment '" + k + "'");
        return top.child(name);
    };

    if (k == "lp-decay") c.decay.p = 2.0;
    if (k == "decay" || k == "lp-decay" || k == "composite-decay" || k == "sbc") c.grid = GridSpec{4096, false};

    if (auto g = section_for("grid", uses_grid); g.present()) detail::read_grid(g, c.grid);
    if (auto s = section_for("schedule", uses_schedule); uses_schedule) {
        if (!s.present()) s.error("section 'schedule' is required");
        else detail::read_schedule(s, c.schedule);
        if (k == "quenched-clt" && c.schedule.kind != "random")
            s.error("quenched-clt needs a schedule of kind 'random'");
        if (k != "quenched-clt" && k != "clt" && k != "sbc" && c.schedule.kind == "random")
            s.error("schedule kind 'random' is only supported by clt, quenched-clt and sbc");
    }
    if (auto o = section_for("observable", uses_observable); o.present()) detail::read_observable(o, c.observable);

    bool const uses_cone = k == "decay" || k == "lp-decay" || k == "composite-decay";
    c.cone.alpha = c.schedule.alpha_max();
    if (auto s = section_for("cone", uses_cone); s.present()) {
        s.get("a", c.cone.a);
        s.get("alpha", c.cone.alpha);
        s.finish();
        if (!(c.cone.a > 1.0)) s.error("cone constant a must exceed 1");
    }
    if (uses_cone && !(c.cone.alpha > 0.0 && c.cone.alpha < 1.0)) top.error("cone alpha must lie in (0,1)");
    if (uses_cone && c.cone.alpha < c.schedule.alpha_max())
        c.warnings.push_back("cone alpha " + format_number(c.cone.alpha) + " is below the schedule's alpha_max " +
                             format_number(c.schedule.alpha_max()) + "; cone invariance is not expected");

    if (auto s = section_for("thresholds", uses_ensemble); s.present()) {
        s.get("p_value", c.thresholds.p_value);
        s.get("skewness", c.thresholds.skewness);
        s.get("kurtosis", c.thresholds.excess_kurtosis);
        s.finish();
    }
    if (auto s = section_for("ensemble", uses_ensemble); s.present()) {
        s.get("samples", c.ensemble.samples);
        s.get("horizon", c.ensemble.horizon);
        s.get("checkpoints", c.ensemble.checkpoints);
        s.get("write_samples", c.ensemble.write_samples);
        s.finish();
        if (c.ensemble.samples == 0 || c.ensemble.horizon == 0) s.error("samples and horizon must be >= 1");
        if (c.ensemble.samples < 1000)
            c.warnings.push_back("ensemble.samples < 1000: the asymptotic KS p-value is not meaningful");
    }

    if (auto s = section_for("decay", k == "decay" || k == "lp-decay"); s.present()) {
        s.get("p", c.decay.p);
        if (s.has("ladder")) {
            auto l = s.child("ladder");
            if (l.node().IsSequence()) s.get("ladder", c.decay.ladder.points);
            else detail::read_ladder(l, c.decay.ladder);
        }
        detail::read_window(s, "fit_window", c.decay.fit_lo, c.decay.fit_hi);
        std::vector<double> range;
        if (s.get("slope_range", range)) {
            if (range.size() != 2 || range[0] > range[1]) s.error("slope_range must be [min, max]");
            else {
                c.decay.slope_min = range[0];
                c.decay.slope_max = range[1];
            }
        }
        s.get("log_correction", c.decay.log_correction);
        s.get("inputs", c.decay.inputs);
        if (c.decay.inputs == "observables") {
            if (auto o = s.child("first"); o.present()) detail::read_observable(o, c.decay.first);
            if (auto o = s.child("second"); o.present()) detail::read_observable(o, c.decay.second);
        } else if (c.decay.inputs != "cone-pair") {
            s.error("inputs must be 'cone-pair' or 'observables'");
        }
        s.finish();
    }
    if (k == "decay" || k == "lp-decay") {
        if (!(c.decay.p >= 1.0)) top.error("decay.p must be >= 1");
        if (k == "lp-decay" && !(c.decay.p > 1.0)) top.error("lp-decay needs p > 1");
        if (c.decay.p > 1.0 && !(c.schedule.alpha_max() * c.decay.p < 1.0))
            top.error("L^p decay requires alpha*p < 1 (alpha_max=" + format_number(c.schedule.alpha_max()) +
                      ", p=" + format_number(c.decay.p) + ")");
    }

    if (auto s = section_for("composite", k == "composite-decay"); s.present()) {
        s.get("i", c.composite.i);
        s.get("p", c.composite.p);
        s.get("alpha", c.composite.alpha);
        if (s.has("ladder")) {
            auto l = s.child("ladder");
            if (l.node().IsSequence()) s.get("ladder", c.composite.ladder.points);
            else detail::read_ladder(l, c.composite.ladder);
        }
        detail::read_window(s, "fit_window", c.composite.fit_lo, c.composite.fit_hi);
        s.get("max_slope", c.composite.max_slope);
        s.finish();
        if (c.composite.i == 0) s.error("i must be >= 1");
    }
    if (k == "composite-decay") {
        double const a = c.composite.alpha.value_or(c.schedule.alpha_max());
        if (!(a * c.composite.p < 1.0)) top.error("composite decay requires alpha*p < 1");
    }

    if (auto s = section_for("martingale", k == "martingale-identities"); s.present()) {
        s.get("horizon", c.martingale.horizon);
        s.get("residual_tol", c.martingale.residual_tol);
        s.get("variance_rel_tol", c.martingale.variance_rel_tol);
        s.get("hn_horizon", c.martingale.hn_horizon);
        s.get("hn_ratio_max", c.martingale.hn_ratio_max);
        s.get("q", c.martingale.q);
        s.finish();
        if (c.martingale.horizon == 0) s.error("horizon must be >= 1");
        if (c.martingale.hn_horizon == 1) s.error("hn_horizon must be 0 (off) or >= 2");
    }

    if (auto s = section_for("scan", k == "variance-scan"); s.present()) {
        auto& v = c.scan;
        s.get("center", v.center);
        s.get("epsilon", v.epsilon);
        s.get("levels", v.levels);
        s.get("schedules", v.schedules);
        s.get("ladder", v.ladder);
        s.get("fit_lo", v.fit_lo);
        detail::read_window(s, "band_window", v.band_lo, v.band_hi);
        std::size_t cap = 0;
        if (s.get("cap", cap)) v.cap = cap == 0 ? std::nullopt : std::optional<std::size_t>(cap);
        std::vector<double> range;
        if (s.get("exponent_range", range)) {
            if (range.size() != 2) s.error("exponent_range must be [min, max]");
            else {
                v.exponent_min = range[0];
                v.exponent_max = range[1];
            }
        }
        s.get("band_max", v.band_max);
        s.get("cross_check_tol", v.cross_check_tol);
        s.get("k_max", v.k_max);
        s.finish();
    }
    if (k == "variance-scan") {
        detail::Section t(root, "scan", errors);
        detail::check_alpha(t, c.scan.center - c.scan.epsilon, "scan center - epsilon");
        detail::check_alpha(t, c.scan.center + c.scan.epsilon, "scan center + epsilon");
    }

    if (auto s = section_for("green_kubo", k == "green-kubo"); s.present()) {
        auto& g = c.green_kubo;
        s.get("alpha", g.alpha);
        s.get("k_max", g.k_max);
        s.get("tol", g.tol);
        s.get("mc_orbits", g.mc_orbits);
        s.get("mc_horizon", g.mc_horizon);
        s.get("mc_rel_tol", g.mc_rel_tol);
        s.finish();
        detail::check_alpha(s, g.alpha, "alpha");
    }

    if (auto s = section_for("clt", k == "clt"); s.present()) {
        s.get("repetitions", c.clt.repetitions);
        s.get("min_pass", c.clt.min_pass);
        s.finish();
        if (c.clt.repetitions == 0 || c.clt.min_pass > c.clt.repetitions)
            s.error("need repetitions >= 1 and min_pass <= repetitions");
    }
    if (auto s = section_for("quenched", k == "quenched-clt"); s.present()) {
        s.get("realizations", c.quenched.realizations);
        s.get("min_pass", c.quenched.min_pass);
        s.get("band_max", c.quenched.band_max);
        s.get("block_sizes", c.quenched.block_sizes);
        s.finish();
        if (c.quenched.realizations == 0 || c.quenched.min_pass > c.quenched.realizations)
            s.error("need realizations >= 1 and min_pass <= realizations");
    }
    if ((k == "clt" || k == "quenched-clt") && c.schedule.alpha_max() >= 1.0 / 9.0)
        c.warnings.push_back("alpha_max = " + format_number(c.schedule.alpha_max()) +
                             " is outside the CLT regime 0 < alpha < 1/9");

    if (auto s = section_for("sbc", k == "sbc"); s.present()) {
        auto& b = c.sbc;
        s.get("part", b.part);
        s.get("trajectories", b.trajectories);
        s.get("ladder", b.ladder);
        s.get("n_min", b.n_min);
        s.get("n_max", b.n_max);
        s.get("per_decade", b.per_decade);
        s.get("window_lo", b.window_lo);
        s.get("factor", b.factor);
        s.finish();
        if (b.part != "a" && b.part != "b") s.error("part must be 'a' or 'b'");
        if (b.n_min < 16 || b.n_max <= b.n_min) s.error("need 16 <= n_min < n_max");
        if (b.trajectories == 0) s.error("trajectories must be >= 1");
    }
    if (k == "sbc" && c.sbc.part == "a" && c.schedule.alpha_max() >= 0.5)
        c.warnings.push_back("SBC part (a) envelope is only expected for alpha < 1/2 (alpha_max = " +
                             format_number(c.schedule.alpha_max()) + ")");

    if (auto s = section_for("slln", k == "slln"); s.present()) {
        auto& l = c.slln;
        s.get("sequence", l.sequence);
        s.get("gamma", l.gamma);
        s.get("n_max", l.n_max);
        s.get("sequences", l.sequences);
        s.get("points_per_decade", l.points_per_decade);
        s.finish();
        if (l.sequence != "coin" && l.sequence != "alternating" && l.sequence != "zero")
            s.error("sequence must be coin, alternating or zero");
        if (!(l.gamma >= 0.0 && l.gamma < 2.0)) s.error("gamma must lie in [0, 2): the envelope is not applicable for gamma >= 2");
        if (l.n_max < 100) s.error("n_max must be >= 100");
    }

    top.finish();
    if (!errors.empty()) {
        std::string msg;
        for (auto const& e : errors) msg += e + "\n";
        msg.pop_back();
        throw ConfigError(msg);
    }
    return c;
}

inline ExperimentConfig parse_config(std::filesystem::path const& path)
{
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (YAML::Exception const& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_yaml(root, path.string());
}

inline ExperimentConfig parse_config_text(std::string const& text)
{
    try {
        return config_from_yaml(YAML::Load(text));
    } catch (YAML::ParserException const& e) {
        throw ConfigError(e.what());
    }
}

//---------------------------------------------------------------------------//
// Resolved config as JSON (manifest echo; parses back through config_from_yaml)
//---------------------------------------------------------------------------//

inline Json to_json(ObservableSpec const& o)
{
    Json j{{"kind", o.kind}};
    if (o.kind == "constant") j["value"] = o.value;
    if (o.kind == "polynomial") j["coefficients"] = o.coefficients;
    if (o.kind == "identity-coboundary") j["beta"] = o.beta;
    return j;
}

inline Json to_json(LadderSpec const& l)
{
    if (!l.points.empty()) return l.points;
    return Json{{"lo", l.lo}, {"hi", l.hi}, {"per_octave", l.per_octave}};
}

inline Json to_json(ExperimentConfig const& c)
{
    std::string const& k = c.experiment;
    Json j{{"experiment", k}, {"seed", c.seed}};
    if (k != "slln")
        j["grid"] = Json{{"cells", c.grid.cells}, {"graded", c.grid.graded}, {"x_min", c.grid.x_min}, {"ratio", c.grid.ratio}};
    if (k != "variance-scan" && k != "green-kubo" && k != "slln") {
        auto const& s = c.schedule;
        Json sj{{"kind", s.kind}};
        if (s.kind == "constant") sj["alpha"] = s.alpha;
        if (s.kind == "perturbed") {
            sj["center"] = s.center;
            sj["epsilon"] = s.epsilon;
            sj["levels"] = s.levels;
        }
        if (s.kind == "explicit") sj["values"] = s.values;
        if (s.kind == "random") {
            sj["maps"] = s.maps;
            sj["probabilities"] = s.probabilities;
        }
        if (s.cap) sj["cap"] = *s.cap;
        j["schedule"] = sj;
    }
    if (k != "decay" && k != "lp-decay" && k != "slln") j["observable"] = to_json(c.observable);
    if (k == "decay" || k == "lp-decay" || k == "composite-decay") j["cone"] = Json{{"a", c.cone.a}, {"alpha", c.cone.alpha}};
    if (k == "decay" || k == "lp-decay") {
        auto const& d = c.decay;
        Json dj{{"p", d.p}, {"ladder", to_json(d.ladder)}, {"fit_window", {d.fit_lo, d.fit_hi}},
                {"slope_range", {d.slope_min, d.slope_max}}, {"log_correction", d.log_correction}, {"inputs", d.inputs}};
        if (d.inputs == "observables") {
            dj["first"] = to_json(d.first);
            dj["second"] = to_json(d.second);
        }
        j["decay"] = dj;
    }
    if (k == "composite-decay") {
        auto const& d = c.composite;
        Json dj{{"i", d.i}, {"p", d.p}, {"ladder", to_json(d.ladder)}, {"fit_window", {d.fit_lo, d.fit_hi}},
                {"max_slope", d.max_slope}};
        if (d.alpha) dj["alpha"] = *d.alpha;
        j["composite"] = dj;
    }
    if (k == "martingale-identities") {
        auto const& m = c.martingale;
        j["martingale"] = Json{{"horizon", m.horizon}, {"residual_tol", m.residual_tol},
                               {"variance_rel_tol", m.variance_rel_tol}, {"hn_horizon", m.hn_horizon},
                               {"hn_ratio_max", m.hn_ratio_max}, {"q", m.q}};
    }
    if (k == "variance-scan") {
        auto const& v = c.scan;
        j["scan"] = Json{{"center", v.center}, {"epsilon", v.epsilon}, {"levels", v.levels},
                         {"schedules", v.schedules}, {"ladder", v.ladder}, {"fit_lo", v.fit_lo},
                         {"band_window", {v.band_lo, v.band_hi}}, {"cap", v.cap.value_or(0)},
                         {"exponent_range", {v.exponent_min, v.exponent_max}}, {"band_max", v.band_max},
                         {"cross_check_tol", v.cross_check_tol}, {"k_max", v.k_max}};
    }
    if (k == "green-kubo") {
        auto const& g = c.green_kubo;
        j["green_kubo"] = Json{{"alpha", g.alpha}, {"k_max", g.k_max}, {"tol", g.tol}, {"mc_orbits", g.mc_orbits},
                               {"mc_horizon", g.mc_horizon}, {"mc_rel_tol", g.mc_rel_tol}};
    }
    if (k == "clt" || k == "quenched-clt") {
        j["ensemble"] = Json{{"samples", c.ensemble.samples}, {"horizon", c.ensemble.horizon},
                             {"checkpoints", c.ensemble.checkpoints}, {"write_samples", c.ensemble.write_samples}};
        j["thresholds"] = Json{{"p_value", c.thresholds.p_value}, {"skewness", c.thresholds.skewness},
                               {"kurtosis", c.thresholds.excess_kurtosis}};
    }
    if (k == "clt") j["clt"] = Json{{"repetitions", c.clt.repetitions}, {"min_pass", c.clt.min_pass}};
    if (k == "quenched-clt")
        j["quenched"] = Json{{"realizations", c.quenched.realizations}, {"min_pass", c.quenched.min_pass},
                             {"band_max", c.quenched.band_max}, {"block_sizes", c.quenched.block_sizes}};
    if (k == "sbc") {
        auto const& b = c.sbc;
        j["sbc"] = Json{{"part", b.part}, {"trajectories", b.trajectories}, {"ladder", b.ladder}, {"n_min", b.n_min},
                        {"n_max", b.n_max}, {"per_decade", b.per_decade}, {"window_lo", b.window_lo},
                        {"factor", b.factor}};
    }
    if (k == "slln") {
        auto const& l = c.slln;
        j["slln"] = Json{{"sequence", l.sequence}, {"gamma", l.gamma}, {"n_max", l.n_max}, {"sequences", l.sequences},
                         {"points_per_decade", l.points_per_decade}};
    }
    return j;
}

} // namespace pmlab
