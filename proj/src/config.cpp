#include "qftlab/config.hpp"

#include "qftlab/errors.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

namespace qftlab {

namespace {

using nlohmann::json;

std::string anchored(const std::string& message, int line, int column) {
    if (line <= 0) return message;
    std::ostringstream s;
    s << "line " << line;
    if (column > 0) s << ", column " << column;
    s << ": " << message;
    return s.str();
}

// ---------------------------------------------------------------------------
// YAML access with line-anchored errors

[[noreturn]] void fail(const YAML::Node& n, const std::string& message) {
    const YAML::Mark m = n.Mark();
    if (m.is_null()) throw ConfigError(message);
    throw ConfigError(message, m.line + 1, m.column + 1);
}

void require_map(const YAML::Node& n, const std::string& what) {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
}

void check_keys(const YAML::Node& n, const std::string& what, std::initializer_list<const char*> allowed) {
    require_map(n, what);
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            fail(kv.first, what + ": unknown key '" + key + "'");
    }
}

template <class T>
T scalar(const YAML::Node& n, const std::string& what) {
    if (!n.IsScalar()) fail(n, what + " must be a scalar");
    try {
        return n.as<T>();
    } catch (const YAML::BadConversion&) {
        fail(n, what + ": cannot read '" + n.Scalar() + "'");
    }
}

double number(const YAML::Node& n, const std::string& what) {
    const double v = scalar<double>(n, what);
    if (!std::isfinite(v)) fail(n, what + " must be finite");
    return v;
}

double get(const YAML::Node& parent, const char* key, double fallback) {
    const YAML::Node n = parent[key];
    return n ? number(n, key) : fallback;
}

int get_int(const YAML::Node& parent, const char* key, int fallback) {
    const YAML::Node n = parent[key];
    return n ? scalar<int>(n, key) : fallback;
}

bool get_bool(const YAML::Node& parent, const char* key, bool fallback) {
    const YAML::Node n = parent[key];
    return n ? scalar<bool>(n, key) : fallback;
}

std::string get_string(const YAML::Node& parent, const char* key, const std::string& fallback) {
    const YAML::Node n = parent[key];
    return n ? scalar<std::string>(n, key) : fallback;
}

YAML::Node required(const YAML::Node& parent, const char* key, const std::string& what) {
    const YAML::Node n = parent[key];
    if (!n) fail(parent, what + ": missing '" + key + "'");
    return n;
}

std::vector<double> number_list(const YAML::Node& n, const std::string& what) {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    std::vector<double> out;
    for (const auto& x : n) out.push_back(number(x, what));
    return out;
}

// A list, or {from, to, step} / {from, to, count}.
std::vector<double> time_list(const YAML::Node& n, const std::string& what) {
    if (n.IsSequence()) return number_list(n, what);
    check_keys(n, what, {"from", "to", "step", "count"});
    const double from = number(required(n, "from", what), what + ".from");
    const double to = number(required(n, "to", what), what + ".to");
    if (!(to > from)) fail(n, what + ": need to > from");
    std::vector<double> out;
    if (n["count"]) {
        const int c = scalar<int>(n["count"], what + ".count");
        if (c < 2) fail(n["count"], what + ".count must be at least 2");
        for (int i = 0; i < c; ++i) out.push_back(from + (to - from) * i / (c - 1));
    } else {
        const double step = number(required(n, "step", what), what + ".step");
        if (!(step > 0)) fail(n["step"], what + ".step must be positive");
        const auto steps = static_cast<long>(std::floor((to - from) / step + 1e-9));
        if (steps > 100000) fail(n, what + ": too many points");
        for (long i = 0; i <= steps; ++i) out.push_back(from + step * static_cast<double>(i));
    }
    return out;
}

void check_increasing(const YAML::Node& n, const std::vector<double>& t, const std::string& what, double lower,
                      std::size_t min_size) {
    if (t.size() < min_size) fail(n, what + ": need at least " + std::to_string(min_size) + " times");
    if (t.front() < lower) fail(n, what + ": times must be >= " + std::to_string(lower));
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) fail(n, what + ": times must be strictly increasing");
}

// ---------------------------------------------------------------------------
// Functions, profiles, packets

FunctionTerm term_from(const YAML::Node& n, const std::string& what) {
    require_map(n, what);
    if (n.size() != 1) fail(n, what + ": a term has exactly one kind");
    const auto kind = n.begin()->first.as<std::string>();
    const YAML::Node body = n.begin()->second;
    FunctionTerm t;
    if (kind == "gaussian_bump") {
        check_keys(body, what, {"center", "width", "height"});
        t.kind = FunctionTerm::Kind::gaussian_bump;
        t.center = get(body, "center", 0.0);
        t.width = get(body, "width", 1.0);
        t.height = get(body, "height", 1.0);
        if (!(t.width > 0)) fail(body, what + ": width must be positive");
    } else if (kind == "rational_decay") {
        check_keys(body, what, {"center", "mu", "height"});
        t.kind = FunctionTerm::Kind::rational_decay;
        t.center = get(body, "center", 0.0);
        t.mu = get(body, "mu", 1.0);
        t.height = get(body, "height", 1.0);
    } else {
        fail(n.begin()->first, what + ": unknown function kind '" + kind + "'");
    }
    return t;
}

// A number, {constant}, {gaussian_bump}, {rational_decay}, {terms, offset} or {table}.
GridFunction function_from(const YAML::Node& n, const std::string& what) {
    if (n.IsScalar()) return GridFunction::constant(number(n, what));
    require_map(n, what);
    if (n["table"]) {
        check_keys(n, what, {"table"});
        return GridFunction::table(number_list(n["table"], what + ".table"));
    }
    if (n["constant"]) {
        check_keys(n, what, {"constant"});
        return GridFunction::constant(number(n["constant"], what + ".constant"));
    }
    if (n["terms"]) {
        check_keys(n, what, {"terms", "offset"});
        GridFunction f = GridFunction::constant(get(n, "offset", 0.0));
        if (!n["terms"].IsSequence()) fail(n["terms"], what + ".terms must be a list");
        for (const auto& t : n["terms"]) f.add(term_from(t, what + ".terms"));
        return f;
    }
    GridFunction f = GridFunction::constant(0.0);
    f.add(term_from(n, what));
    return f;
}

Profile profile_from(const YAML::Node& n, const std::string& what) {
    check_keys(n, what, {"kind", "lo", "hi", "radius", "value"});
    const auto kind_node = required(n, "kind", what);
    Profile::Kind kind{};
    try {
        kind = profile_kind_from_string(scalar<std::string>(kind_node, what + ".kind"));
    } catch (const std::invalid_argument& e) {
        fail(kind_node, what + ": " + e.what());
    }
    switch (kind) {
        case Profile::Kind::constant: return {kind, 0, 0, get(n, "value", 1.0)};
        case Profile::Kind::bump: {
            const double r = get(n, "radius", 1.0);
            if (!(r > 0)) fail(n, what + ": radius must be positive");
            return Profile::bump(r);
        }
        default: break;
    }
    const double lo = number(required(n, "lo", what), what + ".lo");
    const double hi = number(required(n, "hi", what), what + ".hi");
    if (kind == Profile::Kind::indicator ? hi < lo : !(hi > lo)) fail(n, what + ": need hi > lo");
    return {kind, lo, hi, 1.0};
}

PacketSpec packet_from(const YAML::Node& n, const std::string& what) {
    check_keys(n, what, {"x0", "sigma", "k0", "scattering_only"});
    PacketSpec p;
    p.x0 = get(n, "x0", p.x0);
    p.sigma = get(n, "sigma", p.sigma);
    p.k0 = get(n, "k0", p.k0);
    p.scattering_only = get_bool(n, "scattering_only", p.scattering_only);
    if (!(p.sigma > 0)) fail(n, what + ": sigma must be positive");
    return p;
}

std::vector<PacketSpec> packet_list(const YAML::Node& n, const std::string& what) {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    std::vector<PacketSpec> out;
    for (const auto& p : n) out.push_back(packet_from(p, what));
    return out;
}

// ---------------------------------------------------------------------------
// Model section

ModelConfig model_from(const YAML::Node& n) {
    check_keys(n, "model",
               {"kind", "axes", "a", "c", "m_inf", "polynomial", "modes", "n_max", "uv_kappa", "decay_s",
                "stability_tol", "dim_cap", "force", "conjugate", "scattering", "is_radii", "is_points"});
    ModelConfig mc;
    ModelParams& p = mc.params;
    const auto kind = get_string(n, "kind", "pphi2");
    if (kind == "pphi2") {
        mc.kind = ModelKind::pphi2;
    } else if (kind == "pphi_uv") {
        mc.kind = ModelKind::pphi_uv;
    } else {
        fail(n["kind"], "model.kind must be pphi2 or pphi_uv");
    }
    if (n["conjugate"] && get_string(n, "conjugate", "") != "dilation_reg")
        fail(n["conjugate"], "model.conjugate: only dilation_reg is available");

    const YAML::Node axes = required(n, "axes", "model");
    if (!axes.IsSequence() || axes.size() == 0) fail(axes, "model.axes must be a non-empty list");
    Eigen::Index nodes = 1;
    for (const auto& ax : axes) {
        check_keys(ax, "model.axes", {"half_length", "points", "boundary"});
        AxisSpec a;
        a.half_length = number(required(ax, "half_length", "model.axes"), "half_length");
        a.points = scalar<int>(required(ax, "points", "model.axes"), "points");
        if (!(a.half_length > 0)) fail(ax, "model.axes: half_length must be positive");
        if (a.points < 2) fail(ax, "model.axes: need at least 2 points");
        try {
            a.boundary = boundary_from_string(get_string(ax, "boundary", "dirichlet"));
        } catch (const std::invalid_argument& e) {
            fail(ax["boundary"], std::string("model.axes: ") + e.what());
        }
        nodes *= a.points;
        p.axes.push_back(a);
    }
    if (mc.kind == ModelKind::pphi2 && p.axes.size() != 1) fail(axes, "model.axes: pphi2 takes exactly one axis");
    if (p.axes.size() > 2) fail(axes, "model.axes: at most two axes");

    if (n["a"]) p.a_fn = function_from(n["a"], "model.a");
    if (n["c"]) p.c_fn = function_from(n["c"], "model.c");
    for (const auto* key : {"a", "c"}) {
        const GridFunction& f = std::string(key) == "a" ? p.a_fn : p.c_fn;
        if (f.is_table() && (p.axes.size() != 1 || f.table_values()->size() != static_cast<std::size_t>(nodes)))
            fail(n[key], std::string("model.") + key + ": a table needs one axis and one value per node");
    }
    if (n["m_inf"]) {
        p.m_inf = number(n["m_inf"], "model.m_inf");
        if (!(*p.m_inf > 0)) fail(n["m_inf"], "model.m_inf must be positive");
    }
    p.modes = scalar<int>(required(n, "modes", "model"), "model.modes");
    p.n_max = scalar<int>(required(n, "n_max", "model"), "model.n_max");
    if (p.modes < 1 || p.modes > nodes) fail(n["modes"], "model.modes must lie in [1, number of grid nodes]");
    if (p.n_max < 1) fail(n["n_max"], "model.n_max must be at least 1");
    if (n["uv_kappa"]) {
        p.uv_kappa = number(n["uv_kappa"], "model.uv_kappa");
        if (!(*p.uv_kappa > 0)) fail(n["uv_kappa"], "model.uv_kappa must be positive");
    }
    if (mc.kind == ModelKind::pphi_uv) {
        if (!p.uv_kappa) fail(n, "model: pphi_uv needs uv_kappa");
        if (nodes > 256) fail(axes, "model.axes: pphi_uv allows at most 256 grid nodes");
    }
    p.decay_s = get(n, "decay_s", p.decay_s);
    p.stability_tol = get(n, "stability_tol", p.stability_tol);
    if (n["dim_cap"]) {
        p.dim_cap = scalar<std::int64_t>(n["dim_cap"], "model.dim_cap");
        if (p.dim_cap < 1) fail(n["dim_cap"], "model.dim_cap must be positive");
    }
    p.force = get_bool(n, "force", false);
    if (n["is_radii"]) {
        p.is_radii = number_list(n["is_radii"], "model.is_radii");
        if (p.is_radii.size() < 2) fail(n["is_radii"], "model.is_radii needs at least two radii");
        for (double r : p.is_radii)
            if (!(r > 0)) fail(n["is_radii"], "model.is_radii must be positive");
    }
    if (n["is_points"]) {
        p.is_points = get_int(n, "is_points", p.is_points);
        if (p.is_points < 2 || p.is_points > 48) fail(n["is_points"], "model.is_points must lie in [2, 48]");
    }

    if (const YAML::Node poly = n["polynomial"]) {
        check_keys(poly, "model.polynomial", {"degree", "coefficients", "cutoff"});
        PolynomialSpec& s = p.polynomial;
        s.degree = scalar<int>(required(poly, "degree", "model.polynomial"), "model.polynomial.degree");
        if (s.degree < 0 || s.degree > max_polynomial_degree)
            fail(poly["degree"], "model.polynomial.degree must lie in [0, " + std::to_string(max_polynomial_degree) + "]");
        if (const YAML::Node co = poly["coefficients"]) {
            require_map(co, "model.polynomial.coefficients");
            for (const auto& kv : co) {
                const int power = scalar<int>(kv.first, "polynomial power");
                if (power < 0 || power > s.degree) fail(kv.first, "model.polynomial: power outside [0, degree]");
                s.coefficients[power] = function_from(kv.second, "model.polynomial.coefficients");
            }
        }
        s.cutoff = poly["cutoff"] ? function_from(poly["cutoff"], "model.polynomial.cutoff") : GridFunction::constant(0.0);
        try {
            validate_polynomial(s, mc.kind == ModelKind::pphi2 ? PolynomialCheck::hamiltonian : PolynomialCheck::none);
        } catch (const std::invalid_argument& e) {
            fail(poly, std::string("model.polynomial: ") + e.what());
        }
    }

    if (const YAML::Node sc = n["scattering"]) {
        check_keys(sc, "model.scattering", {"omega_fraction", "length_multiple"});
        mc.omega_fraction = get(sc, "omega_fraction", mc.omega_fraction);
        mc.length_multiple = get(sc, "length_multiple", mc.length_multiple);
    }
    return mc;
}

// ---------------------------------------------------------------------------
// Analysis section

struct Defaults {
    double virial_relative{1e-9};
    double annihilated{0.05};
};

void needs_one_axis(const ModelConfig& mc, const YAML::Node& n, const std::string& what) {
    if (mc.params.axes.size() != 1) fail(n, what + ": wave packets need a one-axis model");
}

std::optional<std::vector<double>> positive_list(const YAML::Node& n, const std::string& what) {
    if (!n) return std::nullopt;
    auto v = number_list(n, what);
    for (double x : v)
        if (!(x > 0)) fail(n, what + ": entries must be positive");
    return v;
}

// Threshold candidates tau_a(omega): an explicit list, or the preset
// "free_comparison" ({m_inf}, the bottom of the free comparison spectrum).
std::optional<std::vector<double>> tau_candidates(const YAML::Node& parent, const std::string& what) {
    const YAML::Node n = required(parent, "tau_omega", what);
    if (n.IsScalar()) {
        if (n.as<std::string>() != "free_comparison")
            fail(n, what + ".tau_omega: a list or the preset free_comparison");
        return std::nullopt;
    }
    return positive_list(n, what + ".tau_omega");
}

TaskConfig task_from(const YAML::Node& n, const ModelConfig& mc, const Defaults& dflt) {
    require_map(n, "analysis entry");
    TaskConfig t;
    t.line = n.Mark().line + 1;
    t.kind = scalar<std::string>(required(n, "task", "analysis entry"), "task");
    t.name = get_string(n, "name", t.kind);
    if (t.name.empty() || t.name.find_first_of("/\\ ") != std::string::npos)
        fail(n["name"], "task name must be non-empty without spaces or slashes");
    const std::string w = "task '" + t.name + "'";

    if (t.kind == "spectrum") {
        check_keys(n, w, {"task", "name", "count"});
        SpectrumTask s;
        s.count = get_int(n, "count", s.count);
        if (s.count < 1) fail(n["count"], w + ": count must be positive");
        t.params = s;
    } else if (t.kind == "hvz") {
        check_keys(n, w, {"task", "name", "delta", "band", "truncations"});
        HvzTask s;
        s.delta = get(n, "delta", s.delta);
        s.band = get(n, "band", s.band);
        if (!(s.delta >= 0) || !(s.band > 0)) fail(n, w + ": need delta >= 0 and band > 0");
        s.truncations.emplace_back(mc.params.modes, mc.params.n_max);
        if (const YAML::Node tr = n["truncations"]) {
            if (!tr.IsSequence()) fail(tr, w + ": truncations must be a list");
            for (const auto& e : tr) {
                check_keys(e, w + ".truncations", {"modes", "n_max"});
                const int d = scalar<int>(required(e, "modes", w), "modes");
                const int nm = scalar<int>(required(e, "n_max", w), "n_max");
                const auto& [pd, pn] = s.truncations.back();
                if (d < pd || nm < pn || (d == pd && nm == pn))
                    fail(e, w + ": truncations must grow (modes and n_max non-decreasing, not both equal)");
                s.truncations.emplace_back(d, nm);
            }
        } else {
            s.truncations.emplace_back(mc.params.modes + 2, mc.params.n_max + 1);
        }
        t.params = s;
    } else if (t.kind == "thresholds") {
        check_keys(n, w, {"task", "name", "tau_omega", "cap", "variant"});
        ThresholdsTask s;
        s.tau_omega = tau_candidates(n, w);
        s.cap_above_E0 = get(n, "cap", s.cap_above_E0);
        if (!(s.cap_above_E0 > 0)) fail(n["cap"], w + ": cap must be positive");
        const auto v = get_string(n, "variant", "tau");
        if (v != "tau" && v != "kappa") fail(n["variant"], w + ": variant must be tau or kappa");
        s.variant = v == "tau" ? ThresholdVariant::tau : ThresholdVariant::kappa;
        t.params = s;
    } else if (t.kind == "mourre_scan") {
        check_keys(n, w, {"task", "name", "lo", "hi", "width", "margin", "tau_omega", "reference_fraction"});
        MourreScanTask s;
        s.lo = get(n, "lo", s.lo);
        s.hi = get(n, "hi", s.hi);
        s.width = get(n, "width", s.width);
        s.margin = get(n, "margin", s.margin);
        s.reference_fraction = get(n, "reference_fraction", s.reference_fraction);
        s.tau_omega = tau_candidates(n, w);
        if (!(s.width > 0) || !(s.hi > s.lo)) fail(n, w + ": need width > 0 and hi > lo");
        if ((s.hi - s.lo) / s.width > 10000) fail(n, w + ": too many windows");
        if (!(s.margin >= 0)) fail(n["margin"], w + ": margin must be non-negative");
        t.params = s;
    } else if (t.kind == "virial") {
        check_keys(n, w, {"task", "name", "relative_tol"});
        VirialTask s;
        s.relative_tol = get(n, "relative_tol", dflt.virial_relative);
        t.params = s;
    } else if (t.kind == "propagation") {
        check_keys(n, w,
                   {"task", "name", "estimate", "T_grid", "packet", "chi", "R", "R_factor", "R_prime", "c0", "c1",
                    "J", "epsilon", "thresholds"});
        needs_one_axis(mc, n, w);
        PropagationTask s;
        const YAML::Node est = required(n, "estimate", w);
        try {
            s.kind = estimate_kind_from_string(scalar<std::string>(est, w + ".estimate"));
        } catch (const std::invalid_argument& e) {
            fail(est, w + ": " + e.what());
        }
        const YAML::Node tg = required(n, "T_grid", w);
        s.T_grid = time_list(tg, w + ".T_grid");
        check_increasing(tg, s.T_grid, w + ".T_grid", 1.0, 2);
        if (n["packet"]) s.packet = packet_from(n["packet"], w + ".packet");
        EstimateParams& p = s.params;
        if (const YAML::Node chi = n["chi"]) {
            check_keys(chi, w + ".chi", {"lo", "hi", "flank"});
            p.chi_lo = get(chi, "lo", p.chi_lo);
            p.chi_hi = get(chi, "hi", p.chi_hi);
            p.chi_flank = get(chi, "flank", 0.0);
            if (p.chi_hi < p.chi_lo || p.chi_flank < 0) fail(chi, w + ": need chi.hi >= chi.lo and flank >= 0");
        }
        switch (s.kind) {
            case EstimateKind::maxvel:
                p.R = get(n, "R", 0.0);
                s.R_factor = get(n, "R_factor", 0.0);
                if (n["R"] && n["R_factor"]) fail(n, w + ": give R or R_factor, not both");
                if (!n["R"] && !(s.R_factor > 1)) fail(n, w + ": maxvel needs R or R_factor > 1");
                p.R_prime = number(required(n, "R_prime", w), "R_prime");
                if (n["R"] && !(p.R_prime > p.R)) fail(n["R_prime"], w + ": need R_prime > R");
                break;
            case EstimateKind::phasespace_i:
            case EstimateKind::phasespace_ii:
                p.c0 = number(required(n, "c0", w), "c0");
                p.c1 = number(required(n, "c1", w), "c1");
                if (!(p.c0 > 0 && p.c1 > p.c0)) fail(n, w + ": need 0 < c0 < c1");
                break;
            case EstimateKind::improved:
                p.J = profile_from(required(n, "J", w), w + ".J");
                if (p.J.kind == Profile::Kind::constant) fail(n["J"], w + ": J must be localized");
                break;
            case EstimateKind::minvel: {
                p.epsilon = number(required(n, "epsilon", w), "epsilon");
                if (!(p.epsilon > 0)) fail(n["epsilon"], w + ": epsilon must be positive");
                if (!std::isfinite(p.chi_lo) || !std::isfinite(p.chi_hi))
                    fail(n, w + ": minvel needs a bounded chi window");
                const YAML::Node th = required(n, "thresholds", w);
                check_keys(th, w + ".thresholds", {"tau_omega", "cap"});
                s.threshold_tau = tau_candidates(th, w + ".thresholds");
                s.threshold_cap = number(required(th, "cap", w), "cap");
                if (!(s.threshold_cap > 0)) fail(th["cap"], w + ": thresholds.cap must be positive");
                break;
            }
        }
        t.params = s;
    } else if (t.kind == "scattering") {
        check_keys(n, w, {"task", "name", "T_list", "resolvent_power", "packet", "ladder", "wave_operator"});
        needs_one_axis(mc, n, w);
        ScatteringTask s;
        const YAML::Node tl = required(n, "T_list", w);
        s.T_list = time_list(tl, w + ".T_list");
        check_increasing(tl, s.T_list, w + ".T_list", 0.0, 2);
        s.resolvent_power = get_int(n, "resolvent_power", s.resolvent_power);
        if (s.resolvent_power < 0) fail(n["resolvent_power"], w + ": resolvent_power must be >= 0");
        if (n["packet"]) s.packet = packet_from(n["packet"], w + ".packet");
        s.ladder = get_bool(n, "ladder", s.ladder);
        if (const YAML::Node wo = n["wave_operator"]) {
            check_keys(wo, w + ".wave_operator", {"packets", "k_max"});
            s.wave_packets = packet_list(required(wo, "packets", w), w + ".wave_operator.packets");
            if (s.wave_packets.empty()) fail(wo, w + ": wave_operator needs packets");
            s.k_max = get_int(wo, "k_max", s.k_max);
            if (s.k_max < 1) fail(wo["k_max"], w + ": k_max must be positive");
            if (s.k_max > mc.params.n_max) fail(wo["k_max"], w + ": k_max exceeds n_max");
        }
        t.params = s;
    } else if (t.kind == "completeness") {
        check_keys(n, w, {"task", "name", "energy_cap", "q_sequence", "annihilators", "T_list", "annihilated_tol"});
        needs_one_axis(mc, n, w);
        CompletenessTask s;
        s.energy_cap = get(n, "energy_cap", s.energy_cap);
        if (!(s.energy_cap > 0)) fail(n["energy_cap"], w + ": energy_cap must be positive");
        const YAML::Node qs = required(n, "q_sequence", w);
        if (!qs.IsSequence() || qs.size() == 0) fail(qs, w + ": q_sequence must be a non-empty list");
        for (const auto& q : qs) s.q_sequence.push_back(profile_from(q, w + ".q_sequence"));
        s.annihilators = packet_list(required(n, "annihilators", w), w + ".annihilators");
        if (s.annihilators.empty()) fail(n["annihilators"], w + ": need at least one annihilator");
        const YAML::Node tl = required(n, "T_list", w);
        s.T_list = time_list(tl, w + ".T_list");
        check_increasing(tl, s.T_list, w + ".T_list", 0.0, 2);
        s.annihilated_tol = get(n, "annihilated_tol", dflt.annihilated);
        if (!(s.annihilated_tol > 0)) fail(n, w + ": annihilated_tol must be positive");
        t.params = s;
    } else if (t.kind == "hypotheses") {
        check_keys(n, w, {"task", "name"});
        t.params = HypothesesTask{};
    } else {
        fail(n["task"], "unknown task '" + t.kind + "'");
    }
    return t;
}

// ---------------------------------------------------------------------------
// Running tasks

BuiltModel build_model(const ModelConfig& mc) {
    return mc.kind == ModelKind::pphi2 ? build_pphi2(mc.params) : build_pphi_uv(mc.params);
}

ScatteringModes scattering_modes(const BuiltModel& m, const ModelConfig& mc) {
    return designate_scattering_modes(*m.modes, mc.omega_fraction, mc.length_multiple);
}

cvec packet_vector(const BuiltModel& m, const ScatteringModes& sm, const PacketSpec& p) {
    return wave_packet(*m.modes, p.x0, p.sigma, p.k0, p.scattering_only ? &sm : nullptr);
}

// Eigenvectors below E0 + m_inf, the point-spectrum designation shared with the threshold ladder.
std::vector<Eigen::Index> pp_indices(const QftHamiltonian& h, double margin = 1e-9) {
    std::vector<Eigen::Index> out;
    const double top = h.E0() + h.m_inf - margin;
    for (Eigen::Index i = 0; i < h.eig.dim() && h.eig.values(i) < top; ++i) out.push_back(i);
    return out;
}

double maxvel_R(const PropagationTask& t, const OneParticleModel& op) {
    return t.R_factor > 0 ? t.R_factor * op.velocity_norm() : t.params.R;
}

json vec_json(const rvec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json ladder_json(const ThresholdSet& t) {
    return {{"base", t.base}, {"cap", t.cap}, {"points", t.sums}, {"include_pp", t.include_zero}};
}

json asymptotic_json(const AsymptoticReport& r) {
    return {{"times", r.times},
            {"cauchy_deltas", r.cauchy_deltas},
            {"touches_bound_modes", r.touches_bound_modes},
            {"warnings", r.warnings}};
}

json run_spectrum(const BuiltModel& m, const SpectrumTask& t) {
    const QftHamiltonian& h = m.h;
    const GroundState gs = ground_state(h);
    std::vector<double> ev;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(t.count, h.eig.dim()); ++i) ev.push_back(h.eig.values(i));
    return {{"dim", h.dim()},           {"modes", h.basis.modes()}, {"n_max", h.basis.n_max()},
            {"E0", gs.E0},              {"degeneracy", gs.degeneracy},
            {"m", h.m},                 {"m_inf", h.m_inf},
            {"omega_modes", vec_json(h.omega_modes)}, {"eigenvalues", ev},
            {"warnings", m.warnings}};
}

json run_hvz(const BuiltModel& m, const ModelConfig& mc, const HvzTask& t) {
    std::vector<BuiltModel> extra;
    std::vector<const QftHamiltonian*> hs{&m.h};
    for (std::size_t i = 1; i < t.truncations.size(); ++i) {
        ModelConfig c = mc;
        c.params.modes = t.truncations[i].first;
        c.params.n_max = t.truncations[i].second;
        c.params.stability_tol = -1;
        extra.push_back(build_model(c));
    }
    for (const auto& e : extra) hs.push_back(&e.h);
    const auto rows = hvz_probe(hs, t.delta, t.band);
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"modes", r.modes},
                       {"n_max", r.n_max},
                       {"E0", r.E0},
                       {"count_below", r.count_below},
                       {"count_band", r.count_band},
                       {"mean_spacing", r.mean_spacing},
                       {"weyl_residual", r.weyl_residual}});
    bool stable = true;
    for (const auto& r : rows) stable = stable && r.count_below == rows.front().count_below;
    return {{"delta", t.delta}, {"band", t.band}, {"rows", out}, {"count_stable", stable}};
}

std::vector<double> tau_values(const std::optional<std::vector<double>>& tau, const QftHamiltonian& h) {
    return tau ? *tau : std::vector<double>{h.m_inf};
}

const char* tau_source(const std::optional<std::vector<double>>& tau) {
    return tau ? "explicit" : "preset free_comparison";
}

json run_thresholds(const BuiltModel& m, const ThresholdsTask& t) {
    const QftHamiltonian& h = m.h;
    const ThresholdSet ts =
        threshold_set(h, tau_values(t.tau_omega, h), h.E0() + t.cap_above_E0 * h.m_inf, t.variant);
    std::vector<double> pp;
    for (auto i : pp_indices(h)) pp.push_back(h.eig.values(i));
    json out = ladder_json(ts);
    out["tau_source"] = tau_source(t.tau_omega);
    out["variant"] = t.variant == ThresholdVariant::tau ? "tau" : "kappa";
    out["pp_values"] = pp;
    return out;
}

json run_mourre(const BuiltModel& m, const MourreScanTask& t) {
    const QftHamiltonian& h = m.h;
    const double E0 = h.E0(), mi = h.m_inf;
    const ThresholdSet ladder =
        threshold_set(h, tau_values(t.tau_omega, h), E0 + (t.hi + t.margin + 1.0) * mi, ThresholdVariant::kappa);

    // One-particle reference: [omega, i a] on the omega eigenbasis of the modes.
    HermitianEig one;
    one.values = h.omega_modes;
    one.vectors = cmat::Identity(h.omega_modes.size(), h.omega_modes.size());
    const cmat omega = h.omega_modes.cast<cplx>().asDiagonal();
    const cmat conj = m.modes->conj_modes;
    const cmat b1 = I_unit * (omega * conj - conj * omega);

    MourreOptions opts;
    opts.projected = pp_indices(h);
    opts.threshold_margin = t.margin * mi;

    json rows = json::array();
    int far = 0, far_ok = 0, flagged = 0, containing = 0, silent = 0;
    const auto count = static_cast<int>(std::llround(std::ceil((t.hi - t.lo) / t.width - 1e-9)));
    for (int i = 0; i < count; ++i) {
        const double lo = E0 + (t.lo + i * t.width) * mi;
        const double hi = E0 + std::min(t.hi, t.lo + (i + 1) * t.width) * mi;
        const MourreReport r = mourre_window_test(h, lo, hi, ladder, opts);
        int ref_count = 0;
        const double ref = window_min(one, b1, lo - E0, hi - E0, &ref_count);
        const bool contains = ladder.distance(lo, hi) <= 0;
        const bool is_far = r.distance_to_tau >= t.margin * mi;
        json row = {{"lo", lo},
                    {"hi", hi},
                    {"eigencount", r.eigencount},
                    {"projected", r.projected},
                    {"c0_estimate", r.c0_estimate},
                    {"distance_to_tau", r.distance_to_tau},
                    {"verdict", to_string(r.verdict)},
                    {"reference", ref},
                    {"reference_count", ref_count},
                    {"contains_threshold", contains}};
        if (contains) {
            ++containing;
            if (r.verdict == MourreVerdict::near_threshold) ++flagged;
            if (r.verdict == MourreVerdict::positive) ++silent;
        }
        if (is_far && r.verdict != MourreVerdict::empty_window) {
            ++far;
            const bool ok = std::isfinite(ref) && ref > 0 && r.c0_estimate >= t.reference_fraction * ref;
            row["meets_reference"] = ok;
            if (ok) ++far_ok;
        }
        rows.push_back(row);
    }
    return {{"ladder", ladder_json(ladder)},
            {"tau_source", tau_source(t.tau_omega)},
            {"margin", t.margin * mi},
            {"reference_fraction", t.reference_fraction},
            {"windows", rows},
            {"far_windows", far},
            {"far_windows_meeting_reference", far_ok},
            {"threshold_windows", containing},
            {"threshold_windows_flagged", flagged},
            {"threshold_windows_silently_positive", silent}};
}

json run_virial(const BuiltModel& m, const VirialTask& t) {
    const auto rows = virial_residual(m.h);
    const double scale = op_norm(m.h.commutator_B.mat);
    double worst = 0;
    json out = json::array();
    for (const auto& r : rows) {
        if (r.multiplicity == 1) worst = std::max(worst, r.residual);
        out.push_back({{"eigenvalue", r.eigenvalue}, {"multiplicity", r.multiplicity}, {"residual", r.residual}});
    }
    return {{"rows", out},
            {"commutator_norm", scale},
            {"max_nondegenerate_residual", worst},
            {"relative_tol", t.relative_tol},
            {"pass", worst <= t.relative_tol * std::max(scale, 1e-300)}};
}

cvec one_particle_state(const QftHamiltonian& h, const cvec& hv) {
    const cvec gs = ground_state(h).vector;
    cvec u = ladder(h.basis, hv, LadderKind::create).mat * gs;
    const double n = u.norm();
    if (n == 0) throw NumericFailure("propagation: a*(h) annihilates the ground state");
    return u / n;
}

json scattering_report_json(const ScatteringReport& r) {
    return {{"kind", r.kind},
            {"weight", r.weight},
            {"times", r.times},
            {"integrand_values", r.integrand_values},
            {"cumulative", r.cumulative},
            {"weighted_integral", r.weighted_integral},
            {"approximant_norm_deltas", r.approximant_norm_deltas},
            {"tail_growth", r.tail_growth},
            {"bounded", r.bounded},
            {"negative_part", r.negative_part}};
}

json run_propagation(const BuiltModel& m, const ModelConfig& mc, const PropagationTask& t) {
    const QftHamiltonian& h = m.h;
    EstimateParams p = t.params;
    if (t.kind == EstimateKind::maxvel) {
        p.R = maxvel_R(t, *m.one_particle);
        if (!(p.R_prime > p.R)) throw std::invalid_argument("propagation: need R_prime > R");
    }
    if (t.kind == EstimateKind::minvel)
        p.thresholds = threshold_set(h, tau_values(t.threshold_tau, h), h.E0() + t.threshold_cap * h.m_inf, ThresholdVariant::kappa);
    const ScatteringModes sm = scattering_modes(m, mc);
    const cvec u = one_particle_state(h, packet_vector(m, sm, t.packet));
    const ScatteringReport r = estimate_scan(h, t.kind, p, u, t.T_grid);
    json out = scattering_report_json(r);
    out["v_max"] = m.one_particle->velocity_norm();
    if (t.kind == EstimateKind::maxvel) out["R"] = p.R;
    if (p.thresholds) out["thresholds"] = ladder_json(*p.thresholds);
    return out;
}

json run_scattering(const BuiltModel& m, const ModelConfig& mc, const ScatteringTask& t) {
    const QftHamiltonian& h = m.h;
    const ScatteringModes sm = scattering_modes(m, mc);
    const cvec hv = packet_vector(m, sm, t.packet);
    json out;
    out["scattering_modes"] = sm.indices;
    out["weyl"] = asymptotic_json(asymptotic_weyl(h, hv, t.T_list, t.resolvent_power, &sm));
    if (t.ladder) {
        const LadderReport lr = asymptotic_ladder(h, hv, LadderKind::annihilate, t.T_list, t.resolvent_power, &sm);
        json l = asymptotic_json(lr);
        l["ccr_residual"] = lr.ccr_residual;
        l["vacuum_norm"] = lr.vacuum_norm;
        out["ladder"] = l;
    }
    if (!t.wave_packets.empty()) {
        const auto pp = pp_indices(h);
        cmat bound(h.dim(), static_cast<Eigen::Index>(pp.size()));
        rvec energies(static_cast<Eigen::Index>(pp.size()));
        for (std::size_t i = 0; i < pp.size(); ++i) {
            bound.col(static_cast<Eigen::Index>(i)) = h.eig.vectors.col(pp[i]);
            energies(static_cast<Eigen::Index>(i)) = h.eig.values(pp[i]);
        }
        std::vector<cvec> packets;
        for (const auto& p : t.wave_packets) packets.push_back(packet_vector(m, sm, p));
        const WaveOperatorReport w = wave_operator(h, bound, energies, packets, t.k_max, t.T_list.back());
        out["wave_operator"] = {{"columns", w.columns.cols()},
                                {"column_energies", w.column_energies},
                                {"isometry_defect", w.isometry_defect},
                                {"intertwining_defects", w.intertwining_defects},
                                {"intertwining_max", w.intertwining_max},
                                {"fock_defect", w.fock_defect},
                                {"packets", w.packets},
                                {"T", t.T_list.back()}};
    }
    return out;
}

json run_completeness(const BuiltModel& m, const ModelConfig& mc, const CompletenessTask& t) {
    CompletenessOptions o;
    o.energy_cap = t.energy_cap * m.h.m_inf;
    o.q_sequence = t.q_sequence;
    o.T_list = t.T_list;
    o.scattering = scattering_modes(m, mc);
    o.annihilated_tol = t.annihilated_tol;
    for (const auto& p : t.annihilators) o.annihilators.push_back(packet_vector(m, o.scattering, p));
    const CompletenessReport r = completeness_report(m.h, o);
    json items = json::array();
    for (const auto& it : r.items)
        items.push_back({{"energy", it.energy},
                         {"p0_weight", it.p0_weight},
                         {"max_annihilator", it.max_annihilator},
                         {"annihilator_delta", it.annihilator_delta},
                         {"n_scattering", it.n_scattering}});
    return {{"count_p0", r.count_p0},
            {"count_annihilated", r.count_annihilated},
            {"count_bound", r.count_bound},
            {"items", items},
            {"idempotency_defect", r.idempotency_defect},
            {"max_cauchy_delta", r.max_cauchy_delta},
            {"verdict", to_string(r.verdict)},
            {"note", r.note},
            {"energy_cap", o.energy_cap},
            {"annihilated_tol", t.annihilated_tol}};
}

// (S) surrogate: the slow mass ||1(<x> <= eps t) e^{-it omega} h|| of a unit
// packet on the designated modes at t = L, for eps = 4/L and eps = 2/L. A
// dispersing packet loses about 1/sqrt 2 of it when eps halves; a bound
// component keeps it.
HypothesisRecord transport_record(const BuiltModel& m, const ModelConfig& mc) {
    HypothesisRecord r{"S", 0.0, 0.9, Verdict::not_applicable, "one axis only"};
    if (m.one_particle->spatial_dim() != 1) return r;
    const auto sc = designate_scattering_modes(*m.modes, mc.omega_fraction, mc.length_multiple);
    if (sc.indices.empty()) {
        r.note = "no designated scattering modes";
        return r;
    }
    const double L = m.one_particle->axes[0].half_length;
    const cvec h = wave_packet(*m.modes, 0.0, 1.0, 0.0, &sc);
    const double wide = slow_mass_probe(*m.modes, h, 4.0 / L, {L}).slow_mass[0];
    const double narrow = slow_mass_probe(*m.modes, h, 2.0 / L, {L}).slow_mass[0];
    r.value = wide > 0 ? narrow / wide : 0.0;
    r.verdict = r.value <= r.threshold ? Verdict::pass : Verdict::fail;
    r.note = "slow mass at t = L, eps = 2/L over eps = 4/L (" + std::to_string(narrow) + " / " +
             std::to_string(wide) + ")";
    return r;
}

json run_hypotheses(const BuiltModel& m, const ModelConfig& mc) {
    json out = json::array();
    auto records = hypothesis_report(m);
    for (auto& r : records)
        if (r.name == "S") r = transport_record(m, mc);
    for (const auto& r : records)
        out.push_back({{"name", r.name},
                       {"value", r.value},
                       {"threshold", r.threshold},
                       {"verdict", to_string(r.verdict)},
                       {"note", r.note}});
    return {{"records", out}, {"warnings", m.warnings}};
}

// CSV time series (t, integrand, cumulative, delta) for propagation and the
// Cauchy deltas (t, delta) for scattering.
std::optional<std::string> task_csv(const TaskConfig& task, const json& result) {
    std::ostringstream s;
    s << std::setprecision(17);
    if (task.kind == "propagation") {
        s << "t,integrand,cumulative,delta\n";
        const auto& t = result["times"];
        for (std::size_t i = 0; i < t.size(); ++i) {
            s << t[i].get<double>() << ',' << result["integrand_values"][i].get<double>() << ','
              << result["cumulative"][i].get<double>() << ',';
            if (i > 0) s << result["approximant_norm_deltas"][i - 1].get<double>();
            s << '\n';
        }
        return s.str();
    }
    if (task.kind == "scattering") {
        s << "t,weyl_delta";
        const bool ladder = result.contains("ladder");
        if (ladder) s << ",ladder_delta";
        s << '\n';
        const auto& w = result["weyl"];
        for (std::size_t i = 0; i < w["times"].size(); ++i) {
            s << w["times"][i].get<double>() << ',';
            if (i > 0) s << w["cauchy_deltas"][i - 1].get<double>();
            if (ladder) {
                s << ',';
                if (i > 0) s << result["ladder"]["cauchy_deltas"][i - 1].get<double>();
            }
            s << '\n';
        }
        return s.str();
    }
    return std::nullopt;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
    if (!f) throw std::runtime_error("write failed: " + p.string());
}

double matrix_bytes(std::int64_t dim) {
    // H0, V, H, A, B, N, dGamma(weight), eigenvectors and two work matrices.
    return 10.0 * 16.0 * static_cast<double>(dim) * static_cast<double>(dim);
}

}  // namespace

ConfigError::ConfigError(const std::string& message, int line, int column)
    : std::runtime_error(anchored(message, line, column)), line_(line), column_(column) {}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream s;
    for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return s.str();
}

ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("parse error: " + e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    if (!root || root.IsNull()) throw ConfigError("empty config");
    check_keys(root, "config", {"seed", "model", "analysis", "output", "tolerances"});

    ExperimentConfig cfg;
    cfg.source = text;
    cfg.hash = sha256_hex(text);
    if (root["seed"]) cfg.seed = scalar<std::uint64_t>(root["seed"], "seed");
    cfg.model = model_from(required(root, "model", "config"));

    Defaults dflt;
    if (const YAML::Node tol = root["tolerances"]) {
        check_keys(tol, "tolerances", {"virial_relative", "annihilated"});
        dflt.virial_relative = get(tol, "virial_relative", dflt.virial_relative);
        dflt.annihilated = get(tol, "annihilated", dflt.annihilated);
    }

    const YAML::Node analysis = required(root, "analysis", "config");
    if (!analysis.IsSequence() || analysis.size() == 0) fail(analysis, "analysis must be a non-empty list of tasks");
    std::set<std::string> names;
    for (const auto& t : analysis) {
        cfg.tasks.push_back(task_from(t, cfg.model, dflt));
        if (!names.insert(cfg.tasks.back().name).second)
            fail(t, "duplicate task name '" + cfg.tasks.back().name + "'");
    }

    if (const YAML::Node out = root["output"]) {
        check_keys(out, "output", {"directory", "formats"});
        if (out["directory"]) cfg.output.directory = scalar<std::string>(out["directory"], "output.directory");
        if (const YAML::Node f = out["formats"]) {
            if (!f.IsSequence()) fail(f, "output.formats must be a list");
            cfg.output.json = cfg.output.csv = false;
            for (const auto& x : f) {
                const auto s = scalar<std::string>(x, "output.formats");
                if (s == "json") {
                    cfg.output.json = true;
                } else if (s == "csv") {
                    cfg.output.csv = true;
                } else {
                    fail(x, "output.formats: json or csv");
                }
            }
            if (!cfg.output.json) fail(f, "output.formats must include json");
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return parse_config(s.str());
}

std::vector<CapacityEntry> predict_capacity(const ExperimentConfig& cfg) {
    std::vector<CapacityEntry> out;
    const ModelParams& p = cfg.model.params;
    auto add = [&](const std::string& what, int d, int n) {
        CapacityEntry e{what, d, n, binomial(d + n, n), 0.0};
        e.bytes = matrix_bytes(e.dim);
        out.push_back(e);
        if (e.dim > p.dim_cap)
            throw CapacityError(what + ": Fock dimension " + std::to_string(e.dim) + " for d = " + std::to_string(d) +
                                ", n_max = " + std::to_string(n) + " exceeds the cap " + std::to_string(p.dim_cap));
    };
    add("model", p.modes, p.n_max);
    if (p.stability_tol > 0) add("stability check", p.modes, p.n_max + 1);
    Eigen::Index nodes = 1;
    for (const auto& ax : p.axes) nodes *= ax.points;
    for (const auto& t : cfg.tasks)
        if (const auto* hv = std::get_if<HvzTask>(&t.params))
            for (std::size_t i = 1; i < hv->truncations.size(); ++i) {
                const auto [d, n] = hv->truncations[i];
                if (d > nodes) throw ConfigError("task '" + t.name + "': more modes than grid nodes", t.line);
                add("task '" + t.name + "'", d, n);
            }
    return out;
}

nlohmann::json verify_experiment(const ExperimentConfig& cfg_in, const RunOptions& opts) {
    ExperimentConfig cfg = cfg_in;
    if (opts.force_hypotheses) cfg.model.params.force = true;
    const auto cap = predict_capacity(cfg);

    json prechecks = json::array();
    std::string failed;
    for (const auto& r : coefficient_hypotheses(cfg.model.params)) {
        prechecks.push_back({{"name", r.name}, {"value", r.value}, {"verdict", to_string(r.verdict)}});
        if (r.verdict == Verdict::fail) failed += " " + r.name + " (" + r.note + ")";
    }
    if (!failed.empty() && !cfg.model.params.force) throw HypothesisViolation("model hypotheses failed:" + failed);

    const auto op = one_particle_model(cfg.model.params);
    json tasks = json::array();
    for (const auto& t : cfg.tasks) {
        json row = {{"name", t.name}, {"task", t.kind}, {"line", t.line}};
        if (const auto* pt = std::get_if<PropagationTask>(&t.params); pt && pt->kind == EstimateKind::maxvel) {
            const double R = maxvel_R(*pt, *op);
            row["R"] = R;
            row["v_max"] = op->velocity_norm();
            if (!(R > op->velocity_norm()))
                throw PreconditionViolation("task '" + t.name + "': maxvel needs R > v_max = " +
                                            std::to_string(op->velocity_norm()));
            if (!(pt->params.R_prime > R)) throw ConfigError("task '" + t.name + "': need R_prime > R", t.line);
        }
        tasks.push_back(row);
    }
    json capacity = json::array();
    for (const auto& e : cap)
        capacity.push_back({{"what", e.what}, {"modes", e.modes}, {"n_max", e.n_max}, {"dim", e.dim}, {"bytes", e.bytes}});
    return {{"status", "PASS"},
            {"config_hash", cfg.hash},
            {"seed", opts.seed.value_or(cfg.seed)},
            {"capacity", capacity},
            {"prechecks", prechecks},
            {"tasks", tasks}};
}

nlohmann::json task_result(const BuiltModel& m, const ModelConfig& mc, const TaskConfig& task) {
    return std::visit(
        [&](const auto& t) -> json {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, SpectrumTask>) return run_spectrum(m, t);
            if constexpr (std::is_same_v<T, HvzTask>) return run_hvz(m, mc, t);
            if constexpr (std::is_same_v<T, ThresholdsTask>) return run_thresholds(m, t);
            if constexpr (std::is_same_v<T, MourreScanTask>) return run_mourre(m, t);
            if constexpr (std::is_same_v<T, VirialTask>) return run_virial(m, t);
            if constexpr (std::is_same_v<T, PropagationTask>) return run_propagation(m, mc, t);
            if constexpr (std::is_same_v<T, ScatteringTask>) return run_scattering(m, mc, t);
            if constexpr (std::is_same_v<T, CompletenessTask>) return run_completeness(m, mc, t);
            if constexpr (std::is_same_v<T, HypothesesTask>) return run_hypotheses(m, mc);
        },
        task.params);
}

RunResult run_experiment(ExperimentConfig cfg, const RunOptions& opts) {
    if (opts.force_hypotheses) cfg.model.params.force = true;
    if (opts.seed) cfg.seed = *opts.seed;
    verify_experiment(cfg);

    const BuiltModel model = build_model(cfg.model);
    struct Pending {
        std::string file;
        std::string content;
    };
    std::vector<Pending> pending;
    json entries = json::array();
    for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
        const TaskConfig& t = cfg.tasks[i];
        json result;
        try {
            result = task_result(model, cfg.model, t);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError("task '" + t.name + "': " + e.what(), t.line);
        }
        std::ostringstream stem;
        stem << std::setw(2) << std::setfill('0') << i + 1 << '_' << t.name;
        const json report = {{"schema", report_schema},
                             {"tool_version", tool_version},
                             {"config_hash", cfg.hash},
                             {"seed", cfg.seed},
                             {"task", {{"index", i + 1}, {"kind", t.kind}, {"name", t.name}, {"line", t.line}}},
                             {"result", result}};
        pending.push_back({stem.str() + ".json", report.dump(2) + "\n"});
        json entry = {{"task", t.kind}, {"name", t.name}, {"json", stem.str() + ".json"}};
        if (cfg.output.csv)
            if (auto csv = task_csv(t, result)) {
                pending.push_back({stem.str() + ".csv", *csv});
                entry["csv"] = stem.str() + ".csv";
            }
        entries.push_back(entry);
    }

    RunResult res;
    res.directory = opts.output_dir.value_or(cfg.output.directory);
    std::filesystem::create_directories(res.directory);
    for (const auto& p : pending) {
        write_file(res.directory / p.file, p.content);
        res.files.push_back(p.file);
    }
    res.manifest = {{"schema", report_schema},
                    {"tool_version", tool_version},
                    {"config_hash", cfg.hash},
                    {"seed", cfg.seed},
                    {"dim", model.h.dim()},
                    {"reports", entries},
                    {"files", res.files},
                    {"created", utc_now()}};
    write_file(res.directory / "manifest.json", res.manifest.dump(2) + "\n");
    res.files.push_back("manifest.json");
    return res;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) return 2;
    if (dynamic_cast<const CapacityError*>(&e)) return 3;
    if (dynamic_cast<const HypothesisViolation*>(&e) || dynamic_cast<const PreconditionViolation*>(&e)) return 4;
    return 1;
}

}  // namespace qftlab
