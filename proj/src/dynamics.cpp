#include "qftlab/dynamics.hpp"

#include "qftlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qftlab {

namespace {

cvec phases(const rvec& lambda, double t) {
    cvec p(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) p(i) = std::exp(I_unit * (t * lambda(i)));
    return p;
}

// U^dagger X U at time t in the eigenbasis: D X' D^dagger with D = e^{itLambda}.
cmat eigenbasis_heisenberg(const HermitianEig& eig, const cmat& X, double t) {
    const cvec d = phases(eig.values, t);
    cmat y = eig.vectors.adjoint() * X * eig.vectors;
    return d.asDiagonal() * y * d.conjugate().asDiagonal();
}

rvec resolvent_weights(const QftHamiltonian& h, int n) {
    if (n < 0) throw std::invalid_argument("resolvent power must be >= 0");
    const double b = h.b();
    rvec r(h.dim());
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = std::pow(h.eig.values(i) + b, -n);
    return r;
}

void check_times(const std::vector<double>& T, const char* what, double t_min = 0.0) {
    if (T.empty()) throw std::invalid_argument(std::string(what) + ": empty time list");
    for (std::size_t i = 0; i < T.size(); ++i) {
        if (!(T[i] >= t_min)) throw std::invalid_argument(std::string(what) + ": time below the allowed minimum");
        if (i > 0 && !(T[i] > T[i - 1])) throw std::invalid_argument(std::string(what) + ": times must increase");
    }
}

const ModeSpace& require_modes(const QftHamiltonian& h, const char* what) {
    if (!h.modes) throw std::invalid_argument(std::string(what) + ": the bundle carries no mode space");
    return *h.modes;
}

void check_mode_vector(const QftHamiltonian& h, const cvec& v, const char* what) {
    if (v.size() != h.basis.modes()) throw std::invalid_argument(std::string(what) + ": mode vector size mismatch");
}

bool flag_bound_modes(const cvec& hv, const ScatteringModes* s, std::vector<std::string>& warnings) {
    if (!s) return false;
    double outside = 0;
    for (Eigen::Index k = 0; k < hv.size(); ++k)
        if (!s->contains(static_cast<int>(k))) outside += std::norm(hv(k));
    if (outside <= 1e-12 * std::max(1e-300, hv.squaredNorm())) return false;
    warnings.push_back("h has weight " + std::to_string(std::sqrt(outside)) + " outside the scattering modes");
    return true;
}

// Sampled checks of a profile on s in [0, s_max].
template <class F>
bool all_samples(double s_max, F&& pred) {
    const int n = 4000;
    for (int i = 0; i <= n; ++i)
        if (!pred(s_max * i / n)) return false;
    return true;
}

double support_edge(const Profile& q) {
    double edge = 0;
    const int n = 4000;
    const double s_max = 1e3;
    for (int i = 0; i <= n; ++i) {
        const double s = s_max * std::pow(static_cast<double>(i) / n, 3);
        if (q(s) > 0) edge = s;
    }
    return edge;
}

void check_unit_profile(const Profile& q, const char* what) {
    if (!all_samples(100.0, [&](double s) { return q(s) >= -1e-15 && q(s) <= 1 + 1e-15; }))
        throw std::invalid_argument(std::string(what) + ": profile leaves [0, 1]");
    if (std::abs(q(0.0) - 1.0) > 1e-15) throw std::invalid_argument(std::string(what) + ": profile is not 1 at 0");
}

cmat abs_hermitian(const cmat& a) { return eig_hermitian(hermitian_part(a)).apply([](double x) { return std::abs(x); }); }

}  // namespace

cvec Propagator::evolve(const cvec& u, double t) const {
    const auto& e = h_->eig;
    if (u.size() != e.dim()) throw std::invalid_argument("propagate: vector size mismatch");
    return e.vectors * phases(e.values, -t).cwiseProduct(e.vectors.adjoint() * u);
}

cvec Propagator::evolve_windowed(const cvec& u, double t, double lo, double hi, double flank) const {
    const auto& e = h_->eig;
    if (u.size() != e.dim()) throw std::invalid_argument("propagate: vector size mismatch");
    if (flank < 0) throw std::invalid_argument("propagate: negative flank");
    const Profile up = Profile::smooth_step(lo - flank, lo), down = Profile::cutoff(hi, hi + flank);
    cvec c = e.vectors.adjoint() * u;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        const double l = e.values(i);
        double chi = (l >= lo && l <= hi) ? 1.0 : 0.0;
        if (flank > 0) chi = l < lo ? up(l) : (l > hi ? down(l) : 1.0);
        c(i) *= chi * std::exp(-I_unit * (t * l));
    }
    return e.vectors * c;
}

cmat Propagator::heisenberg(const cmat& X, double t) const {
    const auto& e = h_->eig;
    return e.vectors * eigenbasis_heisenberg(e, X, t) * e.vectors.adjoint();
}

cvec propagate(const QftHamiltonian& h, const cvec& u, double t) { return Propagator(h).evolve(u, t); }

cvec free_evolve(const rvec& omega_modes, const cvec& h, double t) {
    if (h.size() != omega_modes.size()) throw std::invalid_argument("free_evolve: size mismatch");
    return phases(omega_modes, -t).cwiseProduct(h);
}

cmat weight_profile_modes(const ModeSpace& modes, const Profile& F, double t) {
    if (!(t > 0)) throw std::invalid_argument("weight_profile_modes: t must be positive");
    const rvec& w = modes.model->weight_diag;
    rvec f(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) f(i) = F(w(i) / t);
    return modes.compress_diagonal(f);
}

cmat one_body_density(const OccupationBasis& basis, const cvec& w) {
    const int d = basis.modes();
    cmat a(w.size(), d);
    for (int k = 0; k < d; ++k) a.col(k) = apply_annihilate(basis, cvec::Unit(d, k), w);
    return a.adjoint() * a;
}

double dgamma_expectation(const OccupationBasis& basis, const cmat& b, const cvec& w) {
    const cmat rho = one_body_density(basis, w);
    return b.cwiseProduct(rho).sum().real();
}

ScatteringModes designate_scattering_modes(const ModeSpace& modes, double omega_fraction, double length_multiple) {
    const auto& m = *modes.model;
    double L = 0;
    for (const auto& ax : m.axes) L = std::max(L, ax.half_length);
    ScatteringModes s;
    s.mask = rvec::Zero(modes.dim);
    for (int k = 0; k < modes.dim; ++k) {
        double var = 0;
        for (Eigen::Index c = 0; c < m.points.cols(); ++c) {
            double mean = 0, second = 0;
            for (Eigen::Index i = 0; i < m.n; ++i) {
                const double p = m.cell_volume * modes.mode_functions(i, k) * modes.mode_functions(i, k);
                mean += p * m.points(i, c);
                second += p * m.points(i, c) * m.points(i, c);
            }
            var += second - mean * mean;
        }
        if (modes.omega_modes(k) >= omega_fraction * m.m_inf - 1e-12 &&
            std::sqrt(std::max(0.0, var)) >= length_multiple * L / 4) {
            s.indices.push_back(k);
            s.mask(k) = 1.0;
        }
    }
    return s;
}

ScatteringModes all_modes(int d) {
    ScatteringModes s;
    s.mask = rvec::Ones(d);
    for (int k = 0; k < d; ++k) s.indices.push_back(k);
    return s;
}

cvec wave_packet(const ModeSpace& modes, double x0, double sigma, double k0, const ScatteringModes* restrict_to) {
    const auto& m = *modes.model;
    if (m.spatial_dim() != 1) throw std::invalid_argument("wave_packet: one axis only");
    if (!(sigma > 0)) throw std::invalid_argument("wave_packet: sigma must be positive");
    cvec f(m.n);
    for (Eigen::Index i = 0; i < m.n; ++i) {
        const double x = m.points(i, 0);
        f(i) = std::exp(-(x - x0) * (x - x0) / (4 * sigma * sigma)) * std::exp(I_unit * (k0 * x));
    }
    cvec h = modes.from_grid(f);
    if (restrict_to) {
        if (restrict_to->mask.size() != h.size()) throw std::invalid_argument("wave_packet: mask size mismatch");
        h = restrict_to->mask.cast<cplx>().cwiseProduct(h);
    }
    const double n = h.norm();
    if (n == 0) throw NumericFailure("wave_packet: packet has no weight on the modes");
    return h / n;
}

SlowMassProbe slow_mass_probe(const ModeSpace& modes, const cvec& h, double epsilon, const std::vector<double>& times) {
    if (!(epsilon > 0)) throw std::invalid_argument("slow_mass_probe: epsilon must be positive");
    if (h.size() != modes.dim) throw std::invalid_argument("slow_mass_probe: size mismatch");
    const auto& m = *modes.model;
    SlowMassProbe p{epsilon, times, {}};
    for (double t : times) {
        if (!(t > 0)) throw std::invalid_argument("slow_mass_probe: times must be positive");
        const cvec f = modes.to_grid(free_evolve(modes.omega_modes, h, t));
        double mass = 0;
        for (Eigen::Index i = 0; i < m.n; ++i)
            if (m.weight_diag(i) <= epsilon * t) mass += m.cell_volume * std::norm(f(i));
        p.slow_mass.push_back(std::sqrt(mass));
    }
    return p;
}

std::string to_string(EstimateKind k) {
    switch (k) {
        case EstimateKind::maxvel: return "maxvel";
        case EstimateKind::phasespace_i: return "phasespace_i";
        case EstimateKind::phasespace_ii: return "phasespace_ii";
        case EstimateKind::improved: return "improved";
        case EstimateKind::minvel: return "minvel";
    }
    return "?";
}

EstimateKind estimate_kind_from_string(const std::string& s) {
    for (auto k : {EstimateKind::maxvel, EstimateKind::phasespace_i, EstimateKind::phasespace_ii,
                   EstimateKind::improved, EstimateKind::minvel})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown estimate kind: " + s);
}

double weighted_trapezoid(const std::vector<double>& t, const std::vector<double>& f, bool over_t, double from,
                          double to) {
    if (t.size() != f.size()) throw std::invalid_argument("weighted_trapezoid: size mismatch");
    double total = 0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        const double a = std::max(t[i], from), b = std::min(t[i + 1], to);
        if (b <= a) continue;
        const double slope = (f[i + 1] - f[i]) / (t[i + 1] - t[i]);
        const double fa = f[i] + slope * (a - t[i]);
        if (over_t) {
            // integral of (alpha + slope s) / s over [a, b]
            const double alpha = fa - slope * a;
            total += alpha * std::log(b / a) + slope * (b - a);
        } else {
            total += (b - a) * (fa + 0.5 * slope * (b - a));
        }
    }
    return total;
}

ScatteringReport estimate_scan(const QftHamiltonian& h, EstimateKind kind, const EstimateParams& p, const cvec& u,
                               const std::vector<double>& T_grid) {
    const ModeSpace& ms = require_modes(h, "estimate_scan");
    check_times(T_grid, "estimate_scan", 1.0);
    if (T_grid.size() < 2) throw std::invalid_argument("estimate_scan: need at least two times");
    if (u.size() != h.dim()) throw std::invalid_argument("estimate_scan: vector size mismatch");
    if (p.chi_hi < p.chi_lo || p.chi_flank < 0) throw std::invalid_argument("estimate_scan: bad energy window");

    ScatteringReport r;
    r.kind = to_string(kind);
    r.weight = kind == EstimateKind::phasespace_i ? "dt" : "dt/t";
    const auto& model = *ms.model;

    cmat gamma;  // phasespace_ii
    switch (kind) {
        case EstimateKind::maxvel:
            if (!(p.R_prime > p.R)) throw std::invalid_argument("estimate_scan: need R' > R");
            if (!(p.R > model.velocity_norm()))
                throw PreconditionViolation("estimate_scan: maxvel needs R > v_max = " +
                                            std::to_string(model.velocity_norm()));
            break;
        case EstimateKind::phasespace_i:
        case EstimateKind::phasespace_ii:
            if (!(p.c0 > 0 && p.c1 > p.c0)) throw std::invalid_argument("estimate_scan: need 0 < c0 < c1");
            if (kind == EstimateKind::phasespace_ii) {
                const HermitianEig e = eig_hermitian(hermitian_part(ms.accel_modes));
                gamma = e.apply([](double x) { return x > 0 ? std::sqrt(x) : 0.0; });
                r.negative_part = std::max(0.0, -e.values.minCoeff());
            }
            break;
        case EstimateKind::improved:
            if (p.J.kind != Profile::Kind::indicator && p.J.kind != Profile::Kind::bump &&
                p.J.kind != Profile::Kind::smooth_step && p.J.kind != Profile::Kind::cutoff)
                throw std::invalid_argument("estimate_scan: improved needs a localized J profile");
            break;
        case EstimateKind::minvel:
            if (!(p.epsilon > 0)) throw std::invalid_argument("estimate_scan: minvel needs epsilon > 0");
            if (!std::isfinite(p.chi_lo) || !std::isfinite(p.chi_hi))
                throw std::invalid_argument("estimate_scan: minvel needs a bounded energy window");
            if (!p.thresholds) throw std::invalid_argument("estimate_scan: minvel needs the threshold set");
            if (p.thresholds->distance(p.chi_lo - p.chi_flank, p.chi_hi + p.chi_flank) <= 0)
                throw PreconditionViolation("estimate_scan: the energy window meets the threshold set");
            break;
    }

    const Propagator prop(h);
    for (double t : T_grid) {
        const cvec w = prop.evolve_windowed(u, t, p.chi_lo, p.chi_hi, p.chi_flank);
        double val = 0;
        switch (kind) {
            case EstimateKind::maxvel:
                val = dgamma_expectation(h.basis, weight_profile_modes(ms, Profile::indicator(p.R, p.R_prime), t), w);
                break;
            case EstimateKind::phasespace_i: {
                const cmat x = ms.weight_modes.cast<cplx>() / t - ms.velocity_modes;
                const cmat ind = weight_profile_modes(ms, Profile::indicator(p.c0, p.c1), t);
                val = dgamma_expectation(h.basis, x * ind * x, w);
                break;
            }
            case EstimateKind::phasespace_ii: {
                const cmat ind = weight_profile_modes(ms, Profile::indicator(p.c0, p.c1), t);
                val = dgamma_expectation(h.basis, gamma * ind * gamma, w);
                break;
            }
            case EstimateKind::improved: {
                const cmat x = ms.weight_modes.cast<cplx>() / t - ms.velocity_modes;
                const cmat j = weight_profile_modes(ms, p.J, t);
                const cmat y = j * x;
                val = dgamma_expectation(h.basis, abs_hermitian(y + y.adjoint()), w);
                break;
            }
            case EstimateKind::minvel: {
                const cmat q = weight_profile_modes(ms, Profile::indicator(0.0, p.epsilon), t);
                val = (Gamma(h.basis, q).mat * w).squaredNorm();
                break;
            }
        }
        r.times.push_back(t);
        r.integrand_values.push_back(std::max(0.0, val));
    }

    const bool over_t = r.weight == "dt/t";
    for (std::size_t i = 0; i < r.times.size(); ++i)
        r.cumulative.push_back(weighted_trapezoid(r.times, r.integrand_values, over_t, r.times.front(), r.times[i]));
    for (std::size_t i = 1; i < r.cumulative.size(); ++i)
        r.approximant_norm_deltas.push_back(r.cumulative[i] - r.cumulative[i - 1]);
    r.weighted_integral = r.cumulative.back();
    const double T = r.times.back();
    const double tail = weighted_trapezoid(r.times, r.integrand_values, over_t, T / 2, T);
    if (r.weighted_integral <= integral_floor) {
        r.tail_growth = 0;
        r.bounded = true;
    } else {
        r.tail_growth = tail / r.weighted_integral;
        r.bounded = r.tail_growth <= 0.1;
    }
    return r;
}

namespace {

template <class Build>
AsymptoticReport heisenberg_family(const QftHamiltonian& h, const std::vector<double>& T_list, const rvec& r,
                                   Build&& build, cmat& last_eigenbasis) {
    AsymptoticReport rep;
    cmat prev;
    for (double T : T_list) {
        cmat x = eigenbasis_heisenberg(h.eig, build(T), T);
        if (prev.size() > 0) rep.cauchy_deltas.push_back(op_norm(cmat((x - prev) * r.cast<cplx>().asDiagonal())));
        prev = std::move(x);
        rep.times.push_back(T);
    }
    last_eigenbasis = std::move(prev);
    return rep;
}

}  // namespace

AsymptoticReport asymptotic_weyl(const QftHamiltonian& h, const cvec& hv, const std::vector<double>& T_list,
                                 int resolvent_power, const ScatteringModes* scattering) {
    check_mode_vector(h, hv, "asymptotic_weyl");
    check_times(T_list, "asymptotic_weyl");
    const rvec r = resolvent_weights(h, resolvent_power);
    cmat last;
    AsymptoticReport rep = heisenberg_family(
        h, T_list, r, [&](double T) { return weyl_operator(h.basis, free_evolve(h.omega_modes, hv, T)).mat; }, last);
    rep.touches_bound_modes = flag_bound_modes(hv, scattering, rep.warnings);
    rep.approximant = h.eig.vectors * last * h.eig.vectors.adjoint();
    return rep;
}

LadderReport asymptotic_ladder(const QftHamiltonian& h, const cvec& hv, LadderKind kind,
                               const std::vector<double>& T_list, int resolvent_power,
                               const ScatteringModes* scattering) {
    check_mode_vector(h, hv, "asymptotic_ladder");
    check_times(T_list, "asymptotic_ladder");
    const rvec r = resolvent_weights(h, resolvent_power);
    cmat last;
    AsymptoticReport base = heisenberg_family(
        h, T_list, r, [&](double T) { return ladder(h.basis, free_evolve(h.omega_modes, hv, T), kind).mat; }, last);
    LadderReport rep;
    static_cast<AsymptoticReport&>(rep) = std::move(base);
    rep.touches_bound_modes = flag_bound_modes(hv, scattering, rep.warnings);
    rep.approximant = h.eig.vectors * last * r.cast<cplx>().asDiagonal() * h.eig.vectors.adjoint();

    // e^{-iTH} u_gs is a phase times u_gs, so these reduce to the free-evolved h.
    const cvec u = ground_state(h).vector;
    const cvec hT = free_evolve(h.omega_modes, hv, T_list.back());
    const cvec aa = apply_annihilate(h.basis, hT, apply_create(h.basis, hT, u));
    const cvec ab = apply_create(h.basis, hT, apply_annihilate(h.basis, hT, u));
    rep.ccr_residual = (aa - ab - hv.squaredNorm() * u).norm();
    rep.vacuum_norm = apply_annihilate(h.basis, hT, u).norm();
    return rep;
}

GammaPlusReport gamma_plus(const QftHamiltonian& h, const Profile& q, const std::vector<double>& T_list,
                           const std::optional<Profile>& q_tilde) {
    const ModeSpace& ms = require_modes(h, "gamma_plus");
    check_times(T_list, "gamma_plus");
    check_unit_profile(q, "gamma_plus");
    if (q_tilde) check_unit_profile(*q_tilde, "gamma_plus");
    const Propagator prop(h);
    GammaPlusReport rep;
    for (double T : T_list) {
        const cmat g = Gamma(h.basis, weight_profile_modes(ms, q, T)).mat;
        const cmat gh = hermitian_part(g);
        rep.times.push_back(T);
        rep.commutator_defect.push_back(op_norm(cmat(commutator(h.H.mat, g))));
        const HermitianEig e = eig_hermitian(gh);
        rep.range_defect.push_back(std::min(e.values.minCoeff(), 1.0 - e.values.maxCoeff()));
        if (q_tilde) {
            const cmat gt = Gamma(h.basis, weight_profile_modes(ms, *q_tilde, T)).mat;
            rep.order_defect.push_back(min_eigenvalue(hermitian_part(gt - g)));
        }
        cmat a = prop.heisenberg(g, T);
        if (!rep.approximants.empty()) rep.cauchy_deltas.push_back(op_norm(cmat(a - rep.approximants.back())));
        rep.approximants.push_back(std::move(a));
    }
    return rep;
}

P0Report p0_plus(const QftHamiltonian& h, const std::vector<Profile>& q_sequence, double T) {
    const ModeSpace& ms = require_modes(h, "p0_plus");
    if (q_sequence.empty()) throw std::invalid_argument("p0_plus: empty sequence");
    if (!(T > 0)) throw std::invalid_argument("p0_plus: T must be positive");
    double edge = empty_window;
    for (const auto& q : q_sequence) {
        check_unit_profile(q, "p0_plus");
        const double e = support_edge(q);
        if (e > edge) throw std::invalid_argument("p0_plus: supports must decrease along the sequence");
        edge = e;
    }
    const Propagator prop(h);
    P0Report rep;
    for (const auto& q : q_sequence) {
        cmat p = prop.heisenberg(Gamma(h.basis, weight_profile_modes(ms, q, T)).mat, T);
        rep.idempotency_defects.push_back(op_norm(cmat(p * p - p)));
        if (rep.projection.size() > 0) rep.sequence_deltas.push_back(op_norm(cmat(p - rep.projection)));
        rep.projection = std::move(p);
    }
    return rep;
}

namespace {

// Non-decreasing index tuples of length p over n packets.
void multisets(int n, int p, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
    if (static_cast<int>(cur.size()) == p) {
        out.push_back(cur);
        return;
    }
    for (int i = cur.empty() ? 0 : cur.back(); i < n; ++i) {
        cur.push_back(i);
        multisets(n, p, cur, out);
        cur.pop_back();
    }
}

double multiplicity_factor(const std::vector<int>& idx) {
    double f = 1;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && idx[j] == idx[i]) ++j;
        f *= std::tgamma(static_cast<double>(j - i) + 1);
        i = j;
    }
    return f;
}

}  // namespace

WaveOperatorReport wave_operator(const QftHamiltonian& h, const cmat& bound_states, const rvec& bound_energies,
                                 const std::vector<cvec>& packets, int k_max, double T) {
    if (bound_states.rows() != h.dim() || bound_states.cols() != bound_energies.size() || bound_states.cols() == 0)
        throw std::invalid_argument("wave_operator: bound state shape mismatch");
    if (packets.empty()) throw std::invalid_argument("wave_operator: no packets");
    if (k_max < 0) throw std::invalid_argument("wave_operator: k_max must be >= 0");
    const int d = h.basis.modes();
    cmat P(d, static_cast<Eigen::Index>(packets.size()));
    for (std::size_t i = 0; i < packets.size(); ++i) {
        check_mode_vector(h, packets[i], "wave_operator");
        P.col(static_cast<Eigen::Index>(i)) = packets[i];
    }
    // Loewdin orthonormalization keeps each packet as close to its input as possible.
    const cmat G0 = P.adjoint() * P;
    if (min_eigenvalue(G0) < 1e-10 * max_eigenvalue(G0))
        throw std::invalid_argument("wave_operator: packets are linearly dependent");
    P = P * psd_power(G0, -0.5);

    int occupancy = 0;
    for (Eigen::Index i = 0; i < bound_states.cols(); ++i) {
        const cvec& v = bound_states.col(i);
        occupancy = std::max(occupancy, static_cast<int>(std::lround(
                                            (v.adjoint() * h.N.mat * v)(0).real() / v.squaredNorm())));
    }
    if (k_max > h.basis.n_max() - occupancy)
        throw CapacityError("wave_operator: k_max exceeds n_max minus the bound-state occupancy");

    const Propagator prop(h);
    const int np = static_cast<int>(P.cols());
    std::vector<cvec> hT(static_cast<std::size_t>(np)), whT(static_cast<std::size_t>(np));
    WaveOperatorReport rep;
    rep.packets = np;
    std::vector<double> packet_energy;
    for (int a = 0; a < np; ++a) {
        const cvec pa = P.col(a);
        hT[static_cast<std::size_t>(a)] = free_evolve(h.omega_modes, pa, T);
        whT[static_cast<std::size_t>(a)] = h.omega_modes.cast<cplx>().cwiseProduct(hT[static_cast<std::size_t>(a)]);
        packet_energy.push_back((pa.adjoint() * h.omega_modes.cast<cplx>().asDiagonal() * pa)(0).real());
    }

    // e^{iTH} a*(g_1) ... a*(g_p) e^{-iTH} psi with g's already free-evolved.
    auto column = [&](const cvec& psi_T, const std::vector<const cvec*>& gs) {
        cvec v = psi_T;
        for (const cvec* g : gs) v = apply_create(h.basis, *g, v);
        return prop.evolve(v, -T);
    };

    std::vector<cvec> cols;
    for (Eigen::Index b = 0; b < bound_states.cols(); ++b) {
        const cvec psi_T = prop.evolve(bound_states.col(b), T);
        for (int a = 0; a < np; ++a)
            rep.fock_defect =
                std::max(rep.fock_defect, apply_annihilate(h.basis, hT[static_cast<std::size_t>(a)], psi_T).norm());
        for (int p = 0; p <= k_max; ++p) {
            std::vector<std::vector<int>> sets;
            std::vector<int> cur;
            multisets(np, p, cur, sets);
            for (const auto& idx : sets) {
                const double norm = 1.0 / std::sqrt(multiplicity_factor(idx));
                std::vector<const cvec*> gs;
                double energy = bound_energies(b);
                for (int i : idx) {
                    gs.push_back(&hT[static_cast<std::size_t>(i)]);
                    energy += packet_energy[static_cast<std::size_t>(i)];
                }
                cvec c = norm * column(psi_T, gs);
                cvec target = bound_energies(b) * c;
                for (std::size_t j = 0; j < idx.size(); ++j) {
                    auto g2 = gs;
                    g2[j] = &whT[static_cast<std::size_t>(idx[j])];
                    target += norm * column(psi_T, g2);
                }
                rep.intertwining_defects.push_back((h.H.mat * c - target).norm());
                rep.column_energies.push_back(energy);
                cols.push_back(std::move(c));
            }
        }
    }
    cmat C(h.dim(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) C.col(static_cast<Eigen::Index>(i)) = cols[i];
    const cmat G = C.adjoint() * C;
    rep.isometry_defect = op_norm(cmat(G - cmat::Identity(G.rows(), G.cols())));
    rep.intertwining_max = *std::max_element(rep.intertwining_defects.begin(), rep.intertwining_defects.end());
    if (min_eigenvalue(hermitian_part(G)) <= 1e-12) throw NumericFailure("wave_operator: columns are degenerate");
    rep.columns = C * psd_power(hermitian_part(G), -0.5);
    return rep;
}

GeometricReport geometric_probe(const QftHamiltonian& h, const ExtBasis& ext, const Profile& j0, const Profile& jinf,
                                const std::vector<double>& T_list, const std::vector<EnergyWindow>& windows) {
    const ModeSpace& ms = require_modes(h, "geometric_probe");
    check_times(T_list, "geometric_probe");
    if (!ext.left().same_shape(h.basis) || ext.modes() != h.basis.modes())
        throw std::invalid_argument("geometric_probe: extended basis does not match the bundle");
    if (!all_samples(1e3, [&](double s) { return j0(s) * j0(s) + jinf(s) * jinf(s) <= 1 + 1e-12; }))
        throw std::invalid_argument("geometric_probe: j0^2 + jinf^2 exceeds 1");

    const ExtendedHamiltonian hext(ext, h.eig, h.omega_modes);
    GeometricReport rep;
    for (double T : T_list) {
        const cmat istar = ij_operator(ext, h.basis, weight_profile_modes(ms, j0, T),
                                       weight_profile_modes(ms, jinf, T), true);
        const cmat back = h.eig.apply_complex([T](double l) { return std::exp(-I_unit * (T * l)); });
        cmat w = hext.evolve(T, cmat(istar * back));
        rep.times.push_back(T);
        rep.norms.push_back(op_norm(w));
        double idef = 0;
        for (const auto& win : windows) {
            const cmat fh = h.eig.apply([&](double l) { return (l >= win.lo && l <= win.hi) ? 1.0 : 0.0; });
            const cmat fe = hext.apply_function([&](double l) { return (l >= win.lo && l <= win.hi) ? 1.0 : 0.0; }, w);
            idef = std::max(idef, op_norm(cmat(w * fh - fe)));
        }
        rep.intertwining_defects.push_back(idef);
        if (rep.approximant.size() > 0) rep.cauchy_deltas.push_back(op_norm(cmat(w - rep.approximant)));
        rep.approximant = std::move(w);
    }
    return rep;
}

std::string to_string(CompletenessVerdict v) {
    switch (v) {
        case CompletenessVerdict::pass: return "PASS";
        case CompletenessVerdict::fail: return "FAIL";
        case CompletenessVerdict::inconclusive: return "INCONCLUSIVE";
    }
    return "?";
}

CompletenessReport completeness_report(const QftHamiltonian& h, const CompletenessOptions& o) {
    check_times(o.T_list, "completeness_report");
    if (o.annihilators.empty()) throw std::invalid_argument("completeness_report: no annihilator packets");
    if (o.scattering.mask.size() != h.basis.modes())
        throw std::invalid_argument("completeness_report: scattering mask size mismatch");
    const double T = o.T_list.back();
    const double E0 = h.E0();
    const auto idx = h.eig.window_indices(E0 - 1e-9, E0 + o.energy_cap);

    CompletenessReport rep;
    const P0Report p0 = p0_plus(h, o.q_sequence, T);
    rep.idempotency_defect = p0.idempotency_defects.back();

    cmat W(h.dim(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) W.col(static_cast<Eigen::Index>(c)) = h.eig.vectors.col(idx[c]);
    // Gamma^+ commutes with H, so the approximant is pinched onto the eigenspaces
    // of H before counting; the finite-T operator itself does not commute.
    const cmat M = hermitian_part(W.adjoint() * p0.projection * W);
    std::size_t c0 = 0;
    while (c0 < idx.size()) {
        std::size_t c1 = c0 + 1;
        const double e = h.eig.values(idx[c0]);
        while (c1 < idx.size() && h.eig.values(idx[c1]) - e <= 1e-9 * std::max(1.0, std::abs(e))) ++c1;
        const auto n = static_cast<Eigen::Index>(c1 - c0);
        const rvec ev = eig_hermitian(cmat(M.block(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(c0), n, n))).values;
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            if (ev(i) > o.rank_threshold) ++rep.count_p0;
        c0 = c1;
    }

    const Propagator prop(h);
    const cmat Ps = o.scattering.mask.cast<cplx>().asDiagonal();
    std::vector<cvec> packets;
    for (const auto& a : o.annihilators) {
        check_mode_vector(h, a, "completeness_report");
        if (a.norm() == 0) throw std::invalid_argument("completeness_report: zero packet");
        packets.push_back(a / a.norm());
    }
    for (std::size_t c = 0; c < idx.size(); ++c) {
        const cvec psi = W.col(static_cast<Eigen::Index>(c));
        CompletenessItem it;
        it.energy = h.eig.values(idx[c]);
        it.p0_weight = M(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)).real();
        it.n_scattering = dgamma_expectation(h.basis, Ps, psi);
        for (const auto& g : packets) {
            cvec prev;
            for (std::size_t k = 0; k < o.T_list.size(); ++k) {
                const double t = o.T_list[k];
                const cvec a = apply_annihilate(h.basis, free_evolve(h.omega_modes, g, t), psi);
                // e^{itH} a(g_t) e^{-itH} psi
                cvec v = prop.evolve(a, -t) * std::exp(-I_unit * (t * it.energy));
                if (k + 1 == o.T_list.size()) {
                    it.max_annihilator = std::max(it.max_annihilator, a.norm());
                    if (prev.size() > 0) it.annihilator_delta = std::max(it.annihilator_delta, (v - prev).norm());
                }
                prev = std::move(v);
            }
        }
        if (it.max_annihilator <= o.annihilated_tol) ++rep.count_annihilated;
        if (it.n_scattering < 0.5) ++rep.count_bound;
        rep.max_cauchy_delta = std::max(rep.max_cauchy_delta, it.annihilator_delta);
        rep.items.push_back(it);
    }

    int ambiguous = 0;
    for (const auto& it : rep.items)
        if (std::abs(it.max_annihilator - o.annihilated_tol) <= it.annihilator_delta) ++ambiguous;
    if (ambiguous > 0) {
        rep.verdict = CompletenessVerdict::inconclusive;
        rep.note = std::to_string(ambiguous) + " states within the final Cauchy difference (max " +
                   std::to_string(rep.max_cauchy_delta) + ") of the annihilation tolerance";
    } else if (rep.count_p0 == rep.count_annihilated && rep.count_annihilated == rep.count_bound) {
        rep.verdict = CompletenessVerdict::pass;
        rep.note = "counts agree: " + std::to_string(rep.count_bound);
    } else {
        rep.verdict = CompletenessVerdict::fail;
        rep.note = "counts differ: P0 " + std::to_string(rep.count_p0) + ", annihilated " +
                   std::to_string(rep.count_annihilated) + ", bound " + std::to_string(rep.count_bound);
    }
    return rep;
}

}  // namespace qftlab
