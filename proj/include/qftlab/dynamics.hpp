// dynamics.hpp - time evolution on the truncated Fock space, the propagation
// estimates, finite-T approximants of the asymptotic fields, Gamma^+(q), P_0^+,
// wave operators, the geometric inverse wave operator and the asymptotic
// completeness probe.
//
// Every asymptotic object is a finite-T approximant. Its T-dependence is
// monitored by Cauchy differences between consecutive times.

#pragma once

#include "qftlab/extspace.hpp"
#include "qftlab/spectral.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qftlab {

// e^{-itH} through the cached eigendecomposition of the bundle. The bundle must
// outlive the propagator.
class Propagator {
public:
    explicit Propagator(const QftHamiltonian& h) : h_(&h) {}

    [[nodiscard]] const QftHamiltonian& hamiltonian() const { return *h_; }
    [[nodiscard]] cvec evolve(const cvec& u, double t) const;
    // chi(H) e^{-itH} u with chi the indicator of [lo, hi], or the smoothed
    // indicator when flank > 0.
    [[nodiscard]] cvec evolve_windowed(const cvec& u, double t, double lo, double hi, double flank = 0.0) const;
    // e^{itH} X e^{-itH}.
    [[nodiscard]] cmat heisenberg(const cmat& X, double t) const;

private:
    const QftHamiltonian* h_;
};

cvec propagate(const QftHamiltonian& h, const cvec& u, double t);

// Free one-particle evolution e^{-it omega} h of a mode vector.
cvec free_evolve(const rvec& omega_modes, const cvec& h, double t);

// P F(<x>/t) P on the mode space.
cmat weight_profile_modes(const ModeSpace& modes, const Profile& F, double t);

// rho(k, l) = <a_k w, a_l w>, so that <w, dGamma(b) w> = sum_kl b(k, l) rho(k, l).
cmat one_body_density(const OccupationBasis& basis, const cvec& w);
double dgamma_expectation(const OccupationBasis& basis, const cmat& b, const cvec& w);

struct ScatteringModes {
    std::vector<int> indices;
    rvec mask;  // 1 on designated modes
    [[nodiscard]] bool contains(int k) const { return mask(k) > 0.5; }
};

// Modes with omega_k >= omega_fraction * m_inf and position spread
// ((e_k, x^2 e_k) - (e_k, x e_k)^2)^{1/2} >= length_multiple * L / 4.
ScatteringModes designate_scattering_modes(const ModeSpace& modes, double omega_fraction = 1.0,
                                           double length_multiple = 1.0);
ScatteringModes all_modes(int d);

// Gaussian packet exp(-(x - x0)^2 / (4 sigma^2) + i k0 x) projected onto the
// modes (or onto the designated subset) and normalized; one axis only.
cvec wave_packet(const ModeSpace& modes, double x0, double sigma, double k0,
                 const ScatteringModes* restrict_to = nullptr);

struct SlowMassProbe {
    double epsilon{0.0};
    std::vector<double> times;
    std::vector<double> slow_mass;  // ||1_{[0, eps]}(<x>/t) e^{-it omega} h||
};

SlowMassProbe slow_mass_probe(const ModeSpace& modes, const cvec& h, double epsilon, const std::vector<double>& times);

enum class EstimateKind { maxvel, phasespace_i, phasespace_ii, improved, minvel };
std::string to_string(EstimateKind k);
EstimateKind estimate_kind_from_string(const std::string& s);

struct EstimateParams {
    // chi = 1 on [chi_lo, chi_hi], falling smoothly to 0 over chi_flank on each
    // side (sharp when chi_flank = 0).
    double chi_lo{-empty_window};
    double chi_hi{empty_window};
    double chi_flank{0.0};
    double R{0.0}, R_prime{0.0};   // maxvel window of <x>/t
    double c0{0.0}, c1{0.0};       // phase-space window of <x>/t
    Profile J = Profile::indicator(0.0, 0.0);  // improved estimate profile
    double epsilon{0.0};           // minvel
    std::optional<ThresholdSet> thresholds;  // minvel: tau union sigma_pp
};

struct ScatteringReport {
    std::string kind;
    std::string weight;  // "dt" or "dt/t"
    std::vector<double> times;
    std::vector<double> integrand_values;
    std::vector<double> cumulative;
    double weighted_integral{0.0};
    std::vector<double> approximant_norm_deltas;  // cumulative increments between consecutive times
    double tail_growth{0.0};        // integral over [T/2, T] divided by the total
    bool bounded{true};
    double negative_part{0.0};      // phasespace_ii: norm of the discarded negative part
};

// Integrals whose total is below this are reported bounded with zero tail.
inline constexpr double integral_floor = 1e-12;

// Trapezoid rule in t; for dt/t the linear interpolant is integrated exactly.
double weighted_trapezoid(const std::vector<double>& t, const std::vector<double>& f, bool over_t, double from,
                          double to);

ScatteringReport estimate_scan(const QftHamiltonian& h, EstimateKind kind, const EstimateParams& params,
                               const cvec& u, const std::vector<double>& T_grid);

struct AsymptoticReport {
    std::vector<double> times;
    std::vector<double> cauchy_deltas;  // ||(X_{T_{k+1}} - X_{T_k}) (H + b)^{-n}||
    cmat approximant;                   // at the last T, with the resolvent factor where applicable
    bool touches_bound_modes{false};
    std::vector<std::string> warnings;
};

// W_T = e^{iTH} W(e^{-iT omega} h) e^{-iTH}; the approximant is W_T itself.
AsymptoticReport asymptotic_weyl(const QftHamiltonian& h, const cvec& hv, const std::vector<double>& T_list,
                                 int resolvent_power, const ScatteringModes* scattering = nullptr);

struct LadderReport : AsymptoticReport {
    double ccr_residual{0.0};   // ||([a_T(h), a_T*(h)] - ||h||^2) u_gs|| at the last T
    double vacuum_norm{0.0};    // ||a_T(h) u_gs|| at the last T, resolvent factor removed
};

// e^{iTH} a#(h_T) (H + b)^{-n} e^{-iTH}.
LadderReport asymptotic_ladder(const QftHamiltonian& h, const cvec& hv, LadderKind kind,
                               const std::vector<double>& T_list, int resolvent_power,
                               const ScatteringModes* scattering = nullptr);

struct GammaPlusReport {
    std::vector<double> times;
    std::vector<cmat> approximants;        // e^{iTH} Gamma(q(<x>/T)) e^{-iTH}
    std::vector<double> cauchy_deltas;     // operator-norm differences between consecutive T
    std::vector<double> commutator_defect; // ||[H, Gamma_T(q)]||
    std::vector<double> order_defect;      // min eig of Gamma_T(q~) - Gamma_T(q), when q~ is given
    std::vector<double> range_defect;      // min(min eig, 1 - max eig) of Gamma_T(q)
};

GammaPlusReport gamma_plus(const QftHamiltonian& h, const Profile& q, const std::vector<double>& T_list,
                           const std::optional<Profile>& q_tilde = std::nullopt);

struct P0Report {
    std::vector<double> idempotency_defects;  // ||P^2 - P|| along the sequence
    std::vector<double> sequence_deltas;      // ||P_{n+1} - P_n||
    cmat projection;                          // last element
};

P0Report p0_plus(const QftHamiltonian& h, const std::vector<Profile>& q_sequence, double T);

struct WaveOperatorReport {
    cmat columns;                          // Gram-orthonormalized
    std::vector<double> column_energies;   // E_i + sum of packet energies <h, omega h>
    double isometry_defect{0.0};           // ||G - 1|| for the normalized raw columns
    std::vector<double> intertwining_defects;
    double intertwining_max{0.0};
    double fock_defect{0.0};               // max ||a_T(h) psi|| over packets and bound states
    int packets{0};
};

// Columns e^{iTH} a*(h_{i1,T}) ... a*(h_{ip,T}) e^{-iTH} psi for p <= k_max over
// multisets of the (orthonormalized) packets.
WaveOperatorReport wave_operator(const QftHamiltonian& h, const cmat& bound_states, const rvec& bound_energies,
                                 const std::vector<cvec>& packets, int k_max, double T);

struct GeometricReport {
    std::vector<double> times;
    std::vector<double> norms;                 // ||W_T(j)||
    std::vector<double> cauchy_deltas;
    std::vector<double> intertwining_defects;  // max over windows of ||W F(H) - F(H^ext) W||
    cmat approximant;                          // last T
};

struct EnergyWindow {
    double lo{0.0}, hi{0.0};
};

// W_T(j) = e^{iTH^ext} I*(j^T) e^{-iTH} with j^T = (j0(<x>/T), jinf(<x>/T)).
GeometricReport geometric_probe(const QftHamiltonian& h, const ExtBasis& ext, const Profile& j0,
                                const Profile& jinf, const std::vector<double>& T_list,
                                const std::vector<EnergyWindow>& windows = {});

enum class CompletenessVerdict { pass, fail, inconclusive };
std::string to_string(CompletenessVerdict v);

struct CompletenessOptions {
    double energy_cap{0.0};              // eigenvalues in [E0, E0 + energy_cap]
    std::vector<Profile> q_sequence;     // P_0^+ sequence
    std::vector<cvec> annihilators;      // tested packets
    std::vector<double> T_list;          // the last entry is the evaluation time
    ScatteringModes scattering;
    double annihilated_tol{0.05};        // ||a_T(h) psi|| / ||h|| below this counts as annihilated
    double rank_threshold{0.5};
};

struct CompletenessItem {
    double energy{0.0};
    double p0_weight{0.0};        // <psi, P psi> for the P_0^+ approximant P
    double max_annihilator{0.0};  // max_h ||a_T(h) psi|| / ||h||
    double annihilator_delta{0.0};
    double n_scattering{0.0};
};

// Verdict inconclusive when some state's annihilator norm lies within its final
// Cauchy difference of the tolerance.
struct CompletenessReport {
    int count_p0{0};
    int count_annihilated{0};
    int count_bound{0};
    std::vector<CompletenessItem> items;
    double idempotency_defect{0.0};
    double max_cauchy_delta{0.0};
    CompletenessVerdict verdict{CompletenessVerdict::inconclusive};
    std::string note;
};

CompletenessReport completeness_report(const QftHamiltonian& h, const CompletenessOptions& opts);

}  // namespace qftlab
