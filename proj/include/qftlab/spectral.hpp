// spectral.hpp - the Hamiltonian bundle and its spectral diagnostics: ground
// state, HVZ counts, rho lower bounds on sharp spectral windows, threshold
// arithmetic, virial residuals and Mourre window tests.

#pragma once

#include "qftlab/fock.hpp"
#include "qftlab/onep.hpp"
#include "qftlab/wick.hpp"

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qftlab {

struct QftHamiltonian {
    OccupationBasis basis;
    std::shared_ptr<const ModeSpace> modes;  // may be null for synthetic bundles
    rvec omega_modes;
    FockOperator H0, V, H, A, commutator_B, N, weight_dGamma;
    HermitianEig eig;
    double m{0.0};
    double m_inf{0.0};

    [[nodiscard]] double E0() const { return eig.values(0); }
    // b with H + b >= 1.
    [[nodiscard]] double b() const { return 1.0 + std::max(0.0, -E0()); }
    [[nodiscard]] Eigen::Index dim() const { return basis.dim(); }
};

// H0 = dGamma(omega_modes), A = dGamma(conj), B = [H, iA], N, dGamma(weight).
QftHamiltonian make_hamiltonian(OccupationBasis basis, const rvec& omega_modes, const cmat& V, const cmat& conj_modes,
                                const cmat& weight_modes, double m, double m_inf);
QftHamiltonian make_hamiltonian(OccupationBasis basis, std::shared_ptr<const ModeSpace> modes, const cmat& V);

struct GroundState {
    double E0{0.0};
    cvec vector;
    int degeneracy{1};
};

// Eigenvalues within tol * max(1, |E0|) of E0 count as degenerate.
GroundState ground_state(const QftHamiltonian& h, double tol = 1e-9);

struct HvzRow {
    int modes{0};
    int n_max{0};
    double E0{0.0};
    int count_below{0};        // eigenvalues in [E0, E0 + m_inf - delta)
    int count_band{0};         // eigenvalues in [E0 + m_inf, E0 + m_inf + band]
    double mean_spacing{0.0};  // NaN with fewer than two band eigenvalues
    double weyl_residual{0.0}; // top mode
};

HvzRow hvz_row(const QftHamiltonian& h, double delta, double band);
std::vector<HvzRow> hvz_probe(const std::vector<const QftHamiltonian*>& truncations, double delta, double band);

// ||(H - E0 - omega_k) a*(e_k) u_gs|| / ||a*(e_k) u_gs||.
double weyl_sequence_residual(const QftHamiltonian& h, int k);

inline constexpr double empty_window = std::numeric_limits<double>::infinity();

struct RhoRow {
    double width{0.0};
    double a_max{empty_window};
    int count{0};
};

// Smallest eigenvalue of B compressed to the eigenvectors of H in [lambda - w, lambda + w].
double window_min(const HermitianEig& eig, const cmat& B, double lo, double hi, int* count = nullptr);
std::vector<RhoRow> rho_lower_bound(const HermitianEig& eig, const cmat& B, double lambda,
                                    const std::vector<double>& widths);
std::vector<RhoRow> rho_lower_bound(const QftHamiltonian& h, const cmat& B, double lambda,
                                    const std::vector<double>& widths);

// Lower bound for a Kronecker-sum pair (H1 (x) 1 + 1 (x) H2, B1 (x) 1 + 1 (x) B2):
// min over eigenpairs (i, j) with lambda_i + mu_j in the window of
// rho_1(lambda - mu_j) + rho_2(lambda - lambda_i), both at the same width.
double tensor_sum_rho_bound(const HermitianEig& e1, const cmat& b1, const HermitianEig& e2, const cmat& b2,
                            double lambda, double width);

struct ThresholdSet {
    std::vector<double> base;
    double cap{0.0};
    std::vector<double> sums;
    bool include_zero{false};

    [[nodiscard]] double distance(double lo, double hi) const;
};

inline constexpr double threshold_dedup_tol = 1e-9;

ThresholdSet dgamma1_enumerate(std::vector<double> E, double cap, bool include_zero);

enum class ThresholdVariant { tau, kappa };

// pp-values + dGamma^(1)(tau_a_omega) below cap; kappa also keeps the pp-values.
ThresholdSet threshold_set(const std::vector<double>& pp_values, const std::vector<double>& tau_a_omega, double cap,
                           ThresholdVariant variant = ThresholdVariant::tau);
// pp-values taken as the eigenvalues of H below E0 + m_inf - margin.
ThresholdSet threshold_set(const QftHamiltonian& h, const std::vector<double>& tau_a_omega, double cap,
                           ThresholdVariant variant = ThresholdVariant::tau, double margin = 1e-9);

struct VirialRow {
    double eigenvalue{0.0};
    int multiplicity{1};
    double residual{0.0};  // |<u,Bu>|, or the block norm for degenerate eigenvalues
};

std::vector<VirialRow> virial_residual(const HermitianEig& eig, const cmat& B, double degeneracy_tol = 1e-9);
std::vector<VirialRow> virial_residual(const QftHamiltonian& h);

enum class MourreVerdict { empty_window, near_threshold, positive, not_positive };
std::string to_string(MourreVerdict v);

struct MourreReport {
    double lo{0.0}, hi{0.0};
    int eigencount{0};
    int projected{0};
    double c0_estimate{empty_window};
    double distance_to_tau{0.0};
    MourreVerdict verdict{MourreVerdict::empty_window};
};

struct MourreOptions {
    // Eigenvector indices designated as point spectrum; they are removed
    // before compressing.
    std::vector<Eigen::Index> projected;
    // Windows closer than this to tau are flagged near-threshold.
    double threshold_margin{0.0};
};

MourreReport mourre_window_test(const HermitianEig& eig, const cmat& B, double lo, double hi, const ThresholdSet& tau,
                                const MourreOptions& opts = {});
MourreReport mourre_window_test(const QftHamiltonian& h, double lo, double hi, const ThresholdSet& tau,
                                const MourreOptions& opts = {});

}  // namespace qftlab
