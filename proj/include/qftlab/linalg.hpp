// linalg.hpp - dense linear algebra helpers shared by every module.
//
// All Fock-level objects are complex dense matrices; one-particle objects on
// the grid are real where the physics allows it.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace qftlab {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rmat = Eigen::MatrixXd;
using rvec = Eigen::VectorXd;

inline constexpr cplx I_unit{0.0, 1.0};

// Spectral decomposition of a Hermitian matrix: mat = vectors * diag(values) * vectors^dagger,
// eigenvalues ascending.
struct HermitianEig {
    rvec values;
    cmat vectors;

    [[nodiscard]] Eigen::Index dim() const { return values.size(); }
    // f(mat) through the spectral theorem.
    [[nodiscard]] cmat apply(const std::function<double(double)>& f) const;
    [[nodiscard]] cmat apply_complex(const std::function<cplx(double)>& f) const;
    // Columns whose eigenvalue lies in the closed interval [lo, hi].
    [[nodiscard]] cmat window(double lo, double hi) const;
    [[nodiscard]] std::vector<Eigen::Index> window_indices(double lo, double hi) const;
};

struct RealSymEig {
    rvec values;
    rmat vectors;
    [[nodiscard]] rmat apply(const std::function<double(double)>& f) const;
};

// Throws std::runtime_error if the solver does not converge.
HermitianEig eig_hermitian(const cmat& a);
RealSymEig eig_symmetric(const rmat& a);

// Largest singular value.
double op_norm(const cmat& a);
double op_norm(const rmat& a);
double min_eigenvalue(const cmat& hermitian);
double max_eigenvalue(const cmat& hermitian);

// Hermitian part (a + a^dagger)/2.
cmat hermitian_part(const cmat& a);
double hermiticity_defect(const cmat& a);

inline cmat commutator(const cmat& a, const cmat& b) { return a * b - b * a; }

// exp(i * t * h) for Hermitian h.
cmat expi_hermitian(const cmat& h, double t = 1.0);

cmat kron(const cmat& a, const cmat& b);

// Least squares slope of log(y) against log(x). Entries with y <= floor are skipped;
// returns NaN when fewer than two points survive.
double loglog_slope(std::span<const double> x, std::span<const double> y, double floor = 1e-300);

// Pseudo-inverse power of a positive semidefinite matrix; eigenvalues below cutoff are
// mapped to zero.
cmat psd_power(const cmat& a, double exponent, double cutoff = 1e-12);

}  // namespace qftlab
