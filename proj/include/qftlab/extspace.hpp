// extspace.hpp - the doubled space Gamma(h) (x) Gamma(h), the factorization U
// onto Gamma(h + h), the identification operators I, I(j), dI(j,k) and the
// extended Hamiltonian H (x) 1 + 1 (x) dGamma(omega).
//
// Tensor positions are left-major: (l, r) -> l * right.dim() + r.

#pragma once

#include "qftlab/fock.hpp"

#include <utility>

namespace qftlab {

class ExtBasis {
public:
    // The combined cap defaults to the left cap; U drops tensor states with
    // more particles than that (lossy) and the flag records it.
    ExtBasis(int modes, int left_cap, int right_cap, int combined_cap = -1);

    [[nodiscard]] const OccupationBasis& left() const { return left_; }
    [[nodiscard]] const OccupationBasis& right() const { return right_; }
    [[nodiscard]] const OccupationBasis& combined() const { return combined_; }
    [[nodiscard]] Eigen::Index dim() const { return left_.dim() * right_.dim(); }
    [[nodiscard]] int modes() const { return left_.modes(); }
    [[nodiscard]] bool lossy() const { return combined_.n_max() < left_.n_max() + right_.n_max(); }

    [[nodiscard]] Eigen::Index pair_index(Eigen::Index l, Eigen::Index r) const { return l * right_.dim() + r; }
    [[nodiscard]] std::pair<Eigen::Index, Eigen::Index> pair_of(Eigen::Index pos) const {
        return {pos / right_.dim(), pos % right_.dim()};
    }
    // Total particle number of a tensor position.
    [[nodiscard]] int total(Eigen::Index pos) const;

private:
    OccupationBasis left_, right_, combined_;
};

// combined.dim x ext.dim partial permutation matrix.
cmat canonical_U(const ExtBasis& ext);

// Fraction of tensor basis states sent to zero by U.
double u_leakage(const ExtBasis& ext);

// I = Gamma(i) U with i(h0, h_inf) = h0 + h_inf, mapping into `single`.
cmat identification_I(const ExtBasis& ext, const OccupationBasis& single);

// I(j) = Gamma([j0 j_inf]) U, or its adjoint.
cmat ij_operator(const ExtBasis& ext, const OccupationBasis& single, const cmat& j0, const cmat& j_inf,
                 bool adjoint = false);

// dI(j, k) = dGamma([j0 j_inf], [k0 k_inf]) U.
cmat dij_operator(const ExtBasis& ext, const OccupationBasis& single, const cmat& j0, const cmat& j_inf, const cmat& k0,
                  const cmat& k_inf);

// Number operators on the tensor space: N (x) 1 and 1 (x) N, as diagonals.
rvec n_zero_diag(const ExtBasis& ext);
rvec n_inf_diag(const ExtBasis& ext);

// H^ext = H (x) 1 + 1 (x) dGamma(omega), kept factorized: the left factor by
// its eigendecomposition, the right factor diagonal in the occupation basis.
class ExtendedHamiltonian {
public:
    ExtendedHamiltonian(const ExtBasis& ext, const cmat& H, const rvec& omega_modes);
    ExtendedHamiltonian(const ExtBasis& ext, HermitianEig eig, const rvec& omega_modes);

    [[nodiscard]] const HermitianEig& left_eig() const { return eig_; }
    [[nodiscard]] const rvec& right_diag() const { return right_diag_; }
    [[nodiscard]] Eigen::Index dim() const { return eig_.dim() * right_diag_.size(); }

    // Dense matrix (small cases only).
    [[nodiscard]] cmat dense() const;
    // Ascending eigenvalues: all pairwise sums.
    [[nodiscard]] rvec spectrum() const;
    // exp(i t H^ext) x.
    [[nodiscard]] cvec evolve(double t, const cvec& x) const;
    [[nodiscard]] cmat evolve(double t, const cmat& x) const;
    // f(H^ext) x for a real function.
    [[nodiscard]] cmat apply_function(const std::function<double(double)>& f, const cmat& x) const;

private:
    HermitianEig eig_;
    rvec right_diag_;
};

}  // namespace qftlab
