// fock.hpp - truncated bosonic Fock space over d modes.
//
// States are occupation multi-indices with total number <= n_max, ordered by
// total number and then lexicographically.  Creation from the top sector maps
// to zero, so every operator lives on one fixed space.

#pragma once

#include "qftlab/linalg.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace qftlab {

inline constexpr std::int64_t default_dim_cap = 20000;

// binomial(n, k) as a saturating 64-bit integer.
std::int64_t binomial(int n, int k);

class OccupationBasis {
public:
    OccupationBasis() = default;
    OccupationBasis(int modes, int n_max, std::int64_t dim_cap = default_dim_cap);

    [[nodiscard]] int modes() const { return modes_; }
    [[nodiscard]] int n_max() const { return n_max_; }
    [[nodiscard]] Eigen::Index dim() const { return dim_; }

    [[nodiscard]] std::span<const int> state(Eigen::Index i) const {
        return {occ_.data() + i * modes_, static_cast<std::size_t>(modes_)};
    }
    [[nodiscard]] int occupation(Eigen::Index i, int k) const { return occ_[static_cast<std::size_t>(i * modes_ + k)]; }
    [[nodiscard]] int total(Eigen::Index i) const { return total_[static_cast<std::size_t>(i)]; }

    // Position of a multi-index; -1 if it is not in the basis.
    [[nodiscard]] Eigen::Index index_of(std::span<const int> occ) const;

    // Index of state i with one more (fewer) quantum in mode k, -1 if outside.
    [[nodiscard]] Eigen::Index raise(int k, Eigen::Index i) const { return raise_[static_cast<std::size_t>(k * dim_ + i)]; }
    [[nodiscard]] Eigen::Index lower(int k, Eigen::Index i) const { return lower_[static_cast<std::size_t>(k * dim_ + i)]; }

    // First index of sector n (states with total number n); sector_begin(n_max+1) = dim.
    [[nodiscard]] Eigen::Index sector_begin(int n) const;
    [[nodiscard]] Eigen::Index sector_size(int n) const { return sector_begin(n + 1) - sector_begin(n); }

    [[nodiscard]] bool same_shape(const OccupationBasis& o) const { return modes_ == o.modes_ && n_max_ == o.n_max_; }

private:
    int modes_{0};
    int n_max_{0};
    Eigen::Index dim_{0};
    std::vector<int> occ_;
    std::vector<int> total_;
    std::vector<Eigen::Index> raise_;
    std::vector<Eigen::Index> lower_;
    std::vector<Eigen::Index> sector_start_;
};

OccupationBasis build_basis(int d, int n_max, std::int64_t dim_cap = default_dim_cap);

struct FockOperator {
    int modes{0};
    int n_max{0};
    cmat mat;
    bool hermitian_flag{false};

    FockOperator() = default;
    FockOperator(const OccupationBasis& b, cmat m, bool herm = false)
        : modes(b.modes()), n_max(b.n_max()), mat(std::move(m)), hermitian_flag(herm) {}
    [[nodiscard]] Eigen::Index dim() const { return mat.rows(); }
};

enum class LadderKind { create, annihilate };

// a*(h) = sum_k h_k a*_k and a(h) = sum_k conj(h_k) a_k.
FockOperator ladder(const OccupationBasis& basis, const cvec& h, LadderKind kind);
FockOperator field_operator(const OccupationBasis& basis, const cvec& h);
FockOperator weyl_operator(const OccupationBasis& basis, const cvec& h);
FockOperator number_operator(const OccupationBasis& basis);
FockOperator dGamma(const OccupationBasis& basis, const cmat& r);

// Gamma(q) for q : C^{in.modes} -> C^{out.modes}; the matrix is out.dim x in.dim.
cmat Gamma_between(const OccupationBasis& out, const OccupationBasis& in, const cmat& q);
FockOperator Gamma(const OccupationBasis& basis, const cmat& q);

// dGamma(q, r) with q, r : C^{in.modes} -> C^{out.modes}.
cmat dGamma_pair_between(const OccupationBasis& out, const OccupationBasis& in, const cmat& q, const cmat& r);
FockOperator dGamma_pair(const OccupationBasis& basis, const cmat& q, const cmat& r);

// Vector kernels used by higher layers: y = a*(h) x and y = a(h) x.
cvec apply_create(const OccupationBasis& basis, const cvec& h, const cvec& x);
cvec apply_annihilate(const OccupationBasis& basis, const cvec& h, const cvec& x);

cvec vacuum(const OccupationBasis& basis);

// Diagonal mask: 1 on states with total number <= n, 0 elsewhere.
rvec sector_mask(const OccupationBasis& basis, int n);
// Projection onto the states with total number <= n.
cmat sector_projector(const OccupationBasis& basis, int n);

}  // namespace qftlab
