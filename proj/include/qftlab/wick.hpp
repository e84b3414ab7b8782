// wick.hpp - Wick kernels w = sum w_{p,q} and their quantization
//
//   Wick(w) = sum_{K,K'} w[K;K'] a*_{k_1}...a*_{k_p} a_{k'_1}...a_{k'_q},
//
// where (p, q) counts output (creation) and input (annihilation) legs.  A block
// is stored as a d^p x d^q matrix whose row index is the output tuple and whose
// column index is the input tuple, both row-major in the mode indices.

#pragma once

#include "qftlab/fock.hpp"
#include "qftlab/onep.hpp"

#include <iosfwd>
#include <map>
#include <random>
#include <utility>
#include <vector>

namespace qftlab {

inline constexpr int max_wick_degree = 6;

class WickKernel {
public:
    using Key = std::pair<int, int>;

    WickKernel() = default;
    explicit WickKernel(int modes);

    [[nodiscard]] int modes() const { return modes_; }
    [[nodiscard]] int degree() const;
    [[nodiscard]] bool empty() const { return blocks_.empty(); }
    [[nodiscard]] const std::map<Key, cmat>& blocks() const { return blocks_; }
    [[nodiscard]] bool has_block(int p, int q) const { return blocks_.count({p, q}) != 0; }
    [[nodiscard]] const cmat& block(int p, int q) const;

    // Symmetrizes and adds into any existing (p, q) block.
    WickKernel& add_block(int p, int q, const cmat& data);
    // Stores the block as given; the caller guarantees symmetry.
    WickKernel& set_block_symmetric(int p, int q, cmat data);

    // Largest deviation of any block from its symmetrization.
    [[nodiscard]] double asymmetry_residual() const;
    [[nodiscard]] double frobenius_norm() const;

    WickKernel& operator+=(const WickKernel& o);
    WickKernel& operator*=(cplx s);
    friend WickKernel operator+(WickKernel a, const WickKernel& b) { return a += b; }
    friend WickKernel operator*(cplx s, WickKernel a) { return a *= s; }
    friend WickKernel operator-(WickKernel a, const WickKernel& b) { return a += cplx(-1.0) * b; }

private:
    int modes_{0};
    std::map<Key, cmat> blocks_;
};

// Average of a block over permutations within the output and within the input legs.
cmat symmetrize_block(int d, int p, int q, const cmat& data);

// Single-block kernels.
WickKernel rank_one_11(const cvec& g, const cvec& h);  // |g><h|, i.e. a*(g) a(h)
WickKernel scalar_kernel(int modes, cplx c);

FockOperator wick_assemble(const WickKernel& w, const OccupationBasis& basis);
WickKernel wick_adjoint(const WickKernel& w);

// Symbol of [dGamma(b), Wick(w)].
WickKernel commutator_with_dgamma(const cmat& b, const WickKernel& w);

// Symbol of Gamma(q) Wick(w) Gamma(q)^{-1} for unitary q.
WickKernel gamma_conjugation(const cmat& q, const WickKernel& w);

enum class ContractSide { left, right };

// left:  (h| paired with `count` output legs, sum_j conj(h_j) w[j..;..]
// right: |h) paired with `count` input legs,  sum_j w[..;..j] h_j
// Blocks with too few legs on that side are dropped unless strict is set, in
// which case a too-large count raises invalid_argument.
WickKernel contract(const WickKernel& w, const cvec& h, ContractSide side, int count, bool strict = false);

// [Wick(w), a*(h)] and [Wick(w), a(h)] as kernels.
WickKernel commutator_with_creation(const WickKernel& w, const cvec& h);
WickKernel commutator_with_annihilation(const WickKernel& w, const cvec& h);

// Symbol of W(h) Wick(w) W(-h).
WickKernel weyl_conjugation(const WickKernel& w, const cvec& h);

struct WeylResidual {
    double residual{0.0};    // on states with total number <= sector
    int sector{0};
    double operator_norm{0.0};
};

// ||P (W(h) Wick(w) W(-h) - Wick(weyl_conjugation(w, h))) P|| with P the
// projection onto total number <= sector.
WeylResidual weyl_conjugation_residual(const WickKernel& w, const cvec& h, const OccupationBasis& basis, int sector);

// sum over legs of the Frobenius norm of a inserted on that leg (conj(a) on input legs).
double interleave_norm(const cmat& a_1p, const WickKernel& w);

struct InterleaveRow {
    double R{0.0};
    double norm{0.0};
};

struct InterleaveTable {
    std::vector<InterleaveRow> rows;
    double fitted_exponent{0.0};
};

// interleave_norm with a = j(<x>/R) compressed to the mode space.
InterleaveTable decay_probe_Is(const WickKernel& w, const Profile& j_profile, const std::vector<double>& R_list,
                               const ModeSpace& modes);

// Text record: header line, d, block list, row-major entries.
void write_kernel(std::ostream& os, const WickKernel& w);
WickKernel read_kernel(std::istream& is);

// Random symmetrized kernel with every block (p, q), p + q <= degree.
WickKernel random_kernel(int modes, int degree, std::mt19937_64& rng, bool hermitian = false);

}  // namespace qftlab
