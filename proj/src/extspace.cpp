#include "qftlab/extspace.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace qftlab {

ExtBasis::ExtBasis(int modes, int left_cap, int right_cap, int combined_cap)
    : left_(modes, left_cap), right_(modes, right_cap), combined_(2 * modes, combined_cap < 0 ? left_cap : combined_cap) {}

int ExtBasis::total(Eigen::Index pos) const {
    const auto [l, r] = pair_of(pos);
    return left_.total(l) + right_.total(r);
}

cmat canonical_U(const ExtBasis& ext) {
    const int d = ext.modes();
    cmat u = cmat::Zero(ext.combined().dim(), ext.dim());
    std::vector<int> occ(static_cast<std::size_t>(2 * d));
    for (Eigen::Index l = 0; l < ext.left().dim(); ++l) {
        const auto sl = ext.left().state(l);
        std::copy(sl.begin(), sl.end(), occ.begin());
        for (Eigen::Index r = 0; r < ext.right().dim(); ++r) {
            const auto sr = ext.right().state(r);
            std::copy(sr.begin(), sr.end(), occ.begin() + d);
            const Eigen::Index c = ext.combined().index_of(occ);
            if (c >= 0) u(c, ext.pair_index(l, r)) = 1.0;
        }
    }
    return u;
}

double u_leakage(const ExtBasis& ext) {
    Eigen::Index dropped = 0;
    for (Eigen::Index p = 0; p < ext.dim(); ++p)
        if (ext.total(p) > ext.combined().n_max()) ++dropped;
    return static_cast<double>(dropped) / static_cast<double>(ext.dim());
}

namespace {

cmat hstack(const cmat& a, const cmat& b) {
    cmat m(a.rows(), a.cols() + b.cols());
    m << a, b;
    return m;
}

void check_one_particle(const ExtBasis& ext, const OccupationBasis& single, std::initializer_list<const cmat*> ms,
                        const char* what) {
    const int d = ext.modes();
    if (single.modes() != d) throw std::invalid_argument(std::string(what) + ": single basis has the wrong mode count");
    for (const cmat* m : ms)
        if (m->rows() != d || m->cols() != d)
            throw std::invalid_argument(std::string(what) + ": one-particle operators must be " + std::to_string(d) +
                                        "x" + std::to_string(d));
}

}  // namespace

cmat identification_I(const ExtBasis& ext, const OccupationBasis& single) {
    const int d = ext.modes();
    const cmat id = cmat::Identity(d, d);
    return ij_operator(ext, single, id, id, false);
}

cmat ij_operator(const ExtBasis& ext, const OccupationBasis& single, const cmat& j0, const cmat& j_inf, bool adjoint) {
    check_one_particle(ext, single, {&j0, &j_inf}, "ij_operator");
    const cmat m = Gamma_between(single, ext.combined(), hstack(j0, j_inf)) * canonical_U(ext);
    return adjoint ? cmat(m.adjoint()) : m;
}

cmat dij_operator(const ExtBasis& ext, const OccupationBasis& single, const cmat& j0, const cmat& j_inf, const cmat& k0,
                  const cmat& k_inf) {
    check_one_particle(ext, single, {&j0, &j_inf, &k0, &k_inf}, "dij_operator");
    return dGamma_pair_between(single, ext.combined(), hstack(j0, j_inf), hstack(k0, k_inf)) * canonical_U(ext);
}

rvec n_zero_diag(const ExtBasis& ext) {
    rvec v(ext.dim());
    for (Eigen::Index p = 0; p < ext.dim(); ++p) v(p) = ext.left().total(ext.pair_of(p).first);
    return v;
}

rvec n_inf_diag(const ExtBasis& ext) {
    rvec v(ext.dim());
    for (Eigen::Index p = 0; p < ext.dim(); ++p) v(p) = ext.right().total(ext.pair_of(p).second);
    return v;
}

namespace {

rvec right_energies(const OccupationBasis& right, const rvec& omega_modes) {
    if (omega_modes.size() != right.modes())
        throw std::invalid_argument("extended_hamiltonian: omega_modes does not match the right factor");
    rvec e(right.dim());
    for (Eigen::Index i = 0; i < right.dim(); ++i) {
        double s = 0;
        for (int k = 0; k < right.modes(); ++k) s += right.occupation(i, k) * omega_modes(k);
        e(i) = s;
    }
    return e;
}

}  // namespace

ExtendedHamiltonian::ExtendedHamiltonian(const ExtBasis& ext, const cmat& H, const rvec& omega_modes)
    : ExtendedHamiltonian(ext, [&] {
          if (H.rows() != ext.left().dim() || H.cols() != ext.left().dim())
              throw std::invalid_argument("extended_hamiltonian: H does not match the left factor");
          return eig_hermitian(H);
      }(), omega_modes) {}

ExtendedHamiltonian::ExtendedHamiltonian(const ExtBasis& ext, HermitianEig eig, const rvec& omega_modes)
    : eig_(std::move(eig)), right_diag_(right_energies(ext.right(), omega_modes)) {
    if (eig_.dim() != ext.left().dim()) throw std::invalid_argument("extended_hamiltonian: shape mismatch");
}

cmat ExtendedHamiltonian::dense() const {
    const Eigen::Index dl = eig_.dim(), dr = right_diag_.size();
    const cmat h = eig_.vectors * eig_.values.cast<cplx>().asDiagonal() * eig_.vectors.adjoint();
    cmat m = kron(h, cmat::Identity(dr, dr));
    for (Eigen::Index l = 0; l < dl; ++l)
        for (Eigen::Index r = 0; r < dr; ++r) m(l * dr + r, l * dr + r) += right_diag_(r);
    return m;
}

rvec ExtendedHamiltonian::spectrum() const {
    rvec s(dim());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < eig_.dim(); ++i)
        for (Eigen::Index r = 0; r < right_diag_.size(); ++r) s(k++) = eig_.values(i) + right_diag_(r);
    std::sort(s.data(), s.data() + s.size());
    return s;
}

cmat ExtendedHamiltonian::apply_function(const std::function<double(double)>& f, const cmat& x) const {
    const Eigen::Index dl = eig_.dim(), dr = right_diag_.size();
    if (x.rows() != dl * dr) throw std::invalid_argument("ExtendedHamiltonian: vector size mismatch");
    cmat out(x.rows(), x.cols());
    rmat fv(dr, dl);
    for (Eigen::Index r = 0; r < dr; ++r)
        for (Eigen::Index i = 0; i < dl; ++i) fv(r, i) = f(eig_.values(i) + right_diag_(r));
    const cmat vc = eig_.vectors.conjugate();
    const cmat vt = eig_.vectors.transpose();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        // Column-major reshape: M(r, l) = x(l * dr + r).
        const Eigen::Map<const cmat> m(x.col(c).data(), dr, dl);
        cmat coeff = (m * vc).cwiseProduct(fv.cast<cplx>());
        const cmat y = coeff * vt;
        out.col(c) = Eigen::Map<const cvec>(y.data(), dl * dr);
    }
    return out;
}

cmat ExtendedHamiltonian::evolve(double t, const cmat& x) const {
    const Eigen::Index dl = eig_.dim(), dr = right_diag_.size();
    if (x.rows() != dl * dr) throw std::invalid_argument("ExtendedHamiltonian: vector size mismatch");
    // exp(itH) on the left index, phases on the right index.
    cvec ph_l(dl);
    for (Eigen::Index i = 0; i < dl; ++i) ph_l(i) = std::exp(I_unit * t * eig_.values(i));
    const cmat ul = eig_.vectors * ph_l.asDiagonal() * eig_.vectors.adjoint();
    const cmat ult = ul.transpose();
    cvec ph_r(dr);
    for (Eigen::Index r = 0; r < dr; ++r) ph_r(r) = std::exp(I_unit * t * right_diag_(r));
    cmat out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const Eigen::Map<const cmat> m(x.col(c).data(), dr, dl);
        const cmat y = ph_r.asDiagonal() * (m * ult);
        out.col(c) = Eigen::Map<const cvec>(y.data(), dl * dr);
    }
    return out;
}

cvec ExtendedHamiltonian::evolve(double t, const cvec& x) const {
    return evolve(t, cmat(x)).col(0);
}

}  // namespace qftlab
