#include "qftlab/fock.hpp"

#include "qftlab/errors.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace qftlab {

std::int64_t binomial(int n, int k) {
    if (k < 0 || n < 0 || k > n) return 0;
    k = std::min(k, n - k);
    constexpr auto big = std::numeric_limits<std::int64_t>::max();
    std::int64_t r = 1;
    for (int i = 1; i <= k; ++i) {
        // r * (n - k + i) / i stays integral at every step.
        const std::int64_t f = n - k + i;
        if (r > big / f) return big;
        r = r * f / i;
    }
    return r;
}

namespace {

void enumerate_sector(int d, int n, std::vector<int>& cur, int pos, std::vector<int>& out) {
    if (pos == d - 1) {
        cur[static_cast<std::size_t>(pos)] = n;
        out.insert(out.end(), cur.begin(), cur.end());
        return;
    }
    for (int v = 0; v <= n; ++v) {
        cur[static_cast<std::size_t>(pos)] = v;
        enumerate_sector(d, n - v, cur, pos + 1, out);
    }
}

}  // namespace

OccupationBasis::OccupationBasis(int modes, int n_max, std::int64_t dim_cap) : modes_(modes), n_max_(n_max) {
    if (modes < 1) throw std::invalid_argument("build_basis: need at least one mode");
    if (n_max < 0) throw std::invalid_argument("build_basis: n_max must be non-negative");
    const std::int64_t dim = binomial(modes + n_max, n_max);
    if (dim > dim_cap)
        throw CapacityError("build_basis: dimension " + std::to_string(dim) + " for d=" + std::to_string(modes) +
                            ", n_max=" + std::to_string(n_max) + " exceeds the cap " + std::to_string(dim_cap));
    dim_ = static_cast<Eigen::Index>(dim);

    occ_.reserve(static_cast<std::size_t>(dim_ * modes_));
    sector_start_.reserve(static_cast<std::size_t>(n_max_) + 2);
    std::vector<int> cur(static_cast<std::size_t>(modes_), 0);
    for (int n = 0; n <= n_max_; ++n) {
        sector_start_.push_back(static_cast<Eigen::Index>(occ_.size() / static_cast<std::size_t>(modes_)));
        enumerate_sector(modes_, n, cur, 0, occ_);
        total_.resize(occ_.size() / static_cast<std::size_t>(modes_), n);
    }
    sector_start_.push_back(dim_);

    raise_.assign(static_cast<std::size_t>(modes_ * dim_), -1);
    lower_.assign(static_cast<std::size_t>(modes_ * dim_), -1);
    std::vector<int> tmp(static_cast<std::size_t>(modes_));
    for (Eigen::Index i = 0; i < dim_; ++i) {
        const auto s = state(i);
        std::copy(s.begin(), s.end(), tmp.begin());
        for (int k = 0; k < modes_; ++k) {
            if (total(i) < n_max_) {
                ++tmp[static_cast<std::size_t>(k)];
                const Eigen::Index j = index_of(tmp);
                --tmp[static_cast<std::size_t>(k)];
                raise_[static_cast<std::size_t>(k * dim_ + i)] = j;
                lower_[static_cast<std::size_t>(k * dim_ + j)] = i;
            }
        }
    }
}

Eigen::Index OccupationBasis::index_of(std::span<const int> occ) const {
    if (static_cast<int>(occ.size()) != modes_) return -1;
    int n = 0;
    for (int v : occ) {
        if (v < 0) return -1;
        n += v;
    }
    if (n > n_max_) return -1;
    Eigen::Index rank = sector_start_[static_cast<std::size_t>(n)];
    int rem = n;
    for (int i = 0; i + 1 < modes_; ++i) {
        const int tail = modes_ - i - 1;  // positions after i
        const int v_i = occ[static_cast<std::size_t>(i)];
        // States sharing the prefix with a smaller entry at i: the remaining
        // rem - v quanta spread over `tail` positions.
        for (int v = 0; v < v_i; ++v) rank += binomial(rem - v + tail - 1, tail - 1);
        rem -= v_i;
    }
    return rank;
}

Eigen::Index OccupationBasis::sector_begin(int n) const {
    if (n < 0) return 0;
    if (n > n_max_) return dim_;
    return sector_start_[static_cast<std::size_t>(n)];
}

OccupationBasis build_basis(int d, int n_max, std::int64_t dim_cap) { return OccupationBasis(d, n_max, dim_cap); }

namespace {

void check_vector(const OccupationBasis& b, const cvec& h, const char* what) {
    if (h.size() != b.modes())
        throw std::invalid_argument(std::string(what) + ": vector has " + std::to_string(h.size()) +
                                    " entries, basis has " + std::to_string(b.modes()) + " modes");
    if (!h.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

void check_square(const OccupationBasis& b, const cmat& r, const char* what) {
    if (r.rows() != b.modes() || r.cols() != b.modes())
        throw std::invalid_argument(std::string(what) + ": matrix must be " + std::to_string(b.modes()) + "x" +
                                    std::to_string(b.modes()));
}

}  // namespace

FockOperator ladder(const OccupationBasis& basis, const cvec& h, LadderKind kind) {
    check_vector(basis, h, "ladder");
    cmat m = cmat::Zero(basis.dim(), basis.dim());
    for (Eigen::Index i = 0; i < basis.dim(); ++i) {
        for (int k = 0; k < basis.modes(); ++k) {
            const Eigen::Index j = basis.raise(k, i);
            if (j < 0 || h(k) == cplx(0.0)) continue;
            const double f = std::sqrt(static_cast<double>(basis.occupation(i, k) + 1));
            if (kind == LadderKind::create) m(j, i) += h(k) * f;
            else m(i, j) += std::conj(h(k)) * f;
        }
    }
    return {basis, std::move(m), false};
}

FockOperator field_operator(const OccupationBasis& basis, const cvec& h) {
    const cmat c = ladder(basis, h, LadderKind::create).mat;
    // a(h) is exactly c^dagger, so only the creation half is assembled.
    cmat phi = (c + c.adjoint()) / std::sqrt(2.0);
    return {basis, std::move(phi), true};
}

FockOperator weyl_operator(const OccupationBasis& basis, const cvec& h) {
    return {basis, expi_hermitian(field_operator(basis, h).mat, 1.0), false};
}

FockOperator number_operator(const OccupationBasis& basis) {
    rvec diag(basis.dim());
    for (Eigen::Index i = 0; i < basis.dim(); ++i) diag(i) = basis.total(i);
    return {basis, cmat(diag.cast<cplx>().asDiagonal()), true};
}

FockOperator dGamma(const OccupationBasis& basis, const cmat& r) {
    check_square(basis, r, "dGamma");
    const Eigen::Index dim = basis.dim();
    const int d = basis.modes();
    cmat m = cmat::Zero(dim, dim);
    // dGamma(r) = sum_{k,l} r_kl a*_k a_l; never leaves the sector.
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (int l = 0; l < d; ++l) {
            const int nl = basis.occupation(i, l);
            if (nl == 0) continue;
            const Eigen::Index j = basis.lower(l, i);
            const double fl = std::sqrt(static_cast<double>(nl));
            for (int k = 0; k < d; ++k) {
                if (r(k, l) == cplx(0.0)) continue;
                const Eigen::Index t = basis.raise(k, j);
                const double fk = std::sqrt(static_cast<double>(basis.occupation(j, k) + 1));
                m(t, i) += r(k, l) * fk * fl;
            }
        }
    }
    const bool herm = (r - r.adjoint()).norm() <= 1e-14 * std::max(1.0, r.norm());
    return {basis, std::move(m), herm};
}

cvec apply_create(const OccupationBasis& basis, const cvec& h, const cvec& x) {
    cvec y = cvec::Zero(basis.dim());
    for (int k = 0; k < basis.modes(); ++k) {
        if (h(k) == cplx(0.0)) continue;
        for (Eigen::Index i = 0; i < basis.dim(); ++i) {
            const Eigen::Index j = basis.raise(k, i);
            if (j < 0 || x(i) == cplx(0.0)) continue;
            y(j) += h(k) * std::sqrt(static_cast<double>(basis.occupation(i, k) + 1)) * x(i);
        }
    }
    return y;
}

cvec apply_annihilate(const OccupationBasis& basis, const cvec& h, const cvec& x) {
    cvec y = cvec::Zero(basis.dim());
    for (int k = 0; k < basis.modes(); ++k) {
        if (h(k) == cplx(0.0)) continue;
        const cplx hk = std::conj(h(k));
        for (Eigen::Index i = 0; i < basis.dim(); ++i) {
            const Eigen::Index j = basis.raise(k, i);
            if (j < 0) continue;
            y(i) += hk * std::sqrt(static_cast<double>(basis.occupation(i, k) + 1)) * x(j);
        }
    }
    return y;
}

namespace {

// Columns of Gamma(q) and, optionally, dGamma(q, r), built one state at a time
// from Gamma(q) a*(e_k) u = a*(q e_k) Gamma(q) u and
// dGamma(q,r) a*(e_k) u = a*(q e_k) dGamma(q,r) u + a*(r e_k) Gamma(q) u.
void lift_columns(const OccupationBasis& out, const OccupationBasis& in, const cmat& q, const cmat* r, cmat& gamma,
                  cmat* dgamma) {
    if (q.rows() != out.modes() || q.cols() != in.modes() ||
        (r && (r->rows() != out.modes() || r->cols() != in.modes())))
        throw std::invalid_argument("Gamma: one-particle map has the wrong shape");
    gamma = cmat::Zero(out.dim(), in.dim());
    if (dgamma) *dgamma = cmat::Zero(out.dim(), in.dim());
    if (in.dim() == 0) return;
    gamma(0, 0) = 1.0;
    cvec scratch;
    for (Eigen::Index i = 1; i < in.dim(); ++i) {
        int k = 0;
        while (in.occupation(i, k) == 0) ++k;
        const Eigen::Index prev = in.lower(k, i);
        const double inv = 1.0 / std::sqrt(static_cast<double>(in.occupation(i, k)));
        gamma.col(i) = inv * apply_create(out, q.col(k), gamma.col(prev));
        if (dgamma) {
            dgamma->col(i) = inv * (apply_create(out, q.col(k), dgamma->col(prev)) +
                                    apply_create(out, r->col(k), gamma.col(prev)));
        }
    }
}

}  // namespace

cmat Gamma_between(const OccupationBasis& out, const OccupationBasis& in, const cmat& q) {
    cmat g;
    lift_columns(out, in, q, nullptr, g, nullptr);
    return g;
}

FockOperator Gamma(const OccupationBasis& basis, const cmat& q) {
    check_square(basis, q, "Gamma");
    const bool herm = (q - q.adjoint()).norm() <= 1e-14 * std::max(1.0, q.norm());
    return {basis, Gamma_between(basis, basis, q), herm};
}

cmat dGamma_pair_between(const OccupationBasis& out, const OccupationBasis& in, const cmat& q, const cmat& r) {
    cmat g, dg;
    lift_columns(out, in, q, &r, g, &dg);
    return dg;
}

FockOperator dGamma_pair(const OccupationBasis& basis, const cmat& q, const cmat& r) {
    check_square(basis, q, "dGamma_pair");
    check_square(basis, r, "dGamma_pair");
    return {basis, dGamma_pair_between(basis, basis, q, r), false};
}

cvec vacuum(const OccupationBasis& basis) {
    cvec v = cvec::Zero(basis.dim());
    v(0) = 1.0;
    return v;
}

rvec sector_mask(const OccupationBasis& basis, int n) {
    rvec m(basis.dim());
    for (Eigen::Index i = 0; i < basis.dim(); ++i) m(i) = basis.total(i) <= n ? 1.0 : 0.0;
    return m;
}

cmat sector_projector(const OccupationBasis& basis, int n) { return sector_mask(basis, n).cast<cplx>().asDiagonal(); }

}  // namespace qftlab
