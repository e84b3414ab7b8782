#include "qftlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qftlab {

QftHamiltonian make_hamiltonian(OccupationBasis basis, const rvec& omega_modes, const cmat& V, const cmat& conj_modes,
                                const cmat& weight_modes, double m, double m_inf) {
    const int d = basis.modes();
    if (omega_modes.size() != d || conj_modes.rows() != d || weight_modes.rows() != d)
        throw std::invalid_argument("make_hamiltonian: one-particle data does not match the mode count");
    if (V.rows() != basis.dim() || V.cols() != basis.dim())
        throw std::invalid_argument("make_hamiltonian: V has the wrong dimension");

    QftHamiltonian h;
    h.omega_modes = omega_modes;
    h.m = m;
    h.m_inf = m_inf;
    h.H0 = dGamma(basis, omega_modes.cast<cplx>().asDiagonal().toDenseMatrix());
    h.V = FockOperator(basis, hermitian_part(V), true);
    h.H = FockOperator(basis, h.H0.mat + h.V.mat, true);
    h.A = dGamma(basis, conj_modes);
    h.commutator_B = FockOperator(basis, hermitian_part(I_unit * commutator(h.H.mat, h.A.mat)), true);
    h.N = number_operator(basis);
    h.weight_dGamma = dGamma(basis, weight_modes);
    h.eig = eig_hermitian(h.H.mat);
    h.basis = std::move(basis);
    return h;
}

QftHamiltonian make_hamiltonian(OccupationBasis basis, std::shared_ptr<const ModeSpace> modes, const cmat& V) {
    if (!modes) throw std::invalid_argument("make_hamiltonian: null mode space");
    QftHamiltonian h = make_hamiltonian(std::move(basis), modes->omega_modes, V, modes->conj_modes,
                                        modes->weight_modes.cast<cplx>(), modes->model->mass_gap,
                                        modes->model->m_inf);
    h.modes = std::move(modes);
    return h;
}

GroundState ground_state(const QftHamiltonian& h, double tol) {
    GroundState g;
    g.E0 = h.eig.values(0);
    g.vector = h.eig.vectors.col(0);
    const double t = tol * std::max(1.0, std::abs(g.E0));
    g.degeneracy = 1;
    while (g.degeneracy < h.eig.dim() && h.eig.values(g.degeneracy) - g.E0 <= t) ++g.degeneracy;
    return g;
}

double weyl_sequence_residual(const QftHamiltonian& h, int k) {
    const int d = h.basis.modes();
    if (k < 0 || k >= d) throw std::out_of_range("weyl_sequence_residual: mode index");
    cvec e = cvec::Zero(d);
    e(k) = 1.0;
    const cvec u = apply_create(h.basis, e, h.eig.vectors.col(0));
    const double nu = u.norm();
    if (nu == 0.0) return std::numeric_limits<double>::quiet_NaN();
    const cvec r = h.H.mat * u - (h.E0() + h.omega_modes(k)) * u;
    return r.norm() / nu;
}

HvzRow hvz_row(const QftHamiltonian& h, double delta, double band) {
    HvzRow row;
    row.modes = h.basis.modes();
    row.n_max = h.basis.n_max();
    row.E0 = h.E0();
    const double lo = row.E0 + h.m_inf;
    std::vector<double> in_band;
    for (Eigen::Index i = 0; i < h.eig.dim(); ++i) {
        const double e = h.eig.values(i);
        if (e < lo - delta) ++row.count_below;
        if (e >= lo && e <= lo + band) in_band.push_back(e);
    }
    row.count_band = static_cast<int>(in_band.size());
    row.mean_spacing = in_band.size() < 2 ? std::numeric_limits<double>::quiet_NaN()
                                          : (in_band.back() - in_band.front()) / double(in_band.size() - 1);
    row.weyl_residual = weyl_sequence_residual(h, row.modes - 1);
    return row;
}

std::vector<HvzRow> hvz_probe(const std::vector<const QftHamiltonian*>& truncations, double delta, double band) {
    std::vector<HvzRow> rows;
    for (std::size_t i = 0; i < truncations.size(); ++i) {
        if (i > 0) {
            const auto& a = truncations[i - 1]->basis;
            const auto& b = truncations[i]->basis;
            if (b.modes() < a.modes() || b.n_max() < a.n_max() || (b.modes() == a.modes() && b.n_max() == a.n_max()))
                throw std::invalid_argument("hvz_probe: truncations must increase");
        }
        rows.push_back(hvz_row(*truncations[i], delta, band));
    }
    return rows;
}

double window_min(const HermitianEig& eig, const cmat& B, double lo, double hi, int* count) {
    const cmat p = eig.window(lo, hi);
    if (count) *count = static_cast<int>(p.cols());
    if (p.cols() == 0) return empty_window;
    return min_eigenvalue(hermitian_part(p.adjoint() * B * p));
}

std::vector<RhoRow> rho_lower_bound(const HermitianEig& eig, const cmat& B, double lambda,
                                    const std::vector<double>& widths) {
    if (B.rows() != eig.dim() || B.cols() != eig.dim())
        throw std::invalid_argument("rho_lower_bound: B does not match H");
    std::vector<RhoRow> out;
    out.reserve(widths.size());
    for (double w : widths) {
        if (!(w >= 0)) throw std::invalid_argument("rho_lower_bound: widths must be nonnegative");
        RhoRow r;
        r.width = w;
        r.a_max = window_min(eig, B, lambda - w, lambda + w, &r.count);
        out.push_back(r);
    }
    return out;
}

std::vector<RhoRow> rho_lower_bound(const QftHamiltonian& h, const cmat& B, double lambda,
                                    const std::vector<double>& widths) {
    return rho_lower_bound(h.eig, B, lambda, widths);
}

double tensor_sum_rho_bound(const HermitianEig& e1, const cmat& b1, const HermitianEig& e2, const cmat& b2,
                            double lambda, double width) {
    double best = empty_window;
    for (Eigen::Index i = 0; i < e1.dim(); ++i)
        for (Eigen::Index j = 0; j < e2.dim(); ++j) {
            const double s = e1.values(i) + e2.values(j);
            if (s < lambda - width || s > lambda + width) continue;
            const double r1 = window_min(e1, b1, lambda - e2.values(j) - width, lambda - e2.values(j) + width);
            const double r2 = window_min(e2, b2, lambda - e1.values(i) - width, lambda - e1.values(i) + width);
            best = std::min(best, r1 + r2);
        }
    return best;
}

double ThresholdSet::distance(double lo, double hi) const {
    double best = std::numeric_limits<double>::infinity();
    for (double s : sums) {
        if (s >= lo && s <= hi) return 0.0;
        best = std::min(best, s < lo ? lo - s : s - hi);
    }
    return best;
}

namespace {

void sort_dedup(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (double x : v)
        if (out.empty() || x - out.back() > threshold_dedup_tol) out.push_back(x);
    v.swap(out);
}

}  // namespace

ThresholdSet dgamma1_enumerate(std::vector<double> E, double cap, bool include_zero) {
    for (double e : E) {
        if (!std::isfinite(e)) throw std::invalid_argument("dgamma1_enumerate: entries must be finite");
        if (e <= 0 && e <= cap) throw std::invalid_argument("dgamma1_enumerate: nonpositive entry would not terminate");
    }
    sort_dedup(E);
    ThresholdSet t;
    t.base = E;
    t.cap = cap;
    t.include_zero = include_zero;
    // Breadth-first closure: frontier holds sums with exactly n summands.
    std::vector<double> frontier;
    for (double e : E)
        if (e <= cap + threshold_dedup_tol) frontier.push_back(e);
    std::vector<double> all = frontier;
    while (!frontier.empty()) {
        std::vector<double> next;
        for (double s : frontier)
            for (double e : E)
                if (s + e <= cap + threshold_dedup_tol) next.push_back(s + e);
        sort_dedup(next);
        all.insert(all.end(), next.begin(), next.end());
        frontier.swap(next);
    }
    if (include_zero) all.push_back(0.0);
    sort_dedup(all);
    t.sums = std::move(all);
    return t;
}

ThresholdSet threshold_set(const std::vector<double>& pp_values, const std::vector<double>& tau_a_omega, double cap,
                           ThresholdVariant variant) {
    if (pp_values.empty()) throw std::invalid_argument("threshold_set: no point-spectrum values");
    const double e0 = *std::min_element(pp_values.begin(), pp_values.end());
    const ThresholdSet ladder = dgamma1_enumerate(tau_a_omega, cap - e0, false);
    ThresholdSet t;
    t.base = tau_a_omega;
    std::sort(t.base.begin(), t.base.end());
    t.cap = cap;
    t.include_zero = variant == ThresholdVariant::kappa;
    for (double p : pp_values) {
        for (double s : ladder.sums)
            if (p + s <= cap + threshold_dedup_tol) t.sums.push_back(p + s);
        if (variant == ThresholdVariant::kappa && p <= cap + threshold_dedup_tol) t.sums.push_back(p);
    }
    sort_dedup(t.sums);
    return t;
}

ThresholdSet threshold_set(const QftHamiltonian& h, const std::vector<double>& tau_a_omega, double cap,
                           ThresholdVariant variant, double margin) {
    std::vector<double> pp;
    const double top = h.E0() + h.m_inf - margin;
    for (Eigen::Index i = 0; i < h.eig.dim() && h.eig.values(i) < top; ++i) pp.push_back(h.eig.values(i));
    if (pp.empty()) pp.push_back(h.E0());
    return threshold_set(pp, tau_a_omega, cap, variant);
}

std::vector<VirialRow> virial_residual(const HermitianEig& eig, const cmat& B, double degeneracy_tol) {
    if (B.rows() != eig.dim()) throw std::invalid_argument("virial_residual: B does not match H");
    std::vector<VirialRow> rows;
    const double scale = std::max(1.0, eig.values.cwiseAbs().maxCoeff());
    Eigen::Index i = 0;
    while (i < eig.dim()) {
        Eigen::Index j = i + 1;
        while (j < eig.dim() && eig.values(j) - eig.values(j - 1) <= degeneracy_tol * scale) ++j;
        const cmat p = eig.vectors.middleCols(i, j - i);
        VirialRow r;
        r.eigenvalue = eig.values.segment(i, j - i).mean();
        r.multiplicity = static_cast<int>(j - i);
        r.residual = r.multiplicity == 1 ? std::abs((p.col(0).adjoint() * B * p.col(0))(0))
                                         : op_norm(cmat(p.adjoint() * B * p));
        rows.push_back(r);
        i = j;
    }
    return rows;
}

std::vector<VirialRow> virial_residual(const QftHamiltonian& h) { return virial_residual(h.eig, h.commutator_B.mat); }

std::string to_string(MourreVerdict v) {
    switch (v) {
        case MourreVerdict::empty_window: return "empty-window";
        case MourreVerdict::near_threshold: return "near-threshold";
        case MourreVerdict::positive: return "positive";
        case MourreVerdict::not_positive: return "not-positive";
    }
    return "unknown";
}

MourreReport mourre_window_test(const HermitianEig& eig, const cmat& B, double lo, double hi, const ThresholdSet& tau,
                                const MourreOptions& opts) {
    MourreReport r;
    r.lo = lo;
    r.hi = hi;
    r.distance_to_tau = tau.distance(lo, hi);
    if (hi < lo) return r;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i : eig.window_indices(lo, hi)) {
        ++r.eigencount;
        if (std::find(opts.projected.begin(), opts.projected.end(), i) != opts.projected.end())
            ++r.projected;
        else
            keep.push_back(i);
    }
    if (keep.empty()) return r;
    cmat p(eig.dim(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) p.col(static_cast<Eigen::Index>(c)) = eig.vectors.col(keep[c]);
    r.c0_estimate = min_eigenvalue(hermitian_part(p.adjoint() * B * p));
    if (r.distance_to_tau <= opts.threshold_margin)
        r.verdict = MourreVerdict::near_threshold;
    else
        r.verdict = r.c0_estimate > 0 ? MourreVerdict::positive : MourreVerdict::not_positive;
    return r;
}

MourreReport mourre_window_test(const QftHamiltonian& h, double lo, double hi, const ThresholdSet& tau,
                                const MourreOptions& opts) {
    return mourre_window_test(h.eig, h.commutator_B.mat, lo, hi, tau, opts);
}

}  // namespace qftlab
