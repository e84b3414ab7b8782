#include "qftlab/models.hpp"

#include "qftlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qftlab {

PolynomialSpec PolynomialSpec::monomial(int degree, double lambda, GridFunction g) {
    PolynomialSpec s;
    s.degree = degree;
    s.coefficients[degree] = GridFunction::constant(lambda);
    s.cutoff = std::move(g);
    return s;
}

namespace {

bool is_constant(const GridFunction& f) { return !f.is_table() && f.terms().empty(); }

rvec sample_at(const GridFunction& f, const OneParticleModel& model) {
    rvec v(model.n);
    if (model.spatial_dim() == 1) {
        const auto s = f.sample(model.axes[0].nodes);
        for (Eigen::Index i = 0; i < model.n; ++i) v(i) = s[static_cast<std::size_t>(i)];
        return v;
    }
    if (f.is_table()) throw std::invalid_argument("polynomial: tables are only supported on one axis");
    for (Eigen::Index i = 0; i < model.n; ++i) v(i) = f(model.points.row(i).norm());
    return v;
}

double factorial(int n) { return std::tgamma(n + 1.0); }

// Row-wise Kronecker power: row i is f_i (x) ... (x) f_i (p times), row-major tuple order.
rmat row_kron_power(const rmat& F, int p) {
    rmat m = rmat::Ones(F.rows(), 1);
    for (int s = 0; s < p; ++s) {
        rmat next(F.rows(), m.cols() * F.cols());
        for (Eigen::Index i = 0; i < F.rows(); ++i)
            for (Eigen::Index a = 0; a < m.cols(); ++a)
                next.row(i).segment(a * F.cols(), F.cols()) = m(i, a) * F.row(i);
        m.swap(next);
    }
    return m;
}

// b[r] holds the quadrature-weighted node coefficients of :phi^r:.
WickKernel kernel_from_node_coefficients(const std::map<int, rvec>& b, const rmat& F, int n_max) {
    const int d = static_cast<int>(F.cols());
    WickKernel w(d);
    for (const auto& [r, coeff] : b) {
        if (coeff.cwiseAbs().maxCoeff() == 0.0) continue;
        for (int p = 0; p <= r; ++p) {
            const int q = r - p;
            if (n_max >= 0 && (p > n_max || q > n_max)) continue;
            const double c = static_cast<double>(binomial(r, p)) * std::pow(2.0, -0.5 * r);
            const rmat kp = row_kron_power(F, p);
            const rmat kq = row_kron_power(F, q);
            const rmat block = c * (kp.transpose() * coeff.asDiagonal() * kq);
            w.set_block_symmetric(p, q, block.cast<cplx>());
        }
    }
    return w;
}

}  // namespace

std::shared_ptr<const OneParticleModel> one_particle_model(const ModelParams& params) {
    if (params.axes.empty() || params.axes.size() > 2)
        throw std::invalid_argument("model: one or two grid axes are required");
    std::vector<Grid> grids;
    for (const auto& ax : params.axes) grids.push_back(build_grid(ax.half_length, ax.points, ax.boundary));
    if (grids.size() == 1)
        return std::make_shared<const OneParticleModel>(
            build_one_particle_model(grids[0], params.a_fn, params.c_fn, ConjugateKind::dilation_reg, params.m_inf));
    return std::make_shared<const OneParticleModel>(
        build_one_particle_model_2d(grids[0], grids[1], params.a_fn, params.c_fn, params.m_inf));
}

void validate_polynomial(const PolynomialSpec& spec, PolynomialCheck check) {
    if (spec.degree < 0) throw std::invalid_argument("polynomial: negative degree");
    if (spec.degree > max_polynomial_degree)
        throw std::invalid_argument("polynomial: degree " + std::to_string(spec.degree) + " exceeds the cap " +
                                    std::to_string(max_polynomial_degree));
    for (const auto& [p, f] : spec.coefficients)
        if (p < 0 || p > spec.degree)
            throw std::invalid_argument("polynomial: coefficient index " + std::to_string(p) + " outside [0, degree]");
    if (check == PolynomialCheck::none) return;
    if (spec.degree % 2 != 0) throw std::invalid_argument("polynomial: odd leading degree");
    if (spec.degree == 0) return;
    const auto it = spec.coefficients.find(spec.degree);
    if (it == spec.coefficients.end() || !is_constant(it->second) || !(it->second.offset() > 0))
        throw std::invalid_argument("polynomial: the leading coefficient must be a positive constant");
}

PolynomialSamples sample_polynomial(const PolynomialSpec& spec, const OneParticleModel& model) {
    PolynomialSamples s;
    s.cutoff = sample_at(spec.cutoff, model);
    if (s.cutoff.size() > 0 && s.cutoff.minCoeff() < 0)
        throw std::invalid_argument("polynomial: the cutoff g must be nonnegative");
    for (const auto& [p, f] : spec.coefficients) s.coefficient[p] = sample_at(f, model);
    return s;
}

rmat field_factors(const ModeSpace& modes, std::optional<double> uv_kappa) {
    if (uv_kappa && !(*uv_kappa > 0 && std::isfinite(*uv_kappa)))
        throw std::invalid_argument("field_factors: kappa must be positive and finite");
    rmat F = modes.mode_functions;
    for (int k = 0; k < modes.dim; ++k) {
        const double wk = modes.omega_modes(k);
        const double chi = (!uv_kappa || wk <= *uv_kappa) ? 1.0 : 0.0;
        F.col(k) *= chi / std::sqrt(wk);
    }
    return F;
}

WickKernel wick_order_polynomial(const PolynomialSpec& spec, const ModeSpace& modes, std::optional<double> uv_kappa,
                                 int n_max, PolynomialCheck check) {
    validate_polynomial(spec, check);
    const auto s = sample_polynomial(spec, *modes.model);
    const rmat F = field_factors(modes, uv_kappa);
    std::map<int, rvec> b;
    for (const auto& [r, a] : s.coefficient) b[r] = modes.model->cell_volume * s.cutoff.cwiseProduct(a);
    return kernel_from_node_coefficients(b, F, n_max);
}

WickKernel raw_polynomial_kernel(const PolynomialSpec& spec, const ModeSpace& modes, std::optional<double> uv_kappa,
                                 int n_max, PolynomialCheck check) {
    validate_polynomial(spec, check);
    const auto s = sample_polynomial(spec, *modes.model);
    const rmat F = field_factors(modes, uv_kappa);
    const rvec c = 0.5 * F.rowwise().squaredNorm();
    // phi^r = sum_j r! / (j! 2^j (r - 2j)!) c^j :phi^(r - 2j):, c = <Omega, phi(x)^2 Omega>.
    std::map<int, rvec> b;
    for (const auto& [r, a] : s.coefficient) {
        const rvec ga = modes.model->cell_volume * s.cutoff.cwiseProduct(a);
        for (int j = 0; 2 * j <= r; ++j) {
            const int t = r - 2 * j;
            const double comb = factorial(r) / (factorial(j) * std::pow(2.0, j) * factorial(t));
            rvec add = comb * ga.cwiseProduct(c.array().pow(j).matrix());
            auto it = b.try_emplace(t, rvec::Zero(ga.size())).first;
            it->second += add;
        }
    }
    return kernel_from_node_coefficients(b, F, n_max);
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "PASS";
        case Verdict::fail: return "FAIL";
        case Verdict::not_applicable: return "NOT-APPLICABLE";
    }
    return "unknown";
}

namespace {


// Node coordinates without assembling h.
rmat node_points(const ModelParams& params) {
    std::vector<Grid> grids;
    for (const auto& ax : params.axes) grids.push_back(build_grid(ax.half_length, ax.points, ax.boundary));
    if (grids.size() == 1) {
        rmat p(grids[0].points, 1);
        for (int i = 0; i < grids[0].points; ++i) p(i, 0) = grids[0].nodes[static_cast<std::size_t>(i)];
        return p;
    }
    const int nx = grids[0].points, ny = grids[1].points;
    rmat p(static_cast<Eigen::Index>(nx) * ny, 2);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            p(i + nx * j, 0) = grids[0].nodes[static_cast<std::size_t>(i)];
            p(i + nx * j, 1) = grids[1].nodes[static_cast<std::size_t>(j)];
        }
    return p;
}

rvec sample_points(const GridFunction& f, const rmat& pts) {
    rvec v(pts.rows());
    if (pts.cols() == 1) {
        std::vector<double> nodes(static_cast<std::size_t>(pts.rows()));
        for (Eigen::Index i = 0; i < pts.rows(); ++i) nodes[static_cast<std::size_t>(i)] = pts(i, 0);
        const auto s = f.sample(nodes);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) v(i) = s[static_cast<std::size_t>(i)];
        return v;
    }
    if (f.is_table()) throw std::invalid_argument("model: tables are only supported on one axis");
    for (Eigen::Index i = 0; i < pts.rows(); ++i) v(i) = f(pts.row(i).norm());
    return v;
}

void enforce_prechecks(BuiltModel& m) {
    std::ostringstream failed;
    for (const auto& r : m.prechecks)
        if (r.verdict == Verdict::fail) failed << ' ' << r.name << " (" << r.note << ")";
    if (failed.str().empty()) return;
    if (!m.params.force) throw HypothesisViolation("model hypotheses failed:" + failed.str());
    m.warnings.push_back("built despite failed hypotheses:" + failed.str());
}

BuiltModel assemble(const ModelParams& params, bool wick_ordered) {
    BuiltModel m;
    m.params = params;
    m.prechecks = coefficient_hypotheses(params);
    enforce_prechecks(m);
    m.one_particle = one_particle_model(params);
    m.modes = std::make_shared<const ModeSpace>(mode_truncate(m.one_particle, params.modes));
    m.kernel = wick_ordered
                   ? wick_order_polynomial(params.polynomial, *m.modes, params.uv_kappa, params.n_max)
                   : raw_polynomial_kernel(params.polynomial, *m.modes, params.uv_kappa, params.n_max);
    OccupationBasis basis = build_basis(params.modes, params.n_max, params.dim_cap);
    const cmat V = wick_assemble(m.kernel, basis).mat;
    m.h = make_hamiltonian(std::move(basis), m.modes, V);
    if (params.stability_tol > 0) {
        const OccupationBasis next = build_basis(params.modes, params.n_max + 1, params.dim_cap);
        const WickKernel w = wick_ordered
                                 ? wick_order_polynomial(params.polynomial, *m.modes, params.uv_kappa, params.n_max + 1)
                                 : raw_polynomial_kernel(params.polynomial, *m.modes, params.uv_kappa, params.n_max + 1);
        const cmat H1 = dGamma(next, m.modes->omega_matrix()).mat + wick_assemble(w, next).mat;
        m.E0_next = min_eigenvalue(hermitian_part(H1));
        const double e0 = m.h.E0();
        if (std::abs(*m.E0_next - e0) > params.stability_tol * std::max(1.0, std::abs(e0)))
            m.warnings.push_back("E0 moves by more than the stability tolerance at n_max + 1");
    }
    return m;
}

}  // namespace

std::vector<HypothesisRecord> coefficient_hypotheses(const ModelParams& params) {
    std::vector<HypothesisRecord> out;
    const rmat pts = node_points(params);
    const rvec c = sample_points(params.c_fn, pts);
    const rvec a = sample_points(params.a_fn, pts);
    {
        HypothesisRecord r{"H1", std::min(c.minCoeff(), a.minCoeff()), 0.0, Verdict::pass,
                           "min of a(x), c(x) on the grid; must be > 0"};
        if (!(r.value > r.threshold)) r.verdict = Verdict::fail;
        out.push_back(r);
    }
    const rvec g = sample_points(params.polynomial.cutoff, pts);
    double cell = 1.0;
    for (const auto& ax : params.axes) cell *= build_grid(ax.half_length, ax.points, ax.boundary).spacing;

    rvec weight(pts.rows());
    std::vector<bool> edge(static_cast<std::size_t>(pts.rows()), false);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        weight(i) = std::pow(1.0 + pts.row(i).squaredNorm(), 0.5 * params.decay_s);
        for (std::size_t ax = 0; ax < params.axes.size(); ++ax)
            if (std::abs(pts(i, static_cast<Eigen::Index>(ax))) > 0.5 * params.axes[ax].half_length)
                edge[static_cast<std::size_t>(i)] = true;
    }
    double l2 = 0.0, edge_fraction = 0.0;
    bool finite = g.allFinite() && g.minCoeff() >= 0;
    for (const auto& [p, f] : params.polynomial.coefficients) {
        const rvec ga = g.cwiseProduct(sample_points(f, pts));
        finite = finite && ga.allFinite();
        l2 = std::max(l2, std::sqrt(cell * ga.squaredNorm()));
        const rvec wga = weight.cwiseProduct(ga);
        const double total = wga.squaredNorm();
        if (total == 0.0) continue;
        double outer = 0.0;
        for (Eigen::Index i = 0; i < wga.size(); ++i)
            if (edge[static_cast<std::size_t>(i)]) outer += wga(i) * wga(i);
        edge_fraction = std::max(edge_fraction, outer / total);
    }
    out.push_back({"B1", l2, std::numeric_limits<double>::infinity(), finite ? Verdict::pass : Verdict::fail,
                   "max_p ||g a_p||_2 by quadrature; g must be nonnegative"});
    HypothesisRecord b2{"B2", edge_fraction, 0.1, Verdict::pass,
                        "share of ||<x>^s g a_p||^2 in the outer half of the box"};
    if (!(edge_fraction <= b2.threshold)) b2.verdict = Verdict::fail;
    out.push_back(b2);
    return out;
}

BuiltModel build_pphi2(const ModelParams& params) {
    if (params.axes.size() != 1) throw std::invalid_argument("build_pphi2: exactly one grid axis is required");
    return assemble(params, true);
}

BuiltModel build_pphi_uv(const ModelParams& params) {
    if (!params.uv_kappa) throw std::invalid_argument("build_pphi_uv: kappa is required");
    if (!(*params.uv_kappa > 0) || !std::isfinite(*params.uv_kappa))
        throw std::invalid_argument("build_pphi_uv: kappa out of range");
    Eigen::Index nodes = 1;
    for (const auto& ax : params.axes) nodes *= ax.points;
    if (nodes > 256) throw CapacityError("build_pphi_uv: at most 256 grid nodes");
    return assemble(params, false);
}

InterleaveTable is_decay_probe(const BuiltModel& m) {
    const ModelParams& p = m.params;
    if (p.axes.size() != 1) return decay_probe_Is(m.kernel, p.is_profile, p.is_radii, *m.modes);
    if (p.is_radii.empty() || p.is_points < 2) throw std::invalid_argument("is_decay_probe: radii and points required");
    ModelParams box = p;
    box.axes = {{2.5 * *std::max_element(p.is_radii.begin(), p.is_radii.end()), p.is_points, Boundary::dirichlet}};
    const auto op = one_particle_model(box);
    const ModeSpace modes = mode_truncate(op, static_cast<int>(op->n));
    const WickKernel w = p.uv_kappa ? raw_polynomial_kernel(p.polynomial, modes, p.uv_kappa, -1, PolynomialCheck::none)
                                    : wick_order_polynomial(p.polynomial, modes, std::nullopt, -1, PolynomialCheck::none);
    return decay_probe_Is(w, p.is_profile, p.is_radii, modes);
}

std::vector<HypothesisRecord> hypothesis_report(const BuiltModel& m) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto fin = [](double x) { return std::isfinite(x) ? Verdict::pass : Verdict::fail; };
    std::vector<HypothesisRecord> out = m.prechecks;
    const OneParticleModel& op = *m.one_particle;
    const QftHamiltonian& h = m.h;

    out.push_back({"H1 (mass gap)", op.mass_gap, 0.0, op.mass_gap > 0 ? Verdict::pass : Verdict::fail,
                   "inf sigma(omega)"});
    {
        HypothesisRecord r{"H2", h.E0(), -inf, fin(h.E0()), "E0 of the truncated H"};
        if (m.E0_next) {
            const double diff = std::abs(*m.E0_next - h.E0());
            r.note += "; |E0(n_max+1) - E0| = " + std::to_string(diff);
            if (m.params.stability_tol > 0 && diff > m.params.stability_tol * std::max(1.0, std::abs(h.E0())))
                r.verdict = Verdict::fail;
        }
        out.push_back(r);
    }
    for (const auto& [n, pw] : m.params.h3_pairs) {
        const cmat res = h.eig.apply([b = h.b(), pw = pw](double e) { return std::pow(e + b, -pw); });
        cmat np = cmat::Identity(h.dim(), h.dim());
        for (int i = 0; i < n; ++i) np = h.N.mat * np;
        const double v = op_norm(cmat(np * res));
        out.push_back({"H3 n=" + std::to_string(n) + " p=" + std::to_string(pw), v, inf, fin(v),
                       "||N^n (H + b)^-p||; bounded at any finite truncation"});
    }
    {
        const double w = eig_symmetric(op.weight_mat).values.minCoeff();
        HypothesisRecord r{"G1", w, 1.0, Verdict::pass, "min <x>; ||[<x>, omega]|| = " + std::to_string(op.velocity_norm())};
        if (w < 1.0 - 1e-12 || !std::isfinite(op.velocity_norm())) r.verdict = Verdict::fail;
        out.push_back(r);
    }
    {
        // Acceleration on the inner half of the box: the walls reflect, so the
        // outer region is excluded.
        std::vector<Eigen::Index> inner;
        for (Eigen::Index i = 0; i < op.n; ++i) {
            bool in = true;
            for (int ax = 0; ax < op.spatial_dim(); ++ax)
                if (std::abs(op.points(i, ax)) > 0.5 * op.axes[static_cast<std::size_t>(ax)].half_length) in = false;
            if (in) inner.push_back(i);
        }
        cmat c(inner.size(), inner.size());
        for (std::size_t i = 0; i < inner.size(); ++i)
            for (std::size_t j = 0; j < inner.size(); ++j)
                c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = op.accel_mat(inner[i], inner[j]);
        const auto e = eig_hermitian(hermitian_part(c));
        const double neg = std::max(0.0, -e.values.minCoeff());
        const double pos = std::max(0.0, e.values.maxCoeff());
        const double ratio = pos > 0 ? neg / pos : inf;
        out.push_back({"G2", ratio, 1.0, ratio <= 1.0 ? Verdict::pass : Verdict::fail,
                       "||(accel)_-|| / ||(accel)_+|| on the inner half of the box"});
    }
    const cmat comm = I_unit * commutator(op.omega_mat.cast<cplx>(), op.conj_mat);
    {
        const double v = op_norm(cmat(commutator(op.weight_mat.cast<cplx>(), comm)));
        out.push_back({"G3", v, inf, fin(v), "||[<x>, [omega, i a]]||"});
    }
    {
        const rvec inv = op.weight_diag.cwiseInverse();
        const double v = op_norm(cmat(op.conj_mat * inv.cast<cplx>().asDiagonal()));
        out.push_back({"G4", v, inf, fin(v), "||a <x>^-1||"});
    }
    out.push_back({"G5", 0.0, 0.0, Verdict::not_applicable, "local compactness has no finite-dimensional content"});
    {
        const double v = op_norm(comm);
        out.push_back({"M1 i", v, inf, fin(v), "||[omega, i a]||"});
    }
    out.push_back({"M1 ii", 0.0, 0.0, Verdict::not_applicable,
                   "rho >= 0 cannot hold on a finite spectrum: compressions of [omega, i a] to eigenvectors are "
                   "traceless"});
    if (m.kernel.empty()) {
        out.push_back({"M2", 0.0, inf, Verdict::pass, "no interaction"});
        out.push_back({"Is/D", 0.0, -1.0, Verdict::not_applicable, "no interaction"});
    } else {
        const double v = interleave_norm(m.modes->conj_modes, m.kernel);
        out.push_back({"M2", v, inf, fin(v), "interleave norm of a on w"});
        const auto t = is_decay_probe(m);
        const double s = t.fitted_exponent;
        out.push_back({"Is/D", s, -1.0, (std::isfinite(s) && s <= -1.0) ? Verdict::pass : Verdict::fail,
                       "fitted exponent of the interleave norm of dGamma(j^R) w"});
    }
    // Needs the scattering-mode designation; the hypotheses task measures it.
    out.push_back({"S", 0.0, 0.0, Verdict::not_applicable, "transport probe not run"});
    {
        double C = inf;
        if (op.spatial_dim() == 1) {
            C = comparison_constant(op, free_comparison(op.axes[0], op.m_inf));
        } else {
            const auto cmp = build_one_particle_model_2d(op.axes[0], op.axes[1], GridFunction::constant(1.0),
                                                         GridFunction::constant(op.m_inf * op.m_inf), op.m_inf);
            C = comparison_constant(op, cmp);
        }
        out.push_back({"C", C, inf, fin(C), "sandwich constant against the free comparison"});
    }
    out.push_back({"B3/B4", 0.0, 0.0, Verdict::not_applicable,
                   "eigenfunction sup-norm bounds on supp g serve infinite volume only"});
    return out;
}

}  // namespace qftlab
