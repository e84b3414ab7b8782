#include "qftlab/onep.hpp"

#include "qftlab/errors.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qftlab {

Boundary boundary_from_string(const std::string& s) {
    if (s == "dirichlet") return Boundary::dirichlet;
    if (s == "periodic") return Boundary::periodic;
    throw std::invalid_argument("unknown boundary '" + s + "'");
}

std::string to_string(Boundary b) { return b == Boundary::dirichlet ? "dirichlet" : "periodic"; }

Grid build_grid(double half_length, int points, Boundary boundary) {
    if (!(half_length > 0)) throw std::invalid_argument("build_grid: half_length must be positive");
    if (points < 4) throw std::invalid_argument("build_grid: need at least 4 points");
    Grid g;
    g.half_length = half_length;
    g.points = points;
    g.boundary = boundary;
    g.nodes.resize(static_cast<std::size_t>(points));
    if (boundary == Boundary::dirichlet) {
        g.spacing = 2.0 * half_length / (points + 1);
        for (int i = 0; i < points; ++i) g.nodes[static_cast<std::size_t>(i)] = -half_length + (i + 1) * g.spacing;
    } else {
        g.spacing = 2.0 * half_length / points;
        for (int i = 0; i < points; ++i) g.nodes[static_cast<std::size_t>(i)] = -half_length + i * g.spacing;
    }
    return g;
}

namespace {

// Central difference d/dx along one axis, real antisymmetric.
rmat central_difference(const Grid& g) {
    const int n = g.points;
    rmat k = rmat::Zero(n, n);
    const double c = 1.0 / (2.0 * g.spacing);
    for (int i = 0; i + 1 < n; ++i) {
        k(i, i + 1) = c;
        k(i + 1, i) = -c;
    }
    if (g.boundary == Boundary::periodic) {
        k(n - 1, 0) = c;
        k(0, n - 1) = -c;
    }
    return k;
}

// Divergence-form -d/dx a d/dx with edge coefficients mid[0..n]; mid[i] sits
// between node i-1 and node i.
rmat divergence_form(const Grid& g, const std::vector<double>& mid) {
    const int n = g.points;
    const double inv = 1.0 / (g.spacing * g.spacing);
    rmat h = rmat::Zero(n, n);
    auto edge = [&](int i, int j, double a) {
        h(i, i) += a * inv;
        h(j, j) += a * inv;
        h(i, j) -= a * inv;
        h(j, i) -= a * inv;
    };
    for (int i = 0; i + 1 < n; ++i) edge(i, i + 1, mid[static_cast<std::size_t>(i + 1)]);
    if (g.boundary == Boundary::dirichlet) {
        h(0, 0) += mid[0] * inv;
        h(n - 1, n - 1) += mid[static_cast<std::size_t>(n)] * inv;
    } else {
        edge(n - 1, 0, mid[static_cast<std::size_t>(n)]);
    }
    return h;
}

void fix_signs(rmat& v) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        Eigen::Index arg = 0;
        v.col(c).cwiseAbs().maxCoeff(&arg);
        if (v(arg, c) < 0) v.col(c) *= -1.0;
    }
}

// Completes a model once h, coordinates and the derivative matrices are known.
OneParticleModel finish_model(std::vector<Grid> axes, rmat points, double cell_volume, rmat h,
                              const std::vector<rmat>& derivs, double m_inf) {
    OneParticleModel m;
    m.axes = std::move(axes);
    m.n = h.rows();
    m.points = std::move(points);
    m.cell_volume = cell_volume;
    m.h_mat = 0.5 * (h + h.transpose());

    const RealSymEig he = eig_symmetric(m.h_mat);
    if (he.values(0) < -1e-12 * std::max(1.0, he.values.cwiseAbs().maxCoeff()))
        throw NumericFailure("build_one_particle_model: h has a negative eigenvalue");
    m.eigvals = he.values.cwiseMax(0.0).cwiseSqrt();
    m.eigvecs = he.vectors;
    fix_signs(m.eigvecs);
    m.omega_mat = m.eigvecs * m.eigvals.asDiagonal() * m.eigvecs.transpose();
    m.mass_gap = m.eigvals(0);
    if (!(m.mass_gap > 0)) throw NumericFailure("build_one_particle_model: omega has no mass gap");
    m.m_inf = m_inf;

    m.weight_diag.resize(m.n);
    for (Eigen::Index i = 0; i < m.n; ++i) m.weight_diag(i) = std::sqrt(1.0 + m.points.row(i).squaredNorm());
    m.weight_mat = m.weight_diag.asDiagonal();

    // <D>^{-2} = (1 + sum_k K_k^T K_k)^{-1}.
    rmat gram = rmat::Identity(m.n, m.n);
    for (const auto& k : derivs) gram += k.transpose() * k;
    const RealSymEig ge = eig_symmetric(gram);
    const rmat s = ge.apply([](double x) { return 1.0 / std::sqrt(x); });
    rmat r = rmat::Zero(m.n, m.n);
    for (std::size_t axis = 0; axis < derivs.size(); ++axis) {
        const rvec x = m.points.col(static_cast<Eigen::Index>(axis));
        const rmat sk = s * derivs[axis];
        r += x.asDiagonal() * sk + sk * x.asDiagonal();
    }
    m.conj_mat = cmat(-0.5 * I_unit * r.cast<cplx>());

    const cmat om = m.omega_mat.cast<cplx>();
    const cmat w = m.weight_mat.cast<cplx>();
    m.velocity_mat = I_unit * commutator(om, w);
    m.accel_mat = I_unit * commutator(om, m.velocity_mat);
    return m;
}

void require_positive(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!(x > 0)) throw std::invalid_argument(std::string("build_one_particle_model: ") + what +
                                                  " must be strictly positive on the grid");
    }
}

}  // namespace

OneParticleModel build_one_particle_model(const Grid& grid, const GridFunction& a_fn, const GridFunction& c_fn,
                                          ConjugateKind /*conj_kind*/, std::optional<double> m_inf) {
    if (grid.points < 4 || static_cast<int>(grid.nodes.size()) != grid.points)
        throw std::invalid_argument("build_one_particle_model: invalid grid");
    const auto a_mid = a_fn.sample_midpoints(grid.nodes, grid.spacing);
    const auto c_nodes = c_fn.sample(grid.nodes);
    require_positive(a_mid, "a(x)");
    require_positive(a_fn.sample(grid.nodes), "a(x)");
    require_positive(c_nodes, "c(x)");

    rmat h = divergence_form(grid, a_mid);
    for (int i = 0; i < grid.points; ++i) h(i, i) += c_nodes[static_cast<std::size_t>(i)];

    rmat pts(grid.points, 1);
    for (int i = 0; i < grid.points; ++i) pts(i, 0) = grid.nodes[static_cast<std::size_t>(i)];
    const double minf = m_inf.value_or(std::sqrt(c_nodes.back()));
    if (!(minf > 0)) throw std::invalid_argument("build_one_particle_model: m_inf must be positive");
    return finish_model({grid}, std::move(pts), grid.spacing, std::move(h), {central_difference(grid)}, minf);
}

OneParticleModel build_one_particle_model_2d(const Grid& gx, const Grid& gy, const GridFunction& a_fn,
                                             const GridFunction& c_fn, std::optional<double> m_inf) {
    if (a_fn.is_table() || c_fn.is_table())
        throw std::invalid_argument("build_one_particle_model_2d: coefficients must be closed forms");
    const int nx = gx.points, ny = gy.points;
    const Eigen::Index n = static_cast<Eigen::Index>(nx) * ny;
    rmat pts(n, 2);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            pts(i + nx * j, 0) = gx.nodes[static_cast<std::size_t>(i)];
            pts(i + nx * j, 1) = gy.nodes[static_cast<std::size_t>(j)];
        }
    auto radial = [](const GridFunction& f, double x, double y) { return f(std::sqrt(x * x + y * y)); };

    rmat h = rmat::Zero(n, n);
    auto edge = [&](Eigen::Index p, Eigen::Index q, double a, double inv) {
        if (!(a > 0)) throw std::invalid_argument("build_one_particle_model_2d: a(x) must be strictly positive");
        h(p, p) += a * inv;
        if (q >= 0) {
            h(q, q) += a * inv;
            h(p, q) -= a * inv;
            h(q, p) -= a * inv;
        }
    };
    // Each axis: walk edges to the right neighbour; Dirichlet edges at the walls
    // only touch the diagonal.
    const double invx = 1.0 / (gx.spacing * gx.spacing), invy = 1.0 / (gy.spacing * gy.spacing);
    for (int j = 0; j < ny; ++j) {
        const double y = gy.nodes[static_cast<std::size_t>(j)];
        for (int i = 0; i < nx; ++i) {
            const double x = gx.nodes[static_cast<std::size_t>(i)];
            const Eigen::Index p = i + nx * j;
            if (i + 1 < nx) edge(p, p + 1, radial(a_fn, x + 0.5 * gx.spacing, y), invx);
            else if (gx.boundary == Boundary::periodic) edge(p, nx * j, radial(a_fn, x + 0.5 * gx.spacing, y), invx);
            else edge(p, -1, radial(a_fn, x + 0.5 * gx.spacing, y), invx);
            if (i == 0 && gx.boundary == Boundary::dirichlet) edge(p, -1, radial(a_fn, x - 0.5 * gx.spacing, y), invx);
        }
    }
    for (int i = 0; i < nx; ++i) {
        const double x = gx.nodes[static_cast<std::size_t>(i)];
        for (int j = 0; j < ny; ++j) {
            const double y = gy.nodes[static_cast<std::size_t>(j)];
            const Eigen::Index p = i + nx * j;
            if (j + 1 < ny) edge(p, p + nx, radial(a_fn, x, y + 0.5 * gy.spacing), invy);
            else if (gy.boundary == Boundary::periodic) edge(p, i, radial(a_fn, x, y + 0.5 * gy.spacing), invy);
            else edge(p, -1, radial(a_fn, x, y + 0.5 * gy.spacing), invy);
            if (j == 0 && gy.boundary == Boundary::dirichlet) edge(p, -1, radial(a_fn, x, y - 0.5 * gy.spacing), invy);
        }
    }
    double c_last = 0;
    for (Eigen::Index p = 0; p < n; ++p) {
        const double c = radial(c_fn, pts(p, 0), pts(p, 1));
        if (!(c > 0)) throw std::invalid_argument("build_one_particle_model_2d: c(x) must be strictly positive");
        h(p, p) += c;
        c_last = c;
    }
    const rmat kx = central_difference(gx), ky = central_difference(gy);
    const rmat idx = rmat::Identity(nx, nx), idy = rmat::Identity(ny, ny);
    // Axis 0 runs fastest: index = i + nx*j, so operators on x act as kron(I_y, K_x).
    rmat dx = rmat::Zero(n, n), dy = rmat::Zero(n, n);
    for (int j = 0; j < ny; ++j) dx.block(nx * j, nx * j, nx, nx) = kx;
    for (int j = 0; j < ny; ++j)
        for (int jj = 0; jj < ny; ++jj)
            if (ky(j, jj) != 0.0) dy.block(nx * j, nx * jj, nx, nx) = ky(j, jj) * idx;
    (void)idy;
    const double minf = m_inf.value_or(std::sqrt(c_last));
    if (!(minf > 0)) throw std::invalid_argument("build_one_particle_model_2d: m_inf must be positive");
    return finish_model({gx, gy}, std::move(pts), gx.spacing * gy.spacing, std::move(h), {dx, dy}, minf);
}

OneParticleModel free_comparison(const Grid& grid, double m_inf) {
    if (!(m_inf > 0)) throw std::invalid_argument("free_comparison: m_inf must be positive");
    return build_one_particle_model(grid, GridFunction::constant(1.0), GridFunction::constant(m_inf * m_inf),
                                    ConjugateKind::dilation_reg, m_inf);
}

cmat ModeSpace::compress_diagonal(const rvec& diag) const {
    const rmat c = vectors.transpose() * diag.asDiagonal() * vectors;
    return c.cast<cplx>();
}

cmat ModeSpace::compress(const cmat& grid_operator) const {
    const cmat v = vectors.cast<cplx>();
    return v.adjoint() * grid_operator * v;
}

cmat ModeSpace::omega_matrix() const { return omega_modes.cast<cplx>().asDiagonal(); }

cvec ModeSpace::to_grid(const cvec& mode_vector) const { return mode_functions.cast<cplx>() * mode_vector; }

cvec ModeSpace::from_grid(const cvec& grid_function) const {
    return model->cell_volume * (mode_functions.transpose().cast<cplx>() * grid_function);
}

ModeSpace mode_truncate(std::shared_ptr<const OneParticleModel> model, int d) {
    if (!model) throw std::invalid_argument("mode_truncate: null model");
    if (d < 1 || d > model->n) throw std::invalid_argument("mode_truncate: d out of range");
    ModeSpace ms;
    ms.dim = d;
    ms.omega_modes = model->eigvals.head(d);
    ms.vectors = model->eigvecs.leftCols(d);
    ms.mode_functions = ms.vectors / std::sqrt(model->cell_volume);
    const rmat wm = ms.vectors.transpose() * model->weight_mat * ms.vectors;
    ms.weight_modes = 0.5 * (wm + wm.transpose());
    const cmat v = ms.vectors.cast<cplx>();
    ms.conj_modes = hermitian_part(v.adjoint() * model->conj_mat * v);
    ms.velocity_modes = hermitian_part(v.adjoint() * model->velocity_mat * v);
    ms.accel_modes = hermitian_part(v.adjoint() * model->accel_mat * v);
    ms.model = std::move(model);
    return ms;
}

DecayTarget decay_target_from_string(const std::string& s) {
    if (s == "omega") return DecayTarget::omega;
    if (s == "velocity") return DecayTarget::velocity;
    if (s == "conj_comm") return DecayTarget::conj_comm;
    throw std::invalid_argument("unknown decay target '" + s + "'");
}

DecayTable commutator_decay_probe(const OneParticleModel& model, const Profile& F, const std::vector<double>& R_list,
                                  DecayTarget target) {
    for (std::size_t i = 1; i < R_list.size(); ++i)
        if (!(R_list[i] > R_list[i - 1])) throw std::invalid_argument("commutator_decay_probe: R_list must increase");
    cmat t;
    switch (target) {
        case DecayTarget::omega: t = model.omega_mat.cast<cplx>(); break;
        case DecayTarget::velocity: t = model.velocity_mat; break;
        case DecayTarget::conj_comm: t = I_unit * commutator(model.omega_mat.cast<cplx>(), model.conj_mat); break;
    }
    double resolvable = std::numeric_limits<double>::infinity();
    for (const auto& ax : model.axes) resolvable = std::min(resolvable, ax.half_length / 4.0);

    DecayTable table;
    std::vector<double> rs, ns;
    for (double R : R_list) {
        rvec f(model.n);
        for (Eigen::Index i = 0; i < model.n; ++i) f(i) = F(model.weight_diag(i) / R);
        const cmat fd = f.cast<cplx>().asDiagonal();
        const double norm = op_norm(cmat(commutator(fd, t)));
        table.rows.push_back({R, norm, R > resolvable});
        rs.push_back(R);
        ns.push_back(norm);
    }
    table.fitted_exponent = loglog_slope(rs, ns, 1e-13);
    return table;
}

double comparison_constant(const OneParticleModel& model, const OneParticleModel& comparison) {
    if (model.n != comparison.n) throw std::invalid_argument("comparison_constant: grid mismatch");
    Eigen::GeneralizedSelfAdjointEigenSolver<rmat> solver(model.h_mat, comparison.h_mat, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericFailure("comparison_constant: generalized eigensolver failed");
    const double lo = solver.eigenvalues().minCoeff();
    const double hi = solver.eigenvalues().maxCoeff();
    return std::max(hi, 1.0 / lo);
}

cplx grid_inner(const OneParticleModel& model, const cvec& f, const cvec& g) {
    return model.cell_volume * f.dot(g);
}

}  // namespace qftlab
