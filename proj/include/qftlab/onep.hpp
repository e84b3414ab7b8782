// onep.hpp - the one-particle model: grid, h = D a(x) D + c(x), omega = h^{1/2},
// the weight <x>, the dilation-type conjugate operator a, the velocity
// v = [omega, i<x>] and its commutator with omega, plus Galerkin truncation to
// the lowest omega-eigenmodes.

#pragma once

#include "qftlab/linalg.hpp"
#include "qftlab/profiles.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qftlab {

enum class Boundary { dirichlet, periodic };

Boundary boundary_from_string(const std::string& s);
std::string to_string(Boundary b);

// Uniform grid on [-L, L]. Dirichlet grids store the n interior nodes of a
// partition into n+1 cells; periodic grids store n nodes with node n equal to
// node 0 (not stored).
struct Grid {
    double half_length{0.0};
    int points{0};
    Boundary boundary{Boundary::dirichlet};
    std::vector<double> nodes;
    double spacing{0.0};
};

Grid build_grid(double half_length, int points, Boundary boundary = Boundary::dirichlet);

enum class ConjugateKind { dilation_reg };

// Everything below is expressed on the full grid (dimension n for one axis,
// n0*n1 for two axes with axis 0 running fastest).
struct OneParticleModel {
    std::vector<Grid> axes;
    Eigen::Index n{0};
    rmat points;               // n x dim coordinates
    double cell_volume{0.0};   // quadrature weight of one node
    rmat h_mat;
    rmat omega_mat;
    rvec weight_diag;          // <x> = (1 + |x|^2)^{1/2} at each node
    rmat weight_mat;
    cmat conj_mat;             // a = (x <D>^{-1} D + h.c.)/2, purely imaginary
    cmat velocity_mat;         // [omega, i<x>]
    cmat accel_mat;            // [omega, i velocity]
    rvec eigvals;              // spectrum of omega, ascending
    rmat eigvecs;              // orthogonal, columns normalised in l^2
    double mass_gap{0.0};      // smallest eigenvalue of omega
    double m_inf{0.0};         // declared asymptotic mass

    [[nodiscard]] int spatial_dim() const { return static_cast<int>(axes.size()); }
    [[nodiscard]] double velocity_norm() const { return op_norm(velocity_mat); }
};

// a_fn and c_fn are sampled on the grid (a at cell midpoints). m_inf defaults to
// sqrt(c) at the last node.
OneParticleModel build_one_particle_model(const Grid& grid, const GridFunction& a_fn, const GridFunction& c_fn,
                                          ConjugateKind conj_kind = ConjugateKind::dilation_reg,
                                          std::optional<double> m_inf = std::nullopt);

// Two-axis version. Coefficients are evaluated as radial profiles f(|x|).
OneParticleModel build_one_particle_model_2d(const Grid& gx, const Grid& gy, const GridFunction& a_fn,
                                             const GridFunction& c_fn, std::optional<double> m_inf = std::nullopt);

// Constant-coefficient model (D^2 + m_inf^2)^{1/2} on the same grid.
OneParticleModel free_comparison(const Grid& grid, double m_inf);

struct ModeSpace {
    std::shared_ptr<const OneParticleModel> model;
    int dim{0};
    rvec omega_modes;       // ascending
    rmat vectors;           // n x d, l^2-orthonormal columns (lowest omega eigenvectors)
    rmat mode_functions;    // n x d, orthonormal for the quadrature inner product
    rmat weight_modes;
    cmat conj_modes;
    cmat velocity_modes;
    cmat accel_modes;

    // P diag(f at nodes) P for a function of the grid weight <x>.
    [[nodiscard]] cmat compress_diagonal(const rvec& diag) const;
    [[nodiscard]] cmat compress(const cmat& grid_operator) const;
    [[nodiscard]] cmat omega_matrix() const;
    // Mode vector -> grid function (quadrature normalisation).
    [[nodiscard]] cvec to_grid(const cvec& mode_vector) const;
    // Grid function -> mode coefficients (quadrature inner products).
    [[nodiscard]] cvec from_grid(const cvec& grid_function) const;
};

ModeSpace mode_truncate(std::shared_ptr<const OneParticleModel> model, int d);

enum class DecayTarget { omega, velocity, conj_comm };

DecayTarget decay_target_from_string(const std::string& s);

struct DecayRow {
    double R{0.0};
    double norm{0.0};
    bool range_warning{false};
};

struct DecayTable {
    std::vector<DecayRow> rows;
    double fitted_exponent{0.0};  // NaN when fewer than two nonzero norms
};

// ||[F(<x>/R), T]|| for T = omega, velocity or [omega, i a].
DecayTable commutator_decay_probe(const OneParticleModel& model, const Profile& F, const std::vector<double>& R_list,
                                  DecayTarget target);

// Smallest C with C^{-1} h_inf <= h <= C h_inf (generalized eigenvalues of h
// relative to h_inf).
double comparison_constant(const OneParticleModel& model, const OneParticleModel& comparison);

// Quadrature inner product of grid functions.
cplx grid_inner(const OneParticleModel& model, const cvec& f, const cvec& g);

}  // namespace qftlab
