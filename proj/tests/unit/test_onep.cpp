#include "qftlab/errors.hpp"
#include "qftlab/onep.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace qftlab;

namespace {

double sym_defect(const cmat& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

OneParticleModel variable_model(double L = 16.0, int n = 96) {
    const Grid g = build_grid(L, n);
    GridFunction a = GridFunction::constant(1.0);
    a.add({FunctionTerm::Kind::gaussian_bump, 0.0, 2.0, 0.5});
    GridFunction c = GridFunction::constant(1.0);
    c.add({FunctionTerm::Kind::gaussian_bump, 1.0, 1.5, 0.8});
    return build_one_particle_model(g, a, c);
}

}  // namespace

TEST(Grid, DirichletInteriorNodes) {
    const Grid g = build_grid(10.0, 4);
    ASSERT_EQ(g.nodes.size(), 4u);
    EXPECT_DOUBLE_EQ(g.spacing, 4.0);
    EXPECT_DOUBLE_EQ(g.nodes.front(), -6.0);
    EXPECT_DOUBLE_EQ(g.nodes.back(), 6.0);
}

TEST(Grid, PeriodicSpacing) {
    const Grid g = build_grid(std::numbers::pi, 8, Boundary::periodic);
    EXPECT_NEAR(g.spacing, 2 * std::numbers::pi / 8, 1e-15);
    EXPECT_EQ(g.nodes.size(), 8u);
}

TEST(Grid, RejectsBadInput) {
    EXPECT_THROW(build_grid(0.0, 8), std::invalid_argument);
    EXPECT_THROW(build_grid(1.0, 3), std::invalid_argument);
}

TEST(OneParticle, PeriodicFreeSpectrumMatchesFourier) {
    const int n = 32;
    const double m = 0.7;
    const Grid g = build_grid(5.0, n, Boundary::periodic);
    const auto M = build_one_particle_model(g, GridFunction::constant(1.0), GridFunction::constant(m * m));
    std::vector<double> expect;
    for (int j = 0; j < n; ++j) {
        const double s = std::sin(std::numbers::pi * j / n);
        expect.push_back(std::sqrt(4 * s * s / (g.spacing * g.spacing) + m * m));
    }
    std::sort(expect.begin(), expect.end());
    for (int j = 0; j < n; ++j) EXPECT_NEAR(M.eigvals(j), expect[static_cast<std::size_t>(j)], 1e-10);
    EXPECT_NEAR(M.mass_gap, m, 1e-12);
}

TEST(OneParticle, Invariants) {
    const auto M = variable_model();
    const double hn = M.h_mat.norm();
    EXPECT_LE((M.omega_mat * M.omega_mat - M.h_mat).norm(), 1e-10 * hn);
    EXPECT_GE(M.eigvals.minCoeff(), M.mass_gap - 1e-12);
    EXPECT_GE(eig_symmetric(M.weight_mat).values.minCoeff(), 1.0 - 1e-12);
    EXPECT_LE(sym_defect(M.velocity_mat), 1e-12);
    EXPECT_LE(sym_defect(M.accel_mat), 1e-12);
    EXPECT_LE(sym_defect(M.conj_mat), 1e-12);
    EXPECT_LE(M.conj_mat.real().cwiseAbs().maxCoeff(), 1e-14);
}

TEST(OneParticle, UnitCoefficientsBoundBelow) {
    const auto M = build_one_particle_model(build_grid(6.0, 40), GridFunction::constant(1.0),
                                            GridFunction::constant(1.0));
    EXPECT_GE(M.eigvals(0), 1.0 - 1e-12);
    EXPECT_TRUE(std::isfinite(M.velocity_norm()));
    EXPECT_NEAR(M.m_inf, 1.0, 1e-14);
}

TEST(OneParticle, RejectsNegativeCoefficients) {
    const Grid g = build_grid(4.0, 8);
    std::vector<double> c(8, 1.0);
    c[3] = -0.5;
    EXPECT_THROW(build_one_particle_model(g, GridFunction::constant(1.0), GridFunction::table(c)),
                 std::invalid_argument);
    EXPECT_THROW(build_one_particle_model(g, GridFunction::constant(0.0), GridFunction::constant(1.0)),
                 std::invalid_argument);
}

TEST(OneParticle, FreeComparisonCoincidesWithConstantModel) {
    const Grid g = build_grid(8.0, 48);
    const auto a = free_comparison(g, 1.3);
    const auto b = build_one_particle_model(g, GridFunction::constant(1.0), GridFunction::constant(1.69));
    EXPECT_LE((a.omega_mat - b.omega_mat).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(free_comparison(g, 0.0), std::invalid_argument);
}

TEST(OneParticle, ComparisonConstantSandwich) {
    const auto M = variable_model();
    const auto F = free_comparison(M.axes[0], M.m_inf);
    const double C = comparison_constant(M, F);
    EXPECT_GE(C, 1.0);
    EXPECT_TRUE(std::isfinite(C));
    // The coefficients stay within factor 1.8 of the free ones.
    EXPECT_LE(C, 1.8 + 1e-9);
}

TEST(ModeSpace, FullProjectionKeepsWeightSpectrum) {
    auto M = std::make_shared<const OneParticleModel>(variable_model(8.0, 24));
    const auto ms = mode_truncate(M, 24);
    const rvec a = eig_symmetric(ms.weight_modes).values;
    const rvec b = eig_symmetric(M->weight_mat).values;
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-10);
    for (int k = 0; k < 24; ++k) EXPECT_NEAR(ms.omega_modes(k), M->eigvals(k), 1e-14);
}

TEST(ModeSpace, SingleMode) {
    auto M = std::make_shared<const OneParticleModel>(variable_model(8.0, 24));
    const auto ms = mode_truncate(M, 1);
    ASSERT_EQ(ms.velocity_modes.rows(), 1);
    const rvec e0 = M->eigvecs.col(0);
    const cvec ec = e0.cast<cplx>();
    EXPECT_NEAR(std::abs(ms.velocity_modes(0, 0) - (ec.adjoint() * M->velocity_mat * ec)(0)), 0.0, 1e-12);
    EXPECT_THROW(mode_truncate(M, 0), std::invalid_argument);
    EXPECT_THROW(mode_truncate(M, 25), std::invalid_argument);
}

TEST(ModeSpace, ParityZeroDiagonalConjugate) {
    auto M = std::make_shared<const OneParticleModel>(
        build_one_particle_model(build_grid(8.0, 40), GridFunction::constant(1.0), GridFunction::constant(1.0)));
    const auto ms = mode_truncate(M, 4);
    EXPECT_LE(sym_defect(ms.conj_modes), 1e-12);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(std::abs(ms.conj_modes(k, k)), 0.0, 1e-12);
}

TEST(ModeSpace, ModeFunctionsOrthonormal) {
    auto M = std::make_shared<const OneParticleModel>(variable_model(8.0, 32));
    const auto ms = mode_truncate(M, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const cvec fi = ms.mode_functions.col(i).cast<cplx>();
            const cvec fj = ms.mode_functions.col(j).cast<cplx>();
            EXPECT_NEAR(std::abs(grid_inner(*M, fi, fj)), i == j ? 1.0 : 0.0, 1e-10);
        }
    const cvec v = cvec::Unit(6, 2);
    EXPECT_LE((ms.from_grid(ms.to_grid(v)) - v).norm(), 1e-10);
}

TEST(DecayProbe, ConstantProfileGivesZero) {
    const auto M = variable_model();
    const auto t = commutator_decay_probe(M, Profile::constant_one(), {1.0, 2.0, 3.0}, DecayTarget::omega);
    for (const auto& r : t.rows) EXPECT_LE(r.norm, 1e-12);
}

TEST(DecayProbe, OmegaCommutatorScalesInverseR) {
    const auto M = variable_model(40.0, 240);
    const auto t = commutator_decay_probe(M, Profile::smooth_step(1.0, 2.0), {2.0, 4.0, 8.0}, DecayTarget::omega);
    double lo = 1e300, hi = 0;
    for (const auto& r : t.rows) {
        EXPECT_FALSE(r.range_warning);
        lo = std::min(lo, r.norm * r.R);
        hi = std::max(hi, r.norm * r.R);
    }
    EXPECT_LE(hi / lo, 4.0);
    EXPECT_LE(t.fitted_exponent, -0.8);
}

TEST(DecayProbe, ConjugateCommutatorDecays) {
    // R * norm only settles near R ~ 30 on this model, so the fit uses large radii
    // on a coarse grid.
    const auto M = build_one_particle_model(build_grid(256.0, 511), GridFunction::constant(1.0),
                                            GridFunction::constant(1.0));
    const auto t = commutator_decay_probe(M, Profile::bump(2.0), {16.0, 32.0, 64.0}, DecayTarget::conj_comm);
    EXPECT_LE(t.fitted_exponent, -0.8);
}

TEST(DecayProbe, FlagsUnresolvedRadii) {
    const auto M = variable_model(8.0, 48);
    const auto t = commutator_decay_probe(M, Profile::smooth_step(1.0, 2.0), {1.0, 4.0}, DecayTarget::velocity);
    EXPECT_FALSE(t.rows[0].range_warning);
    EXPECT_TRUE(t.rows[1].range_warning);
}

TEST(TwoD, RadialModelIsConsistent) {
    const Grid g = build_grid(4.0, 8);
    const auto M = build_one_particle_model_2d(g, g, GridFunction::constant(1.0), GridFunction::constant(1.0));
    EXPECT_EQ(M.n, 64);
    EXPECT_LE((M.omega_mat * M.omega_mat - M.h_mat).norm(), 1e-10 * M.h_mat.norm());
    EXPECT_GE(M.mass_gap, 1.0 - 1e-12);
    EXPECT_LE(sym_defect(M.velocity_mat), 1e-12);
}
