#include "qftlab/spectral.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace qftlab;

namespace {

double max_abs(const cmat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Free one-particle data: omega diagonal, a random Hermitian conjugate operator.
struct FreeData {
    rvec omega;
    cmat conj;
    cmat weight;
};

FreeData free_data(int d, std::mt19937_64& rng) {
    FreeData f;
    f.omega.resize(d);
    for (int k = 0; k < d; ++k) f.omega(k) = 1.0 + 0.37 * k + 0.01 * k * k;
    f.conj = oracle::random_hermitian(d, rng);
    f.weight = cmat::Identity(d, d) + oracle::random_psd(d, rng, 0.2);
    return f;
}

QftHamiltonian free_bundle(int d, int n_max, std::mt19937_64& rng, const cmat* V = nullptr) {
    const auto f = free_data(d, rng);
    auto b = build_basis(d, n_max);
    const cmat v = V ? *V : cmat::Zero(b.dim(), b.dim());
    return make_hamiltonian(std::move(b), f.omega, v, f.conj, f.weight, f.omega(0), f.omega(0));
}

HermitianEig diag_eig(const rvec& values) {
    HermitianEig e;
    e.values = values;
    e.vectors = cmat::Identity(values.size(), values.size());
    return e;
}

}  // namespace

TEST(Bundle, Invariants) {
    std::mt19937_64 rng(3);
    const auto b = build_basis(3, 3);
    const cmat V = oracle::random_hermitian(static_cast<int>(b.dim()), rng, 0.1);
    const auto h = free_bundle(3, 3, rng, &V);
    EXPECT_LE(hermiticity_defect(h.H.mat), 1e-12);
    EXPECT_LE(hermiticity_defect(h.commutator_B.mat), 1e-12);
    const cmat rec = h.eig.vectors * h.eig.values.cast<cplx>().asDiagonal() * h.eig.vectors.adjoint();
    EXPECT_LE(op_norm(cmat(rec - h.H.mat)), 1e-10 * op_norm(h.H.mat));
    EXPECT_LE(max_abs(h.commutator_B.mat - I_unit * (h.H.mat * h.A.mat - h.A.mat * h.H.mat)), 1e-12);
    EXPECT_GE(min_eigenvalue(h.H.mat) + h.b(), 1.0 - 1e-12);
}

TEST(GroundState, FreeVacuum) {
    std::mt19937_64 rng(4);
    const auto h = free_bundle(3, 3, rng);
    const auto g = ground_state(h);
    EXPECT_NEAR(g.E0, 0.0, 1e-12);
    EXPECT_EQ(g.degeneracy, 1);
    EXPECT_NEAR(std::abs(g.vector(0)), 1.0, 1e-12);
}

TEST(GroundState, ShiftByConstant) {
    std::mt19937_64 rng(5);
    const auto b = build_basis(2, 4);
    const cmat V = oracle::random_hermitian(static_cast<int>(b.dim()), rng, 0.2);
    const auto h1 = free_bundle(2, 4, rng, &V);
    std::mt19937_64 rng2(5);
    oracle::random_hermitian(static_cast<int>(b.dim()), rng2, 0.2);
    const cmat V2 = V + 0.75 * cmat::Identity(b.dim(), b.dim());
    const auto h2 = free_bundle(2, 4, rng2, &V2);
    EXPECT_NEAR(ground_state(h2).E0 - ground_state(h1).E0, 0.75, 1e-12);
}

TEST(GroundState, SecondOrderPerturbation) {
    // One mode, V = lambda (a*^4 + a^4): E0 ~ -lambda^2 * 24 / (4 omega).
    const double omega = 1.3, lambda = 0.01;
    auto b = build_basis(1, 12);
    WickKernel w(1);
    w.add_block(4, 0, cmat::Constant(1, 1, lambda));
    w.add_block(0, 4, cmat::Constant(1, 1, lambda));
    const cmat V = wick_assemble(w, b).mat;
    const auto h = make_hamiltonian(std::move(b), rvec::Constant(1, omega), V, cmat::Zero(1, 1),
                                    cmat::Identity(1, 1), omega, omega);
    const double rs = -lambda * lambda * 24.0 / (4.0 * omega);
    EXPECT_LT(h.E0(), 0.0);
    EXPECT_NEAR(h.E0() / rs, 1.0, 0.1);
}

TEST(Hvz, FreeCountBelowThreshold) {
    std::mt19937_64 rng(6);
    const auto h = free_bundle(4, 3, rng);
    const auto row = hvz_row(h, 1e-6, 0.5);
    EXPECT_EQ(row.count_below, 1);
    EXPECT_GE(row.count_band, 1);
    // a*(e_k) vacuum is an exact eigenvector of dGamma(omega).
    EXPECT_LE(row.weyl_residual, 1e-12);
}

TEST(Hvz, RejectsDecreasingTruncations) {
    std::mt19937_64 rng(6);
    const auto a = free_bundle(3, 3, rng);
    const auto b = free_bundle(3, 2, rng);
    EXPECT_THROW(hvz_probe({&a, &b}, 0.05, 0.5), std::invalid_argument);
    EXPECT_EQ(hvz_probe({&b, &a}, 0.05, 0.5).size(), 2u);
}

TEST(Rho, EmptyWindowSentinel) {
    std::mt19937_64 rng(8);
    const auto h = free_bundle(3, 2, rng);
    for (const auto& r : rho_lower_bound(h, h.commutator_B.mat, -5.0, {0.1, 1.0, 2.0})) {
        EXPECT_EQ(r.a_max, empty_window);
        EXPECT_EQ(r.count, 0);
    }
}

TEST(Rho, IdentityGivesOne) {
    std::mt19937_64 rng(9);
    const auto h = free_bundle(3, 2, rng);
    const cmat id = cmat::Identity(h.dim(), h.dim());
    for (const auto& r : rho_lower_bound(h, id, h.omega_modes(1), {0.01, 0.5, 3.0})) EXPECT_NEAR(r.a_max, 1.0, 1e-12);
}

TEST(Rho, FreeOneParticleCompression) {
    std::mt19937_64 rng(10);
    const auto f = free_data(4, rng);
    auto b = build_basis(4, 3);
    const auto h = make_hamiltonian(std::move(b), f.omega, cmat::Zero(build_basis(4, 3).dim(), build_basis(4, 3).dim()),
                                    f.conj, f.weight, 1.0, 1.0);
    const cmat om = f.omega.cast<cplx>().asDiagonal();
    const cmat one = I_unit * commutator(om, f.conj);
    const auto rows = rho_lower_bound(h, h.commutator_B.mat, f.omega(1), {0.01});
    ASSERT_EQ(rows[0].count, 1);
    EXPECT_NEAR(rows[0].a_max, one(1, 1).real(), 1e-12);
}

TEST(Rho, DirectSumIsMinimum) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 10; ++t) {
        // Window-aligned spectra: eigenvalues on a half-integer lattice, window edges off it.
        const int n1 = 5, n2 = 4;
        rvec v1(n1), v2(n2);
        for (int i = 0; i < n1; ++i) v1(i) = i;
        for (int i = 0; i < n2; ++i) v2(i) = i + 0.5 * (i % 2);
        const cmat u1 = oracle::random_unitary(n1, rng), u2 = oracle::random_unitary(n2, rng);
        const cmat h1 = u1 * v1.cast<cplx>().asDiagonal() * u1.adjoint();
        const cmat h2 = u2 * v2.cast<cplx>().asDiagonal() * u2.adjoint();
        const cmat b1 = oracle::random_hermitian(n1, rng), b2 = oracle::random_hermitian(n2, rng);
        cmat H = cmat::Zero(n1 + n2, n1 + n2), B = H;
        H.topLeftCorner(n1, n1) = h1;
        H.bottomRightCorner(n2, n2) = h2;
        B.topLeftCorner(n1, n1) = b1;
        B.bottomRightCorner(n2, n2) = b2;
        const auto e = eig_hermitian(H), e1 = eig_hermitian(h1), e2 = eig_hermitian(h2);
        for (double lambda : {0.0, 1.0, 1.5, 2.25, 3.0})
            for (double w : {0.1, 0.6, 1.2}) {
                const double full = window_min(e, B, lambda - w, lambda + w);
                const double m1 = window_min(e1, b1, lambda - w, lambda + w);
                const double m2 = window_min(e2, b2, lambda - w, lambda + w);
                if (std::isinf(full))
                    EXPECT_TRUE(std::isinf(m1) && std::isinf(m2));
                else
                    EXPECT_NEAR(full, std::min(m1, m2), 1e-12);
            }
    }
}

TEST(Rho, TensorSumLowerBound) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 10; ++t) {
        const int n1 = 4, n2 = 3;
        const cmat h1 = oracle::random_hermitian(n1, rng), h2 = oracle::random_hermitian(n2, rng);
        const cmat b1 = oracle::random_hermitian(n1, rng), b2 = oracle::random_hermitian(n2, rng);
        const cmat i1 = cmat::Identity(n1, n1), i2 = cmat::Identity(n2, n2);
        const cmat H = kron(h1, i2) + kron(i1, h2), B = kron(b1, i2) + kron(i1, b2);
        const auto e = eig_hermitian(H), e1 = eig_hermitian(h1), e2 = eig_hermitian(h2);
        for (int k = 0; k < 8; ++k) {
            const double lambda = e.values(0) + k * (e.values(e.dim() - 1) - e.values(0)) / 7.0;
            for (double w : {0.2, 0.8}) {
                const double lhs = window_min(e, B, lambda - w, lambda + w);
                const double rhs = tensor_sum_rho_bound(e1, b1, e2, b2, lambda, w);
                if (std::isinf(lhs)) continue;
                EXPECT_GE(lhs, rhs - 1e-8);
            }
        }
    }
}

TEST(Rho, OneParticlePositivityLiftsToFock) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 5; ++t) {
        const int d = 3;
        const cmat w = oracle::random_hermitian(d, rng);
        // Nonnegative on every window of w.
        const cmat b1 = oracle::random_psd(d, rng);
        const auto basis = build_basis(d, 3);
        const auto e = eig_hermitian(dGamma(basis, w).mat);
        const cmat B = dGamma(basis, b1).mat;
        for (double lambda = e.values(0); lambda <= e.values(e.dim() - 1); lambda += 0.3)
            for (double width : {0.05, 0.4})
                EXPECT_GE(window_min(e, B, lambda - width, lambda + width), -1e-9);
    }
}

TEST(Thresholds, SingleGenerator) {
    const double m = 0.8;
    const auto t = dgamma1_enumerate({m}, 3.5 * m, false);
    ASSERT_EQ(t.sums.size(), 3u);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(t.sums[static_cast<std::size_t>(k)], (k + 1) * m, 1e-12);
    const auto z = dgamma1_enumerate({m}, 3.5 * m, true);
    ASSERT_EQ(z.sums.size(), 4u);
    EXPECT_EQ(z.sums[0], 0.0);
}

TEST(Thresholds, TwoGeneratorsMatchBruteForce) {
    const auto t = dgamma1_enumerate({1.0, 1.5}, 4.0, false);
    const std::vector<double> expect{1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
    ASSERT_EQ(t.sums.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(t.sums[i], expect[i], 1e-12);
    // Brute force over counts (a, b) with a + 1.5 b <= 4.
    std::vector<double> brute;
    for (int a = 0; a <= 4; ++a)
        for (int b = 0; b <= 2; ++b)
            if (a + b > 0 && a + 1.5 * b <= 4.0) brute.push_back(a + 1.5 * b);
    std::sort(brute.begin(), brute.end());
    brute.erase(std::unique(brute.begin(), brute.end()), brute.end());
    EXPECT_EQ(brute.size(), t.sums.size());
}

TEST(Thresholds, EmptyBase) {
    EXPECT_TRUE(dgamma1_enumerate({}, 3.0, false).sums.empty());
    const auto z = dgamma1_enumerate({}, 3.0, true);
    ASSERT_EQ(z.sums.size(), 1u);
    EXPECT_EQ(z.sums[0], 0.0);
}

TEST(Thresholds, NonpositiveGuard) {
    EXPECT_THROW(dgamma1_enumerate({0.0, 1.0}, 3.0, false), std::invalid_argument);
    EXPECT_THROW(dgamma1_enumerate({-0.5}, 3.0, false), std::invalid_argument);
}

TEST(Thresholds, ClosureProperty) {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(0.3, 2.0);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> E{u(rng), u(rng), u(rng)};
        const double cap = 5.0;
        const auto s = dgamma1_enumerate(E, cap, false);
        for (std::size_t i = 1; i < s.sums.size(); ++i) EXPECT_GT(s.sums[i] - s.sums[i - 1], threshold_dedup_tol);
        for (double x : s.sums)
            for (double e : E) {
                if (x + e > cap) continue;
                const bool found = std::any_of(s.sums.begin(), s.sums.end(),
                                               [&](double y) { return std::abs(y - x - e) <= threshold_dedup_tol; });
                EXPECT_TRUE(found);
            }
    }
}

TEST(Thresholds, LadderFromGroundState) {
    const auto t = threshold_set(std::vector<double>{-0.2}, {1.0}, 3.0);
    const std::vector<double> expect{0.8, 1.8, 2.8};
    ASSERT_EQ(t.sums.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(t.sums[i], expect[i], 1e-12);
}

TEST(Thresholds, TwoBoundStatesMerge) {
    const auto t = threshold_set(std::vector<double>{0.0, 0.5}, {1.0}, 3.0);
    std::vector<double> brute;
    for (double p : {0.0, 0.5})
        for (int n = 1; n <= 3; ++n)
            if (p + n <= 3.0) brute.push_back(p + n);
    std::sort(brute.begin(), brute.end());
    ASSERT_EQ(t.sums.size(), brute.size());
    for (std::size_t i = 0; i < brute.size(); ++i) EXPECT_NEAR(t.sums[i], brute[i], 1e-12);
}

TEST(Thresholds, KappaVariantKeepsPointSpectrum) {
    const std::vector<double> pp{0.0, 0.5};
    EXPECT_TRUE(threshold_set(pp, {}, 3.0, ThresholdVariant::tau).sums.empty());
    const auto k = threshold_set(pp, {}, 3.0, ThresholdVariant::kappa);
    ASSERT_EQ(k.sums.size(), 2u);
    EXPECT_EQ(k.sums[1], 0.5);
    EXPECT_EQ(threshold_set(pp, {1.0}, 3.0, ThresholdVariant::kappa).sums.size(), 7u);
}

TEST(Thresholds, Distance) {
    const auto t = dgamma1_enumerate({1.0}, 3.0, false);
    EXPECT_EQ(t.distance(0.9, 1.1), 0.0);
    EXPECT_NEAR(t.distance(1.2, 1.5), 0.2, 1e-12);
    EXPECT_NEAR(t.distance(3.5, 4.0), 0.5, 1e-12);
}

TEST(Virial, RandomPairs) {
    std::mt19937_64 rng(15);
    for (int t = 0; t < 20; ++t) {
        const int n = 12;
        const cmat H = oracle::random_hermitian(n, rng), A = oracle::random_hermitian(n, rng);
        const cmat B = I_unit * commutator(H, A);
        const double bn = op_norm(B);
        for (const auto& r : virial_residual(eig_hermitian(H), B)) {
            ASSERT_EQ(r.multiplicity, 1);
            EXPECT_LE(r.residual, 1e-9 * bn);
        }
    }
}

TEST(Virial, DegenerateBlockIsReportedWhole) {
    // Two free modes with equal frequency: the one-particle level is 2-fold.
    std::mt19937_64 rng(16);
    auto b = build_basis(2, 2);
    const cmat conj = oracle::random_hermitian(2, rng);
    const auto h = make_hamiltonian(std::move(b), rvec::Constant(2, 1.0), cmat::Zero(6, 6), conj,
                                    cmat::Identity(2, 2), 1.0, 1.0);
    const auto rows = virial_residual(h);
    const double bn = std::max(op_norm(h.commutator_B.mat), 1e-300);
    for (const auto& r : rows) {
        EXPECT_LE(r.residual, 1e-9 * std::max(bn, 1.0));
        if (std::abs(r.eigenvalue - 1.0) < 1e-12) EXPECT_EQ(r.multiplicity, 2);
    }

    // A degenerate pair that is not B-invariant shows a nonzero block norm.
    rvec vals(3);
    vals << 0.0, 1.0, 1.0;
    const auto e = diag_eig(vals);
    cmat B = cmat::Zero(3, 3);
    B(1, 2) = B(2, 1) = 0.3;
    const auto r2 = virial_residual(e, B);
    ASSERT_EQ(r2.size(), 2u);
    EXPECT_EQ(r2[1].multiplicity, 2);
    EXPECT_NEAR(r2[1].residual, 0.3, 1e-14);
}

TEST(Virial, NumberOperatorCommutes) {
    std::mt19937_64 rng(17);
    const auto f = free_data(3, rng);
    auto b = build_basis(3, 3);
    const Eigen::Index dim = b.dim();
    const auto h = make_hamiltonian(std::move(b), f.omega, cmat::Zero(dim, dim), cmat::Identity(3, 3), f.weight,
                                    1.0, 1.0);
    EXPECT_LE(max_abs(h.commutator_B.mat), 1e-13);
    for (const auto& r : virial_residual(h)) EXPECT_LE(r.residual, 1e-13);
}

TEST(Mourre, BelowSpectrumIsEmptyWindow) {
    std::mt19937_64 rng(18);
    const auto h = free_bundle(3, 2, rng);
    const auto tau = threshold_set(h, {h.m_inf}, 5.0);
    const auto r = mourre_window_test(h, -3.0, -2.0, tau);
    EXPECT_EQ(r.verdict, MourreVerdict::empty_window);
    EXPECT_EQ(r.eigencount, 0);
    EXPECT_EQ(to_string(r.verdict), "empty-window");
}

TEST(Mourre, MatchesRhoAtSameWidth) {
    std::mt19937_64 rng(19);
    const auto h = free_bundle(4, 3, rng);
    const auto tau = threshold_set(h, {}, 5.0, ThresholdVariant::kappa);
    for (double lambda : {h.omega_modes(1), h.omega_modes(2), 2.4}) {
        const double w = 0.2;
        const auto r = mourre_window_test(h, lambda - w, lambda + w, tau);
        const auto rho = rho_lower_bound(h, h.commutator_B.mat, lambda, {w});
        EXPECT_EQ(r.eigencount, rho[0].count);
        if (rho[0].count > 0) EXPECT_NEAR(r.c0_estimate, rho[0].a_max, 1e-12);
    }
}

TEST(Mourre, ThresholdWindowsAreFlagged) {
    std::mt19937_64 rng(20);
    const auto h = free_bundle(4, 3, rng);
    const auto tau = threshold_set(h, {h.m_inf}, 5.0);
    const double t0 = tau.sums.front();
    const auto r = mourre_window_test(h, t0 - 0.1, t0 + 0.1, tau);
    EXPECT_EQ(r.distance_to_tau, 0.0);
    EXPECT_EQ(r.verdict, MourreVerdict::near_threshold);
}

TEST(Mourre, ProjectedEigenvectorsAreRemoved) {
    rvec vals(3);
    vals << 0.0, 1.0, 1.1;
    const auto e = diag_eig(vals);
    cmat B = cmat::Identity(3, 3);
    B(1, 1) = -1.0;
    const ThresholdSet tau = dgamma1_enumerate({5.0}, 6.0, false);
    const auto raw = mourre_window_test(e, B, 0.9, 1.2, tau);
    EXPECT_EQ(raw.verdict, MourreVerdict::not_positive);
    MourreOptions opts;
    opts.projected = {1};
    const auto cut = mourre_window_test(e, B, 0.9, 1.2, tau, opts);
    EXPECT_EQ(cut.projected, 1);
    EXPECT_EQ(cut.eigencount, 2);
    EXPECT_NEAR(cut.c0_estimate, 1.0, 1e-14);
    EXPECT_EQ(cut.verdict, MourreVerdict::positive);
}
