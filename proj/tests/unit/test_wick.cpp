#include "qftlab/wick.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace qftlab;

namespace {

double max_abs(const cmat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Largest upward sector shift of any block.
int up_shift(const WickKernel& w) {
    int s = 0;
    for (const auto& [key, b] : w.blocks()) s = std::max(s, key.first - key.second);
    return s;
}

cmat cols_below(const OccupationBasis& b, const cmat& m, int n) { return m.leftCols(b.sector_begin(n + 1)); }

}  // namespace

TEST(WickAssemble, MatchesTupleSumOracle) {
    std::mt19937_64 rng(101);
    for (int d = 1; d <= 2; ++d) {
        const auto b = build_basis(d, 4);
        const auto ref = oracle::brute_basis(d, 4);
        for (int t = 0; t < 10; ++t) {
            const WickKernel w = random_kernel(d, 4, rng);
            EXPECT_LT(w.asymmetry_residual(), 1e-15);
            const cmat m = wick_assemble(w, b).mat;
            EXPECT_LT(max_abs(m - oracle::wick_tuple_sum(w, ref)), 1e-12);
        }
    }
}

TEST(WickAssemble, RankOneIsLadderProduct) {
    std::mt19937_64 rng(7);
    const auto b = build_basis(2, 4);
    for (int t = 0; t < 5; ++t) {
        const cvec g = oracle::random_vector(2, rng), h = oracle::random_vector(2, rng);
        const cmat lhs = wick_assemble(rank_one_11(g, h), b).mat;
        const cmat rhs = ladder(b, g, LadderKind::create).mat * ladder(b, h, LadderKind::annihilate).mat;
        EXPECT_LT(max_abs(lhs - rhs), 1e-14);
    }
}

TEST(WickAssemble, ScalarAndSingleModeExamples) {
    const auto b = build_basis(2, 3);
    EXPECT_LT(max_abs(wick_assemble(scalar_kernel(2, 2.5), b).mat - 2.5 * cmat::Identity(b.dim(), b.dim())), 1e-15);

    const auto b1 = build_basis(1, 3);
    WickKernel w(1);
    w.add_block(2, 0, cmat::Ones(1, 1));
    const cmat m = wick_assemble(w, b1).mat;
    EXPECT_NEAR(m(2, 0).real(), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(m(3, 1).real(), std::sqrt(6.0), 1e-15);
    EXPECT_NEAR(max_abs(m), std::sqrt(6.0), 1e-15);
    EXPECT_NEAR(m.cwiseAbs().sum(), std::sqrt(2.0) + std::sqrt(6.0), 1e-14);

    EXPECT_THROW(wick_assemble(w, b), std::invalid_argument);
}

TEST(WickAssemble, BlockBandedAndHermitian) {
    std::mt19937_64 rng(55);
    const auto b = build_basis(2, 4);
    for (int p = 0; p <= 2; ++p)
        for (int q = 0; q <= 2; ++q) {
            WickKernel w(2);
            w.add_block(p, q, oracle::random_matrix(p == 0 ? 1 : (p == 1 ? 2 : 4), q == 0 ? 1 : (q == 1 ? 2 : 4), rng));
            const cmat m = wick_assemble(w, b).mat;
            for (Eigen::Index i = 0; i < b.dim(); ++i)
                for (Eigen::Index j = 0; j < b.dim(); ++j)
                    if (b.total(i) != b.total(j) + p - q) EXPECT_EQ(m(i, j), cplx(0.0));
        }
    const WickKernel h = random_kernel(2, 4, rng, true);
    const auto op = wick_assemble(h, b);
    EXPECT_TRUE(op.hermitian_flag);
    EXPECT_LT(hermiticity_defect(op.mat), 1e-12);
}

TEST(WickSymbols, Adjoint) {
    std::mt19937_64 rng(9);
    const auto b = build_basis(2, 3);
    for (int t = 0; t < 10; ++t) {
        const WickKernel w = random_kernel(2, 3, rng);
        const WickKernel a = wick_adjoint(w);
        EXPECT_LT(max_abs(wick_assemble(a, b).mat - wick_assemble(w, b).mat.adjoint()), 1e-12);
        const WickKernel aa = wick_adjoint(a);
        for (const auto& [key, blk] : w.blocks()) EXPECT_EQ(max_abs(aa.block(key.first, key.second) - blk), 0.0);
    }
    WickKernel v(2);
    cmat h(2, 1);
    h << cplx(1, 2), cplx(-0.5, 0.25);
    v.add_block(1, 0, h);
    EXPECT_EQ(max_abs(wick_adjoint(v).block(0, 1) - h.adjoint()), 0.0);
}

TEST(WickSymbols, DGammaCommutator) {
    std::mt19937_64 rng(13);
    const int n_max = 4;
    const auto b = build_basis(2, n_max);

    const WickKernel w = random_kernel(2, 4, rng);
    const WickKernel c1 = commutator_with_dgamma(cmat::Identity(2, 2), w);
    for (const auto& [key, blk] : w.blocks())
        EXPECT_LT(max_abs(c1.block(key.first, key.second) - double(key.first - key.second) * blk), 1e-13);

    const cvec g = oracle::random_vector(2, rng), h = oracle::random_vector(2, rng);
    const cmat bb = oracle::random_hermitian(2, rng);
    const WickKernel r1 = commutator_with_dgamma(bb, rank_one_11(g, h));
    EXPECT_LT(max_abs(r1.block(1, 1) - (bb * g * h.adjoint() - g * h.adjoint() * bb)), 1e-14);

    for (int t = 0; t < 10; ++t) {
        const WickKernel k = random_kernel(2, 4, rng);
        const cmat bh = oracle::random_hermitian(2, rng);
        const cmat db = dGamma(b, bh).mat, wk = wick_assemble(k, b).mat;
        const cmat lhs = db * wk - wk * db;
        const cmat rhs = wick_assemble(commutator_with_dgamma(bh, k), b).mat;
        EXPECT_LT(max_abs(cols_below(b, lhs - rhs, n_max - up_shift(k))), 1e-10);
    }
}

TEST(WickSymbols, GammaConjugation) {
    std::mt19937_64 rng(17);
    const auto b = build_basis(2, 4);
    const WickKernel w = random_kernel(2, 3, rng);
    const WickKernel same = gamma_conjugation(cmat::Identity(2, 2), w);
    for (const auto& [key, blk] : w.blocks()) EXPECT_LT(max_abs(same.block(key.first, key.second) - blk), 1e-15);

    cmat ph = cmat::Zero(2, 2);
    ph(0, 0) = std::exp(I_unit * 0.3);
    ph(1, 1) = std::exp(-I_unit * 1.1);
    const cvec g = oracle::random_vector(2, rng), h = oracle::random_vector(2, rng);
    const WickKernel r1 = gamma_conjugation(ph, rank_one_11(g, h));
    EXPECT_LT(max_abs(r1.block(1, 1) - (ph * g) * (ph * h).adjoint()), 1e-14);

    for (int t = 0; t < 10; ++t) {
        const cmat u = oracle::random_unitary(2, rng);
        const WickKernel k = random_kernel(2, 3, rng);
        const cmat gq = Gamma(b, u).mat;
        const cmat lhs = gq * wick_assemble(k, b).mat * gq.adjoint();
        EXPECT_LT(max_abs(lhs - wick_assemble(gamma_conjugation(u, k), b).mat), 1e-10);
    }
    EXPECT_THROW(gamma_conjugation(2.0 * cmat::Identity(2, 2), w), std::invalid_argument);
}

TEST(WickSymbols, ContractionExamples) {
    std::mt19937_64 rng(19);
    const cvec g = oracle::random_vector(3, rng), h0 = oracle::random_vector(3, rng), h = oracle::random_vector(3, rng);
    const WickKernel c = contract(rank_one_11(g, h0), h, ContractSide::right, 1);
    EXPECT_LT(max_abs(c.block(1, 0) - h0.dot(h) * g), 1e-14);
    const WickKernel z = contract(random_kernel(3, 3, rng), cvec::Zero(3), ContractSide::left, 1);
    for (const auto& [key, blk] : z.blocks()) EXPECT_EQ(max_abs(blk), 0.0);
    EXPECT_THROW(contract(rank_one_11(g, h0), h, ContractSide::left, 2, true), std::invalid_argument);
}

TEST(WickSymbols, LadderCommutators) {
    std::mt19937_64 rng(23);
    const int n_max = 4;
    const auto b = build_basis(2, n_max);
    for (int t = 0; t < 10; ++t) {
        WickKernel w(2);
        w.add_block(2, 2, oracle::random_matrix(4, 4, rng));
        const cvec h = oracle::random_vector(2, rng);
        const cmat wk = wick_assemble(w, b).mat;
        const cmat cr = ladder(b, h, LadderKind::create).mat, an = ladder(b, h, LadderKind::annihilate).mat;
        const cmat lhs_c = wk * cr - cr * wk;
        const cmat rhs_c = wick_assemble(commutator_with_creation(w, h), b).mat;
        // The (2,1) block equals 2 (w|h)), two input legs available.
        EXPECT_LT(max_abs(commutator_with_creation(w, h).block(2, 1) -
                          2.0 * contract(w, h, ContractSide::right, 1).block(2, 1)), 1e-14);
        EXPECT_LT(max_abs(cols_below(b, lhs_c - rhs_c, n_max - 1)), 1e-10);
        const cmat lhs_a = wk * an - an * wk;
        const cmat rhs_a = wick_assemble(commutator_with_annihilation(w, h), b).mat;
        EXPECT_LT(max_abs(cols_below(b, lhs_a - rhs_a, n_max - 1)), 1e-10);
    }
}

TEST(WickSymbols, WeylConjugationExpansion) {
    const cvec h = cvec::Constant(2, 0.3);
    std::mt19937_64 rng(29);
    const WickKernel w = random_kernel(2, 3, rng);
    const WickKernel same = weyl_conjugation(w, cvec::Zero(2));
    for (const auto& [key, blk] : w.blocks()) EXPECT_LT(max_abs(same.block(key.first, key.second) - blk), 1e-15);

    // (1,0) block g: a*(g) + (i/sqrt 2) <h, g>.
    WickKernel v(2);
    const cvec g = oracle::random_vector(2, rng);
    v.add_block(1, 0, g);
    const WickKernel e = weyl_conjugation(v, h);
    EXPECT_LT(max_abs(e.block(1, 0) - g), 1e-15);
    EXPECT_LT(std::abs(e.block(0, 0)(0, 0) - I_unit / std::sqrt(2.0) * h.dot(g)), 1e-15);

    // One mode, degree 2, small h: leakage decreases with the cap.
    WickKernel w1(1);
    w1.add_block(2, 0, cmat::Constant(1, 1, cplx(0.4, 0.1)));
    w1.add_block(1, 1, cmat::Constant(1, 1, 0.7));
    w1.add_block(0, 2, cmat::Constant(1, 1, cplx(0.4, -0.1)));
    w1.add_block(1, 0, cmat::Constant(1, 1, cplx(0.2, 0.3)));
    cvec h1(1);
    h1(0) = 0.1;
    double prev = 1e9;
    for (int n_max : {6, 10, 14}) {
        const auto b = build_basis(1, n_max);
        const auto r = weyl_conjugation_residual(w1, h1, b, n_max / 2);
        EXPECT_LT(r.residual, prev);
        prev = r.residual;
        if (n_max == 14) EXPECT_LE(r.residual, 1e-5);
    }
}

TEST(WickSymbols, InterleaveNorm) {
    std::mt19937_64 rng(31);
    const WickKernel w = random_kernel(2, 3, rng);
    EXPECT_EQ(interleave_norm(cmat::Zero(2, 2), w), 0.0);

    const cmat a = oracle::random_hermitian(3, rng);
    const cvec h = oracle::random_vector(3, rng);
    WickKernel v(3);
    v.add_block(1, 0, h);
    EXPECT_NEAR(interleave_norm(a, v), (a * h).norm(), 1e-13);

    const cmat m = oracle::random_matrix(3, 3, rng);
    const cmat ad = cmat(oracle::random_hermitian(3, rng).diagonal().real().cast<cplx>().asDiagonal());
    WickKernel u(3);
    u.add_block(1, 1, m);
    EXPECT_NEAR(interleave_norm(ad, u), (ad * m).norm() + (m * ad.adjoint()).norm(), 1e-12);
    EXPECT_NEAR(interleave_norm(a, u), (a * m).norm() + (m * a.adjoint()).norm(), 1e-12);
}

TEST(WickKernelIO, RoundTripAndHeader) {
    std::mt19937_64 rng(37);
    const WickKernel w = random_kernel(2, 4, rng);
    std::stringstream ss;
    write_kernel(ss, w);
    const WickKernel r = read_kernel(ss);
    ASSERT_EQ(r.blocks().size(), w.blocks().size());
    for (const auto& [key, blk] : w.blocks()) EXPECT_EQ(max_abs(r.block(key.first, key.second) - blk), 0.0);
    std::stringstream bad("qftlab-wick-kernel v0\nmodes 1\nblocks 0\n");
    EXPECT_THROW(read_kernel(bad), std::runtime_error);
    EXPECT_THROW(WickKernel(2).add_block(4, 3, cmat::Zero(16, 8)), std::invalid_argument);
}

TEST(WickBounds, NumberWeightedBoundIsUniform) {
    // ||(N+1)^{-k} Wick(w) (N+1)^{-m}|| <= sum_blocks c_{p,q} ||w_{p,q}||, the
    // sector bound sqrt(n! n'!)/(n-q)!.
    std::mt19937_64 rng(41);
    const int n_max = 4;
    const auto b = build_basis(2, n_max);
    auto weight = [&](double power) {
        cvec v(b.dim());
        for (Eigen::Index i = 0; i < b.dim(); ++i) v(i) = std::pow(b.total(i) + 1.0, -power);
        return cmat(v.asDiagonal());
    };
    double fitted = 0;
    for (int t = 0; t < 50; ++t) {
        const int deg = 1 + t % 4;
        const WickKernel w = random_kernel(2, deg, rng);
        const double k = 0.5 * deg / 2.0, m = 0.5 * deg / 2.0;  // k + m = deg / 2
        const double lhs = op_norm(cmat(weight(k) * wick_assemble(w, b).mat * weight(m)));
        double bound = 0;
        for (const auto& [key, blk] : w.blocks()) {
            const auto [p, q] = key;
            double c = 0;
            for (int n = q; n <= n_max && n - q + p <= n_max; ++n) {
                const int np = n - q + p;
                const double f = std::sqrt(std::tgamma(n + 1.0) * std::tgamma(np + 1.0)) / std::tgamma(n - q + 1.0);
                c = std::max(c, f * std::pow(np + 1.0, -k) * std::pow(n + 1.0, -m));
            }
            bound += c * op_norm(blk);
        }
        EXPECT_LE(lhs, bound * (1 + 1e-12));
        fitted = std::max(fitted, lhs / w.frobenius_norm());
    }
    EXPECT_TRUE(std::isfinite(fitted));
    EXPECT_LT(fitted, 10.0);
}
