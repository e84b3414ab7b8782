#include "qftlab/linalg.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qftlab {

cmat HermitianEig::apply(const std::function<double(double)>& f) const {
    rvec fv(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) fv(i) = f(values(i));
    return vectors * fv.asDiagonal() * vectors.adjoint();
}

cmat HermitianEig::apply_complex(const std::function<cplx(double)>& f) const {
    cvec fv(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) fv(i) = f(values(i));
    return vectors * fv.asDiagonal() * vectors.adjoint();
}

std::vector<Eigen::Index> HermitianEig::window_indices(double lo, double hi) const {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values(i) >= lo && values(i) <= hi) idx.push_back(i);
    }
    return idx;
}

cmat HermitianEig::window(double lo, double hi) const {
    const auto idx = window_indices(lo, hi);
    cmat out(vectors.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = vectors.col(idx[c]);
    return out;
}

rmat RealSymEig::apply(const std::function<double(double)>& f) const {
    rvec fv(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) fv(i) = f(values(i));
    return vectors * fv.asDiagonal() * vectors.transpose();
}

HermitianEig eig_hermitian(const cmat& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("eig_hermitian: matrix must be square");
    if (a.rows() == 0) return {};
    const cmat sym = hermitian_part(a);
    Eigen::SelfAdjointEigenSolver<cmat> solver(sym);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eig_hermitian: solver did not converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

RealSymEig eig_symmetric(const rmat& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("eig_symmetric: matrix must be square");
    const rmat sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<rmat> solver(sym);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eig_symmetric: solver did not converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

double op_norm(const cmat& a) {
    if (a.size() == 0) return 0.0;
    // Gram matrix on the smaller side.
    const cmat g = a.rows() <= a.cols() ? cmat(a * a.adjoint()) : cmat(a.adjoint() * a);
    Eigen::SelfAdjointEigenSolver<cmat> solver(g, Eigen::EigenvaluesOnly);
    const double top = solver.eigenvalues().maxCoeff();
    return std::sqrt(std::max(top, 0.0));
}

double op_norm(const rmat& a) { return op_norm(cmat(a.cast<cplx>())); }

double min_eigenvalue(const cmat& hermitian) {
    if (hermitian.size() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<cmat> solver(hermitian_part(hermitian), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

double max_eigenvalue(const cmat& hermitian) {
    if (hermitian.size() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<cmat> solver(hermitian_part(hermitian), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(solver.eigenvalues().size() - 1);
}

cmat hermitian_part(const cmat& a) { return 0.5 * (a + a.adjoint()); }

double hermiticity_defect(const cmat& a) {
    const double n = a.norm();
    if (n == 0.0) return 0.0;
    return (a - a.adjoint()).norm() / n;
}

cmat expi_hermitian(const cmat& h, double t) {
    const HermitianEig e = eig_hermitian(h);
    return e.apply_complex([t](double x) { return std::exp(I_unit * (t * x)); });
}

cmat kron(const cmat& a, const cmat& b) {
    cmat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

double loglog_slope(std::span<const double> x, std::span<const double> y, double floor) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
        if (!(y[i] > floor) || !(x[i] > 0)) continue;
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double den = n * sxx - sx * sx;
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / den;
}

cmat psd_power(const cmat& a, double exponent, double cutoff) {
    const HermitianEig e = eig_hermitian(a);
    return e.apply([&](double v) { return v > cutoff ? std::pow(v, exponent) : 0.0; });
}

}  // namespace qftlab
