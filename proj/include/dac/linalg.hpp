#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace dac {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Largest real part over the spectrum.
inline double spectral_abscissa(const Matrix& a) {
    if (a.size() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().real().maxCoeff();
}

/// Largest eigenvalue modulus; drives the explicit-integrator step limit.
inline double spectral_radius(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_hurwitz(const Matrix& a) { return spectral_abscissa(a) < 0.0; }

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Spectral norm of a symmetric matrix (max |eigenvalue|).
inline double symmetric_norm(const Matrix& s) {
    if (s.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

/// Eigenvalues of the symmetric-definite pencil (S, M), i.e. S v = mu M v,
/// sorted ascending. M must be symmetric positive definite.
inline Vector pencil_eigenvalues(const Matrix& s, const Matrix& m) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(symmetrize(s), symmetrize(m),
                                                        Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

/// Smallest value of <z, S z> / <z, z>_Z for a diagonal mass matrix with
/// entries `mass`. This is the Z-weighted lower bound of a Gram-form operator.
inline double min_weighted_eigenvalue(const Matrix& s, const Vector& mass) {
    const Vector inv_sqrt = mass.cwiseSqrt().cwiseInverse();
    const Matrix scaled = inv_sqrt.asDiagonal() * symmetrize(s) * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(scaled), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

/// Induced norm of a linear map x -> a x on Z, where ||x||_Z^2 = x^T diag(mass) x.
inline double z_induced_norm(const Matrix& a, const Vector& mass) {
    const Vector s = mass.cwiseSqrt();
    return spectral_norm(s.asDiagonal() * a * s.cwiseInverse().asDiagonal());
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace dac
