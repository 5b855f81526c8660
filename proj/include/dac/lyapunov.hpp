#pragma once

#include "dac/error.hpp"
#include "dac/linalg.hpp"
#include "dac/spatial_model.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>
#include <string>

namespace dac {

// Conventions
// -----------
// Operators on Z are stored in Gram (bilinear-form) coordinates: a
// self-adjoint operator X on Z is represented by the symmetric matrix G with
// <z, X z>_Z = z^T G z. With the diagonal mass matrix W, G = W X. The Z
// identity is therefore W, and the Lyapunov inequality
//     <A z, P z>_Z + <P z, A z>_Z = -<z, Q z>_Z
// becomes the plain matrix equation A^T P + P A = -Q in Gram coordinates.

/// Solves A^T X + X A = -Q by complex Bartels-Stewart.
///
/// A = U T U^* (complex Schur), then T^* Y + Y T = -U^* Q U is solved column
/// by column with lower-triangular substitutions and X = U Y U^*.
inline Matrix solve_lyapunov_equation(const Matrix& a, const Matrix& q) {
    using C = std::complex<double>;
    const Eigen::Index n = a.rows();
    if (a.cols() != n || q.rows() != n || q.cols() != n)
        throw ConfigError("lyapunov_lab", "Lyapunov equation dimensions do not conform");
    if (n == 0) return Matrix(0, 0);

    Eigen::ComplexSchur<Matrix> schur(a);
    if (schur.info() != Eigen::Success) throw DesignError("lyapunov_lab", "Schur decomposition failed");
    const ComplexMatrix& u = schur.matrixU();
    const ComplexMatrix& t = schur.matrixT();
    const ComplexMatrix rhs = -(u.adjoint() * q.cast<C>() * u);
    const ComplexMatrix t_adj = t.adjoint();

    ComplexMatrix y(n, n);
    Eigen::VectorXcd col(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        col = rhs.col(j);
        if (j > 0) col.noalias() -= y.leftCols(j) * t.col(j).head(j);
        ComplexMatrix lhs = t_adj;
        lhs.diagonal().array() += t(j, j);
        y.col(j) = lhs.triangularView<Eigen::Lower>().solve(col);
    }
    const Matrix x = (u * y * u.adjoint()).real();
    return symmetrize(x);
}

inline double lyapunov_residual(const Matrix& a, const Matrix& p, const Matrix& q) {
    const double qn = symmetric_norm(q);
    const Matrix r = a.transpose() * p + p * a + q;
    return symmetric_norm(r) / (qn > 0.0 ? qn : 1.0);
}

// ---------------------------------------------------------------------------

struct QSelection {
    Matrix Q;
    int branch = 0;                 // 1: Q = -(A_m + A_m^*), 2: Q = identity on Z
    double symmetric_margin = 0.0;  // min eig of -(A_m + A_m^*) in Z
    double spectral_abscissa = 0.0;
    double normality_ratio = 0.0;   // symmetric_margin / (2 |spectral abscissa|)
};

/// Chooses Q for the Lyapunov solve.
///
/// Branch 1 fires when -(A_m + A_m^*) is positive definite on Z and its
/// margin is commensurate with the decay rate of A_m (normality ratio at
/// least `normality_threshold`). For strongly non-normal, transport-dominated
/// operators the discrete symmetric part is only weakly definite and its
/// margin collapses under refinement; those fall back to the Z identity.
inline QSelection select_Q(const Matrix& am, const Vector& mass, double normality_threshold = 0.1) {
    QSelection sel;
    sel.spectral_abscissa = spectral_abscissa(am);
    if (!(sel.spectral_abscissa < 0.0)) {
        std::ostringstream os;
        os << "A_m is not Hurwitz (spectral abscissa " << sel.spectral_abscissa << ")";
        throw DesignError("lyapunov_lab", os.str());
    }
    const Matrix w = mass.asDiagonal();
    const Matrix sym = -(am.transpose() * w + w * am);
    sel.symmetric_margin = min_weighted_eigenvalue(sym, mass);
    sel.normality_ratio = sel.symmetric_margin / (2.0 * std::abs(sel.spectral_abscissa));
    if (sel.symmetric_margin > 0.0 && sel.normality_ratio >= normality_threshold) {
        sel.Q = symmetrize(sym);
        sel.branch = 1;
    } else {
        sel.Q = w;
        sel.branch = 2;
    }
    return sel;
}

struct LyapunovCertificate {
    Matrix P;  // Gram form
    Matrix Q;  // Gram form
    Vector mass;
    double residual = 0.0;
    double lambda_p = 0.0;           // largest lambda with Q - lambda P >= 0
    double coercivity_margin = 0.0;  // min <z, P z> / ||z||_Z^2
    int grid_n = 0;
    int q_branch = 0;

    /// P as an operator on Z (W^{-1} P).
    Matrix operator_P() const { return mass.cwiseInverse().asDiagonal() * P; }

    /// <z, P z>_Z
    double energy(const Vector& z) const { return z.dot(P * z); }
};

inline LyapunovCertificate solve_lyapunov(const Matrix& am, const Matrix& q, const Vector& mass, int grid_n = 0) {
    const double abscissa = spectral_abscissa(am);
    if (!(abscissa < 0.0)) {
        std::ostringstream os;
        os << "certificate refused: A_m is not Hurwitz (spectral abscissa " << abscissa << ")";
        throw DesignError("lyapunov_lab", os.str());
    }
    LyapunovCertificate cert;
    cert.mass = mass.size() == am.rows() ? mass : Vector::Ones(am.rows());
    cert.Q = symmetrize(q);
    cert.P = solve_lyapunov_equation(am, cert.Q);
    cert.residual = lyapunov_residual(am, cert.P, cert.Q);
    cert.grid_n = grid_n;

    Eigen::SelfAdjointEigenSolver<Matrix> p_eig(cert.P, Eigen::EigenvaluesOnly);
    if (!(p_eig.eigenvalues()(0) > 0.0))
        throw DesignError("lyapunov_lab", "Lyapunov solution is not positive definite");
    cert.lambda_p = pencil_eigenvalues(cert.Q, cert.P)(0);
    cert.coercivity_margin = min_weighted_eigenvalue(cert.P, cert.mass);
    if (!(cert.lambda_p > 0.0)) throw DesignError("lyapunov_lab", "lambda_p is not positive; Q must be definite");
    return cert;
}

inline LyapunovCertificate certify(const Matrix& am, const Vector& mass, int grid_n = 0,
                                   double normality_threshold = 0.1) {
    const QSelection sel = select_Q(am, mass, normality_threshold);
    LyapunovCertificate cert = solve_lyapunov(am, sel.Q, mass, grid_n);
    cert.q_branch = sel.branch;
    return cert;
}

// ---------------------------------------------------------------------------
// KYP / SPR

/// Candidate triple for A_m^* P + P A_m = -F^* F - Q, E P = C.
/// P, Q are Gram form; F is a Euclidean factor with F^T F the Gram form of
/// F^* F; E is the Riesz representer of the output-matching functional.
struct KypCertificate {
    Matrix P;
    Matrix Q;
    Matrix F;
    RowVector E;
    double eps_Q = 0.0;
    double residual_lyap = 0.0;
    double residual_output = 0.0;
};

struct KypReport {
    double residual_lyap = 0.0;
    double residual_output = 0.0;
    double measured_eps_Q = 0.0;
    bool lyap_ok = false;
    bool output_ok = false;
    bool coercive_Q_ok = false;
    bool passed() const { return lyap_ok && output_ok && coercive_Q_ok; }
};

inline KypReport check_kyp(const Matrix& am, const RowVector& c, const KypCertificate& cert, const Vector& mass,
                           double tol = 1e-8) {
    const Eigen::Index n = am.rows();
    KypReport rep;
    if (cert.P.rows() != n || cert.Q.rows() != n || c.size() != n || cert.E.size() != n ||
        (cert.F.size() != 0 && cert.F.cols() != n)) {
        return rep;
    }
    const Matrix ftf = cert.F.size() == 0 ? Matrix::Zero(n, n) : Matrix(cert.F.transpose() * cert.F);
    const double scale = std::max(symmetric_norm(cert.Q) + symmetric_norm(ftf), 1e-300);
    rep.residual_lyap = symmetric_norm(am.transpose() * cert.P + cert.P * am + ftf + cert.Q) / scale;
    const double cn = c.norm();
    rep.residual_output = (cert.E * cert.P - c).norm() / (cn > 0.0 ? cn : 1.0);
    rep.measured_eps_Q = min_weighted_eigenvalue(cert.Q, mass.size() == n ? mass : Vector::Ones(n));
    rep.lyap_ok = rep.residual_lyap <= tol;
    rep.output_ok = rep.residual_output <= tol;
    rep.coercive_Q_ok = cert.eps_Q > 0.0 && rep.measured_eps_Q >= cert.eps_Q * (1.0 - 1e-12);
    return rep;
}

/// Collocated heat benchmark with a certificate built from the branch-1
/// Lyapunov solution (P = identity on Z, F = 0).
struct SprBenchmark {
    PlantModel plant;
    KypCertificate kyp;
};

inline SprBenchmark construct_spr_benchmark(const SpatialGrid& grid, PlantSpec spec = {}) {
    spec.kind = PlantKind::spr_heat;
    spec.length = grid.length;
    SprBenchmark out{assemble_plant(spec, grid), {}};
    const PlantModel& p = out.plant;
    const Vector& mass = p.space.weights();
    const Matrix w = mass.asDiagonal();
    KypCertificate& k = out.kyp;
    k.Q = symmetrize(-(p.A.transpose() * w + w * p.A));
    k.P = solve_lyapunov_equation(p.A, k.Q);
    k.F = Matrix::Zero(0, p.state_dim());
    // E P = C  =>  E = C P^{-1}
    k.E = p.C * k.P.inverse();
    k.eps_Q = 0.9 * min_weighted_eigenvalue(k.Q, mass);
    const KypReport rep = check_kyp(p.A, p.C, k, mass);
    k.residual_lyap = rep.residual_lyap;
    k.residual_output = rep.residual_output;
    return out;
}

}  // namespace dac
