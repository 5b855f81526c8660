#pragma once

#include "dac/error.hpp"
#include "dac/linalg.hpp"
#include "dac/lyapunov.hpp"
#include "dac/spatial_model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dac {

enum class GainStrategy { zero, lqr };

inline std::optional<GainStrategy> parse_gain_strategy(const std::string& s) {
    if (s == "zero") return GainStrategy::zero;
    if (s == "lqr") return GainStrategy::lqr;
    return std::nullopt;
}

inline std::string to_string(GainStrategy g) { return g == GainStrategy::zero ? "zero" : "lqr"; }

/// ||T(t)||_Z <= M exp(-beta t) for T(t) = exp(A_m t).
struct SemigroupEnvelope {
    double M = 1.0;
    double beta = 0.0;
};

/// beta = 0.95 |spectral abscissa|, M = max(1, sup_k ||T(t_k)||_Z e^{beta t_k})
/// over uniform samples in windows of length 20 / beta, extended until the
/// weighted norm has decayed past its peak, plus a geometric refinement of
/// the first interval.
inline SemigroupEnvelope fit_envelope(const Matrix& am, const Vector& mass, int samples = 400) {
    const double abscissa = spectral_abscissa(am);
    if (!(abscissa < 0.0)) throw DesignError("controller", "semigroup is not exponentially stable");
    SemigroupEnvelope env;
    env.beta = 0.95 * std::abs(abscissa);
    const Vector s = mass.cwiseSqrt();
    const Vector s_inv = s.cwiseInverse();
    const Matrix az = s.asDiagonal() * am * s_inv.asDiagonal();  // A_m in Z-orthonormal coordinates

    auto z_norm = [](const Matrix& phi) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(phi.transpose() * phi, Eigen::EigenvaluesOnly);
        return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    };

    const double horizon = 20.0 / env.beta;
    const double dt = horizon / samples;
    double sup = 1.0;
    for (int k = 1; k <= 16; ++k) {
        const double t = dt * std::pow(0.5, k);
        sup = std::max(sup, z_norm((az * t).exp()) * std::exp(env.beta * t));
    }
    // Strongly non-normal generators peak late, so keep extending the window
    // until the weighted norm of the last window has fallen well below the sup.
    const Matrix step = (az * dt).exp();
    Matrix phi = Matrix::Identity(am.rows(), am.cols());
    for (int window = 0, k = 0; window < 50; ++window) {
        double window_sup = 0.0;
        for (int j = 0; j < samples; ++j) {
            phi = step * phi;
            ++k;
            window_sup = std::max(window_sup, z_norm(phi) * std::exp(env.beta * k * dt));
        }
        sup = std::max(sup, window_sup);
        if (window_sup < 0.5 * sup) break;
    }
    env.M = sup;
    return env;
}

/// Continuous algebraic Riccati equation A^T X + X A - X B R^{-1} B^T X + Q = 0.
///
/// Stable invariant subspace of the Hamiltonian, refined by Newton-Kleinman
/// iterations on the Lyapunov solver.
inline Matrix solve_care(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r) {
    const Eigen::Index n = a.rows();
    const Matrix r_inv = r.inverse();
    Matrix h(2 * n, 2 * n);
    h << a, -b * r_inv * b.transpose(), -q, -a.transpose();
    Eigen::ComplexEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) throw DesignError("controller", "Hamiltonian eigensolver failed");
    ComplexMatrix basis(2 * n, n);
    Eigen::Index count = 0;
    const double tiny = 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
        const double re = es.eigenvalues()(i).real();
        if (std::abs(re) <= tiny) throw DesignError("controller", "Hamiltonian has imaginary-axis eigenvalues");
        if (re < 0.0 && count < n) basis.col(count++) = es.eigenvectors().col(i);
    }
    if (count != n) throw DesignError("controller", "no stabilizing Riccati solution");
    const ComplexMatrix u1 = basis.topRows(n);
    Eigen::FullPivLU<ComplexMatrix> lu(u1);
    if (lu.rank() < n || lu.rcond() < 1e-12)
        throw DesignError("controller", "(A, B) is not stabilizable: stable subspace is not a graph");
    Matrix x = symmetrize((basis.bottomRows(n) * lu.inverse()).real());

    for (int it = 0; it < 4; ++it) {
        const Matrix k = r_inv * b.transpose() * x;
        const Matrix ak = a - b * k;
        if (!is_hurwitz(ak)) break;
        const Matrix next = solve_lyapunov_equation(ak, q + k.transpose() * r * k);
        const double change = (next - x).norm() / std::max(1.0, x.norm());
        x = next;
        if (change < 1e-14) break;
    }
    return x;
}

struct ClosedLoopRealization {
    RowVector K;
    Matrix Am;
    double M = 1.0;
    double beta = 0.0;
    double tstar_bound = 0.0;  // ||T*|| <= M / beta
    GainStrategy strategy = GainStrategy::zero;
};

struct DesignOptions {
    bool fit_envelope = true;
    int envelope_samples = 400;
};

/// Stabilizing gain for (A, B): K = 0, or LQR with Z-identity state weight
/// and unit input weight.
inline ClosedLoopRealization design_K(const Matrix& a, const Vector& b, const Vector& mass, GainStrategy strategy,
                                      const DesignOptions& opts = {}) {
    ClosedLoopRealization real;
    real.strategy = strategy;
    if (strategy == GainStrategy::zero) {
        real.K = RowVector::Zero(a.rows());
    } else {
        const Matrix x = solve_care(a, b, mass.asDiagonal(), Matrix::Identity(1, 1));
        real.K = (b.transpose() * x);
    }
    real.Am = a - b * real.K;
    const double abscissa = spectral_abscissa(real.Am);
    if (!(abscissa < 0.0)) {
        std::ostringstream os;
        os << "design failure: A - B K is not Hurwitz (spectral abscissa " << abscissa << ")";
        throw DesignError("controller", os.str());
    }
    if (opts.fit_envelope) {
        const SemigroupEnvelope env = fit_envelope(real.Am, mass, opts.envelope_samples);
        real.M = env.M;
        real.beta = env.beta;
    } else {
        real.M = 1.0;
        real.beta = 0.95 * std::abs(abscissa);
    }
    real.tstar_bound = real.M / real.beta;
    return real;
}

inline ClosedLoopRealization design_K(const PlantModel& plant, GainStrategy strategy, const DesignOptions& opts = {}) {
    return design_K(plant.A, plant.B, plant.space.weights(), strategy, opts);
}

// ---------------------------------------------------------------------------

/// Strictly proper low-pass H(s) = H_C (sI - H_A)^{-1} H_B in controllable
/// companion form, scaled so that C(-A_m)^{-1}B H(0) = -1.
struct FilterRealization {
    Matrix HA;
    Vector HB;
    RowVector HC;
    Vector p0;
    double plant_dc_gain = 0.0;  // C (-A_m)^{-1} B
    double dc_residual = 0.0;

    int order() const { return static_cast<int>(HA.rows()); }
};

inline double plant_dc_gain(const Matrix& am, const Vector& b, const RowVector& c) {
    const Vector x = (-am).partialPivLu().solve(b);
    return c.dot(x);
}

/// |C(-A_m)^{-1}B H_C(-H_A)^{-1}H_B + 1| from two independent linear solves.
inline double dc_gain_residual(const Matrix& am, const Vector& b, const RowVector& c, const FilterRealization& f) {
    const double g = plant_dc_gain(am, b, c);
    const Vector y = (-f.HA).partialPivLu().solve(f.HB);
    return std::abs(g * f.HC.dot(y) + 1.0);
}

/// `input_gain` <= 0 selects the gain that gives the nominal e_1 row unit DC
/// gain, so the first-order filter is omega / (s + omega) times H_C.
inline FilterRealization build_filter(const std::vector<double>& poles, double input_gain, const Matrix& am,
                                      const Vector& b, const RowVector& c) {
    if (poles.empty()) throw ConfigError("controller", "filter needs at least one pole");
    for (double p : poles)
        if (!(p < 0.0) || !std::isfinite(p))
            throw ConfigError("controller", "filter poles must lie in the open left half plane");
    const int np = static_cast<int>(poles.size());

    // Monic characteristic polynomial, coeffs[k] multiplies s^k.
    std::vector<double> coeffs{1.0};
    for (double p : poles) {
        std::vector<double> next(coeffs.size() + 1, 0.0);
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            next[k + 1] += coeffs[k];
            next[k] -= p * coeffs[k];
        }
        coeffs = std::move(next);
    }
    const double a0 = coeffs[0];

    FilterRealization f;
    f.HA = Matrix::Zero(np, np);
    for (int i = 0; i + 1 < np; ++i) f.HA(i, i + 1) = 1.0;
    for (int k = 0; k < np; ++k) f.HA(np - 1, k) = -coeffs[k];
    const double gain = input_gain > 0.0 ? input_gain : a0;
    f.HB = Vector::Zero(np);
    f.HB(np - 1) = gain;
    f.p0 = Vector::Zero(np);

    f.plant_dc_gain = plant_dc_gain(am, b, c);
    const double scale = c.norm() * b.norm() / std::max(std::abs(spectral_abscissa(am)), 1e-300);
    if (!(std::abs(f.plant_dc_gain) > 1e-12 * scale) || !std::isfinite(f.plant_dc_gain))
        throw DesignError("controller", "filter infeasible: plant DC gain C(-A_m)^{-1}B is zero");
    f.HC = RowVector::Zero(np);
    f.HC(0) = -a0 / (f.plant_dc_gain * gain);
    f.dc_residual = dc_gain_residual(am, b, c, f);
    return f;
}

inline FilterRealization build_filter(const std::vector<double>& poles, double input_gain,
                                      const ClosedLoopRealization& real, const PlantModel& plant) {
    return build_filter(poles, input_gain, real.Am, plant.B, plant.C);
}

/// u = -K w - H_C p
inline double control_input(const ClosedLoopRealization& real, const FilterRealization& filter, const Vector& w,
                            const Vector& p) {
    if (w.size() != real.K.size() || p.size() != filter.HC.size())
        throw ConfigError("controller", "control input dimension mismatch");
    if (!w.allFinite() || !p.allFinite()) throw SimulationError("controller", "non-finite state in control law");
    return -real.K.dot(w) - filter.HC.dot(p);
}

/// sigma = r - y_hat_p
inline double sigma_signal(double r, double y_hat_p) { return r - y_hat_p; }

}  // namespace dac
