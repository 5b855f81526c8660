#pragma once

#include "dac/error.hpp"
#include "dac/linalg.hpp"
#include "dac/spatial_model.hpp"

#include <cmath>

namespace dac {

/// Parameters of the projection operator and the adaptive law.
/// kappa is the parameter bound nu_alpha.
struct ProjectionConfig {
    double kappa = 1.0;
    double epsilon = 0.1;
    double gamma = 100.0;

    void validate() const {
        if (!(kappa > 0.0)) throw ConfigError("adaptation", "kappa must be positive");
        if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("adaptation", "epsilon must lie in (0, 1]");
        if (!(gamma >= 0.0)) throw ConfigError("adaptation", "gamma must be non-negative");
    }

    /// Radius of the invariant set Omega_1 = {pi <= 1} for one component.
    double outer_bound() const { return kappa * std::sqrt(1.0 + epsilon); }
};

/// pi(alpha) = (<alpha, alpha> - kappa^2) / (epsilon kappa^2)
inline double pi_potential(const Vector& alpha, const ProjectionConfig& cfg) {
    const double k2 = cfg.kappa * cfg.kappa;
    return (alpha.squaredNorm() - k2) / (cfg.epsilon * k2);
}

inline double pi_potential(double alpha, const ProjectionConfig& cfg) {
    const double k2 = cfg.kappa * cfg.kappa;
    return (alpha * alpha - k2) / (cfg.epsilon * k2);
}

/// Proj(alpha1, alpha2): alpha2 unless alpha1 is in the boundary band and
/// alpha2 points outward, in which case the outward normal component is
/// scaled down by pi(alpha1).
inline Vector proj(const Vector& alpha1, const Vector& alpha2, const ProjectionConfig& cfg) {
    if (alpha1.size() != alpha2.size()) throw ConfigError("adaptation", "Proj argument dimension mismatch");
    const double pi = pi_potential(alpha1, cfg);
    const Vector grad = (2.0 / (cfg.epsilon * cfg.kappa * cfg.kappa)) * alpha1;
    const double outward = grad.dot(alpha2);
    if (pi <= 0.0 || outward <= 0.0) return alpha2;
    const Vector unit = grad / grad.norm();
    return alpha2 - unit * unit.dot(alpha2) * pi;
}

/// Scalar (k = 1) specialization used by the componentwise adaptive law.
inline double proj(double alpha1, double alpha2, const ProjectionConfig& cfg) {
    const double pi = pi_potential(alpha1, cfg);
    if (pi <= 0.0 || alpha1 * alpha2 <= 0.0) return alpha2;
    return alpha2 * (1.0 - pi);
}

/// Adaptation drives -<P w_tilde, f e_i>_Z given the Gram product P w_tilde.
/// With Gram-form P, <P_op w, f e_i>_Z is the dot of (P w) over channel i
/// with the nodal field f.
inline Vector adaptation_drive(const Vector& p_gram_w_tilde, const Vector& f_field, int channels) {
    const Eigen::Index nodes = f_field.size();
    if (p_gram_w_tilde.size() != nodes * channels)
        throw ConfigError("adaptation", "adaptive law dimension mismatch");
    Vector drive(channels);
    for (int i = 0; i < channels; ++i) drive(i) = -p_gram_w_tilde.segment(i * nodes, nodes).dot(f_field);
    return drive;
}

/// d alpha_hat_i / dt = gamma Proj(alpha_hat_i, -<P w_tilde, f e_i>_Z)
///
/// `p_operator` is P acting on Z (not Gram form); the inner product is the
/// quadrature inner product of `space`.
inline Vector adaptive_rhs(const Vector& alpha_hat, const Matrix& p_operator, const Vector& w_tilde,
                           const Vector& f_field, const ProjectionConfig& cfg, const ZSpace& space) {
    const int n = static_cast<int>(alpha_hat.size());
    if (space.channels() != n || w_tilde.size() != space.dim() || p_operator.rows() != space.dim() ||
        f_field.size() != space.nodes())
        throw ConfigError("adaptation", "adaptive law dimension mismatch");
    const Vector pw = p_operator * w_tilde;
    Vector out(n);
    for (int i = 0; i < n; ++i) {
        Vector fe = Vector::Zero(space.dim());
        fe.segment(i * space.nodes(), space.nodes()) = f_field;
        const double drive = -space.inner(pw, fe);
        out(i) = cfg.gamma * proj(alpha_hat(i), drive, cfg);
    }
    return out;
}

/// Same law from a precomputed Gram product; the simulation hot path.
inline Vector adaptive_rhs_gram(const Vector& alpha_hat, const Vector& p_gram_w_tilde, const Vector& f_field,
                                const ProjectionConfig& cfg) {
    const int n = static_cast<int>(alpha_hat.size());
    const Vector drive = adaptation_drive(p_gram_w_tilde, f_field, n);
    Vector out(n);
    for (int i = 0; i < n; ++i) out(i) = cfg.gamma * proj(alpha_hat(i), drive(i), cfg);
    return out;
}

}  // namespace dac
