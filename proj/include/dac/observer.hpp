#pragma once

#include "dac/controller.hpp"
#include "dac/error.hpp"
#include "dac/linalg.hpp"
#include "dac/spatial_model.hpp"

#include <optional>

namespace dac {

/// Particular and homogeneous observer halves.
struct ObserverState {
    Vector w_hat_p;
    Vector w_hat_h;

    /// w_hat_h(0) = w(0), w_hat_p(0) = 0.
    static ObserverState initial(const Vector& w0) { return {Vector::Zero(w0.size()), w0}; }
};

struct ObserverDerivative {
    Vector d_w_hat_p;
    Vector d_w_hat_h;
};

/// dw_hat_p/dt = A_m w_hat_p + alpha_hat f(w)
/// dw_hat_h/dt = A_m w_hat_h - B H_C p
inline ObserverDerivative observer_rhs(const ObserverState& obs, const Vector& alpha_hat, const Vector& f_field,
                                       const Vector& p, const ClosedLoopRealization& real,
                                       const FilterRealization& filter, const Vector& b) {
    const Eigen::Index m = real.Am.rows();
    if (obs.w_hat_p.size() != m || obs.w_hat_h.size() != m || b.size() != m ||
        alpha_hat.size() * f_field.size() != m || p.size() != filter.HC.size())
        throw ConfigError("observer", "observer dimension mismatch");
    ObserverDerivative d;
    d.d_w_hat_p = real.Am * obs.w_hat_p + channel_forcing(alpha_hat, f_field);
    d.d_w_hat_h = real.Am * obs.w_hat_h - b * filter.HC.dot(p);
    return d;
}

struct ObservationError {
    Vector w_tilde;  // w_hat_p + w_hat_h - w
    double y_tilde = 0.0;
    // Per-half errors, available when the truth halves are co-simulated.
    std::optional<Vector> w_tilde_p;
    std::optional<Vector> w_tilde_h;
};

inline ObservationError observation_error(const ObserverState& obs, const Vector& w, const RowVector& c) {
    if (w.size() != obs.w_hat_p.size() || c.size() != w.size())
        throw ConfigError("observer", "observation error dimension mismatch");
    ObservationError e;
    e.w_tilde = obs.w_hat_p + obs.w_hat_h - w;
    e.y_tilde = c.dot(e.w_tilde);
    return e;
}

/// Variant with co-simulated truth halves w_p, w_h (w = w_p + w_h).
inline ObservationError observation_error(const ObserverState& obs, const Vector& w, const RowVector& c,
                                          const Vector& w_p, const Vector& w_h) {
    ObservationError e = observation_error(obs, w, c);
    e.w_tilde_p = obs.w_hat_p - w_p;
    e.w_tilde_h = obs.w_hat_h - w_h;
    return e;
}

}  // namespace dac
