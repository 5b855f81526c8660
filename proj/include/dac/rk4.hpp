#pragma once

#include "dac/error.hpp"
#include "dac/linalg.hpp"

#include <concepts>
#include <sstream>

namespace dac {

template <typename F>
concept VectorField = requires(F f, double t, const Vector& x) {
    { f(t, x) } -> std::convertible_to<Vector>;
};

/// One classical fourth-order Runge-Kutta step.
template <VectorField F>
Vector step_rk4(double t, const Vector& x, double dt, F&& rhs) {
    const Vector k1 = rhs(t, x);
    const Vector k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1);
    const Vector k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2);
    const Vector k4 = rhs(t + dt, x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 covers the real axis up to |z| = 2.785; keep 20% headroom.
inline double rk4_step_limit(double spectral_radius) {
    return spectral_radius > 0.0 ? 0.8 * 2.78 / spectral_radius : std::numeric_limits<double>::infinity();
}

inline void check_step(double dt, double spectral_radius) {
    if (!(dt > 0.0)) throw ConfigError("sim_engine", "time step must be positive");
    const double limit = rk4_step_limit(spectral_radius);
    if (dt > limit) {
        std::ostringstream os;
        os << "time step " << dt << " exceeds the RK4 stability limit " << limit;
        throw ConfigError("sim_engine", os.str());
    }
}

}  // namespace dac
