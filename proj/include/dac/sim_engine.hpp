#pragma once

#include "dac/adaptation.hpp"
#include "dac/controller.hpp"
#include "dac/error.hpp"
#include "dac/linalg.hpp"
#include "dac/lyapunov.hpp"
#include "dac/observer.hpp"
#include "dac/rk4.hpp"
#include "dac/spatial_model.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dac {

enum class ReferenceKind { constant, step, sinusoid };

inline std::optional<ReferenceKind> parse_reference_kind(const std::string& s) {
    if (s == "constant") return ReferenceKind::constant;
    if (s == "step") return ReferenceKind::step;
    if (s == "sinusoid") return ReferenceKind::sinusoid;
    return std::nullopt;
}

inline std::string to_string(ReferenceKind k) {
    switch (k) {
        case ReferenceKind::constant: return "constant";
        case ReferenceKind::step: return "step";
        case ReferenceKind::sinusoid: return "sinusoid";
    }
    return "?";
}

struct ReferenceSignal {
    ReferenceKind kind = ReferenceKind::constant;
    double amplitude = 0.0;
    double time = 0.0;       // step onset
    double frequency = 1.0;  // rad/s
    double offset = 0.0;

    double at(double t) const {
        switch (kind) {
            case ReferenceKind::constant: return amplitude;
            case ReferenceKind::step: return t >= time ? amplitude : 0.0;
            case ReferenceKind::sinusoid: return offset + amplitude * std::sin(frequency * t);
        }
        return 0.0;
    }

    /// ||r||_{L_inf}
    double sup() const {
        return kind == ReferenceKind::sinusoid ? std::abs(offset) + std::abs(amplitude) : std::abs(amplitude);
    }
};

/// Everything the closed loop needs, assembled once and shared read-only.
struct ClosedLoopSystem {
    PlantModel plant;
    ClosedLoopRealization real;
    FilterRealization filter;
    LyapunovCertificate cert;
    ProjectionConfig proj;
    Vector alpha_hat0;

    int channels() const { return plant.channels(); }

    /// Upper bound on lambda_p * |alpha_tilde|^2 from the projection bound:
    /// rho_1 = lambda_p n (nu_alpha (2 + eps))^2.
    double rho1() const {
        const double a = proj.kappa * (2.0 + proj.epsilon);
        return cert.lambda_p * channels() * a * a;
    }
};

struct SimOptions {
    double dt = 1e-3;
    double horizon = 10.0;
    int record_every = 1;
    double rho_w = 10.0;
    double blowup_factor = 10.0;
    bool diagnostic = false;    // co-simulate truth halves w_p, w_h
    bool store_states = false;  // keep the full augmented state at every sample
    ReferenceSignal reference{};

    int steps() const { return static_cast<int>(std::llround(horizon / dt)); }
};

/// Offsets of [w, w_hat_p, w_hat_h, p, alpha_hat (, w_p, w_h)] in the
/// packed augmented vector.
struct StateLayout {
    int m = 0;   // plant state dimension n * N
    int np = 0;  // filter order
    int n = 0;   // parameter count
    bool diagnostic = false;

    int w() const { return 0; }
    int w_hat_p() const { return m; }
    int w_hat_h() const { return 2 * m; }
    int p() const { return 3 * m; }
    int alpha_hat() const { return 3 * m + np; }
    int w_p() const { return 3 * m + np + n; }
    int w_h() const { return 4 * m + np + n; }
    int size() const { return 3 * m + np + n + (diagnostic ? 2 * m : 0); }

    static StateLayout of(const ClosedLoopSystem& sys, bool diagnostic) {
        return {sys.plant.state_dim(), sys.filter.order(), sys.channels(), diagnostic};
    }
};

/// Packed augmented state with named views.
class AugmentedState {
public:
    AugmentedState(StateLayout layout, Vector x, double t = 0.0) : layout_(layout), x_(std::move(x)), t_(t) {
        if (x_.size() != layout_.size()) throw ConfigError("sim_engine", "augmented state size mismatch");
    }

    static AugmentedState initial(const ClosedLoopSystem& sys, bool diagnostic = false) {
        const StateLayout l = StateLayout::of(sys, diagnostic);
        Vector x = Vector::Zero(l.size());
        x.segment(l.w(), l.m) = sys.plant.w0;
        x.segment(l.w_hat_h(), l.m) = sys.plant.w0;
        x.segment(l.p(), l.np) = sys.filter.p0;
        x.segment(l.alpha_hat(), l.n) = sys.alpha_hat0;
        if (diagnostic) x.segment(l.w_h(), l.m) = sys.plant.w0;
        return AugmentedState(l, std::move(x));
    }

    const StateLayout& layout() const { return layout_; }
    const Vector& packed() const { return x_; }
    double t() const { return t_; }

    Vector w() const { return x_.segment(layout_.w(), layout_.m); }
    Vector w_hat_p() const { return x_.segment(layout_.w_hat_p(), layout_.m); }
    Vector w_hat_h() const { return x_.segment(layout_.w_hat_h(), layout_.m); }
    Vector p() const { return x_.segment(layout_.p(), layout_.np); }
    Vector alpha_hat() const { return x_.segment(layout_.alpha_hat(), layout_.n); }
    Vector w_p() const { return x_.segment(layout_.w_p(), layout_.m); }
    Vector w_h() const { return x_.segment(layout_.w_h(), layout_.m); }

private:
    StateLayout layout_;
    Vector x_;
    double t_ = 0.0;
};

/// Right-hand side of the augmented closed loop:
///   w'       = A_m w - B H_C p + alpha f(w)
///   p'       = H_A p + H_B (r - C w_hat_p)
///   w_hat_p' = A_m w_hat_p + alpha_hat f(w)
///   w_hat_h' = A_m w_hat_h - B H_C p
///   alpha_hat_i' = gamma Proj(alpha_hat_i, -<P w_tilde, f e_i>_Z)
/// plus, in diagnostic mode, the truth halves w_p' = A_m w_p + alpha f(w) and
/// w_h' = A_m w_h - B H_C p.
inline Vector rhs_augmented(const Vector& x, double r, const ClosedLoopSystem& sys, const StateLayout& l) {
    const auto w = x.segment(l.w(), l.m);
    const auto w_hat_p = x.segment(l.w_hat_p(), l.m);
    const auto w_hat_h = x.segment(l.w_hat_h(), l.m);
    const auto p = x.segment(l.p(), l.np);
    const Vector alpha_hat = x.segment(l.alpha_hat(), l.n);

    const Vector field = eval_nonlinearity(sys.plant.f, w, l.n);
    const Vector forcing_true = channel_forcing(sys.plant.alpha_true, field);
    const double hc_p = sys.filter.HC.dot(p);
    const Vector control_path = sys.plant.B * hc_p;

    Vector dx(l.size());
    dx.segment(l.w(), l.m).noalias() = sys.real.Am * w;
    dx.segment(l.w(), l.m) += forcing_true - control_path;
    dx.segment(l.w_hat_p(), l.m).noalias() = sys.real.Am * w_hat_p;
    dx.segment(l.w_hat_p(), l.m) += channel_forcing(alpha_hat, field);
    dx.segment(l.w_hat_h(), l.m).noalias() = sys.real.Am * w_hat_h;
    dx.segment(l.w_hat_h(), l.m) -= control_path;

    const double sigma = sigma_signal(r, sys.plant.C.dot(w_hat_p));
    dx.segment(l.p(), l.np).noalias() = sys.filter.HA * p;
    dx.segment(l.p(), l.np) += sys.filter.HB * sigma;

    const Vector w_tilde = w_hat_p + w_hat_h - w;
    const Vector pw = sys.cert.P * w_tilde;
    dx.segment(l.alpha_hat(), l.n) = adaptive_rhs_gram(alpha_hat, pw, field, sys.proj);

    if (l.diagnostic) {
        dx.segment(l.w_p(), l.m).noalias() = sys.real.Am * x.segment(l.w_p(), l.m);
        dx.segment(l.w_p(), l.m) += forcing_true;
        dx.segment(l.w_h(), l.m).noalias() = sys.real.Am * x.segment(l.w_h(), l.m);
        dx.segment(l.w_h(), l.m) -= control_path;
    }
    if (!dx.allFinite()) throw SimulationError("sim_engine", "non-finite derivative");
    return dx;
}

inline Vector rhs_augmented(const AugmentedState& s, double r, const ClosedLoopSystem& sys) {
    return rhs_augmented(s.packed(), r, sys, s.layout());
}

/// Recorded closed-loop signals.
struct SimulationTrace {
    std::vector<double> t, r, u, y, sigma, y_hat_p, y_hat_h, y_tilde;
    std::vector<double> norm_w, norm_w_tilde, norm_p12_w_tilde, V;
    std::vector<Vector> alpha_hat;
    // Diagnostic mode only.
    std::vector<double> y_tilde_p, y_tilde_h, norm_w_tilde_p;
    // store_states only: packed augmented state per sample.
    std::vector<Vector> states;
    StateLayout layout;

    double dt = 0.0;
    double sample_dt = 0.0;
    double gamma = 0.0;
    double lambda_p = 0.0;
    double rho1 = 0.0;
    double V0 = 0.0;
    bool has_V = false;
    bool diagnostic = false;
    int channels = 1;

    std::size_t size() const { return t.size(); }
    double horizon() const { return t.empty() ? 0.0 : t.back(); }
};

namespace detail {

inline void check_run(const ClosedLoopSystem& sys, const SimOptions& opts) {
    if (!(opts.horizon > 0.0)) throw ConfigError("sim_engine", "horizon must be positive");
    if (opts.record_every < 1) throw ConfigError("sim_engine", "record_every must be at least 1");
    if (!(opts.rho_w > 0.0)) throw ConfigError("sim_engine", "rho_w must be positive");
    double radius = spectral_radius(sys.real.Am);
    if (sys.filter.order() > 0) radius = std::max(radius, spectral_radius(sys.filter.HA));
    check_step(opts.dt, radius);
    if (sys.alpha_hat0.size() != sys.channels())
        throw ConfigError("sim_engine", "alpha_hat0 must have one entry per channel");
    if (sys.cert.P.rows() != sys.plant.state_dim())
        throw ConfigError("sim_engine", "certificate does not match the plant dimension");
    sys.proj.validate();
}

inline void record(SimulationTrace& tr, const ClosedLoopSystem& sys, const Vector& x, double t, double r,
                   const SimOptions& opts) {
    const StateLayout& l = tr.layout;
    const Vector w = x.segment(l.w(), l.m);
    const Vector whp = x.segment(l.w_hat_p(), l.m);
    const Vector whh = x.segment(l.w_hat_h(), l.m);
    const Vector p = x.segment(l.p(), l.np);
    const Vector ah = x.segment(l.alpha_hat(), l.n);
    const ObservationError err = observation_error({whp, whh}, w, sys.plant.C);
    const double yhp = sys.plant.C.dot(whp);

    tr.t.push_back(t);
    tr.r.push_back(r);
    tr.u.push_back(control_input(sys.real, sys.filter, w, p));
    tr.y.push_back(sys.plant.C.dot(w));
    tr.sigma.push_back(sigma_signal(r, yhp));
    tr.y_hat_p.push_back(yhp);
    tr.y_hat_h.push_back(sys.plant.C.dot(whh));
    tr.y_tilde.push_back(err.y_tilde);
    tr.norm_w.push_back(sys.plant.space.norm(w));
    tr.norm_w_tilde.push_back(sys.plant.space.norm(err.w_tilde));
    const double energy = std::max(0.0, sys.cert.energy(err.w_tilde));
    tr.norm_p12_w_tilde.push_back(std::sqrt(energy));
    if (tr.has_V) {
        const Vector at = ah - sys.plant.alpha_true;
        tr.V.push_back(energy + at.squaredNorm() / sys.proj.gamma);
    }
    tr.alpha_hat.push_back(ah);
    if (l.diagnostic) {
        const Vector wtp = whp - x.segment(l.w_p(), l.m);
        const Vector wth = whh - x.segment(l.w_h(), l.m);
        tr.y_tilde_p.push_back(sys.plant.C.dot(wtp));
        tr.y_tilde_h.push_back(sys.plant.C.dot(wth));
        tr.norm_w_tilde_p.push_back(sys.plant.space.norm(wtp));
    }
    if (opts.store_states) tr.states.push_back(x);
}

}  // namespace detail

/// Integrates the augmented closed loop with fixed-step RK4.
inline SimulationTrace run(const ClosedLoopSystem& sys, const SimOptions& opts) {
    detail::check_run(sys, opts);
    AugmentedState s0 = AugmentedState::initial(sys, opts.diagnostic);
    const StateLayout l = s0.layout();

    SimulationTrace tr;
    tr.layout = l;
    tr.dt = opts.dt;
    tr.sample_dt = opts.dt * opts.record_every;
    tr.gamma = sys.proj.gamma;
    tr.lambda_p = sys.cert.lambda_p;
    tr.rho1 = sys.rho1();
    tr.has_V = sys.proj.gamma > 0.0;
    tr.diagnostic = opts.diagnostic;
    tr.channels = sys.channels();
    if (tr.has_V) tr.V0 = (sys.alpha_hat0 - sys.plant.alpha_true).squaredNorm() / sys.proj.gamma;

    const int steps = opts.steps();
    const double guard = opts.blowup_factor * opts.rho_w;
    auto rhs = [&](double t, const Vector& x) { return rhs_augmented(x, opts.reference.at(t), sys, l); };

    Vector x = s0.packed();
    detail::record(tr, sys, x, 0.0, opts.reference.at(0.0), opts);
    for (int k = 1; k <= steps; ++k) {
        const double t0 = (k - 1) * opts.dt;
        x = step_rk4(t0, x, opts.dt, rhs);
        const double t = k * opts.dt;
        if (!x.allFinite()) {
            std::ostringstream os;
            os << "non-finite state at t=" << t;
            throw SimulationError("sim_engine", os.str());
        }
        const double nw = sys.plant.space.norm(x.segment(l.w(), l.m));
        if (nw > guard) {
            std::ostringstream os;
            os << "blow-up guard tripped at t=" << t << ": ||w||_Z=" << nw << " exceeds " << opts.blowup_factor
               << "*rho_w=" << guard;
            throw SimulationError("sim_engine", os.str());
        }
        if (k % opts.record_every == 0 || k == steps) detail::record(tr, sys, x, t, opts.reference.at(t), opts);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Auxiliary reference system

struct ReferenceTrace {
    std::vector<double> t, y_ref, y_ref_p, u_ref_r;
    std::vector<double> norm_e_w, norm_e_p;
    // Packed [w_ref, w_ref_p, w_ref_h, p_ref] per sample when states are stored.
    std::vector<Vector> states;
    int m = 0;
    int np = 0;

    std::size_t size() const { return t.size(); }
};

/// w_ref' = A_m w_ref - B H_C p_ref + alpha f(w_ref),  w_ref(0) = w(0)
/// w_ref_p' = A_m w_ref_p + alpha f(w_ref),  w_ref_h' = A_m w_ref_h - B H_C p_ref
/// p_ref' = H_A p_ref + H_B (r - C w_ref_p)
inline Vector rhs_reference(const Vector& x, double r, const ClosedLoopSystem& sys) {
    const int m = sys.plant.state_dim();
    const int np = sys.filter.order();
    const auto w = x.segment(0, m);
    const auto wp = x.segment(m, m);
    const auto wh = x.segment(2 * m, m);
    const auto p = x.segment(3 * m, np);
    const Vector forcing = channel_forcing(sys.plant.alpha_true, eval_nonlinearity(sys.plant.f, w, sys.channels()));
    const Vector control_path = sys.plant.B * sys.filter.HC.dot(p);
    Vector dx(x.size());
    dx.segment(0, m) = sys.real.Am * w + forcing - control_path;
    dx.segment(m, m) = sys.real.Am * wp + forcing;
    dx.segment(2 * m, m) = sys.real.Am * wh - control_path;
    dx.segment(3 * m, np) = sys.filter.HA * p + sys.filter.HB * (r - sys.plant.C.dot(wp));
    if (!dx.allFinite()) throw SimulationError("sim_engine", "non-finite reference derivative");
    return dx;
}

/// Integrates the reference system on the main run's time grid and forms
/// e_w = w - w_ref, e_p = p - p_ref by pointwise subtraction. The main trace
/// must have been recorded with store_states and the same options.
inline ReferenceTrace run_reference(const ClosedLoopSystem& sys, const SimOptions& opts, const SimulationTrace& main) {
    detail::check_run(sys, opts);
    if (main.states.size() != main.size() || main.dt != opts.dt || main.sample_dt != opts.dt * opts.record_every)
        throw ConfigError("sim_engine", "reference run needs a main trace with stored states on the same grid");
    const int m = sys.plant.state_dim();
    const int np = sys.filter.order();
    Vector x = Vector::Zero(3 * m + np);
    x.segment(0, m) = sys.plant.w0;
    x.segment(2 * m, m) = sys.plant.w0;
    x.segment(3 * m, np) = sys.filter.p0;

    ReferenceTrace ref;
    ref.m = m;
    ref.np = np;
    const StateLayout& l = main.layout;
    std::size_t sample = 0;
    auto rec = [&](const Vector& xr, double t) {
        if (sample >= main.size() || std::abs(main.t[sample] - t) > 1e-9 * std::max(1.0, t))
            throw ConfigError("sim_engine", "reference grid does not match the main trace");
        const Vector& xm = main.states[sample];
        const Vector e_w = xm.segment(l.w(), m) - xr.segment(0, m);
        const Vector e_p = xm.segment(l.p(), np) - xr.segment(3 * m, np);
        ref.t.push_back(t);
        ref.y_ref.push_back(sys.plant.C.dot(xr.segment(0, m)));
        ref.y_ref_p.push_back(sys.plant.C.dot(xr.segment(m, m)));
        ref.u_ref_r.push_back(-sys.filter.HC.dot(xr.segment(3 * m, np)));
        ref.norm_e_w.push_back(sys.plant.space.norm(e_w));
        ref.norm_e_p.push_back(e_p.norm());
        if (opts.store_states) ref.states.push_back(xr);
        ++sample;
    };
    auto rhs = [&](double t, const Vector& xr) { return rhs_reference(xr, opts.reference.at(t), sys); };

    const int steps = opts.steps();
    rec(x, 0.0);
    for (int k = 1; k <= steps; ++k) {
        x = step_rk4((k - 1) * opts.dt, x, opts.dt, rhs);
        if (!x.allFinite()) throw SimulationError("sim_engine", "non-finite reference state");
        const double t = k * opts.dt;
        if (k % opts.record_every == 0 || k == steps) rec(x, t);
    }
    return ref;
}

// ---------------------------------------------------------------------------

struct TraceNorms {
    double w_W_tau = 0.0;          // ess sup ||w(t)||_Z on [0, tau]
    double y_tilde_Linf_tau = 0.0;
    double y_tilde_L2_tau = 0.0;   // (int_0^tau |y_tilde|^2)^{1/2}
    double V_sup = 0.0;
};

/// Truncated norms by discrete max and trapezoid in time. tau = +inf means
/// the full horizon.
inline TraceNorms trace_norms(const SimulationTrace& tr, double tau) {
    if (tr.size() == 0) throw ConfigError("sim_engine", "empty trace");
    if (std::isinf(tau) && tau > 0.0) tau = tr.t.back();
    if (!(tau >= 0.0) || tau > tr.t.back() * (1.0 + 1e-12))
        throw ConfigError("sim_engine", "tau outside the trace horizon");
    TraceNorms n;
    double l2 = 0.0;
    for (std::size_t k = 0; k < tr.size() && tr.t[k] <= tau * (1.0 + 1e-12); ++k) {
        n.w_W_tau = std::max(n.w_W_tau, tr.norm_w[k]);
        n.y_tilde_Linf_tau = std::max(n.y_tilde_Linf_tau, std::abs(tr.y_tilde[k]));
        if (tr.has_V) n.V_sup = std::max(n.V_sup, tr.V[k]);
        if (k > 0) {
            const double h = tr.t[k] - tr.t[k - 1];
            l2 += 0.5 * h * (tr.y_tilde[k] * tr.y_tilde[k] + tr.y_tilde[k - 1] * tr.y_tilde[k - 1]);
        }
    }
    n.y_tilde_L2_tau = std::sqrt(l2);
    return n;
}

}  // namespace dac
