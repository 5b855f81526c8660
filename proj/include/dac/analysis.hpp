#pragma once

#include "dac/coercivity.hpp"
#include "dac/controller.hpp"
#include "dac/error.hpp"
#include "dac/linalg.hpp"
#include "dac/lyapunov.hpp"
#include "dac/sim_engine.hpp"
#include "dac/spatial_model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace dac {

// ---------------------------------------------------------------------------
// Lipschitz constants

struct LipschitzEstimate {
    double nu1 = 0.0;  // raw sampled slope bound, no inflation
    double nu2 = 0.0;  // |f(0)| sqrt(L)
    double range = 0.0;
    int samples = 0;
};

/// Samples difference quotients of the scalar map over [-range, range] with
/// range = rho max(1, 1/sqrt(min weight)), the pointwise bound implied by the
/// Z-ball of radius rho on the grid.
inline LipschitzEstimate estimate_lipschitz(const Nonlinearity& f, double rho, int samples, double min_weight,
                                            double length) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("analysis", "rho must be positive");
    if (samples < 1000) throw ConfigError("analysis", "Lipschitz estimate needs at least 1000 samples");
    if (!(min_weight > 0.0) || !(length > 0.0)) throw ConfigError("analysis", "degenerate sampling range");
    LipschitzEstimate est;
    est.samples = samples;
    est.range = rho * std::max(1.0, 1.0 / std::sqrt(min_weight));
    est.nu2 = std::abs(f.value(0.0)) * std::sqrt(length);
    const double step = 2.0 * est.range / samples;
    const double probe = 1e-6 * std::max(1.0, est.range);
    double prev = f.value(-est.range);
    for (int k = 0; k <= samples; ++k) {
        const double x = -est.range + k * step;
        const double fx = f.value(x);
        if (k > 0) est.nu1 = std::max(est.nu1, std::abs(fx - prev) / step);
        est.nu1 = std::max(est.nu1, std::abs(f.value(x + probe) - f.value(x - probe)) / (2.0 * probe));
        prev = fx;
    }
    return est;
}

// ---------------------------------------------------------------------------
// Control-path gains

struct ControlGains {
    double l1_norm = 0.0;  // ||H(s)||_{L1}
    double delta0 = 0.0;   // ||y_hat_p|| <= delta0 + delta1 ||w||
    double delta1 = 0.0;
    double delta_0w = 0.0;
    double delta_0r = 0.0;
    double delta_0u = 0.0;
    double initial_transient = 0.0;  // sup |H_C e^{H_A t} p0|
    double horizon = 0.0;
    double tail_change = 0.0;  // |L1(2T) - L1(T)|
};

namespace detail {

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> gl_nodes{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> gl_weights{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                  0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                  0.2223810344533745, 0.1012285362903763};

/// int_0^T |c e^{A t} b| dt by composite Gauss-Legendre; also returns
/// sup_t |c e^{A t} x0| on the panel nodes when x0 is given.
inline double impulse_l1(const Matrix& a, const Vector& b, const RowVector& c, double horizon, int panels,
                         const Vector* x0 = nullptr, double* sup_free = nullptr) {
    const double h = horizon / panels;
    const Matrix step = (a * h).exp();
    std::array<Matrix, 8> node_exp;
    for (int j = 0; j < 8; ++j) node_exp[j] = (a * (0.5 * h * (gl_nodes[j] + 1.0))).exp();
    RowVector v = c;
    double total = 0.0;
    double sup = x0 ? std::abs(c.dot(*x0)) : 0.0;
    for (int k = 0; k < panels; ++k) {
        double panel = 0.0;
        for (int j = 0; j < 8; ++j) {
            const RowVector vj = v * node_exp[j];
            panel += gl_weights[j] * std::abs(vj.dot(b));
            if (x0) sup = std::max(sup, std::abs(vj.dot(*x0)));
        }
        total += 0.5 * h * panel;
        v = v * step;
        if (x0) sup = std::max(sup, std::abs(v.dot(*x0)));
    }
    if (sup_free) *sup_free = sup;
    return total;
}

}  // namespace detail

/// ||H(s)||_{L1} for H(s) = H_C (sI - H_A)^{-1} H_B as the integral of the
/// absolute impulse response, with a doubling check on the tail.
inline double filter_l1_norm(const FilterRealization& filter, double horizon, int panels = 400,
                             double* tail_change = nullptr) {
    if (filter.order() == 0 || filter.HC.isZero(0.0)) {
        if (tail_change) *tail_change = 0.0;
        return 0.0;
    }
    if (!is_hurwitz(filter.HA)) throw ConfigError("analysis", "filter is not stable");
    const double l1 = detail::impulse_l1(filter.HA, filter.HB, filter.HC, horizon, panels);
    const double l2 = detail::impulse_l1(filter.HA, filter.HB, filter.HC, 2.0 * horizon, 2 * panels);
    const double change = std::abs(l2 - l1);
    if (tail_change) *tail_change = change;
    if (change > 1e-8 * std::max(1.0, l2))
        throw ConfigError("analysis", "horizon too short for the 1e-8 tail bound on the filter L1 norm");
    return l2;
}

/// Default integration horizon: 40 time constants of the slowest filter pole.
inline double default_filter_horizon(const FilterRealization& filter) {
    if (filter.order() == 0) return 1.0;
    return 40.0 / std::abs(spectral_abscissa(filter.HA));
}

/// Control-path gains in ||u_r|| <= d0w ||w|| + d0r ||r|| + d0u.
///
/// The observer output obeys ||y_hat_p|| <= delta0 + delta1 ||w|| with
/// delta1 = ||C|| sqrt(n) nu_alpha (1 + eps) nu1 M / beta (delta0 the same
/// with nu2); u_r is the filter applied to r - y_hat_p plus the free response
/// from p(0).
inline ControlGains estimate_control_gains(const FilterRealization& filter, const ClosedLoopRealization& real,
                                           const PlantModel& plant, const ProjectionConfig& proj, double nu1,
                                           double nu2, double horizon = 0.0) {
    ControlGains g;
    g.horizon = horizon > 0.0 ? horizon : default_filter_horizon(filter);
    if (filter.order() == 0 || filter.HC.isZero(0.0)) return g;
    g.l1_norm = filter_l1_norm(filter, g.horizon, 400, &g.tail_change);
    const double path = plant.c_norm * std::sqrt(static_cast<double>(plant.channels())) * proj.kappa *
                        (1.0 + proj.epsilon) * real.M / real.beta;
    g.delta1 = path * nu1;
    g.delta0 = path * nu2;
    double sup_free = 0.0;
    if (!filter.p0.isZero(0.0))
        detail::impulse_l1(filter.HA, filter.HB, filter.HC, g.horizon, 400, &filter.p0, &sup_free);
    g.initial_transient = sup_free;
    g.delta_0w = g.l1_norm * g.delta1;
    g.delta_0r = g.l1_norm;
    g.delta_0u = g.l1_norm * g.delta0 + sup_free;
    return g;
}

// ---------------------------------------------------------------------------
// Small-gain condition

struct SmallGainOptions {
    double eps_s = 1e-3;
    int lipschitz_samples = 20000;
    double lipschitz_inflation = 1.05;
    double filter_horizon = 0.0;  // 0: default
    std::optional<double> nu1_override;
};

struct SmallGainReport {
    double rho_w = 0.0;
    double eps_s = 0.0;
    double nu1 = 0.0;
    double nu2 = 0.0;
    double nu1_raw = 0.0;
    double delta_0w = 0.0;
    double delta_0r = 0.0;
    double delta_0u = 0.0;
    double M = 0.0;
    double Tstar_bound = 0.0;
    double r_sup = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;  // rho_w - lhs
    bool satisfied = false;
    std::string failure;
};

/// (M rho0 + ||T*|| (nu2 + d0r ||r|| + d0u)) / (1 - ||T*|| (nu1 + ||B|| d0w)) <= rho_w - eps_s
///
/// nu1, nu2 are the Lipschitz constants of w -> alpha f(w) on the Z-ball of
/// radius rho_w: the sampled scalar constants inflated by 5% and scaled by
/// the parameter bound sqrt(n) nu_alpha.
inline SmallGainReport small_gain_check(const PlantModel& plant, const ClosedLoopRealization& real,
                                        const FilterRealization& filter, const ProjectionConfig& proj, double rho_w,
                                        double r_sup, const SmallGainOptions& opts = {}) {
    if (!(rho_w > 0.0)) throw ConfigError("analysis", "rho_w must be positive");
    if (!(opts.eps_s > 0.0)) throw ConfigError("analysis", "eps_s must be positive");
    SmallGainReport rep;
    rep.rho_w = rho_w;
    rep.eps_s = opts.eps_s;
    rep.r_sup = std::abs(r_sup);
    rep.M = real.M;
    rep.Tstar_bound = real.M / real.beta;

    const double min_w = plant.space.weights().minCoeff();
    const LipschitzEstimate lip =
        estimate_lipschitz(plant.f, rho_w, opts.lipschitz_samples, min_w, plant.length());
    const double scale = std::sqrt(static_cast<double>(plant.channels())) * plant.nu_alpha;
    rep.nu1_raw = lip.nu1;
    rep.nu1 = opts.nu1_override ? *opts.nu1_override : opts.lipschitz_inflation * lip.nu1 * scale;
    rep.nu2 = opts.lipschitz_inflation * lip.nu2 * scale;

    const ControlGains g =
        estimate_control_gains(filter, real, plant, proj, rep.nu1, rep.nu2, opts.filter_horizon);
    rep.delta_0w = g.delta_0w;
    rep.delta_0r = g.delta_0r;
    rep.delta_0u = g.delta_0u;

    rep.numerator = real.M * plant.rho0 + rep.Tstar_bound * (rep.nu2 + rep.delta_0r * rep.r_sup + rep.delta_0u);
    rep.denominator = 1.0 - rep.Tstar_bound * (rep.nu1 + plant.b_norm * rep.delta_0w);
    rep.rhs = rho_w - opts.eps_s;
    if (!(rep.denominator > 0.0)) {
        rep.lhs = std::numeric_limits<double>::infinity();
        rep.margin = -std::numeric_limits<double>::infinity();
        rep.failure = "small-gain failed (denominator)";
        return rep;
    }
    rep.lhs = rep.numerator / rep.denominator;
    rep.margin = rho_w - rep.lhs;
    rep.satisfied = rep.lhs <= rep.rhs;
    if (!rep.satisfied) rep.failure = "small-gain failed (bound exceeds rho_w - eps_s)";
    return rep;
}

// ---------------------------------------------------------------------------
// Slope fits

/// Two-sided 97.5% Student-t quantile.
inline double t_quantile_975(int dof) {
    static constexpr std::array<double, 30> table{12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                                  2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                                  2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                                  2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof < 1) return std::numeric_limits<double>::infinity();
    if (dof <= 30) return table[dof - 1];
    return 1.96;
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;     // log(metric) at log(gamma) = 0
    double half_width = 0.0;    // 95% confidence half-width of the slope; inf with two points
};

inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    SlopeFit fit;
    fit.slope = loglog_slope(x, y);
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += std::log(x[k]);
        my += std::log(y[k]);
    }
    mx /= n;
    my /= n;
    fit.intercept = my - fit.slope * mx;
    if (n < 3) {
        fit.half_width = std::numeric_limits<double>::infinity();
        return fit;
    }
    double sse = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double lx = std::log(x[k]);
        const double res = std::log(y[k]) - (fit.intercept + fit.slope * lx);
        sse += res * res;
        sxx += (lx - mx) * (lx - mx);
    }
    const double se = std::sqrt(sse / (n - 2) / sxx);
    fit.half_width = t_quantile_975(static_cast<int>(n) - 2) * se;
    return fit;
}

// ---------------------------------------------------------------------------
// gamma sweeps

struct SweepOptions {
    double transient_window = -1.0;  // < 0: 10 / beta
    int jobs = 1;
    bool with_reference = true;
};

struct SweepRow {
    double gamma = 0.0;
    double sup_w_tilde = 0.0;
    double sup_y_tilde = 0.0;
    double sup_p12_w_tilde = 0.0;
    double sup_e_w = 0.0;
    double sup_w = 0.0;
};

struct BoundStudy {
    std::vector<double> gamma_list;
    std::vector<SweepRow> rows;
    double transient_window = 0.0;
    SlopeFit w_tilde, y_tilde, p12_w_tilde, e_w;
};

/// Evaluates one gamma: main run, optional reference run, post-window sups.
inline SweepRow sweep_point(const ClosedLoopSystem& base, const SimOptions& sim, double gamma, double window,
                            bool with_reference) {
    ClosedLoopSystem sys = base;
    sys.proj.gamma = gamma;
    SimOptions o = sim;
    o.store_states = with_reference;
    const SimulationTrace tr = run(sys, o);
    SweepRow row;
    row.gamma = gamma;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        row.sup_w = std::max(row.sup_w, tr.norm_w[k]);
        if (tr.t[k] < window) continue;
        row.sup_w_tilde = std::max(row.sup_w_tilde, tr.norm_w_tilde[k]);
        row.sup_y_tilde = std::max(row.sup_y_tilde, std::abs(tr.y_tilde[k]));
        row.sup_p12_w_tilde = std::max(row.sup_p12_w_tilde, tr.norm_p12_w_tilde[k]);
    }
    if (with_reference) {
        const ReferenceTrace ref = run_reference(sys, o, tr);
        for (std::size_t k = 0; k < ref.size(); ++k) row.sup_e_w = std::max(row.sup_e_w, ref.norm_e_w[k]);
    }
    return row;
}

/// Runs the sweep (optionally on `jobs` threads) and fits log-log slopes of
/// each metric against gamma. Results are ordered by gamma.
inline BoundStudy gamma_sweep(const ClosedLoopSystem& base, const SimOptions& sim, const std::vector<double>& gammas,
                              const SweepOptions& opts = {}) {
    if (gammas.size() < 2) throw ConfigError("analysis", "gamma sweep needs at least two gammas");
    for (std::size_t k = 0; k < gammas.size(); ++k) {
        if (!(gammas[k] > 0.0)) throw ConfigError("analysis", "gamma values must be positive");
        if (k > 0 && !(gammas[k] > gammas[k - 1]))
            throw ConfigError("analysis", "gamma list must be strictly increasing");
    }
    BoundStudy study;
    study.gamma_list = gammas;
    study.transient_window = opts.transient_window >= 0.0 ? opts.transient_window : 10.0 / base.real.beta;
    if (study.transient_window >= sim.horizon)
        throw ConfigError("analysis", "transient window covers the whole horizon");
    study.rows.resize(gammas.size());

    std::vector<std::exception_ptr> errors(gammas.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < gammas.size(); k = next++) {
            try {
                study.rows[k] = sweep_point(base, sim, gammas[k], study.transient_window, opts.with_reference);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const int jobs = std::clamp(opts.jobs, 1, static_cast<int>(gammas.size()));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k]) continue;
        try {
            std::rethrow_exception(errors[k]);
        } catch (const Error& e) {
            throw SimulationError("analysis", "gamma sweep invalidated at gamma=" + std::to_string(gammas[k]) +
                                                  ": " + e.what());
        }
    }

    auto column = [&](double SweepRow::*field) {
        std::vector<double> v;
        for (const auto& r : study.rows) v.push_back(r.*field);
        return v;
    };
    auto fit = [&](double SweepRow::*field) {
        const std::vector<double> y = column(field);
        for (double v : y)
            if (!(v > 0.0)) return SlopeFit{std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0};
        return fit_loglog(gammas, y);
    };
    study.w_tilde = fit(&SweepRow::sup_w_tilde);
    study.y_tilde = fit(&SweepRow::sup_y_tilde);
    study.p12_w_tilde = fit(&SweepRow::sup_p12_w_tilde);
    if (opts.with_reference) study.e_w = fit(&SweepRow::sup_e_w);
    return study;
}

// ---------------------------------------------------------------------------
// Almost-asymptotic convergence

struct AlmostAsymptoticReport {
    double l2_total = 0.0;
    double tail_fraction = 0.0;  // share of int |y|^2 from the final 10% of the horizon
    bool part1 = false;
    int probes = 0;
    int probes_passed = 0;
    double probe_pass_fraction = 0.0;
    bool part2 = false;
    bool passed() const { return part1 && part2; }
};

/// Conventions: part 1 passes when the final 10% of the horizon contributes
/// under 5% of int |y|^2; part 2 passes when, for at least 90% of random
/// spacings x in [0.5, 1] T / n_max, max |y(n x)| over the last quartile of n
/// is at most 0.2 times the max over the first quartile.
inline AlmostAsymptoticReport almost_asymptotic_check(const std::vector<double>& y, double dt, int x_probes,
                                                      int n_max, std::uint64_t seed = 1) {
    if (y.size() < 3 || !(dt > 0.0)) throw ConfigError("analysis", "horizon insufficient: too few samples");
    if (x_probes < 1 || n_max < 4) throw ConfigError("analysis", "need at least one probe and n_max >= 4");
    const double horizon = dt * static_cast<double>(y.size() - 1);
    if (0.5 * horizon / n_max < dt) throw ConfigError("analysis", "horizon insufficient for the probe spacings");

    AlmostAsymptoticReport rep;
    const std::size_t tail_start = static_cast<std::size_t>(std::floor(0.9 * static_cast<double>(y.size() - 1)));
    double tail = 0.0;
    for (std::size_t k = 1; k < y.size(); ++k) {
        const double seg = 0.5 * dt * (y[k] * y[k] + y[k - 1] * y[k - 1]);
        rep.l2_total += seg;
        if (k > tail_start) tail += seg;
    }
    rep.tail_fraction = rep.l2_total > 0.0 ? tail / rep.l2_total : 0.0;
    rep.part1 = std::isfinite(rep.l2_total) && rep.tail_fraction < 0.05;

    auto interp = [&](double t) {
        const double s = std::clamp(t / dt, 0.0, static_cast<double>(y.size() - 1));
        const std::size_t i = std::min(static_cast<std::size_t>(s), y.size() - 2);
        const double frac = s - static_cast<double>(i);
        return std::abs((1.0 - frac) * y[i] + frac * y[i + 1]);
    };
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> spacing(0.5 * horizon / n_max, horizon / n_max);
    const int quarter = std::max(1, n_max / 4);
    rep.probes = x_probes;
    for (int p = 0; p < x_probes; ++p) {
        const double x = spacing(rng);
        double first = 0.0, last = 0.0;
        for (int n = 1; n <= quarter; ++n) first = std::max(first, interp(n * x));
        for (int n = n_max - quarter + 1; n <= n_max; ++n) last = std::max(last, interp(n * x));
        if (last <= 0.2 * first) ++rep.probes_passed;
    }
    rep.probe_pass_fraction = static_cast<double>(rep.probes_passed) / x_probes;
    rep.part2 = rep.probe_pass_fraction >= 0.9;
    return rep;
}

// ---------------------------------------------------------------------------
// Lyapunov envelope

struct EnvelopeViolation {
    double t = 0.0;
    double V = 0.0;
    double bound = 0.0;
};

struct EnvelopeReport {
    double lambda_p = 0.0;
    double rho1 = 0.0;
    double gamma = 0.0;
    double V0 = 0.0;
    double asymptote = 0.0;  // rho1 / (lambda_p gamma)
    double max_ratio = 0.0;  // max V / bound
    std::vector<EnvelopeViolation> violations;
    bool passed() const { return violations.empty(); }
};

/// V(t) <= V(0) e^{-lambda_p t} + (rho1 / (lambda_p gamma)) (1 - e^{-lambda_p t})
/// per sample, with rho1 from the trace metadata and lambda_p from `cert`.
/// Tolerance: rel_tol relative plus an absolute slack of dt^4 (RK4 order).
inline EnvelopeReport bound_verify(const SimulationTrace& tr, const LyapunovCertificate& cert,
                                   double rel_tol = 1e-6, double abs_slack = -1.0) {
    if (!tr.has_V || tr.V.size() != tr.size()) throw ConfigError("analysis", "trace has no V(t) channel");
    if (!(cert.lambda_p > 0.0)) throw ConfigError("analysis", "certificate lambda_p must be positive");
    EnvelopeReport rep;
    rep.lambda_p = cert.lambda_p;
    rep.rho1 = tr.rho1;
    rep.gamma = tr.gamma;
    rep.V0 = tr.V.front();
    rep.asymptote = rep.rho1 / (rep.lambda_p * rep.gamma);
    const double slack = abs_slack >= 0.0 ? abs_slack : std::pow(tr.dt, 4);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const double decay = std::exp(-rep.lambda_p * tr.t[k]);
        const double bound = rep.V0 * decay + rep.asymptote * (1.0 - decay);
        if (bound > 0.0) rep.max_ratio = std::max(rep.max_ratio, tr.V[k] / bound);
        if (tr.V[k] > bound * (1.0 + rel_tol) + slack) rep.violations.push_back({tr.t[k], tr.V[k], bound});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Tracking decomposition

struct TrackingRow {
    double t = 0.0;
    double tracking_error = 0.0;  // y - r
    double y_hat_h_minus_sigma = 0.0;
    double y_tilde = 0.0;
    double residual = 0.0;
};

struct TrackingReport {
    std::vector<TrackingRow> rows;
    double sup_tracking_error = 0.0;
    double sup_y_hat_h_minus_sigma = 0.0;
    double sup_y_tilde = 0.0;
    double sup_residual = 0.0;
};

/// y - r = (y_hat_h - sigma) - y_tilde, and with the per-half errors
/// y_tilde = y_tilde_p + y_tilde_h. The residual recomputes the identity
/// from the recorded signals (using the halves when they were recorded).
inline TrackingReport tracking_report(const SimulationTrace& tr) {
    TrackingReport rep;
    const bool halves = tr.diagnostic && tr.y_tilde_p.size() == tr.size();
    for (std::size_t k = 0; k < tr.size(); ++k) {
        TrackingRow row;
        row.t = tr.t[k];
        row.tracking_error = tr.y[k] - tr.r[k];
        row.y_hat_h_minus_sigma = tr.y_hat_h[k] - tr.sigma[k];
        row.y_tilde = tr.y_tilde[k];
        const double yt = halves ? tr.y_tilde_p[k] + tr.y_tilde_h[k] : tr.y_tilde[k];
        row.residual = row.tracking_error - (row.y_hat_h_minus_sigma - yt);
        rep.sup_tracking_error = std::max(rep.sup_tracking_error, std::abs(row.tracking_error));
        rep.sup_y_hat_h_minus_sigma = std::max(rep.sup_y_hat_h_minus_sigma, std::abs(row.y_hat_h_minus_sigma));
        rep.sup_y_tilde = std::max(rep.sup_y_tilde, std::abs(row.y_tilde));
        rep.sup_residual = std::max(rep.sup_residual, std::abs(row.residual));
        rep.rows.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// A-posteriori ODE residuals of the model-following error

struct ModelFollowingResidual {
    double e_w = 0.0;  // max ||d/dt e_w - rhs||_Z over checked samples
    double e_p = 0.0;  // max |d/dt e_p - rhs|
    int samples_checked = 0;
};

/// Fourth-order central differences of e_w = w - w_ref and e_p = p - p_ref
/// against
///   e_w' = A_m e_w - B H_C e_p + alpha (f(w) - f(w_ref))
///   e_p' = H_A e_p - H_B C e_{w,p} - H_B y_tilde_p
/// with e_{w,p} = w_p - w_ref_p. Needs a diagnostic main trace and both
/// traces with stored states. Samples before `skip_time` are ignored.
inline ModelFollowingResidual model_following_residual(const ClosedLoopSystem& sys, const SimulationTrace& main,
                                                       const ReferenceTrace& ref, double skip_time = 0.0) {
    if (!main.diagnostic || main.states.size() != main.size() || ref.states.size() != ref.size() ||
        ref.size() != main.size())
        throw ConfigError("analysis", "model-following residual needs diagnostic traces with stored states");
    const StateLayout& l = main.layout;
    const int m = l.m;
    const int np = l.np;
    const double h = main.sample_dt;
    auto e_w = [&](std::size_t k) -> Vector {
        return main.states[k].segment(l.w(), m) - ref.states[k].segment(0, m);
    };
    auto e_p = [&](std::size_t k) -> Vector {
        return main.states[k].segment(l.p(), np) - ref.states[k].segment(3 * m, np);
    };
    ModelFollowingResidual out;
    for (std::size_t k = 2; k + 2 < main.size(); ++k) {
        if (main.t[k] < skip_time) continue;
        if (std::abs((main.t[k + 2] - main.t[k - 2]) - 4.0 * h) > 1e-9 * h) continue;  // ragged final sample
        const Vector dw = (-e_w(k + 2) + 8.0 * e_w(k + 1) - 8.0 * e_w(k - 1) + e_w(k - 2)) / (12.0 * h);
        const Vector dp = (-e_p(k + 2) + 8.0 * e_p(k + 1) - 8.0 * e_p(k - 1) + e_p(k - 2)) / (12.0 * h);

        const Vector& xm = main.states[k];
        const Vector& xr = ref.states[k];
        const Vector w = xm.segment(l.w(), m);
        const Vector w_ref = xr.segment(0, m);
        const Vector ew = w - w_ref;
        const Vector ep = xm.segment(l.p(), np) - xr.segment(3 * m, np);
        const int n = sys.channels();
        const Vector df = channel_forcing(sys.plant.alpha_true, eval_nonlinearity(sys.plant.f, w, n) -
                                                                     eval_nonlinearity(sys.plant.f, w_ref, n));
        const Vector rhs_w = sys.real.Am * ew - sys.plant.B * sys.filter.HC.dot(ep) + df;
        const Vector ewp = xm.segment(l.w_p(), m) - xr.segment(m, m);
        const double yt_p = sys.plant.C.dot(xm.segment(l.w_hat_p(), m) - xm.segment(l.w_p(), m));
        const Vector rhs_p = sys.filter.HA * ep - sys.filter.HB * (sys.plant.C.dot(ewp) + yt_p);

        out.e_w = std::max(out.e_w, sys.plant.space.norm(dw - rhs_w));
        out.e_p = std::max(out.e_p, (dp - rhs_p).norm());
        ++out.samples_checked;
    }
    return out;
}

}  // namespace dac
