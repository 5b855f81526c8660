#pragma once

#include "dac/analysis.hpp"
#include "dac/coercivity.hpp"
#include "dac/config.hpp"
#include "dac/controller.hpp"
#include "dac/lyapunov.hpp"
#include "dac/report.hpp"
#include "dac/sim_engine.hpp"
#include "dac/spatial_model.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dac {

/// A configured closed loop on one grid, plus the KYP triple when the
/// certificate comes from one.
struct Experiment {
    ExperimentConfig config;
    ClosedLoopSystem system;
    std::optional<KypCertificate> kyp;
    std::optional<KypReport> kyp_report;
    std::string hash;

    SimOptions sim_options() const {
        SimOptions o;
        o.dt = config.dt;
        o.horizon = config.horizon;
        o.record_every = config.record_every;
        o.rho_w = config.rho_w;
        o.blowup_factor = config.blowup_factor;
        o.reference = config.reference;
        return o;
    }

    SmallGainReport small_gain() const {
        SmallGainOptions o;
        o.eps_s = config.eps_s;
        o.lipschitz_samples = config.lipschitz_samples;
        return small_gain_check(system.plant, system.real, system.filter, system.proj, config.rho_w,
                                config.reference.sup(), o);
    }
};

inline Experiment build_experiment(const ExperimentConfig& cfg, std::optional<int> n_override = std::nullopt) {
    Experiment ex;
    ex.config = cfg;
    ex.hash = config_hash(cfg);
    const int n = n_override.value_or(cfg.n);
    const SpatialGrid grid = build_grid(cfg.plant.length, n);
    ClosedLoopSystem& sys = ex.system;
    if (cfg.certificate == CertificateMode::kyp) {
        SprBenchmark spr = construct_spr_benchmark(grid, cfg.plant);
        sys.plant = std::move(spr.plant);
        ex.kyp = spr.kyp;
    } else {
        sys.plant = assemble_plant(cfg.plant, grid);
    }
    sys.real = design_K(sys.plant, cfg.strategy);
    sys.filter = build_filter(cfg.filter_poles, cfg.filter_input_gain, sys.real, sys.plant);
    const Vector& mass = sys.plant.space.weights();
    if (ex.kyp) {
        ex.kyp_report = check_kyp(sys.real.Am, sys.plant.C, *ex.kyp, mass);
        sys.cert = certificate_from_kyp(*ex.kyp, sys.real.Am, mass, n);
    } else {
        sys.cert = certify(sys.real.Am, mass, n, cfg.normality_threshold);
    }
    sys.proj = {cfg.plant.nu_alpha, cfg.epsilon, cfg.gamma};
    sys.alpha_hat0 = Eigen::Map<const Vector>(cfg.alpha_hat0.data(), static_cast<Eigen::Index>(cfg.alpha_hat0.size()));
    return ex;
}

// ---------------------------------------------------------------------------
// Artifact writers

inline CsvTable trace_table(const SimulationTrace& tr) {
    std::vector<std::string> header{"t",       "r",       "u",       "y",           "sigma",   "y_hat_p",
                                    "y_hat_h", "y_tilde", "norm_w",  "norm_w_tilde", "norm_p12_w_tilde", "V"};
    for (int i = 0; i < tr.channels; ++i) header.push_back("alpha_hat_" + std::to_string(i));
    CsvTable t(header);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        std::vector<double> row{tr.t[k],       tr.r[k],       tr.u[k],      tr.y[k],
                                tr.sigma[k],   tr.y_hat_p[k], tr.y_hat_h[k], tr.y_tilde[k],
                                tr.norm_w[k],  tr.norm_w_tilde[k], tr.norm_p12_w_tilde[k],
                                tr.has_V ? tr.V[k] : std::numeric_limits<double>::quiet_NaN()};
        for (int i = 0; i < tr.channels; ++i) row.push_back(tr.alpha_hat[k](i));
        t.add_row(row);
    }
    return t;
}

inline KeyValues certificate_fields(const Experiment& ex) {
    const LyapunovCertificate& c = ex.system.cert;
    KeyValues kv{{"certificate_residual", fmt(c.residual)},
                 {"lambda_p", fmt(c.lambda_p)},
                 {"coercivity_margin", fmt(c.coercivity_margin)},
                 {"q_branch", std::to_string(c.q_branch)}};
    if (ex.kyp_report) {
        kv.emplace_back("kyp_residual_lyap", fmt(ex.kyp_report->residual_lyap));
        kv.emplace_back("kyp_residual_output", fmt(ex.kyp_report->residual_output));
    }
    return kv;
}

inline void stamp(CsvTable& t, const Experiment& ex) {
    t.comment("config_hash", ex.hash);
    for (const auto& [k, v] : certificate_fields(ex)) t.comment(k, v);
}

struct CommandContext {
    std::filesystem::path output_dir;
    bool plots = true;
    int jobs = 1;
    std::ostream* log = &std::cout;
};

// Exit codes shared by all commands.
inline constexpr int exit_pass = 0;
inline constexpr int exit_gate_failed = 1;
inline constexpr int exit_config_error = 2;
inline constexpr int exit_runtime_error = 3;

/// Integrates the closed loop and checks the small-gain gate, the
/// W-boundedness of the run and the V(t) envelope.
inline int command_run(const ExperimentConfig& cfg, const CommandContext& ctx) {
    const Experiment ex = build_experiment(cfg);
    const SmallGainReport sg = ex.small_gain();
    SimOptions o = ex.sim_options();
    o.diagnostic = true;
    const SimulationTrace tr = run(ex.system, o);
    const TraceNorms norms = trace_norms(tr, std::numeric_limits<double>::infinity());
    const EnvelopeReport env = bound_verify(tr, ex.system.cert, cfg.envelope_rel_tol);
    const TrackingReport track = tracking_report(tr);
    const AlmostAsymptoticReport aa =
        almost_asymptotic_check(tr.y_tilde, tr.sample_dt, cfg.x_probes, cfg.n_max, cfg.seed);
    const bool bounded = norms.w_W_tau < cfg.rho_w;
    // Without a coercive certificate only almost-asymptotic convergence of
    // y_tilde is claimed, so that is what gates the run.
    const bool aa_gate = ex.system.cert.q_branch != 2 || aa.passed();

    CsvTable trace = trace_table(tr);
    stamp(trace, ex);
    write_text(ctx.output_dir / "trace.csv", trace.str());

    KeyValues meta{{"config_hash", ex.hash},
                   {"plant", to_string(cfg.plant.kind)},
                   {"grid_n", std::to_string(cfg.n)},
                   {"dt", fmt(tr.dt)},
                   {"gamma", fmt(tr.gamma)},
                   {"rho1", fmt(tr.rho1)},
                   {"V0", fmt(tr.V0)},
                   {"M", fmt(ex.system.real.M)},
                   {"beta", fmt(ex.system.real.beta)},
                   {"filter_dc_residual", fmt(ex.system.filter.dc_residual)}};
    for (const auto& kv : certificate_fields(ex)) meta.push_back(kv);
    meta.emplace_back("w_W_tau", fmt(norms.w_W_tau));
    meta.emplace_back("y_tilde_L2_tau", fmt(norms.y_tilde_L2_tau));
    write_text(ctx.output_dir / "trace.meta", key_values(meta));

    CsvTable sgt({"quantity", "value"});
    stamp(sgt, ex);
    for (const auto& [k, v] : KeyValues{{"rho_w", fmt(sg.rho_w)},
                                        {"eps_s", fmt(sg.eps_s)},
                                        {"nu1", fmt(sg.nu1)},
                                        {"nu2", fmt(sg.nu2)},
                                        {"delta_0w", fmt(sg.delta_0w)},
                                        {"delta_0r", fmt(sg.delta_0r)},
                                        {"delta_0u", fmt(sg.delta_0u)},
                                        {"M", fmt(sg.M)},
                                        {"Tstar_bound", fmt(sg.Tstar_bound)},
                                        {"r_sup", fmt(sg.r_sup)},
                                        {"lhs", fmt(sg.lhs)},
                                        {"rhs", fmt(sg.rhs)},
                                        {"margin", fmt(sg.margin)},
                                        {"satisfied", std::string(sg.satisfied ? "1" : "0")}})
        sgt.add_row({k, v});
    write_text(ctx.output_dir / "small_gain.csv", sgt.str());

    CsvTable envt({"t", "V", "bound"});
    stamp(envt, ex);
    envt.comment("asymptote", env.asymptote);
    envt.comment("violations", static_cast<double>(env.violations.size()));
    for (const auto& v : env.violations) envt.add_row(std::vector<double>{v.t, v.V, v.bound});
    write_text(ctx.output_dir / "envelope_violations.csv", envt.str());

    CsvTable trk({"t", "y_minus_r", "y_hat_h_minus_sigma", "y_tilde", "identity_residual"});
    stamp(trk, ex);
    for (const auto& r : track.rows)
        trk.add_row(std::vector<double>{r.t, r.tracking_error, r.y_hat_h_minus_sigma, r.y_tilde, r.residual});
    write_text(ctx.output_dir / "tracking.csv", trk.str());

    if (ctx.plots) {
        write_text(ctx.output_dir / "y_vs_r.svg",
                   svg_line_plot({{"y", tr.t, tr.y}, {"r", tr.t, tr.r, "#d62728", true}},
                                 {"output and reference", "t", "y, r"}));
        write_text(ctx.output_dir / "y_tilde.svg",
                   svg_line_plot({{"y_tilde", tr.t, tr.y_tilde}}, {"output observation error", "t", "y_tilde"}));
        write_text(ctx.output_dir / "w_tilde.svg",
                   svg_line_plot({{"||w_tilde||_Z", tr.t, tr.norm_w_tilde}}, {"state observation error", "t", "norm"}));
        std::vector<double> bound;
        for (double t : tr.t) {
            const double d = std::exp(-env.lambda_p * t);
            bound.push_back(env.V0 * d + env.asymptote * (1.0 - d));
        }
        write_text(ctx.output_dir / "V.svg",
                   svg_line_plot({{"V", tr.t, tr.V}, {"envelope", tr.t, bound, "#d62728", true}},
                                 {"Lyapunov function and envelope", "t", "V"}));
    }

    std::ostringstream summary;
    summary << "config_hash " << ex.hash << "\n"
            << "certificate residual " << fmt(ex.system.cert.residual) << ", lambda_p " << fmt(ex.system.cert.lambda_p)
            << ", q branch " << ex.system.cert.q_branch << "\n"
            << "small-gain " << (sg.satisfied ? "satisfied" : "NOT satisfied") << ": lhs " << fmt(sg.lhs)
            << " vs rho_w - eps_s " << fmt(sg.rhs) << (sg.failure.empty() ? "" : " [" + sg.failure + "]") << "\n"
            << "||w||_W,tau " << fmt(norms.w_W_tau) << (bounded ? " < " : " >= ") << "rho_w " << fmt(cfg.rho_w)
            << "\n"
            << "envelope violations " << env.violations.size() << " (asymptote " << fmt(env.asymptote) << ")\n"
            << "sup|y - r| " << fmt(track.sup_tracking_error) << ", sup|y_tilde| " << fmt(track.sup_y_tilde)
            << ", identity residual " << fmt(track.sup_residual) << "\n"
            << "almost-asymptotic y_tilde: L2 tail fraction " << fmt(aa.tail_fraction) << (aa.part1 ? " (pass)" : " (FAIL)")
            << ", probes passing " << aa.probes_passed << "/" << aa.probes << (aa.part2 ? " (pass)" : " (FAIL)")
            << "\n";
    if (ex.kyp_report)
        summary << "KYP check " << (ex.kyp_report->passed() ? "passed" : "FAILED") << "\n";
    write_text(ctx.output_dir / "summary.txt", summary.str());
    *ctx.log << summary.str();

    const bool ok = sg.satisfied && bounded && env.passed() && aa_gate && (!ex.kyp_report || ex.kyp_report->passed());
    return ok ? exit_pass : exit_gate_failed;
}

/// gamma sweep over config.adaptation.gamma_list.
inline int command_sweep(const ExperimentConfig& cfg, const CommandContext& ctx) {
    const Experiment ex = build_experiment(cfg);
    SweepOptions so;
    so.transient_window = cfg.transient_window;
    so.jobs = ctx.jobs;
    const BoundStudy study = gamma_sweep(ex.system, ex.sim_options(), cfg.gamma_list, so);

    CsvTable t({"gamma", "sup_w_tilde", "sup_y_tilde", "sup_p12_w_tilde", "sup_e_w", "sup_w"});
    stamp(t, ex);
    t.comment("transient_window", study.transient_window);
    for (const auto& r : study.rows)
        t.add_row(std::vector<double>{r.gamma, r.sup_w_tilde, r.sup_y_tilde, r.sup_p12_w_tilde, r.sup_e_w, r.sup_w});
    write_text(ctx.output_dir / "sweep.csv", t.str());

    CsvTable s({"metric", "slope", "half_width_95", "intercept"});
    stamp(s, ex);
    const std::vector<std::pair<std::string, SlopeFit>> fits{{"sup_w_tilde", study.w_tilde},
                                                             {"sup_y_tilde", study.y_tilde},
                                                             {"sup_p12_w_tilde", study.p12_w_tilde},
                                                             {"sup_e_w", study.e_w}};
    std::ostringstream summary;
    summary << "config_hash " << ex.hash << "\n";
    for (const auto& [name, f] : fits) {
        s.add_row({name, fmt(f.slope), fmt(f.half_width), fmt(f.intercept)});
        summary << "slope " << name << " " << fmt(f.slope) << " +- " << fmt(f.half_width) << "\n";
    }
    write_text(ctx.output_dir / "sweep_slopes.csv", s.str());

    if (ctx.plots) {
        std::vector<double> g, w, y, e;
        for (const auto& r : study.rows) {
            g.push_back(r.gamma);
            w.push_back(r.sup_w_tilde);
            y.push_back(r.sup_y_tilde);
            e.push_back(r.sup_e_w);
        }
        PlotOptions po{"post-transient sup norms vs gamma", "gamma", "sup", true, true, true};
        write_text(ctx.output_dir / "sweep.svg",
                   svg_line_plot({{"||w_tilde||_Z", g, w}, {"|y_tilde|", g, y, "#d62728"}, {"||e_w||_Z", g, e, "#2ca02c"}},
                                 po));
    }
    write_text(ctx.output_dir / "summary.txt", summary.str());
    *ctx.log << summary.str();
    return exit_pass;
}

/// Lyapunov certificate (and KYP check in kyp mode) on the configured grid.
inline int command_certify(const ExperimentConfig& cfg, const CommandContext& ctx) {
    const Experiment ex = build_experiment(cfg);
    const LyapunovCertificate& c = ex.system.cert;
    CsvTable t({"quantity", "value"});
    t.comment("config_hash", ex.hash);
    t.add_row({"grid_n", std::to_string(c.grid_n)});
    t.add_row({"q_branch", std::to_string(c.q_branch)});
    t.add_row({"residual", fmt(c.residual)});
    t.add_row({"lambda_p", fmt(c.lambda_p)});
    t.add_row({"coercivity_margin", fmt(c.coercivity_margin)});
    t.add_row({"M", fmt(ex.system.real.M)});
    t.add_row({"beta", fmt(ex.system.real.beta)});
    t.add_row({"filter_dc_residual", fmt(ex.system.filter.dc_residual)});
    bool ok = c.residual <= 1e-8 && ex.system.filter.dc_residual <= 1e-10;
    if (ex.kyp_report) {
        t.add_row({"kyp_residual_lyap", fmt(ex.kyp_report->residual_lyap)});
        t.add_row({"kyp_residual_output", fmt(ex.kyp_report->residual_output)});
        t.add_row({"kyp_eps_Q", fmt(ex.kyp->eps_Q)});
        t.add_row({"kyp_measured_eps_Q", fmt(ex.kyp_report->measured_eps_Q)});
        t.add_row({"kyp_passed", std::string(ex.kyp_report->passed() ? "1" : "0")});
        ok = ok && ex.kyp_report->passed();
    }
    write_text(ctx.output_dir / "certificate.csv", t.str());
    std::ostringstream summary;
    summary << "config_hash " << ex.hash << "\n"
            << "certificate residual " << fmt(c.residual) << ", lambda_p " << fmt(c.lambda_p) << ", margin "
            << fmt(c.coercivity_margin) << ", q branch " << c.q_branch << "\n"
            << (ok ? "certificate accepted" : "certificate REJECTED") << "\n";
    write_text(ctx.output_dir / "summary.txt", summary.str());
    *ctx.log << summary.str();
    return ok ? exit_pass : exit_gate_failed;
}

/// Coercivity margins over config.grid.n_list.
inline int command_coercivity(const ExperimentConfig& cfg, const CommandContext& ctx) {
    const CoercivityStudy study = coercivity_study(cfg.plant, cfg.strategy, cfg.n_list);
    CsvTable t({"n", "coercivity_margin", "lambda_p", "residual", "q_branch"});
    t.comment("config_hash", config_hash(cfg));
    t.comment("slope", study.slope ? *study.slope : std::numeric_limits<double>::quiet_NaN());
    std::vector<double> ns, margins;
    bool ok = true;
    for (const auto& r : study.rows) {
        t.add_row(std::vector<double>{static_cast<double>(r.n), r.coercivity_margin, r.lambda_p, r.residual,
                                      static_cast<double>(r.q_branch)});
        ns.push_back(r.n);
        margins.push_back(r.coercivity_margin);
        ok = ok && r.residual <= 1e-8;
    }
    write_text(ctx.output_dir / "coercivity.csv", t.str());
    if (ctx.plots) {
        PlotOptions po{"coercivity margin vs grid size", "N", "margin", true, true, true};
        write_text(ctx.output_dir / "margin_vs_N.svg", svg_line_plot({{"margin", ns, margins}}, po));
    }
    std::ostringstream summary;
    summary << "config_hash " << config_hash(cfg) << "\n";
    for (const auto& r : study.rows)
        summary << "N " << r.n << " margin " << fmt(r.coercivity_margin) << " lambda_p " << fmt(r.lambda_p)
                << " branch " << r.q_branch << "\n";
    if (study.slope) summary << "log-log slope " << fmt(*study.slope) << "\n";
    write_text(ctx.output_dir / "summary.txt", summary.str());
    *ctx.log << summary.str();
    return ok ? exit_pass : exit_gate_failed;
}

/// Main run plus the auxiliary reference system and model-following errors.
inline int command_reference(const ExperimentConfig& cfg, const CommandContext& ctx) {
    const Experiment ex = build_experiment(cfg);
    SimOptions o = ex.sim_options();
    o.diagnostic = true;
    o.store_states = true;
    const SimulationTrace tr = run(ex.system, o);
    const ReferenceTrace ref = run_reference(ex.system, o, tr);
    const ModelFollowingResidual res = model_following_residual(ex.system, tr, ref);

    CsvTable t({"t", "y", "y_ref", "u_ref_r", "norm_e_w", "norm_e_p"});
    stamp(t, ex);
    double sup_ew = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        t.add_row(std::vector<double>{ref.t[k], tr.y[k], ref.y_ref[k], ref.u_ref_r[k], ref.norm_e_w[k],
                                      ref.norm_e_p[k]});
        sup_ew = std::max(sup_ew, ref.norm_e_w[k]);
    }
    write_text(ctx.output_dir / "reference.csv", t.str());
    if (ctx.plots)
        write_text(ctx.output_dir / "e_w.svg",
                   svg_line_plot({{"||e_w||_Z", ref.t, ref.norm_e_w}}, {"model-following error", "t", "norm"}));
    std::ostringstream summary;
    summary << "config_hash " << ex.hash << "\n"
            << "sup ||e_w||_Z " << fmt(sup_ew) << "\n"
            << "e_w equation residual " << fmt(res.e_w) << ", e_p equation residual " << fmt(res.e_p) << "\n";
    write_text(ctx.output_dir / "summary.txt", summary.str());
    *ctx.log << summary.str();
    return exit_pass;
}

}  // namespace dac
