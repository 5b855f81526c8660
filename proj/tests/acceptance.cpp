// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "dac/dac.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace dac;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig load(const std::string& name) { return parse_config(fs::path(DAC_CONFIG_DIR) / name); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// vec(A^T P + P A) = (I kron A^T + A^T kron I) vec(P), solved densely.
Matrix kronecker_lyapunov(const Matrix& a, const Matrix& q) {
    const Eigen::Index n = a.rows();
    Matrix k = Matrix::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k.block(i * n, i * n, n, n) += a.transpose();
        for (Eigen::Index j = 0; j < n; ++j) k.block(i * n, j * n, n, n) += a(j, i) * Matrix::Identity(n, n);
    }
    const Vector x = k.partialPivLu().solve(-Eigen::Map<const Vector>(q.data(), n * n));
    return Eigen::Map<const Matrix>(x.data(), n, n);
}

Verdict certificate_fidelity() {
    const auto t0 = std::chrono::steady_clock::now();
    PlantSpec heat, adv, spr;
    adv.kind = PlantKind::advection_diffusion;
    adv.velocity = 1.0;
    adv.viscosity = 0.01;
    spr.kind = PlantKind::spr_heat;
    double worst_res = 0.0, worst_oracle = 0.0;
    int checked = 0;
    for (const PlantSpec* s : {&heat, &adv, &spr})
        for (int n : {25, 40, 50, 100, 200}) {
            const PlantModel p = assemble_plant(*s, n);
            const ClosedLoopRealization real = design_K(p, GainStrategy::zero, {false});
            const LyapunovCertificate c = certify(real.Am, p.space.weights(), n);
            worst_res = std::max(worst_res, c.residual);
            if (n <= 40) {
                const Matrix oracle = kronecker_lyapunov(real.Am, c.Q);
                worst_oracle = std::max(worst_oracle, (c.P - oracle).cwiseAbs().maxCoeff() /
                                                          oracle.cwiseAbs().maxCoeff());
            }
            ++checked;
        }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << checked << " certificates, max residual " << fmt(worst_res) << ", max oracle deviation "
       << fmt(worst_oracle) << ", " << fmt(elapsed) << " s";
    return {worst_res <= 1e-8 && worst_oracle <= 1e-10 && elapsed < 10.0, os.str()};
}

Verdict discretization_order() {
    PlantSpec s;
    s.length = 2.0;
    const double exact = -std::pow(std::numbers::pi / s.length, 2);
    auto first = [&](int n) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(assemble_plant(s, n).A, Eigen::EigenvaluesOnly);
        return es.eigenvalues().maxCoeff();
    };
    std::vector<double> ns, errs;
    for (int n : {25, 50, 100, 200}) {
        ns.push_back(n);
        errs.push_back(std::abs(first(n) - exact));
    }
    const double rel100 = std::abs(first(100) - exact) / std::abs(exact);
    const double slope = loglog_slope(ns, errs);
    std::ostringstream os;
    os << "relative error at N=100 " << fmt(rel100) << ", slope " << fmt(slope);
    return {rel100 <= 0.01 && slope >= -2.4 && slope <= -1.6, os.str()};
}

Verdict projection_invariance() {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> channels(1, 3);
    int violations = 0;
    double worst_excess = -INFINITY;
    const int trials = 10000;
    for (int trial = 0; trial < trials; ++trial) {
        const ProjectionConfig cfg{0.2 + 2.0 * std::abs(u(rng)), 0.05 + 0.9 * std::abs(u(rng)),
                                   std::pow(10.0, 3.0 * std::abs(u(rng)))};
        const int n = channels(rng);
        const double outer = cfg.outer_bound();
        Vector alpha(n);
        for (int i = 0; i < n; ++i) alpha(i) = outer * u(rng);
        // Piecewise-constant random drives; adaptive_rhs_gram with a unit
        // field turns a Gram product of -y into the drive y.
        const double drive_scale = 10.0 * std::abs(u(rng)) + 0.1;
        const double dt = 0.02 / (cfg.gamma * drive_scale);
        const Vector field = Vector::Ones(1);
        for (int seg = 0; seg < 10; ++seg) {
            Vector pw(n);
            for (int i = 0; i < n; ++i) pw(i) = -drive_scale * u(rng);
            auto rhs = [&](double, const Vector& a) -> Vector { return adaptive_rhs_gram(a, pw, field, cfg); };
            for (int k = 0; k < 40; ++k) {
                alpha = step_rk4(0.0, alpha, dt, rhs);
                const double excess = alpha.cwiseAbs().maxCoeff() - outer;
                worst_excess = std::max(worst_excess, excess);
                if (excess > 1e-9) ++violations;
            }
        }
    }
    std::ostringstream os;
    os << trials << " integrations, " << violations << " violations, max |alpha_hat_i| - bound "
       << fmt(worst_excess);
    return {violations == 0, os.str()};
}

struct SweepOutcome {
    BoundStudy study;
    double seconds = 0.0;
};

SweepOutcome sweep_of(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Experiment ex = build_experiment(cfg);
    SweepOptions so;
    so.transient_window = cfg.transient_window;
    so.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    SweepOutcome out{gamma_sweep(ex.system, ex.sim_options(), cfg.gamma_list, so), 0.0};
    out.seconds = seconds_since(t0);
    return out;
}

bool in_band(double slope) { return slope >= -0.7 && slope <= -0.3; }

Verdict coercive_scaling(const SweepOutcome& s) {
    std::ostringstream os;
    os << "sup ||w_tilde||_Z slope " << fmt(s.study.w_tilde.slope) << " +/- " << fmt(s.study.w_tilde.half_width)
       << ", sweep " << fmt(s.seconds) << " s";
    return {in_band(s.study.w_tilde.slope) && s.seconds < 300.0, os.str()};
}

Verdict envelope_check(const ExperimentConfig& cfg) {
    const Experiment ex = build_experiment(cfg);
    const SimulationTrace tr = run(ex.system, ex.sim_options());
    const EnvelopeReport rep = bound_verify(tr, ex.system.cert, cfg.envelope_rel_tol);
    std::ostringstream os;
    os << tr.size() << " samples, " << rep.violations.size() << " violations, max V/bound " << fmt(rep.max_ratio);
    return {rep.passed() && tr.size() > 1, os.str()};
}

Verdict kyp_case(const ExperimentConfig& cfg, const SweepOutcome& s) {
    const Experiment ex = build_experiment(cfg);
    const bool kyp_ok = ex.kyp_report && ex.kyp_report->passed() && ex.kyp_report->residual_lyap <= 1e-8 &&
                        ex.kyp_report->residual_output <= 1e-8;
    std::ostringstream os;
    if (ex.kyp_report)
        os << "KYP residuals " << fmt(ex.kyp_report->residual_lyap) << "/" << fmt(ex.kyp_report->residual_output)
           << ", ";
    os << "slopes P^(1/2) w_tilde " << fmt(s.study.p12_w_tilde.slope) << ", y_tilde " << fmt(s.study.y_tilde.slope);
    return {kyp_ok && in_band(s.study.p12_w_tilde.slope) && in_band(s.study.y_tilde.slope), os.str()};
}

Verdict noncoercive_case(const ExperimentConfig& cfg) {
    const Experiment ex = build_experiment(cfg);
    const SimulationTrace tr = run(ex.system, ex.sim_options());
    const AlmostAsymptoticReport aa =
        almost_asymptotic_check(tr.y_tilde, tr.sample_dt, cfg.x_probes, cfg.n_max, cfg.seed);
    const CoercivityStudy st = coercivity_study(cfg.plant, cfg.strategy, cfg.n_list);
    std::ostringstream os;
    os << "tail fraction " << fmt(aa.tail_fraction) << ", probes " << aa.probes_passed << "/" << aa.probes
       << ", margins";
    for (const auto& r : st.rows) os << " " << fmt(r.coercivity_margin);
    return {aa.passed() && st.strictly_decreasing(), os.str()};
}

Verdict small_gain_gate(const ExperimentConfig& cfg) {
    const Experiment ex = build_experiment(cfg);
    const SmallGainReport sg = ex.small_gain();
    const SimulationTrace tr = run(ex.system, ex.sim_options());
    const TraceNorms norms = trace_norms(tr, std::numeric_limits<double>::infinity());
    std::ostringstream os;
    os << "bound " << fmt(sg.lhs) << " vs rho_w - eps_s " << fmt(sg.rhs) << ", sup ||w||_Z " << fmt(norms.w_W_tau)
       << " vs rho_w " << fmt(cfg.rho_w);
    return {sg.satisfied && sg.margin > 0.0 && norms.w_W_tau < cfg.rho_w, os.str()};
}

Verdict model_following(const ExperimentConfig& cfg, const SweepOutcome& s) {
    bool monotone = true;
    std::ostringstream os;
    os << "sup ||e_w||_Z";
    for (std::size_t k = 0; k < s.study.rows.size(); ++k) {
        os << " " << fmt(s.study.rows[k].sup_e_w);
        if (k > 0 && s.study.rows[k].sup_e_w > 1.05 * s.study.rows[k - 1].sup_e_w) monotone = false;
    }
    // Residual of the e_w / e_p equations under step halving, across the step.
    // Samples every 8 steps keep the stencil error above round-off; the
    // spacing halves with the step.
    ExperimentConfig short_cfg = cfg;
    short_cfg.horizon = cfg.reference.time + 2.0;
    short_cfg.record_every = 8;
    const Experiment ex = build_experiment(short_cfg);
    auto residual = [&](double dt) {
        SimOptions o = ex.sim_options();
        o.dt = dt;
        o.diagnostic = true;
        o.store_states = true;
        const SimulationTrace tr = run(ex.system, o);
        const ReferenceTrace ref = run_reference(ex.system, o, tr);
        return model_following_residual(ex.system, tr, ref);
    };
    const ModelFollowingResidual a = residual(cfg.dt), b = residual(cfg.dt / 2);
    const double order = std::log2(a.e_w / b.e_w);
    os << "; residual " << fmt(a.e_w) << " -> " << fmt(b.e_w) << ", observed order " << fmt(order);
    return {monotone && order >= 3.5 && order <= 4.5, os.str()};
}

Verdict determinism_and_dc(const std::vector<ExperimentConfig>& configs) {
    std::ostringstream log;
    const ExperimentConfig& cfg = configs.front();
    const fs::path base = fs::temp_directory_path() / "dac_acceptance";
    fs::remove_all(base);
    for (const char* run_dir : {"a", "b"}) {
        const CommandContext ctx{base / run_dir, true, 1, &log};
        command_run(cfg, ctx);
        command_certify(cfg, ctx);
    }
    int files = 0, identical = 0;
    for (const auto& e : fs::directory_iterator(base / "a")) {
        ++files;
        if (slurp(e.path()) == slurp(base / "b" / e.path().filename())) ++identical;
    }

    double worst_dc = 0.0;
    int filters = 0;
    for (const auto& c : configs)
        for (int n : c.n_list) {
            const Experiment ex = build_experiment(c, n);
            worst_dc = std::max(worst_dc, ex.system.filter.dc_residual);
            ++filters;
        }

    // Linear case: zero nonlinearity, constant reference.
    ExperimentConfig lin = cfg;
    lin.plant.nonlinearity.kind = NonlinearityKind::zero;
    lin.reference = {ReferenceKind::constant, 1.0};
    const Experiment ex = build_experiment(lin);
    const SimulationTrace tr = run(ex.system, ex.sim_options());
    const double tracking = std::abs(tr.y.back() - tr.r.back()) / std::abs(tr.r.back());

    std::ostringstream os;
    os << identical << "/" << files << " files identical, max DC residual " << fmt(worst_dc) << " over " << filters
       << " filters, linear steady tracking error " << fmt(tracking);
    return {files >= 5 && identical == files && worst_dc <= 1e-10 && tracking <= 1e-6, os.str()};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Verdict()>& f) {
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            v = f();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        if (!v.pass) ++failures;
        std::printf("criterion %2d %-26s %s  (%s; %.1f s)\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    };

    const ExperimentConfig heat = load("heat_coercive.json");
    const ExperimentConfig spr = load("spr_benchmark.json");
    const ExperimentConfig adv = load("advection_noncoercive.json");
    SweepOutcome heat_sweep, spr_sweep;

    report(1, "certificate fidelity", certificate_fidelity);
    report(2, "discretization order", discretization_order);
    report(3, "projection invariance", projection_invariance);
    report(4, "coercive gamma scaling", [&] {
        heat_sweep = sweep_of(heat);
        return coercive_scaling(heat_sweep);
    });
    report(5, "envelope check", [&] { return envelope_check(heat); });
    report(6, "KYP case", [&] {
        spr_sweep = sweep_of(spr);
        return kyp_case(spr, spr_sweep);
    });
    report(7, "non-coercive case", [&] { return noncoercive_case(adv); });
    report(8, "small-gain gate", [&] { return small_gain_gate(heat); });
    report(9, "model following", [&] {
        if (heat_sweep.study.rows.empty()) heat_sweep = sweep_of(heat);
        return model_following(heat, heat_sweep);
    });
    report(10, "determinism and DC gain", [&] { return determinism_and_dc({heat, spr, adv}); });

    std::printf("%d of 10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
