#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dac;
using namespace dac::testing;

TEST(Rk4, ScalarDecayMatchesExponential) {
    Vector x = Vector::Ones(1);
    auto rhs = [](double, const Vector& v) -> Vector { return -v; };
    for (int k = 0; k < 10; ++k) x = step_rk4(0.01 * k, x, 0.01, rhs);
    // Ten steps, each with local error below dt^5 / 120.
    EXPECT_NEAR(x(0), std::exp(-0.1), 10 * std::pow(0.01, 5) / 120.0 * 1.01);
}

TEST(Rk4, StepLimitIsEnforced) {
    EXPECT_NO_THROW(check_step(0.01, 100.0));
    try {
        check_step(0.1, 100.0);
        FAIL() << "expected a ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("RK4 stability limit"), std::string::npos);
    }
    EXPECT_THROW(check_step(0.0, 1.0), ConfigError);
}

TEST(Reference, Signals) {
    const ReferenceSignal step{ReferenceKind::step, 2.0, 1.5};
    EXPECT_DOUBLE_EQ(step.at(1.4), 0.0);
    EXPECT_DOUBLE_EQ(step.at(1.5), 2.0);
    const ReferenceSignal sine{ReferenceKind::sinusoid, 0.5, 0.0, 2.0, 0.25};
    EXPECT_DOUBLE_EQ(sine.at(1.0), 0.25 + 0.5 * std::sin(2.0));
    EXPECT_DOUBLE_EQ(sine.sup(), 0.75);
}

TEST(Simulation, EquilibriumStaysAtRest) {
    const ClosedLoopSystem sys = make_system(sine_heat(), 12, 100.0);
    const SimulationTrace tr = run(sys, constant_reference(0.0, 1e-3, 1.0));
    for (std::size_t k = 0; k < tr.size(); ++k) {
        EXPECT_EQ(tr.norm_w[k], 0.0);
        EXPECT_EQ(tr.y_tilde[k], 0.0);
        EXPECT_EQ(tr.u[k], 0.0);
    }
}

TEST(Simulation, RhsMatchesWrittenOutEquations) {
    PlantSpec spec = sine_heat();
    spec.initial_state = {ShapeKind::sine, 0.3};
    const ClosedLoopSystem sys = make_system(spec, 10, 25.0, {-5.0, -8.0}, 0.2);
    const StateLayout l = StateLayout::of(sys, true);
    Vector x = Vector::LinSpaced(l.size(), -0.4, 0.6);
    x.segment(l.alpha_hat(), 1).setConstant(0.3);
    const double r = 0.7;
    const Vector dx = rhs_augmented(x, r, sys, l);

    const Vector w = x.segment(l.w(), l.m), whp = x.segment(l.w_hat_p(), l.m), whh = x.segment(l.w_hat_h(), l.m);
    const Vector p = x.segment(l.p(), l.np);
    Vector f(l.m);
    for (int j = 0; j < l.m; ++j) f(j) = std::sin(w(j));
    const double hcp = sys.filter.HC.dot(p);
    const Matrix& am = sys.real.Am;
    auto near = [](const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); };
    EXPECT_LE(near(dx.segment(l.w(), l.m), am * w - sys.plant.B * hcp + 0.8 * f), 1e-10);
    EXPECT_LE(near(dx.segment(l.w_hat_p(), l.m), am * whp + 0.3 * f), 1e-10);
    EXPECT_LE(near(dx.segment(l.w_hat_h(), l.m), am * whh - sys.plant.B * hcp), 1e-10);
    EXPECT_LE(near(dx.segment(l.p(), l.np), sys.filter.HA * p + sys.filter.HB * (r - sys.plant.C.dot(whp))), 1e-12);
    const Vector wt = whp + whh - w;
    const double drive = -(sys.cert.P * wt).dot(f);
    EXPECT_NEAR(dx(l.alpha_hat()), 25.0 * proj(0.3, drive, sys.proj), 1e-10);
    EXPECT_LE(near(dx.segment(l.w_p(), l.m), am * x.segment(l.w_p(), l.m) + 0.8 * f), 1e-10);
}

TEST(Simulation, LinearCaseMatchesMatrixExponential) {
    // f = 0 makes the augmented loop linear; integrate it exactly with the
    // matrix exponential of [[M, N r], [0, 0]].
    PlantSpec spec = sine_heat();
    spec.nonlinearity = {NonlinearityKind::zero};
    spec.initial_state = {ShapeKind::sine, 0.5};
    const ClosedLoopSystem sys = make_system(spec, 10, 100.0, {-4.0, -6.0});
    const double r = 0.8, T = 2.0;
    const SimulationTrace tr = [&] {
        SimOptions o = constant_reference(r, 1e-3, T);
        o.store_states = true;
        o.record_every = 2000;
        return run(sys, o);
    }();

    const int m = sys.plant.state_dim(), np = sys.filter.order();
    const int dim = 3 * m + np;
    Matrix big = Matrix::Zero(dim + 1, dim + 1);
    const Matrix bhc = sys.plant.B * sys.filter.HC;
    big.block(0, 0, m, m) = sys.real.Am;
    big.block(0, 3 * m, m, np) = -bhc;
    big.block(m, m, m, m) = sys.real.Am;
    big.block(2 * m, 2 * m, m, m) = sys.real.Am;
    big.block(2 * m, 3 * m, m, np) = -bhc;
    big.block(3 * m, m, np, m) = -sys.filter.HB * sys.plant.C;
    big.block(3 * m, 3 * m, np, np) = sys.filter.HA;
    big.block(3 * m, dim, np, 1) = sys.filter.HB * r;
    Vector x0 = Vector::Zero(dim + 1);
    x0.segment(0, m) = sys.plant.w0;
    x0.segment(2 * m, m) = sys.plant.w0;
    x0(dim) = 1.0;
    const Vector exact = (big * T).exp() * x0;

    ASSERT_DOUBLE_EQ(tr.t.back(), T);
    const Vector& got = tr.states.back();
    EXPECT_LE((got.head(dim) - exact.head(dim)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_DOUBLE_EQ(got(dim), 0.0);  // alpha_hat never moves when f = 0
}

TEST(Simulation, RichardsonRatioShowsFourthOrder) {
    PlantSpec spec = sine_heat();
    spec.initial_state = {ShapeKind::sine, 0.5};
    const ClosedLoopSystem sys = make_system(spec, 8, 50.0);
    auto final_state = [&](double dt) {
        SimOptions o = constant_reference(0.6, dt, 1.0);
        o.store_states = true;
        o.record_every = static_cast<int>(std::llround(1.0 / dt));
        return run(sys, o).states.back();
    };
    const Vector a = final_state(4e-3), b = final_state(2e-3), c = final_state(1e-3);
    const double ratio = (a - b).norm() / (b - c).norm();
    EXPECT_GT(ratio, 14.0);
    EXPECT_LT(ratio, 18.0);
}

TEST(Simulation, BlowUpGuardStopsRun) {
    PlantSpec spec = sine_heat();
    spec.initial_state = {ShapeKind::sine, 0.5};
    const ClosedLoopSystem sys = make_system(spec, 10, 100.0);
    SimOptions o = constant_reference(0.0, 1e-3, 1.0);
    o.rho_w = 0.01;
    try {
        run(sys, o);
        FAIL() << "expected the guard to trip";
    } catch (const SimulationError& e) {
        EXPECT_NE(std::string(e.what()).find("blow-up guard tripped at t=0.001"), std::string::npos) << e.what();
    }
}

TEST(Simulation, StepAboveStabilityLimitIsRejected) {
    const ClosedLoopSystem sys = make_system(sine_heat(), 40, 100.0);
    EXPECT_THROW(run(sys, constant_reference(0.5, 1e-2, 1.0)), ConfigError);
}

TEST(Simulation, RunsAreBitwiseDeterministic) {
    const ClosedLoopSystem sys = make_system(sine_heat(), 16, 300.0);
    const SimOptions o = constant_reference(0.5, 1e-3, 2.0);
    const SimulationTrace a = run(sys, o), b = run(sys, o);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a.y[k], b.y[k]);
        EXPECT_EQ(a.V[k], b.V[k]);
        EXPECT_EQ(a.alpha_hat[k](0), b.alpha_hat[k](0));
    }
}

TEST(Simulation, RecordingGridIncludesFinalStep) {
    const ClosedLoopSystem sys = make_system(sine_heat(), 10, 100.0);
    SimOptions o = constant_reference(0.5, 1e-3, 1.005);
    o.record_every = 10;
    const SimulationTrace tr = run(sys, o);
    EXPECT_EQ(tr.size(), 102u);  // t = 0, 0.01, ..., 1.0, and the last step
    EXPECT_NEAR(tr.t.back(), 1.005, 1e-12);
}

TEST(Simulation, InitialLyapunovValue) {
    PlantSpec spec = sine_heat();
    const ClosedLoopSystem sys = make_system(spec, 10, 40.0, {-20.0}, -0.3);
    const SimulationTrace tr = run(sys, constant_reference(0.2, 1e-3, 0.1));
    // w_tilde(0) = 0, so V(0) = |alpha_hat0 - alpha|^2 / gamma.
    EXPECT_NEAR(tr.V.front(), 1.1 * 1.1 / 40.0, 1e-15);
    EXPECT_NEAR(tr.V0, tr.V.front(), 1e-15);
    EXPECT_NEAR(tr.rho1, sys.cert.lambda_p * std::pow(2.1, 2), 1e-12);
}

TEST(TraceNorms, DecayingExponential) {
    SimulationTrace tr;
    const double dt = 1e-3;
    for (int k = 0; k <= 30000; ++k) {
        const double t = k * dt;
        tr.t.push_back(t);
        tr.y_tilde.push_back(std::exp(-t));
        tr.norm_w.push_back(2.0 * std::exp(-t));
    }
    const TraceNorms full = trace_norms(tr, std::numeric_limits<double>::infinity());
    EXPECT_NEAR(full.y_tilde_L2_tau * full.y_tilde_L2_tau, 0.5, 1e-6);
    EXPECT_DOUBLE_EQ(full.y_tilde_Linf_tau, 1.0);
    EXPECT_DOUBLE_EQ(full.w_W_tau, 2.0);
    const TraceNorms one = trace_norms(tr, 1.0);
    EXPECT_NEAR(one.y_tilde_L2_tau * one.y_tilde_L2_tau, 0.5 * (1.0 - std::exp(-2.0)), 1e-6);
    EXPECT_THROW(trace_norms(tr, 31.0), ConfigError);
}

TEST(TraceNorms, EmptyTraceIsRejected) {
    EXPECT_THROW(trace_norms(SimulationTrace{}, 1.0), ConfigError);
}

TEST(ReferenceSystem, NeedsStoredStates) {
    const ClosedLoopSystem sys = make_system(sine_heat(), 10, 100.0);
    const SimOptions o = constant_reference(0.5, 1e-3, 0.5);
    const SimulationTrace tr = run(sys, o);
    EXPECT_THROW(run_reference(sys, o, tr), ConfigError);
}

TEST(ReferenceSystem, PerfectEstimateGivesZeroModelFollowingError) {
    // With alpha_hat = alpha frozen, the closed loop and the reference system
    // obey the same equations.
    PlantSpec spec = sine_heat();
    spec.initial_state = {ShapeKind::sine, 0.4};
    ClosedLoopSystem sys = make_system(spec, 10, 0.0, {-20.0}, 0.8);
    SimOptions o = constant_reference(0.5, 1e-3, 2.0);
    o.store_states = true;
    const SimulationTrace tr = run(sys, o);
    const ReferenceTrace ref = run_reference(sys, o, tr);
    ASSERT_EQ(ref.size(), tr.size());
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_LE(ref.norm_e_w[k], 1e-12);
}
