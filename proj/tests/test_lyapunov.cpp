#include "dac/coercivity.hpp"
#include "dac/lyapunov.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dac;

namespace {

// Brute-force oracle: vec(A^T P + P A) = (I kron A^T + A^T kron I) vec(P).
Matrix kronecker_lyapunov(const Matrix& a, const Matrix& q) {
    const Eigen::Index n = a.rows();
    const Matrix id = Matrix::Identity(n, n);
    Matrix k = Matrix::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            k.block(i * n, j * n, n, n) += id(i, j) * a.transpose();
            k.block(i * n, j * n, n, n) += a(j, i) * id;
        }
    const Vector rhs = -Eigen::Map<const Vector>(q.data(), n * n);
    const Vector x = k.fullPivLu().solve(rhs);
    return Eigen::Map<const Matrix>(x.data(), n, n);
}

Matrix random_stable(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> d;
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = d(rng);
    const double shift = spectral_abscissa(a) + 0.5;
    return a - shift * Matrix::Identity(n, n);
}

PlantModel heat(int n) {
    PlantSpec s;
    return assemble_plant(s, n);
}

}  // namespace

TEST(Lyapunov, ScalarClosedForm) {
    Matrix a(1, 1), q(1, 1);
    a << -1.0;
    q << 2.0;
    const LyapunovCertificate c = solve_lyapunov(a, q, Vector::Ones(1));
    EXPECT_NEAR(c.P(0, 0), 1.0, 1e-15);
    EXPECT_LE(c.residual, 1e-15);
    EXPECT_NEAR(c.lambda_p, 2.0, 1e-14);
}

TEST(Lyapunov, TwoByTwoMatchesKroneckerOracle) {
    Matrix a(2, 2);
    a << -1, 1, 0, -2;
    const Matrix q = Matrix::Identity(2, 2);
    const LyapunovCertificate c = solve_lyapunov(a, q, Vector::Ones(2));
    EXPECT_LE((c.P - kronecker_lyapunov(a, q)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lyapunov, RandomSystemsMatchKroneckerOracle) {
    std::mt19937_64 rng(7);
    for (int n : {3, 8, 15, 25, 40}) {
        const Matrix a = random_stable(n, rng);
        Matrix q = Matrix::Random(n, n);
        q = q * q.transpose() + Matrix::Identity(n, n);
        const Matrix p = solve_lyapunov_equation(a, q);
        const Matrix oracle = kronecker_lyapunov(a, q);
        EXPECT_LE((p - oracle).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, oracle.cwiseAbs().maxCoeff())) << n;
        EXPECT_LE(lyapunov_residual(a, p, q), 1e-8);
    }
}

TEST(Lyapunov, RefusesNonHurwitz) {
    EXPECT_THROW(solve_lyapunov(Matrix::Identity(3, 3), Matrix::Identity(3, 3), Vector::Ones(3)), DesignError);
    EXPECT_THROW(select_Q(Matrix::Identity(3, 3), Vector::Ones(3)), DesignError);
}

TEST(Lyapunov, LambdaPIsMaximal) {
    const PlantModel p = heat(30);
    Matrix q = p.space.mass();
    const LyapunovCertificate c = solve_lyapunov(p.A, q, p.space.weights(), 30);
    auto min_eig = [](const Matrix& s) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    };
    EXPECT_GE(min_eig(c.Q - c.lambda_p * c.P), -1e-8);
    EXPECT_LT(min_eig(c.Q - (c.lambda_p + 1e-3) * c.P), 0.0);
}

TEST(SelectQ, SymmetricCaseIsBranchOne) {
    const Matrix a = -Matrix::Identity(3, 3);
    const QSelection s = select_Q(a, Vector::Ones(3));
    EXPECT_EQ(s.branch, 1);
    EXPECT_LE((s.Q - 2.0 * Matrix::Identity(3, 3)).norm(), 1e-15);
}

TEST(SelectQ, HeatBranchOneGivesIdentityP) {
    const PlantModel p = heat(40);
    const LyapunovCertificate c = certify(p.A, p.space.weights(), 40);
    EXPECT_EQ(c.q_branch, 1);
    // Gram form of the Z identity is the mass matrix.
    EXPECT_LE((c.P - p.space.mass()).cwiseAbs().maxCoeff(), 1e-10 * p.space.weights().maxCoeff());
    EXPECT_NEAR(c.coercivity_margin, 1.0, 1e-9);
    EXPECT_LE(c.residual, 1e-8);
}

TEST(SelectQ, TransportDominatedFallsBackToIdentity) {
    PlantSpec s;
    s.kind = PlantKind::advection_diffusion;
    s.velocity = 1.0;
    s.viscosity = 0.001;
    for (int n : {25, 50, 100}) {
        const PlantModel p = assemble_plant(s, n);
        const QSelection q = select_Q(p.A, p.space.weights());
        EXPECT_EQ(q.branch, 2) << n;
        EXPECT_LE((q.Q - p.space.mass()).norm(), 1e-15);
    }
}

TEST(Coercivity, HeatMarginIsConstant) {
    PlantSpec s;
    const CoercivityStudy st = coercivity_study(s, GainStrategy::zero, {25, 50, 100});
    ASSERT_EQ(st.rows.size(), 3u);
    for (const auto& r : st.rows) {
        EXPECT_EQ(r.q_branch, 1);
        EXPECT_NEAR(r.coercivity_margin, 1.0, 1e-8);
    }
    ASSERT_TRUE(st.slope.has_value());
    EXPECT_NEAR(*st.slope, 0.0, 1e-6);
}

TEST(Coercivity, AdvectionMarginDecays) {
    PlantSpec s;
    s.kind = PlantKind::advection_diffusion;
    s.viscosity = 0.01;
    const CoercivityStudy st = coercivity_study(s, GainStrategy::zero, {25, 50, 100, 200}, 2);
    EXPECT_TRUE(st.strictly_decreasing());
    ASSERT_TRUE(st.slope.has_value());
    // Pinned regression fixture from the first run of this study.
    EXPECT_NEAR(*st.slope, -1.5605, 2e-3);
    EXPECT_NEAR(st.rows[0].coercivity_margin, 0.0063483, 1e-6);
    EXPECT_NEAR(st.rows[3].coercivity_margin, 0.00024778, 1e-7);
}

TEST(Coercivity, SingleGridHasNoSlope) {
    PlantSpec s;
    const CoercivityStudy st = coercivity_study(s, GainStrategy::zero, {30});
    EXPECT_EQ(st.rows.size(), 1u);
    EXPECT_FALSE(st.slope.has_value());
    EXPECT_THROW(coercivity_study(s, GainStrategy::zero, {}), ConfigError);
}

TEST(Kyp, ScalarSprSystem) {
    // a = -1, b = c = 1: P = 1 solves 2aP = -Q with Q = 2, E = C/P = 1, F = 0.
    Matrix a(1, 1);
    a << -1.0;
    RowVector c(1);
    c << 1.0;
    KypCertificate k;
    k.P = Matrix::Constant(1, 1, 1.0);
    k.Q = Matrix::Constant(1, 1, 2.0);
    k.F = Matrix::Zero(0, 1);
    k.E = RowVector::Constant(1, 1.0);
    k.eps_Q = 1.5;
    const KypReport r = check_kyp(a, c, k, Vector::Ones(1));
    EXPECT_TRUE(r.passed());
    EXPECT_NEAR(r.measured_eps_Q, 2.0, 1e-15);

    KypCertificate bad = k;
    bad.E(0) += 1e-2;
    const KypReport rb = check_kyp(a, c, bad, Vector::Ones(1));
    EXPECT_FALSE(rb.output_ok);
    EXPECT_TRUE(rb.lyap_ok);
    EXPECT_FALSE(rb.passed());
}

TEST(Kyp, NonzeroFactorEntersResidual) {
    // a = -1, F = 1: 2aP = -F^2 - Q with P = 1 needs Q = 1.
    Matrix a(1, 1);
    a << -1.0;
    KypCertificate k;
    k.P = Matrix::Constant(1, 1, 1.0);
    k.Q = Matrix::Constant(1, 1, 1.0);
    k.F = Matrix::Constant(1, 1, 1.0);
    k.E = RowVector::Constant(1, 1.0);
    k.eps_Q = 1.0;
    EXPECT_TRUE(check_kyp(a, RowVector::Constant(1, 1.0), k, Vector::Ones(1)).passed());
    k.Q(0, 0) = 2.0;
    EXPECT_FALSE(check_kyp(a, RowVector::Constant(1, 1.0), k, Vector::Ones(1)).lyap_ok);
}

TEST(Kyp, SprBenchmarkPassesOnEveryGrid) {
    for (int n : {25, 50, 100}) {
        const SprBenchmark b = construct_spr_benchmark(build_grid(1.0, n));
        const KypReport r = check_kyp(b.plant.A, b.plant.C, b.kyp, b.plant.space.weights());
        EXPECT_TRUE(r.passed()) << n;
        EXPECT_LE(r.residual_lyap, 1e-8);
        EXPECT_LE(r.residual_output, 1e-8);
    }
}

TEST(Kyp, BranchOneHeatWithCollocatedOutputPasses) {
    PlantSpec s;
    s.output_shape = s.input_shape;
    const PlantModel p = assemble_plant(s, 40);
    const LyapunovCertificate c = certify(p.A, p.space.weights(), 40);
    KypCertificate k{c.P, c.Q, Matrix::Zero(0, 40), p.C * c.P.inverse(), 0.5 * c.lambda_p, 0, 0};
    EXPECT_TRUE(check_kyp(p.A, p.C, k, p.space.weights()).passed());
}

TEST(Kyp, TamperedParameterIsRejected) {
    PlantSpec s;
    s.alpha_true = {1.5};
    EXPECT_THROW(construct_spr_benchmark(build_grid(1.0, 20), s), ConfigError);
}

TEST(Kyp, CertificateFromKypKeepsP) {
    const SprBenchmark b = construct_spr_benchmark(build_grid(1.0, 30));
    const LyapunovCertificate c = certificate_from_kyp(b.kyp, b.plant.A, b.plant.space.weights(), 30);
    EXPECT_LE((c.P - b.kyp.P).norm(), 0.0);
    EXPECT_LE(c.residual, 1e-8);
    EXPECT_GT(c.lambda_p, 0.0);
}
