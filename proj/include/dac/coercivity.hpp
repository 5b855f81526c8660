#pragma once

#include "dac/controller.hpp"
#include "dac/error.hpp"
#include "dac/lyapunov.hpp"
#include "dac/spatial_model.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace dac {

struct CoercivityRow {
    int n = 0;
    double coercivity_margin = 0.0;
    double lambda_p = 0.0;
    double residual = 0.0;
    int q_branch = 0;
};

struct CoercivityStudy {
    std::vector<CoercivityRow> rows;
    std::optional<double> slope;  // log-log slope of margin vs N

    bool strictly_decreasing() const {
        for (std::size_t k = 1; k < rows.size(); ++k)
            if (!(rows[k].coercivity_margin < rows[k - 1].coercivity_margin)) return false;
        return rows.size() >= 2;
    }
};

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw ConfigError("analysis", "slope fit needs at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw ConfigError("analysis", "log-log fit needs positive data");
        mx += std::log(x[k]);
        my += std::log(y[k]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = std::log(x[k]) - mx;
        sxy += dx * (std::log(y[k]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

/// Certificate margins for the same physical plant over a list of grids.
/// `force_branch` = 1 or 2 overrides the automatic Q selection.
inline CoercivityStudy coercivity_study(const PlantSpec& spec, GainStrategy strategy, const std::vector<int>& n_list,
                                        int force_branch = 0) {
    if (n_list.empty()) throw ConfigError("lyapunov_lab", "N list is empty");
    CoercivityStudy study;
    for (int n : n_list) {
        const PlantModel plant = assemble_plant(spec, n);
        DesignOptions opts;
        opts.fit_envelope = false;
        const ClosedLoopRealization real = design_K(plant, strategy, opts);
        const Vector& mass = plant.space.weights();
        QSelection sel = select_Q(real.Am, mass);
        if (force_branch == 1) {
            const Matrix w = mass.asDiagonal();
            sel.Q = symmetrize(-(real.Am.transpose() * w + w * real.Am));
            sel.branch = 1;
        } else if (force_branch == 2) {
            sel.Q = mass.asDiagonal();
            sel.branch = 2;
        }
        LyapunovCertificate cert = solve_lyapunov(real.Am, sel.Q, mass, n);
        study.rows.push_back({n, cert.coercivity_margin, cert.lambda_p, cert.residual, sel.branch});
    }
    if (study.rows.size() >= 2) {
        std::vector<double> x, y;
        for (const auto& r : study.rows) {
            x.push_back(r.n);
            y.push_back(r.coercivity_margin);
        }
        study.slope = loglog_slope(x, y);
    }
    return study;
}

/// Lyapunov certificate carried by a KYP triple: the dissipation is Q + F^*F.
inline LyapunovCertificate certificate_from_kyp(const KypCertificate& kyp, const Matrix& am, const Vector& mass,
                                                int grid_n = 0) {
    const Eigen::Index n = am.rows();
    const Matrix ftf = kyp.F.size() == 0 ? Matrix::Zero(n, n) : Matrix(kyp.F.transpose() * kyp.F);
    LyapunovCertificate cert;
    cert.P = kyp.P;
    cert.Q = symmetrize(kyp.Q + ftf);
    cert.mass = mass;
    cert.residual = lyapunov_residual(am, cert.P, cert.Q);
    cert.lambda_p = pencil_eigenvalues(kyp.Q, kyp.P)(0);
    cert.coercivity_margin = min_weighted_eigenvalue(kyp.P, mass);
    cert.grid_n = grid_n;
    if (!(cert.lambda_p > 0.0)) throw DesignError("lyapunov_lab", "KYP certificate has no positive lambda_p");
    return cert;
}

}  // namespace dac
