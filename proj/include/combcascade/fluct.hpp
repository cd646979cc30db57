#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "combcascade/lyapunov.hpp"
#include "combcascade/meanfield.hpp"
#include "combcascade/model.hpp"

namespace combcascade {

struct StabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class CovarianceContext { Intracavity, Output };

/// Quadrature noise ports included in an output-covariance calculation.
/// Dropping the intrinsic-loss vacuum is unphysical and exists only as a
/// negative-test diagnostic.
enum class PortNoise { All, OutcouplingOnly };

/// 2N x 2N symmetric real covariance over quadratures (p1,q1,...,pN,qN),
/// vacuum normalized to identity.
struct CovarianceMatrix {
    Eigen::MatrixXd sigma;
    CovarianceContext context = CovarianceContext::Intracavity;
    double analysis_omega = 0.0;  // rad/s, output context only

    int n_modes() const { return static_cast<int>(sigma.rows()) / 2; }
};

/// Linearized quadrature drift about a steady state: dx/dt = M x + noise.
struct DriftModel {
    Eigen::MatrixXd M;          // 2N x 2N
    Eigen::VectorXd gamma, mu;  // per-mode rates
    Eigen::VectorXcd steady;    // steady-state amplitudes used
    Eigen::VectorXcd out_amp;   // mean output amplitude sqrt(2 gamma) a - s

    int n_modes() const { return static_cast<int>(gamma.size()); }
};

/// Quadrature-basis real matrix for d(da)/dt = A da + B conj(da), with
/// interleaved ordering (p1, q1, p2, q2, ...).
inline Eigen::MatrixXd quadrature_matrix(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd M(2 * n, 2 * n);
    for (int p = 0; p < n; ++p) {
        for (int q = 0; q < n; ++q) {
            M(2 * p, 2 * q) = A(p, q).real() + B(p, q).real();
            M(2 * p, 2 * q + 1) = -A(p, q).imag() + B(p, q).imag();
            M(2 * p + 1, 2 * q) = A(p, q).imag() + B(p, q).imag();
            M(2 * p + 1, 2 * q + 1) = A(p, q).real() - B(p, q).real();
        }
    }
    return M;
}

inline DriftModel linearize(const ModeTable& table, const CouplingTable& coupling,
                            const SteadyState& steady) {
    if (!steady.converged)
        throw StabilityError("linearize: steady state not converged (residual " +
                             std::to_string(steady.residual) + ")");
    DriftModel d;
    Eigen::MatrixXcd A, B;
    complex_jacobian(table, coupling, steady.state.a, A, B);
    d.M = quadrature_matrix(A, B);
    d.gamma = table.gamma_vector();
    d.mu = table.mu_vector();
    d.steady = steady.state.a;
    const Eigen::VectorXd s = table.drive_vector();
    d.out_amp.resize(table.n_modes());
    for (int m = 0; m < table.n_modes(); ++m)
        d.out_amp[m] = std::sqrt(2.0 * d.gamma[m]) * steady.state.a[m] - s[m];
    return d;
}

/// Spectral abscissa; negative means a stationary covariance exists.
inline double stability(const DriftModel& drift) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(drift.M, /*computeEigenvectors=*/false);
    return es.eigenvalues().real().maxCoeff();
}

inline Eigen::MatrixXd diffusion_matrix(const DriftModel& drift) {
    const int n = drift.n_modes();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (int m = 0; m < n; ++m) {
        const double d = 2.0 * (drift.gamma[m] + drift.mu[m]);
        D(2 * m, 2 * m) = d;
        D(2 * m + 1, 2 * m + 1) = d;
    }
    return D;
}

inline CovarianceMatrix intracavity_covariance(const DriftModel& drift) {
    const double abscissa = stability(drift);
    if (abscissa >= 0.0)
        throw StabilityError("intracavity_covariance: drift unstable (spectral abscissa " +
                             std::to_string(abscissa) + ")");
    CovarianceMatrix cov;
    cov.context = CovarianceContext::Intracavity;
    cov.sigma = solve_lyapunov(drift.M, diffusion_matrix(drift));
    return cov;
}

/// Symmetrized output spectral covariance at analysis frequency Omega via
/// the input-output relation applied to the outcoupling ports.
inline CovarianceMatrix output_covariance(const DriftModel& drift, double analysis_omega = 0.0,
                                          PortNoise ports = PortNoise::All) {
    const double abscissa = stability(drift);
    if (abscissa >= 0.0)
        throw StabilityError("output_covariance: drift unstable (spectral abscissa " +
                             std::to_string(abscissa) + ")");
    const int n = drift.n_modes();
    const int d = 2 * n;
    Eigen::VectorXd cg(d), cmu(d);
    for (int m = 0; m < n; ++m) {
        cg[2 * m] = cg[2 * m + 1] = std::sqrt(2.0 * drift.gamma[m]);
        cmu[2 * m] = cmu[2 * m + 1] = std::sqrt(2.0 * drift.mu[m]);
    }
    // x(Omega) = (-i Omega I - M)^{-1} [B_g B_mu] xi, x_out = C_g x - xi_g.
    Eigen::MatrixXcd G = -drift.M.cast<std::complex<double>>();
    G.diagonal().array() += std::complex<double>(0.0, -analysis_omega);
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(G);
    const Eigen::MatrixXcd R = lu.solve(Eigen::MatrixXcd::Identity(d, d));
    Eigen::MatrixXcd Tg = cg.asDiagonal() * R * cg.asDiagonal();
    Tg.diagonal().array() -= 1.0;
    Eigen::MatrixXcd S = Tg * Tg.adjoint();
    if (ports == PortNoise::All) {
        const Eigen::MatrixXcd Tm = cg.asDiagonal() * R * cmu.asDiagonal();
        S += Tm * Tm.adjoint();
    }
    CovarianceMatrix cov;
    cov.context = CovarianceContext::Output;
    cov.analysis_omega = analysis_omega;
    cov.sigma = S.real();
    cov.sigma = 0.5 * (cov.sigma + cov.sigma.transpose().eval());
    return cov;
}

}  // namespace combcascade
