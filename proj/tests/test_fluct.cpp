#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "combcascade/fluct.hpp"

namespace cc = combcascade;

namespace {

// Three-mode parametric oscillator with equal idler/seed outcoupling rates
// (idler Q scaled by the frequency ratio), which makes the two-mode
// squeezing spectra single-parameter closed forms.
cc::CombSystemSpec opo_equal_gamma(double pump_w) {
    cc::CombSystemSpec s;
    s.i_lo = 0;
    s.i_hi = 1;
    s.J = 1;
    s.lambda0 = 465e-9;
    s.omegaT0 = 2.0 * cc::kPi * 73.7e12;
    s.omega_m = 0.0;
    s.beta0 = 3e-4;
    s.crystal_length = 1e-3;
    s.dispersion = cc::DispersionModel::constant(1.0);
    s.fill_uniform(5e6, std::numeric_limits<double>::infinity(), pump_w, 0.0);
    const double w_s = s.subcomb_omega(1, 0);
    s.Q_out_T = 5e6 * (s.omegaT0 / w_s);  // gamma_T == gamma_s
    return s;
}

struct OpoRates {
    double gamma = 0.0;  // idler/seed rate
    double eps = 0.0;    // parametric gain beta |a_pump|
};

OpoRates opo_rates(const cc::CombSystemSpec& spec, const cc::ModeTable& t,
                   const cc::CouplingTable& ct) {
    OpoRates r;
    r.gamma = t.modes[t.idler_index(0)].gamma;
    const auto& pump = t.modes[t.subcomb_index(0, 0)];
    const double a_pump = std::sqrt(2.0 * pump.gamma) * pump.drive_amp / pump.gamma;
    r.eps = ct.beta_minus(t, 1, 0, 0) * a_pump;
    return r;
}

// Joint-quadrature variance x^T sigma x for a normalized direction.
double joint_variance(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& dir) {
    return dir.dot(sigma * dir) / dir.squaredNorm();
}

}  // namespace

TEST_CASE("lyapunov solver agrees with a dense Kronecker solve") {
    std::mt19937 rng(3);
    std::normal_distribution<double> dist;
    const int d = 7;
    Eigen::MatrixXd M(d, d), D0(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            M(i, j) = dist(rng);
            D0(i, j) = dist(rng);
        }
    M -= 5.0 * Eigen::MatrixXd::Identity(d, d);  // make it stable
    const Eigen::MatrixXd D = D0 * D0.transpose();

    const Eigen::MatrixXd sigma = cc::solve_lyapunov(M, D);
    // Residual of the defining equation.
    CHECK((M * sigma + sigma * M.transpose() + D).norm() < 1e-10 * D.norm());

    // Independent route: vectorize, solve (I (x) M + M (x) I) vec(s) = -vec(D).
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d * d, d * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                K(i + d * j, k + d * j) += M(i, k);   // M sigma
                K(i + d * j, i + d * k) += M(j, k);   // sigma M^T
            }
    Eigen::VectorXd vecD(d * d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) vecD[i + d * j] = D(i, j);
    const Eigen::VectorXd vecS = K.partialPivLu().solve(-vecD);
    Eigen::MatrixXd sigma_ref(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) sigma_ref(i, j) = vecS[i + d * j];
    CHECK((sigma - sigma_ref).norm() < 1e-9 * sigma_ref.norm());
}

TEST_CASE("quadrature conversion of detuning and squeezing generators") {
    // A = i d (rotation) maps to [[0,-d],[d,0]]; B = e (squeeze) to diag(e,-e).
    Eigen::MatrixXcd A(1, 1), B(1, 1);
    A << cc::Complex(0.0, 2.5);
    B << cc::Complex(0.0, 0.0);
    Eigen::MatrixXd M = cc::quadrature_matrix(A, B);
    CHECK(M(0, 0) == 0.0);
    CHECK(M(0, 1) == -2.5);
    CHECK(M(1, 0) == 2.5);
    CHECK(M(1, 1) == 0.0);

    A << cc::Complex(0.0, 0.0);
    B << cc::Complex(0.7, 0.0);
    M = cc::quadrature_matrix(A, B);
    CHECK(M(0, 0) == 0.7);
    CHECK(M(1, 1) == -0.7);
    CHECK(M(0, 1) == 0.0);
    CHECK(M(1, 0) == 0.0);
}

TEST_CASE("uncoupled driven system sits exactly at the shot-noise level") {
    auto spec = opo_equal_gamma(500.0);
    spec.beta0 = 0.0;
    const auto table = cc::build_mode_table(spec);
    const auto ct = cc::build_coupling_table(spec, table);
    const auto ss = cc::steady_state(table, ct);
    REQUIRE(ss.converged);
    const auto drift = cc::linearize(table, ct, ss);
    CHECK(cc::stability(drift) < 0.0);

    const int d = 2 * table.n_modes();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
    CHECK((cc::intracavity_covariance(drift).sigma - I).cwiseAbs().maxCoeff() < 1e-10);
    for (double omega : {0.0, 1e8, 1e9, 1e10})
        CHECK((cc::output_covariance(drift, omega).sigma - I).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("below-threshold spectra match the two-mode squeezing closed form") {
    const auto spec = opo_equal_gamma(40.0);  // well below threshold
    const auto table = cc::build_mode_table(spec);
    const auto ct = cc::build_coupling_table(spec, table);
    const auto ss = cc::steady_state(table, ct);
    REQUIRE(ss.converged);
    const auto r = opo_rates(spec, table, ct);
    REQUIRE(r.eps < r.gamma);

    const auto drift = cc::linearize(table, ct, ss);
    const int iT = table.idler_index(0);
    const int is = table.subcomb_index(1, 0);
    const int n = table.n_modes();

    // EPR pair: (p_T - p_s) and (q_T + q_s) commute and are both squeezed;
    // their conjugates (p_T + p_s) and (q_T - q_s) are antisqueezed.
    Eigen::VectorXd pm = Eigen::VectorXd::Zero(2 * n), qp = Eigen::VectorXd::Zero(2 * n);
    Eigen::VectorXd pp = Eigen::VectorXd::Zero(2 * n), qm = Eigen::VectorXd::Zero(2 * n);
    pm[2 * iT] = 1.0;
    pm[2 * is] = -1.0;
    qp[2 * iT + 1] = 1.0;
    qp[2 * is + 1] = 1.0;
    pp[2 * iT] = 1.0;
    pp[2 * is] = 1.0;
    qm[2 * iT + 1] = 1.0;
    qm[2 * is + 1] = -1.0;

    SECTION("intracavity variances") {
        const auto cov = cc::intracavity_covariance(drift);
        CHECK(joint_variance(cov.sigma, pm) ==
              Catch::Approx(r.gamma / (r.gamma + r.eps)).epsilon(1e-6));
        CHECK(joint_variance(cov.sigma, qp) ==
              Catch::Approx(r.gamma / (r.gamma + r.eps)).epsilon(1e-6));
        CHECK(joint_variance(cov.sigma, pp) ==
              Catch::Approx(r.gamma / (r.gamma - r.eps)).epsilon(1e-6));
        CHECK(joint_variance(cov.sigma, qm) ==
              Catch::Approx(r.gamma / (r.gamma - r.eps)).epsilon(1e-6));
    }

    SECTION("output spectra at several analysis frequencies") {
        for (double omega : {0.0, 0.5 * r.gamma, r.gamma, 3.0 * r.gamma}) {
            const auto cov = cc::output_covariance(drift, omega);
            const double s_minus = (std::pow(r.gamma - r.eps, 2) + omega * omega) /
                                   (std::pow(r.gamma + r.eps, 2) + omega * omega);
            const double s_plus = (std::pow(r.gamma + r.eps, 2) + omega * omega) /
                                  (std::pow(r.gamma - r.eps, 2) + omega * omega);
            CHECK(joint_variance(cov.sigma, pm) == Catch::Approx(s_minus).epsilon(1e-6));
            CHECK(joint_variance(cov.sigma, qp) == Catch::Approx(s_minus).epsilon(1e-6));
            CHECK(joint_variance(cov.sigma, pp) == Catch::Approx(s_plus).epsilon(1e-6));
            CHECK(joint_variance(cov.sigma, qm) == Catch::Approx(s_plus).epsilon(1e-6));
        }
    }
}

TEST_CASE("dropping the intrinsic-loss port understates the noise") {
    auto spec = opo_equal_gamma(500.0);
    spec.beta0 = 0.0;
    spec.fill_uniform(5e6, 2e6, 500.0, 0.0);  // lossy: finite Q_int
    const auto table = cc::build_mode_table(spec);
    const auto ct = cc::build_coupling_table(spec, table);
    const auto ss = cc::steady_state(table, ct);
    REQUIRE(ss.converged);
    const auto drift = cc::linearize(table, ct, ss);

    const auto all = cc::output_covariance(drift, 0.0, cc::PortNoise::All);
    const auto part = cc::output_covariance(drift, 0.0, cc::PortNoise::OutcouplingOnly);
    const int m = 2 * table.subcomb_index(0, 0);
    // Full port accounting keeps an uncoupled mode at shot noise; ignoring
    // the intrinsic-loss port fakes squeezing on it.
    CHECK(all.sigma(m, m) == Catch::Approx(1.0).margin(1e-10));
    CHECK(part.sigma(m, m) < 1.0 - 1e-3);
}

TEST_CASE("guards: unconverged states and unstable drifts are refused") {
    const auto spec = opo_equal_gamma(40.0);
    const auto table = cc::build_mode_table(spec);
    const auto ct = cc::build_coupling_table(spec, table);

    cc::SteadyState bad;
    bad.converged = false;
    CHECK_THROWS_AS(cc::linearize(table, ct, bad), cc::StabilityError);

    cc::DriftModel unstable;
    unstable.M = Eigen::MatrixXd::Identity(2, 2);
    unstable.gamma = Eigen::VectorXd::Constant(1, 1.0);
    unstable.mu = Eigen::VectorXd::Zero(1);
    CHECK_THROWS_AS(cc::intracavity_covariance(unstable), cc::StabilityError);
    CHECK_THROWS_AS(cc::output_covariance(unstable), cc::StabilityError);
}
