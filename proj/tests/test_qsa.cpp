#include <catch2/catch_amalgamated.hpp>

#include "combcascade/metrics.hpp"
#include "combcascade/qsa.hpp"

namespace cc = combcascade;
using C = std::complex<double>;

namespace {

// Small three-envelope cascade stage on a 64-sample grid: idler, hi, mid.
struct Toy {
    cc::PulsePhysics ph;
    cc::PulseState st;
    double dz = 0.0;
    double L = 0.0;
};

Toy make_toy(double betaL, bool dispersion, double gammaL = 0.0) {
    Toy t;
    t.ph.betaL = betaL;
    t.ph.gammaL = gammaL;
    t.ph.xpm = gammaL != 0.0;
    t.ph.normalization = cc::CouplingNormalization::PhotonWeighted;
    const double w_hi = 2.0 * cc::kPi * cc::kLightSpeed / 1.064e-6;
    const double w_T = 2.0 * cc::kPi * 30e12;
    t.ph.carriers = {w_T, w_hi, w_hi - w_T};
    t.ph.pump_envelope = 1;
    t.ph.triples = {{1, 2, 0.0}};
    t.ph.dispersion_enabled = dispersion;
    if (dispersion) t.ph.dispersion = cc::DispersionModel::lithium_niobate_e();

    // Grid below the resolution helpers' limits: build fields directly.
    t.st.grid = {64, 0.64e-12};
    t.st.fields = Eigen::MatrixXcd::Zero(3, 64);
    const double tau = 0.2e-12;
    for (int n = 0; n < 64; ++n) {
        const double tt = (n - 32) * t.st.grid.dt();
        const double env = std::exp(-2.0 * std::log(2.0) * tt * tt / (tau * tau));
        t.st.fields(1, n) = 3000.0 * env;           // pump, sqrt(W)
        t.st.fields(2, n) = 1500.0 * env * C(0.8, 0.6);  // seeded mid
    }
    t.L = 0.01;
    t.dz = 0.5 * cc::suggest_dz(t.ph, t.st);
    return t;
}

}  // namespace

TEST_CASE("jacobian propagation guards") {
    auto toy = make_toy(5e-15, false);
    toy.ph.self_steepening = true;
    CHECK_THROWS_AS(cc::propagate_with_jacobian(toy.ph, toy.st, toy.dz, toy.L), cc::QsaError);
    toy.ph.self_steepening = false;
    CHECK_THROWS_AS(cc::propagate_with_jacobian(toy.ph, toy.st, 100.0 * toy.dz, toy.L),
                    cc::QsaError);
    cc::QsaOptions opt;
    opt.memory_cap_bytes = 1024;  // absurdly small
    CHECK_THROWS_AS(cc::propagate_with_jacobian(toy.ph, toy.st, toy.dz, toy.L, opt),
                    cc::QsaError);
}

TEST_CASE("mean field agrees with the plain split-step integrator") {
    const auto toy = make_toy(5e-15, true);
    const auto plain = cc::propagate(toy.ph, toy.st, toy.dz, toy.L);
    const auto res = cc::propagate_with_jacobian(toy.ph, toy.st, toy.dz, toy.L);
    CHECK((res.out.fields - plain.fields).cwiseAbs().maxCoeff() <
          1e-12 * plain.fields.cwiseAbs().maxCoeff());
    CHECK(res.steps > 10);
}

TEST_CASE("lossless propagation is symplectic and preserves purity") {
    const auto toy = make_toy(5e-15, true, 1e-20);
    const auto res = cc::propagate_with_jacobian(toy.ph, toy.st, toy.dz, toy.L);

    const Eigen::VectorXd lam = cc::photon_scaling(toy.ph, toy.st.grid);
    const Eigen::VectorXd inv = lam.cwiseInverse();
    const Eigen::MatrixXcd Pb = lam.asDiagonal() * res.P * inv.asDiagonal();
    const Eigen::MatrixXcd Qb = lam.asDiagonal() * res.Q * inv.asDiagonal();
    CHECK(cc::bogoliubov_defect(Pb, Qb) < 1e-6);

    const auto js = cc::jacobian_state(toy.ph, res);
    CHECK(cc::symplectic_defect(js.J) < 1e-6);

    // Vacuum in, symplectic map out: the state stays pure.
    const auto cov = cc::output_covariance_ultrafast(js);
    const auto nu = cc::symplectic_eigenvalues(cov.sigma);
    CHECK(nu.front() > 1.0 - 1e-6);
    CHECK(nu.back() < 1.0 + 1e-6);

    // Both covariance routes agree.
    const auto cov2 = cc::output_covariance_ultrafast(toy.ph, res);
    CHECK((cov.sigma - cov2.sigma).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("accumulated jacobian matches finite differences of the flow") {
    const auto toy = make_toy(5e-15, true);
    const auto res = cc::propagate_with_jacobian(toy.ph, toy.st, toy.dz, toy.L);

    const int M = toy.st.grid.samples;
    const double eps = 1e-3;  // sqrt(W); fields are ~3e3
    for (const auto& [env, n, re] :
         {std::tuple<int, int, bool>{1, 32, true}, {2, 30, false}, {1, 20, false}, {0, 32, true}}) {
        const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(env) * M + n;
        const C d_in = re ? C(eps, 0.0) : C(0.0, eps);

        cc::PulseState plus = toy.st, minus = toy.st;
        plus.fields(env, n) += d_in;
        minus.fields(env, n) -= d_in;
        const auto fp = cc::propagate(toy.ph, plus, toy.dz, toy.L);
        const auto fm = cc::propagate(toy.ph, minus, toy.dz, toy.L);
        const Eigen::MatrixXcd fd = (fp.fields - fm.fields) / (2.0 * eps);

        // Linear map prediction for the same perturbation direction.
        const C u = d_in / eps;
        double worst = 0.0, scale = 0.0;
        for (int e = 0; e < 3; ++e) {
            for (int m = 0; m < M; ++m) {
                const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(e) * M + m;
                const C lin = res.P(q, r) * u + res.Q(q, r) * std::conj(u);
                worst = std::max(worst, std::abs(lin - fd(e, m)));
                scale = std::max(scale, std::abs(fd(e, m)));
            }
        }
        CHECK(worst < 1e-4 * std::max(scale, 1.0));
    }
}

TEST_CASE("explicit vector propagation matches the composed matrices") {
    const auto toy = make_toy(5e-15, true);
    const auto res = cc::propagate_with_jacobian(toy.ph, toy.st, toy.dz, toy.L);

    const std::ptrdiff_t dim = 3 * 64;
    Eigen::MatrixXcd deltas = Eigen::MatrixXcd::Zero(dim, 3);
    deltas(96, 0) = C(1.0, 0.0);   // pump center sample
    deltas(160, 1) = C(0.0, 1.0);  // mid envelope
    deltas(32, 2) = C(0.7, -0.7);  // idler
    const Eigen::MatrixXcd out = cc::propagate_linearized(toy.ph, toy.st, toy.dz, toy.L, deltas);
    for (int c = 0; c < 3; ++c) {
        const Eigen::VectorXcd expect =
            res.P * deltas.col(c) + res.Q * deltas.col(c).conjugate();
        CHECK((out.col(c) - expect).cwiseAbs().maxCoeff() < 1e-10 * expect.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("bin specs enumerate centered bins") {
    cc::BinSpec spec{cc::MapDomain::Time, 0.75e-12, 0.012e-12};
    CHECK(spec.side_count() == 62);
    CHECK(spec.count() == 125);
    cc::BinSpec bad{cc::MapDomain::Time, 0.0, 0.0};
    const auto toy = make_toy(0.0, false);
    cc::UltrafastCovariance cov;
    cov.sigma = Eigen::MatrixXd::Identity(2 * 192, 2 * 192);
    cov.envelopes = 3;
    cov.samples = 64;
    CHECK_THROWS_AS(cc::binned_intensity_map(toy.ph, toy.st, cov, bad), cc::QsaError);
}

TEST_CASE("coherent light sits at the 0 dB baseline in both domains") {
    // beta = 0: free propagation, vacuum-preserving; every defined bin pair
    // of uncorrelated coherent light has ratio 1 (0 dB).
    const auto toy = make_toy(0.0, true);
    const auto res = cc::propagate_with_jacobian(toy.ph, toy.st, 0.005, toy.L);
    const auto cov = cc::output_covariance_ultrafast(toy.ph, res);
    CHECK((cov.sigma - Eigen::MatrixXd::Identity(cov.sigma.rows(), cov.sigma.cols()))
              .cwiseAbs()
              .maxCoeff() < 1e-10);

    for (auto domain : {cc::MapDomain::Time, cc::MapDomain::Frequency}) {
        cc::BinSpec spec;
        spec.domain = domain;
        if (domain == cc::MapDomain::Time) {
            spec.half_range = 0.3e-12;
            spec.width = 0.02e-12;
        } else {
            spec.half_range = 30e12;
            spec.width = 2e12;
        }
        const auto map = cc::binned_intensity_map(toy.ph, res.out, cov, spec);
        double total = 0.0;
        int defined = 0;
        for (int a = 0; a < map.n_bins(); ++a) {
            total += map.mean_photons[a];
            if (!map.defined[a]) continue;
            ++defined;
            CHECK(map.self_noise_db[a] == Catch::Approx(0.0).margin(1e-8));
            for (int b = a + 1; b < map.n_bins(); ++b)
                if (map.defined[b])
                    CHECK(map.ratio(a, b) == Catch::Approx(1.0).margin(1e-8));
        }
        CHECK(defined > 10);
        // Photon bookkeeping: the bins cover most (not all) of the grid, so
        // the binned total approaches the ledger from below.
        const auto ledger = cc::photon_ledger(toy.ph, res.out);
        double ledger_total = 0.0;
        for (double v : ledger.per_envelope) ledger_total += v;
        CHECK(total <= ledger_total * (1.0 + 1e-9));
        CHECK(total == Catch::Approx(ledger_total).epsilon(0.05));
    }
}

TEST_CASE("the driven cascade produces sub-shot-noise bin pairs") {
    // Dispersion off: walk-off between the far-infrared idler and the pump
    // would sweep the twin photons out of this short window.
    const auto toy = make_toy(2e-15, false);
    const auto res = cc::propagate_with_jacobian(toy.ph, toy.st, toy.dz, toy.L);
    const auto cov = cc::output_covariance_ultrafast(toy.ph, res);

    cc::BinSpec spec{cc::MapDomain::Time, 0.3e-12, 0.02e-12};
    const auto map = cc::binned_intensity_map(toy.ph, res.out, cov, spec);

    // Best inter-envelope pair must be correlated below shot noise.
    double best = std::numeric_limits<double>::infinity();
    const int per_env = spec.count();
    for (int a = 0; a < map.n_bins(); ++a) {
        if (!map.defined[a]) continue;
        for (int b = a + 1; b < map.n_bins(); ++b) {
            if (!map.defined[b]) continue;
            if (map.bins[a].envelope == map.bins[b].envelope) continue;
            best = std::min(best, map.ratio(a, b));
        }
    }
    CHECK(best < 0.5);  // well below shot noise
    CHECK(map.n_bins() == 3 * per_env);
}
