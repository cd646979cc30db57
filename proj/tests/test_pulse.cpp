#include <catch2/catch_amalgamated.hpp>

#include "combcascade/model.hpp"
#include "combcascade/pulse.hpp"

namespace cc = combcascade;
using C = std::complex<double>;

namespace {

// Single-envelope Kerr-only physics with the bare (uniform) coefficient.
cc::PulsePhysics kerr_only(double gammaL) {
    cc::PulsePhysics ph;
    ph.gammaL = gammaL;
    ph.normalization = cc::CouplingNormalization::Uniform;
    ph.carriers = {2.0 * cc::kPi * cc::kLightSpeed / 1.064e-6};
    ph.pump_envelope = 0;
    return ph;
}

// Three-envelope difference-frequency stage: idler, hi, mid.
cc::PulsePhysics dfg_stage(double betaL, double dk) {
    cc::PulsePhysics ph;
    ph.betaL = betaL;
    ph.normalization = cc::CouplingNormalization::Uniform;
    const double w_hi = 2.0 * cc::kPi * cc::kLightSpeed / 1.064e-6;
    const double w_T = 2.0 * cc::kPi * 30e12;
    ph.carriers = {w_T, w_hi, w_hi - w_T};
    ph.pump_envelope = 1;
    ph.triples = {{1, 2, dk}};
    return ph;
}

cc::PulseState flat_state(const cc::PulsePhysics& ph, const cc::PulseGrid& grid,
                          const std::vector<C>& levels) {
    cc::PulseState st;
    st.grid = grid;
    st.fields = Eigen::MatrixXcd::Zero(ph.n_envelopes(), grid.samples);
    for (int e = 0; e < ph.n_envelopes(); ++e) st.fields.row(e).setConstant(levels[e]);
    return st;
}

}  // namespace

TEST_CASE("pulse grid and physics validation") {
    CHECK_THROWS_AS((cc::PulseGrid{100, 1e-12}.validate()), cc::GridError);
    CHECK_THROWS_AS((cc::PulseGrid{256, 0.0}.validate()), cc::GridError);
    CHECK(cc::PulseGrid{256, 2.56e-12}.dt() == Catch::Approx(1e-14));

    auto ph = dfg_stage(1e-7, 0.0);
    const cc::PulseGrid grid{256, 2.5e-12};
    CHECK_NOTHROW(ph.validate(grid));
    ph.triples[0].mid = 0;  // idler cannot be a chi2 subcomb partner
    CHECK_THROWS_AS(ph.validate(grid), cc::GridError);
}

TEST_CASE("initial pulses have the advertised peak power and energy") {
    const auto ph = dfg_stage(0.0, 0.0);
    const cc::PulseGrid grid{1024, 4e-12};
    cc::InitialPulseParams p;
    p.avg_power = 1.0;
    p.seed_avg_power = 0.25;
    p.rep_rate = 200e3;
    p.duration_fwhm = 210e-15;
    const auto st = cc::build_initial_pulses(ph, grid, p);

    // Frozen: 0.94 (P_avg / f_rep) / tau for 1 W, 200 kHz, 210 fs.
    const double peak = st.fields.row(1).cwiseAbs2().maxCoeff();
    CHECK(peak == Catch::Approx(22380952.380952381).epsilon(1e-12));
    // Seed scales by its average power; idler starts dark.
    CHECK(st.fields.row(2).cwiseAbs2().maxCoeff() == Catch::Approx(0.25 * peak).epsilon(1e-12));
    CHECK(st.fields.row(0).cwiseAbs().maxCoeff() == 0.0);
    // The Gaussian has the requested FWHM in power.
    const int n_half = static_cast<int>(std::round(0.5 * p.duration_fwhm / grid.dt()));
    const double half = std::norm(st.fields(1, grid.samples / 2 + n_half));
    CHECK(half == Catch::Approx(0.5 * peak).epsilon(1e-2));  // nearest-sample offset

    // Resolution invariants are enforced.
    CHECK_THROWS_AS(cc::build_initial_pulses(ph, cc::PulseGrid{64, 4e-12}, p), cc::GridError);
    CHECK_THROWS_AS(cc::build_initial_pulses(ph, cc::PulseGrid{1024, 1e-12}, p), cc::GridError);
}

TEST_CASE("self-phase modulation matches the closed form to 1e-8") {
    const double g = 2e-3;  // W^-1 m^-1
    const auto ph = kerr_only(g);
    const cc::PulseGrid grid{64, 1e-12};
    // A time-structured input: each sample rotates by its own power.
    cc::PulseState st = flat_state(ph, grid, {C(0.0, 0.0)});
    for (int n = 0; n < grid.samples; ++n)
        st.fields(0, n) = std::sqrt(100.0 + 50.0 * std::sin(0.3 * n)) * std::exp(C(0.0, 0.1 * n));

    const double L = 1.0;
    const double dz = 0.2 * cc::suggest_dz(ph, st);
    const auto out = cc::propagate(ph, st, dz, L);
    for (int n = 0; n < grid.samples; ++n) {
        const C expect = st.fields(0, n) * std::exp(C(0.0, g * std::norm(st.fields(0, n)) * L));
        CHECK(std::abs(out.fields(0, n) - expect) < 1e-8 * std::abs(expect));
    }
}

TEST_CASE("undepleted difference-frequency growth follows the sinc curve") {
    const double betaL = 1e-7;  // keep conversion small
    const cc::PulseGrid grid{32, 1e-12};
    const double L = 1.0;
    const double a_hi = 30.0, a_mid = 20.0;  // sqrt(W)

    for (double dk : {0.0, 1.5 * cc::kPi / L, 4.0 / L}) {
        const auto ph = dfg_stage(betaL, dk);
        const auto st = flat_state(ph, grid, {C(0.0, 0.0), C(a_hi, 0.0), C(a_mid, 0.0)});
        const double dz = std::min(0.5 * cc::suggest_dz(ph, st), L / 64.0);
        const auto out = cc::propagate(ph, st, dz, L);
        const double expect =
            betaL * a_hi * a_mid * L * std::abs(cc::sinc(dk * L / 2.0));
        CHECK(std::abs(out.fields(0, 0)) == Catch::Approx(expect).epsilon(0.02));
    }
}

TEST_CASE("photon ledgers are conserved by the chi2 cascade") {
    // Photon-weighted normalization, no Kerr: Manley-Rowe holds exactly.
    auto ph = cc::make_comb_pulse_physics(0, 2, 1.064e-6, 2.0 * cc::kPi * 30e12, 5e-15, 0.0,
                                          cc::DispersionModel::constant(1.0), false);
    const cc::PulseGrid grid{256, 3.2e-12};
    cc::InitialPulseParams p;
    p.avg_power = 1.0;
    p.seed_avg_power = 0.5;
    p.rep_rate = 200e3;
    p.duration_fwhm = 210e-15;
    auto st = cc::build_initial_pulses(ph, grid, p);

    const auto l0 = cc::photon_ledger(ph, st);
    const double dz = 0.5 * cc::suggest_dz(ph, st);
    const auto out = cc::propagate(ph, st, dz, 0.05);
    const auto l1 = cc::photon_ledger(ph, out);

    // Something actually happened...
    CHECK(l1.per_envelope[0] > 1e-3 * l0.n_sub);
    // ...while both ladder invariants held.
    CHECK(std::abs(l1.n_sub - l0.n_sub) / l0.n_sub < 1e-6);
    CHECK(std::abs(l1.q_ladder - l0.q_ladder) / l0.n_sub < 1e-6);
}

TEST_CASE("split-step converges at second order in dz") {
    auto ph = cc::make_comb_pulse_physics(0, 1, 1.064e-6, 2.0 * cc::kPi * 30e12, 2e-15, 1e-20,
                                          cc::DispersionModel::lithium_niobate_e(), true);
    const cc::PulseGrid grid{256, 3.2e-12};
    cc::InitialPulseParams p;
    p.avg_power = 1.0;
    p.seed_avg_power = 0.5;
    p.rep_rate = 200e3;
    p.duration_fwhm = 210e-15;
    auto st = cc::build_initial_pulses(ph, grid, p);

    const double L = 0.02;
    const double dz0 = std::min(0.9 * cc::suggest_dz(ph, st), L / 16.0);
    auto err_vs_ref = [&](double dz) {
        const auto coarse = cc::propagate(ph, st, dz, L);
        const auto ref = cc::propagate(ph, st, dz0 / 32.0, L);
        return (coarse.fields - ref.fields).norm() / ref.fields.norm();
    };
    const double e1 = err_vs_ref(dz0);
    const double e2 = err_vs_ref(dz0 / 2.0);
    const double order = std::log2(e1 / e2);
    CHECK(order > 1.8);
    CHECK(order < 2.2);
}

TEST_CASE("propagation is invariant under time-grid shifts") {
    auto ph = cc::make_comb_pulse_physics(0, 1, 1.064e-6, 2.0 * cc::kPi * 30e12, 2e-15, 0.0,
                                          cc::DispersionModel::lithium_niobate_e(), true);
    const cc::PulseGrid grid{256, 3.2e-12};
    cc::InitialPulseParams p;
    p.avg_power = 1.0;
    p.seed_avg_power = 0.5;
    p.rep_rate = 200e3;
    p.duration_fwhm = 210e-15;
    const auto st = cc::build_initial_pulses(ph, grid, p);

    const int shift = 17;
    cc::PulseState shifted = st;
    for (int e = 0; e < st.n_envelopes(); ++e)
        for (int n = 0; n < grid.samples; ++n)
            shifted.fields(e, (n + shift) % grid.samples) = st.fields(e, n);

    const double dz = 0.5 * cc::suggest_dz(ph, st);
    const auto a = cc::propagate(ph, st, dz, 0.01);
    const auto b = cc::propagate(ph, shifted, dz, 0.01);
    double worst = 0.0;
    for (int e = 0; e < st.n_envelopes(); ++e)
        for (int n = 0; n < grid.samples; ++n)
            worst = std::max(worst,
                             std::abs(b.fields(e, (n + shift) % grid.samples) - a.fields(e, n)));
    CHECK(worst < 1e-8 * a.fields.cwiseAbs().maxCoeff());
}

TEST_CASE("spectra satisfy parseval and step-size abuse is refused") {
    const auto ph = kerr_only(1e-3);
    const cc::PulseGrid grid{128, 1e-12};
    cc::PulseState st = flat_state(ph, grid, {C(0.0, 0.0)});
    for (int n = 0; n < grid.samples; ++n)
        st.fields(0, n) = std::sqrt(10.0) * std::exp(C(0.0, 0.05 * n));

    const auto spec = cc::spectrum(ph, st);
    double total = 0.0;
    for (double v : spec[0].psd) total += v;
    const double energy = st.fields.row(0).squaredNorm() * grid.dt();
    CHECK(total == Catch::Approx(energy / grid.window).epsilon(1e-12));
    CHECK(std::is_sorted(spec[0].omega.begin(), spec[0].omega.end()));

    CHECK_THROWS_AS(cc::propagate(ph, st, 10.0 * cc::suggest_dz(ph, st), 1.0), cc::GridError);
    CHECK_THROWS_AS(cc::propagate(ph, st, -1.0, 1.0), cc::GridError);
}
