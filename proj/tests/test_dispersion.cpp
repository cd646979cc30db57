#include <catch2/catch_amalgamated.hpp>

#include "combcascade/dispersion.hpp"

namespace cc = combcascade;

namespace {
double omega_of_um(double lam_um) {
    return 2.0 * cc::kPi * cc::kLightSpeed / (lam_um * 1e-6);
}
}  // namespace

TEST_CASE("sellmeier indices match published congruent LiNbO3 values") {
    const auto e = cc::DispersionModel::lithium_niobate_e();
    const auto o = cc::DispersionModel::lithium_niobate_o();
    // Frozen evaluations of the Zelmon 1997 fit.
    CHECK(e.index_at(omega_of_um(1.064)) == Catch::Approx(2.1555364752263153).epsilon(1e-12));
    CHECK(o.index_at(omega_of_um(1.064)) == Catch::Approx(2.232105615040773).epsilon(1e-12));
    CHECK(e.index_at(omega_of_um(0.465)) == Catch::Approx(2.269741205361563).epsilon(1e-12));
    CHECK(e.index_at(omega_of_um(4.07)) == Catch::Approx(2.052640784692202).epsilon(1e-12));
}

TEST_CASE("index model is strictly bounded to its window") {
    const auto e = cc::DispersionModel::lithium_niobate_e();
    CHECK_THROWS_AS(e.index_at(omega_of_um(0.25)), std::out_of_range);
    CHECK_THROWS_AS(e.index_at(omega_of_um(12.0)), std::out_of_range);
    CHECK_THROWS_AS(e.index_at(0.0), std::out_of_range);
    CHECK_THROWS_AS(e.index_at(-1.0), std::out_of_range);
    // Clamped evaluation pins to the edge and stays finite.
    CHECK(e.index_clamped(omega_of_um(12.0)) ==
          Catch::Approx(e.index_of_wavelength(e.lambda_max_um)));
    CHECK(std::isfinite(e.index_clamped(omega_of_um(0.25))));
}

TEST_CASE("constant model has flat index and group index") {
    const auto m = cc::DispersionModel::constant(1.5);
    CHECK(m.index_at(1e15) == 1.5);
    CHECK(m.group_index(1e15) == 1.5);
    CHECK(m.wavevector(2e15) == Catch::Approx(1.5 * 2e15 / cc::kLightSpeed));
}

TEST_CASE("group index matches a finite-difference derivative") {
    const auto e = cc::DispersionModel::lithium_niobate_e();
    const double w = omega_of_um(1.064);
    const double h = w * 1e-6;
    const double dndw = (e.index_at(w + h) - e.index_at(w - h)) / (2.0 * h);
    const double ng_fd = e.index_at(w) + w * dndw;
    CHECK(e.group_index(w) == Catch::Approx(ng_fd).epsilon(1e-7));
    // Normal dispersion in the visible: group index above phase index.
    CHECK(e.group_index(omega_of_um(0.532)) > e.index_at(omega_of_um(0.532)));
}

TEST_CASE("model lookup by name") {
    CHECK(cc::DispersionModel::from_name("linbo3_e").sellmeier);
    CHECK(cc::DispersionModel::from_name("linbo3_o").sellmeier);
    CHECK_FALSE(cc::DispersionModel::from_name("vacuum").sellmeier);
    CHECK(cc::DispersionModel::from_name("none").index_at(1e15) == 1.0);
    CHECK_THROWS_AS(cc::DispersionModel::from_name("bk7"), std::invalid_argument);
}
