#include <catch2/catch_amalgamated.hpp>

#include "combcascade/objectives.hpp"
#include "combcascade/optimizer.hpp"

namespace cc = combcascade;

namespace {

cc::OptimizationProblem bowl_problem() {
    cc::OptimizationProblem p;
    p.params = {{"x", -2.0, 2.0, false}, {"y", -2.0, 2.0, false}, {"z", -2.0, 2.0, false}};
    p.objective = [](const Eigen::VectorXd& x) {
        return std::pow(x[0] - 0.5, 2) + std::pow(x[1] + 0.25, 2) + std::pow(x[2] - 1.0, 2);
    };
    p.budget = 300;
    p.starts = 4;
    p.seed = 11;
    return p;
}

}  // namespace

TEST_CASE("unit-cube reflection folding") {
    CHECK(cc::detail::reflect_unit(0.3) == Catch::Approx(0.3));
    CHECK(cc::detail::reflect_unit(1.2) == Catch::Approx(0.8));
    CHECK(cc::detail::reflect_unit(-0.3) == Catch::Approx(0.3));
    CHECK(cc::detail::reflect_unit(2.5) == Catch::Approx(0.5));
    CHECK(cc::detail::reflect_unit(0.0) == 0.0);
    CHECK(cc::detail::reflect_unit(1.0) == Catch::Approx(1.0));
}

TEST_CASE("nelder-mead finds a smooth minimum inside the box") {
    const auto res = cc::optimize(bowl_problem());
    CHECK(res.best_value < 1e-6);
    CHECK(res.best_params[0] == Catch::Approx(0.5).margin(1e-3));
    CHECK(res.best_params[1] == Catch::Approx(-0.25).margin(1e-3));
    CHECK(res.best_params[2] == Catch::Approx(1.0).margin(1e-3));
    CHECK(res.improvement == Catch::Approx(res.initial_value - res.best_value));
    CHECK(res.trace.size() <= 300);
}

TEST_CASE("optimization is deterministic in the seed") {
    const auto a = cc::optimize(bowl_problem());
    const auto b = cc::optimize(bowl_problem());
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t s = 0; s < a.trace.size(); ++s) {
        CHECK(a.trace[s].value == b.trace[s].value);
        CHECK(a.trace[s].params == b.trace[s].params);
    }

    auto p = bowl_problem();
    p.seed = 12;
    const auto c = cc::optimize(p);
    bool differs = c.trace.size() != a.trace.size();
    for (std::size_t s = 0; !differs && s < a.trace.size(); ++s)
        differs = a.trace[s].value != c.trace[s].value;
    CHECK(differs);
}

TEST_CASE("log-scale parameters explore decades evenly") {
    cc::OptimizationProblem p;
    p.params = {{"q", 1e2, 1e8, true}};
    p.objective = [](const Eigen::VectorXd& x) { return std::pow(std::log10(x[0]) - 4.0, 2); };
    p.budget = 120;
    p.starts = 3;
    p.seed = 5;
    const auto res = cc::optimize(p);
    CHECK(res.best_params[0] == Catch::Approx(1e4).epsilon(1e-2));
    CHECK(res.best_value < 1e-8);
}

TEST_CASE("target improvement stops the search early") {
    auto p = bowl_problem();
    p.target_improvement = 0.5 * cc::optimize(bowl_problem()).improvement;
    const auto res = cc::optimize(p);
    CHECK(res.improvement >= p.target_improvement);
    CHECK(res.trace.size() < 300);
    CHECK_FALSE(res.budget_exhausted);
}

TEST_CASE("problem validation") {
    cc::OptimizationProblem p;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);  // no params
    p = bowl_problem();
    p.budget = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = bowl_problem();
    p.params[0].lower = 3.0;  // lower > upper
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = bowl_problem();
    p.params[0].log_scale = true;  // negative bounds with log scale
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("tunable system applies boundary parameters where promised") {
    cc::CombSystemSpec base;
    base.i_lo = -2;
    base.i_hi = 2;
    base.J = 3;
    base.lambda0 = 465e-9;
    base.omegaT0 = 2.0 * cc::kPi * 73.7e12;
    base.omega_m = 2.0 * cc::kPi * 100e6;
    base.beta0 = 3e-4;
    base.dispersion = cc::DispersionModel::constant(1.0);
    base.fill_uniform(5e6, std::numeric_limits<double>::infinity(), 1e4, 1e-3);
    base.Q_out_T = 1e5;

    cc::TunableSystem sys;
    sys.base = base;

    SECTION("mode scope touches only the two extreme boundary modes") {
        const auto s = sys.apply(1e3, 1e7, 0.25);
        // Lowest-frequency mode: comb i_hi, line j = +h. Highest: i_lo, j = -h.
        CHECK(s.Q_out[4][2] == 1e3);
        CHECK(s.Q_out[0][0] == 1e7);
        CHECK(s.Q_out[4][1] == 5e6);  // neighbors untouched
        CHECK(s.Q_out[0][1] == 5e6);
        for (int j = 0; j < 3; ++j) CHECK(s.pump_power[3][j] == 0.25);  // seed comb i=1
        CHECK(s.pump_power[2][1] == 1e4);  // pump comb untouched
    }

    SECTION("comb scope retunes whole boundary combs") {
        sys.scope = cc::BoundaryScope::Comb;
        const auto s = sys.apply(1e3, 1e7, 0.25);
        for (int j = 0; j < 3; ++j) {
            CHECK(s.Q_out[4][j] == 1e3);
            CHECK(s.Q_out[0][j] == 1e7);
        }
        CHECK(s.Q_out[2][1] == 5e6);  // interior combs untouched
    }
}

TEST_CASE("noise objectives encode failures as a flat penalty") {
    // A spec that cannot converge: far-above-threshold cascade with a
    // max_time too short for the transient.
    cc::CombSystemSpec base;
    base.i_lo = 0;
    base.i_hi = 1;
    base.J = 1;
    base.lambda0 = 465e-9;
    base.omegaT0 = 2.0 * cc::kPi * 73.7e12;
    base.beta0 = 3e-4;
    base.dispersion = cc::DispersionModel::constant(1.0);
    base.fill_uniform(5e6, std::numeric_limits<double>::infinity(), 5e4, 0.0);
    base.Q_out_T = 1e5;

    cc::TunableSystem sys;
    sys.base = base;
    cc::SteadyStateOptions opt;
    opt.max_time = 1e-12;  // guaranteed unconverged
    opt.newton_polish = false;

    cc::PenaltyReason reason = cc::PenaltyReason::None;
    Eigen::VectorXd params(3);
    params << 5e6, 5e6, 0.0;
    const double v = cc::objective_pair_noise(sys, params, 0, 1, 0.0, opt, &reason);
    CHECK(v == cc::kPenaltyDb);
    CHECK(reason == cc::PenaltyReason::Unconverged);

    CHECK_THROWS_AS(
        cc::objective_comb_comb(sys, params, {}, {0}, 0.0, opt, nullptr),
        std::invalid_argument);
}
