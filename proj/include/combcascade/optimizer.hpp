#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "combcascade/metrics.hpp"
#include "combcascade/model.hpp"

namespace combcascade {

struct ParameterDescriptor {
    std::string name;
    double lower = 0.0;
    double upper = 0.0;
    bool log_scale = true;
};

struct OptimizationProblem {
    std::vector<ParameterDescriptor> params;
    std::function<double(const Eigen::VectorXd&)> objective;  // minimized, physical units
    int budget = 500;
    int starts = 8;
    std::uint64_t seed = 0;
    double target_improvement = 0.0;  // stop once initial - best >= target (0 = run out budget)
    Eigen::VectorXd initial;          // physical units; also the improvement reference

    void validate() const {
        if (params.empty()) throw std::invalid_argument("optimization problem has no parameters");
        for (const auto& p : params) {
            if (!std::isfinite(p.lower) || !std::isfinite(p.upper) || !(p.lower < p.upper))
                throw std::invalid_argument("parameter '" + p.name + "': bounds must be finite, lower < upper");
            if (p.log_scale && p.lower <= 0.0)
                throw std::invalid_argument("parameter '" + p.name + "': log scale needs positive bounds");
        }
        if (budget < 1) throw std::invalid_argument("evaluation budget must be >= 1");
        if (!objective) throw std::invalid_argument("objective not set");
    }
};

struct OptTracePoint {
    Eigen::VectorXd params;
    double value = 0.0;
};

struct OptResult {
    Eigen::VectorXd best_params;
    double best_value = 0.0;
    double initial_value = 0.0;
    double improvement = 0.0;  // initial - best
    std::vector<OptTracePoint> trace;
    bool budget_exhausted = false;
};

namespace detail {

// Fold an unconstrained coordinate into [0,1] by reflection at the bounds.
inline double reflect_unit(double u) {
    double v = std::fmod(std::abs(u), 2.0);
    return v > 1.0 ? 2.0 - v : v;
}

}  // namespace detail

/// Multi-start Nelder-Mead direct search in normalized (log-scale aware)
/// coordinates with reflection at the box bounds. Deterministic for a seed.
inline OptResult optimize(const OptimizationProblem& problem) {
    problem.validate();
    const int d = static_cast<int>(problem.params.size());

    auto to_unit = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd u(d);
        for (int p = 0; p < d; ++p) {
            const auto& pd = problem.params[p];
            u[p] = pd.log_scale
                       ? (std::log10(x[p]) - std::log10(pd.lower)) /
                             (std::log10(pd.upper) - std::log10(pd.lower))
                       : (x[p] - pd.lower) / (pd.upper - pd.lower);
        }
        return u;
    };
    auto to_physical = [&](const Eigen::VectorXd& u) {
        Eigen::VectorXd x(d);
        for (int p = 0; p < d; ++p) {
            const auto& pd = problem.params[p];
            const double v = detail::reflect_unit(u[p]);
            x[p] = pd.log_scale
                       ? std::pow(10.0, std::log10(pd.lower) +
                                            v * (std::log10(pd.upper) - std::log10(pd.lower)))
                       : pd.lower + v * (pd.upper - pd.lower);
        }
        return x;
    };

    OptResult result;
    int evals = 0;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_u;
    auto evaluate = [&](const Eigen::VectorXd& u) {
        const Eigen::VectorXd x = to_physical(u);
        const double v = problem.objective(x);
        ++evals;
        result.trace.push_back({x, v});
        if (v < best) {
            best = v;
            best_u = u;
        }
        return v;
    };

    Eigen::VectorXd init_u =
        problem.initial.size() == d ? to_unit(problem.initial) : Eigen::VectorXd::Constant(d, 0.5);
    result.initial_value = evaluate(init_u);

    std::mt19937_64 rng(problem.seed);
    std::uniform_real_distribution<double> uni(0.05, 0.95);

    auto done = [&] {
        if (evals >= problem.budget) return true;
        return problem.target_improvement > 0.0 &&
               result.initial_value - best >= problem.target_improvement;
    };

    for (int start = 0; start < std::max(problem.starts, 1) && !done(); ++start) {
        Eigen::VectorXd x0(d);
        if (start == 0) {
            x0 = init_u;
        } else {
            for (int p = 0; p < d; ++p) x0[p] = uni(rng);
        }

        // Nelder-Mead on the folded unit cube.
        std::vector<Eigen::VectorXd> simplex;
        std::vector<double> fval;
        simplex.push_back(x0);
        fval.push_back(evaluate(x0));
        const double step = 0.15;
        for (int p = 0; p < d && !done(); ++p) {
            Eigen::VectorXd v = x0;
            v[p] += (v[p] < 0.5 ? step : -step);
            simplex.push_back(v);
            fval.push_back(evaluate(v));
        }
        if (done()) break;

        const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
        for (int iter = 0; iter < 400 && !done(); ++iter) {
            std::vector<int> order(simplex.size());
            for (std::size_t s = 0; s < order.size(); ++s) order[s] = static_cast<int>(s);
            std::sort(order.begin(), order.end(), [&](int a, int b) { return fval[a] < fval[b]; });
            std::vector<Eigen::VectorXd> sx;
            std::vector<double> sf;
            for (int o : order) {
                sx.push_back(simplex[o]);
                sf.push_back(fval[o]);
            }
            simplex = sx;
            fval = sf;

            double spread = 0.0;
            for (std::size_t s = 1; s < simplex.size(); ++s)
                spread = std::max(spread, (simplex[s] - simplex[0]).norm());
            if (spread < 1e-6) break;

            Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
            for (std::size_t s = 0; s + 1 < simplex.size(); ++s) centroid += simplex[s];
            centroid /= static_cast<double>(simplex.size() - 1);

            const Eigen::VectorXd xr = centroid + alpha * (centroid - simplex.back());
            const double fr = evaluate(xr);
            if (done()) break;
            if (fr < fval.front()) {
                const Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
                const double fe = evaluate(xe);
                if (fe < fr) {
                    simplex.back() = xe;
                    fval.back() = fe;
                } else {
                    simplex.back() = xr;
                    fval.back() = fr;
                }
            } else if (fr < fval[fval.size() - 2]) {
                simplex.back() = xr;
                fval.back() = fr;
            } else {
                const Eigen::VectorXd xc = centroid + rho * (simplex.back() - centroid);
                const double fc = evaluate(xc);
                if (done()) break;
                if (fc < fval.back()) {
                    simplex.back() = xc;
                    fval.back() = fc;
                } else {
                    for (std::size_t s = 1; s < simplex.size() && !done(); ++s) {
                        simplex[s] = simplex[0] + sigma * (simplex[s] - simplex[0]);
                        fval[s] = evaluate(simplex[s]);
                    }
                }
            }
        }
    }

    result.best_value = best;
    result.best_params = to_physical(best_u);
    result.improvement = result.initial_value - best;
    result.budget_exhausted = evals >= problem.budget;
    return result;
}

}  // namespace combcascade
