#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "combcascade/model.hpp"

namespace combcascade {

using Complex = std::complex<double>;

struct FieldState {
    Eigen::VectorXcd a;  // canonical flattened order, photon-number normalization
    double t = 0.0;      // s
};

struct IntegrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// d a / dt of the coupled-mode equations.
///   idler:   dT_k = sum beta a*_mid a_hi - (gT + muT) T_k
///   subcomb: da_mid = +beta T*_k a_hi - ... - (g + mu) a + sqrt(2 g) s
inline Eigen::VectorXcd rhs(const ModeTable& table, const CouplingTable& coupling,
                            const Eigen::VectorXcd& a) {
    const int n = table.n_modes();
    Eigen::VectorXcd d = Eigen::VectorXcd::Zero(n);
    for (const auto& c : coupling.terms) {
        const Complex am = a[c.mid];
        const Complex ah = a[c.hi];
        const Complex ak = a[c.idler];
        d[c.idler] += c.beta * std::conj(am) * ah;
        d[c.mid] += c.beta * std::conj(ak) * ah;
        d[c.hi] += -c.beta * ak * am;
    }
    for (int m = 0; m < n; ++m) {
        const auto& r = table.modes[m];
        d[m] += -(r.gamma + r.mu) * a[m] + std::sqrt(2.0 * r.gamma) * r.drive_amp;
    }
    return d;
}

/// Analytic linearization of rhs: d(da)/dt = A da + B conj(da).
inline void complex_jacobian(const ModeTable& table, const CouplingTable& coupling,
                             const Eigen::VectorXcd& a, Eigen::MatrixXcd& A,
                             Eigen::MatrixXcd& B) {
    const int n = table.n_modes();
    A = Eigen::MatrixXcd::Zero(n, n);
    B = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& c : coupling.terms) {
        const Complex am = a[c.mid];
        const Complex ah = a[c.hi];
        const Complex ak = a[c.idler];
        // idler equation: beta a*_mid a_hi
        A(c.idler, c.hi) += c.beta * std::conj(am);
        B(c.idler, c.mid) += c.beta * ah;
        // mid equation: beta T*_k a_hi
        A(c.mid, c.hi) += c.beta * std::conj(ak);
        B(c.mid, c.idler) += c.beta * ah;
        // hi equation: -beta T_k a_mid
        A(c.hi, c.idler) += -c.beta * am;
        A(c.hi, c.mid) += -c.beta * ak;
    }
    for (int m = 0; m < n; ++m) A(m, m) += -(table.modes[m].gamma + table.modes[m].mu);
}

struct IntegratorOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double initial_dt = 0.0;  // 0 -> auto
    double max_dt = std::numeric_limits<double>::infinity();
    int max_steps = 200'000'000;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXcd> states;
    bool completed = false;
};

namespace detail {

// Dormand-Prince 5(4) coefficients.
struct Dopri5 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                            e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                            e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;
};

}  // namespace detail

/// Adaptive Dormand-Prince integration of da/dt = f(a). Calls observe(t, a)
/// after every accepted step; observe may return false to stop early.
inline Trajectory integrate_adaptive(
    const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& f, const FieldState& initial,
    double t_end, const IntegratorOptions& opt = {},
    const std::function<bool(double, const Eigen::VectorXcd&)>& observe = {},
    bool record = true) {
    using D = detail::Dopri5;
    Trajectory traj;
    Eigen::VectorXcd y = initial.a;
    double t = initial.t;
    Eigen::VectorXcd k1 = f(y);
    if (!k1.allFinite()) throw IntegrationError("rhs not finite at initial state");

    double dt = opt.initial_dt;
    if (dt <= 0.0) {
        const double ynorm = std::max(y.norm(), 1e-30);
        const double fnorm = std::max(k1.norm(), 1e-30);
        dt = 0.01 * ynorm / fnorm;
        dt = std::min(dt, (t_end - t) / 10.0);
    }
    dt = std::min(dt, opt.max_dt);

    if (record) {
        traj.times.push_back(t);
        traj.states.push_back(y);
    }

    Eigen::VectorXcd k2, k3, k4, k5, k6, k7, y5, err;
    for (int step = 0; step < opt.max_steps; ++step) {
        if (t >= t_end) {
            traj.completed = true;
            return traj;
        }
        dt = std::min(dt, t_end - t);
        k2 = f(y + dt * (D::a21 * k1));
        k3 = f(y + dt * (D::a31 * k1 + D::a32 * k2));
        k4 = f(y + dt * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
        k5 = f(y + dt * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
        k6 = f(y + dt * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5));
        y5 = y + dt * (D::b1 * k1 + D::b3 * k3 + D::b4 * k4 + D::b5 * k5 + D::b6 * k6);
        k7 = f(y5);
        err = dt * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);

        if (!y5.allFinite())
            throw IntegrationError("integration diverged at t = " + std::to_string(t));

        double err_ratio = 0.0;
        for (int m = 0; m < y.size(); ++m) {
            const double scale =
                opt.abs_tol + opt.rel_tol * std::max(std::abs(y[m]), std::abs(y5[m]));
            err_ratio = std::max(err_ratio, std::abs(err[m]) / scale);
        }

        if (err_ratio <= 1.0) {
            t += dt;
            y.swap(y5);
            k1.swap(k7);  // FSAL
            if (record) {
                traj.times.push_back(t);
                traj.states.push_back(y);
            }
            if (observe && !observe(t, y)) {
                traj.completed = true;
                return traj;
            }
        }
        const double fac = (err_ratio > 0.0)
                               ? std::clamp(0.9 * std::pow(err_ratio, -0.2), 0.2, 5.0)
                               : 5.0;
        dt = std::min(dt * fac, opt.max_dt);
        if (dt < 1e-18 * std::max(std::abs(t), 1.0))
            throw IntegrationError("step size underflow at t = " + std::to_string(t));
    }
    throw IntegrationError("step budget exhausted before t_end");
}

inline Trajectory integrate(const ModeTable& table, const CouplingTable& coupling,
                            const FieldState& initial, double t_end,
                            const IntegratorOptions& opt = {}) {
    return integrate_adaptive(
        [&](const Eigen::VectorXcd& a) { return rhs(table, coupling, a); }, initial, t_end, opt);
}

struct SteadyState {
    FieldState state;
    double residual = std::numeric_limits<double>::infinity();  // ||da/dt|| / (||a|| max(g+mu))
    double integration_time = 0.0;
    bool converged = false;
    double oscillation_freq = 0.0;  // dominant residual frequency if unconverged, rad/s
};

struct SteadyStateOptions {
    double residual_tol = 1e-8;
    double max_time = 0.0;        // 0 -> auto (characteristic-time based)
    double seed_photons = 1e-6;   // symmetry-breaking seed amplitude^2 per mode
    bool newton_polish = true;
    IntegratorOptions integrator{1e-9, 1e-9};
};

/// Linear (beta0 = 0) fixed point sqrt(2 gamma) s / (gamma + mu).
inline Eigen::VectorXcd linear_fixed_point(const ModeTable& table) {
    const int n = table.n_modes();
    Eigen::VectorXcd a(n);
    for (int m = 0; m < n; ++m) {
        const auto& r = table.modes[m];
        const double denom = r.gamma + r.mu;
        a[m] = denom > 0.0 ? std::sqrt(2.0 * r.gamma) * r.drive_amp / denom : 0.0;
    }
    return a;
}

namespace detail {

/// Real-coordinate Newton refinement of rhs(a) = 0 using the analytic Jacobian.
/// Returns true when it lands on a finite root to tight tolerance.
inline bool newton_refine(const ModeTable& table, const CouplingTable& coupling,
                          Eigen::VectorXcd& a, double scale_rate) {
    const int n = table.n_modes();
    Eigen::MatrixXcd A, B;
    Eigen::MatrixXd Jr(2 * n, 2 * n);
    Eigen::VectorXd Fr(2 * n), dx(2 * n);
    Eigen::VectorXcd a_try;
    const double fnorm0 = std::max(a.norm(), 1.0) * scale_rate;
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXcd F = rhs(table, coupling, a);
        const double r = F.norm() / fnorm0;
        if (r < 1e-13) return true;
        complex_jacobian(table, coupling, a, A, B);
        // d(da)/dt = A da + B conj(da); real/imag block form.
        for (int p = 0; p < n; ++p) {
            for (int q = 0; q < n; ++q) {
                Jr(2 * p, 2 * q) = A(p, q).real() + B(p, q).real();
                Jr(2 * p, 2 * q + 1) = -A(p, q).imag() + B(p, q).imag();
                Jr(2 * p + 1, 2 * q) = A(p, q).imag() + B(p, q).imag();
                Jr(2 * p + 1, 2 * q + 1) = A(p, q).real() - B(p, q).real();
            }
        }
        for (int p = 0; p < n; ++p) {
            Fr[2 * p] = F[p].real();
            Fr[2 * p + 1] = F[p].imag();
        }
        dx = Jr.partialPivLu().solve(Fr);
        if (!dx.allFinite()) return false;
        a_try.resize(n);
        for (int p = 0; p < n; ++p)
            a_try[p] = a[p] - Complex(dx[2 * p], dx[2 * p + 1]);
        if (!a_try.allFinite()) return false;
        a = a_try;
    }
    return rhs(table, coupling, a).norm() / fnorm0 < 1e-11;
}

}  // namespace detail

inline SteadyState steady_state(const ModeTable& table, const CouplingTable& coupling,
                                const SteadyStateOptions& opt = {},
                                const std::optional<FieldState>& seed_state = {}) {
    const int n = table.n_modes();
    double max_rate = 0.0, min_rate = std::numeric_limits<double>::infinity();
    for (const auto& m : table.modes) {
        max_rate = std::max(max_rate, m.gamma + m.mu);
        min_rate = std::min(min_rate, m.gamma + m.mu);
    }
    if (!(min_rate > 0.0)) throw SpecError("steady_state requires a damped system (gamma+mu > 0)");

    FieldState init;
    init.t = 0.0;
    if (seed_state) {
        init = *seed_state;
    } else {
        init.a = linear_fixed_point(table);
        const double seed = std::sqrt(opt.seed_photons);
        for (int m = 0; m < n; ++m) init.a[m] += seed;
    }

    const double t_max = opt.max_time > 0.0 ? opt.max_time : 400.0 / min_rate;

    SteadyState out;
    std::vector<double> res_t, res_v;
    auto residual_of = [&](const Eigen::VectorXcd& a) {
        const Eigen::VectorXcd d = rhs(table, coupling, a);
        return d.norm() / (std::max(a.norm(), 1e-30) * max_rate);
    };
    // Above threshold the trivial branch is an exact root of rhs but is
    // dynamically unstable; never accept such a point as the steady state.
    auto is_unstable = [&](const Eigen::VectorXcd& a) {
        Eigen::MatrixXcd A, B;
        complex_jacobian(table, coupling, a, A, B);
        Eigen::MatrixXd Jr(2 * n, 2 * n);
        for (int p = 0; p < n; ++p) {
            for (int q = 0; q < n; ++q) {
                Jr(2 * p, 2 * q) = A(p, q).real() + B(p, q).real();
                Jr(2 * p, 2 * q + 1) = -A(p, q).imag() + B(p, q).imag();
                Jr(2 * p + 1, 2 * q) = A(p, q).imag() + B(p, q).imag();
                Jr(2 * p + 1, 2 * q + 1) = A(p, q).real() - B(p, q).real();
            }
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(Jr, /*computeEigenvectors=*/false);
        return es.eigenvalues().real().maxCoeff() > 1e-9 * max_rate;
    };

    double t_last_check = 0.0;
    const double check_interval = 0.5 / max_rate;
    Eigen::VectorXcd a_final = init.a;
    double t_final = 0.0;
    double last_res = residual_of(init.a);

    IntegratorOptions iopt = opt.integrator;
    iopt.max_dt = 10.0 / min_rate;
    integrate_adaptive(
        [&](const Eigen::VectorXcd& a) { return rhs(table, coupling, a); }, init, t_max, iopt,
        [&](double t, const Eigen::VectorXcd& a) {
            a_final = a;
            t_final = t;
            if (t - t_last_check >= check_interval) {
                t_last_check = t;
                last_res = residual_of(a);
                res_t.push_back(t);
                res_v.push_back(last_res);
                if (last_res < opt.residual_tol && !is_unstable(a)) return false;
                // Try an early Newton polish once transients have decayed.
                if (opt.newton_polish && last_res < 1e-4) {
                    Eigen::VectorXcd cand = a;
                    if (detail::newton_refine(table, coupling, cand, max_rate) &&
                        !is_unstable(cand)) {
                        a_final = cand;
                        last_res = residual_of(cand);
                        if (last_res < opt.residual_tol) return false;
                    }
                }
            }
            return true;
        },
        /*record=*/false);

    if (opt.newton_polish && last_res >= opt.residual_tol) {
        Eigen::VectorXcd cand = a_final;
        if (detail::newton_refine(table, coupling, cand, max_rate) && !is_unstable(cand)) {
            const double r = residual_of(cand);
            if (r < last_res) {
                a_final = cand;
                last_res = r;
            }
        }
    }

    out.state.a = a_final;
    out.state.t = t_final;
    out.residual = last_res;
    out.integration_time = t_final;
    out.converged = last_res < opt.residual_tol && !is_unstable(a_final);

    if (!out.converged && res_v.size() >= 8) {
        // Dominant oscillation frequency of the residual trace (periodogram
        // over the uniformly spaced tail).
        const std::size_t m = res_v.size() / 2;
        const std::size_t cnt = res_v.size() - m;
        double mean = 0.0;
        for (std::size_t s = m; s < res_v.size(); ++s) mean += res_v[s];
        mean /= static_cast<double>(cnt);
        const double dt = res_t[1] - res_t[0];
        double best_pow = 0.0, best_freq = 0.0;
        for (std::size_t h = 1; h <= cnt / 2; ++h) {
            const double w = 2.0 * kPi * static_cast<double>(h) / (static_cast<double>(cnt) * dt);
            Complex acc = 0.0;
            for (std::size_t s = 0; s < cnt; ++s)
                acc += (res_v[m + s] - mean) * std::exp(Complex(0.0, -w * static_cast<double>(s) * dt));
            if (std::norm(acc) > best_pow) {
                best_pow = std::norm(acc);
                best_freq = w;
            }
        }
        out.oscillation_freq = best_freq;
    }
    return out;
}

struct ConservedQuantities {
    double n_sub = 0.0;    // sum |a_ij|^2
    double q_ladder = 0.0; // sum |T_k|^2 - sum i |a_ij|^2
    double e_total = 0.0;  // sum hbar w |a|^2
};

inline ConservedQuantities conserved_quantities(const ModeTable& table,
                                                const Eigen::VectorXcd& a) {
    ConservedQuantities c;
    for (int m = 0; m < table.n_modes(); ++m) {
        const auto& r = table.modes[m];
        const double n = std::norm(a[m]);
        c.e_total += kHbar * r.omega * n;
        if (r.kind == ModeKind::Subcomb) {
            c.n_sub += n;
            c.q_ladder -= r.i * n;
        } else {
            c.q_ladder += n;
        }
    }
    return c;
}

/// 1 - |a00(t)|^2 / |a00^(lin)|^2 per trajectory sample.
inline std::vector<double> pump_depletion(const ModeTable& table, const Trajectory& traj) {
    const int idx = table.subcomb_index(0, 0);
    if (idx < 0) throw SpecError("pump mode (0,0) not in table");
    const auto& r = table.modes[idx];
    if (r.drive_amp <= 0.0) throw SpecError("pump_depletion: pump mode is undriven");
    const double a_lin = std::sqrt(2.0 * r.gamma) * r.drive_amp / (r.gamma + r.mu);
    const double ref = a_lin * a_lin;
    std::vector<double> d;
    d.reserve(traj.states.size());
    for (const auto& s : traj.states) d.push_back(1.0 - std::norm(s[idx]) / ref);
    return d;
}

inline double pump_depletion_at(const ModeTable& table, const Eigen::VectorXcd& a) {
    Trajectory t;
    t.states.push_back(a);
    t.times.push_back(0.0);
    return pump_depletion(table, t).front();
}

}  // namespace combcascade
