#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "combcascade/fluct.hpp"
#include "combcascade/meanfield.hpp"
#include "combcascade/metrics.hpp"
#include "combcascade/model.hpp"
#include "combcascade/optimizer.hpp"

namespace combcascade {

inline constexpr double kPenaltyDb = 1e3;  // unstable / unconverged points

enum class PenaltyReason { None, Unconverged, Unstable, AllMasked };

/// Whether the two boundary Q parameters act on single boundary modes or on
/// the whole boundary combs.
enum class BoundaryScope { Mode, Comb };

/// Three tunables of the covariance optimization: Q of the first (lowest
/// frequency) and last (highest frequency) boundary subcomb modes, and the
/// seed comb power (uniform across the seed comb).
struct TunableSystem {
    CombSystemSpec base;
    BoundaryScope scope = BoundaryScope::Mode;

    CombSystemSpec apply(double q_first, double q_last, double seed_power_w) const {
        CombSystemSpec s = base;
        const int h = s.half_width();
        // Lowest frequency subcomb mode: largest i, largest j. Highest: smallest.
        if (scope == BoundaryScope::Comb) {
            for (int j = -h; j <= h; ++j) {
                s.Q_out[s.i_hi - s.i_lo][j + h] = q_first;
                s.Q_out[0][j + h] = q_last;
            }
        } else {
            s.Q_out[s.i_hi - s.i_lo][h + h] = q_first;
            s.Q_out[0][0] = q_last;
        }
        if (1 >= s.i_lo && 1 <= s.i_hi)
            for (int j = -h; j <= h; ++j) s.pump_power[1 - s.i_lo][j + h] = seed_power_w;
        return s;
    }
};

struct NoiseEvaluation {
    PenaltyReason penalty = PenaltyReason::None;
    CovarianceMatrix cov;
    Eigen::VectorXcd out_amp;
    NoiseMap map;
};

inline NoiseEvaluation evaluate_noise_map(const CombSystemSpec& spec, double analysis_omega,
                                          const SteadyStateOptions& ss_opt) {
    NoiseEvaluation ev;
    const ModeTable table = build_mode_table(spec);
    const CouplingTable coupling = build_coupling_table(spec, table);
    SteadyState ss;
    try {
        ss = steady_state(table, coupling, ss_opt);
    } catch (const IntegrationError&) {
        // Step-budget exhaustion or divergence at a pathological parameter
        // point is an optimization penalty, not a fatal error.
        ev.penalty = PenaltyReason::Unconverged;
        return ev;
    }
    if (!ss.converged) {
        ev.penalty = PenaltyReason::Unconverged;
        return ev;
    }
    const DriftModel drift = linearize(table, coupling, ss);
    if (stability(drift) >= 0.0) {
        ev.penalty = PenaltyReason::Unstable;
        return ev;
    }
    ev.cov = output_covariance(drift, analysis_omega);
    ev.out_amp = drift.out_amp;
    // Optimization maps are dB relative to shot noise: the weak-seed
    // uniform-Q starting point then shows its single-beam excess noise
    // (tens of dB above 0) instead of sitting at the uncorrelated limit,
    // and "improvement" means approaching and passing the shot floor.
    ev.map = twin_beam_map(ev.cov, ev.out_amp, default_dark_threshold(),
                           NoiseNormalization::Shot);
    return ev;
}

/// 10 log10 R[a][b] for one mode pair; penalties encode failure.
inline double objective_pair_noise(const TunableSystem& sys, const Eigen::VectorXd& params,
                                   int mode_a, int mode_b, double analysis_omega = 0.0,
                                   const SteadyStateOptions& ss_opt = {},
                                   PenaltyReason* reason = nullptr) {
    const CombSystemSpec spec = sys.apply(params[0], params[1], params[2]);
    const NoiseEvaluation ev = evaluate_noise_map(spec, analysis_omega, ss_opt);
    if (reason) *reason = ev.penalty;
    if (ev.penalty != PenaltyReason::None) return kPenaltyDb;
    if (!ev.map.defined[mode_a] || !ev.map.defined[mode_b]) {
        if (reason) *reason = PenaltyReason::AllMasked;
        return kPenaltyDb;
    }
    return 10.0 * std::log10(std::max(ev.map.ratio(mode_a, mode_b), 1e-30));
}

/// Worst (maximum) pairwise dB across two whole combs; minimizing it drives
/// every line of one comb into a low-noise pair with every line of the other.
inline double objective_comb_comb(const TunableSystem& sys, const Eigen::VectorXd& params,
                                  const std::vector<int>& comb_a, const std::vector<int>& comb_b,
                                  double analysis_omega = 0.0,
                                  const SteadyStateOptions& ss_opt = {},
                                  PenaltyReason* reason = nullptr) {
    if (comb_a.empty() || comb_b.empty())
        throw std::invalid_argument("objective_comb_comb: empty comb selection");
    if (comb_a.size() == 1 && comb_b.size() == 1 && comb_a[0] == comb_b[0])
        throw std::invalid_argument("objective_comb_comb: degenerate single-mode selection");
    const CombSystemSpec spec = sys.apply(params[0], params[1], params[2]);
    const NoiseEvaluation ev = evaluate_noise_map(spec, analysis_omega, ss_opt);
    if (reason) *reason = ev.penalty;
    if (ev.penalty != PenaltyReason::None) return kPenaltyDb;
    double worst = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int a : comb_a) {
        for (int b : comb_b) {
            if (a == b || !ev.map.defined[a] || !ev.map.defined[b]) continue;
            any = true;
            worst = std::max(worst, 10.0 * std::log10(std::max(ev.map.ratio(a, b), 1e-30)));
        }
    }
    if (!any) {
        if (reason) *reason = PenaltyReason::AllMasked;
        return kPenaltyDb;
    }
    return worst;
}

}  // namespace combcascade
