#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "combcascade/constants.hpp"
#include "combcascade/dispersion.hpp"

namespace combcascade {

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// How carrier phase mismatch between adjacent subcombs is handled.
///   Material:    bare-crystal Delta-k from the dispersion model only.
///   QpmAdjacent: a per-comb-pair poling offset cancels the carrier
///                mismatch of each adjacent-comb process, emulating a
///                composite multi-period crystal.
enum class PhaseMatchingMode { Material, QpmAdjacent };

/// Full physical description of the multi-comb cavity system.
/// Subcomb mode (i, j) has frequency w00 - i*wT0 - j*wm; the idler comb
/// mode k has frequency wT0 + k*wm. Pump comb is i = 0, seed comb i = 1.
struct CombSystemSpec {
    int i_lo = 0;
    int i_hi = 1;
    int J = 1;  // odd; j in [-(J-1)/2, (J-1)/2]

    double lambda0 = 465e-9;        // m
    double omegaT0 = 0.0;           // rad/s
    double omega_m = 0.0;           // rad/s
    double beta0 = 0.0;             // J^(-1/2)
    double crystal_length = 1e-3;   // m
    DispersionModel dispersion = DispersionModel::constant(1.0);

    // Indexed [i - i_lo][j + (J-1)/2]. Q_int entries may be +inf (lossless).
    std::vector<std::vector<double>> Q_out;
    std::vector<std::vector<double>> Q_int;
    double Q_out_T = 1e5;
    double Q_int_T = std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> pump_power;  // W, same indexing

    double eta_cutoff = 1e-6;
    PhaseMatchingMode phase_matching = PhaseMatchingMode::Material;
    // Explicit poling offsets (1/m) keyed by the upper comb index i of the
    // process coupling combs i and i-1; added on top of the mode above.
    std::map<int, double> dk_offset;

    double omega00() const { return 2.0 * kPi * kLightSpeed / lambda0; }
    int n_combs() const { return i_hi - i_lo + 1; }
    int half_width() const { return (J - 1) / 2; }

    double subcomb_omega(int i, int j) const { return omega00() - i * omegaT0 - j * omega_m; }
    double idler_omega(int k) const { return omegaT0 + k * omega_m; }

    /// Uniform-table helper used by most configurations.
    void fill_uniform(double q_out, double q_int, double pump0_w, double seed1_w) {
        const int nc = n_combs();
        Q_out.assign(nc, std::vector<double>(J, q_out));
        Q_int.assign(nc, std::vector<double>(J, q_int));
        pump_power.assign(nc, std::vector<double>(J, 0.0));
        if (0 >= i_lo && 0 <= i_hi) pump_power[0 - i_lo].assign(J, pump0_w);
        if (1 >= i_lo && 1 <= i_hi) pump_power[1 - i_lo].assign(J, seed1_w);
    }

    void validate() const {
        if (J < 1 || J % 2 == 0) throw SpecError("J must be a positive odd integer");
        if (i_lo > 0 || i_hi < 1) throw SpecError("subcomb range must contain i=0 (pump) and i=1 (seed)");
        if (lambda0 <= 0.0) throw SpecError("lambda0 must be positive");
        if (omegaT0 <= 0.0) throw SpecError("omegaT0 must be positive");
        if (omega_m < 0.0) throw SpecError("omega_m must be non-negative");
        if (J > 1 && !(omega_m < omegaT0 / (2.0 * J)))
            throw SpecError("subcombs overlap: require omega_m < omegaT0 / (2 J)");
        if (beta0 < 0.0) throw SpecError("beta0 must be non-negative");
        if (crystal_length <= 0.0) throw SpecError("crystal length must be positive");
        const int nc = n_combs();
        auto check_table = [&](const std::vector<std::vector<double>>& t, const char* what) {
            if (static_cast<int>(t.size()) != nc)
                throw SpecError(std::string(what) + ": expected " + std::to_string(nc) + " comb rows");
            for (const auto& row : t)
                if (static_cast<int>(row.size()) != J)
                    throw SpecError(std::string(what) + ": expected " + std::to_string(J) + " entries per comb");
        };
        check_table(Q_out, "Q_out");
        check_table(Q_int, "Q_int");
        check_table(pump_power, "pump_power");
        for (const auto& row : Q_out)
            for (double q : row)
                if (!(q > 0.0)) throw SpecError("all Q_out must be positive");
        for (const auto& row : Q_int)
            for (double q : row)
                if (!(q > 0.0)) throw SpecError("all Q_int must be positive");
        if (!(Q_out_T > 0.0) || !(Q_int_T > 0.0)) throw SpecError("idler Q factors must be positive");
        for (int i = i_lo; i <= i_hi; ++i)
            for (const auto& row = pump_power[i - i_lo]; const double p : row) {
                if (p < 0.0) throw SpecError("pump powers must be non-negative");
                if (p > 0.0 && i != 0 && i != 1)
                    throw SpecError("only combs i=0 and i=1 may be driven");
            }
        const int h = half_width();
        for (int i = i_lo; i <= i_hi; ++i)
            for (int j = -h; j <= h; ++j)
                if (subcomb_omega(i, j) <= 0.0)
                    throw SpecError("negative mode frequency at subcomb (" + std::to_string(i) +
                                    "," + std::to_string(j) + ")");
        for (int k = -h; k <= h; ++k)
            if (idler_omega(k) <= 0.0) throw SpecError("negative idler frequency");
    }
};

enum class ModeKind { Idler, Subcomb };

struct ModeRecord {
    ModeKind kind;
    int i = 0;  // subcomb index, unused for idler
    int j = 0;  // intracomb index j, or idler index k
    double omega = 0.0;      // rad/s
    double gamma = 0.0;      // amplitude outcoupling rate w/(2 Q_out), 1/s
    double mu = 0.0;         // amplitude intrinsic rate w/(2 Q_int), 1/s
    double drive_amp = 0.0;  // |s| = sqrt(P / hbar w), sqrt(photons/s)
};

/// Flattened mode list in canonical order: idler modes first (k ascending),
/// then subcombs i ascending, j ascending within each.
struct ModeTable {
    int i_lo = 0, i_hi = 0, J = 1;
    std::vector<ModeRecord> modes;

    int n_modes() const { return static_cast<int>(modes.size()); }
    int half_width() const { return (J - 1) / 2; }

    int idler_index(int k) const {
        const int h = half_width();
        if (k < -h || k > h) return -1;
        return k + h;
    }
    int subcomb_index(int i, int j) const {
        const int h = half_width();
        if (i < i_lo || i > i_hi || j < -h || j > h) return -1;
        return J + (i - i_lo) * J + (j + h);
    }
    Eigen::VectorXd gamma_vector() const {
        Eigen::VectorXd g(n_modes());
        for (int m = 0; m < n_modes(); ++m) g[m] = modes[m].gamma;
        return g;
    }
    Eigen::VectorXd mu_vector() const {
        Eigen::VectorXd g(n_modes());
        for (int m = 0; m < n_modes(); ++m) g[m] = modes[m].mu;
        return g;
    }
    Eigen::VectorXd drive_vector() const {
        Eigen::VectorXd s(n_modes());
        for (int m = 0; m < n_modes(); ++m) s[m] = modes[m].drive_amp;
        return s;
    }
};

inline double refractive_index(const DispersionModel& d, double omega) { return d.index_at(omega); }

inline double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

inline ModeTable build_mode_table(const CombSystemSpec& spec) {
    spec.validate();
    ModeTable t;
    t.i_lo = spec.i_lo;
    t.i_hi = spec.i_hi;
    t.J = spec.J;
    const int h = spec.half_width();
    for (int k = -h; k <= h; ++k) {
        ModeRecord r;
        r.kind = ModeKind::Idler;
        r.j = k;
        r.omega = spec.idler_omega(k);
        r.gamma = r.omega / (2.0 * spec.Q_out_T);
        r.mu = std::isinf(spec.Q_int_T) ? 0.0 : r.omega / (2.0 * spec.Q_int_T);
        r.drive_amp = 0.0;
        t.modes.push_back(r);
    }
    for (int i = spec.i_lo; i <= spec.i_hi; ++i) {
        for (int j = -h; j <= h; ++j) {
            ModeRecord r;
            r.kind = ModeKind::Subcomb;
            r.i = i;
            r.j = j;
            r.omega = spec.subcomb_omega(i, j);
            const double qo = spec.Q_out[i - spec.i_lo][j + h];
            const double qi = spec.Q_int[i - spec.i_lo][j + h];
            r.gamma = r.omega / (2.0 * qo);
            r.mu = std::isinf(qi) ? 0.0 : r.omega / (2.0 * qi);
            const double p = spec.pump_power[i - spec.i_lo][j + h];
            r.drive_amp = std::sqrt(p / (kHbar * r.omega));
            t.modes.push_back(r);
        }
    }
    return t;
}

/// Wavevector mismatch between two modes, as printed: material wavevector for
/// both optical modes, vacuum omega/c for the mediating idler term.
inline double wavevector_mismatch(const CombSystemSpec& spec, double omega_a, double omega_b) {
    const double ka = spec.dispersion.wavevector(omega_a);
    const double kb = spec.dispersion.wavevector(omega_b);
    return ka - kb - (omega_a - omega_b) / kLightSpeed;
}

inline double phase_matching_eta(const CombSystemSpec& spec, double omega_a, double omega_b,
                                 double dk_offset = 0.0) {
    const double dk = wavevector_mismatch(spec, omega_a, omega_b) + dk_offset;
    return std::abs(sinc(dk * spec.crystal_length));
}

/// One three-wave-mixing term of Eq.-of-motion form:
///   beta couples subcomb (i,j) <-> subcomb (i-1, j-k) with idler mode k.
struct CouplingTerm {
    int mid = -1;    // flattened index of subcomb (i, j)
    int hi = -1;     // flattened index of subcomb (i-1, j-k)
    int idler = -1;  // flattened index of idler mode k
    double beta = 0.0;  // 1/s per photon amplitude
};

struct CouplingTable {
    std::vector<CouplingTerm> terms;  // all beta^- with eta above cutoff
    Eigen::MatrixXd eta;              // pairwise |sinc| factors over all modes

    /// beta^-_{ijk}; zero when any partner mode is absent or below cutoff.
    double beta_minus(const ModeTable& t, int i, int j, int k) const {
        const int mid = t.subcomb_index(i, j);
        const int hi = t.subcomb_index(i - 1, j - k);
        const int id = t.idler_index(k);
        if (mid < 0 || hi < 0 || id < 0) return 0.0;
        for (const auto& term : terms)
            if (term.mid == mid && term.hi == hi && term.idler == id) return term.beta;
        return 0.0;
    }
    /// beta^+_{ijk} = beta^-_{i+1, j+k, k}
    double beta_plus(const ModeTable& t, int i, int j, int k) const {
        return beta_minus(t, i + 1, j + k, k);
    }
};

/// Poling offset applied to the process coupling combs i and i-1.
inline double process_dk_offset(const CombSystemSpec& spec, int i_upper) {
    double off = 0.0;
    if (spec.phase_matching == PhaseMatchingMode::QpmAdjacent) {
        // Cancel the carrier (j = j' = 0) mismatch of this comb pair.
        off = -wavevector_mismatch(spec, spec.subcomb_omega(i_upper, 0),
                                   spec.subcomb_omega(i_upper - 1, 0));
    }
    if (auto it = spec.dk_offset.find(i_upper); it != spec.dk_offset.end()) off += it->second;
    return off;
}

inline CouplingTable build_coupling_table(const CombSystemSpec& spec, const ModeTable& t) {
    CouplingTable ct;
    const int n = t.n_modes();
    const int h = t.half_width();

    ct.eta.resize(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
            const auto& ma = t.modes[a];
            const auto& mb = t.modes[b];
            double e;
            if (ma.kind == ModeKind::Subcomb && mb.kind == ModeKind::Subcomb &&
                std::abs(ma.i - mb.i) == 1) {
                // orient the pair as (upper comb, lower comb) so the poling
                // offset cancels the carrier mismatch rather than doubling it
                const auto& up = ma.i > mb.i ? ma : mb;
                const auto& lo = ma.i > mb.i ? mb : ma;
                e = phase_matching_eta(spec, up.omega, lo.omega, process_dk_offset(spec, up.i));
            } else {
                e = phase_matching_eta(spec, ma.omega, mb.omega, 0.0);
            }
            ct.eta(a, b) = e;
            ct.eta(b, a) = e;
        }
    }

    for (int i = t.i_lo + 1; i <= t.i_hi; ++i) {
        for (int j = -h; j <= h; ++j) {
            for (int k = -h; k <= h; ++k) {
                const int mid = t.subcomb_index(i, j);
                const int hi = t.subcomb_index(i - 1, j - k);
                const int id = t.idler_index(k);
                if (mid < 0 || hi < 0 || id < 0) continue;
                const double e = ct.eta(mid, hi);
                if (e < spec.eta_cutoff) continue;
                CouplingTerm term;
                term.mid = mid;
                term.hi = hi;
                term.idler = id;
                term.beta = spec.beta0 * e *
                            std::sqrt(kHbar * t.modes[mid].omega * t.modes[hi].omega *
                                      t.modes[id].omega);
                if (term.beta == 0.0) continue;
                ct.terms.push_back(term);
            }
        }
    }
    return ct;
}

}  // namespace combcascade
