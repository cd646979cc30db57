#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <stdexcept>
#include <string>
#include <vector>

#include "combcascade/constants.hpp"
#include "combcascade/dispersion.hpp"
#include "combcascade/fft.hpp"

namespace combcascade {

struct GridError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PulseGrid {
    int samples = 0;     // power of two
    double window = 0.0; // s

    double dt() const { return window / samples; }
    void validate() const {
        if (samples < 2 || (samples & (samples - 1)) != 0)
            throw GridError("pulse grid: sample count must be a power of two");
        if (!(window > 0.0)) throw GridError("pulse grid: window must be positive");
    }
};

/// How the printed coupling constants map onto per-envelope coefficients.
///   PhotonWeighted: chi2/Kerr coefficients scale with the envelope carrier
///                   (beta_L w_e), which makes the Manley-Rowe photon
///                   ledgers exact for the lossless cascade.
///   Uniform:        the bare constants multiply every term.
enum class CouplingNormalization { PhotonWeighted, Uniform };

/// One cascaded three-wave process: envelope `hi` (carrier w_hi) converts
/// into `mid` (w_mid = w_hi - w_T) plus the idler envelope.
struct PulseTriple {
    int hi = -1;
    int mid = -1;
    double dk = 0.0;  // carrier phase mismatch (1/m), after any poling offset
};

struct PulsePhysics {
    double betaL = 0.0;   // second-order coupling, W^(-1/2) m^-1 s
    double gammaL = 0.0;  // Kerr coefficient, W^-1 m^-1 s
    bool self_steepening = false;
    bool xpm = false;
    CouplingNormalization normalization = CouplingNormalization::PhotonWeighted;

    bool dispersion_enabled = false;
    DispersionModel dispersion = DispersionModel::constant(1.0);

    // Envelope 0 is the idler; envelopes 1.. are subcombs i_lo..i_hi in order.
    std::vector<double> carriers;  // rad/s
    int pump_envelope = 1;         // reference for the co-moving frame
    std::vector<PulseTriple> triples;
    double length = 0.0;  // m

    int n_envelopes() const { return static_cast<int>(carriers.size()); }

    double chi2_coeff(int env) const {
        return normalization == CouplingNormalization::PhotonWeighted ? betaL * carriers[env]
                                                                      : betaL;
    }
    double kerr_coeff(int env) const {
        return normalization == CouplingNormalization::PhotonWeighted ? gammaL * carriers[env]
                                                                      : gammaL;
    }

    void validate(const PulseGrid& grid) const {
        grid.validate();
        if (betaL < 0.0 || gammaL < 0.0) throw GridError("nonlinear coefficients must be >= 0");
        if (carriers.empty()) throw GridError("pulse physics: no envelopes");
        if (pump_envelope < 0 || pump_envelope >= n_envelopes())
            throw GridError("pulse physics: bad pump envelope index");
        for (const auto& t : triples)
            if (t.hi < 0 || t.hi >= n_envelopes() || t.mid < 0 || t.mid >= n_envelopes() ||
                t.hi == t.mid || t.hi == 0 || t.mid == 0)
                throw GridError("pulse physics: malformed coupling triple");
        if (dispersion_enabled) {
            // Carriers must sit inside the index-model window; far grid
            // wings past the window edge are evaluated clamped instead.
            for (double w : carriers) dispersion.index_at(w);
        }
    }
};

/// Builds the envelope set for the cascaded comb system: idler first, then
/// subcombs i_lo..i_hi with carriers w0 - i wT. Carrier phase mismatch is
/// poling-compensated by default (composite crystal); explicit offsets add
/// on top.
inline PulsePhysics make_comb_pulse_physics(int i_lo, int i_hi, double lambda0, double omegaT,
                                            double betaL, double gammaL,
                                            const DispersionModel& disp, bool use_dispersion,
                                            bool qpm_compensated = true,
                                            const std::vector<double>& dk_offsets = {}) {
    if (i_lo > 0 || i_hi < 1) throw GridError("pulse envelopes must include i=0 and i=1");
    PulsePhysics ph;
    ph.betaL = betaL;
    ph.gammaL = gammaL;
    ph.dispersion = disp;
    ph.dispersion_enabled = use_dispersion;
    const double w0 = 2.0 * kPi * kLightSpeed / lambda0;
    ph.carriers.push_back(omegaT);
    for (int i = i_lo; i <= i_hi; ++i) ph.carriers.push_back(w0 - i * omegaT);
    ph.pump_envelope = 1 + (0 - i_lo);
    for (int i = i_lo + 1; i <= i_hi; ++i) {
        PulseTriple t;
        t.hi = 1 + (i - 1 - i_lo);
        t.mid = 1 + (i - i_lo);
        if (use_dispersion && !qpm_compensated)
            t.dk = disp.wavevector(ph.carriers[t.hi]) - disp.wavevector(ph.carriers[t.mid]) -
                   disp.wavevector(omegaT);
        if (!dk_offsets.empty()) t.dk += dk_offsets.at(static_cast<std::size_t>(i - i_lo - 1));
        ph.triples.push_back(t);
    }
    return ph;
}

/// Multi-envelope field samples on a shared time grid; units sqrt(W).
struct PulseState {
    PulseGrid grid;
    Eigen::MatrixXcd fields;  // n_envelopes x samples
    double z = 0.0;

    int n_envelopes() const { return static_cast<int>(fields.rows()); }
};

struct InitialPulseParams {
    double avg_power = 0.0;       // W, pump envelope
    double seed_avg_power = 0.0;  // W, seed envelope
    double rep_rate = 0.0;        // Hz
    double duration_fwhm = 0.0;   // s
};

/// Gaussian pump (i=0) and seed (i=1); peak power 0.94 E / tau.
inline PulseState build_initial_pulses(const PulsePhysics& physics, const PulseGrid& grid,
                                       const InitialPulseParams& p) {
    grid.validate();
    if (p.rep_rate <= 0.0 || p.duration_fwhm <= 0.0)
        throw GridError("initial pulses: repetition rate and duration must be positive");
    if (grid.dt() > p.duration_fwhm / 16.0)
        throw GridError("pulse grid under-resolved: need >= 16 samples per FWHM");
    if (grid.window < 10.0 * p.duration_fwhm)
        throw GridError("pulse window too small: need >= 10x pulse duration");

    PulseState st;
    st.grid = grid;
    st.fields = Eigen::MatrixXcd::Zero(physics.n_envelopes(), grid.samples);
    auto fill = [&](int env, double avg_power) {
        if (avg_power == 0.0) return;
        const double energy = avg_power / p.rep_rate;
        const double peak = 0.94 * energy / p.duration_fwhm;
        const double amp = std::sqrt(peak);
        const double dt = grid.dt();
        for (int n = 0; n < grid.samples; ++n) {
            const double t = (n - grid.samples / 2) * dt;
            // Gaussian power profile with the given FWHM
            st.fields(env, n) = amp * std::exp(-2.0 * std::log(2.0) * t * t /
                                               (p.duration_fwhm * p.duration_fwhm));
        }
    };
    fill(physics.pump_envelope, p.avg_power);
    if (physics.pump_envelope + 1 < physics.n_envelopes())
        fill(physics.pump_envelope + 1, p.seed_avg_power);
    return st;
}

namespace pulse_detail {

/// Spectral phase of the linear half step for one envelope, in FFT bin
/// order. Bin m of envelope e sits at absolute frequency w_e - Omega_m.
inline std::vector<std::complex<double>> linear_half_phase(const PulsePhysics& ph,
                                                           const PulseGrid& grid, int env,
                                                           double dz) {
    Fft fft(grid.samples);
    const std::vector<double> bins = fft.bin_frequencies(grid.window);
    std::vector<std::complex<double>> phase(grid.samples, 1.0);
    if (!ph.dispersion_enabled) return phase;
    const double w_e = ph.carriers[env];
    const double k_e = ph.dispersion.wavevector(w_e);
    const double w_ref = ph.carriers[ph.pump_envelope];
    const double inv_vref = ph.dispersion.group_index(w_ref) / kLightSpeed;
    for (int m = 0; m < grid.samples; ++m) {
        const double w_abs = w_e - bins[m];
        const double phi = ph.dispersion.wavevector_clamped(w_abs) - k_e + bins[m] * inv_vref;
        phase[m] = std::exp(std::complex<double>(0.0, phi * dz / 2.0));
    }
    return phase;
}

/// Nonlinear RHS dA/dz at position z (chi2 cascade + Kerr, optional
/// self-steepening and XPM). Steepening applies (1 + (i/w)d_t) to the Kerr
/// term spectrally.
inline void nonlinear_rhs(const PulsePhysics& ph, const PulseGrid& grid, const Fft& fft,
                          const Eigen::MatrixXcd& A, double z, Eigen::MatrixXcd& out) {
    using C = std::complex<double>;
    const int E = static_cast<int>(A.rows());
    const int M = static_cast<int>(A.cols());
    out.setZero(E, M);
    for (const auto& t : ph.triples) {
        const C ph_p = std::exp(C(0.0, t.dk * z));   // e^{+i dk z}
        const C ph_m = std::conj(ph_p);
        const double c_hi = ph.chi2_coeff(t.hi);
        const double c_mid = ph.chi2_coeff(t.mid);
        const double c_T = ph.chi2_coeff(0);
        for (int n = 0; n < M; ++n) {
            const C ah = A(t.hi, n), am = A(t.mid, n), at = A(0, n);
            out(t.mid, n) += C(0.0, c_mid) * ah * std::conj(at) * ph_p;
            out(0, n) += C(0.0, c_T) * ah * std::conj(am) * ph_p;
            out(t.hi, n) += C(0.0, c_hi) * am * at * ph_m;
        }
    }
    if (ph.gammaL != 0.0) {
        Eigen::VectorXd total_power;
        if (ph.xpm) {
            total_power.resize(M);
            for (int n = 0; n < M; ++n) total_power[n] = A.col(n).squaredNorm();
        }
        std::vector<C> kerr(M);
        for (int e = 0; e < E; ++e) {
            const double g = ph.kerr_coeff(e);
            for (int n = 0; n < M; ++n) {
                const double self = std::norm(A(e, n));
                const double xpm = ph.xpm ? 2.0 * (total_power[n] - self) : 0.0;
                kerr[n] = (self + xpm) * A(e, n);
            }
            if (ph.self_steepening) {
                // multiply spectrum by (1 - Omega / w_e): (1 + (i/w) d_t)
                fft.forward(kerr.data());
                const std::vector<double> bins = fft.bin_frequencies(grid.window);
                for (int m = 0; m < M; ++m) kerr[m] *= 1.0 - bins[m] / ph.carriers[e];
                fft.inverse(kerr.data());
            }
            for (int n = 0; n < M; ++n) out(e, n) += C(0.0, g) * kerr[n];
        }
    }
}

}  // namespace pulse_detail

/// Suggested step bound keeping the nonlinear phase per step below `target`.
inline double suggest_dz(const PulsePhysics& ph, const PulseState& st, double target = 0.05) {
    double peak_total = 0.0;
    for (int n = 0; n < st.grid.samples; ++n)
        peak_total = std::max(peak_total, st.fields.col(n).squaredNorm());
    const double amp = std::sqrt(2.0 * peak_total);  // headroom for conversion
    double rate = 0.0;
    for (const auto& t : ph.triples)
        rate = std::max(rate, std::sqrt(ph.chi2_coeff(t.mid) * ph.chi2_coeff(0)) * amp);
    for (int e = 0; e < ph.n_envelopes(); ++e)
        rate = std::max(rate, ph.kerr_coeff(e) * amp * amp);
    if (rate <= 0.0) return ph.length > 0.0 ? ph.length : 1.0;
    return target / rate;
}

/// Symmetric split-step propagation to z + L. Fixed step dz (the last step
/// is shortened to land on L exactly).
inline PulseState propagate(const PulsePhysics& physics, const PulseState& initial, double dz,
                            double L) {
    physics.validate(initial.grid);
    if (!(dz > 0.0) || dz > L + 1e-30) throw GridError("propagate: need 0 < dz <= L");
    const double dz_ok = suggest_dz(physics, initial);
    if (dz > dz_ok * 1.25)
        throw GridError("propagate: dz too large for nonlinear phase target; suggest dz <= " +
                        std::to_string(dz_ok));

    PulseState st = initial;
    const int E = st.n_envelopes();
    const int M = st.grid.samples;
    Fft fft(M);

    std::vector<std::vector<std::complex<double>>> lin(E);
    double lin_dz = -1.0;
    auto prepare_linear = [&](double step) {
        if (step == lin_dz) return;
        lin_dz = step;
        for (int e = 0; e < E; ++e)
            lin[e] = pulse_detail::linear_half_phase(physics, st.grid, e, step);
    };
    auto linear_half = [&](double step) {
        if (!physics.dispersion_enabled) return;
        prepare_linear(step);
        std::vector<std::complex<double>> buf(M);
        for (int e = 0; e < E; ++e) {
            for (int n = 0; n < M; ++n) buf[n] = st.fields(e, n);
            fft.forward(buf.data());
            for (int m = 0; m < M; ++m) buf[m] *= lin[e][m];
            fft.inverse(buf.data());
            for (int n = 0; n < M; ++n) st.fields(e, n) = buf[n];
        }
    };

    Eigen::MatrixXcd k1(E, M), k2(E, M), k3(E, M), k4(E, M), tmp(E, M);
    const double z_end = st.z + L;
    while (st.z < z_end - 1e-15 * std::max(1.0, z_end)) {
        const double h = std::min(dz, z_end - st.z);
        linear_half(h);
        // RK4 on the nonlinear flow over [z, z+h]
        const double z0 = st.z;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, st.fields, z0, k1);
        tmp = st.fields + 0.5 * h * k1;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, tmp, z0 + 0.5 * h, k2);
        tmp = st.fields + 0.5 * h * k2;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, tmp, z0 + 0.5 * h, k3);
        tmp = st.fields + h * k3;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, tmp, z0 + h, k4);
        st.fields += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        linear_half(h);
        st.z += h;
        if (!st.fields.allFinite())
            throw GridError("propagate: field diverged at z = " + std::to_string(st.z));
    }
    return st;
}

struct EnvelopeSpectrum {
    std::vector<double> omega;  // absolute angular frequency, ascending
    std::vector<double> psd;    // Parseval: sum(psd) = pulse energy / window
};

inline std::vector<EnvelopeSpectrum> spectrum(const PulsePhysics& physics, const PulseState& st) {
    const int M = st.grid.samples;
    Fft fft(M);
    const std::vector<double> bins = fft.bin_frequencies(st.grid.window);
    std::vector<EnvelopeSpectrum> out(st.n_envelopes());
    const double dt = st.grid.dt();
    for (int e = 0; e < st.n_envelopes(); ++e) {
        std::vector<std::complex<double>> buf(M);
        for (int n = 0; n < M; ++n) buf[n] = st.fields(e, n);
        fft.forward(buf.data());
        std::vector<std::pair<double, double>> pts(M);
        for (int m = 0; m < M; ++m)
            pts[m] = {physics.carriers[e] - bins[m],
                      std::norm(buf[m]) * dt / (M * st.grid.window)};
        std::sort(pts.begin(), pts.end());
        out[e].omega.resize(M);
        out[e].psd.resize(M);
        for (int m = 0; m < M; ++m) {
            out[e].omega[m] = pts[m].first;
            out[e].psd[m] = pts[m].second;
        }
    }
    return out;
}

struct PhotonLedger {
    double n_sub = 0.0;     // sum of subcomb envelope photon numbers
    double q_ladder = 0.0;  // N_T - sum_i i N_i
    std::vector<double> per_envelope;
};

inline PhotonLedger photon_ledger(const PulsePhysics& physics, const PulseState& st) {
    PhotonLedger ledger;
    const double dt = st.grid.dt();
    ledger.per_envelope.resize(st.n_envelopes());
    for (int e = 0; e < st.n_envelopes(); ++e) {
        const double energy = st.fields.row(e).squaredNorm() * dt;
        ledger.per_envelope[e] = energy / (kHbar * physics.carriers[e]);
    }
    ledger.q_ladder = ledger.per_envelope[0];
    for (int e = 1; e < st.n_envelopes(); ++e) {
        ledger.n_sub += ledger.per_envelope[e];
        const int i = e - physics.pump_envelope;  // subcomb index relative to pump
        ledger.q_ladder -= i * ledger.per_envelope[e];
    }
    return ledger;
}

}  // namespace combcascade
