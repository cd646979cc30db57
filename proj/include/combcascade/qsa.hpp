#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "combcascade/constants.hpp"
#include "combcascade/fft.hpp"
#include "combcascade/fluct.hpp"
#include "combcascade/pulse.hpp"

namespace combcascade {

struct QsaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace qsa_detail {

/// Per-sample derivative matrices of the nonlinear RHS at one time sample:
/// dF = A da + B conj(da), a = envelope column at that sample. Valid only
/// for per-sample-local nonlinearities (no self-steepening).
inline void local_derivs(const PulsePhysics& ph, const Eigen::VectorXcd& a, double z,
                         Eigen::MatrixXcd& A, Eigen::MatrixXcd& B) {
    using C = std::complex<double>;
    const int E = static_cast<int>(a.size());
    A.setZero(E, E);
    B.setZero(E, E);
    for (const auto& t : ph.triples) {
        const C ph_p = std::exp(C(0.0, t.dk * z));
        const C ph_m = std::conj(ph_p);
        const C ic_mid(0.0, ph.chi2_coeff(t.mid));
        const C ic_T(0.0, ph.chi2_coeff(0));
        const C ic_hi(0.0, ph.chi2_coeff(t.hi));
        A(t.mid, t.hi) += ic_mid * std::conj(a[0]) * ph_p;
        B(t.mid, 0) += ic_mid * a[t.hi] * ph_p;
        A(0, t.hi) += ic_T * std::conj(a[t.mid]) * ph_p;
        B(0, t.mid) += ic_T * a[t.hi] * ph_p;
        A(t.hi, t.mid) += ic_hi * a[0] * ph_m;
        A(t.hi, 0) += ic_hi * a[t.mid] * ph_m;
    }
    if (ph.gammaL != 0.0) {
        for (int e = 0; e < E; ++e) {
            const C ig(0.0, ph.kerr_coeff(e));
            A(e, e) += 2.0 * ig * std::norm(a[e]);
            B(e, e) += ig * a[e] * a[e];
            if (ph.xpm) {
                for (int o = 0; o < E; ++o) {
                    if (o == e) continue;
                    A(e, e) += 2.0 * ig * std::norm(a[o]);
                    A(e, o) += 2.0 * ig * a[e] * std::conj(a[o]);
                    B(e, o) += 2.0 * ig * a[e] * a[o];
                }
            }
        }
    }
}

/// Exact linearization of the classical RK4 substep at one sample,
/// as a complex pair: d_out = Ps d_in + Qs conj(d_in).
struct StageStates {
    Eigen::VectorXcd s1, s2, s3, s4;
    double z0 = 0.0, h = 0.0;
};

inline void rk4_local_jacobian(const PulsePhysics& ph, const StageStates& st, Eigen::MatrixXcd& Ps,
                               Eigen::MatrixXcd& Qs) {
    const int E = static_cast<int>(st.s1.size());
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(E, E);
    Eigen::MatrixXcd A(E, E), B(E, E);
    const double h = st.h;

    local_derivs(ph, st.s1, st.z0, A, B);
    const Eigen::MatrixXcd Pk1 = A, Qk1 = B;

    local_derivs(ph, st.s2, st.z0 + 0.5 * h, A, B);
    Eigen::MatrixXcd P = I + 0.5 * h * Pk1, Q = 0.5 * h * Qk1;
    const Eigen::MatrixXcd Pk2 = A * P + B * Q.conjugate();
    const Eigen::MatrixXcd Qk2 = A * Q + B * P.conjugate();

    local_derivs(ph, st.s3, st.z0 + 0.5 * h, A, B);
    P = I + 0.5 * h * Pk2;
    Q = 0.5 * h * Qk2;
    const Eigen::MatrixXcd Pk3 = A * P + B * Q.conjugate();
    const Eigen::MatrixXcd Qk3 = A * Q + B * P.conjugate();

    local_derivs(ph, st.s4, st.z0 + h, A, B);
    P = I + h * Pk3;
    Q = h * Qk3;
    const Eigen::MatrixXcd Pk4 = A * P + B * Q.conjugate();
    const Eigen::MatrixXcd Qk4 = A * Q + B * P.conjugate();

    Ps = I + (h / 6.0) * (Pk1 + 2.0 * Pk2 + 2.0 * Pk3 + Pk4);
    Qs = (h / 6.0) * (Qk1 + 2.0 * Qk2 + 2.0 * Qk3 + Qk4);
}

}  // namespace qsa_detail

struct QsaResult;

struct QsaOptions {
    double memory_cap_bytes = 4e9;
    std::function<void(double z, const QsaResult&)> checkpoint;  // after each step
};

/// Linearized input-output map of the full split-step propagation, as a
/// Bogoliubov pair over flattened (envelope, sample) indices r = e*M + n:
///   dA_out = P dA_in + Q conj(dA_in).
struct QsaResult {
    PulseState out;
    Eigen::MatrixXcd P, Q;
    int steps = 0;
};

inline QsaResult propagate_with_jacobian(const PulsePhysics& physics, const PulseState& initial,
                                         double dz, double L, const QsaOptions& opt = {}) {
    physics.validate(initial.grid);
    if (physics.self_steepening)
        throw QsaError(
            "jacobian propagation does not support self-steepening (non-local nonlinear step)");
    if (!(dz > 0.0) || dz > L + 1e-30) throw QsaError("propagate_with_jacobian: need 0 < dz <= L");
    const double dz_ok = suggest_dz(physics, initial);
    if (dz > dz_ok * 1.25)
        throw QsaError("propagate_with_jacobian: dz too large; suggest dz <= " +
                       std::to_string(dz_ok));

    const int E = initial.n_envelopes();
    const int M = initial.grid.samples;
    const std::ptrdiff_t dim = static_cast<std::ptrdiff_t>(E) * M;
    // P, Q plus same-size step buffers and workspace
    const double bytes = 4.0 * static_cast<double>(dim) * dim * 16.0 * 1.15;
    if (bytes > opt.memory_cap_bytes)
        throw QsaError("jacobian storage would need " + std::to_string(bytes / 1e9) +
                       " GB, over the cap of " + std::to_string(opt.memory_cap_bytes / 1e9) +
                       " GB; reduce the grid");

    QsaResult res;
    res.out = initial;
    res.P = Eigen::MatrixXcd::Identity(dim, dim);
    res.Q = Eigen::MatrixXcd::Zero(dim, dim);
    PulseState& st = res.out;
    Fft fft(M);

    std::vector<std::vector<std::complex<double>>> lin(E);
    double lin_dz = -1.0;
    auto linear_half = [&](double step) {
        if (!physics.dispersion_enabled) return;
        if (step != lin_dz) {
            lin_dz = step;
            for (int e = 0; e < E; ++e)
                lin[e] = pulse_detail::linear_half_phase(physics, st.grid, e, step);
        }
        std::vector<std::complex<double>> buf(M);
        for (int e = 0; e < E; ++e) {
            for (int n = 0; n < M; ++n) buf[n] = st.fields(e, n);
            fft.forward(buf.data());
            for (int m = 0; m < M; ++m) buf[m] *= lin[e][m];
            fft.inverse(buf.data());
            for (int n = 0; n < M; ++n) st.fields(e, n) = buf[n];
        }
        // same diagonal filter on every output row of the accumulated maps
        for (Eigen::MatrixXcd* J : {&res.P, &res.Q}) {
            for (std::ptrdiff_t c = 0; c < dim; ++c) {
                std::complex<double>* col = J->col(c).data();
                for (int e = 0; e < E; ++e) {
                    fft.forward(col + static_cast<std::ptrdiff_t>(e) * M);
                    for (int m = 0; m < M; ++m)
                        col[static_cast<std::ptrdiff_t>(e) * M + m] *= lin[e][m];
                    fft.inverse(col + static_cast<std::ptrdiff_t>(e) * M);
                }
            }
        }
    };

    Eigen::MatrixXcd k1(E, M), k2(E, M), k3(E, M), k4(E, M), t2(E, M), t3(E, M), t4(E, M);
    Eigen::MatrixXcd Ps(E, E), Qs(E, E);
    // Per-sample slab coefficients, regrouped as one length-M vector per
    // envelope pair so the row-block update below runs on contiguous
    // column segments instead of stride-M row gathers.
    std::vector<Eigen::VectorXcd> cP(static_cast<std::size_t>(E) * E),
        cQ(static_cast<std::size_t>(E) * E);
    for (auto& v : cP) v.resize(M);
    for (auto& v : cQ) v.resize(M);
    Eigen::MatrixXcd newP(dim, dim), newQ(dim, dim);
    const double z_end = st.z + L;
    while (st.z < z_end - 1e-15 * std::max(1.0, z_end)) {
        const double h = std::min(dz, z_end - st.z);
        linear_half(h);
        const double z0 = st.z;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, st.fields, z0, k1);
        t2 = st.fields + 0.5 * h * k1;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, t2, z0 + 0.5 * h, k2);
        t3 = st.fields + 0.5 * h * k2;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, t3, z0 + 0.5 * h, k3);
        t4 = st.fields + h * k3;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, t4, z0 + h, k4);

        qsa_detail::StageStates stages;
        stages.z0 = z0;
        stages.h = h;
        for (int n = 0; n < M; ++n) {
            stages.s1 = st.fields.col(n);
            stages.s2 = t2.col(n);
            stages.s3 = t3.col(n);
            stages.s4 = t4.col(n);
            qsa_detail::rk4_local_jacobian(physics, stages, Ps, Qs);
            for (int eo = 0; eo < E; ++eo)
                for (int ei = 0; ei < E; ++ei) {
                    cP[static_cast<std::size_t>(eo) * E + ei](n) = Ps(eo, ei);
                    cQ[static_cast<std::size_t>(eo) * E + ei](n) = Qs(eo, ei);
                }
        }
        for (int eo = 0; eo < E; ++eo) {
            auto pb = newP.middleRows(static_cast<std::ptrdiff_t>(eo) * M, M);
            auto qb = newQ.middleRows(static_cast<std::ptrdiff_t>(eo) * M, M);
            pb.setZero();
            qb.setZero();
            for (int ei = 0; ei < E; ++ei) {
                const auto& p = cP[static_cast<std::size_t>(eo) * E + ei];
                const auto& q = cQ[static_cast<std::size_t>(eo) * E + ei];
                const auto Pin = res.P.middleRows(static_cast<std::ptrdiff_t>(ei) * M, M);
                const auto Qin = res.Q.middleRows(static_cast<std::ptrdiff_t>(ei) * M, M);
                pb.noalias() += p.asDiagonal() * Pin;
                pb.noalias() += q.asDiagonal() * Qin.conjugate();
                qb.noalias() += p.asDiagonal() * Qin;
                qb.noalias() += q.asDiagonal() * Pin.conjugate();
            }
        }
        res.P.swap(newP);
        res.Q.swap(newQ);

        st.fields += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        linear_half(h);
        st.z += h;
        ++res.steps;
        if (!st.fields.allFinite())
            throw QsaError("propagate_with_jacobian: field diverged at z = " + std::to_string(st.z));
        if (opt.checkpoint) opt.checkpoint(st.z, res);
    }
    return res;
}

/// Propagates explicit perturbation vectors (columns of `deltas`, flattened
/// e*M + n) through the linearized step chain without composing matrices.
/// Independent cross-check path for the accumulated Jacobian.
inline Eigen::MatrixXcd propagate_linearized(const PulsePhysics& physics, const PulseState& initial,
                                             double dz, double L, const Eigen::MatrixXcd& deltas) {
    physics.validate(initial.grid);
    if (physics.self_steepening)
        throw QsaError("linearized propagation does not support self-steepening");
    const int E = initial.n_envelopes();
    const int M = initial.grid.samples;
    const std::ptrdiff_t dim = static_cast<std::ptrdiff_t>(E) * M;
    if (deltas.rows() != dim) throw QsaError("propagate_linearized: bad perturbation length");

    PulseState st = initial;
    Eigen::MatrixXcd d = deltas;
    Fft fft(M);

    std::vector<std::vector<std::complex<double>>> lin(E);
    double lin_dz = -1.0;
    auto linear_half = [&](double step) {
        if (!physics.dispersion_enabled) return;
        if (step != lin_dz) {
            lin_dz = step;
            for (int e = 0; e < E; ++e)
                lin[e] = pulse_detail::linear_half_phase(physics, st.grid, e, step);
        }
        std::vector<std::complex<double>> buf(M);
        auto filter_rowset = [&](std::complex<double>* base) {
            for (int e = 0; e < E; ++e) {
                fft.forward(base + static_cast<std::ptrdiff_t>(e) * M);
                for (int m = 0; m < M; ++m) base[static_cast<std::ptrdiff_t>(e) * M + m] *= lin[e][m];
                fft.inverse(base + static_cast<std::ptrdiff_t>(e) * M);
            }
        };
        for (int e = 0; e < E; ++e) {
            for (int n = 0; n < M; ++n) buf[n] = st.fields(e, n);
            fft.forward(buf.data());
            for (int m = 0; m < M; ++m) buf[m] *= lin[e][m];
            fft.inverse(buf.data());
            for (int n = 0; n < M; ++n) st.fields(e, n) = buf[n];
        }
        for (Eigen::Index c = 0; c < d.cols(); ++c) filter_rowset(d.col(c).data());
    };

    Eigen::MatrixXcd k1(E, M), k2(E, M), k3(E, M), k4(E, M), t2(E, M), t3(E, M), t4(E, M);
    Eigen::MatrixXcd A(E, E), B(E, E);
    const double z_end = st.z + L;
    while (st.z < z_end - 1e-15 * std::max(1.0, z_end)) {
        const double h = std::min(dz, z_end - st.z);
        linear_half(h);
        const double z0 = st.z;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, st.fields, z0, k1);
        t2 = st.fields + 0.5 * h * k1;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, t2, z0 + 0.5 * h, k2);
        t3 = st.fields + 0.5 * h * k2;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, t3, z0 + 0.5 * h, k3);
        t4 = st.fields + h * k3;
        pulse_detail::nonlinear_rhs(physics, st.grid, fft, t4, z0 + h, k4);

        for (Eigen::Index c = 0; c < d.cols(); ++c) {
            for (int n = 0; n < M; ++n) {
                Eigen::VectorXcd v(E);
                for (int e = 0; e < E; ++e) v[e] = d(static_cast<std::ptrdiff_t>(e) * M + n, c);
                auto stage = [&](const Eigen::VectorXcd& s, double z,
                                 const Eigen::VectorXcd& vin) -> Eigen::VectorXcd {
                    qsa_detail::local_derivs(physics, s, z, A, B);
                    return A * vin + B * vin.conjugate();
                };
                const Eigen::VectorXcd d1 = stage(st.fields.col(n), z0, v);
                const Eigen::VectorXcd d2 = stage(t2.col(n), z0 + 0.5 * h, v + 0.5 * h * d1);
                const Eigen::VectorXcd d3 = stage(t3.col(n), z0 + 0.5 * h, v + 0.5 * h * d2);
                const Eigen::VectorXcd d4 = stage(t4.col(n), z0 + h, v + h * d3);
                v += (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
                for (int e = 0; e < E; ++e) d(static_cast<std::ptrdiff_t>(e) * M + n, c) = v[e];
            }
        }

        st.fields += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        linear_half(h);
        st.z += h;
    }
    return d;
}

/// Diagonal scaling into photon-amplitude units, b = lambda * A with
/// lambda_{e,n} = sqrt(dt / (hbar w_e)); vacuum is then sigma = I.
inline Eigen::VectorXd photon_scaling(const PulsePhysics& physics, const PulseGrid& grid) {
    const int E = physics.n_envelopes();
    const int M = grid.samples;
    Eigen::VectorXd lambda(static_cast<std::ptrdiff_t>(E) * M);
    for (int e = 0; e < E; ++e)
        lambda.segment(static_cast<std::ptrdiff_t>(e) * M, M)
            .setConstant(std::sqrt(grid.dt() / (kHbar * physics.carriers[e])));
    return lambda;
}

/// Residual of the Bogoliubov conditions P P^H - Q Q^H = I, P Q^T = (P Q^T)^T
/// for the photon-basis pair; zero for exactly symplectic propagation.
inline double bogoliubov_defect(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& Q) {
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(P.rows(), P.cols());
    const double d1 = (P * P.adjoint() - Q * Q.adjoint() - I).cwiseAbs().maxCoeff();
    const Eigen::MatrixXcd PQ = P * Q.transpose();
    const double d2 = (PQ - PQ.transpose()).cwiseAbs().maxCoeff();
    return std::max(d1, d2);
}

struct UltrafastCovariance {
    Eigen::MatrixXd sigma;  // 2 E M x 2 E M quadratures, photon basis, vacuum = I
    int envelopes = 0;
    int samples = 0;
};

/// Output quadrature covariance for vacuum-seeded fluctuations: the photon
/// basis Bogoliubov pair becomes a real symplectic S, sigma = S S^T.
inline UltrafastCovariance output_covariance_ultrafast(const PulsePhysics& physics,
                                                       const QsaResult& res) {
    const Eigen::VectorXd lam = photon_scaling(physics, res.out.grid);
    const Eigen::VectorXd inv = lam.cwiseInverse();
    const Eigen::MatrixXcd Pb = lam.asDiagonal() * res.P * inv.asDiagonal();
    const Eigen::MatrixXcd Qb = lam.asDiagonal() * res.Q * inv.asDiagonal();
    const Eigen::MatrixXd S = quadrature_matrix(Pb, Qb);
    UltrafastCovariance cov;
    cov.envelopes = res.out.n_envelopes();
    cov.samples = res.out.grid.samples;
    cov.sigma = S * S.transpose();
    cov.sigma = 0.5 * (cov.sigma + cov.sigma.transpose().eval());
    return cov;
}

/// Real quadrature-basis Jacobian over all (envelope, sample) modes in
/// photon units, interleaved (p, q) per mode; vacuum in -> sigma = J J^T.
struct JacobianState {
    Eigen::MatrixXd J;
    PulseState mean;
    double z = 0.0;
    int envelopes = 0;
    int samples = 0;
};

inline JacobianState jacobian_state(const PulsePhysics& physics, const QsaResult& res) {
    const Eigen::VectorXd lam = photon_scaling(physics, res.out.grid);
    const Eigen::VectorXd inv = lam.cwiseInverse();
    JacobianState js;
    js.J = quadrature_matrix(lam.asDiagonal() * res.P * inv.asDiagonal(),
                             lam.asDiagonal() * res.Q * inv.asDiagonal());
    js.mean = res.out;
    js.z = res.out.z;
    js.envelopes = res.out.n_envelopes();
    js.samples = res.out.grid.samples;
    return js;
}

/// max |J Omega J^T - Omega|; zero for exactly symplectic J.
inline double symplectic_defect(const Eigen::MatrixXd& J) {
    const int n = static_cast<int>(J.rows()) / 2;
    Eigen::MatrixXd Om = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (int m = 0; m < n; ++m) {
        Om(2 * m, 2 * m + 1) = 1.0;
        Om(2 * m + 1, 2 * m) = -1.0;
    }
    return (J * Om * J.transpose() - Om).cwiseAbs().maxCoeff();
}

inline UltrafastCovariance output_covariance_ultrafast(const JacobianState& js) {
    UltrafastCovariance cov;
    cov.envelopes = js.envelopes;
    cov.samples = js.samples;
    cov.sigma = js.J * js.J.transpose();
    cov.sigma = 0.5 * (cov.sigma + cov.sigma.transpose().eval());
    return cov;
}

enum class MapDomain { Time, Frequency };

/// Axis of equally spaced bins centered on 0: centers k*width for
/// |k*width| <= half_range. Time domain in seconds; frequency domain in Hz
/// of detuning from each envelope's carrier.
struct BinSpec {
    MapDomain domain = MapDomain::Time;
    double half_range = 0.0;
    double width = 0.0;

    int side_count() const { return static_cast<int>(std::floor(half_range / width + 1e-9)); }
    int count() const { return 2 * side_count() + 1; }
};

struct BinInfo {
    int envelope = 0;
    double center = 0.0;  // s or Hz detuning
    double width = 0.0;
};

/// Pairwise binned intensity-difference noise over all bins of all
/// envelopes, normalized to the coherent (shot) baseline so that
/// uncorrelated coherent light sits at 0 dB:
///   R_ab = Var(dN_a - dN_b) / (Nbar_a + Nbar_b).
struct BinnedNoiseMap {
    MapDomain domain = MapDomain::Time;
    std::vector<BinInfo> bins;        // all envelopes concatenated
    Eigen::VectorXd mean_photons;     // per bin
    Eigen::VectorXd self_noise_db;    // 10 log10(Var dN / Nbar)
    Eigen::MatrixXd ratio;            // pairwise; diagonal 0 by convention
    std::vector<bool> defined;        // dark bins masked

    int n_bins() const { return static_cast<int>(bins.size()); }
};

inline BinnedNoiseMap binned_intensity_map(const PulsePhysics& physics, const PulseState& mean_state,
                                           const UltrafastCovariance& cov, const BinSpec& spec,
                                           double rel_dark_threshold = 1e-9) {
    if (!(spec.width > 0.0) || !(spec.half_range >= spec.width / 2.0))
        throw QsaError("binned_intensity_map: bin width/range invalid");
    const int E = mean_state.n_envelopes();
    const int M = mean_state.grid.samples;
    const std::ptrdiff_t dim = static_cast<std::ptrdiff_t>(E) * M;
    const Eigen::VectorXd lam = photon_scaling(physics, mean_state.grid);
    Fft fft(M);

    // photon-basis mean field and per-sample coordinate in the chosen domain
    Eigen::MatrixXcd mean(E, M);
    Eigen::MatrixXd coord(E, M);
    const double dt = mean_state.grid.dt();
    for (int e = 0; e < E; ++e) {
        for (int n = 0; n < M; ++n)
            mean(e, n) = mean_state.fields(e, n) * lam[static_cast<std::ptrdiff_t>(e) * M + n];
        if (spec.domain == MapDomain::Time) {
            for (int n = 0; n < M; ++n) coord(e, n) = (n - M / 2) * dt;
        } else {
            std::vector<std::complex<double>> buf(M);
            for (int n = 0; n < M; ++n) buf[n] = mean(e, n);
            fft.forward(buf.data());
            const double s = 1.0 / std::sqrt(static_cast<double>(M));  // unitary per envelope
            const std::vector<double> binsw = fft.bin_frequencies(mean_state.grid.window);
            for (int m = 0; m < M; ++m) {
                mean(e, m) = buf[m] * s;
                coord(e, m) = -binsw[m] / (2.0 * kPi);  // detuning of bin m from carrier
            }
        }
    }

    // frequency domain: rotate the covariance by the same per-envelope DFT
    Eigen::MatrixXd sigma = cov.sigma;
    if (spec.domain == MapDomain::Frequency) {
        Eigen::MatrixXcd U = Eigen::MatrixXcd::Zero(dim, dim);
        const double s = 1.0 / std::sqrt(static_cast<double>(M));
        for (int e = 0; e < E; ++e)
            for (int m = 0; m < M; ++m)
                for (int n = 0; n < M; ++n)
                    U(static_cast<std::ptrdiff_t>(e) * M + m,
                      static_cast<std::ptrdiff_t>(e) * M + n) =
                        s * std::exp(std::complex<double>(0.0, -2.0 * kPi * m * n / M));
        const Eigen::MatrixXd R = quadrature_matrix(U, Eigen::MatrixXcd::Zero(dim, dim));
        sigma = R * sigma * R.transpose();
    }

    const int side = spec.side_count();
    const int per_env = spec.count();
    const int B = E * per_env;

    BinnedNoiseMap map;
    map.domain = spec.domain;
    map.bins.reserve(B);
    for (int e = 0; e < E; ++e)
        for (int k = -side; k <= side; ++k)
            map.bins.push_back({e, k * spec.width, spec.width});

    // dN_bin = sum_{m in bin} (conj(b) db + c.c.): v[2r] = Re b, v[2r+1] = Im b
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(2 * dim, B);
    map.mean_photons = Eigen::VectorXd::Zero(B);
    for (int e = 0; e < E; ++e) {
        for (int m = 0; m < M; ++m) {
            const int k = static_cast<int>(std::lround(coord(e, m) / spec.width));
            if (k < -side || k > side) continue;
            const int b = e * per_env + (k + side);
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(e) * M + m;
            V(2 * r, b) += mean(e, m).real();
            V(2 * r + 1, b) += mean(e, m).imag();
            map.mean_photons[b] += std::norm(mean(e, m));
        }
    }

    const Eigen::MatrixXd C = V.transpose() * sigma * V;  // pairwise covariances of dN
    map.ratio = Eigen::MatrixXd::Zero(B, B);
    map.self_noise_db = Eigen::VectorXd::Zero(B);
    map.defined.assign(B, false);
    const double peak = map.mean_photons.maxCoeff();
    for (int a = 0; a < B; ++a) {
        map.defined[a] = map.mean_photons[a] > rel_dark_threshold * std::max(peak, 1e-300);
        if (map.defined[a])
            map.self_noise_db[a] =
                10.0 * std::log10(std::max(C(a, a) / map.mean_photons[a], 1e-30));
    }
    for (int a = 0; a < B; ++a) {
        if (!map.defined[a]) continue;
        for (int b = a + 1; b < B; ++b) {
            if (!map.defined[b]) continue;
            const double r = (C(a, a) + C(b, b) - 2.0 * C(a, b)) /
                             (map.mean_photons[a] + map.mean_photons[b]);
            map.ratio(a, b) = r;
            map.ratio(b, a) = r;
        }
    }
    return map;
}

}  // namespace combcascade
