#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "combcascade/fluct.hpp"

namespace combcascade {

/// Eigenvalue magnitudes of i Omega_sympl sigma; each value appears once
/// (the +/- i nu pair is collapsed).
inline std::vector<double> symplectic_eigenvalues(const Eigen::MatrixXd& sigma) {
    const int n2 = static_cast<int>(sigma.rows());
    const int n = n2 / 2;
    Eigen::MatrixXd Os = Eigen::MatrixXd::Zero(n2, n2);
    for (int m = 0; m < n; ++m) {
        Os(2 * m, 2 * m + 1) = 1.0;
        Os(2 * m + 1, 2 * m) = -1.0;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(Os * sigma, /*computeEigenvectors=*/false);
    std::vector<double> nu;
    nu.reserve(n);
    for (int m = 0; m < n2; ++m) {
        const std::complex<double> ev = es.eigenvalues()[m];
        if (ev.imag() >= 0.0) nu.push_back(std::abs(ev));
    }
    std::sort(nu.begin(), nu.end());
    return nu;
}

/// Variance of cos(theta) p + sin(theta) q for one mode; vacuum -> 1.
inline double quadrature_noise(const CovarianceMatrix& cov, int mode, double theta) {
    const int p = 2 * mode, q = 2 * mode + 1;
    const double c = std::cos(theta), s = std::sin(theta);
    return c * c * cov.sigma(p, p) + s * s * cov.sigma(q, q) + 2.0 * c * s * cov.sigma(p, q);
}

inline double default_dark_threshold() { return 1e-6; }  // photons/s equivalent

/// Relative intensity noise (dB re shot noise) of one output mode.
/// Linearized dP = <s_out>* ds + c.c.; shot noise for the same mean power
/// is |<s_out>|^2, so the ratio is the quadrature variance along the mean
/// field phase. Dark modes are undefined (nullopt), not zero.
inline std::optional<double> intensity_noise(const CovarianceMatrix& cov,
                                             const Eigen::VectorXcd& out_amps, int mode,
                                             double dark_threshold = default_dark_threshold()) {
    if (cov.context != CovarianceContext::Output)
        throw std::invalid_argument("intensity_noise requires an output covariance");
    if (std::norm(out_amps[mode]) < dark_threshold) return std::nullopt;
    const double phi = std::arg(out_amps[mode]);
    return 10.0 * std::log10(quadrature_noise(cov, mode, phi));
}

/// Reference level for the pairwise difference noise: the actual summed
/// single-beam variances (uncorrelated limit), or the coherent-state
/// variances of the same mean powers (shot limit). The shot reference keeps
/// single-beam excess noise visible: antisqueezed beams sit above 0 dB.
enum class NoiseNormalization { Uncorrelated, Shot };

/// Pairwise twin-beam intensity-difference noise ratios,
/// R[i][j] = <(dP_i - dP_j)^2> / <dP_i^2 + dP_j^2>.
struct NoiseMap {
    Eigen::MatrixXd ratio;      // diagonal 0 by convention
    std::vector<bool> defined;  // per-mode; undefined (dark) rows are masked

    double min_defined_off_diagonal() const {
        const int n = static_cast<int>(ratio.rows());
        double best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                if (defined[a] && defined[b]) best = std::min(best, ratio(a, b));
        return best;
    }
};

inline NoiseMap twin_beam_map(const CovarianceMatrix& cov, const Eigen::VectorXcd& out_amps,
                              double dark_threshold = default_dark_threshold(),
                              NoiseNormalization norm = NoiseNormalization::Uncorrelated) {
    if (cov.context != CovarianceContext::Output)
        throw std::invalid_argument("twin_beam_map requires an output covariance");
    const int n = cov.n_modes();
    NoiseMap map;
    map.ratio = Eigen::MatrixXd::Zero(n, n);
    map.defined.assign(n, false);
    // dP_m = |A_m| (cos(phi_m) p_m + sin(phi_m) q_m)
    std::vector<Eigen::Vector2d> dir(n);
    Eigen::VectorXd amp(n);
    for (int m = 0; m < n; ++m) {
        amp[m] = std::abs(out_amps[m]);
        map.defined[m] = std::norm(out_amps[m]) >= dark_threshold;
        const double phi = std::arg(out_amps[m]);
        dir[m] << std::cos(phi), std::sin(phi);
    }
    auto var = [&](int a, int b) {
        return amp[a] * amp[b] * dir[a].transpose() * cov.sigma.block<2, 2>(2 * a, 2 * b) * dir[b];
    };
    for (int a = 0; a < n; ++a) {
        if (!map.defined[a]) continue;
        const double va = var(a, a);
        for (int b = a + 1; b < n; ++b) {
            if (!map.defined[b]) continue;
            const double vb = var(b, b);
            const double cab = var(a, b);
            const double ref = norm == NoiseNormalization::Shot
                                   ? amp[a] * amp[a] + amp[b] * amp[b]
                                   : va + vb;
            const double r = (va + vb - 2.0 * cab) / ref;
            map.ratio(a, b) = r;
            map.ratio(b, a) = r;
        }
    }
    return map;
}

struct BipartitionResult {
    std::uint64_t subset = 0;  // bitmask over mode indices
    double nu_min = 0.0;       // minimum symplectic eigenvalue of the PT covariance
    bool entangled = false;    // nu_min < 1
};

/// PPT criterion for the bipartition (subset | rest): partial transpose is a
/// sign flip of the subset's q quadratures.
inline BipartitionResult ppt_min_symplectic(const CovarianceMatrix& cov, std::uint64_t subset) {
    const int n = cov.n_modes();
    if (n > 63) throw std::invalid_argument("ppt_min_symplectic: N must be <= 63");
    const std::uint64_t full = (n == 63) ? ~0ULL >> 1 : ((1ULL << n) - 1);
    if (subset == 0 || (subset & ~full) != 0 || subset == full)
        throw std::invalid_argument("ppt_min_symplectic: subset must be proper and nonempty");

    const std::vector<double> nu_phys = symplectic_eigenvalues(cov.sigma);
    if (nu_phys.front() < 1.0 - 1e-6)
        throw std::invalid_argument("ppt_min_symplectic: covariance is unphysical (nu_min = " +
                                    std::to_string(nu_phys.front()) + ")");

    Eigen::VectorXd flip = Eigen::VectorXd::Ones(2 * n);
    for (int m = 0; m < n; ++m)
        if (subset & (1ULL << m)) flip[2 * m + 1] = -1.0;
    const Eigen::MatrixXd sigma_pt = flip.asDiagonal() * cov.sigma * flip.asDiagonal();

    BipartitionResult r;
    r.subset = subset;
    r.nu_min = symplectic_eigenvalues(sigma_pt).front();
    r.entangled = r.nu_min < 1.0 - 1e-9;
    return r;
}

/// Canonical bipartition order: subsets by size (1 .. floor(N/2)), then
/// lexicographic by member indices within a size; complements deduplicated.
/// The designated subset (idler comb) is appended when not already present.
inline std::vector<std::uint64_t> enumerate_bipartitions(int n, std::size_t limit = 1000,
                                                         std::uint64_t designated = 0) {
    if (n < 2 || n > 63) throw std::invalid_argument("enumerate_bipartitions: need 2 <= N <= 63");
    std::vector<std::uint64_t> out;
    const int max_size = n / 2;
    std::vector<int> idx;
    for (int size = 1; size <= max_size && out.size() < limit; ++size) {
        idx.resize(size);
        for (int s = 0; s < size; ++s) idx[s] = s;
        while (true) {
            // For the even split, keep only subsets containing mode 0 so each
            // bipartition is counted once.
            if (!(2 * size == n && idx[0] != 0)) {
                std::uint64_t mask = 0;
                for (int s : idx) mask |= 1ULL << s;
                out.push_back(mask);
                if (out.size() >= limit) break;
            }
            int p = size - 1;
            while (p >= 0 && idx[p] == n - size + p) --p;
            if (p < 0) break;
            ++idx[p];
            for (int s = p + 1; s < size; ++s) idx[s] = idx[s - 1] + 1;
        }
    }
    if (designated != 0) {
        std::uint64_t canon = designated;
        const std::uint64_t full = (1ULL << n) - 1;
        const std::uint64_t comp = full & ~designated;
        if (std::popcount(comp) < std::popcount(designated) ||
            (2 * std::popcount(designated) == n && !(designated & 1ULL)))
            canon = comp;
        bool present = false;
        for (std::uint64_t m : out)
            if (m == canon || m == comp || m == designated) present = true;
        if (!present) out.push_back(canon);
    }
    return out;
}

}  // namespace combcascade
