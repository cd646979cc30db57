#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "combcascade/constants.hpp"

namespace combcascade {

/// Refractive index model. Either a fixed index or a Sellmeier form
///   n^2 = 1 + sum_i b[i] L^2 / (L^2 - c[i]),  L = wavelength in um.
/// Evaluation outside [lambda_min_um, lambda_max_um] throws; there is no
/// silent extrapolation. index_clamped() instead pins the wavelength to
/// the window edge, which is what per-bin spectral filters use for the
/// dark far wings of a wide grid.
struct DispersionModel {
    std::string name = "none";
    bool sellmeier = false;
    double n_const = 1.0;
    std::vector<double> b;
    std::vector<double> c;
    double lambda_min_um = 0.0;
    double lambda_max_um = 1e9;

    // Congruent lithium niobate (Zelmon et al. 1997). The published fit
    // covers ~0.4-5 um; the evaluable window here is wider so that the
    // UV subcombs and most of the idler pulse grid stay inside it. The
    // window top sits where the fitted n^2 is still positive for both
    // rays (it crosses zero near 11.8 um for the e ray on the way to the
    // 20.4 um pole).
    static DispersionModel lithium_niobate_e() {
        DispersionModel m;
        m.name = "linbo3_e";
        m.sellmeier = true;
        m.b = {2.9804, 0.5981, 8.9543};
        m.c = {0.02047, 0.0666, 416.08};
        m.lambda_min_um = 0.30;
        m.lambda_max_um = 11.0;
        return m;
    }

    static DispersionModel lithium_niobate_o() {
        DispersionModel m;
        m.name = "linbo3_o";
        m.sellmeier = true;
        m.b = {2.6734, 1.2290, 12.614};
        m.c = {0.01764, 0.05914, 474.60};
        m.lambda_min_um = 0.30;
        m.lambda_max_um = 11.0;
        return m;
    }

    static DispersionModel constant(double n) {
        DispersionModel m;
        m.name = "constant";
        m.n_const = n;
        return m;
    }

    static DispersionModel from_name(const std::string& s) {
        if (s == "linbo3_e") return lithium_niobate_e();
        if (s == "linbo3_o") return lithium_niobate_o();
        if (s == "none" || s == "vacuum") return constant(1.0);
        throw std::invalid_argument("unknown dispersion model: " + s);
    }

    double index_at(double omega) const {
        if (!sellmeier) return n_const;
        if (omega <= 0.0) throw std::out_of_range("dispersion: omega must be positive");
        const double lam = 2.0 * kPi * kLightSpeed / omega * 1e6;  // um
        if (lam < lambda_min_um || lam > lambda_max_um)
            throw std::out_of_range("dispersion '" + name + "': wavelength " +
                                    std::to_string(lam) + " um outside [" +
                                    std::to_string(lambda_min_um) + ", " +
                                    std::to_string(lambda_max_um) + "] um");
        return index_of_wavelength(lam);
    }

    /// Like index_at but pins out-of-window wavelengths to the nearest
    /// window edge instead of throwing.
    double index_clamped(double omega) const {
        if (!sellmeier) return n_const;
        // Non-positive frequencies (empty far wings of a wide grid) pin to
        // the long-wavelength edge.
        if (omega <= 0.0) return index_of_wavelength(lambda_max_um);
        double lam = 2.0 * kPi * kLightSpeed / omega * 1e6;  // um
        lam = std::clamp(lam, lambda_min_um, lambda_max_um);
        return index_of_wavelength(lam);
    }

    double index_of_wavelength(double lam_um) const {
        const double l2 = lam_um * lam_um;
        double n2 = 1.0;
        for (std::size_t i = 0; i < b.size(); ++i) n2 += b[i] * l2 / (l2 - c[i]);
        return std::sqrt(n2);
    }

    /// k(omega) = n(omega) * omega / c
    double wavevector(double omega) const { return index_at(omega) * omega / kLightSpeed; }

    double wavevector_clamped(double omega) const {
        return index_clamped(omega) * omega / kLightSpeed;
    }

    /// Group index n_g = n + omega dn/domega, from the analytic Sellmeier derivative.
    double group_index(double omega) const {
        if (!sellmeier) return n_const;
        const double n = index_at(omega);
        const double lam = 2.0 * kPi * kLightSpeed / omega * 1e6;  // um
        const double l2 = lam * lam;
        double dn2_dlam = 0.0;  // per um
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double d = l2 - c[i];
            dn2_dlam += -2.0 * b[i] * c[i] * lam / (d * d);
        }
        const double dn_dlam = dn2_dlam / (2.0 * n);
        // dlam/domega = -lam/omega
        const double omega_dn_domega = -lam * dn_dlam;
        return n + omega_dn_domega;
    }
};

}  // namespace combcascade
