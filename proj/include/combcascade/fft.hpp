#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "combcascade/constants.hpp"

namespace combcascade {

/// Radix-2 in-place FFT for power-of-two sizes, with cached twiddles.
/// Convention: forward applies exp(-i 2 pi n m / M), inverse divides by M.
class Fft {
public:
    explicit Fft(int m) : m_(m) {
        if (m < 1 || (m & (m - 1)) != 0) throw std::invalid_argument("Fft: size must be a power of two");
        tw_.resize(m / 2);
        for (int k = 0; k < m / 2; ++k)
            tw_[k] = std::exp(std::complex<double>(0.0, -2.0 * kPi * k / m));
    }

    int size() const { return m_; }

    void forward(std::complex<double>* x) const { transform(x, false); }
    void inverse(std::complex<double>* x) const {
        transform(x, true);
        const double s = 1.0 / m_;
        for (int n = 0; n < m_; ++n) x[n] *= s;
    }

    /// Grid angular frequencies Omega_m in FFT bin order (0, positive, negative).
    std::vector<double> bin_frequencies(double window) const {
        std::vector<double> w(m_);
        const double dw = 2.0 * kPi / window;
        for (int k = 0; k < m_; ++k) w[k] = dw * (k < m_ / 2 ? k : k - m_);
        return w;
    }

private:
    void transform(std::complex<double>* x, bool inv) const {
        // bit reversal
        for (int i = 1, j = 0; i < m_; ++i) {
            int bit = m_ >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(x[i], x[j]);
        }
        for (int len = 2; len <= m_; len <<= 1) {
            const int step = m_ / len;
            for (int i = 0; i < m_; i += len) {
                for (int k = 0; k < len / 2; ++k) {
                    std::complex<double> w = tw_[k * step];
                    if (inv) w = std::conj(w);
                    const std::complex<double> u = x[i + k];
                    const std::complex<double> v = x[i + k + len / 2] * w;
                    x[i + k] = u + v;
                    x[i + k + len / 2] = u - v;
                }
            }
        }
    }

    int m_;
    std::vector<std::complex<double>> tw_;
};

}  // namespace combcascade
