#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace uvoc {

/// Second-order IIR section, transposed direct form II, a0 normalized to 1.
struct Biquad {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    /// H(e^{j omega T}).
    std::complex<double> response(double omega, double T) const;
};

struct BiquadState {
    double s1 = 0.0, s2 = 0.0;

    double step(const Biquad& f, double x) {
        const double y = f.b0 * x + s1;
        s1 = f.b1 * x - f.a1 * y + s2;
        s2 = f.b2 * x - f.a2 * y;
        return y;
    }
};

/// Bilinear transform of (b2 s^2 + b1 s + b0) / (a2 s^2 + a1 s + a0) with the
/// frequency warping removed at `omega_match`.
Biquad bilinear_prewarped(double b2, double b1, double b0, double a2, double a1, double a0,
                          double omega_match, double T);

/// Fractional delay line used to synthesize the beta axis of single-phase
/// quantities: y(t) = x(t - delay), linearly interpolated between samples.
class FractionalDelay {
public:
    FractionalDelay() = default;
    FractionalDelay(double delay, double T);

    /// Push the newest sample and return the delayed value (0 until warm).
    double push(double x);
    bool warm() const { return count_ > whole_ + 1; }
    void reset();

private:
    std::vector<double> buffer_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    std::size_t whole_ = 0;
    double frac_ = 0.0;
};

}  // namespace uvoc
