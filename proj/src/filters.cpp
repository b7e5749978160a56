#include "uvoc/filters.hpp"

#include <cmath>

#include "uvoc/errors.hpp"

namespace uvoc {

std::complex<double> Biquad::response(double omega, double T) const {
    const std::complex<double> zi = std::polar(1.0, -omega * T);
    const auto num = b0 + b1 * zi + b2 * zi * zi;
    const auto den = 1.0 + a1 * zi + a2 * zi * zi;
    return num / den;
}

Biquad bilinear_prewarped(double b2, double b1, double b0, double a2, double a1, double a0,
                          double omega_match, double T) {
    // s = K (z - 1) / (z + 1); multiply through by (z + 1)^2.
    const double K = omega_match > 0.0 ? omega_match / std::tan(0.5 * omega_match * T) : 2.0 / T;
    const double K2 = K * K;
    const double n0 = b2 * K2 + b1 * K + b0;
    const double n1 = -2.0 * b2 * K2 + 2.0 * b0;
    const double n2 = b2 * K2 - b1 * K + b0;
    const double d0 = a2 * K2 + a1 * K + a0;
    const double d1 = -2.0 * a2 * K2 + 2.0 * a0;
    const double d2 = a2 * K2 - a1 * K + a0;
    if (d0 == 0.0) throw Error(ErrorKind::InvalidArgument, "bilinear transform: singular denominator");
    return {n0 / d0, n1 / d0, n2 / d0, d1 / d0, d2 / d0};
}

FractionalDelay::FractionalDelay(double delay, double T) {
    if (!(delay >= 0.0) || !(T > 0.0)) throw Error(ErrorKind::InvalidArgument, "fractional delay needs delay >= 0, T > 0");
    const double samples = delay / T;
    whole_ = static_cast<std::size_t>(std::floor(samples));
    frac_ = samples - static_cast<double>(whole_);
    buffer_.assign(whole_ + 2, 0.0);
}

void FractionalDelay::reset() {
    std::fill(buffer_.begin(), buffer_.end(), 0.0);
    head_ = 0;
    count_ = 0;
}

double FractionalDelay::push(double x) {
    if (buffer_.empty()) return x;
    const std::size_t n = buffer_.size();
    head_ = (head_ + 1) % n;
    buffer_[head_] = x;
    ++count_;
    if (!warm()) return 0.0;
    const double newer = buffer_[(head_ + n - whole_) % n];
    const double older = buffer_[(head_ + n - whole_ - 1) % n];
    return newer + frac_ * (older - newer);
}

}  // namespace uvoc
