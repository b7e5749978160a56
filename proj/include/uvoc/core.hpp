#pragma once

#include <cmath>
#include <numbers>

#include "uvoc/errors.hpp"

namespace uvoc {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSqrt2 = std::numbers::sqrt2;

/// Stationary-frame (alpha-beta) vector. Carries every voltage and current
/// in the controller and plant; peak-amplitude scaled.
struct SpaceVector {
    double alpha = 0.0;
    double beta = 0.0;

    constexpr SpaceVector() = default;
    constexpr SpaceVector(double a, double b) : alpha(a), beta(b) {}

    double magnitude() const { return std::hypot(alpha, beta); }
    constexpr double magnitude_squared() const { return alpha * alpha + beta * beta; }
    bool is_finite() const { return std::isfinite(alpha) && std::isfinite(beta); }

    constexpr SpaceVector& operator+=(SpaceVector o) {
        alpha += o.alpha;
        beta += o.beta;
        return *this;
    }
    constexpr SpaceVector& operator-=(SpaceVector o) {
        alpha -= o.alpha;
        beta -= o.beta;
        return *this;
    }
    constexpr SpaceVector& operator*=(double k) {
        alpha *= k;
        beta *= k;
        return *this;
    }
    friend constexpr SpaceVector operator+(SpaceVector a, SpaceVector b) { return a += b; }
    friend constexpr SpaceVector operator-(SpaceVector a, SpaceVector b) { return a -= b; }
    friend constexpr SpaceVector operator-(SpaceVector a) { return {-a.alpha, -a.beta}; }
    friend constexpr SpaceVector operator*(SpaceVector a, double k) { return a *= k; }
    friend constexpr SpaceVector operator*(double k, SpaceVector a) { return a *= k; }
    friend constexpr SpaceVector operator/(SpaceVector a, double k) { return {a.alpha / k, a.beta / k}; }
    friend constexpr bool operator==(SpaceVector, SpaceVector) = default;
};

/// Complex product a*b with the vectors read as alpha + j beta.
constexpr SpaceVector complex_mul(SpaceVector a, SpaceVector b) {
    return {a.alpha * b.alpha - a.beta * b.beta, a.alpha * b.beta + a.beta * b.alpha};
}

/// j*v, i.e. a +90 degree rotation.
constexpr SpaceVector rotate_quarter(SpaceVector v) { return {-v.beta, v.alpha}; }

struct PolarForm {
    double magnitude = 0.0;  ///< V_p, peak
    double angle = 0.0;      ///< rad
};

struct VscRatings {
    double S_rated = 10e3;
    double P_rated = 9e3;
    double Q_rated = 4.4e3;
    double V0 = 120.0;  ///< line-to-neutral RMS
    double omega0 = 2.0 * kPi * 60.0;
    double f_s = 10e3;
    int N = 3;

    /// Throws InvalidArgument on violated invariants.
    void validate() const;

    double Vp0() const { return kSqrt2 * V0; }
    /// 3 V0^2 / S for three-phase, V0^2 / S for single-phase.
    double z_base() const;
    double l_base() const { return z_base() / omega0; }
    double c_base() const { return 1.0 / (z_base() * omega0); }
    /// Peak space-vector current at rated apparent power.
    double i_base_peak() const { return kSqrt2 * S_rated / (N * V0); }
    double control_period() const { return 1.0 / f_s; }
};

struct PowerPair {
    double P = 0.0;
    double Q = 0.0;
};

struct PowerError {
    double e_P = 0.0;
    double e_Q = 0.0;
    double e_iP = 0.0;
    double e_iQ = 0.0;
};

/// Default magnitude floor guarding divisions by V_p^2.
inline double default_voltage_floor(double V0) { return 1e-6 * V0; }

/// Amplitude-invariant Clarke transform.
SpaceVector abc_to_alphabeta(double a, double b, double c);

/// Zero vector decomposes to angle 0.
PolarForm polar_decompose(SpaceVector v);
SpaceVector polar_compose(PolarForm p);

/// Multiplication by e^{j phi}.
SpaceVector rotate(SpaceVector v, double phi);

/// P = (N/2)(v.i), Q = (N/2)(v_beta i_alpha - v_alpha i_beta).
PowerPair instantaneous_pq(SpaceVector v, SpaceVector i, int N);

/// Power and current-error decomposition. Throws DegenerateVoltage when
/// |v| < voltage_floor.
PowerError power_error(SpaceVector v, SpaceVector i, double P0, double Q0, int N,
                       double voltage_floor);

}  // namespace uvoc
