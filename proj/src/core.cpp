#include "uvoc/core.hpp"

#include <string>

namespace uvoc {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::DegenerateVoltage: return "degenerate_voltage";
        case ErrorKind::NonFinite: return "non_finite";
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::Infeasible: return "infeasible";
        case ErrorKind::NonConvergence: return "non_convergence";
        case ErrorKind::PoleEvaluation: return "pole_evaluation";
        case ErrorKind::Schema: return "schema";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

void VscRatings::validate() const {
    if (N != 1 && N != 3) {
        throw Error(ErrorKind::InvalidArgument, "phase count must be 1 or 3", "ratings.N=" + std::to_string(N));
    }
    if (!(f_s > 0.0)) throw Error(ErrorKind::InvalidArgument, "sampling rate must be positive", "ratings.f_s");
    if (!(S_rated > 0.0) || !(V0 > 0.0) || !(omega0 > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "S_rated, V0 and omega0 must be positive", "ratings");
    }
    const double pq2 = P_rated * P_rated + Q_rated * Q_rated;
    if (pq2 > 1.01 * 1.01 * S_rated * S_rated) {
        throw Error(ErrorKind::InvalidArgument, "P_rated^2 + Q_rated^2 exceeds S_rated^2 by more than 1%", "ratings");
    }
}

double VscRatings::z_base() const {
    return (N == 3 ? 3.0 : 1.0) * V0 * V0 / S_rated;
}

SpaceVector abc_to_alphabeta(double a, double b, double c) {
    constexpr double k = 2.0 / 3.0;
    return {k * (a - 0.5 * b - 0.5 * c), k * (std::sqrt(3.0) / 2.0) * (b - c)};
}

PolarForm polar_decompose(SpaceVector v) {
    if (v.alpha == 0.0 && v.beta == 0.0) return {0.0, 0.0};
    return {v.magnitude(), std::atan2(v.beta, v.alpha)};
}

SpaceVector polar_compose(PolarForm p) {
    return {p.magnitude * std::cos(p.angle), p.magnitude * std::sin(p.angle)};
}

SpaceVector rotate(SpaceVector v, double phi) {
    return complex_mul(v, {std::cos(phi), std::sin(phi)});
}

PowerPair instantaneous_pq(SpaceVector v, SpaceVector i, int N) {
    const double k = 0.5 * N;
    return {k * (v.alpha * i.alpha + v.beta * i.beta), k * (v.beta * i.alpha - v.alpha * i.beta)};
}

PowerError power_error(SpaceVector v, SpaceVector i, double P0, double Q0, int N, double voltage_floor) {
    const double vp2 = v.magnitude_squared();
    if (!(std::sqrt(vp2) >= voltage_floor) || vp2 == 0.0) {
        throw Error(ErrorKind::DegenerateVoltage, "voltage magnitude below floor in power error",
                    "|v|=" + std::to_string(std::sqrt(vp2)));
    }
    const auto pq = instantaneous_pq(v, i, N);
    PowerError e;
    e.e_P = P0 - pq.P;
    e.e_Q = Q0 - pq.Q;
    e.e_iP = 2.0 * e.e_P / (N * vp2);
    e.e_iQ = -2.0 * e.e_Q / (N * vp2);
    return e;
}

}  // namespace uvoc
