#include "uvoc/smallsignal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace uvoc {

namespace {

// Everything the right-hand side and its Jacobian share.
struct Terms {
    double c, s, k, xi1, xi2, P, Q;
    double P0e, Q0e, mu, eta, Re, ffd, ffq;
    double g, h;
    // Derivatives with respect to x = [I_d, I_q, V, theta, v_dc].
    Eigen::Matrix<double, 1, 5> dP, dQ, dP0e, dQ0e, dg, dh, dffd, dffq;
    // Derivatives with respect to u = [P0, Q0].
    Eigen::RowVector2d uP0e, uQ0e, ug, uh, uffd, uffq;
};

Terms terms(const StateVector& x, const InputVector& u, const SmallSignalParams& p, AnalysisMode mode) {
    Terms t{};
    const double Id = x(0), Iq = x(1), V = x(2), th = x(3), vdc = x(4);
    const double P0 = u(0), Q0 = u(1);
    const double N = p.svo.N;
    t.c = std::cos(th);
    t.s = std::sin(th);
    t.k = vdc / p.V_dc_ref;
    t.xi1 = Id * t.c + Iq * t.s;
    t.xi2 = Id * t.s - Iq * t.c;
    t.P = N * t.k * V * t.xi1;
    t.Q = N * t.k * V * t.xi2;
    t.dP << N * t.k * V * t.c, N * t.k * V * t.s, N * t.k * t.xi1, -N * t.k * V * t.xi2, N * V * t.xi1 / p.V_dc_ref;
    t.dQ << N * t.k * V * t.s, -N * t.k * V * t.c, N * t.k * t.xi2, N * t.k * V * t.xi1, N * V * t.xi2 / p.V_dc_ref;

    t.dP0e.setZero();
    t.dQ0e.setZero();
    t.dffd.setZero();
    t.dffq.setZero();
    t.uffd.setZero();
    t.uffq.setZero();
    if (mode == AnalysisMode::Normal) {
        t.P0e = P0;
        t.Q0e = Q0;
        t.uP0e << 1.0, 0.0;
        t.uQ0e << 0.0, 1.0;
        t.mu = p.svo.mu;
        t.eta = p.svo.eta;
        t.Re = p.R_e;
        t.ffd = t.ffq = 0.0;
    } else {
        const double S2 = P0 * P0 + Q0 * Q0;
        if (S2 == 0.0) throw Error(ErrorKind::InvalidArgument, "fault-mode model needs nonzero setpoints", "P0=Q0=0");
        const double Km = fault_gain(P0, Q0, p.svo.N, p.I_m);
        // a = K_m P0, b = K_m Q0 and their input derivatives.
        const double a = Km * P0, b = Km * Q0;
        const Eigen::RowVector2d ua(Km * Q0 * Q0 / S2, -Km * P0 * Q0 / S2);
        const Eigen::RowVector2d ub(-Km * P0 * Q0 / S2, Km * P0 * P0 / S2);
        t.P0e = a * V;
        t.Q0e = b * V;
        t.dP0e(2) = a;
        t.dQ0e(2) = b;
        t.uP0e = ua * V;
        t.uQ0e = ub * V;
        t.mu = 0.0;
        t.eta = p.svo.eta * (1.0 + p.R0 / (p.boost_impedance_base * p.tau_f));
        t.Re = p.R_e + p.R0;
        t.ffd = p.R0 / N * (a * t.c + b * t.s);
        t.ffq = p.R0 / N * (a * t.s - b * t.c);
        t.dffd(3) = p.R0 / N * (-a * t.s + b * t.c);
        t.dffq(3) = p.R0 / N * (a * t.c + b * t.s);
        t.uffd = p.R0 / N * (ua * t.c + ub * t.s);
        t.uffq = p.R0 / N * (ua * t.s - ub * t.c);
    }
    const double cp = std::cos(p.svo.phi), sp = std::sin(p.svo.phi);
    const double EP = t.P0e - t.P, EQ = t.Q0e - t.Q;
    t.g = EP * cp + EQ * sp;
    t.h = EP * sp - EQ * cp;
    const auto dEP = t.dP0e - t.dP;
    const auto dEQ = t.dQ0e - t.dQ;
    t.dg = dEP * cp + dEQ * sp;
    t.dh = dEP * sp - dEQ * cp;
    t.ug = t.uP0e * cp + t.uQ0e * sp;
    t.uh = t.uP0e * sp - t.uQ0e * cp;
    return t;
}

StateVector rhs_from_terms(const Terms& t, const StateVector& x, double P_dc, const GridCondition& g,
                           const SmallSignalParams& p) {
    const double Id = x(0), Iq = x(1), V = x(2), vdc = x(4);
    const double N = p.svo.N;
    const double L = p.L_e;
    const double V0 = p.svo.Vp0 / kSqrt2;
    StateVector f;
    f(0) = (-t.Re * Id + g.omega_star * L * Iq + t.k * V * t.c - g.V_g + t.ffd) / L;
    f(1) = (-g.omega_star * L * Id - t.Re * Iq + t.k * V * t.s + t.ffq) / L;
    f(2) = 2.0 * t.mu * V * (V0 * V0 - V * V) + t.eta * t.g / (N * V);
    f(3) = p.svo.omega0 - g.omega_star + t.eta * t.h / (N * V * V);
    f(4) = (P_dc - t.P) / (p.C_dc * vdc);
    return f;
}

void jacobians(const StateVector& x, const InputVector& u, double P_dc, const GridCondition& g,
               const SmallSignalParams& p, AnalysisMode mode, Eigen::Matrix<double, 5, 5>& A,
               Eigen::Matrix<double, 5, 2>& B) {
    const Terms t = terms(x, u, p, mode);
    const double V = x(2), vdc = x(4);
    const double N = p.svo.N;
    const double L = p.L_e;
    const double V0 = p.svo.Vp0 / kSqrt2;

    A.setZero();
    A(0, 0) = -t.Re / L;
    A(0, 1) = g.omega_star;
    A(0, 2) = t.k * t.c / L;
    A(0, 3) = -t.k * V * t.s / L;
    A(0, 4) = V * t.c / (p.V_dc_ref * L);
    A.row(0) += t.dffd / L;

    A(1, 0) = -g.omega_star;
    A(1, 1) = -t.Re / L;
    A(1, 2) = t.k * t.s / L;
    A(1, 3) = t.k * V * t.c / L;
    A(1, 4) = V * t.s / (p.V_dc_ref * L);
    A.row(1) += t.dffq / L;

    A.row(2) = t.eta / (N * V) * t.dg;
    A(2, 2) += 2.0 * t.mu * (V0 * V0 - 3.0 * V * V) - t.eta * t.g / (N * V * V);

    A.row(3) = t.eta / (N * V * V) * t.dh;
    A(3, 2) += -2.0 * t.eta * t.h / (N * V * V * V);

    A.row(4) = -t.dP / (p.C_dc * vdc);
    A(4, 4) += -(P_dc - t.P) / (p.C_dc * vdc * vdc);

    B.setZero();
    B.row(0) = t.uffd / L;
    B.row(1) = t.uffq / L;
    B.row(2) = t.eta / (N * V) * t.ug;
    B.row(3) = t.eta / (N * V * V) * t.uh;
}

StateVector state_of(const OperatingPoint& op) {
    StateVector x;
    x << op.I_d, op.I_q, op.V, op.theta_s, op.v_dc;
    return x;
}

}  // namespace

void SmallSignalParams::validate() const {
    svo.validate();
    auto require = [](bool ok, const char* message, const char* context) {
        if (!ok) throw Error(ErrorKind::InvalidArgument, message, context);
    };
    require(L_e > 0.0, "L_e must be positive", "L_e");
    require(R_e >= 0.0, "R_e must be non-negative", "R_e");
    require(C_dc > 0.0 && V_dc_ref > 0.0, "C_dc and V_dc_ref must be positive", "C_dc/V_dc_ref");
    require(R0 >= 0.0 && tau_f > 0.0 && I_m > 0.0 && boost_impedance_base > 0.0, "fault parameters must be positive", "R0/tau_f/I_m");
}

StateVector nonlinear_rhs(const StateVector& x, const InputVector& u, double P_dc, const GridCondition& g,
                          const SmallSignalParams& p, AnalysisMode mode) {
    return rhs_from_terms(terms(x, u, p, mode), x, P_dc, g, p);
}

OperatingPoint equilibrium_solve(const SmallSignalParams& p, const GridCondition& g, double P0, double Q0,
                                 AnalysisMode mode, const EquilibriumOptions& opt) {
    p.validate();
    const double V0 = p.svo.Vp0 / kSqrt2;
    const double N = p.svo.N;
    InputVector u(P0, Q0);

    // Fault mode sees the setpoints scaled by K_m V.
    const double scale_fault = mode == AnalysisMode::Fault ? fault_gain(P0, Q0, p.svo.N, p.I_m) : 0.0;
    const auto initial = [&](double Vg, double theta) {
        StateVector x0;
        if (mode == AnalysisMode::Fault) {
            x0 << scale_fault * P0 / N, -scale_fault * Q0 / N, Vg, theta, p.V_dc_ref;
        } else {
            x0 << P0 / (N * Vg), -Q0 / (N * Vg), Vg, theta, p.V_dc_ref;
        }
        return x0;
    };

    // Only the AC rows are solved; P_dc then balances the DC row exactly.
    const auto ac_residual = [&](const StateVector& xs) {
        const Terms t = terms(xs, u, p, mode);
        const StateVector f = rhs_from_terms(t, xs, t.P, g, p);
        return Eigen::Vector4d(f.head<4>());
    };
    // Row scaling for the line search: currents to volts, voltages and angle rates per unit.
    const Eigen::Vector4d scale(p.L_e / V0, p.L_e / V0, 1.0 / V0, 1.0 / p.svo.omega0);
    const auto merit = [&](const Eigen::Vector4d& f) { return f.cwiseProduct(scale).lpNorm<Eigen::Infinity>(); };

    StateVector x;
    Eigen::Vector4d f;
    int it = 0;
    const auto newton = [&](StateVector x0) {
        x = x0;
        f = ac_residual(x);
        it = 0;
        for (; it < opt.max_iterations; ++it) {
            if (f.lpNorm<Eigen::Infinity>() < opt.tolerance) break;
            Eigen::Matrix<double, 5, 5> A;
            Eigen::Matrix<double, 5, 2> B;
            jacobians(x, u, 0.0, g, p, mode, A, B);
            const Eigen::Matrix4d J = A.topLeftCorner<4, 4>();
            const Eigen::Vector4d dx = J.fullPivLu().solve(-f);
            if (!dx.allFinite()) break;
            double lambda = 1.0;
            bool accepted = false;
            const double m0 = merit(f);
            for (int ls = 0; ls < 50; ++ls) {
                StateVector xn = x;
                xn.head<4>() += lambda * dx;
                if (xn(2) > 0.0) {
                    const Eigen::Vector4d fn = ac_residual(xn);
                    if (fn.allFinite() && (merit(fn) < m0 || fn.lpNorm<Eigen::Infinity>() < opt.tolerance)) {
                        x = xn;
                        f = fn;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if (!accepted) break;
        }
        return f.allFinite() && f.lpNorm<Eigen::Infinity>() < opt.tolerance;
    };

    bool ok = newton(initial(opt.V_guess > 0.0 ? opt.V_guess : V0, opt.theta_guess));
    if (!ok && opt.V_guess <= 0.0) {
        // Deep sags move the solution far from the nominal guess.
        for (double vs : {0.9, 0.7, 0.5, 0.3, 1.1}) {
            for (double th : {0.0, -0.5, 0.5, -1.0, 1.0, -1.5, 1.5}) {
                if ((ok = newton(initial(vs * V0, th)))) break;
            }
            if (ok) break;
        }
    }
    const double res = f.lpNorm<Eigen::Infinity>();
    if (!(res < opt.tolerance)) {
        throw Error(ErrorKind::NonConvergence, "equilibrium solve did not converge",
                    "residual=" + std::to_string(res) + " iterations=" + std::to_string(it));
    }
    OperatingPoint op;
    op.I_d = x(0);
    op.I_q = x(1);
    op.V = x(2);
    op.theta_s = std::remainder(x(3), 2.0 * kPi);
    op.v_dc = x(4);
    op.P_dc = terms(x, u, p, mode).P;
    op.P0 = P0;
    op.Q0 = Q0;
    op.grid = g;
    op.mode = mode;
    op.residual = res;
    op.iterations = it;
    return op;
}

LinearModel linearize(const OperatingPoint& op, const SmallSignalParams& p, double tolerance) {
    p.validate();
    const StateVector x = state_of(op);
    const InputVector u(op.P0, op.Q0);
    const StateVector f = nonlinear_rhs(x, u, op.P_dc, op.grid, p, op.mode);
    const double res = f.lpNorm<Eigen::Infinity>();
    if (!(res <= tolerance)) {
        throw Error(ErrorKind::InvalidArgument, "linearization point is not an equilibrium",
                    "residual=" + std::to_string(res));
    }
    LinearModel m;
    m.op = op;
    jacobians(x, u, op.P_dc, op.grid, p, op.mode, m.A, m.B);
    return m;
}

std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols()) throw Error(ErrorKind::InvalidArgument, "eigenvalues need a square matrix", "");
    const Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::NonConvergence, "eigenvalue iteration failed", "");
    std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
    std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return ev;
}

TransferFunction::TransferFunction(Eigen::MatrixXd A, Eigen::VectorXd b, Eigen::RowVectorXd c, double gain)
    : A_(std::move(A)), b_(std::move(b)), c_(std::move(c)), gain_(gain), poles_(eigenvalues(A_)) {}

std::complex<double> TransferFunction::operator()(std::complex<double> s) const {
    for (const auto& lam : poles_) {
        if (std::abs(s - lam) <= 1e-9 * std::max(1.0, std::abs(lam))) {
            throw Error(ErrorKind::PoleEvaluation, "transfer function evaluated at a pole",
                        "s=" + std::to_string(s.real()) + "+j" + std::to_string(s.imag()));
        }
    }
    const Eigen::Index n = A_.rows();
    const Eigen::MatrixXcd M = s * Eigen::MatrixXcd::Identity(n, n) - A_.cast<std::complex<double>>();
    const Eigen::VectorXcd x = M.partialPivLu().solve(b_.cast<std::complex<double>>());
    return gain_ * (c_.cast<std::complex<double>>() * x)(0);
}

TransferFunction transfer_function(const LinearModel& m, OutputSelector y, InputSelector u) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(5);
    c(static_cast<int>(y)) = 1.0;
    return TransferFunction(m.A, m.B.col(static_cast<int>(u)), c);
}

TransferFunction open_loop_dc(const LinearModel& m) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(5);
    c(4) = 1.0;
    return TransferFunction(m.A, m.B.col(0), c, -1.0);
}

std::complex<double> dc_compensator_response(const DcRegParams& p, double omega) {
    const std::complex<double> s{0.0, omega};
    return p.K_pdc * (1.0 + 1.0 / (s * p.T_i)) * std::sqrt(p.omega_p / p.omega_z) * (s + p.omega_z) /
           (s + p.omega_p);
}

std::vector<std::complex<double>> dc_compensator_response(const DcRegParams& p, const std::vector<double>& omegas) {
    std::vector<std::complex<double>> out;
    out.reserve(omegas.size());
    for (double w : omegas) out.push_back(dc_compensator_response(p, w));
    return out;
}

std::vector<double> log_space(double lo, double hi, int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    if (n == 1) {
        w[0] = lo;
        return w;
    }
    const double a = std::log10(lo), b = std::log10(hi);
    for (int k = 0; k < n; ++k) w[static_cast<std::size_t>(k)] = std::pow(10.0, a + (b - a) * k / (n - 1));
    return w;
}

std::vector<BodePoint> bode(const std::function<std::complex<double>(double)>& L, const std::vector<double>& omegas) {
    std::vector<BodePoint> out;
    out.reserve(omegas.size());
    double prev = 0.0;
    for (std::size_t k = 0; k < omegas.size(); ++k) {
        const auto z = L(omegas[k]);
        double ph = std::arg(z) * 180.0 / kPi;
        if (k > 0) ph = prev + std::remainder(ph - prev, 360.0);
        prev = ph;
        out.push_back({omegas[k], 20.0 * std::log10(std::abs(z)), ph});
    }
    return out;
}

MarginReport margins(const std::function<std::complex<double>(double)>& L, double omega_lo, double omega_hi,
                     int scan_points, double bisection_tolerance) {
    if (!(omega_lo > 0.0) || !(omega_hi > omega_lo) || scan_points < 2) {
        throw Error(ErrorKind::InvalidArgument, "margin search band is invalid", "");
    }
    const auto grid = log_space(omega_lo, omega_hi, scan_points);
    const auto pts = bode(L, grid);
    const auto logmag = [&](double w) { return std::log(std::abs(L(w))); };

    MarginReport rep;
    for (std::size_t k = 1; k < pts.size(); ++k) {
        const double m0 = pts[k - 1].mag_db, m1 = pts[k].mag_db;
        if ((m0 > 0.0) != (m1 > 0.0)) {
            double a = grid[k - 1], b = grid[k];
            const bool falling = m0 > 0.0;
            while (b - a > bisection_tolerance) {
                const double mid = 0.5 * (a + b);
                if ((logmag(mid) > 0.0) == falling) a = mid; else b = mid;
            }
            rep.gain_crossovers.push_back(0.5 * (a + b));
        }
        // Unwrapped phase crossing an odd multiple of 180 degrees.
        const double p0 = pts[k - 1].phase_deg, p1 = pts[k].phase_deg;
        const double n0 = std::floor((p0 - 180.0) / 360.0), n1 = std::floor((p1 - 180.0) / 360.0);
        if (n0 != n1) {
            const double target = 180.0 + 360.0 * std::max(n0, n1);
            const auto phase_rel = [&](double w) {
                return p0 + std::remainder(std::arg(L(w)) * 180.0 / kPi - p0, 360.0) - target;
            };
            double a = grid[k - 1], b = grid[k];
            const bool s0 = phase_rel(a) > 0.0;
            while (b - a > bisection_tolerance) {
                const double mid = 0.5 * (a + b);
                if ((phase_rel(mid) > 0.0) == s0) a = mid; else b = mid;
            }
            rep.phase_crossovers.push_back(0.5 * (a + b));
        }
    }
    if (rep.gain_crossovers.empty()) {
        throw Error(ErrorKind::NonConvergence, "no gain crossover in band",
                    "[" + std::to_string(omega_lo) + ", " + std::to_string(omega_hi) + "]");
    }
    rep.gain_crossover = rep.gain_crossovers.front();
    rep.phase_margin_deg = std::remainder(180.0 + std::arg(L(rep.gain_crossover)) * 180.0 / kPi, 360.0);
    if (rep.phase_crossovers.empty()) {
        rep.gain_margin_db = std::numeric_limits<double>::infinity();
    } else {
        rep.phase_crossover = rep.phase_crossovers.front();
        rep.gain_margin_db = -20.0 * std::log10(std::abs(L(rep.phase_crossover)));
    }
    return rep;
}

}  // namespace uvoc
