#include "uvoc/design.hpp"

#include <array>
#include <cmath>
#include <string>

namespace uvoc {

namespace {

bool is_quadrature(double phi) { return std::abs(phi - kPi / 2.0) < 1e-12; }
bool is_in_phase(double phi) { return std::abs(phi) < 1e-12; }

struct FlowEval {
    std::array<double, 2> r{};
    std::complex<double> S_svo, S_poc;
};

FlowEval evaluate_flow(double V, double delta, const SvoParams& p, const PlantParams& plant, const EviParams& evi,
                       double V_g, double w) {
    using C = std::complex<double>;
    const C j{0.0, 1.0};
    const C E = std::polar(V, delta);
    const C Za = plant.r_a + j * w * plant.L_a;
    const C Zc = plant.r_d + 1.0 / (j * w * plant.C_f);
    const C Zg = plant.r_g + j * w * plant.L_g;
    const C Zv = evi_impedance(evi, w);
    const bool grid_fb = evi.side == FeedbackSide::Grid;

    // Unknowns (I_a, I_g); node f voltage is Zc (I_a - I_g).
    const C a11 = Za + Zc + (grid_fb ? C{} : Zv);
    const C a12 = -Zc + (grid_fb ? Zv : C{});
    const C a21 = Zc;
    const C a22 = -(Zc + Zg);
    const C det = a11 * a22 - a12 * a21;
    const C Ia = (E * a22 - a12 * V_g) / det;
    const C Ig = (a11 * V_g - a21 * E) / det;
    const C Ifb = grid_fb ? Ig : Ia;

    FlowEval f;
    f.S_svo = static_cast<double>(p.N) * E * std::conj(Ifb);
    f.S_poc = static_cast<double>(p.N) * V_g * std::conj(Ig);
    const double P = f.S_svo.real();
    const double Q = f.S_svo.imag();
    const double V0 = p.Vp0 / kSqrt2;
    const double g = (p.P0 - P) * std::cos(p.phi) + (p.Q0 - Q) * std::sin(p.phi);
    f.r[0] = (w - droop_frequency(P, Q, V, p)) / p.omega0;
    f.r[1] = (V * V - V0 * V0 - p.eta * g / (2.0 * p.mu * p.N * V * V)) / (V0 * V0);
    return f;
}

double inf_norm(const std::array<double, 2>& r) { return std::max(std::abs(r[0]), std::abs(r[1])); }

}  // namespace

void DesignSpec::validate() const {
    ratings.validate();
    if (!(dV_max > 0.0) || !(dV_max < ratings.V0)) {
        throw Error(ErrorKind::Infeasible, "design needs 0 < dV_max < V0", "dV_max=" + std::to_string(dV_max));
    }
    if (!(domega_max > 0.0)) {
        throw Error(ErrorKind::Infeasible, "design needs domega_max > 0", "domega_max=" + std::to_string(domega_max));
    }
    if (!is_quadrature(phi) && !is_in_phase(phi)) {
        throw Error(ErrorKind::InvalidArgument, "closed-form design exists only for phi = 0 or pi/2",
                    "phi=" + std::to_string(phi));
    }
}

EtaMu design_eta_mu(const DesignSpec& spec) {
    spec.validate();
    const auto& r = spec.ratings;
    const double N = r.N;
    const double Vm2 = spec.V_max() * spec.V_max();
    const double V02 = r.V0 * r.V0;
    const double den = (2.0 * Vm2 - V02) * (2.0 * Vm2 - V02) - V02 * V02;
    if (!(den > 0.0)) throw Error(ErrorKind::Infeasible, "mu denominator is not positive", "V_max <= V0");
    const bool quad = is_quadrature(spec.phi);
    const double frequency_power = quad ? r.P_rated : r.Q_rated;
    const double voltage_power = quad ? r.Q_rated : r.P_rated;
    EtaMu g;
    g.eta = N * spec.domega_max * Vm2 / frequency_power;
    g.mu = 2.0 * g.eta * voltage_power / (N * den);
    return g;
}

SvoParams svo_params_from_design(const DesignSpec& spec, const EtaMu& gains) {
    SvoParams p;
    p.eta = gains.eta;
    p.mu = gains.mu;
    p.phi = spec.phi;
    p.omega0 = spec.ratings.omega0;
    p.Vp0 = spec.ratings.Vp0();
    p.N = spec.ratings.N;
    return p;
}

DesignReport design_report(const DesignSpec& spec) {
    DesignReport rep;
    rep.gains = design_eta_mu(spec);
    const SvoParams p = svo_params_from_design(spec, rep.gains);
    const auto& r = spec.ratings;
    const bool quad = is_quadrature(spec.phi);
    rep.V_max = spec.V_max();
    rep.V_min_symmetric = std::sqrt(std::max(2.0 * r.V0 * r.V0 - rep.V_max * rep.V_max, 0.0));

    // Voltage axis: Q for phi = pi/2, P for phi = 0 (with the sign that raises V).
    const double Pv = quad ? 0.0 : -r.P_rated;
    const double Qv = quad ? -r.Q_rated : 0.0;
    rep.V_min = steady_state_voltage(-Pv, -Qv, p);
    rep.rated_voltage_residual = (steady_state_voltage(Pv, Qv, p) - rep.V_max) / rep.V_max;

    const double Pf = quad ? -r.P_rated : 0.0;
    const double Qf = quad ? 0.0 : r.Q_rated;
    const double dw = droop_frequency(Pf, Qf, rep.V_max, p) - p.omega0;
    rep.rated_power_residual = (dw - spec.domega_max) / spec.domega_max;
    return rep;
}

double steady_state_voltage(double P, double Q, const SvoParams& p) {
    if (!(p.mu > 0.0)) throw Error(ErrorKind::InvalidArgument, "steady-state voltage needs mu > 0", "mu");
    const double V0 = p.Vp0 / kSqrt2;
    const double g = (p.P0 - P) * std::cos(p.phi) + (p.Q0 - Q) * std::sin(p.phi);
    const double radicand = 1.0 + 2.0 * p.eta * g / (p.mu * p.N * V0 * V0 * V0 * V0);
    if (radicand < 0.0) {
        throw Error(ErrorKind::Infeasible, "no real steady-state voltage", "radicand=" + std::to_string(radicand));
    }
    return V0 / kSqrt2 * std::sqrt(1.0 + std::sqrt(radicand));
}

double droop_frequency(double P, double Q, double V, const SvoParams& p) {
    return p.omega0 + p.eta / (p.N * V * V) * ((p.P0 - P) * std::sin(p.phi) - (p.Q0 - Q) * std::cos(p.phi));
}

PowerMapNode solve_power_flow(const SvoParams& p, const PlantParams& plant, const EviParams& evi, double V_g,
                              double omega_g, const PowerMapOptions& opt) {
    if (!(p.mu > 0.0)) throw Error(ErrorKind::InvalidArgument, "power map needs a grid-forming oscillator", "mu");
    PowerMapNode node;
    node.V_g = V_g;
    node.omega_g = omega_g;

    double V = steady_state_voltage(0.0, 0.0, p);
    double delta = 0.0;
    FlowEval f = evaluate_flow(V, delta, p, plant, evi, V_g, omega_g);
    double norm = inf_norm(f.r);
    const double hV = 1e-6 * V;
    const double hd = 1e-7;

    int it = 0;
    for (; it < opt.max_iterations && !(norm < opt.tolerance); ++it) {
        const auto fvp = evaluate_flow(V + hV, delta, p, plant, evi, V_g, omega_g).r;
        const auto fvm = evaluate_flow(V - hV, delta, p, plant, evi, V_g, omega_g).r;
        const auto fdp = evaluate_flow(V, delta + hd, p, plant, evi, V_g, omega_g).r;
        const auto fdm = evaluate_flow(V, delta - hd, p, plant, evi, V_g, omega_g).r;
        const double j11 = (fvp[0] - fvm[0]) / (2.0 * hV), j12 = (fdp[0] - fdm[0]) / (2.0 * hd);
        const double j21 = (fvp[1] - fvm[1]) / (2.0 * hV), j22 = (fdp[1] - fdm[1]) / (2.0 * hd);
        const double det = j11 * j22 - j12 * j21;
        if (!(std::abs(det) > 0.0) || !std::isfinite(det)) break;
        const double dV = -(j22 * f.r[0] - j12 * f.r[1]) / det;
        const double dd = -(-j21 * f.r[0] + j11 * f.r[1]) / det;

        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k < 40; ++k) {
            const double Vn = V + lambda * dV;
            if (Vn > 0.0) {
                const FlowEval fn = evaluate_flow(Vn, delta + lambda * dd, p, plant, evi, V_g, omega_g);
                const double nn = inf_norm(fn.r);
                if (std::isfinite(nn) && nn < norm) {
                    V = Vn;
                    delta += lambda * dd;
                    f = fn;
                    norm = nn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
    }

    node.iterations = it;
    node.residual = norm;
    node.converged = norm < std::max(opt.tolerance, 1e-10);
    node.V = V;
    node.delta = delta;
    node.P_svo = f.S_svo.real();
    node.Q_svo = f.S_svo.imag();
    node.P_poc = f.S_poc.real();
    node.Q_poc = f.S_poc.imag();
    return node;
}

std::vector<PowerMapNode> power_limit_map(const SvoParams& p, const PlantParams& plant, const EviParams& evi,
                                          const PowerMapOptions& opt) {
    if (opt.n_V < 1 || opt.n_omega < 1) {
        throw Error(ErrorKind::InvalidArgument, "power map resolution must be at least 1", "n_V/n_omega");
    }
    const auto axis = [](double lo, double hi, int n, int k) {
        if (n == 1) return 0.5 * (lo + hi);
        return lo + (hi - lo) * k / (n - 1);
    };
    std::vector<PowerMapNode> out;
    out.reserve(static_cast<std::size_t>(opt.n_V * opt.n_omega));
    for (int a = 0; a < opt.n_V; ++a) {
        for (int b = 0; b < opt.n_omega; ++b) {
            out.push_back(solve_power_flow(p, plant, evi, axis(opt.V_g_min, opt.V_g_max, opt.n_V, a),
                                           axis(opt.omega_g_min, opt.omega_g_max, opt.n_omega, b), opt));
        }
    }
    return out;
}

}  // namespace uvoc
