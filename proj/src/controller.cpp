#include "uvoc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace uvoc {

namespace {

void require(bool ok, const char* message, const char* context) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, message, context);
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

}  // namespace

void SvoParams::validate() const {
    require(eta >= 0.0, "eta must be non-negative", "svo.eta");
    require(mu >= 0.0, "mu must be non-negative", "svo.mu");
    require(phi >= 0.0 && phi <= kPi / 2.0 + 1e-12, "phi must lie in [0, pi/2]", "svo.phi");
    require(omega0 > 0.0, "omega0 must be positive", "svo.omega0");
    require(Vp0 > 0.0, "Vp0 must be positive", "svo.Vp0");
    require(N == 1 || N == 3, "phase count must be 1 or 3", "svo.N");
    require(std::isfinite(P0) && std::isfinite(Q0), "setpoints must be finite", "svo.P0/Q0");
}

void FaultConfig::validate() const {
    if (!enabled) return;
    require(I_T > 0.0 && I_m > 0.0, "current thresholds must be positive", "fault.I_T/I_m");
    require(I_m <= I_T, "I_m must not exceed I_T", "fault.I_m");
    require(V_T > 0.0, "V_T must be positive", "fault.V_T");
    require(R0 >= 0.0, "R0 must be non-negative", "fault.R0");
    require(t_f > 0.0 && tau_f > 0.0, "t_f and tau_f must be positive", "fault.t_f/tau_f");
    require(boost_impedance_base > 0.0, "gain-boost impedance base must be positive", "fault.boost_impedance_base");
    require(vg_filter_bandwidth > 0.0, "detector bandwidth must be positive", "fault.vg_filter_bandwidth");
    require(!boost_q0 || S_rated > 0.0, "Q0 boost needs S_rated", "fault.S_rated");
}

void EviParams::validate() const {
    require(R_vir >= 0.0 && L_vir >= 0.0, "R_vir and L_vir must be non-negative", "evi");
    require(omega_c > 0.0, "omega_c must be positive", "evi.omega_c");
    for (const auto& r : bank) {
        require(r.omega_h > 0.0 && r.omega_B > 0.0, "resonant term needs positive omega_h and omega_B", "evi.bank");
    }
}

void PresyncParams::validate() const {
    require(L_ps > 0.0 && R_ps > 0.0, "L_ps and R_ps must be positive", "presync");
}

void DcRegParams::validate() const {
    require(K_pdc > 0.0 && T_i > 0.0, "K_pdc and T_i must be positive", "dcreg");
    require(omega_z > 0.0 && omega_p > omega_z, "lead-lag needs 0 < omega_z < omega_p", "dcreg.omega_z/omega_p");
    require(V_dc_ref > 0.0, "V_dc_ref must be positive", "dcreg.V_dc_ref");
}

void ControllerConfig::validate() const {
    svo.validate();
    fault.validate();
    evi.validate();
    presync.validate();
    dcreg.validate();
    require(f_s > 0.0, "sampling rate must be positive", "controller.f_s");
    require(V_dc_ref > 0.0, "V_dc_ref must be positive", "controller.V_dc_ref");
    require(voltage_floor > 0.0, "voltage floor must be positive", "controller.voltage_floor");
}

SpaceVector current_reference(SpaceVector v, double P0, double Q0, int N, double voltage_floor) {
    const double vp2 = v.magnitude_squared();
    if (!(std::sqrt(vp2) >= voltage_floor) || vp2 == 0.0) {
        throw Error(ErrorKind::DegenerateVoltage, "voltage magnitude below floor in current reference",
                    "|v|=" + std::to_string(std::sqrt(vp2)));
    }
    const double k = 2.0 / (N * vp2);
    return {k * (v.alpha * P0 + v.beta * Q0), k * (v.beta * P0 - v.alpha * Q0)};
}

SpaceVector circular_limit(SpaceVector i0, double I_m) {
    const double mag = i0.magnitude();
    if (mag <= I_m) return i0;
    return i0 * (I_m / mag);
}

double fault_gain(double P0, double Q0, int N, double I_m) {
    const double s2 = P0 * P0 + Q0 * Q0;
    if (s2 == 0.0) return 0.0;
    return N * I_m / std::sqrt(2.0 * s2);
}

SpaceVector fault_mode_reference(SpaceVector v, double P0, double Q0, int N, double I_m, double voltage_floor) {
    const double vp = v.magnitude();
    if (!(vp >= voltage_floor)) {
        throw Error(ErrorKind::DegenerateVoltage, "voltage magnitude below floor in fault reference",
                    "|v|=" + std::to_string(vp));
    }
    if (P0 == 0.0 && Q0 == 0.0) return rotate(v, -kPi / 2.0) * (I_m / vp);
    const double K_m = fault_gain(P0, Q0, N, I_m);
    return current_reference(v, P0, Q0, N, voltage_floor) * (K_m * vp / kSqrt2);
}

FaultState fault_fsm_step(FaultState s, double i_mag, double vg_filtered, const FaultConfig& cfg, double dt) {
    if (!cfg.enabled) return s;
    if (i_mag > cfg.I_T) {
        if (s.x_f == 0) s.clear_armed = false;
        s.x_f = 1;
        s.x_r = 1.0;
        s.ramp_clock = 0.0;
        if (vg_filtered <= cfg.V_T) s.clear_armed = true;
    } else if (s.x_f == 1) {
        // Clearing needs the voltage to come back above V_T, so the detector
        // has to have seen it below the threshold first.
        if (vg_filtered <= cfg.V_T) {
            s.clear_armed = true;
        } else if (s.clear_armed) {
            s.x_f = 0;
            s.ramp_clock = 0.0;
        }
    } else if (s.x_r > 0.0) {
        s.ramp_clock += dt;
        s.x_r = std::max(0.0, 1.0 - s.ramp_clock / cfg.t_f);
    }
    return s;
}

double effective_eta(double eta, const FaultState& f, const FaultConfig& cfg) {
    if (cfg.enabled && f.x_f == 1) return eta * (1.0 + cfg.R0 / (cfg.boost_impedance_base * cfg.tau_f));
    return eta;
}

SpaceVector saturated_reference(SpaceVector v, const SvoParams& p, const FaultState& f, const FaultConfig& cfg,
                                double voltage_floor) {
    if (cfg.enabled && f.x_f == 1) return fault_mode_reference(v, p.P0, p.Q0, p.N, cfg.I_m, voltage_floor);
    return circular_limit(current_reference(v, p.P0, p.Q0, p.N, voltage_floor), cfg.I_m);
}

SpaceVector svo_derivative(SpaceVector v, SpaceVector i_fb, const SvoParams& p, const FaultState& f,
                           const FaultConfig& cfg, double voltage_floor) {
    const double vp2 = v.magnitude_squared();
    const SpaceVector i0 = saturated_reference(v, p, f, cfg, voltage_floor);
    const bool latched = cfg.enabled && f.x_f == 1;
    const double mu = latched ? 0.0 : p.mu;
    const double eta = effective_eta(p.eta, f, cfg);
    return p.omega0 * rotate_quarter(v) + (mu * (p.Vp0 * p.Vp0 - vp2)) * v + eta * rotate(i0 - i_fb, p.phi);
}

OscillatorState svo_step(const OscillatorState& osc, SpaceVector i_fb, const SvoParams& p, const FaultState& f,
                         const FaultConfig& cfg, double dt, double voltage_floor) {
    const auto rhs = [&](SpaceVector v) { return svo_derivative(v, i_fb, p, f, cfg, voltage_floor); };
    const SpaceVector v = osc.v;
    const SpaceVector k1 = rhs(v);
    const SpaceVector k2 = rhs(v + (0.5 * dt) * k1);
    const SpaceVector k3 = rhs(v + (0.5 * dt) * k2);
    const SpaceVector k4 = rhs(v + dt * k3);
    OscillatorState out{v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)};
    if (!out.v.is_finite()) throw Error(ErrorKind::NonFinite, "oscillator state became non-finite", "svo.v");
    return out;
}

SpaceVector ocl_compensation(SpaceVector i0_sat, SpaceVector i_fb, double x_r, double R0) {
    return (x_r * R0) * (i0_sat - i_fb);
}

EviState make_evi_state(const EviParams& p, double T) {
    EviState s;
    s.T = T;
    s.branch = bilinear_prewarped(0.0, p.L_vir, p.R_vir, 0.0, 1.0 / p.omega_c, 1.0, p.omega_c, T);
    for (const auto& r : p.bank) {
        const double w2 = r.omega_h * r.omega_h;
        if (p.side == FeedbackSide::Grid) {
            s.resonators.push_back(
                bilinear_prewarped(0.0, 0.0, -r.K_h * r.omega_B * r.omega_h, 1.0, r.omega_B, w2, r.omega_h, T));
        } else {
            s.resonators.push_back(bilinear_prewarped(0.0, r.K_h * r.omega_B, 0.0, 1.0, r.omega_B, w2, r.omega_h, T));
        }
    }
    s.res_alpha.assign(s.resonators.size(), {});
    s.res_beta.assign(s.resonators.size(), {});
    return s;
}

SpaceVector evi_step(EviState& s, SpaceVector i_fb, bool single_axis) {
    SpaceVector out;
    out.alpha = s.branch_alpha.step(s.branch, i_fb.alpha);
    for (std::size_t k = 0; k < s.resonators.size(); ++k) out.alpha += s.res_alpha[k].step(s.resonators[k], i_fb.alpha);
    if (single_axis) return out;
    out.beta = s.branch_beta.step(s.branch, i_fb.beta);
    for (std::size_t k = 0; k < s.resonators.size(); ++k) out.beta += s.res_beta[k].step(s.resonators[k], i_fb.beta);
    return out;
}

std::complex<double> evi_impedance(const EviParams& p, double omega) {
    const std::complex<double> s{0.0, omega};
    std::complex<double> z = (p.R_vir + s * p.L_vir) / (s / p.omega_c + 1.0);
    for (const auto& r : p.bank) {
        const auto den = s * s + r.omega_B * s + r.omega_h * r.omega_h;
        if (p.side == FeedbackSide::Grid) {
            z += -r.K_h * r.omega_B * r.omega_h / den;
        } else {
            z += r.K_h * r.omega_B * s / den;
        }
    }
    return z;
}

std::complex<double> evi_discrete_response(const EviState& s, double omega) {
    std::complex<double> z = s.branch.response(omega, s.T);
    for (const auto& r : s.resonators) z += r.response(omega, s.T);
    return z;
}

SpaceVector presync_step(PresyncState& state, SpaceVector v, SpaceVector v_g, const PresyncParams& p, double dt) {
    const double a = std::exp(-p.R_ps * dt / p.L_ps);
    state.i_ps = a * state.i_ps + ((1.0 - a) / p.R_ps) * (v - v_g);
    return state.i_ps;
}

DcRegState make_dc_reg_state(const DcRegParams& p, double T) {
    DcRegState s;
    s.T = T;
    const double g = std::sqrt(p.omega_p / p.omega_z);
    s.lead_lag = bilinear_prewarped(0.0, g, g * p.omega_z, 0.0, 1.0, p.omega_p, 0.0, T);
    return s;
}

double dc_regulator_step(DcRegState& s, double v_dc, const DcRegParams& p) {
    const double e = p.V_dc_ref - v_dc;
    const double y = s.filter.step(s.lead_lag, e);
    s.integral += 0.5 * s.T * (y + s.previous) / p.T_i;
    s.previous = y;
    return -p.K_pdc * (y + s.integral);
}

FractionalDelay make_quarter_delay(double omega0, double T) { return FractionalDelay(kPi / (2.0 * omega0), T); }

QuarterDelaySample single_phase_beta(FractionalDelay& history, double alpha) {
    QuarterDelaySample out;
    out.beta = history.push(alpha);
    out.valid = history.warm();
    return out;
}

Controller::Controller(ControllerConfig cfg, SpaceVector v_init) : cfg_(std::move(cfg)), osc_{v_init} {
    cfg_.validate();
    const double T = cfg_.period();
    evi_ = make_evi_state(cfg_.evi, T);
    dcreg_ = make_dc_reg_state(cfg_.dcreg, T);
    if (cfg_.svo.N == 1) {
        delay_i_ = make_quarter_delay(cfg_.svo.omega0, T);
        delay_vpoc_ = make_quarter_delay(cfg_.svo.omega0, T);
        delay_vsync_ = make_quarter_delay(cfg_.svo.omega0, T);
    }
}

void Controller::set_presync_enabled(bool on) {
    if (on && !cfg_.presync.enabled) presync_ = {};
    cfg_.presync.enabled = on;
    if (!on) presync_ = {};
}

void Controller::set_dcreg_enabled(bool on) {
    if (on && !cfg_.dcreg.enabled) dcreg_ = make_dc_reg_state(cfg_.dcreg, cfg_.period());
    cfg_.dcreg.enabled = on;
}

ControllerOutput Controller::step(const Measurements& meas) {
    const double T = cfg_.period();
    const int N = cfg_.svo.N;
    const double floor = cfg_.voltage_floor;

    SpaceVector i_phys = cfg_.evi.side == FeedbackSide::Grid ? meas.i_g : meas.i_a;
    SpaceVector v_poc = meas.v_poc;
    SpaceVector v_sync = meas.v_sync;
    if (N == 1) {
        i_phys.beta = single_phase_beta(delay_i_, i_phys.alpha).beta;
        v_poc.beta = single_phase_beta(delay_vpoc_, v_poc.alpha).beta;
        v_sync.beta = single_phase_beta(delay_vsync_, v_sync.alpha).beta;
    }

    ControllerOutput out;
    double P0 = cfg_.svo.P0;
    if (cfg_.dcreg.enabled) {
        out.P0_reg = dc_regulator_step(dcreg_, meas.v_dc, cfg_.dcreg);
        P0 += out.P0_reg;
    }
    P0 += p0_injection_;

    if (cfg_.presync.enabled) presync_step(presync_, osc_.v, v_sync, cfg_.presync, T);
    const SpaceVector i_fb = i_phys + presync_.i_ps;

    const double vmag = v_poc.magnitude();
    if (!fault_.vg_initialized) {
        fault_.vg_filtered = vmag;
        fault_.vg_initialized = true;
    } else {
        const double a = std::exp(-cfg_.fault.vg_filter_bandwidth * T);
        fault_.vg_filtered = a * fault_.vg_filtered + (1.0 - a) * vmag;
    }
    fault_ = fault_fsm_step(fault_, i_phys.magnitude(), fault_.vg_filtered, cfg_.fault, T);

    double Q0 = cfg_.svo.Q0;
    const bool latched = cfg_.fault.enabled && fault_.x_f == 1;
    if (latched && cfg_.fault.boost_q0) {
        const double S = cfg_.fault.S_rated;
        Q0 = std::sqrt(std::max(S * S - P0 * P0, 0.0));
    }
    fault_.K_m = latched ? fault_gain(P0, Q0, N, cfg_.fault.I_m) : 0.0;

    SvoParams p = cfg_.svo;
    p.P0 = P0;
    p.Q0 = Q0;

    const SpaceVector v_k = osc_.v;
    osc_ = svo_step(osc_, i_fb, p, fault_, cfg_.fault, T, floor);
    // Reported power is what the oscillator integrated against the held
    // current: the mid-step voltage, i.e. the chord midpoint rescaled to the
    // mean magnitude.
    SpaceVector v_mid = 0.5 * (v_k + osc_.v);
    if (const double chord = v_mid.magnitude(); chord > 0.0) {
        v_mid *= 0.5 * (v_k.magnitude() + osc_.v.magnitude()) / chord;
    }
    const PowerPair pq = instantaneous_pq(v_mid, i_fb, N);

    const SpaceVector i0_sat = saturated_reference(osc_.v, p, fault_, cfg_.fault, floor);
    const SpaceVector v_zv = evi_step(evi_, i_fb, N == 1);
    SpaceVector v_c = osc_.v - v_zv;
    if (cfg_.fault.enabled) v_c += ocl_compensation(i0_sat, i_fb, fault_.x_r, cfg_.fault.R0);
    if (N == 1) v_c.beta = 0.0;

    const double scale = cfg_.modulation == ModulationScaling::Reference ? cfg_.V_dc_ref : meas.v_dc;
    if (!(scale > 0.0)) throw Error(ErrorKind::NonFinite, "modulation scale must be positive", "v_dc");

    out.m = v_c / scale;
    out.v_c = v_c;
    out.v = v_k;
    out.i_fb = i_fb;
    out.i0_sat = i0_sat;
    out.i_ps = presync_.i_ps;
    out.P = pq.P;
    out.Q = pq.Q;
    out.P0 = P0;
    out.Q0 = Q0;
    out.omega = wrap_angle(std::atan2(osc_.v.beta, osc_.v.alpha) - std::atan2(v_k.beta, v_k.alpha)) / T;
    out.x_f = fault_.x_f;
    out.x_r = fault_.x_r;
    return out;
}

}  // namespace uvoc
