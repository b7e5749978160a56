#pragma once

#include <complex>
#include <limits>
#include <vector>

#include "uvoc/core.hpp"
#include "uvoc/filters.hpp"

namespace uvoc {

/// Space-vector oscillator gains and setpoints. mu == 0 selects grid-following
/// operation; nothing else differs between the two modes.
struct SvoParams {
    double eta = 16.6253;     ///< synchronization gain
    double mu = 5.2029e-4;    ///< magnitude-correction gain, 1/(V^2 s)
    double phi = kPi / 2.0;   ///< current-error rotation, rad
    double omega0 = 2.0 * kPi * 60.0;
    double Vp0 = kSqrt2 * 120.0;
    double P0 = 0.0;
    double Q0 = 0.0;
    int N = 3;

    void validate() const;
    bool grid_following() const { return mu == 0.0; }
};

struct OscillatorState {
    SpaceVector v;
};

struct FaultConfig {
    bool enabled = false;
    double I_T = std::numeric_limits<double>::infinity();  ///< over-current threshold, peak A
    double V_T = 0.0;                                      ///< low-voltage threshold, peak V
    double I_m = std::numeric_limits<double>::infinity();  ///< current limit, peak A
    double R0 = 0.0;                                       ///< OCL gain, ohm
    double omega_ocl = 2.0 * kPi * 500.0;
    double t_f = 0.1;      ///< x_r ramp duration
    double tau_f = 0.028;  ///< gain-boost time constant
    /// eta_f = eta (1 + (R0 / boost_impedance_base) / tau_f). 1 keeps R0 in
    /// ohms; the scenario loader sets Z_base so that R0 enters in per-unit.
    double boost_impedance_base = 1.0;
    /// Raise Q0 to sqrt(S^2 - P0^2) while the fault is latched.
    bool boost_q0 = false;
    double S_rated = 0.0;
    double vg_filter_bandwidth = 100.0;  ///< rad/s, detector for the V_T comparison

    void validate() const;
};

struct FaultState {
    int x_f = 0;
    double x_r = 0.0;
    double ramp_clock = 0.0;
    double K_m = 0.0;
    double vg_filtered = 0.0;
    bool vg_initialized = false;
    bool clear_armed = false;
};

enum class FeedbackSide { Grid, Converter };

struct ResonantTerm {
    double h = 0.0;
    double K_h = 0.0;      ///< ohm
    double omega_B = 0.0;  ///< rad/s
    double omega_h = 0.0;  ///< rad/s, h * omega0
};

struct EviParams {
    double R_vir = 0.0;
    double L_vir = 0.0;
    double omega_c = 1200.0;
    std::vector<ResonantTerm> bank;
    FeedbackSide side = FeedbackSide::Grid;

    void validate() const;
};

/// Discretized emulated impedance, one filter bank per axis.
struct EviState {
    Biquad branch;  ///< band-limited R_vir / L_vir, first order
    std::vector<Biquad> resonators;
    BiquadState branch_alpha, branch_beta;
    std::vector<BiquadState> res_alpha, res_beta;
    double T = 0.0;
};

struct PresyncParams {
    double L_ps = 1.5e-3;
    double R_ps = 0.21;
    bool enabled = false;

    void validate() const;
};

struct PresyncState {
    SpaceVector i_ps;
};

struct DcRegParams {
    double K_pdc = 75.0;          ///< W/V
    double T_i = 0.4;             ///< s
    double omega_z = 5.0 * kPi;   ///< rad/s
    double omega_p = 30.0 * kPi;  ///< rad/s
    double V_dc_ref = 400.0;
    bool enabled = false;

    void validate() const;
};

struct DcRegState {
    Biquad lead_lag;
    BiquadState filter;
    double integral = 0.0;
    double previous = 0.0;
    double T = 0.0;
};

// --- Individual operations ---------------------------------------------------

/// Current reference from instantaneous power theory. Throws DegenerateVoltage.
SpaceVector current_reference(SpaceVector v, double P0, double Q0, int N, double voltage_floor);

/// Radial saturation to |i| <= I_m, angle preserved.
SpaceVector circular_limit(SpaceVector i0, double I_m);

/// K_m = N I_m / sqrt(2 (P0^2 + Q0^2)); zero when both setpoints are zero.
double fault_gain(double P0, double Q0, int N, double I_m);

/// Saturated reference while the fault is latched: the power-theory reference
/// scaled by K_m V so that its magnitude is exactly I_m. With P0 = Q0 = 0 the
/// reference is pure reactive injection, rotate(v, -pi/2) at magnitude I_m.
SpaceVector fault_mode_reference(SpaceVector v, double P0, double Q0, int N, double I_m, double voltage_floor);

/// One controller period of the fault latch and recovery ramp.
FaultState fault_fsm_step(FaultState state, double i_mag, double vg_filtered, const FaultConfig& cfg, double dt);

/// Synchronization gain including the fault-mode boost.
double effective_eta(double eta, const FaultState& f, const FaultConfig& cfg);

/// Right-hand side of the oscillator law with i_fb held constant.
SpaceVector svo_derivative(SpaceVector v, SpaceVector i_fb, const SvoParams& p, const FaultState& f,
                           const FaultConfig& cfg, double voltage_floor);

/// Saturated reference used by the oscillator and the OCL at voltage v.
SpaceVector saturated_reference(SpaceVector v, const SvoParams& p, const FaultState& f, const FaultConfig& cfg,
                                double voltage_floor);

/// Classical RK4 over one control period, measurements zero-order held.
OscillatorState svo_step(const OscillatorState& osc, SpaceVector i_fb, const SvoParams& p, const FaultState& f,
                         const FaultConfig& cfg, double dt, double voltage_floor);

SpaceVector ocl_compensation(SpaceVector i0_sat, SpaceVector i_fb, double x_r, double R0);

EviState make_evi_state(const EviParams& p, double T);
/// Returns v_zv; `single_axis` leaves the beta channel at zero.
SpaceVector evi_step(EviState& state, SpaceVector i_fb, bool single_axis = false);
/// Continuous-time Z_v(j omega).
std::complex<double> evi_impedance(const EviParams& p, double omega);
/// Response of the discretized bank at omega.
std::complex<double> evi_discrete_response(const EviState& state, double omega);

/// Virtual RL branch Y_ps = 1 / (s L_ps + R_ps), exact step-invariant
/// discretization per axis.
SpaceVector presync_step(PresyncState& state, SpaceVector v, SpaceVector v_g, const PresyncParams& p, double dt);

DcRegState make_dc_reg_state(const DcRegParams& p, double T);
/// Returns the AC-side real power reference contribution. P0 is the power
/// delivered to the AC side, so a DC voltage shortfall lowers P0 and pulls
/// power into the bus: P0 = -F_dc(s) (V*_dc - v_dc).
double dc_regulator_step(DcRegState& state, double v_dc, const DcRegParams& p);

struct QuarterDelaySample {
    double beta = 0.0;
    bool valid = false;
};

/// Delay line of T0/4 = pi / (2 omega0).
FractionalDelay make_quarter_delay(double omega0, double T);
QuarterDelaySample single_phase_beta(FractionalDelay& history, double alpha);

// --- Composition -------------------------------------------------------------

enum class ModulationScaling { Reference, Measured };

struct ControllerConfig {
    SvoParams svo;
    FaultConfig fault;
    EviParams evi;
    PresyncParams presync;
    DcRegParams dcreg;
    ModulationScaling modulation = ModulationScaling::Reference;
    double V_dc_ref = 400.0;
    double f_s = 10e3;
    double voltage_floor = 1.2e-4;

    void validate() const;
    double period() const { return 1.0 / f_s; }
};

struct Measurements {
    SpaceVector i_a;
    SpaceVector i_g;
    SpaceVector v_poc;   ///< converter terminal voltage (fault detector input)
    SpaceVector v_sync;  ///< voltage on the far side of the transfer switch
    double v_dc = 0.0;
};

struct ControllerOutput {
    SpaceVector m;      ///< modulation index vector
    SpaceVector v_c;    ///< voltage command
    SpaceVector v;      ///< oscillator voltage at the sampling instant
    SpaceVector i_fb;   ///< feedback current (physical + pre-sync)
    SpaceVector i0_sat;
    SpaceVector i_ps;
    double P = 0.0;     ///< oscillator-side power over the step (mid-step voltage, held current)
    double Q = 0.0;
    double P0 = 0.0;    ///< effective setpoints applied this period
    double Q0 = 0.0;
    double P0_reg = 0.0;  ///< DC-regulator contribution
    double omega = 0.0;   ///< forward difference of the oscillator angle
    int x_f = 0;
    double x_r = 0.0;
};

/// Full control stack executed once per sampling period.
class Controller {
public:
    Controller(ControllerConfig cfg, SpaceVector v_init);

    ControllerOutput step(const Measurements& meas);

    const ControllerConfig& config() const { return cfg_; }
    ControllerConfig& mutable_config() { return cfg_; }

    const OscillatorState& oscillator() const { return osc_; }
    const FaultState& fault_state() const { return fault_; }
    const PresyncState& presync_state() const { return presync_; }

    /// Small-signal injection added after the DC regulator.
    void set_p0_injection(double value) { p0_injection_ = value; }
    void set_presync_enabled(bool on);
    void set_dcreg_enabled(bool on);

private:
    ControllerConfig cfg_;
    OscillatorState osc_;
    FaultState fault_;
    EviState evi_;
    PresyncState presync_;
    DcRegState dcreg_;
    FractionalDelay delay_i_, delay_vpoc_, delay_vsync_;
    double p0_injection_ = 0.0;
};

}  // namespace uvoc
