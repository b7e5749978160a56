#pragma once

#include <complex>
#include <vector>

#include "uvoc/controller.hpp"
#include "uvoc/core.hpp"
#include "uvoc/plant.hpp"

namespace uvoc {

struct DesignSpec {
    VscRatings ratings;
    double dV_max = 6.0;       ///< V RMS
    double domega_max = kPi;   ///< rad/s
    double phi = kPi / 2.0;

    void validate() const;
    double V_max() const { return ratings.V0 + dV_max; }
};

struct EtaMu {
    double eta = 0.0;
    double mu = 0.0;
};

/// Only phi = 0 and phi = pi/2 have closed-form designs.
EtaMu design_eta_mu(const DesignSpec& spec);

struct DesignReport {
    EtaMu gains;
    double V_max = 0.0;
    /// Operating voltage at the opposite reactive extreme (exact root).
    double V_min = 0.0;
    /// sqrt(2 V0^2 - V_max^2), the symmetric approximation of the same point.
    double V_min_symmetric = 0.0;
    double rated_power_residual = 0.0;    ///< relative, frequency identity at V_max
    double rated_voltage_residual = 0.0;  ///< relative, voltage identity at V_max
};

DesignReport design_report(const DesignSpec& spec);

/// SVO parameters for a design: V_p0 = sqrt(2) V0, zero setpoints.
SvoParams svo_params_from_design(const DesignSpec& spec, const EtaMu& gains);

/// Closed-form steady-state RMS voltage. Throws Infeasible for a negative
/// radicand and InvalidArgument when mu == 0.
double steady_state_voltage(double P, double Q, const SvoParams& p);

/// omega = omega0 + eta/(N V^2) [(P0 - P) sin(phi) - (Q0 - Q) cos(phi)], V RMS.
double droop_frequency(double P, double Q, double V, const SvoParams& p);

struct DroopPoint {
    double P = 0.0;
    double Q = 0.0;
    double V = 0.0;
    double omega = 0.0;
};

struct PowerMapOptions {
    double V_g_min = 114.0;  ///< RMS
    double V_g_max = 126.0;
    double omega_g_min = 2.0 * kPi * 60.0 - kPi;
    double omega_g_max = 2.0 * kPi * 60.0 + kPi;
    int n_V = 21;
    int n_omega = 21;
    int max_iterations = 60;
    double tolerance = 1e-12;  ///< scaled residual infinity norm
};

struct PowerMapNode {
    double V_g = 0.0;
    double omega_g = 0.0;
    double P_poc = 0.0;
    double Q_poc = 0.0;
    double P_svo = 0.0;
    double Q_svo = 0.0;
    double V = 0.0;      ///< oscillator RMS magnitude
    double delta = 0.0;  ///< oscillator angle relative to the PoC voltage
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
};

/// Fundamental-frequency solution of the oscillator against an infinite bus at
/// the PoC through Z_v and the LCL filter.
PowerMapNode solve_power_flow(const SvoParams& p, const PlantParams& plant, const EviParams& evi, double V_g,
                              double omega_g, const PowerMapOptions& opt = {});

/// Row-major over V_g (outer) and omega_g (inner).
std::vector<PowerMapNode> power_limit_map(const SvoParams& p, const PlantParams& plant, const EviParams& evi,
                                          const PowerMapOptions& opt);

}  // namespace uvoc
