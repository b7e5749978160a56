#pragma once

#include <limits>
#include <string>
#include <vector>

#include "uvoc/core.hpp"

namespace uvoc {

struct GridHarmonic {
    double order = 5.0;
    double amplitude = 0.0;  ///< peak V
    int sequence = -1;       ///< +1 positive, -1 negative sequence
};

/// Thevenin source behind Z_N = R_N + s L_N.
struct GridParams {
    double R_N = 0.0;
    double L_N = 1e-3;
    double V_gp = kSqrt2 * 120.0;  ///< source peak
    double omega_g = 2.0 * kPi * 60.0;
    std::vector<GridHarmonic> harmonics;
};

enum class DcBusMode { Source, Capacitor };

/// Converter poles -> L_a -> node f (C_f, optional series r_d) -> L_g -> PoC.
/// The PoC hosts the parallel load and the transfer switch to the grid branch.
struct PlantParams {
    int N = 3;
    double L_a = 0.8915e-3;
    double L_g = 0.6005e-3;
    double C_f = 54e-6;
    double r_a = 0.0;
    double r_g = 0.0;
    double r_d = 0.0;
    GridParams grid;

    DcBusMode dc_mode = DcBusMode::Source;
    double C_dc = 2e-3;
    double P_dc = 0.0;  ///< power injected into the bus by the DC side
    double v_dc_floor = 1.0;

    double R_load = std::numeric_limits<double>::infinity();  ///< infinity = no load
    bool sts_closed = true;
    double short_resistance = 1e-3;
    bool shorted = false;
    double R_load_before_short = std::numeric_limits<double>::infinity();

    void validate() const;
    bool has_load() const { return std::isfinite(R_load); }
};

struct PlantState {
    SpaceVector i_a;
    SpaceVector v_cap;
    SpaceVector i_g;
    SpaceVector i_n;  ///< current into the grid branch
    double v_dc = 400.0;
    double grid_phase = 0.0;
};

struct PlantDerivatives {
    SpaceVector di_a;
    SpaceVector dv_cap;
    SpaceVector di_g;
    SpaceVector di_n;
    double dv_dc = 0.0;
    double dgrid_phase = 0.0;
};

struct PlantOutputs {
    SpaceVector v_f;     ///< filter node voltage including r_d drop
    SpaceVector v_poc;   ///< PoC voltage
    SpaceVector v_sync;  ///< grid side of the transfer switch
    SpaceVector v_src;
    SpaceVector i_n;
    double P_pole = 0.0;  ///< power delivered by the converter poles
};

/// Physical power factor: 3/2 for three-phase space vectors, 1 for the
/// single-phase alpha axis.
inline double phase_power_factor(int N) { return N == 3 ? 1.5 : 1.0; }

SpaceVector grid_source_voltage(double phase, const PlantParams& p);

PlantDerivatives plant_derivatives(const PlantState& s, SpaceVector v_a, const PlantParams& p);
PlantOutputs plant_outputs(const PlantState& s, SpaceVector v_a, const PlantParams& p);

/// Re-impose the algebraic constraints of the current topology on the
/// inductor currents after a switching event.
void conform_state(PlantState& s, const PlantParams& p);

/// Classical RK4 with v_a held.
PlantState plant_rk4_step(const PlantState& s, SpaceVector v_a, const PlantParams& p, double dt);

/// Largest |eigenvalue| of the AC-side state matrix for the current topology.
double plant_spectral_radius(const PlantParams& p);

/// Energy stored in the inductors, filter capacitor and (in capacitor mode) the DC bus.
double stored_energy(const PlantState& s, const PlantParams& p);

/// Power balance terms at the given state: sources minus dissipation.
struct PowerFlows {
    double dc_in = 0.0;
    double source_in = 0.0;
    double load = 0.0;
    double losses = 0.0;
};
PowerFlows power_flows(const PlantState& s, SpaceVector v_a, const PlantParams& p);

enum class EventKind {
    GridVoltage,
    GridFrequency,
    StsOpen,
    StsClose,
    LoadStep,
    ShortCircuit,
    ClearShort,
    DcLoadStep,
    SetP0,
    SetQ0,
    PresyncOn,
    PresyncOff,
    DcRegOn,
    DcRegOff,
};

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::GridVoltage;
    double value = 0.0;
};

const char* to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& name);
bool is_plant_event(EventKind kind);

/// Plant-side event application. LoadStep with value <= 0 or infinity removes
/// the load. Throws InvalidArgument for controller events.
PlantParams apply_event(PlantParams p, const Event& e);

}  // namespace uvoc
