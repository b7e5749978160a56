#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uvoc/controller.hpp"
#include "uvoc/plant.hpp"

namespace uvoc {

enum class InitMode { Grid, Nominal, Explicit };

struct InitialCondition {
    InitMode mode = InitMode::Grid;
    SpaceVector v_osc;  ///< used by Explicit
    PlantState plant;   ///< used by Explicit
};

struct Scenario {
    std::string name = "scenario";
    VscRatings ratings;
    PlantParams plant;
    ControllerConfig controller;
    InitialCondition init;
    double v_dc_init = 400.0;
    std::vector<Event> events;
    double duration = 1.0;
    int substeps = 10;
    int decimation = 1;
    std::uint64_t seed = 0;
    double measurement_noise = 0.0;  ///< std. deviation added to sampled signals

    /// Throws InvalidArgument; also validates the nested configs.
    void validate() const;
};

struct TraceRecord {
    double t = 0.0;
    SpaceVector v;
    SpaceVector i_a;
    SpaceVector i_g;
    SpaceVector v_f;
    double v_dc = 0.0;
    double P = 0.0;
    double Q = 0.0;
    double V_p = 0.0;
    double omega = 0.0;
    int x_f = 0;
    double x_r = 0.0;
    double P0 = 0.0;
    double i_ps_mag = 0.0;
};

struct Trace {
    double dt = 0.0;
    double omega0 = 2.0 * kPi * 60.0;
    std::vector<TraceRecord> rows;
};

/// Column order of the CSV export.
inline constexpr const char* kTraceColumns =
    "t,v_alpha,v_beta,ia_alpha,ia_beta,ig_alpha,ig_beta,vf_alpha,vf_beta,v_dc,P,Q,V_p,omega,x_f,x_r,P0,i_ps_mag";

void write_trace_csv(const Trace& trace, std::ostream& os);
/// Shortest decimal string that round-trips to the same double.
std::string format_double(double x);

/// Fixed-step co-simulation of one scenario, advanced a control period at a time.
class Simulation {
public:
    explicit Simulation(const Scenario& s);

    /// Sample, run the controller, apply due events and integrate the plant
    /// across one control period. Returns the controller output at t_k.
    const ControllerOutput& step();

    double time() const { return static_cast<double>(k_) * T_; }
    std::int64_t step_index() const { return k_; }
    TraceRecord last_record() const { return record_; }

    Controller& controller() { return controller_; }
    const PlantState& plant_state() const { return state_; }
    const PlantParams& plant_params() const { return params_; }
    int refinement() const { return refine_; }

private:
    void apply_due_events(std::int64_t plant_index);
    void update_refinement();
    SpaceVector noisy(SpaceVector x);

    Scenario scenario_;
    Controller controller_;
    PlantParams params_;
    PlantState state_;
    double T_ = 0.0;
    double dt_plant_ = 0.0;
    int refine_ = 1;
    std::int64_t k_ = 0;
    std::size_t next_event_ = 0;
    SpaceVector v_a_hold_;
    ControllerOutput out_;
    TraceRecord record_;
    std::mt19937_64 rng_;
};

Trace run_scenario(const Scenario& s);

enum class InjectionPoint { DcVoltageLoop, ReferenceLag };

struct ResponseOptions {
    double settle_time = 3.0;       ///< before injection
    double drift_window = 0.5;      ///< tail of the settling run checked for drift
    double drift_tolerance = 2e-3;  ///< relative v_dc change between halves of the window
    double transient_time = 2.0;    ///< after injection starts, discarded
    double resolution_hz = 0.5;     ///< tones are snapped to multiples of this
    int cycles = 2;                 ///< analysis window = cycles / resolution_hz
    double amplitude = 0.0;         ///< per-tone amplitude; 0 selects 0.5% of S_rated
    double lag_omega = 2.0 * kPi * 10.0;
};

struct FrequencyPoint {
    double omega = 0.0;
    std::complex<double> gain;
};

/// Multi-tone injection with Schroeder phases and single-bin projection.
std::vector<FrequencyPoint> measure_frequency_response(const Scenario& s, InjectionPoint point,
                                                       std::span<const double> freqs_hz,
                                                       const ResponseOptions& opt = {});

struct SteadyState {
    double P = 0.0;
    double Q = 0.0;
    double V_p = 0.0;
    double omega = 0.0;
    double v_dc = 0.0;
};

/// Averages over the trailing `window` seconds; omega by least-squares fit of
/// the unwrapped oscillator angle.
SteadyState steady_state_extract(const Trace& tr, double window);

}  // namespace uvoc
