#include "uvoc/plant.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

namespace uvoc {

namespace {

struct Evaluation {
    PlantDerivatives d;
    PlantOutputs o;
};

// Topology cases at the PoC. "Merged" is a closed switch with no load: L_g and
// L_N carry the same current and act as one inductor.
enum class Topology { ClosedLoaded, ClosedMerged, ClosedStiff, OpenLoaded, OpenIdle };

Topology topology(const PlantParams& p) {
    if (p.sts_closed) {
        if (p.grid.L_N <= 0.0) return Topology::ClosedStiff;
        return p.has_load() ? Topology::ClosedLoaded : Topology::ClosedMerged;
    }
    return p.has_load() ? Topology::OpenLoaded : Topology::OpenIdle;
}

Evaluation evaluate(const PlantState& s, SpaceVector v_a, const PlantParams& p) {
    Evaluation e;
    PlantDerivatives& d = e.d;
    PlantOutputs& o = e.o;
    if (p.N == 1) v_a.beta = 0.0;

    o.v_src = grid_source_voltage(s.grid_phase, p);
    const SpaceVector v_f = s.v_cap + p.r_d * (s.i_a - s.i_g);
    o.v_f = v_f;
    const GridParams& g = p.grid;

    SpaceVector v_p;
    switch (topology(p)) {
        case Topology::ClosedLoaded:
            v_p = p.R_load * (s.i_g - s.i_n);
            d.di_g = (v_f - v_p - p.r_g * s.i_g) / p.L_g;
            d.di_n = (v_p - o.v_src - g.R_N * s.i_n) / g.L_N;
            o.i_n = s.i_n;
            break;
        case Topology::ClosedMerged:
            d.di_g = (v_f - o.v_src - (p.r_g + g.R_N) * s.i_g) / (p.L_g + g.L_N);
            d.di_n = d.di_g;
            v_p = o.v_src + g.R_N * s.i_g + g.L_N * d.di_g;
            o.i_n = s.i_g;
            break;
        case Topology::ClosedStiff: {
            if (g.R_N > 0.0) {
                const double y_load = p.has_load() ? 1.0 / p.R_load : 0.0;
                v_p = (s.i_g + o.v_src / g.R_N) / (1.0 / g.R_N + y_load);
                o.i_n = (v_p - o.v_src) / g.R_N;
            } else {
                v_p = o.v_src;
                o.i_n = p.has_load() ? s.i_g - v_p / p.R_load : s.i_g;
            }
            d.di_g = (v_f - v_p - p.r_g * s.i_g) / p.L_g;
            break;
        }
        case Topology::OpenLoaded:
            v_p = p.R_load * s.i_g;
            d.di_g = (v_f - v_p - p.r_g * s.i_g) / p.L_g;
            break;
        case Topology::OpenIdle:
            v_p = v_f;
            break;
    }
    o.v_poc = v_p;
    o.v_sync = p.sts_closed ? v_p : o.v_src;

    d.di_a = (v_a - v_f - p.r_a * s.i_a) / p.L_a;
    d.dv_cap = (s.i_a - s.i_g) / p.C_f;
    d.dgrid_phase = g.omega_g;

    const double kp = phase_power_factor(p.N);
    o.P_pole = kp * (v_a.alpha * s.i_a.alpha + v_a.beta * s.i_a.beta);
    if (p.dc_mode == DcBusMode::Capacitor) {
        if (!(s.v_dc >= p.v_dc_floor)) {
            throw Error(ErrorKind::NonFinite, "DC bus voltage collapsed below floor",
                        "v_dc=" + std::to_string(s.v_dc));
        }
        d.dv_dc = (p.P_dc - o.P_pole) / (p.C_dc * s.v_dc);
    }
    if (p.N == 1) {
        d.di_a.beta = d.dv_cap.beta = d.di_g.beta = d.di_n.beta = 0.0;
    }
    return e;
}

PlantState advance(const PlantState& s, const PlantDerivatives& d, double h) {
    PlantState out = s;
    out.i_a += h * d.di_a;
    out.v_cap += h * d.dv_cap;
    out.i_g += h * d.di_g;
    out.i_n += h * d.di_n;
    out.v_dc += h * d.dv_dc;
    out.grid_phase += h * d.dgrid_phase;
    return out;
}

bool finite(const PlantState& s) {
    return s.i_a.is_finite() && s.v_cap.is_finite() && s.i_g.is_finite() && s.i_n.is_finite() &&
           std::isfinite(s.v_dc) && std::isfinite(s.grid_phase);
}

}  // namespace

void PlantParams::validate() const {
    auto require = [](bool ok, const char* message, const char* context) {
        if (!ok) throw Error(ErrorKind::InvalidArgument, message, context);
    };
    require(N == 1 || N == 3, "phase count must be 1 or 3", "plant.N");
    require(L_a > 0.0 && L_g > 0.0 && C_f > 0.0, "L_a, L_g and C_f must be positive", "plant");
    require(r_a >= 0.0 && r_g >= 0.0 && r_d >= 0.0, "resistances must be non-negative", "plant");
    require(grid.R_N >= 0.0 && grid.L_N >= 0.0, "grid impedance must be non-negative", "plant.grid");
    require(grid.V_gp >= 0.0 && grid.omega_g > 0.0, "grid source needs V_gp >= 0 and omega_g > 0", "plant.grid");
    require(C_dc > 0.0, "C_dc must be positive", "plant.C_dc");
    require(!(R_load <= 0.0), "load resistance must be positive", "plant.R_load");
    require(short_resistance > 0.0, "short resistance must be positive", "plant.short_resistance");
}

SpaceVector grid_source_voltage(double phase, const PlantParams& p) {
    SpaceVector v{p.grid.V_gp * std::cos(phase), p.grid.V_gp * std::sin(phase)};
    for (const auto& h : p.grid.harmonics) {
        v.alpha += h.amplitude * std::cos(h.order * phase);
        v.beta += h.sequence * h.amplitude * std::sin(h.order * phase);
    }
    if (p.N == 1) v.beta = 0.0;
    return v;
}

PlantDerivatives plant_derivatives(const PlantState& s, SpaceVector v_a, const PlantParams& p) {
    return evaluate(s, v_a, p).d;
}

PlantOutputs plant_outputs(const PlantState& s, SpaceVector v_a, const PlantParams& p) {
    return evaluate(s, v_a, p).o;
}

void conform_state(PlantState& s, const PlantParams& p) {
    switch (topology(p)) {
        case Topology::ClosedLoaded:
            break;
        case Topology::ClosedMerged: {
            // Flux linkage of the series pair is conserved when the currents are forced equal.
            const double L = p.L_g + p.grid.L_N;
            const SpaceVector i = (p.L_g * s.i_g + p.grid.L_N * s.i_n) / L;
            s.i_g = i;
            s.i_n = i;
            break;
        }
        case Topology::ClosedStiff:
            s.i_n = s.i_g;
            break;
        case Topology::OpenLoaded:
            s.i_n = {};
            break;
        case Topology::OpenIdle:
            s.i_g = {};
            s.i_n = {};
            break;
    }
}

PlantState plant_rk4_step(const PlantState& s, SpaceVector v_a, const PlantParams& p, double dt) {
    const PlantDerivatives k1 = plant_derivatives(s, v_a, p);
    const PlantDerivatives k2 = plant_derivatives(advance(s, k1, 0.5 * dt), v_a, p);
    const PlantDerivatives k3 = plant_derivatives(advance(s, k2, 0.5 * dt), v_a, p);
    const PlantDerivatives k4 = plant_derivatives(advance(s, k3, dt), v_a, p);
    PlantState out = s;
    const double w = dt / 6.0;
    out.i_a += w * (k1.di_a + 2.0 * k2.di_a + 2.0 * k3.di_a + k4.di_a);
    out.v_cap += w * (k1.dv_cap + 2.0 * k2.dv_cap + 2.0 * k3.dv_cap + k4.dv_cap);
    out.i_g += w * (k1.di_g + 2.0 * k2.di_g + 2.0 * k3.di_g + k4.di_g);
    out.i_n += w * (k1.di_n + 2.0 * k2.di_n + 2.0 * k3.di_n + k4.di_n);
    out.v_dc += w * (k1.dv_dc + 2.0 * k2.dv_dc + 2.0 * k3.dv_dc + k4.dv_dc);
    out.grid_phase += w * (k1.dgrid_phase + 2.0 * k2.dgrid_phase + 2.0 * k3.dgrid_phase + k4.dgrid_phase);
    if (!finite(out)) throw Error(ErrorKind::NonFinite, "plant state became non-finite", "plant");
    return out;
}

double plant_spectral_radius(const PlantParams& p) {
    // The AC network is linear for a fixed topology; one axis suffices.
    PlantParams q = p;
    q.grid.V_gp = 0.0;
    q.grid.harmonics.clear();
    q.dc_mode = DcBusMode::Source;
    const PlantState zero{};
    const auto column = [&](const PlantState& s) {
        const PlantDerivatives d = plant_derivatives(s, {}, q);
        return Eigen::Vector4d(d.di_a.alpha, d.dv_cap.alpha, d.di_g.alpha, d.di_n.alpha);
    };
    Eigen::Matrix4d A;
    for (int k = 0; k < 4; ++k) {
        PlantState s = zero;
        if (k == 0) s.i_a.alpha = 1.0;
        if (k == 1) s.v_cap.alpha = 1.0;
        if (k == 2) s.i_g.alpha = 1.0;
        if (k == 3) s.i_n.alpha = 1.0;
        A.col(k) = column(s);
    }
    const Eigen::EigenSolver<Eigen::Matrix4d> es(A, false);
    double rho = 0.0;
    for (int k = 0; k < 4; ++k) rho = std::max(rho, std::abs(es.eigenvalues()(k)));
    return rho;
}

double stored_energy(const PlantState& s, const PlantParams& p) {
    const double kp = phase_power_factor(p.N);
    double e = 0.5 * kp *
               (p.L_a * s.i_a.magnitude_squared() + p.C_f * s.v_cap.magnitude_squared() +
                p.L_g * s.i_g.magnitude_squared() + p.grid.L_N * plant_outputs(s, {}, p).i_n.magnitude_squared());
    if (p.dc_mode == DcBusMode::Capacitor) e += 0.5 * p.C_dc * s.v_dc * s.v_dc;
    return e;
}

PowerFlows power_flows(const PlantState& s, SpaceVector v_a, const PlantParams& p) {
    const double kp = phase_power_factor(p.N);
    const PlantOutputs o = plant_outputs(s, v_a, p);
    PowerFlows f;
    if (p.dc_mode == DcBusMode::Capacitor) {
        f.dc_in = p.P_dc;
    } else {
        f.dc_in = o.P_pole;
    }
    if (p.sts_closed) f.source_in = -kp * (o.v_src.alpha * o.i_n.alpha + o.v_src.beta * o.i_n.beta);
    if (p.has_load()) f.load = kp * o.v_poc.magnitude_squared() / p.R_load;
    const SpaceVector i_cap = s.i_a - s.i_g;
    f.losses = kp * (p.r_a * s.i_a.magnitude_squared() + p.r_g * s.i_g.magnitude_squared() +
                     p.r_d * i_cap.magnitude_squared());
    if (p.sts_closed) f.losses += kp * p.grid.R_N * o.i_n.magnitude_squared();
    return f;
}

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::GridVoltage: return "grid_voltage";
        case EventKind::GridFrequency: return "grid_frequency";
        case EventKind::StsOpen: return "sts_open";
        case EventKind::StsClose: return "sts_close";
        case EventKind::LoadStep: return "load_step";
        case EventKind::ShortCircuit: return "short_circuit";
        case EventKind::ClearShort: return "clear_short";
        case EventKind::DcLoadStep: return "dc_load_step";
        case EventKind::SetP0: return "set_P0";
        case EventKind::SetQ0: return "set_Q0";
        case EventKind::PresyncOn: return "presync_on";
        case EventKind::PresyncOff: return "presync_off";
        case EventKind::DcRegOn: return "dcreg_on";
        case EventKind::DcRegOff: return "dcreg_off";
    }
    return "unknown";
}

EventKind event_kind_from_string(const std::string& name) {
    static constexpr EventKind all[] = {
        EventKind::GridVoltage, EventKind::GridFrequency, EventKind::StsOpen,  EventKind::StsClose,
        EventKind::LoadStep,    EventKind::ShortCircuit,  EventKind::ClearShort, EventKind::DcLoadStep,
        EventKind::SetP0,       EventKind::SetQ0,         EventKind::PresyncOn, EventKind::PresyncOff,
        EventKind::DcRegOn,     EventKind::DcRegOff,
    };
    for (EventKind k : all) {
        if (name == to_string(k)) return k;
    }
    throw Error(ErrorKind::Schema, "unknown event type", name);
}

bool is_plant_event(EventKind kind) {
    switch (kind) {
        case EventKind::GridVoltage:
        case EventKind::GridFrequency:
        case EventKind::StsOpen:
        case EventKind::StsClose:
        case EventKind::LoadStep:
        case EventKind::ShortCircuit:
        case EventKind::ClearShort:
        case EventKind::DcLoadStep:
            return true;
        default:
            return false;
    }
}

PlantParams apply_event(PlantParams p, const Event& e) {
    switch (e.kind) {
        case EventKind::GridVoltage: p.grid.V_gp = e.value; break;
        case EventKind::GridFrequency: p.grid.omega_g = e.value; break;
        case EventKind::StsOpen: p.sts_closed = false; break;
        case EventKind::StsClose: p.sts_closed = true; break;
        case EventKind::LoadStep:
            p.R_load = (e.value > 0.0) ? e.value : std::numeric_limits<double>::infinity();
            break;
        case EventKind::ShortCircuit:
            if (!p.shorted) p.R_load_before_short = p.R_load;
            p.shorted = true;
            p.R_load = p.short_resistance;
            break;
        case EventKind::ClearShort:
            if (p.shorted) p.R_load = p.R_load_before_short;
            p.shorted = false;
            break;
        case EventKind::DcLoadStep: p.P_dc = e.value; break;
        default:
            throw Error(ErrorKind::InvalidArgument, "not a plant event", to_string(e.kind));
    }
    p.validate();
    return p;
}

}  // namespace uvoc
