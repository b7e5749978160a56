#include "uvoc/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

namespace uvoc {

namespace {

void require(bool ok, const char* message, const std::string& context) {
    if (!ok) throw Error(ErrorKind::InvalidArgument, message, context);
}

PlantState initial_plant_state(const Scenario& s, SpaceVector v_osc) {
    if (s.init.mode == InitMode::Explicit) return s.init.plant;
    PlantState st;
    st.v_cap = v_osc;
    st.v_dc = s.v_dc_init;
    st.grid_phase = 0.0;
    return st;
}

SpaceVector initial_oscillator_voltage(const Scenario& s) {
    switch (s.init.mode) {
        case InitMode::Explicit:
            return s.init.v_osc;
        case InitMode::Grid:
            if (s.plant.sts_closed && s.plant.grid.V_gp > 0.0) return {s.plant.grid.V_gp, 0.0};
            return {s.controller.svo.Vp0, 0.0};
        case InitMode::Nominal:
            return {s.controller.svo.Vp0, 0.0};
    }
    return {s.controller.svo.Vp0, 0.0};
}

}  // namespace

void Scenario::validate() const {
    ratings.validate();
    plant.validate();
    controller.validate();
    require(duration > 0.0, "duration must be positive", "duration");
    require(substeps >= 1, "substeps must be at least 1", "substeps");
    require(decimation >= 1, "decimation must be at least 1", "decimation");
    require(measurement_noise >= 0.0, "measurement noise must be non-negative", "measurement_noise");
    require(plant.N == ratings.N && controller.svo.N == ratings.N, "phase count differs between blocks", "N");
    require(std::abs(controller.f_s - ratings.f_s) <= 1e-9 * ratings.f_s,
            "controller sampling rate differs from ratings", "controller.f_s");
    require(v_dc_init > 0.0, "initial DC voltage must be positive", "v_dc_init");
    for (std::size_t k = 1; k < events.size(); ++k) {
        require(events[k].t >= events[k - 1].t, "events must be sorted by time", "events");
    }
}

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

void write_trace_csv(const Trace& trace, std::ostream& os) {
    os << kTraceColumns << '\n';
    for (const auto& r : trace.rows) {
        const double values[] = {r.t,     r.v.alpha, r.v.beta, r.i_a.alpha, r.i_a.beta, r.i_g.alpha,
                                 r.i_g.beta, r.v_f.alpha, r.v_f.beta, r.v_dc, r.P,       r.Q,
                                 r.V_p,   r.omega};
        for (double v : values) os << format_double(v) << ',';
        os << r.x_f << ',' << format_double(r.x_r) << ',' << format_double(r.P0) << ','
           << format_double(r.i_ps_mag) << '\n';
    }
}

Simulation::Simulation(const Scenario& s)
    : scenario_((s.validate(), s)),
      controller_(s.controller, initial_oscillator_voltage(s)),
      params_(s.plant),
      state_(initial_plant_state(s, initial_oscillator_voltage(s))),
      rng_(s.seed) {
    T_ = controller_.config().period();
    dt_plant_ = T_ / scenario_.substeps;
    conform_state(state_, params_);
    v_a_hold_ = initial_oscillator_voltage(s) * (state_.v_dc / scenario_.controller.V_dc_ref);
    update_refinement();
}

void Simulation::update_refinement() {
    // RK4 is stable to |lambda h| ~ 2.8; keep a margin for accuracy.
    const double rho = plant_spectral_radius(params_);
    const double n = std::ceil(dt_plant_ * rho / 2.0);
    refine_ = static_cast<int>(std::clamp(n, 1.0, 10000.0));
}

SpaceVector Simulation::noisy(SpaceVector x) {
    if (scenario_.measurement_noise == 0.0) return x;
    std::normal_distribution<double> nd(0.0, scenario_.measurement_noise);
    x.alpha += nd(rng_);
    x.beta += nd(rng_);
    return x;
}

void Simulation::apply_due_events(std::int64_t plant_index) {
    const auto& events = scenario_.events;
    while (next_event_ < events.size() &&
           std::llround(events[next_event_].t / dt_plant_) <= plant_index) {
        const Event& e = events[next_event_++];
        if (is_plant_event(e.kind)) {
            params_ = apply_event(params_, e);
            conform_state(state_, params_);
            update_refinement();
            continue;
        }
        auto& cfg = controller_.mutable_config();
        switch (e.kind) {
            case EventKind::SetP0: cfg.svo.P0 = e.value; break;
            case EventKind::SetQ0: cfg.svo.Q0 = e.value; break;
            case EventKind::PresyncOn: controller_.set_presync_enabled(true); break;
            case EventKind::PresyncOff: controller_.set_presync_enabled(false); break;
            case EventKind::DcRegOn: controller_.set_dcreg_enabled(true); break;
            case EventKind::DcRegOff: controller_.set_dcreg_enabled(false); break;
            default: break;
        }
    }
}

const ControllerOutput& Simulation::step() {
    const double t = time();
    const PlantOutputs o = plant_outputs(state_, v_a_hold_, params_);
    Measurements meas;
    meas.i_a = noisy(state_.i_a);
    meas.i_g = noisy(state_.i_g);
    meas.v_poc = noisy(o.v_poc);
    meas.v_sync = noisy(o.v_sync);
    meas.v_dc = state_.v_dc;
    if (params_.N == 1) {
        meas.i_a.beta = meas.i_g.beta = meas.v_poc.beta = meas.v_sync.beta = 0.0;
    }
    try {
        out_ = controller_.step(meas);
    } catch (const Error& e) {
        throw Error(e.kind(), e.what(), "t=" + format_double(t) + "; " + e.context());
    }

    record_.t = t;
    record_.v = out_.v;
    record_.i_a = state_.i_a;
    record_.i_g = state_.i_g;
    record_.v_f = o.v_f;
    record_.v_dc = state_.v_dc;
    record_.P = out_.P;
    record_.Q = out_.Q;
    record_.V_p = out_.v.magnitude();
    record_.omega = out_.omega;
    record_.x_f = out_.x_f;
    record_.x_r = out_.x_r;
    record_.P0 = out_.P0;
    record_.i_ps_mag = out_.i_ps.magnitude();

    const int n = scenario_.substeps;
    for (int j = 0; j < n; ++j) {
        apply_due_events(k_ * n + j);
        const double h = dt_plant_ / refine_;
        for (int r = 0; r < refine_; ++r) {
            try {
                state_ = plant_rk4_step(state_, out_.m * state_.v_dc, params_, h);
            } catch (const Error& e) {
                const double tp = t + (j + static_cast<double>(r) / refine_) * dt_plant_;
                throw Error(e.kind(), e.what(), "t=" + format_double(tp) + "; " + e.context());
            }
        }
    }
    v_a_hold_ = out_.m * state_.v_dc;
    ++k_;
    return out_;
}

Trace run_scenario(const Scenario& s) {
    Simulation sim(s);
    Trace tr;
    tr.omega0 = s.controller.svo.omega0;
    tr.dt = s.decimation / s.controller.f_s;
    const auto steps = std::llround(s.duration * s.controller.f_s);
    tr.rows.reserve(static_cast<std::size_t>(steps / s.decimation + 1));
    for (std::int64_t k = 0; k < steps; ++k) {
        sim.step();
        if (k % s.decimation == 0) tr.rows.push_back(sim.last_record());
    }
    return tr;
}

std::vector<FrequencyPoint> measure_frequency_response(const Scenario& s, InjectionPoint point,
                                                       std::span<const double> freqs_hz,
                                                       const ResponseOptions& opt) {
    require(!freqs_hz.empty(), "frequency list is empty", "freqs");
    require(opt.resolution_hz > 0.0 && opt.cycles >= 1, "resolution and cycles must be positive", "options");
    const double f_s = s.controller.f_s;
    const double T = 1.0 / f_s;

    std::vector<double> omegas;
    for (double f : freqs_hz) {
        require(f > 0.0 && f < 0.5 * f_s, "tone outside (0, f_s/2)", format_double(f));
        const double m = std::max(1.0, std::round(f / opt.resolution_hz));
        const double w = 2.0 * kPi * m * opt.resolution_hz;
        if (std::find(omegas.begin(), omegas.end(), w) == omegas.end()) omegas.push_back(w);
    }
    const std::size_t K = omegas.size();
    std::vector<double> phases(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double kk = static_cast<double>(k + 1);
        phases[k] = -kPi * kk * (kk - 1.0) / static_cast<double>(K);
    }
    const double A = opt.amplitude > 0.0 ? opt.amplitude : 0.005 * s.ratings.S_rated;
    const auto n_trans = std::llround(opt.transient_time * f_s);
    const auto n_win = std::llround(opt.cycles / opt.resolution_hz * f_s);

    std::vector<std::complex<double>> X(K), Y(K);
    const auto tone = [&](double tp) {
        double d = 0.0;
        for (std::size_t k = 0; k < K; ++k) d += A * std::sin(omegas[k] * tp + phases[k]);
        return d;
    };
    const auto accumulate = [&](double tp, double x, double y) {
        for (std::size_t k = 0; k < K; ++k) {
            const auto w = std::polar(1.0, -omegas[k] * tp);
            X[k] += x * w;
            Y[k] += y * w;
        }
    };

    if (point == InjectionPoint::ReferenceLag) {
        const Biquad lag = bilinear_prewarped(0.0, 0.0, 1.0, 0.0, 1.0 / opt.lag_omega, 1.0, 0.0, T);
        BiquadState st;
        for (std::int64_t n = 0; n < n_trans + n_win; ++n) {
            const double tp = static_cast<double>(n) * T;
            const double x = tone(tp);
            const double y = st.step(lag, x);
            if (n >= n_trans) accumulate(tp, x, y);
        }
    } else {
        require(s.controller.dcreg.enabled, "DC-loop measurement needs the DC regulator enabled", "dcreg.enabled");
        require(s.plant.dc_mode == DcBusMode::Capacitor, "DC-loop measurement needs a capacitive DC bus",
                "plant.dc_bus");
        Simulation sim(s);
        const auto n_settle = std::llround(opt.settle_time * f_s);
        const auto n_drift = std::min<std::int64_t>(std::llround(opt.drift_window * f_s), n_settle);
        double first = 0.0, second = 0.0;
        for (std::int64_t n = 0; n < n_settle; ++n) {
            sim.step();
            const std::int64_t tail = n - (n_settle - n_drift);
            if (tail >= 0) (tail < n_drift / 2 ? first : second) += sim.plant_state().v_dc;
        }
        const double half = static_cast<double>(std::max<std::int64_t>(n_drift / 2, 1));
        const double drift = std::abs(second - first) / half / s.controller.dcreg.V_dc_ref;
        if (!(drift <= opt.drift_tolerance)) {
            throw Error(ErrorKind::NonConvergence, "operating point not settled before injection",
                        "relative v_dc drift=" + format_double(drift));
        }
        for (std::int64_t n = 0; n < n_trans + n_win; ++n) {
            const double tp = static_cast<double>(n) * T;
            const double d = tone(tp);
            sim.controller().set_p0_injection(d);
            const ControllerOutput& out = sim.step();
            if (n >= n_trans) accumulate(tp, out.P0_reg + d, -out.P0_reg);
        }
    }

    std::vector<FrequencyPoint> result(K);
    for (std::size_t k = 0; k < K; ++k) result[k] = {omegas[k], Y[k] / X[k]};
    std::sort(result.begin(), result.end(), [](const auto& a, const auto& b) { return a.omega < b.omega; });
    return result;
}

SteadyState steady_state_extract(const Trace& tr, double window) {
    require(!tr.rows.empty(), "trace is empty", "trace");
    const double period = 2.0 * kPi / tr.omega0;
    require(window >= 2.0 * period, "window shorter than two fundamental periods", format_double(window));
    const double t_end = tr.rows.back().t;
    require(window <= t_end - tr.rows.front().t + tr.dt, "window longer than trace", format_double(window));
    const double t_start = t_end - window;

    SteadyState ss;
    double n = 0.0, st = 0.0, st2 = 0.0, sth = 0.0, sh = 0.0;
    double theta = 0.0, prev = 0.0;
    bool first = true;
    for (const auto& r : tr.rows) {
        if (r.t < t_start - 1e-12) continue;
        const double a = std::atan2(r.v.beta, r.v.alpha);
        if (first) {
            theta = a;
            first = false;
        } else {
            theta += std::remainder(a - prev, 2.0 * kPi);
        }
        prev = a;
        ss.P += r.P;
        ss.Q += r.Q;
        ss.V_p += r.V_p;
        ss.v_dc += r.v_dc;
        const double t = r.t - t_start;
        n += 1.0;
        st += t;
        st2 += t * t;
        sth += t * theta;
        sh += theta;
    }
    ss.P /= n;
    ss.Q /= n;
    ss.V_p /= n;
    ss.v_dc /= n;
    const double den = n * st2 - st * st;
    ss.omega = den > 0.0 ? (n * sth - st * sh) / den : tr.omega0;
    return ss;
}

}  // namespace uvoc
