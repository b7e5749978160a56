// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "uvoc/controller.hpp"
#include "uvoc/design.hpp"
#include "uvoc/scenario.hpp"
#include "uvoc/simulator.hpp"
#include "uvoc/smallsignal.hpp"

using namespace uvoc;

namespace {

std::string scenario_path(const std::string& name) { return std::string(UVOC_SCENARIO_DIR) + "/" + name + ".json"; }

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, x);
    return buf;
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
    DesignSpec spec;
    spec.dV_max = 0.05 * spec.ratings.V0;
    spec.domega_max = kPi;
    spec.phi = kPi / 2.0;
    const EtaMu g = design_eta_mu(spec);
    const double e_eta = std::abs(g.eta / 16.6253 - 1.0);
    const double e_mu = std::abs(g.mu / 5.2029e-4 - 1.0);
    return {e_eta <= 1e-3 && e_mu <= 1e-3, "eta=" + fmt("%.6f", g.eta) + " (err " + fmt("%.2e", e_eta) +
                                               ") mu=" + fmt("%.6e", g.mu) + " (err " + fmt("%.2e", e_mu) + ")"};
}

// ---------------------------------------------------------------------------

Verdict criterion2() {
    struct Row {
        double percent;
        std::vector<std::complex<double>> poles;
    };
    const std::vector<Row> rows = {
        {0.5, {{9.16, 378.12}, {9.16, -378.12}, {-47.57, 0.0}, {-17.90, 0.0}}},
        {1.15, {{-1.94, 377.6}, {-1.94, -377.6}, {-47.72, 0.0}, {-17.91, 0.0}}},
        {4.9, {{-66.61, 374.56}, {-66.61, -374.56}, {-47.61, 0.0}, {-17.68, 0.0}}},
    };
    const auto t0 = std::chrono::steady_clock::now();
    const AnalysisConfig base = load_analysis(scenario_path("table3"));
    bool pass = true;
    double worst = 0.0;
    std::ostringstream detail;
    for (const Row& row : rows) {
        AnalysisConfig a = base;
        a.scenario.controller.evi.R_vir = row.percent / 100.0 * a.scenario.ratings.z_base();
        const SmallSignalParams p = small_signal_params(a.scenario);
        const LinearModel m = linearize(equilibrium_solve(p, a.grid, a.P0, a.Q0, a.mode), p);
        std::vector<std::complex<double>> lam = eigenvalues(m.A11());
        // Pair each tabulated pole with the nearest unused computed one.
        double row_worst = 0.0;
        for (const auto& ref : row.poles) {
            auto best = lam.begin();
            for (auto it = lam.begin(); it != lam.end(); ++it) {
                if (std::abs(*it - ref) < std::abs(*best - ref)) best = it;
            }
            row_worst = std::max(row_worst, std::abs(*best - ref) / std::abs(ref));
            lam.erase(best);
        }
        const auto all = eigenvalues(m.A11());
        const double dominant = all.front().real();
        const double dominant_ref = row.poles.front().real();
        const bool sign_ok = std::signbit(dominant) == std::signbit(dominant_ref);
        pass = pass && sign_ok && row_worst <= 0.05;
        worst = std::max(worst, row_worst);
        detail << row.percent << "%: max rel err " << fmt("%.3f", row_worst) << " dominant re "
               << fmt("%.2f", dominant) << (sign_ok ? "" : " (sign mismatch)") << "; ";
    }
    const double elapsed = seconds_since(t0);
    pass = pass && elapsed < 1.0;
    detail << "time " << fmt("%.3f", elapsed) << " s";
    return {pass, detail.str()};
}

// ---------------------------------------------------------------------------

Verdict criterion3() {
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const VscRatings r;
    int checked = 0, failed_entries = 0, solve_failures = 0;
    double worst = 0.0;
    std::string first_failure;

    for (double phi : {0.0, kPi / 2.0}) {
        DesignSpec spec;
        spec.dV_max = 0.05 * r.V0;
        spec.phi = phi;
        const EtaMu gains = design_eta_mu(spec);
        for (AnalysisMode mode : {AnalysisMode::Normal, AnalysisMode::Fault}) {
            int found = 0;
            for (int attempt = 0; found < 20 && attempt < 200; ++attempt) {
                SmallSignalParams p;
                p.svo = svo_params_from_design(spec, gains);
                p.R_e = 0.05 + 0.45 * U(rng);
                p.L_e = 1.5e-3 + 3.5e-3 * U(rng);
                p.C_dc = 1e-3 + 2e-3 * U(rng);
                p.V_dc_ref = 400.0;
                p.R0 = 5.25;
                p.tau_f = 0.028;
                p.boost_impedance_base = r.z_base();
                p.I_m = r.i_base_peak();
                GridCondition g;
                double P0, Q0;
                if (mode == AnalysisMode::Normal) {
                    g.V_g = r.V0 * (0.95 + 0.1 * U(rng));
                    g.omega_star = r.omega0 + kPi * (2.0 * U(rng) - 1.0) * 0.5;
                    P0 = r.P_rated * 0.6 * (2.0 * U(rng) - 1.0);
                    Q0 = r.Q_rated * 0.6 * (2.0 * U(rng) - 1.0);
                } else {
                    g.V_g = r.V0 * (0.3 + 0.5 * U(rng));
                    g.omega_star = r.omega0;
                    P0 = r.S_rated * (0.2 + 0.6 * U(rng));
                    Q0 = std::sqrt(r.S_rated * r.S_rated - P0 * P0);
                }
                OperatingPoint op;
                try {
                    op = equilibrium_solve(p, g, P0, Q0, mode);
                } catch (const Error&) {
                    ++solve_failures;
                    continue;
                }
                ++found;
                const LinearModel m = linearize(op, p);
                StateVector x;
                x << op.I_d, op.I_q, op.V, op.theta_s, op.v_dc;
                InputVector u(P0, Q0);
                // Richardson-extrapolated central differences.
                const auto central = [&](auto&& f, double h) -> StateVector {
                    const StateVector d1 = (f(h) - f(-h)) / (2.0 * h);
                    const StateVector d2 = (f(h / 2) - f(-h / 2)) / h;
                    return (4.0 * d2 - d1) / 3.0;
                };
                const auto compare = [&](double analytic, double numeric, const char* mat, int i, int j) {
                    const double err = std::abs(analytic - numeric);
                    const double tol = std::max(1e-6 * std::abs(numeric), 1e-9);
                    worst = std::max(worst, err / tol);
                    ++checked;
                    if (!(err <= tol)) {
                        if (failed_entries++ == 0) {
                            first_failure = std::string(" (first: ") + mat + "(" + std::to_string(i) + "," +
                                            std::to_string(j) + ") analytic " + fmt("%.10g", analytic) +
                                            " numeric " + fmt("%.10g", numeric) + ")";
                        }
                    }
                };
                for (int j = 0; j < 5; ++j) {
                    const double h = 1e-4 * std::max(1.0, std::abs(x(j)));
                    const StateVector col = central(
                        [&](double d) {
                            StateVector xp = x;
                            xp(j) += d;
                            return nonlinear_rhs(xp, u, op.P_dc, g, p, mode);
                        },
                        h);
                    for (int i = 0; i < 5; ++i) compare(m.A(i, j), col(i), "A", i, j);
                }
                for (int j = 0; j < 2; ++j) {
                    const double h = 1e-4 * std::max(1.0, std::abs(u(j)));
                    const StateVector col = central(
                        [&](double d) {
                            InputVector up = u;
                            up(j) += d;
                            return nonlinear_rhs(x, up, op.P_dc, g, p, mode);
                        },
                        h);
                    for (int i = 0; i < 5; ++i) compare(m.B(i, j), col(i), "B", i, j);
                }
            }
            if (found < 20) ++failed_entries;
        }
    }
    return {failed_entries == 0, std::to_string(checked) + " entries over 80 operating points, worst err/tol " +
                                     fmt("%.3g", worst) + ", " + std::to_string(failed_entries) +
                                     " failures, " + std::to_string(solve_failures) + " rejected samples" + first_failure};
}

// ---------------------------------------------------------------------------

Verdict criterion4() {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario base = load_scenario(scenario_path("fig12_droop_sweep"));
    const double w0 = base.ratings.omega0;
    const double Vgp = base.plant.grid.V_gp;
    std::vector<std::pair<double, double>> cases;  // (omega_g, V_gp)
    for (double k : {-1.0, -0.5, 0.0, 0.5, 1.0}) cases.emplace_back(w0 + k * kPi, Vgp);
    for (double k : {-1.0, -0.5, 0.5, 1.0}) cases.emplace_back(w0, Vgp * (1.0 + 0.05 * k));

    const SvoParams& svo = base.controller.svo;
    const double V0 = svo.Vp0 / kSqrt2;
    double worst_P = 0.0, worst_Q = 0.0;
    for (const auto& [wg, vg] : cases) {
        Scenario s = base;
        s.plant.grid.omega_g = wg;
        s.plant.grid.V_gp = vg;
        const SteadyState ss = steady_state_extract(run_scenario(s), 0.2);
        const double V = ss.V_p / kSqrt2;
        // Frequency droop solved for P at the measured (omega, Q, V).
        const double P_curve =
            svo.P0 - ((ss.omega - svo.omega0) * svo.N * V * V / svo.eta + (svo.Q0 - ss.Q) * std::cos(svo.phi)) /
                         std::sin(svo.phi);
        // Voltage law solved for Q at the measured (V, P).
        const double radicand = std::pow(2.0 * V * V / (V0 * V0) - 1.0, 2);
        const double gq = (radicand - 1.0) * svo.mu * svo.N * std::pow(V0, 4) / (2.0 * svo.eta);
        const double Q_curve = svo.Q0 - (gq - (svo.P0 - ss.P) * std::cos(svo.phi)) / std::sin(svo.phi);
        worst_P = std::max(worst_P, std::abs(ss.P - P_curve) / base.ratings.P_rated);
        worst_Q = std::max(worst_Q, std::abs(ss.Q - Q_curve) / base.ratings.Q_rated);
    }
    const double elapsed = seconds_since(t0);
    return {worst_P <= 0.005 && worst_Q <= 0.005 && elapsed < 120.0,
            std::to_string(cases.size()) + " runs, worst P err " + fmt("%.4f", 100 * worst_P) +
                "% of P_rated, worst Q err " + fmt("%.4f", 100 * worst_Q) + "% of Q_rated, time " +
                fmt("%.1f", elapsed) + " s"};
}

// ---------------------------------------------------------------------------

struct FaultResult {
    bool clamp = false, sync = false, recovery = false;
    std::string detail;
};

FaultResult fault_case(const std::string& name) {
    const Scenario s = load_scenario(scenario_path(name));
    const Trace tr = run_scenario(s);
    const double T = s.controller.period();
    const double I_m = s.controller.fault.I_m;
    const double P0 = s.controller.svo.P0;
    const double w_g = s.plant.grid.omega_g;
    double t_fault = -1.0, t_clear = -1.0, t_restore = 0.0;
    for (const auto& e : s.events) {
        if (e.kind == EventKind::GridVoltage && e.t > 0.0) t_restore = e.t;
    }
    for (const auto& r : tr.rows) {
        if (r.x_f == 1 && t_fault < 0.0) t_fault = r.t;
        if (t_fault >= 0.0 && r.x_f == 0 && t_clear < 0.0) t_clear = r.t;
    }
    FaultResult out;
    if (t_fault < 0.0 || t_clear < 0.0) {
        out.detail = "fault not detected or never cleared";
        return out;
    }
    double max_ig = 0.0, last_outside = t_restore;
    double drift_pre = 0.0, drift_end = 0.0, unwrapped = 0.0, prev = 0.0;
    bool first = true;
    for (const auto& r : tr.rows) {
        if (r.t >= t_fault + T - 1e-12 && r.t < t_clear) max_ig = std::max(max_ig, r.i_g.magnitude());
        if (r.t >= t_restore && std::abs(r.P - P0) > 0.02 * P0) last_outside = r.t;
        // Oscillator angle relative to the grid source, unwrapped.
        const double rel = std::atan2(r.v.beta, r.v.alpha) - w_g * r.t;
        if (first) {
            unwrapped = rel;
            first = false;
        } else {
            unwrapped += std::remainder(rel - prev, 2.0 * kPi);
        }
        prev = rel;
        if (r.t < t_fault) drift_pre = unwrapped;
        drift_end = unwrapped;
    }
    out.clamp = max_ig <= 1.05 * I_m;
    // A pole slip leaves the oscillator a multiple of 2 pi away from where it started.
    out.sync = std::abs(drift_end - drift_pre) < kPi;
    out.recovery = last_outside - t_restore <= 0.2;
    out.detail = name + ": max|i_g|=" + fmt("%.3f", max_ig / I_m) + " pu, angle shift " +
                 fmt("%.3f", drift_end - drift_pre) + " rad, P settled " + fmt("%.0f", 1e3 * (last_outside - t_restore)) +
                 " ms after restoration";
    return out;
}

Verdict criterion5() {
    const auto t0 = std::chrono::steady_clock::now();
    const FaultResult a = fault_case("fig10_fault_scr5");
    const FaultResult b = fault_case("fig11_fault_scr19");
    const double elapsed = seconds_since(t0);
    const auto flags = [](const FaultResult& r) {
        return std::string(" [clamp ") + (r.clamp ? "ok" : "FAIL") + ", sync " + (r.sync ? "ok" : "FAIL") +
               ", recovery " + (r.recovery ? "ok" : "FAIL") + "]";
    };
    const bool pass = a.clamp && a.sync && a.recovery && b.clamp && b.sync && b.recovery && elapsed < 60.0;
    return {pass, a.detail + flags(a) + "; " + b.detail + flags(b) + "; time " + fmt("%.1f", elapsed) + " s"};
}

// ---------------------------------------------------------------------------

Verdict criterion6() {
    const auto t0 = std::chrono::steady_clock::now();
    const AnalysisConfig a = load_analysis(scenario_path("fig9_dcbus_loopgain"));
    const SmallSignalParams p = small_signal_params(a.scenario);
    const TransferFunction G = open_loop_dc(linearize(equilibrium_solve(p, a.grid, a.P0, a.Q0, a.mode), p));
    const std::vector<double> freqs = {1, 1.5, 2, 3, 4, 5, 7, 10, 15, 20, 30, 40, 50, 70, 100};
    const auto measured = measure_frequency_response(a.scenario, InjectionPoint::DcVoltageLoop, freqs);
    double worst_db = 0.0, worst_deg = 0.0;
    for (const auto& fp : measured) {
        const std::complex<double> L = dc_compensator_response(a.scenario.controller.dcreg, fp.omega) * G.at_omega(fp.omega);
        worst_db = std::max(worst_db, std::abs(20.0 * std::log10(std::abs(fp.gain) / std::abs(L))));
        worst_deg = std::max(worst_deg, std::abs(std::arg(fp.gain / L)) * 180.0 / kPi);
    }
    const double elapsed = seconds_since(t0);
    return {worst_db <= 2.0 && worst_deg <= 10.0 && elapsed < 120.0,
            std::to_string(measured.size()) + " tones 1-100 Hz, worst |dmag| " + fmt("%.3f", worst_db) +
                " dB, worst |dphase| " + fmt("%.2f", worst_deg) + " deg, time " + fmt("%.1f", elapsed) + " s"};
}

// ---------------------------------------------------------------------------

Verdict criterion7() {
    const auto t0 = std::chrono::steady_clock::now();
    const DesignConfig d = load_design(scenario_path("design_table2"));
    const EtaMu gains = design_eta_mu(d.spec);
    const SvoParams svo = svo_params_from_design(d.spec, gains);
    const auto nodes = power_limit_map(svo, d.plant, d.evi, d.map);
    int converged = 0, violations = 0;
    double worst_P = 0.0, worst_Q = 0.0;
    for (const auto& n : nodes) {
        if (!n.converged) continue;
        ++converged;
        worst_P = std::max(worst_P, std::abs(n.P_poc) / d.spec.ratings.P_rated);
        worst_Q = std::max(worst_Q, std::abs(n.Q_poc) / d.spec.ratings.Q_rated);
        if (std::abs(n.P_poc) > 1.01 * d.spec.ratings.P_rated || std::abs(n.Q_poc) > 1.01 * d.spec.ratings.Q_rated) {
            ++violations;
        }
    }
    const double elapsed = seconds_since(t0);
    return {violations == 0 && converged > 0 && elapsed < 30.0,
            std::to_string(converged) + "/" + std::to_string(nodes.size()) + " nodes converged, max |P|/P_rated " +
                fmt("%.4f", worst_P) + ", max |Q|/Q_rated " + fmt("%.4f", worst_Q) + ", time " +
                fmt("%.2f", elapsed) + " s"};
}

// ---------------------------------------------------------------------------

Verdict criterion8() {
    const AnalysisConfig a = load_analysis(scenario_path("margins_single_phase"));
    const SmallSignalParams p = small_signal_params(a.scenario);
    const TransferFunction G = open_loop_dc(linearize(equilibrium_solve(p, a.grid, a.P0, a.Q0, a.mode), p));
    const DcRegParams dc = a.scenario.controller.dcreg;
    const MarginReport m =
        margins([&](double w) { return dc_compensator_response(dc, w) * G.at_omega(w); }, a.band_lo, a.band_hi);
    const double e_wc = std::abs(m.gain_crossover / (7.0 * kPi) - 1.0);
    const double e_gm = std::abs(m.gain_margin_db / 25.6 - 1.0);
    const double e_pm = std::abs(m.phase_margin_deg / 71.5 - 1.0);
    return {e_wc <= 0.15 && e_gm <= 0.15 && e_pm <= 0.15,
            "crossover " + fmt("%.2f", m.gain_crossover) + " rad/s (" + fmt("%.1f", 100 * e_wc) + "%), GM " +
                fmt("%.2f", m.gain_margin_db) + " dB (" + fmt("%.1f", 100 * e_gm) + "%), PM " +
                fmt("%.2f", m.phase_margin_deg) + " deg (" + fmt("%.1f", 100 * e_pm) + "%)"};
}

// ---------------------------------------------------------------------------

Verdict criterion9() {
    std::ostringstream detail;
    bool pass = true;

    {  // Amplitude conservation of the bare oscillator.
        SvoParams p;
        p.eta = 0.0;
        p.mu = 0.0;
        const FaultConfig fc;
        const FaultState fs;
        const double T = 1e-4;
        OscillatorState osc{{p.Vp0, 0.0}};
        double drift = 0.0;
        for (int k = 0; k < 10000; ++k) {
            osc = svo_step(osc, {}, p, fs, fc, T, 1e-6);
            drift = std::max(drift, std::abs(osc.v.magnitude() / p.Vp0 - 1.0));
        }
        const bool ok = drift < 1e-6;
        pass = pass && ok;
        detail << "amplitude drift " << fmt("%.2e", drift) << (ok ? "" : " FAIL") << "; ";
    }
    {  // Circular limiter geometry.
        std::mt19937_64 rng(7);
        std::normal_distribution<double> nd(0.0, 60.0);
        std::uniform_real_distribution<double> im(1.0, 80.0);
        int bad = 0;
        for (int k = 0; k < 100000; ++k) {
            const SpaceVector i0{nd(rng), nd(rng)};
            const double I_m = im(rng);
            const SpaceVector out = circular_limit(i0, I_m);
            const double m0 = i0.magnitude(), m1 = out.magnitude();
            const double cross = i0.alpha * out.beta - i0.beta * out.alpha;
            const double dot = i0.alpha * out.alpha + i0.beta * out.beta;
            const bool inside_ok = m0 > I_m || (out.alpha == i0.alpha && out.beta == i0.beta);
            const bool outside_ok =
                m0 <= I_m || (std::abs(m1 - I_m) <= 1e-12 * I_m && std::abs(cross) <= 1e-9 * m0 * m1 && dot > 0.0);
            if (!inside_ok || !outside_ok) ++bad;
        }
        pass = pass && bad == 0;
        detail << "limiter " << bad << "/100000 violations; ";
    }
    {  // Quarter-period delay gives the 90 degree shifted axis.
        const double w0 = 2.0 * kPi * 60.0, T = 1e-4;
        FractionalDelay d = make_quarter_delay(w0, T);
        std::complex<double> Xa, Xb;
        // Exactly 60 fundamental cycles so the projection has no leakage.
        const int n_window = static_cast<int>(std::lround(60.0 * 2.0 * kPi / w0 / T));
        const int start = 1000;
        for (int n = 0; n < start + n_window; ++n) {
            const double t = n * T;
            const QuarterDelaySample q = single_phase_beta(d, std::cos(w0 * t));
            if (n >= start) {
                if (!q.valid) {
                    pass = false;
                    break;
                }
                Xa += std::cos(w0 * t) * std::polar(1.0, -w0 * t);
                Xb += q.beta * std::polar(1.0, -w0 * t);
            }
        }
        const std::complex<double> ratio = Xb / Xa;
        const double phase = std::arg(ratio) * 180.0 / kPi;
        const bool ok = std::abs(phase + 90.0) < 0.05 && std::abs(std::abs(ratio) - 1.0) < 1e-3;
        pass = pass && ok;
        detail << "quarter delay phase " << fmt("%.4f", phase) << " deg gain " << fmt("%.6f", std::abs(ratio))
               << (ok ? "" : " FAIL") << "; ";
    }
    {  // Pre-synchronization settles before the switch closes.
        const Scenario s = load_scenario(scenario_path("presync_sts_close"));
        double t_close = 0.0;
        for (const auto& e : s.events) {
            if (e.kind == EventKind::StsClose) t_close = e.t;
        }
        const Trace tr = run_scenario(s);
        double last = 0.0;
        for (const auto& r : tr.rows) {
            if (r.t < t_close) last = r.i_ps_mag;
        }
        const double ratio = last / s.ratings.i_base_peak();
        const bool ok = ratio < 0.01;
        pass = pass && ok;
        detail << "|i_ps| before close " << fmt("%.3f", 100 * ratio) << "% of rated" << (ok ? "" : " FAIL") << "; ";
    }
    {  // Bit-identical reruns.
        const Scenario s = load_scenario(scenario_path("fig10_fault_scr5"));
        std::ostringstream a, b;
        write_trace_csv(run_scenario(s), a);
        write_trace_csv(run_scenario(s), b);
        const bool ok = a.str() == b.str();
        pass = pass && ok;
        detail << "rerun " << (ok ? "bit-identical" : "differs");
    }
    return {pass, detail.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9},
    };
    int failures = 0;
    for (const auto& [id, fn] : criteria) {
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        if (!v.pass) ++failures;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << v.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
