#include "uvoc/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "uvoc/design.hpp"
#include "uvoc/scenario.hpp"
#include "uvoc/simulator.hpp"
#include "uvoc/smallsignal.hpp"

namespace uvoc::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Schema:
        case ErrorKind::Io:
        case ErrorKind::InvalidArgument:
        case ErrorKind::Infeasible: return kExitSchema;
        case ErrorKind::DegenerateVoltage:
        case ErrorKind::NonFinite:
        case ErrorKind::NonConvergence:
        case ErrorKind::PoleEvaluation: return kExitNumerical;
    }
    return kExitNumerical;
}

std::string error_json(ErrorKind kind, const std::string& message, const std::string& context) {
    Json j;
    j["code"] = to_string(kind);
    j["message"] = message;
    j["context"] = context;
    return j.dump();
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int k = 15; k >= 0; --k) {
        s[static_cast<std::size_t>(k)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw Error(ErrorKind::Io, "cannot create directory: " + ec.message(), target.parent_path().string());
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorKind::Io, "cannot open file for writing", tmp.string());
        os << contents;
        os.flush();
        if (!os) throw Error(ErrorKind::Io, "write failed", tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw Error(ErrorKind::Io, "rename failed: " + ec.message(), target.string());
}

unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("UVOC_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
    }
    return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, jobs)));
}

namespace {

// Collects emitted files for the manifest.
class Emitter {
public:
    Emitter(std::string command, std::string input, std::string out_dir, const std::vector<std::string>& overrides)
        : command_(std::move(command)), input_(std::move(input)), out_dir_(std::move(out_dir)), overrides_(overrides) {}

    void emit(const std::string& name, const std::string& contents) {
        write_file_atomic((fs::path(out_dir_) / name).string(), contents);
        std::lock_guard<std::mutex> lock(mutex_);
        files_[name] = hex64(fnv1a64(contents));
    }

    void finish() {
        Json m;
        m["command"] = command_;
        m["input"] = input_;
        m["out_dir"] = out_dir_;
        Json ov = Json::object();
        for (const auto& o : overrides_) {
            const auto eq = o.find('=');
            ov[o.substr(0, eq)] = eq == std::string::npos ? "" : o.substr(eq + 1);
        }
        m["overrides"] = ov;
        Json files = Json::array();
        for (const auto& [name, hash] : files_) files.push_back({{"path", name}, {"fnv1a64", hash}});
        m["files"] = files;
        write_file_atomic((fs::path(out_dir_) / "manifest.json").string(), m.dump(2) + "\n");
    }

private:
    std::string command_, input_, out_dir_;
    std::vector<std::string> overrides_;
    std::map<std::string, std::string> files_;
    std::mutex mutex_;
};

std::string trace_csv(const Trace& tr) {
    std::ostringstream os;
    write_trace_csv(tr, os);
    return os.str();
}

const char* kPlotScript = R"(#!/usr/bin/env python3
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "trace.csv"
with open(path) as f:
    rows = list(csv.DictReader(f))
t = [float(r["t"]) for r in rows]
col = lambda k: [float(r[k]) for r in rows]

fig, ax = plt.subplots(4, 1, sharex=True, figsize=(9, 9))
ax[0].plot(t, col("P"), label="P")
ax[0].plot(t, col("Q"), label="Q")
ax[0].set_ylabel("W / var")
ax[0].legend()
ax[1].plot(t, col("ig_alpha"), label="i_g alpha")
ax[1].plot(t, col("ig_beta"), label="i_g beta")
ax[1].set_ylabel("A")
ax[1].legend()
ax[2].plot(t, col("V_p"), label="|v|")
ax[2].plot(t, col("v_dc"), label="v_dc")
ax[2].set_ylabel("V")
ax[2].legend()
ax[3].plot(t, col("omega"))
ax[3].set_ylabel("rad/s")
ax[3].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
)";

std::string fault_summary(const Trace& tr) {
    std::ostringstream os;
    int prev = 0;
    bool ramping = false;
    for (const auto& r : tr.rows) {
        if (r.x_f != prev) {
            os << (r.x_f ? "fault_entry" : "fault_exit") << " t=" << format_double(r.t) << "\n";
            if (!r.x_f) ramping = true;
            prev = r.x_f;
        }
        if (ramping && !r.x_f && r.x_r <= 0.0) {
            os << "recovery_complete t=" << format_double(r.t) << "\n";
            ramping = false;
        }
    }
    return os.str();
}

std::string steady_summary(const Trace& tr, double window) {
    const double span = tr.rows.empty() ? 0.0 : tr.rows.back().t - tr.rows.front().t;
    const double w = std::min(window, span);
    if (!(w > 0.0)) return {};
    const SteadyState ss = steady_state_extract(tr, w);
    std::ostringstream os;
    os << "final_P=" << format_double(ss.P) << "\nfinal_Q=" << format_double(ss.Q)
       << "\nfinal_V_p=" << format_double(ss.V_p) << "\nfinal_omega=" << format_double(ss.omega)
       << "\nfinal_v_dc=" << format_double(ss.v_dc) << "\n";
    return os.str();
}

int cmd_simulate(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
                 std::ostream& out) {
    const Scenario s = load_scenario(path, overrides);
    const Trace tr = run_scenario(s);
    Emitter em("simulate", path, out_dir, overrides);
    em.emit("trace.csv", trace_csv(tr));
    em.emit("plot_trace.py", kPlotScript);
    const std::string summary = "scenario=" + s.name + "\n" + fault_summary(tr) + steady_summary(tr, 0.1);
    em.emit("summary.txt", summary);
    em.finish();
    out << summary;
    return kExitOk;
}

std::string design_text(const DesignConfig& d, const DesignReport& r) {
    std::ostringstream os;
    os << "eta=" << format_double(r.gains.eta) << "\n"
       << "mu=" << format_double(r.gains.mu) << "\n"
       << "phi=" << format_double(d.spec.phi) << "\n"
       << "V_max=" << format_double(r.V_max) << "\n"
       << "V_min=" << format_double(r.V_min) << "\n"
       << "V_min_symmetric=" << format_double(r.V_min_symmetric) << "\n"
       << "rated_power_residual=" << format_double(r.rated_power_residual) << "\n"
       << "rated_voltage_residual=" << format_double(r.rated_voltage_residual) << "\n";
    return os.str();
}

std::string design_csv(const DesignConfig& d, const DesignReport& r) {
    std::ostringstream os;
    os << "quantity,value\n"
       << "eta," << format_double(r.gains.eta) << "\n"
       << "mu," << format_double(r.gains.mu) << "\n"
       << "phi," << format_double(d.spec.phi) << "\n"
       << "V_max," << format_double(r.V_max) << "\n"
       << "V_min," << format_double(r.V_min) << "\n"
       << "V_min_symmetric," << format_double(r.V_min_symmetric) << "\n"
       << "rated_power_residual," << format_double(r.rated_power_residual) << "\n"
       << "rated_voltage_residual," << format_double(r.rated_voltage_residual) << "\n";
    return os.str();
}

int cmd_design(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
               std::ostream& out) {
    const DesignConfig d = load_design(path, overrides);
    const DesignReport r = design_report(d.spec);
    Emitter em("design", path, out_dir, overrides);
    em.emit("design.txt", design_text(d, r));
    em.emit("design.csv", design_csv(d, r));
    em.finish();
    out << design_text(d, r);
    return kExitOk;
}

int cmd_powermap(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
                 std::ostream& out) {
    const DesignConfig d = load_design(path, overrides);
    const DesignReport r = design_report(d.spec);
    const SvoParams svo = svo_params_from_design(d.spec, r.gains);
    const auto nodes = power_limit_map(svo, d.plant, d.evi, d.map);

    std::ostringstream csv;
    csv << "V_g,omega_g,P_poc,Q_poc,converged\n";
    std::size_t failed = 0;
    double P_max = 0.0, Q_max = 0.0;
    for (const auto& n : nodes) {
        csv << format_double(n.V_g) << ',' << format_double(n.omega_g) << ',' << format_double(n.P_poc) << ','
            << format_double(n.Q_poc) << ',' << (n.converged ? 1 : 0) << '\n';
        if (!n.converged) {
            ++failed;
            continue;
        }
        P_max = std::max(P_max, std::abs(n.P_poc));
        Q_max = std::max(Q_max, std::abs(n.Q_poc));
    }
    Emitter em("powermap", path, out_dir, overrides);
    em.emit("powermap.csv", csv.str());
    em.finish();
    out << "nodes=" << nodes.size() << "\nfailed=" << failed << "\nmax_abs_P=" << format_double(P_max)
        << "\nmax_abs_Q=" << format_double(Q_max) << "\n";
    if (static_cast<double>(failed) > 0.05 * static_cast<double>(nodes.size())) {
        throw Error(ErrorKind::NonConvergence, "more than 5% of power-map nodes failed to converge",
                    std::to_string(failed) + "/" + std::to_string(nodes.size()));
    }
    return kExitOk;
}

LinearModel model_for(const AnalysisConfig& a) {
    const SmallSignalParams p = small_signal_params(a.scenario);
    const OperatingPoint op = equilibrium_solve(p, a.grid, a.P0, a.Q0, a.mode);
    return linearize(op, p);
}

std::string matrix_csv(const Eigen::MatrixXd& M) {
    std::ostringstream os;
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) os << (c ? "," : "") << format_double(M(r, c));
        os << '\n';
    }
    return os.str();
}

int cmd_linearize(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
                  std::ostream& out) {
    const AnalysisConfig a = load_analysis(path, overrides);
    const LinearModel m = model_for(a);
    std::ostringstream op;
    op << "I_d=" << format_double(m.op.I_d) << "\nI_q=" << format_double(m.op.I_q) << "\nV=" << format_double(m.op.V)
       << "\ntheta_s=" << format_double(m.op.theta_s) << "\nv_dc=" << format_double(m.op.v_dc)
       << "\nP_dc=" << format_double(m.op.P_dc) << "\nresidual=" << format_double(m.op.residual)
       << "\niterations=" << m.op.iterations << "\n";
    Emitter em("linearize", path, out_dir, overrides);
    em.emit("A.csv", matrix_csv(m.A));
    em.emit("B.csv", matrix_csv(m.B));
    em.emit("operating_point.txt", op.str());
    em.finish();
    out << op.str();
    return kExitOk;
}

// "4.9%" is per-unit of Z_base, a bare number is ohms.
double parse_resistance(const std::string& text, const VscRatings& r) {
    std::string t = text;
    const bool percent = !t.empty() && t.back() == '%';
    if (percent) t.pop_back();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != t.size()) throw Error(ErrorKind::Schema, "cannot parse resistance", text);
    return percent ? v / 100.0 * r.z_base() : v;
}

int cmd_eigs(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
             const std::vector<std::string>& sweep, std::ostream& out) {
    const AnalysisConfig base = load_analysis(path, overrides);
    std::ostringstream csv;
    if (sweep.empty()) {
        csv << "re,im\n";
        for (const auto& l : eigenvalues(model_for(base).A11())) {
            csv << format_double(l.real()) << ',' << format_double(l.imag()) << '\n';
        }
    } else {
        csv << "R_vir,re,im\n";
        for (const auto& item : sweep) {
            AnalysisConfig a = base;
            a.scenario.controller.evi.R_vir = parse_resistance(item, a.scenario.ratings);
            for (const auto& l : eigenvalues(model_for(a).A11())) {
                csv << format_double(a.scenario.controller.evi.R_vir) << ',' << format_double(l.real()) << ','
                    << format_double(l.imag()) << '\n';
            }
        }
    }
    Emitter em("eigs", path, out_dir, overrides);
    em.emit("eigs.csv", csv.str());
    em.finish();
    out << csv.str();
    return kExitOk;
}

std::function<std::complex<double>(double)> loop_for(const AnalysisConfig& a) {
    const TransferFunction G = open_loop_dc(model_for(a));
    const DcRegParams dc = a.scenario.controller.dcreg;
    return [G, dc](double w) { return dc_compensator_response(dc, w) * G.at_omega(w); };
}

int cmd_bode(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
             int points, std::ostream& out) {
    const AnalysisConfig a = load_analysis(path, overrides);
    const auto L = loop_for(a);
    std::ostringstream csv;
    csv << "omega,mag_db,phase_deg\n";
    for (const auto& b : bode(L, log_space(a.band_lo, a.band_hi, points))) {
        csv << format_double(b.omega) << ',' << format_double(b.mag_db) << ',' << format_double(b.phase_deg) << '\n';
    }
    Emitter em("bode", path, out_dir, overrides);
    em.emit("bode.csv", csv.str());
    em.finish();
    out << "points=" << points << "\n";
    return kExitOk;
}

std::string join_list(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? ";" : "") + format_double(xs[k]);
    return s;
}

int cmd_margins(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
                std::ostream& out) {
    const AnalysisConfig a = load_analysis(path, overrides);
    const MarginReport m = margins(loop_for(a), a.band_lo, a.band_hi);
    std::ostringstream os;
    os << "gain_crossover_rad_s=" << format_double(m.gain_crossover) << "\n"
       << "phase_margin_deg=" << format_double(m.phase_margin_deg) << "\n"
       << "phase_crossover_rad_s=" << format_double(m.phase_crossover) << "\n"
       << "gain_margin_db=" << format_double(m.gain_margin_db) << "\n"
       << "gain_crossovers=" << join_list(m.gain_crossovers) << "\n"
       << "phase_crossovers=" << join_list(m.phase_crossovers) << "\n";
    Emitter em("margins", path, out_dir, overrides);
    em.emit("margins.txt", os.str());
    em.finish();
    out << os.str();
    return kExitOk;
}

int cmd_sweep(const std::string& path, const std::string& out_dir, const std::vector<std::string>& overrides,
              const std::string& param, const std::vector<std::string>& values, double window, std::ostream& out) {
    if (param.empty() || values.empty()) {
        throw Error(ErrorKind::Schema, "sweep needs --param and at least one --values entry", "sweep");
    }
    // Validate every variant up front so schema errors surface before any work starts.
    std::vector<Scenario> jobs;
    for (const auto& v : values) {
        auto ov = overrides;
        ov.push_back(param + "=" + v);
        jobs.push_back(load_scenario(path, ov));
    }

    Emitter em("sweep", path, out_dir, overrides);
    std::vector<std::string> rows(jobs.size());
    std::vector<std::exception_ptr> failures(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            try {
                const Trace tr = run_scenario(jobs[k]);
                const std::string dir = "run_" + std::to_string(k);
                em.emit(dir + "/trace.csv", trace_csv(tr));
                const double span = tr.rows.back().t - tr.rows.front().t;
                const SteadyState ss = steady_state_extract(tr, std::min(window, span));
                rows[k] = values[k] + ',' + format_double(ss.P) + ',' + format_double(ss.Q) + ',' +
                          format_double(ss.V_p) + ',' + format_double(ss.omega) + ',' + format_double(ss.v_dc) + '\n';
            } catch (...) {
                failures[k] = std::current_exception();
            }
        }
    };
    const unsigned n = worker_count(jobs.size());
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    std::string csv = "value,P,Q,V_p,omega,v_dc\n";
    for (const auto& r : rows) csv += r;
    em.emit("sweep.csv", csv);
    em.finish();
    out << csv;
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Space-vector oscillator converter lab"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string input, out_dir = "out", param;
    std::vector<std::string> overrides, rvir_sweep, values;
    int points = 400;
    double window = 0.5;

    auto add_common = [&](CLI::App* sub, const std::string& what) {
        sub->add_option("input", input, what)->required();
        sub->add_option("--out,-o", out_dir, "Output directory");
        sub->add_option("--override", overrides, "Dotted-path assignment key=value (repeatable)")
            ->take_all();
        return sub;
    };
    auto* simulate = add_common(app.add_subcommand("simulate", "Run a time-domain scenario"), "Scenario JSON");
    auto* design = add_common(app.add_subcommand("design", "Droop gain design report"), "Design JSON");
    auto* powermap = add_common(app.add_subcommand("powermap", "PoC power-limit map"), "Design JSON");
    auto* linearize_cmd = add_common(app.add_subcommand("linearize", "Equilibrium and A, B matrices"), "Analysis JSON");
    auto* eigs = add_common(app.add_subcommand("eigs", "Eigenvalues of the AC subsystem"), "Analysis JSON");
    eigs->add_option("--rvir-sweep", rvir_sweep, "R_vir values (ohm, or percent of Z_base)")->delimiter(',');
    auto* bode_cmd = add_common(app.add_subcommand("bode", "DC-bus loop gain Bode data"), "Analysis JSON");
    bode_cmd->add_option("--points", points, "Number of log-spaced frequencies")->check(CLI::Range(2, 1000000));
    auto* margins_cmd = add_common(app.add_subcommand("margins", "DC-bus loop stability margins"), "Analysis JSON");
    auto* sweep = add_common(app.add_subcommand("sweep", "Parallel parameter sweep of a scenario"), "Scenario JSON");
    sweep->add_option("--param", param, "Dotted path to vary")->required();
    sweep->add_option("--values", values, "Values assigned to --param")->required()->delimiter(',');
    sweep->add_option("--window", window, "Steady-state averaging window [s]")->check(CLI::PositiveNumber);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << error_json(ErrorKind::Schema, e.what(), "arguments") << "\n";
        return kExitSchema;
    }

    try {
        if (*simulate) return cmd_simulate(input, out_dir, overrides, out);
        if (*design) return cmd_design(input, out_dir, overrides, out);
        if (*powermap) return cmd_powermap(input, out_dir, overrides, out);
        if (*linearize_cmd) return cmd_linearize(input, out_dir, overrides, out);
        if (*eigs) return cmd_eigs(input, out_dir, overrides, rvir_sweep, out);
        if (*bode_cmd) return cmd_bode(input, out_dir, overrides, points, out);
        if (*margins_cmd) return cmd_margins(input, out_dir, overrides, out);
        if (*sweep) return cmd_sweep(input, out_dir, overrides, param, values, window, out);
    } catch (const Error& e) {
        err << error_json(e.kind(), e.what(), e.context()) << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << error_json(ErrorKind::NonFinite, e.what(), "unexpected") << "\n";
        return kExitNumerical;
    }
    return kExitSchema;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace uvoc::cli
