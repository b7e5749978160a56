#include "uvoc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace uvoc {

namespace {

enum class Base { None, Impedance, Inductance, Capacitance, VoltagePeak, VoltageRms, CurrentPeak, Power, Frequency };

struct Bases {
    double z = 1.0, l = 1.0, c = 1.0, vp = 1.0, v = 1.0, ip = 1.0, s = 1.0, w = 1.0;

    explicit Bases(const VscRatings& r) {
        z = r.z_base();
        l = r.l_base();
        c = r.c_base();
        vp = r.Vp0();
        v = r.V0;
        ip = r.i_base_peak();
        s = r.S_rated;
        w = r.omega0;
    }

    double of(Base b) const {
        switch (b) {
            case Base::Impedance: return z;
            case Base::Inductance: return l;
            case Base::Capacitance: return c;
            case Base::VoltagePeak: return vp;
            case Base::VoltageRms: return v;
            case Base::CurrentPeak: return ip;
            case Base::Power: return s;
            case Base::Frequency: return w;
            case Base::None: break;
        }
        return 1.0;
    }
};

[[noreturn]] void schema_error(const std::string& message, const std::string& path) {
    throw Error(ErrorKind::Schema, message, path);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Object reader that remembers which keys were consumed so that leftovers can
// be reported as unknown.
class Reader {
public:
    Reader(const Json& j, std::string path, const Bases* bases) : j_(j), path_(std::move(path)), bases_(bases) {
        if (!j_.is_object()) schema_error("expected an object", path_.empty() ? "<root>" : path_);
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    void set_bases(const Bases* b) { bases_ = b; }

    double number(const std::string& key, double fallback, Base base = Base::None) {
        if (!take(key)) return fallback;
        return resolve(j_.at(key), join(path_, key), base);
    }

    double required_number(const std::string& key, Base base = Base::None) {
        if (!take(key)) schema_error("missing required field", join(path_, key));
        return resolve(j_.at(key), join(path_, key), base);
    }

    double nullable_number(const std::string& key, double fallback, double null_value, Base base = Base::None) {
        if (!take(key)) return fallback;
        if (j_.at(key).is_null()) return null_value;
        return resolve(j_.at(key), join(path_, key), base);
    }

    int integer(const std::string& key, int fallback) {
        if (!take(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_number_integer()) schema_error("expected an integer", join(path_, key));
        return v.get<int>();
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        if (!take(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            schema_error("expected a non-negative integer", join(path_, key));
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!take(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_boolean()) schema_error("expected a boolean", join(path_, key));
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback, std::initializer_list<const char*> allowed) {
        if (!take(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_string()) schema_error("expected a string", join(path_, key));
        const std::string s = v.get<std::string>();
        if (allowed.size() > 0) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || s == a;
            if (!ok) schema_error("unsupported value '" + s + "'", join(path_, key));
        }
        return s;
    }

    std::string any_string(const std::string& key, const std::string& fallback) { return string(key, fallback, {}); }

    const Json* child(const std::string& key) {
        if (!take(key)) return nullptr;
        return &j_.at(key);
    }

    std::string child_path(const std::string& key) const { return join(path_, key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) schema_error("unknown key", join(path_, it.key()));
        }
    }

private:
    bool take(const std::string& key) {
        if (!j_.contains(key)) return false;
        used_.insert(key);
        return true;
    }

    double resolve(const Json& v, const std::string& path, Base base) const {
        if (v.is_number()) return v.get<double>();
        if (v.is_object()) {
            if (v.size() != 1 || !v.contains("pu")) schema_error("expected a number or {\"pu\": x}", path);
            if (base == Base::None || bases_ == nullptr) schema_error("field has no per-unit base", path);
            const Json& x = v.at("pu");
            if (!x.is_number()) schema_error("per-unit value must be a number", path);
            return x.get<double>() * bases_->of(base);
        }
        schema_error("expected a number", path);
    }

    const Json& j_;
    std::string path_;
    const Bases* bases_;
    std::set<std::string> used_;
};

VscRatings parse_ratings(const Json* j) {
    VscRatings r;
    if (!j) return r;
    Reader rd(*j, "ratings", nullptr);
    r.S_rated = rd.number("S_rated", r.S_rated);
    r.P_rated = rd.number("P_rated", r.P_rated);
    r.Q_rated = rd.number("Q_rated", r.Q_rated);
    r.V0 = rd.number("V0", r.V0);
    if (rd.has("f0") && rd.has("omega0")) schema_error("give either f0 or omega0", "ratings");
    r.omega0 = rd.number("omega0", r.omega0);
    if (rd.has("f0")) r.omega0 = 2.0 * kPi * rd.number("f0", 60.0);
    r.f_s = rd.number("f_s", r.f_s);
    r.N = rd.integer("N", r.N);
    rd.finish();
    try {
        r.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Schema, e.what(), e.context());
    }
    return r;
}

void parse_plant(const Json* j, const Bases& b, const VscRatings& r, PlantParams& p) {
    p.N = r.N;
    p.grid.V_gp = r.Vp0();
    p.grid.omega_g = r.omega0;
    if (!j) return;
    Reader rd(*j, "plant", &b);
    p.L_a = rd.number("L_a", p.L_a, Base::Inductance);
    p.L_g = rd.number("L_g", p.L_g, Base::Inductance);
    p.C_f = rd.number("C_f", p.C_f, Base::Capacitance);
    p.r_a = rd.number("r_a", p.r_a, Base::Impedance);
    p.r_g = rd.number("r_g", p.r_g, Base::Impedance);
    p.r_d = rd.number("r_d", p.r_d, Base::Impedance);
    p.R_load = rd.nullable_number("R_load", p.R_load, std::numeric_limits<double>::infinity(), Base::Impedance);
    p.sts_closed = rd.boolean("sts_closed", p.sts_closed);
    p.short_resistance = rd.number("short_resistance", p.short_resistance, Base::Impedance);
    if (const Json* g = rd.child("grid")) {
        Reader gr(*g, "plant.grid", &b);
        p.grid.R_N = gr.number("R_N", p.grid.R_N, Base::Impedance);
        p.grid.L_N = gr.number("L_N", p.grid.L_N, Base::Inductance);
        p.grid.V_gp = gr.number("V_gp", p.grid.V_gp, Base::VoltagePeak);
        p.grid.omega_g = gr.number("omega_g", p.grid.omega_g, Base::Frequency);
        if (const Json* hs = gr.child("harmonics")) {
            if (!hs->is_array()) schema_error("expected an array", "plant.grid.harmonics");
            for (std::size_t k = 0; k < hs->size(); ++k) {
                Reader hr((*hs)[k], "plant.grid.harmonics[" + std::to_string(k) + "]", &b);
                GridHarmonic h;
                h.order = hr.required_number("order");
                h.amplitude = hr.required_number("amplitude", Base::VoltagePeak);
                h.sequence = hr.integer("sequence", h.sequence);
                if (h.sequence != 1 && h.sequence != -1) schema_error("sequence must be +1 or -1", "harmonics");
                hr.finish();
                p.grid.harmonics.push_back(h);
            }
        }
        gr.finish();
    }
    if (const Json* d = rd.child("dc_bus")) {
        Reader dr(*d, "plant.dc_bus", &b);
        const std::string mode = dr.string("mode", "source", {"source", "capacitor"});
        p.dc_mode = mode == "capacitor" ? DcBusMode::Capacitor : DcBusMode::Source;
        p.C_dc = dr.number("C_dc", p.C_dc);
        p.P_dc = dr.number("P_dc", p.P_dc, Base::Power);
        p.v_dc_floor = dr.number("v_dc_floor", p.v_dc_floor);
        dr.finish();
    }
    rd.finish();
}

void parse_controller(const Json* j, const Bases& b, const VscRatings& r, const PlantParams& plant,
                      ControllerConfig& c) {
    c.svo.omega0 = r.omega0;
    c.svo.Vp0 = r.Vp0();
    c.svo.N = r.N;
    c.f_s = r.f_s;
    c.voltage_floor = default_voltage_floor(r.V0);
    c.fault.S_rated = r.S_rated;
    c.fault.boost_impedance_base = r.z_base();
    double omega_ocl = c.fault.omega_ocl;
    bool R0_given = false;
    if (j) {
        Reader rd(*j, "controller", &b);
        c.V_dc_ref = rd.number("V_dc_ref", c.V_dc_ref);
        c.dcreg.V_dc_ref = c.V_dc_ref;
        c.modulation = rd.string("modulation", "reference", {"reference", "measured"}) == "measured"
                           ? ModulationScaling::Measured
                           : ModulationScaling::Reference;
        c.voltage_floor = rd.number("voltage_floor", c.voltage_floor);
        if (const Json* s = rd.child("svo")) {
            Reader sr(*s, "controller.svo", &b);
            c.svo.eta = sr.number("eta", c.svo.eta);
            c.svo.mu = sr.number("mu", c.svo.mu);
            c.svo.phi = sr.number("phi", c.svo.phi);
            c.svo.omega0 = sr.number("omega0", c.svo.omega0, Base::Frequency);
            c.svo.Vp0 = sr.number("Vp0", c.svo.Vp0, Base::VoltagePeak);
            c.svo.P0 = sr.number("P0", c.svo.P0, Base::Power);
            c.svo.Q0 = sr.number("Q0", c.svo.Q0, Base::Power);
            sr.finish();
        }
        if (const Json* f = rd.child("fault")) {
            Reader fr(*f, "controller.fault", &b);
            c.fault.enabled = fr.boolean("enabled", true);
            c.fault.I_T = fr.number("I_T", c.fault.I_T, Base::CurrentPeak);
            c.fault.V_T = fr.number("V_T", c.fault.V_T, Base::VoltagePeak);
            c.fault.I_m = fr.number("I_m", c.fault.I_m, Base::CurrentPeak);
            omega_ocl = fr.number("omega_ocl", omega_ocl);
            R0_given = fr.has("R0");
            c.fault.R0 = fr.number("R0", c.fault.R0, Base::Impedance);
            c.fault.t_f = fr.number("t_f", c.fault.t_f);
            c.fault.tau_f = fr.number("tau_f", c.fault.tau_f);
            c.fault.boost_q0 = fr.boolean("boost_q0", c.fault.boost_q0);
            c.fault.vg_filter_bandwidth = fr.number("vg_filter_bandwidth", c.fault.vg_filter_bandwidth);
            c.fault.boost_impedance_base =
                fr.string("boost_scaling", "per_unit", {"per_unit", "si"}) == "si" ? 1.0 : r.z_base();
            fr.finish();
        }
        if (const Json* e = rd.child("evi")) {
            Reader er(*e, "controller.evi", &b);
            c.evi.R_vir = er.number("R_vir", c.evi.R_vir, Base::Impedance);
            c.evi.L_vir = er.number("L_vir", c.evi.L_vir, Base::Inductance);
            c.evi.omega_c = er.number("omega_c", c.evi.omega_c);
            c.evi.side = er.string("side", "grid", {"grid", "converter"}) == "converter" ? FeedbackSide::Converter
                                                                                       : FeedbackSide::Grid;
            if (const Json* bank = er.child("bank")) {
                if (!bank->is_array()) schema_error("expected an array", "controller.evi.bank");
                for (std::size_t k = 0; k < bank->size(); ++k) {
                    Reader br((*bank)[k], "controller.evi.bank[" + std::to_string(k) + "]", &b);
                    ResonantTerm t;
                    t.h = br.required_number("h");
                    t.K_h = br.required_number("K_h", Base::Impedance);
                    t.omega_B = br.required_number("omega_B");
                    t.omega_h = t.h * c.svo.omega0;
                    br.finish();
                    c.evi.bank.push_back(t);
                }
            }
            er.finish();
        }
        if (const Json* ps = rd.child("presync")) {
            Reader pr(*ps, "controller.presync", &b);
            c.presync.enabled = pr.boolean("enabled", c.presync.enabled);
            c.presync.L_ps = pr.number("L_ps", c.presync.L_ps, Base::Inductance);
            c.presync.R_ps = pr.number("R_ps", c.presync.R_ps, Base::Impedance);
            pr.finish();
        }
        if (const Json* d = rd.child("dcreg")) {
            Reader dr(*d, "controller.dcreg", &b);
            c.dcreg.enabled = dr.boolean("enabled", true);
            c.dcreg.K_pdc = dr.number("K_pdc", c.dcreg.K_pdc);
            c.dcreg.T_i = dr.number("T_i", c.dcreg.T_i);
            c.dcreg.omega_z = dr.number("omega_z", c.dcreg.omega_z);
            c.dcreg.omega_p = dr.number("omega_p", c.dcreg.omega_p);
            c.dcreg.V_dc_ref = dr.number("V_dc_ref", c.dcreg.V_dc_ref);
            dr.finish();
        }
        rd.finish();
    }
    c.fault.omega_ocl = omega_ocl;
    if (!R0_given) c.fault.R0 = omega_ocl * (plant.L_a + plant.L_g);
}

double event_value(const Json& e, const std::string& path, EventKind kind, const Bases& b) {
    Base base = Base::None;
    switch (kind) {
        case EventKind::GridVoltage: base = Base::VoltagePeak; break;
        case EventKind::GridFrequency: base = Base::Frequency; break;
        case EventKind::LoadStep: base = Base::Impedance; break;
        case EventKind::DcLoadStep:
        case EventKind::SetP0:
        case EventKind::SetQ0: base = Base::Power; break;
        default: break;
    }
    Reader rd(e, path, &b);
    rd.required_number("t");
    rd.any_string("type", "");
    double v = 0.0;
    if (kind == EventKind::LoadStep) {
        v = rd.nullable_number("value", 0.0, 0.0, base);
    } else if (base != Base::None) {
        v = rd.required_number("value", base);
    }
    rd.finish();
    return v;
}

void wrap_validation(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidArgument) throw Error(ErrorKind::Schema, e.what(), e.context());
        throw;
    }
}

Scenario parse_scenario_body(Reader& rd) {
    Scenario s;
    s.name = rd.any_string("name", s.name);
    s.ratings = parse_ratings(rd.child("ratings"));
    const Bases b(s.ratings);
    parse_plant(rd.child("plant"), b, s.ratings, s.plant);
    parse_controller(rd.child("controller"), b, s.ratings, s.plant, s.controller);

    if (const Json* init = rd.child("init")) {
        Reader ir(*init, "init", &b);
        const std::string mode = ir.string("mode", "grid", {"grid", "nominal"});
        s.init.mode = mode == "nominal" ? InitMode::Nominal : InitMode::Grid;
        ir.finish();
    }
    s.v_dc_init = rd.number("v_dc_init", s.controller.dcreg.V_dc_ref);
    s.duration = rd.number("duration", s.duration);
    s.substeps = rd.integer("substeps", s.substeps);
    s.decimation = rd.integer("decimation", s.decimation);
    s.seed = rd.unsigned_integer("seed", s.seed);
    s.measurement_noise = rd.number("measurement_noise", s.measurement_noise);

    if (const Json* ev = rd.child("events")) {
        if (!ev->is_array()) schema_error("expected an array", "events");
        for (std::size_t k = 0; k < ev->size(); ++k) {
            const Json& e = (*ev)[k];
            const std::string path = "events[" + std::to_string(k) + "]";
            if (!e.is_object() || !e.contains("type") || !e.at("type").is_string()) {
                schema_error("event needs a string 'type'", path);
            }
            Event event;
            try {
                event.kind = event_kind_from_string(e.at("type").get<std::string>());
            } catch (const Error& err) {
                throw Error(ErrorKind::Schema, err.what(), path + ".type=" + err.context());
            }
            event.value = event_value(e, path, event.kind, b);
            event.t = e.at("t").get<double>();
            s.events.push_back(event);
        }
        std::stable_sort(s.events.begin(), s.events.end(), [](const Event& a, const Event& c) { return a.t < c.t; });
    }
    wrap_validation([&] { s.validate(); });
    return s;
}

}  // namespace

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return Json::parse(ss.str());
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Schema, std::string("malformed JSON: ") + e.what(), path);
    }
}

void apply_overrides(Json& doc, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) schema_error("override must be key=value", o);
        const std::string path = o.substr(0, eq);
        const std::string text = o.substr(eq + 1);
        Json value;
        try {
            value = Json::parse(text);
        } catch (const Json::parse_error&) {
            value = text;
        }
        Json* node = &doc;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (key.empty()) schema_error("empty path component in override", path);
            if (!node->is_object()) schema_error("override path crosses a non-object", path);
            if (dot == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            if (!node->contains(key)) (*node)[key] = Json::object();
            node = &(*node)[key];
            start = dot + 1;
        }
    }
}

Scenario scenario_from_json(const Json& doc) {
    // An analysis block is allowed in scenario files and is checked here too.
    if (doc.is_object() && doc.contains("analysis")) return analysis_from_json(doc).scenario;
    Reader rd(doc, "", nullptr);
    Scenario s = parse_scenario_body(rd);
    rd.finish();
    return s;
}

Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides) {
    Json doc = read_json_file(path);
    apply_overrides(doc, overrides);
    return scenario_from_json(doc);
}

AnalysisConfig analysis_from_json(const Json& doc) {
    Reader rd(doc, "", nullptr);
    AnalysisConfig a;
    a.scenario = parse_scenario_body(rd);
    const Bases b(a.scenario.ratings);
    a.grid.V_g = a.scenario.ratings.V0;
    a.grid.omega_star = a.scenario.ratings.omega0;
    if (const Json* an = rd.child("analysis")) {
        Reader ar(*an, "analysis", &b);
        a.grid.V_g = ar.number("V_g", a.grid.V_g, Base::VoltageRms);
        a.grid.omega_star = ar.number("omega_star", a.grid.omega_star, Base::Frequency);
        a.P0 = ar.number("P0", a.scenario.controller.svo.P0, Base::Power);
        a.Q0 = ar.number("Q0", a.scenario.controller.svo.Q0, Base::Power);
        a.mode = ar.string("mode", "normal", {"normal", "fault"}) == "fault" ? AnalysisMode::Fault : AnalysisMode::Normal;
        a.band_lo = ar.number("band_lo", a.band_lo);
        a.band_hi = ar.number("band_hi", a.band_hi);
        ar.finish();
    } else {
        a.P0 = a.scenario.controller.svo.P0;
        a.Q0 = a.scenario.controller.svo.Q0;
    }
    rd.finish();
    if (!(a.band_lo > 0.0) || !(a.band_hi > a.band_lo)) schema_error("analysis band must satisfy 0 < lo < hi", "analysis");
    return a;
}

AnalysisConfig load_analysis(const std::string& path, const std::vector<std::string>& overrides) {
    Json doc = read_json_file(path);
    apply_overrides(doc, overrides);
    return analysis_from_json(doc);
}

SmallSignalParams small_signal_params(const Scenario& s) {
    SmallSignalParams p;
    p.svo = s.controller.svo;
    p.L_e = s.plant.L_a + s.plant.L_g + s.plant.grid.L_N + s.controller.evi.L_vir;
    p.R_e = s.controller.evi.R_vir + s.plant.r_a + s.plant.r_g + s.plant.grid.R_N;
    p.C_dc = s.plant.C_dc;
    p.V_dc_ref = s.controller.dcreg.V_dc_ref;
    p.R0 = s.controller.fault.R0;
    p.tau_f = s.controller.fault.tau_f;
    p.boost_impedance_base = s.controller.fault.boost_impedance_base;
    if (std::isfinite(s.controller.fault.I_m)) p.I_m = s.controller.fault.I_m;
    return p;
}

DesignConfig design_from_json(const Json& doc) {
    Reader rd(doc, "", nullptr);
    DesignConfig d;
    d.spec.ratings = parse_ratings(rd.child("ratings"));
    const Bases b(d.spec.ratings);
    rd.set_bases(&b);
    d.spec.dV_max = rd.number("dV_max", 0.05 * d.spec.ratings.V0, Base::VoltageRms);
    d.spec.domega_max = rd.number("domega_max", d.spec.domega_max);
    d.spec.phi = rd.number("phi", d.spec.phi);
    parse_plant(rd.child("plant"), b, d.spec.ratings, d.plant);
    if (const Json* e = rd.child("evi")) {
        Reader er(*e, "evi", &b);
        d.evi.R_vir = er.number("R_vir", d.evi.R_vir, Base::Impedance);
        d.evi.L_vir = er.number("L_vir", d.evi.L_vir, Base::Inductance);
        d.evi.omega_c = er.number("omega_c", d.evi.omega_c);
        d.evi.side = er.string("side", "grid", {"grid", "converter"}) == "converter" ? FeedbackSide::Converter
                                                                                   : FeedbackSide::Grid;
        er.finish();
    }
    const double V0 = d.spec.ratings.V0;
    d.map.V_g_min = V0 - d.spec.dV_max;
    d.map.V_g_max = V0 + d.spec.dV_max;
    d.map.omega_g_min = d.spec.ratings.omega0 - d.spec.domega_max;
    d.map.omega_g_max = d.spec.ratings.omega0 + d.spec.domega_max;
    if (const Json* m = rd.child("powermap")) {
        Reader mr(*m, "powermap", &b);
        d.map.V_g_min = mr.number("V_g_min", d.map.V_g_min, Base::VoltageRms);
        d.map.V_g_max = mr.number("V_g_max", d.map.V_g_max, Base::VoltageRms);
        d.map.omega_g_min = mr.number("omega_g_min", d.map.omega_g_min, Base::Frequency);
        d.map.omega_g_max = mr.number("omega_g_max", d.map.omega_g_max, Base::Frequency);
        d.map.n_V = mr.integer("n_V", d.map.n_V);
        d.map.n_omega = mr.integer("n_omega", d.map.n_omega);
        d.map.max_iterations = mr.integer("max_iterations", d.map.max_iterations);
        d.map.tolerance = mr.number("tolerance", d.map.tolerance);
        mr.finish();
    }
    rd.finish();
    wrap_validation([&] {
        d.plant.validate();
        d.evi.validate();
    });
    return d;
}

DesignConfig load_design(const std::string& path, const std::vector<std::string>& overrides) {
    Json doc = read_json_file(path);
    apply_overrides(doc, overrides);
    return design_from_json(doc);
}

}  // namespace uvoc
