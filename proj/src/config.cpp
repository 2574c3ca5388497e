#include "dynsur/config.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/model_io.hpp"

#include <algorithm>
#include <cstdlib>
#include <numbers>

#ifndef DYNSUR_PRESET_DIR
#define DYNSUR_PRESET_DIR "presets"
#endif

namespace dynsur::config {

using nlohmann::json;

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& target, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        return;
    }
    try {
        target = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

void read_interval(const json& j, const char* key, excitation::Interval& iv, const std::string& where) {
    if (!j.contains(key)) {
        return;
    }
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) {
        throw ConfigError(where + ": '" + std::string(key) + "' must be [lo, hi]");
    }
    iv = {v[0], v[1]};
}

TimeGrid read_grid(const json& j, const TimeGrid& fallback, const std::string& where) {
    double dt = fallback.dt();
    double duration = fallback.t_max() - fallback.t0();
    read_opt(j, "dt", dt, where);
    read_opt(j, "duration", duration, where);
    return TimeGrid::covering(0.0, dt, duration);
}

}  // namespace

System parse_system(const std::string& s) {
    if (s == "quarter-car") {
        return System::quarter_car;
    }
    if (s == "bouc-wen") {
        return System::bouc_wen;
    }
    throw ConfigError("unknown system '" + s + "' (expected quarter-car or bouc-wen)");
}

std::string to_string(System s) { return s == System::quarter_car ? "quarter-car" : "bouc-wen"; }

std::string SystemConfig::excitation_label() const { return system == System::quarter_car ? "x" : "xdd"; }

std::vector<std::string> SystemConfig::response_labels() const {
    if (system == System::quarter_car) {
        return {"y1", "y2"};
    }
    return {"y", "z"};
}

std::string SystemConfig::default_qoi() const { return system == System::quarter_car ? "y2" : "y"; }

const TimeGrid& SystemConfig::grid() const {
    return system == System::quarter_car ? harmonic.grid : ground_motion.grid;
}

SystemConfig parse_system_config(const json& j) {
    SystemConfig s;
    try {
        const json& sys = j.at("system");
        s.system = parse_system(sys.at("type").get<std::string>());
        const json params = sys.contains("params") ? sys.at("params") : json::object();
        if (s.system == System::quarter_car) {
            auto& p = s.quarter_car;
            read_opt(params, "k1", p.k1, "quarter-car");
            read_opt(params, "k2", p.k2, "quarter-car");
            read_opt(params, "m1", p.m1, "quarter-car");
            read_opt(params, "m2", p.m2, "quarter-car");
            read_opt(params, "c", p.c, "quarter-car");
            p.validate();
        } else {
            auto& p = s.bouc_wen;
            read_opt(params, "zeta", p.zeta, "bouc-wen");
            read_opt(params, "omega", p.omega, "bouc-wen");
            read_opt(params, "rho", p.rho, "bouc-wen");
            read_opt(params, "gamma", p.gamma, "bouc-wen");
            read_opt(params, "alpha", p.alpha, "bouc-wen");
            read_opt(params, "beta", p.beta, "bouc-wen");
            read_opt(params, "n", p.n, "bouc-wen");
            p.validate();
        }
        read_opt(sys, "substeps", s.sim.substeps, "system");
        read_opt(sys, "check_invariants", s.sim.check_invariants, "system");

        const json ex = j.contains("excitation") ? j.at("excitation") : json::object();
        const std::string where = "excitation";
        if (s.system == System::quarter_car) {
            if (ex.contains("type") && ex.at("type") != "harmonic") {
                throw ConfigError("excitation: the quarter-car study uses the harmonic excitation");
            }
            auto& h = s.harmonic;
            read_opt(ex, "n_omega_max", h.n_omega_max, where);
            read_interval(ex, "amplitude", h.amplitude_range, where);
            read_interval(ex, "frequency", h.frequency_range, where);
            read_interval(ex, "phase", h.phase_range, where);
            h.grid = read_grid(ex, h.grid, where);
            h.validate();
        } else {
            if (ex.contains("type") && ex.at("type") != "ground-motion") {
                throw ConfigError("excitation: the bouc-wen study uses the ground-motion excitation");
            }
            auto& g = s.ground_motion;
            read_opt(ex, "arias_intensity", g.arias_intensity, where);
            read_opt(ex, "effective_duration", g.effective_duration, where);
            read_opt(ex, "t_mid", g.t_mid, where);
            double f_mid = g.omega_mid / (2.0 * std::numbers::pi);
            double f_slope = g.omega_slope / (2.0 * std::numbers::pi);
            read_opt(ex, "f_mid_hz", f_mid, where);
            read_opt(ex, "f_slope_hz_per_s", f_slope, where);
            g.omega_mid = 2.0 * std::numbers::pi * f_mid;
            g.omega_slope = 2.0 * std::numbers::pi * f_slope;
            read_opt(ex, "damping", g.filter_damping, where);
            read_opt(ex, "gravity", g.gravity, where);
            read_opt(ex, "highpass_hz", g.highpass_hz, where);
            g.grid = read_grid(ex, g.grid, where);
            g.validate();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("system/excitation section: ") + e.what());
    }
    return s;
}

json system_to_json(const SystemConfig& s) {
    json j;
    json sys;
    sys["type"] = to_string(s.system);
    if (s.system == System::quarter_car) {
        const auto& p = s.quarter_car;
        sys["params"] = {{"k1", p.k1}, {"k2", p.k2}, {"m1", p.m1}, {"m2", p.m2}, {"c", p.c}};
    } else {
        const auto& p = s.bouc_wen;
        sys["params"] = {{"zeta", p.zeta}, {"omega", p.omega}, {"rho", p.rho}, {"gamma", p.gamma},
                         {"alpha", p.alpha}, {"beta", p.beta},   {"n", p.n}};
    }
    sys["substeps"] = s.sim.substeps;
    sys["check_invariants"] = s.sim.check_invariants;
    j["system"] = sys;
    json ex;
    const TimeGrid& g = s.grid();
    ex["dt"] = g.dt();
    ex["duration"] = g.t_max() - g.t0();
    if (s.system == System::quarter_car) {
        const auto& h = s.harmonic;
        ex["type"] = "harmonic";
        ex["n_omega_max"] = h.n_omega_max;
        ex["amplitude"] = {h.amplitude_range.lo, h.amplitude_range.hi};
        ex["frequency"] = {h.frequency_range.lo, h.frequency_range.hi};
        ex["phase"] = {h.phase_range.lo, h.phase_range.hi};
    } else {
        const auto& gm = s.ground_motion;
        ex["type"] = "ground-motion";
        ex["arias_intensity"] = gm.arias_intensity;
        ex["effective_duration"] = gm.effective_duration;
        ex["t_mid"] = gm.t_mid;
        ex["f_mid_hz"] = gm.omega_mid / (2.0 * std::numbers::pi);
        ex["f_slope_hz_per_s"] = gm.omega_slope / (2.0 * std::numbers::pi);
        ex["damping"] = gm.filter_damping;
        ex["gravity"] = gm.gravity;
        ex["highpass_hz"] = gm.highpass_hz;
    }
    j["excitation"] = ex;
    return j;
}

void RunConfig::validate() const {
    if (pool_size < 1) {
        throw ConfigError("design: pool_size must be >= 1");
    }
    for (std::size_t n : n_ed) {
        if (n < 1 || n > pool_size) {
            throw ConfigError("design: every n_ed must lie in [1, pool_size]");
        }
    }
    if (strategies.empty() || n_ed.empty()) {
        throw ConfigError("design: need at least one strategy and one size");
    }
    if (n_mcs < 2) {
        throw ConfigError("reliability: n_mcs must be >= 2");
    }
    if (n_error_traces < 1) {
        throw ConfigError("reliability: n_error_traces must be >= 1");
    }
    if (thresholds.count < 2) {
        throw ConfigError("reliability: at least two thresholds");
    }
    std::set<std::string> names;
    for (const auto& s : surrogates) {
        if (s.name.empty() || !names.insert(s.name).second) {
            throw ConfigError("surrogates: names must be unique and non-empty");
        }
    }
}

RunConfig parse_run_config(const json& j) {
    RunConfig c;
    try {
        read_opt(j, "name", c.name, "run");
        read_opt(j, "seed", c.seed, "run");
        c.system = parse_system_config(j);
        c.qoi = c.system.default_qoi();
        if (j.contains("design")) {
            const json& d = j.at("design");
            read_opt(d, "pool_size", c.pool_size, "design");
            read_opt(d, "n_ed", c.n_ed, "design");
            if (d.contains("strategies")) {
                c.strategies.clear();
                for (const auto& s : d.at("strategies")) {
                    c.strategies.push_back(design::parse_strategy(s.get<std::string>()));
                }
            }
        }
        if (j.contains("surrogates")) {
            for (const auto& s : j.at("surrogates")) {
                SurrogateEntry e;
                e.name = s.at("name").get<std::string>();
                if (s.contains("candidates")) {
                    for (const auto& cand : s.at("candidates")) {
                        e.candidates.push_back(io::spec_from_json(cand));
                    }
                    if (e.candidates.empty()) {
                        throw ConfigError("surrogate '" + e.name + "': empty candidate list");
                    }
                    e.spec = e.candidates.front();
                } else {
                    e.spec = io::spec_from_json(s.at("spec"));
                }
                if (s.contains("strategies")) {
                    for (const auto& st : s.at("strategies")) {
                        e.strategies.insert(design::parse_strategy(st.get<std::string>()));
                    }
                }
                read_opt(s, "n_ed", e.n_ed, "surrogate '" + e.name + "'");
                c.surrogates.push_back(std::move(e));
            }
        }
        if (j.contains("reliability")) {
            const json& r = j.at("reliability");
            read_opt(r, "n_mcs", c.n_mcs, "reliability");
            read_opt(r, "n_error_traces", c.n_error_traces, "reliability");
            read_opt(r, "qoi", c.qoi, "reliability");
            read_opt(r, "bins", c.bins, "reliability");
            if (r.contains("mode")) {
                c.mode = reliability::parse_failure_mode(r.at("mode").get<std::string>());
            }
            if (r.contains("thresholds")) {
                const json& t = r.at("thresholds");
                if (t.contains("lo")) {
                    c.thresholds.lo = t.at("lo").get<double>();
                }
                if (t.contains("hi")) {
                    c.thresholds.hi = t.at("hi").get<double>();
                }
                read_opt(t, "count", c.thresholds.count, "thresholds");
            }
        }
        std::string out;
        read_opt(j, "output", out, "run");
        if (!out.empty()) {
            c.output_dir = out;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(io::read_json_file(path)); }

json run_to_json(const RunConfig& c) {
    json j = system_to_json(c.system);
    j["name"] = c.name;
    j["seed"] = c.seed;
    json d;
    d["pool_size"] = c.pool_size;
    d["n_ed"] = c.n_ed;
    d["strategies"] = json::array();
    for (auto s : c.strategies) {
        d["strategies"].push_back(design::to_string(s));
    }
    j["design"] = d;
    j["surrogates"] = json::array();
    for (const auto& s : c.surrogates) {
        json e;
        e["name"] = s.name;
        if (s.candidates.empty()) {
            e["spec"] = io::spec_to_json(s.spec);
        } else {
            e["candidates"] = json::array();
            for (const auto& cand : s.candidates) {
                e["candidates"].push_back(io::spec_to_json(cand));
            }
        }
        if (!s.strategies.empty()) {
            e["strategies"] = json::array();
            for (auto st : s.strategies) {
                e["strategies"].push_back(design::to_string(st));
            }
        }
        if (!s.n_ed.empty()) {
            e["n_ed"] = s.n_ed;
        }
        j["surrogates"].push_back(e);
    }
    json r;
    r["n_mcs"] = c.n_mcs;
    r["n_error_traces"] = c.n_error_traces;
    r["qoi"] = c.qoi;
    r["bins"] = c.bins;
    r["mode"] = c.mode == reliability::FailureMode::absolute ? "absolute" : "signed";
    json t;
    if (c.thresholds.lo) {
        t["lo"] = *c.thresholds.lo;
    }
    if (c.thresholds.hi) {
        t["hi"] = *c.thresholds.hi;
    }
    t["count"] = c.thresholds.count;
    r["thresholds"] = t;
    j["reliability"] = r;
    j["output"] = c.output_dir.string();
    return j;
}

void apply_quick(RunConfig& c) {
    c.pool_size = std::min<std::size_t>(c.pool_size, 1000);
    c.n_mcs = std::min<std::size_t>(c.n_mcs, 2000);
    c.n_error_traces = std::min(c.n_error_traces, c.n_mcs);
    for (auto& n : c.n_ed) {
        n = std::min(n, c.pool_size);
    }
}

std::filesystem::path find_preset(const std::string& name_or_path) {
    namespace fs = std::filesystem;
    if (fs::is_regular_file(name_or_path)) {
        return name_or_path;
    }
    std::string file = name_or_path;
    std::replace(file.begin(), file.end(), '-', '_');
    if (file.find('.') == std::string::npos) {
        file += ".preset";
    }
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv("DYNSUR_PRESET_DIR")) {
        dirs.emplace_back(env);
    }
    dirs.emplace_back("presets");
    dirs.emplace_back(DYNSUR_PRESET_DIR);
    for (const auto& d : dirs) {
        if (fs::is_regular_file(d / file)) {
            return d / file;
        }
    }
    throw ConfigError("preset '" + name_or_path + "' not found (looked for " + file + ")");
}

}  // namespace dynsur::config
