#include "dynsur/cli.hpp"

#include "dynsur/config.hpp"
#include "dynsur/csv.hpp"
#include "dynsur/design.hpp"
#include "dynsur/errors.hpp"
#include "dynsur/excitation.hpp"
#include "dynsur/model_io.hpp"
#include "dynsur/narx.hpp"
#include "dynsur/parallel.hpp"
#include "dynsur/pipeline.hpp"
#include "dynsur/reliability.hpp"
#include "dynsur/rng.hpp"
#include "dynsur/simulators.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <sstream>
#include <thread>

namespace dynsur::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Returns the "excitation" section of a run preset, or the document itself.
json excitation_section(const json& doc) { return doc.contains("excitation") ? doc.at("excitation") : doc; }

config::SystemConfig excitation_config(const std::string& model, const json& doc) {
    json j;
    j["system"] = {{"type", model == "harmonic" ? "quarter-car" : "bouc-wen"}};
    j["excitation"] = excitation_section(doc);
    j["excitation"].erase("type");
    return config::parse_system_config(j);
}

std::string model_of(const json& doc) {
    const json ex = excitation_section(doc);
    if (ex.contains("type")) {
        return ex.at("type").get<std::string>();
    }
    if (doc.contains("system")) {
        return doc.at("system").at("type") == "bouc-wen" ? "ground-motion" : "harmonic";
    }
    throw ConfigError("excitation spec: missing 'type' (harmonic or ground-motion)");
}

/// Expands "lo:hi:count" or a comma-separated list.
std::vector<double> parse_thresholds(const std::string& s) {
    auto to_d = [&](const std::string& v) {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) {
                throw std::invalid_argument(v);
            }
            return d;
        } catch (const std::exception&) {
            throw ConfigError("thresholds: cannot parse '" + v + "'");
        }
    };
    std::vector<std::string> parts;
    const char sep = s.find(':') != std::string::npos ? ':' : ',';
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, sep);) {
        parts.push_back(p);
    }
    if (sep == ':') {
        if (parts.size() != 3) {
            throw ConfigError("thresholds: range must be lo:hi:count");
        }
        const double n = to_d(parts[2]);
        if (n < 2 || n != std::floor(n)) {
            throw ConfigError("thresholds: count must be an integer >= 2");
        }
        return reliability::linspace(to_d(parts[0]), to_d(parts[1]), static_cast<std::size_t>(n));
    }
    std::vector<double> out;
    for (const auto& p : parts) {
        out.push_back(to_d(p));
    }
    if (out.empty() || !std::is_sorted(out.begin(), out.end())) {
        throw ConfigError("thresholds: list must be non-empty and ascending");
    }
    return out;
}

std::set<std::string> output_labels(const narx::SurrogateSpec& spec) {
    std::set<std::string> out;
    for (const auto& st : spec.stages) {
        out.insert(narx::stage_output(st));
    }
    return out;
}

std::vector<fs::path> scenario_files(const fs::path& p) {
    if (fs::is_regular_file(p)) {
        return {p};
    }
    auto files = csv::list_csv(p, {"index.csv", "pool.csv"});
    if (files.empty()) {
        throw IoError("no scenario CSV files in " + p.string());
    }
    return files;
}

std::vector<Scenario> read_scenarios(const fs::path& p, const std::set<std::string>& responses) {
    std::vector<Scenario> out;
    for (const auto& f : scenario_files(p)) {
        out.push_back(csv::read_scenario(f, responses));
    }
    return out;
}

// --- subcommands -----------------------------------------------------------

struct GenArgs {
    std::string model;
    std::string config;
    std::size_t n = 1;
    std::uint64_t seed = 1;
    std::string out;
};

void cmd_gen_excitation(const GenArgs& a, std::size_t jobs, std::ostream& out) {
    const json doc = a.config.empty() ? json::object() : io::read_json_file(a.config);
    const auto sys = excitation_config(a.model, doc);
    const pipeline::SystemModel model(sys);
    fs::create_directories(a.out);
    std::vector<design::PoolEntry> index(a.n);
    const int width = static_cast<int>(std::to_string(a.n).size());
    parallel_for(a.n, jobs, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(a.seed, static_cast<std::uint64_t>(i));
        Trajectory x = model.excitation(s);
        std::ostringstream name;
        name << "realization_" << std::setw(width) << std::setfill('0') << i << ".csv";
        csv::write_trajectory(fs::path(a.out) / name.str(), x);
        index[i] = {i, s, excitation::max_abs_amplitude(x)};
    });
    csv::Table t;
    t.header = {"id", "seed", "max_abs_amplitude"};
    for (const auto& e : index) {
        t.rows.push_back({std::to_string(e.id), std::to_string(e.seed), csv::format_double(e.amplitude)});
    }
    csv::write_table(fs::path(a.out) / "index.csv", t);
    out << "wrote " << a.n << " realizations to " << a.out << "\n";
}

struct SimArgs {
    std::string system;
    std::string params;
    std::string excitation;
    std::string out;
};

void cmd_simulate(const SimArgs& a, std::size_t jobs, std::ostream& out) {
    json doc = a.params.empty() ? json::object() : io::read_json_file(a.params);
    json j;
    json sys = doc.contains("system") ? doc.at("system") : doc;
    if (!sys.contains("params")) {
        sys = {{"params", sys}};
    }
    sys["type"] = a.system;
    j["system"] = sys;
    const auto cfg = config::parse_system_config(j);
    const auto files = scenario_files(a.excitation);
    fs::create_directories(a.out);
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        const auto trajs = csv::read_trajectories(files[i]);
        if (trajs.empty()) {
            throw IoError(files[i].string() + ": no excitation column");
        }
        const Trajectory& x = trajs.front();
        const sim::SimResult r = cfg.system == config::System::quarter_car
                                     ? sim::simulate_quarter_car(cfg.quarter_car, x, cfg.sim)
                                     : sim::simulate_bouc_wen(cfg.bouc_wen, x, cfg.sim);
        Scenario s;
        s.excitations.push_back(x);
        for (const auto& [label, traj] : r.outputs) {
            s.responses.emplace(label, traj);
        }
        csv::write_scenario(fs::path(a.out) / files[i].filename(), s);
    });
    out << "simulated " << files.size() << " scenarios into " << a.out << "\n";
}

struct DesignArgs {
    std::string pool;
    std::string strategy;
    std::size_t n = 0;
    std::uint64_t seed = 1;
    std::string out;
};

void cmd_design(const DesignArgs& a, std::ostream& out) {
    design::CandidatePool pool;
    pool.entries = design::read_pool(a.pool);
    pool.validate();
    const auto ids = design::select(pool, design::parse_strategy(a.strategy), a.n, a.seed);
    std::vector<design::PoolEntry> rows;
    for (auto id : ids) {
        rows.push_back(pool.by_id(id));
    }
    design::write_pool(a.out, rows);
    out << "selected " << rows.size() << " of " << pool.size() << " candidates\n";
}

struct FitArgs {
    std::string arch;
    std::string config;
    std::string ed;
    std::string out;
    std::string surrogate;
};

void cmd_fit(const FitArgs& a, std::size_t jobs, std::ostream& out) {
    const json doc = io::read_json_file(a.config);
    const auto arch = narx::parse_architecture(a.arch);
    std::vector<narx::SurrogateSpec> cands;
    if (doc.contains("surrogates")) {
        const auto run = config::parse_run_config(doc);
        for (const auto& e : run.surrogates) {
            if ((a.surrogate.empty() && e.spec.architecture == arch) || e.name == a.surrogate) {
                cands = e.candidates.empty() ? std::vector<narx::SurrogateSpec>{e.spec} : e.candidates;
                break;
            }
        }
        if (cands.empty()) {
            throw ConfigError("fit: no surrogate with architecture " + a.arch + " in " + a.config);
        }
    } else {
        cands.push_back(io::spec_from_json(doc.contains("spec") ? doc.at("spec") : doc));
    }
    for (const auto& c : cands) {
        if (c.architecture != arch) {
            throw ConfigError("fit: --arch " + a.arch + " does not match the configured architecture " +
                              narx::to_string(c.architecture));
        }
    }
    const auto ed = read_scenarios(a.ed, output_labels(cands.front()));
    narx::FittedSurrogate model;
    if (cands.size() == 1) {
        model = narx::fit_surrogate(ed, cands.front());
    } else {
        auto sel = narx::select_model(ed, cands, jobs);
        out << "selected candidate " << sel.best << " (trace " << sel.selection_trace << ")\n";
        model = std::move(sel.model);
    }
    io::save_model(a.out, model);
    out << "fitted " << narx::to_string(model.architecture) << " on " << ed.size()
        << " traces, mean training error " << model.mean_training_error << "\n";
}

struct PredictArgs {
    std::string model;
    std::string excitation;
    std::string out;
};

void cmd_predict(const PredictArgs& a, std::size_t jobs, std::ostream& out) {
    const auto model = io::load_model(a.model);
    std::set<std::string> outputs;
    for (const auto& st : model.stages) {
        outputs.insert(narx::stage_output(st.spec));
    }
    const auto files = scenario_files(a.excitation);
    fs::create_directories(a.out);
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        Scenario s = csv::read_scenario(files[i], outputs);
        s.responses.clear();
        const auto pred = narx::forecast(model, s);
        std::vector<Trajectory> cols;
        for (const auto& [label, traj] : pred) {
            cols.push_back(traj);
        }
        csv::write_trajectories(fs::path(a.out) / files[i].filename(), cols);
    });
    out << "predicted " << files.size() << " scenarios into " << a.out << "\n";
}

struct ReliabilityArgs {
    std::string model;
    std::string excitation_spec;
    std::size_t n_mcs = 20000;
    std::string thresholds;
    std::uint64_t seed = 1;
    std::string mode = "absolute";
    std::string out;
};

void cmd_reliability(const ReliabilityArgs& a, std::size_t jobs, std::ostream& out) {
    const auto model = io::load_model(a.model);
    const json doc = io::read_json_file(a.excitation_spec);
    const pipeline::SystemModel sys(excitation_config(model_of(doc), doc));
    const auto mode = reliability::parse_failure_mode(a.mode);
    const auto thresholds = parse_thresholds(a.thresholds);
    std::vector<double> maxima(a.n_mcs);
    std::vector<char> div(a.n_mcs, 0);
    parallel_for(a.n_mcs, jobs, [&](std::size_t i) {
        Scenario s;
        s.excitations.push_back(sys.excitation(pipeline::validation_seed(a.seed, i)));
        try {
            maxima[i] = reliability::max_response(narx::forecast_qoi(model, s), mode);
        } catch (const DivergenceError&) {
            maxima[i] = std::numeric_limits<double>::infinity();
            div[i] = 1;
        }
    });
    reliability::write_curve(a.out, reliability::pf_curve(maxima, thresholds));
    out << "reliability curve over " << thresholds.size() << " thresholds from " << a.n_mcs << " rollouts ("
        << std::count(div.begin(), div.end(), 1) << " divergent) written to " << a.out << "\n";
}

struct ValidateArgs {
    std::string model;
    std::string reference;
    std::string out;
    std::string mode = "absolute";
    std::size_t thresholds = 200;
};

void cmd_validate(const ValidateArgs& a, std::size_t jobs, std::ostream& out) {
    const auto model = io::load_model(a.model);
    std::set<std::string> outputs;
    for (const auto& st : model.stages) {
        outputs.insert(narx::stage_output(st.spec));
    }
    const auto ref = read_scenarios(a.reference, outputs);
    const auto rep =
        pipeline::validate_model(model, ref, reliability::parse_failure_mode(a.mode), a.thresholds, jobs);
    fs::create_directories(a.out);
    const fs::path dir(a.out);
    csv::Table t;
    t.header = {"index", "error"};
    for (std::size_t i = 0; i < rep.per_trace.size(); ++i) {
        t.rows.push_back({std::to_string(i), csv::format_double(rep.per_trace[i])});
    }
    csv::write_table(dir / "errors.csv", t);
    reliability::write_curve(dir / "curve_reference.csv", rep.reference);
    reliability::write_curve(dir / "curve_surrogate.csv", rep.surrogate);
    json j;
    j["n_traces"] = rep.per_trace.size();
    j["eps_bar"] = std::isfinite(rep.eps_bar) ? json(rep.eps_bar) : json(nullptr);
    j["diverged"] = rep.diverged;
    j["ks"] = rep.ks;
    j["training_error"] = model.mean_training_error;
    io::write_json_file(dir / "report.json", j);
    out << "eps_bar " << rep.eps_bar << " over " << rep.per_trace.size() << " traces, KS " << rep.ks << "\n";
}

struct BenchArgs {
    std::string name;
    bool quick = false;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_mcs;
    std::optional<std::size_t> pool_size;
};

void cmd_benchmark(const BenchArgs& a, std::size_t jobs, std::ostream& out, std::ostream& err) {
    auto cfg = config::load_run_config(config::find_preset(a.name));
    if (a.quick) {
        config::apply_quick(cfg);
    }
    if (a.seed) {
        cfg.seed = *a.seed;
    }
    if (a.pool_size) {
        cfg.pool_size = *a.pool_size;
    }
    if (a.n_mcs) {
        cfg.n_mcs = *a.n_mcs;
        cfg.n_error_traces = std::min(cfg.n_error_traces, cfg.n_mcs);
    }
    if (!a.out.empty()) {
        cfg.output_dir = a.out;
    }
    cfg.validate();
    pipeline::BenchmarkOptions opt;
    opt.jobs = jobs;
    opt.log = &err;
    const auto res = pipeline::run_benchmark(cfg, opt);
    out << "threshold(beta=3) " << res.t3 << "\n";
    for (const auto& r : res.runs) {
        out << r.surrogate << " " << r.strategy << " N=" << r.n_ed << ": eps_bar " << r.eps_bar << ", beta(t3) "
            << r.beta_t3 << " (ref " << r.beta_ref_t3 << "), max|dbeta| " << r.max_dbeta << "\n";
    }
    out << "artifacts in " << res.dir.string() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Surrogate modelling and first-passage reliability for nonlinear dynamical systems", "dynsur"};
    app.require_subcommand(1);
    std::size_t jobs = default_jobs();
    app.add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);

    GenArgs gen;
    auto* c_gen = app.add_subcommand("gen-excitation", "Sample excitation realizations");
    c_gen->add_option("--model", gen.model)->required()->check(CLI::IsMember({"harmonic", "ground-motion"}));
    c_gen->add_option("--config", gen.config, "Excitation spec (JSON)");
    c_gen->add_option("--n", gen.n)->required()->check(CLI::PositiveNumber);
    c_gen->add_option("--seed", gen.seed);
    c_gen->add_option("--out", gen.out)->required();

    SimArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Run the reference simulator");
    c_sim->add_option("--system", sim.system)->required()->check(CLI::IsMember({"quarter-car", "bouc-wen"}));
    c_sim->add_option("--params", sim.params, "System parameters (JSON)");
    c_sim->add_option("--excitation", sim.excitation, "Excitation CSV or directory")->required();
    c_sim->add_option("--out", sim.out)->required();

    DesignArgs des;
    auto* c_des = app.add_subcommand("design", "Select an experimental design from a candidate pool");
    c_des->add_option("--pool", des.pool)->required();
    c_des->add_option("--strategy", des.strategy)->required()->check(CLI::IsMember({"random", "biased"}));
    c_des->add_option("--n", des.n)->required();
    c_des->add_option("--seed", des.seed);
    c_des->add_option("--out", des.out)->required();

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "Train a surrogate");
    c_fit->add_option("--arch", fit.arch)->required()->check(CLI::IsMember({"narx", "mnarx", "fnarx"}));
    c_fit->add_option("--config", fit.config, "Surrogate spec or run preset")->required();
    c_fit->add_option("--ed", fit.ed, "Directory of training scenario CSVs")->required();
    c_fit->add_option("--surrogate", fit.surrogate, "Surrogate name when --config is a run preset");
    c_fit->add_option("--out", fit.out)->required();

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Forecast with a trained surrogate");
    c_pred->add_option("--model", pred.model)->required();
    c_pred->add_option("--excitation", pred.excitation)->required();
    c_pred->add_option("--out", pred.out)->required();

    ReliabilityArgs rel;
    auto* c_rel = app.add_subcommand("reliability", "Monte Carlo first-passage curve from a surrogate");
    c_rel->add_option("--model", rel.model)->required();
    c_rel->add_option("--excitation-spec", rel.excitation_spec)->required();
    c_rel->add_option("--n-mcs", rel.n_mcs)->check(CLI::Range(std::size_t{2}, std::size_t{100000000}));
    c_rel->add_option("--thresholds", rel.thresholds, "lo:hi:count or comma-separated list")->required();
    c_rel->add_option("--seed", rel.seed);
    c_rel->add_option("--mode", rel.mode)->check(CLI::IsMember({"absolute", "signed"}));
    c_rel->add_option("--out", rel.out)->required();

    ValidateArgs val;
    auto* c_val = app.add_subcommand("validate", "Compare a surrogate with reference simulations");
    c_val->add_option("--model", val.model)->required();
    c_val->add_option("--reference", val.reference)->required();
    c_val->add_option("--mode", val.mode)->check(CLI::IsMember({"absolute", "signed"}));
    c_val->add_option("--n-thresholds", val.thresholds);
    c_val->add_option("--out", val.out)->required();

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("benchmark", "End-to-end study from a preset");
    c_bench->add_option("name", bench.name, "quarter-car, bouc-wen or a preset path")->required();
    c_bench->add_flag("--quick", bench.quick, "Small pool and validation ensemble");
    c_bench->add_option("--out", bench.out, "Output root");
    c_bench->add_option("--seed", bench.seed);
    c_bench->add_option("--n-mcs", bench.n_mcs);
    c_bench->add_option("--pool-size", bench.pool_size);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (c_gen->parsed()) {
            cmd_gen_excitation(gen, jobs, out);
        } else if (c_sim->parsed()) {
            cmd_simulate(sim, jobs, out);
        } else if (c_des->parsed()) {
            cmd_design(des, out);
        } else if (c_fit->parsed()) {
            cmd_fit(fit, jobs, out);
        } else if (c_pred->parsed()) {
            cmd_predict(pred, jobs, out);
        } else if (c_rel->parsed()) {
            cmd_reliability(rel, jobs, out);
        } else if (c_val->parsed()) {
            cmd_validate(val, jobs, out);
        } else if (c_bench->parsed()) {
            cmd_benchmark(bench, jobs, out, err);
        }
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        // ConfigError and the shape / size errors caused by bad inputs
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("dynsur");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dynsur::cli
