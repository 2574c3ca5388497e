#include "dynsur/pipeline.hpp"

#include "dynsur/csv.hpp"
#include "dynsur/design.hpp"
#include "dynsur/errors.hpp"
#include "dynsur/model_io.hpp"
#include "dynsur/parallel.hpp"
#include "dynsur/rng.hpp"
#include "dynsur/simulators.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace dynsur::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBeta01 = 1.2815515655446004;  // -Phi^{-1}(0.1)

void say(const BenchmarkOptions& opt, const std::string& msg) {
    if (opt.log) {
        *opt.log << msg << std::endl;
    }
}

std::string fmt(double v) { return csv::format_double(v); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double beta_at(std::span<const double> maxima, double threshold) {
    return reliability::reliability_index(reliability::estimate_pf(maxima, threshold).pf);
}

double abs_diff(double a, double b) {
    if (a == b) {
        return 0.0;  // also covers matching infinities
    }
    return std::abs(a - b);
}

void write_maxima(const fs::path& path, std::span<const double> maxima, std::uint64_t master) {
    csv::Table t;
    t.header = {"index", "seed", "max_response"};
    t.rows.reserve(maxima.size());
    for (std::size_t i = 0; i < maxima.size(); ++i) {
        t.rows.push_back({std::to_string(i), std::to_string(validation_seed(master, i)), fmt(maxima[i])});
    }
    csv::write_table(path, t);
}

void write_errors(const fs::path& path, std::span<const double> per_trace) {
    csv::Table t;
    t.header = {"index", "error"};
    for (std::size_t i = 0; i < per_trace.size(); ++i) {
        t.rows.push_back({std::to_string(i), fmt(per_trace[i])});
    }
    csv::write_table(path, t);
}

json summary_to_json(const RunSummary& r) {
    json j;
    j["surrogate"] = r.surrogate;
    j["strategy"] = r.strategy;
    j["n_ed"] = r.n_ed;
    j["selected"] = r.selected;
    j["eps_bar"] = finite_or_null(r.eps_bar);
    j["n_divergent_validation"] = r.n_divergent_validation;
    j["n_divergent_mcs"] = r.n_divergent_mcs;
    j["beta_ref_t3"] = finite_or_null(r.beta_ref_t3);
    j["beta_t3"] = finite_or_null(r.beta_t3);
    j["rel_err_t3"] = finite_or_null(r.rel_err_t3);
    j["max_dbeta"] = finite_or_null(r.max_dbeta);
    j["dbeta_pf01"] = finite_or_null(r.dbeta_pf01);
    j["ks"] = r.ks;
    json m = json::object();
    for (const auto& [k, v] : r.max_abs) {
        m[k] = finite_or_null(v);
    }
    j["max_abs"] = m;
    j["model"] = r.model_file;
    return j;
}

void write_summary_csv(const fs::path& path, const std::vector<RunSummary>& runs) {
    std::set<std::string> labels;
    for (const auto& r : runs) {
        for (const auto& [k, v] : r.max_abs) {
            labels.insert(k);
        }
    }
    csv::Table t;
    t.header = {"surrogate", "strategy",   "n_ed", "selected", "eps_bar",    "n_divergent_validation",
                "n_divergent_mcs", "beta_ref_t3", "beta_t3", "rel_err_t3", "max_dbeta", "dbeta_pf01", "ks"};
    for (const auto& l : labels) {
        t.header.push_back("max_abs_" + l);
    }
    for (const auto& r : runs) {
        std::vector<std::string> row{r.surrogate,
                                     r.strategy,
                                     std::to_string(r.n_ed),
                                     r.selected,
                                     fmt(r.eps_bar),
                                     std::to_string(r.n_divergent_validation),
                                     std::to_string(r.n_divergent_mcs),
                                     fmt(r.beta_ref_t3),
                                     fmt(r.beta_t3),
                                     fmt(r.rel_err_t3),
                                     fmt(r.max_dbeta),
                                     fmt(r.dbeta_pf01),
                                     fmt(r.ks)};
        for (const auto& l : labels) {
            auto it = r.max_abs.find(l);
            row.push_back(it == r.max_abs.end() ? "" : fmt(it->second));
        }
        t.rows.push_back(std::move(row));
    }
    csv::write_table(path, t);
}

struct Reference {
    std::vector<double> maxima;
    std::map<std::string, double> max_abs;
    std::vector<Scenario> validation;
};

Reference reference_ensemble(const SystemModel& model, const config::RunConfig& cfg, std::size_t jobs) {
    const auto labels = model.config().response_labels();
    const std::size_t n = cfg.n_mcs;
    const std::size_t n_val = std::min(cfg.n_error_traces, n);
    Reference ref;
    ref.maxima.resize(n);
    ref.validation.resize(n_val);
    std::vector<double> abs_slots(n * labels.size(), 0.0);
    parallel_for(n, jobs, [&](std::size_t i) {
        Scenario s = model.simulate_seed(validation_seed(cfg.seed, i));
        ref.maxima[i] = reliability::max_response(s.channel(cfg.qoi), cfg.mode);
        for (std::size_t l = 0; l < labels.size(); ++l) {
            abs_slots[i * labels.size() + l] = reliability::max_response(s.channel(labels[l]));
        }
        if (i < n_val) {
            ref.validation[i] = std::move(s);
        }
    });
    for (std::size_t l = 0; l < labels.size(); ++l) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            m = std::max(m, abs_slots[i * labels.size() + l]);
        }
        ref.max_abs[labels[l]] = m;
    }
    return ref;
}

struct SurrogateEnsemble {
    std::vector<double> maxima;
    std::size_t diverged = 0;
};

SurrogateEnsemble surrogate_ensemble(const narx::FittedSurrogate& model, const SystemModel& sys,
                                     const config::RunConfig& cfg, std::size_t jobs) {
    SurrogateEnsemble out;
    out.maxima.resize(cfg.n_mcs);
    std::vector<char> div(cfg.n_mcs, 0);
    parallel_for(cfg.n_mcs, jobs, [&](std::size_t i) {
        Scenario s;
        s.excitations.push_back(sys.excitation(validation_seed(cfg.seed, i)));
        try {
            out.maxima[i] = reliability::max_response(narx::forecast_qoi(model, s), cfg.mode);
        } catch (const DivergenceError&) {
            out.maxima[i] = kInf;
            div[i] = 1;
        }
    });
    out.diverged = static_cast<std::size_t>(std::count(div.begin(), div.end(), 1));
    return out;
}

std::map<std::string, double> forecast_max_abs(const narx::FittedSurrogate& model, std::span<const Scenario> traces,
                                               std::size_t jobs) {
    std::vector<std::map<std::string, double>> slots(traces.size());
    parallel_for(traces.size(), jobs, [&](std::size_t i) {
        Scenario s;
        s.excitations = traces[i].excitations;
        try {
            for (const auto& [label, traj] : narx::forecast(model, s)) {
                slots[i][label] = reliability::max_response(traj);
            }
        } catch (const DivergenceError&) {
            for (const auto& st : model.stages) {
                slots[i][narx::stage_output(st.spec)] = kInf;
            }
        }
    });
    std::map<std::string, double> out;
    for (const auto& m : slots) {
        for (const auto& [k, v] : m) {
            out[k] = std::max(out[k], v);
        }
    }
    return out;
}

std::vector<double> threshold_grid(const config::RunConfig& cfg, std::span<const double> ref_maxima) {
    double lo = *std::min_element(ref_maxima.begin(), ref_maxima.end());
    double hi = *std::max_element(ref_maxima.begin(), ref_maxima.end());
    if (cfg.thresholds.lo) {
        lo = *cfg.thresholds.lo;
    }
    if (cfg.thresholds.hi) {
        hi = *cfg.thresholds.hi;
    }
    if (!(hi > lo)) {
        throw ConfigError("reliability: threshold range is empty");
    }
    return reliability::linspace(lo, hi, cfg.thresholds.count);
}

void write_manifest(const fs::path& dir, const config::RunConfig& cfg, const BenchmarkResult& res,
                    const std::string& status, const std::string& failed_stage, const std::string& error) {
    json m;
    m["schema"] = "dynsur.manifest/1";
    m["status"] = status;
    if (!failed_stage.empty()) {
        m["failed_stage"] = failed_stage;
        m["error"] = error;
    }
    m["config"] = config::run_to_json(cfg);
    m["thresholds"] = {{"beta3", res.t3}, {"beta_pf01", res.t01}};
    json ref = json::object();
    for (const auto& [k, v] : res.reference_max_abs) {
        ref[k] = v;
    }
    m["reference_max_abs"] = ref;
    m["runs"] = json::array();
    for (const auto& r : res.runs) {
        m["runs"].push_back(summary_to_json(r));
    }
    m["files"] = file_inventory(dir);
    io::write_json_file(dir / "manifest.json", m);
}

}  // namespace

SystemModel::SystemModel(config::SystemConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.system == config::System::bouc_wen) {
        ground_motion_ = std::make_shared<const excitation::GroundMotionGenerator>(cfg_.ground_motion);
    } else {
        cfg_.harmonic.validate();
    }
}

Trajectory SystemModel::excitation(std::uint64_t seed) const {
    if (ground_motion_) {
        return ground_motion_->sample(seed, "xdd");
    }
    return excitation::sample_harmonic(cfg_.harmonic, seed, "x");
}

double SystemModel::amplitude(const Trajectory& x) const { return excitation::max_abs_amplitude(x); }

Scenario SystemModel::simulate(const Trajectory& x) const {
    sim::SimResult r = cfg_.system == config::System::quarter_car
                           ? sim::simulate_quarter_car(cfg_.quarter_car, x, cfg_.sim)
                           : sim::simulate_bouc_wen(cfg_.bouc_wen, x, cfg_.sim);
    Scenario s;
    s.excitations.push_back(x);
    for (const auto& label : cfg_.response_labels()) {
        s.responses.emplace(label, r.at(label));
    }
    return s;
}

std::uint64_t validation_seed(std::uint64_t master, std::size_t i) {
    return derive_seed(derive_seed(master, "validation"), static_cast<std::uint64_t>(i));
}

const RunSummary* BenchmarkResult::find(const std::string& surrogate, const std::string& strategy,
                                        std::size_t n_ed) const {
    for (const auto& r : runs) {
        if (r.surrogate == surrogate && r.strategy == strategy && r.n_ed == n_ed) {
            return &r;
        }
    }
    return nullptr;
}

BenchmarkResult run_benchmark(const config::RunConfig& cfg, const BenchmarkOptions& options) {
    cfg.validate();
    const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
    BenchmarkResult res;
    res.dir = cfg.output_dir / cfg.name;
    std::string stage = "setup";
    try {
        if (fs::exists(res.dir / "manifest.json")) {
            fs::remove_all(res.dir);  // stale files would end up in the inventory
        }
        fs::create_directories(res.dir / "models");
        const SystemModel sys(cfg.system);

        stage = "pool";
        say(options, "pool: " + std::to_string(cfg.pool_size) + " candidates");
        const design::CandidatePool pool = design::build_pool(
            cfg.pool_size, derive_seed(cfg.seed, "pool"), [&](std::uint64_t s) { return sys.excitation(s); },
            [&](const Trajectory& x) { return sys.amplitude(x); }, jobs);
        design::write_pool(res.dir / "pool.csv", pool.entries);

        stage = "design";
        std::map<std::pair<design::Strategy, std::size_t>, std::vector<std::size_t>> designs;
        std::set<std::size_t> needed;
        for (auto strategy : cfg.strategies) {
            for (std::size_t n : cfg.n_ed) {
                const std::string tag = design::to_string(strategy) + "_" + std::to_string(n);
                auto ids = design::select(pool, strategy, n, derive_seed(cfg.seed, "design/" + tag));
                std::vector<design::PoolEntry> rows;
                for (auto id : ids) {
                    rows.push_back(pool.by_id(id));
                    needed.insert(id);
                }
                design::write_pool(res.dir / ("design_" + tag + ".csv"), rows);
                designs[{strategy, n}] = std::move(ids);
            }
        }

        stage = "simulate";
        say(options, "simulate: " + std::to_string(needed.size()) + " training traces");
        const std::vector<std::size_t> needed_ids(needed.begin(), needed.end());
        std::vector<Scenario> sims(needed_ids.size());
        parallel_for(needed_ids.size(), jobs,
                     [&](std::size_t k) { sims[k] = sys.simulate_seed(pool.by_id(needed_ids[k]).seed); });
        std::map<std::size_t, const Scenario*> by_id;
        for (std::size_t k = 0; k < needed_ids.size(); ++k) {
            by_id[needed_ids[k]] = &sims[k];
        }

        stage = "reference";
        say(options, "reference: " + std::to_string(cfg.n_mcs) + " simulator runs");
        Reference ref = reference_ensemble(sys, cfg, jobs);
        res.reference_maxima = ref.maxima;
        res.reference_max_abs = ref.max_abs;
        write_maxima(res.dir / "reference_maxima.csv", ref.maxima, cfg.seed);
        res.t3 = reliability::threshold_at_beta(ref.maxima, 3.0);
        res.t01 = reliability::threshold_at_beta(ref.maxima, kBeta01);
        const std::vector<double> thresholds = threshold_grid(cfg, ref.maxima);
        const auto ref_curve = reliability::pf_curve(ref.maxima, thresholds);
        reliability::write_curve(res.dir / "curve_reference.csv", ref_curve);
        reliability::write_summary(res.dir / "hist_reference.csv", res.dir / "cdf_reference.csv",
                                   reliability::response_summary(ref.maxima, cfg.bins));
        const double beta_ref_t3 = beta_at(ref.maxima, res.t3);
        const double beta_ref_t01 = beta_at(ref.maxima, res.t01);

        for (const auto& entry : cfg.surrogates) {
            for (auto strategy : cfg.strategies) {
                if (!entry.strategies.empty() && !entry.strategies.count(strategy)) {
                    continue;
                }
                for (std::size_t n : cfg.n_ed) {
                    if (!entry.n_ed.empty() && std::find(entry.n_ed.begin(), entry.n_ed.end(), n) == entry.n_ed.end()) {
                        continue;
                    }
                    const std::string tag = entry.name + "_" + design::to_string(strategy) + "_" + std::to_string(n);
                    stage = "fit/" + tag;
                    say(options, "fit: " + tag);
                    std::vector<Scenario> ed;
                    for (auto id : designs.at({strategy, n})) {
                        ed.push_back(*by_id.at(id));
                    }
                    RunSummary run;
                    run.surrogate = entry.name;
                    run.strategy = design::to_string(strategy);
                    run.n_ed = n;
                    narx::FittedSurrogate model;
                    const std::uint64_t fit_seed = derive_seed(cfg.seed, "fit/" + tag);
                    if (entry.candidates.empty()) {
                        narx::SurrogateSpec spec = entry.spec;
                        spec.training.seed = fit_seed;
                        model = narx::fit_surrogate(ed, spec);
                        run.selected = "spec";
                    } else {
                        std::vector<narx::SurrogateSpec> cands = entry.candidates;
                        for (auto& c : cands) {
                            c.training.seed = fit_seed;
                        }
                        auto sel = narx::select_model(ed, cands, jobs);
                        model = std::move(sel.model);
                        run.selected = "candidate_" + std::to_string(sel.best);
                        csv::Table t;
                        t.header = {"candidate", "mean_error"};
                        for (std::size_t c = 0; c < sel.mean_errors.size(); ++c) {
                            t.rows.push_back({std::to_string(c), fmt(sel.mean_errors[c])});
                        }
                        csv::write_table(res.dir / ("selection_" + tag + ".csv"), t);
                    }
                    run.model_file = "models/" + tag + ".json";
                    io::save_model(res.dir / run.model_file, model);

                    stage = "validate/" + tag;
                    const auto err = narx::mean_forecast_error(model, ref.validation, 1e-12, jobs);
                    run.eps_bar = err.mean;
                    run.n_divergent_validation = err.diverged;
                    run.max_abs = forecast_max_abs(model, ref.validation, jobs);
                    write_errors(res.dir / ("errors_" + tag + ".csv"), err.per_trace);

                    stage = "mcs/" + tag;
                    say(options, "mcs: " + tag);
                    const auto ens = surrogate_ensemble(model, sys, cfg, jobs);
                    run.n_divergent_mcs = ens.diverged;
                    write_maxima(res.dir / ("maxima_" + tag + ".csv"), ens.maxima, cfg.seed);
                    const auto curve = reliability::pf_curve(ens.maxima, thresholds);
                    reliability::write_curve(res.dir / ("curve_" + tag + ".csv"), curve);
                    reliability::write_summary(res.dir / ("hist_" + tag + ".csv"), res.dir / ("cdf_" + tag + ".csv"),
                                               reliability::response_summary(ens.maxima, cfg.bins));

                    run.beta_ref_t3 = beta_ref_t3;
                    run.beta_t3 = beta_at(ens.maxima, res.t3);
                    run.rel_err_t3 = abs_diff(run.beta_t3, beta_ref_t3) / beta_ref_t3;
                    run.dbeta_pf01 = abs_diff(beta_at(ens.maxima, res.t01), beta_ref_t01);
                    run.max_dbeta = 0.0;
                    for (std::size_t k = 0; k < thresholds.size(); ++k) {
                        if (ref_curve.pf[k] >= 1e-3 && ref_curve.pf[k] <= 1e-1) {
                            run.max_dbeta = std::max(run.max_dbeta, abs_diff(curve.beta[k], ref_curve.beta[k]));
                        }
                    }
                    run.ks = reliability::ks_distance(ens.maxima, ref.maxima);
                    std::ostringstream msg;
                    msg << "  eps_bar " << run.eps_bar << ", beta(t3) " << run.beta_t3 << " vs " << beta_ref_t3
                        << ", max dbeta " << run.max_dbeta << ", diverged " << run.n_divergent_mcs;
                    say(options, msg.str());
                    res.runs.push_back(std::move(run));
                }
            }
        }

        stage = "manifest";
        write_summary_csv(res.dir / "summary.csv", res.runs);
        write_manifest(res.dir, cfg, res, "ok", "", "");
    } catch (const std::exception& e) {
        say(options, "benchmark: stage '" + stage + "' failed: " + e.what());
        try {
            write_summary_csv(res.dir / "summary.csv", res.runs);
            write_manifest(res.dir, cfg, res, "failed", stage, e.what());
        } catch (const std::exception&) {
            // the original error is the one worth reporting
        }
        throw;
    }
    return res;
}

ValidationReport validate_model(const narx::FittedSurrogate& model, std::span<const Scenario> reference,
                                reliability::FailureMode mode, std::size_t n_thresholds, std::size_t jobs) {
    if (reference.empty()) {
        throw SizeError("validate: no reference scenarios");
    }
    const TimeGrid& grid = reference.front().grid();
    for (const auto& s : reference) {
        s.validate();
        if (!(s.grid() == grid)) {
            throw DimensionError("validate: reference scenarios live on different time grids");
        }
    }
    ValidationReport rep;
    const auto err = narx::mean_forecast_error(model, reference, 1e-12, jobs);
    rep.per_trace = err.per_trace;
    rep.eps_bar = err.mean;
    rep.diverged = err.diverged;

    const std::string& qoi = model.qoi();
    std::vector<double> ref_max(reference.size());
    std::vector<double> sur_max(reference.size());
    parallel_for(reference.size(), jobs, [&](std::size_t i) {
        ref_max[i] = reliability::max_response(reference[i].channel(qoi), mode);
        Scenario s;
        s.excitations = reference[i].excitations;
        try {
            sur_max[i] = reliability::max_response(narx::forecast_qoi(model, s), mode);
        } catch (const DivergenceError&) {
            sur_max[i] = kInf;
        }
    });
    rep.ks = reliability::ks_distance(sur_max, ref_max);
    const double lo = *std::min_element(ref_max.begin(), ref_max.end());
    double hi = *std::max_element(ref_max.begin(), ref_max.end());
    if (!(hi > lo)) {
        hi = lo + 1.0;
    }
    const auto thresholds = reliability::linspace(lo, hi, std::max<std::size_t>(2, n_thresholds));
    rep.reference = reliability::pf_curve(ref_max, thresholds);
    rep.surrogate = reliability::pf_curve(sur_max, thresholds);
    return rep;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw IoError("sha256: digest initialization failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) {
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return hex.str();
}

json file_inventory(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") {
            files.push_back(fs::relative(e.path(), dir));
        }
    }
    std::sort(files.begin(), files.end());
    json out = json::object();
    for (const auto& f : files) {
        out[f.generic_string()] = sha256_file(dir / f);
    }
    return out;
}

}  // namespace dynsur::pipeline
