// Full-scale acceptance run. One [PASS]/[FAIL] line per criterion; exit status 1 if any fails.
#include "CLI11.hpp"

#include "dynsur/config.hpp"
#include "dynsur/design.hpp"
#include "dynsur/excitation.hpp"
#include "dynsur/features.hpp"
#include "dynsur/narx.hpp"
#include "dynsur/parallel.hpp"
#include "dynsur/pipeline.hpp"
#include "dynsur/regression.hpp"
#include "dynsur/reliability.hpp"
#include "dynsur/rng.hpp"
#include "dynsur/simulators.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

using namespace dynsur;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::size_t g_jobs = 1;
fs::path g_out;

config::RunConfig preset(const char* file) {
    return config::load_run_config(fs::path(DYNSUR_SOURCE_DIR) / "presets" / file);
}

std::string num(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

const pipeline::RunSummary& need(const pipeline::BenchmarkResult& r, const std::string& s, const std::string& strat,
                                 std::size_t n) {
    const auto* run = r.find(s, strat, n);
    if (!run) throw std::runtime_error("no run " + s + "_" + strat + "_" + std::to_string(n));
    return *run;
}

pipeline::BenchmarkResult benchmark(config::RunConfig cfg) {
    cfg.output_dir = g_out;
    pipeline::BenchmarkOptions o;
    o.jobs = g_jobs;
    o.log = &std::cerr;
    return pipeline::run_benchmark(cfg, o);
}

// quarter-car

Verdict ac1(const pipeline::BenchmarkResult& qc) {
    const auto& r = need(qc, "mnarx", "biased", 10);
    return {r.rel_err_t3 <= 0.08, "beta(t3) " + num(r.beta_t3) + " vs reference " + num(r.beta_ref_t3) +
                                      ", rel err " + num(r.rel_err_t3) + " (tol 0.08)"};
}

Verdict ac2(const pipeline::BenchmarkResult& qc) {
    std::ostringstream d;
    bool ok = true;
    for (const char* strat : {"random", "biased"}) {
        d << strat << " max|dbeta|";
        for (std::size_t n : {10u, 50u, 100u}) d << " " << n << ":" << num(need(qc, "mnarx", strat, n).max_dbeta);
        d << "; ";
        ok = ok && need(qc, "mnarx", strat, 100).max_dbeta < need(qc, "mnarx", strat, 10).max_dbeta;
    }
    const double b10 = need(qc, "mnarx", "biased", 10).max_dbeta;
    const double r10 = need(qc, "mnarx", "random", 10).max_dbeta;
    ok = ok && b10 < r10;
    d << "biased < random at 10: " << (b10 < r10 ? "yes" : "no");
    return {ok, d.str()};
}

Verdict ac3(const pipeline::BenchmarkResult& qc) {
    const auto& narx = need(qc, "narx", "random", 50);
    const auto& mnarx = need(qc, "mnarx", "random", 50);
    const bool ok = narx.eps_bar > mnarx.eps_bar && narx.dbeta_pf01 > 0.3;
    return {ok, "eps_bar narx " + num(narx.eps_bar) + " vs mnarx " + num(mnarx.eps_bar) + ", narx |dbeta| at pf 0.1 " +
                    num(narx.dbeta_pf01) + " (needs > 0.3)"};
}

// bouc-wen

Verdict ac4(const pipeline::BenchmarkResult& bw) {
    const auto& r = need(bw, "fnarx", "biased", 50);
    return {r.rel_err_t3 <= 0.18, "beta(t3) " + num(r.beta_t3) + " vs reference " + num(r.beta_ref_t3) +
                                      ", rel err " + num(r.rel_err_t3) + " (tol 0.18)"};
}

Verdict ac5(const pipeline::BenchmarkResult& bw, double bound) {
    const double ref = bw.reference_max_abs.at("z");
    const auto& r = need(bw, "fnarx", "biased", 50);
    const auto it = r.max_abs.find("z");
    const double sur = it == r.max_abs.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
    const bool ok = ref <= bound * (1.0 + 1e-12) && sur <= 1.2 * bound;
    return {ok, "bound " + num(bound) + ", reference max|z| " + num(ref) + ", surrogate max|z| " + num(sur) +
                    " (limit " + num(1.2 * bound) + ")"};
}

// property suite

Matrix gaussian(Eigen::Index n, Eigen::Index p, std::mt19937_64& g) {
    std::normal_distribution<double> d;
    Matrix m(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) m(i, j) = d(g);
    return m;
}

double ols_orthogonality() {
    std::mt19937_64 g(1);
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        Matrix x = gaussian(200, 12, g);
        x.col(0).setOnes();
        Vector y = gaussian(200, 1, g).col(0) + 3.0 * x.col(3);
        const Vector theta = regression::fit_ols(x, y);
        const Vector r = y - x * theta;
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            worst = std::max(worst, std::abs(x.col(j).dot(r)) / (x.col(j).norm() * y.norm()));
    }
    return worst;
}

// Cyclic coordinate descent on centered unit-norm columns.
Vector lasso_cd(const Matrix& xs, const Vector& yc, double lambda) {
    Vector b = Vector::Zero(xs.cols());
    Vector r = yc;
    for (int sweep = 0; sweep < 200000; ++sweep) {
        double change = 0.0;
        for (Eigen::Index j = 0; j < xs.cols(); ++j) {
            const double rho = xs.col(j).dot(r) + b[j];
            const double nb = rho > lambda ? rho - lambda : (rho < -lambda ? rho + lambda : 0.0);
            if (nb != b[j]) {
                r -= (nb - b[j]) * xs.col(j);
                change = std::max(change, std::abs(nb - b[j]));
                b[j] = nb;
            }
        }
        if (change < 1e-15) break;
    }
    return b;
}

double lars_vs_cd() {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        std::mt19937_64 g(500 + s);
        // leading constant column: the path is then taken on centered columns
        Matrix x(100, 21);
        x.col(0).setOnes();
        x.rightCols(20) = gaussian(100, 20, g);
        std::normal_distribution<double> d;
        Vector y = Vector::Constant(100, 0.3) + 0.5 * x.col(2) - 1.2 * x.col(7) + 0.8 * x.col(11);
        for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += 0.5 * d(g);
        const auto path = regression::lars_path(x, y);
        Matrix xs = x.rightCols(20);
        for (Eigen::Index j = 0; j < xs.cols(); ++j) {
            xs.col(j).array() -= xs.col(j).mean();
            xs.col(j) /= xs.col(j).norm();
        }
        Vector yc = y.array() - y.mean();
        for (const auto& knot : path.knots) {
            Vector lars = Vector::Zero(20);
            for (std::size_t i = 0; i < knot.active.size(); ++i)
                lars[static_cast<Eigen::Index>(knot.active[i]) - 1] = knot.beta_std[static_cast<Eigen::Index>(i)];
            worst = std::max(worst, (lasso_cd(xs, yc, knot.lambda) - lars).cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

std::pair<double, double> pca_checks() {
    std::mt19937_64 g(2);
    Matrix mix = gaussian(10, 10, g);
    const Matrix x = gaussian(2000, 10, g) * mix;
    const auto map = features::fit_pca(x, 1.0);
    const double ortho =
        (map.eigvecs.transpose() * map.eigvecs - Matrix::Identity(map.n_features(), map.n_features())).cwiseAbs().maxCoeff();

    // unit variances, correlation 0.8: eigenvalues 1.8 and 0.2
    std::normal_distribution<double> d;
    Matrix b(10000, 2);
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        const double u = d(g), v = d(g);
        b(i, 0) = u;
        b(i, 1) = 0.8 * u + 0.6 * v;
    }
    const auto m2 = features::fit_pca(b, 1.0);
    const double eig = std::max(std::abs(m2.spectrum[0] - 1.8), std::abs(m2.spectrum[1] - 0.2));
    return {ortho, eig};
}

double convergence_order(const std::function<Trajectory(const sim::SimOptions&)>& run) {
    sim::SimOptions o1, o2, o4;
    o2.substeps = 2;
    o4.substeps = 4;
    const auto a = run(o1), b = run(o2), c = run(o4);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        e1 = std::max(e1, std::abs(a[k] - b[k]));
        e2 = std::max(e2, std::abs(b[k] - c[k]));
    }
    return std::log2(e1 / e2);
}

std::pair<double, double> rk4_orders() {
    const auto x = excitation::sample_harmonic({}, 11);
    const double qc = convergence_order([&](const sim::SimOptions& o) { return sim::simulate_quarter_car({}, x, o).at("y2"); });
    // coarse grid so truncation error dominates round-off
    std::vector<double> acc(601);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] = 2.0 * std::sin(9.0 * 0.05 * static_cast<double>(k));
    const Trajectory a(TimeGrid(0.0, 0.05, acc.size()), acc, "xdd");
    const double bw = convergence_order([&](const sim::SimOptions& o) { return sim::simulate_bouc_wen({}, a, o).at("y"); });
    return {qc, bw};
}

// y(t) = 0.9 y(t-1) + 0.5 x(t) - 0.2 y(t-1) x(t)
double exact_recovery() {
    const TimeGrid grid(0.0, 0.01, 2001);
    std::vector<Scenario> ed;
    for (std::uint64_t s = 0; s < 3; ++s) {
        std::mt19937_64 g(40 + s);
        std::normal_distribution<double> d(0.0, 0.5);
        std::vector<double> x(grid.size()), y(grid.size(), 0.0);
        for (double& v : x) v = d(g);
        for (std::size_t t = 1; t < x.size(); ++t) y[t] = 0.9 * y[t - 1] + 0.5 * x[t] - 0.2 * y[t - 1] * x[t];
        Scenario sc;
        sc.excitations.emplace_back(grid, x, "x");
        sc.responses.emplace("y", Trajectory(grid, y, "y"));
        ed.push_back(std::move(sc));
    }
    narx::NarxSpec spec;
    spec.output = "y";
    spec.ar_lags = {1};
    spec.exogenous = {{"x", {0}}};
    spec.basis.max_degree = 2;
    spec.basis.max_interaction = 2;
    const auto m = narx::fit_narx(ed, spec);
    const auto& st = m.stages.at(0).model;
    const std::map<regression::MultiIndex, double> truth{{{1, 0}, 0.9}, {{0, 1}, 0.5}, {{1, 1}, -0.2}};
    double worst = 0.0;
    for (std::size_t k = 0; k < st.basis.size(); ++k) {
        const auto it = truth.find(st.basis[k]);
        worst = std::max(worst, std::abs(st.theta[static_cast<Eigen::Index>(k)] - (it == truth.end() ? 0.0 : it->second)));
    }
    for (const auto& [a, v] : truth)
        if (std::find(st.basis.begin(), st.basis.end(), a) == st.basis.end()) worst = std::max(worst, std::abs(v));
    return worst;
}

double beta_round_trip() {
    double worst = 0.0;
    for (int i = 0; i <= 600; ++i) {
        const double beta = 0.01 * i;
        worst = std::max(worst, std::abs(reliability::reliability_index(0.5 * std::erfc(beta / std::sqrt(2.0))) - beta));
    }
    return worst;
}

double biased_ks() {
    const auto cfg = preset("quarter_car.preset");
    const pipeline::SystemModel sys(cfg.system);
    const auto pool = design::build_pool(
        20000, 7, [&](std::uint64_t s) { return sys.excitation(s); },
        [&](const Trajectory& x) { return sys.amplitude(x); }, g_jobs);
    double lo = 1e300, hi = -1e300;
    for (const auto& e : pool.entries) {
        lo = std::min(lo, e.amplitude);
        hi = std::max(hi, e.amplitude);
    }
    std::vector<double> a;
    for (auto id : design::biased_select(pool, 100, 3)) a.push_back(pool.by_id(id).amplitude);
    return reliability::ks_uniform_statistic(a, lo, hi) * std::sqrt(100.0);
}

bool determinism() {
    auto small = [](const fs::path& dir) {
        auto c = preset("quarter_car.preset");
        c.name = "determinism";
        c.system.harmonic.grid = TimeGrid::covering(0.0, 0.01, 10.0);
        c.pool_size = 300;
        c.n_ed = {8};
        c.n_mcs = 1200;
        c.n_error_traces = 20;
        c.thresholds.count = 50;
        c.surrogates[0].candidates.resize(2);
        c.output_dir = dir;
        c.validate();
        return c;
    };
    fs::remove_all(g_out / "determinism_a");
    fs::remove_all(g_out / "determinism_b");
    pipeline::BenchmarkOptions serial, threaded;
    threaded.jobs = std::max<std::size_t>(2, g_jobs);
    const auto a = pipeline::run_benchmark(small(g_out / "determinism_a"), serial);
    const auto b = pipeline::run_benchmark(small(g_out / "determinism_b"), threaded);
    const auto again = pipeline::run_benchmark(small(g_out / "determinism_a"), threaded);
    const auto inv = pipeline::file_inventory(a.dir);
    return !inv.empty() && inv == pipeline::file_inventory(b.dir) && inv == pipeline::file_inventory(again.dir);
}

Verdict ac6() {
    const double ols = ols_orthogonality();
    const double lasso = lars_vs_cd();
    const auto [ortho, eig] = pca_checks();
    const auto [qc, bw] = rk4_orders();
    const double exact = exact_recovery();
    const double beta = beta_round_trip();
    const double ks = biased_ks();
    const bool det = determinism();
    std::ostringstream d;
    d << "ols " << num(ols) << ", lars-cd " << num(lasso) << ", pca ortho " << num(ortho) << " eig " << num(eig)
      << ", rk4 order " << num(qc) << "/" << num(bw) << ", exact " << num(exact) << ", beta " << num(beta)
      << ", ks*sqrt(n) " << num(ks) << ", determinism " << (det ? "ok" : "MISMATCH");
    const bool ok = ols <= 1e-8 && lasso <= 1e-6 && ortho <= 1e-8 && eig <= 0.05 && qc >= 3.9 && bw >= 3.9 &&
                    exact <= 1e-8 && beta <= 1e-9 && ks < 1.628 && det;
    return {ok, d.str()};
}

// ground motion

Verdict ac7() {
    const auto cfg = preset("bouc_wen.preset");
    const pipeline::SystemModel sys(cfg.system);
    const std::size_t n = 2000;
    std::vector<double> ia(n), d595(n);
    const std::uint64_t base = derive_seed(cfg.seed, "ground-motion-check");
    parallel_for(n, g_jobs, [&](std::size_t i) {
        const auto a = sys.excitation(derive_seed(base, i));
        ia[i] = excitation::arias_intensity(a);
        d595[i] = excitation::significant_duration(a);
    });
    double mi = 0.0, md = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mi += ia[i] / n;
        md += d595[i] / n;
    }
    const auto& g = cfg.system.ground_motion;
    const double ei = std::abs(mi / g.arias_intensity - 1.0);
    const double ed = std::abs(md / g.effective_duration - 1.0);
    return {ei <= 0.05 && ed <= 0.05, "mean Ia " + num(mi) + " s*g (target " + num(g.arias_intensity) + ", " +
                                          num(100 * ei) + "%), mean D5-95 " + num(md) + " s (target " +
                                          num(g.effective_duration) + ", " + num(100 * ed) + "%)"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria at full scale"};
    std::string out = "acceptance_runs";
    std::vector<int> only;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--out", out, "output directory for benchmark artifacts");
    app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 7));
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    g_out = out;
    g_jobs = jobs;
    fs::create_directories(g_out);

    const std::set<int> wanted = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7} : std::set<int>(only.begin(), only.end());
    std::optional<pipeline::BenchmarkResult> qc, bw;
    std::string qc_err, bw_err;
    auto quarter_car = [&]() -> const pipeline::BenchmarkResult& {
        if (!qc && qc_err.empty()) {
            try {
                qc = benchmark(preset("quarter_car.preset"));
            } catch (const std::exception& e) {
                qc_err = e.what();
            }
        }
        if (!qc) throw std::runtime_error("quarter-car benchmark failed: " + qc_err);
        return *qc;
    };
    auto bouc_wen = [&]() -> const pipeline::BenchmarkResult& {
        if (!bw && bw_err.empty()) {
            try {
                bw = benchmark(preset("bouc_wen.preset"));
            } catch (const std::exception& e) {
                bw_err = e.what();
            }
        }
        if (!bw) throw std::runtime_error("bouc-wen benchmark failed: " + bw_err);
        return *bw;
    };
    const double z_bound = preset("bouc_wen.preset").system.bouc_wen.z_bound();

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"AC1 quarter-car biased N=10 beta at reference beta=3", [&] { return ac1(quarter_car()); }},
        {"AC2 quarter-car biased vs random ED convergence", [&] { return ac2(quarter_car()); }},
        {"AC3 quarter-car NARX vs mNARX at N=50", [&] { return ac3(quarter_car()); }},
        {"AC4 bouc-wen F-NARX biased N=50 beta at reference beta=3", [&] { return ac4(bouc_wen()); }},
        {"AC5 bouc-wen hysteretic bound", [&] { return ac5(bouc_wen(), z_bound); }},
        {"AC6 property suite", [&] { return ac6(); }},
        {"AC7 ground-motion ensemble statistics", [&] { return ac7(); }},
    };

    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (!wanted.count(static_cast<int>(k + 1))) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !v.pass;
        std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << criteria[k].first << ": " << v.detail << " [" << num(secs)
                  << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
