#include "catch_amalgamated.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/excitation.hpp"
#include "dynsur/simulators.hpp"

#include <cmath>

using namespace dynsur;
using namespace dynsur::sim;

namespace {

double max_abs(const Trajectory& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    return m;
}

double max_diff(const Trajectory& a, const Trajectory& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

Trajectory sine(double amp, double omega, double dt, std::size_t n, std::string label) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = amp * std::sin(omega * dt * static_cast<double>(k));
    return Trajectory(TimeGrid(0.0, dt, n), std::move(v), std::move(label));
}

}  // namespace

TEST_CASE("quarter-car at rest stays at rest", "[simulators]") {
    Trajectory x(TimeGrid(0.0, 0.01, 3001), std::vector<double>(3001, 0.0), "x");
    auto r = simulate_quarter_car({}, x);
    CHECK(max_abs(r.at("y1")) == 0.0);
    CHECK(max_abs(r.at("y2")) == 0.0);
    CHECK(r.at("y1_dot").size() == 3001);
}

TEST_CASE("quarter-car settles on a constant road offset", "[simulators]") {
    // The suspension spring is purely cubic, so the body creeps towards the offset
    // algebraically; once inertia is negligible d' = -(k2/c) d^3, i.e. d^-2 grows at 2 k2 / c.
    const double x0 = 0.3;
    const std::size_t n = 60001;
    Trajectory x(TimeGrid(0.0, 0.01, n), std::vector<double>(n, x0), "x");
    auto r = simulate_quarter_car({}, x);
    const auto& y1 = r.at("y1");
    const auto& y2 = r.at("y2");
    CHECK(y1[n - 1] == Catch::Approx(x0).margin(1e-6));
    const double d60 = std::abs(y2[6000] - x0);
    const double d600 = std::abs(y2[n - 1] - x0);
    const QuarterCarParams p;
    CHECK(d600 < d60);
    CHECK(1.0 / (d600 * d600) - 1.0 / (d60 * d60) == Catch::Approx(2.0 * p.k2 / p.c * 540.0).epsilon(0.03));
}

TEST_CASE("quarter-car step halving agrees to 1e-6", "[simulators]") {
    excitation::HarmonicSuperpositionSpec spec;
    auto x = excitation::sample_harmonic(spec, 5);
    SimOptions fine;
    fine.substeps = 4;
    auto coarse = simulate_quarter_car({}, x);
    auto ref = simulate_quarter_car({}, x, fine);
    CHECK(max_diff(coarse.at("y2"), ref.at("y2")) <= 1e-6 * max_abs(ref.at("y2")));
}

TEST_CASE("RK4 self-convergence order", "[simulators]") {
    auto order = [](auto&& run, const std::string& label) {
        SimOptions o1, o2, o4;
        o2.substeps = 2;
        o4.substeps = 4;
        const auto a = run(o1).at(label);
        const auto b = run(o2).at(label);
        const auto c = run(o4).at(label);
        return std::log2(max_diff(a, b) / max_diff(b, c));
    };
    excitation::HarmonicSuperpositionSpec hs;
    const auto x = excitation::sample_harmonic(hs, 11);
    const double p_qc = order([&](const SimOptions& o) { return simulate_quarter_car({}, x, o); }, "y2");
    CHECK(p_qc >= 3.9);

    // Coarse grid so the truncation error dominates round-off.
    const auto a = sine(2.0, 9.0, 0.05, 601, "xdd");
    const double p_bw = order([&](const SimOptions& o) { return simulate_bouc_wen({}, a, o); }, "y");
    CHECK(p_bw >= 3.9);
}

TEST_CASE("quarter-car bounded for bounded roads", "[simulators]") {
    excitation::HarmonicSuperpositionSpec spec;
    for (std::uint64_t s = 0; s < 50; ++s) {
        auto r = simulate_quarter_car({}, excitation::sample_harmonic(spec, s));
        CHECK(std::isfinite(max_abs(r.at("y2"))));
        CHECK(max_abs(r.at("y2")) < 10.0);
    }
}

TEST_CASE("bouc-wen at rest stays at rest", "[simulators]") {
    Trajectory a(TimeGrid(0.0, 0.02, 1501), std::vector<double>(1501, 0.0), "xdd");
    auto r = simulate_bouc_wen({}, a);
    CHECK(max_abs(r.at("y")) == 0.0);
    CHECK(max_abs(r.at("z")) == 0.0);
}

TEST_CASE("bouc-wen hysteretic variable respects its analytic bound", "[simulators]") {
    BoucWenParams p;
    CHECK(p.z_bound() == Catch::Approx(0.01));
    SimOptions opt;
    opt.check_invariants = true;
    excitation::GroundMotionSpec gm;
    excitation::GroundMotionGenerator gen(gm);
    double zmax = 0.0;
    for (std::uint64_t s = 0; s < 30; ++s) {
        auto v = gen.sample(s).values();
        for (double& x : v) x *= 3.0;
        auto r = simulate_bouc_wen(p, Trajectory(gm.grid, v, "xdd"), opt);
        zmax = std::max(zmax, max_abs(r.at("z")));
    }
    CHECK(zmax <= 0.01 * (1.0 + 1e-9));
    CHECK(zmax > 0.008);
}

TEST_CASE("bouc-wen small amplitude matches the linearized oscillator", "[simulators]") {
    BoucWenParams p;
    const double k_eff = p.omega * p.omega * (p.rho + (1.0 - p.rho) * p.gamma);
    const double w = 3.0;
    const double amp = 1e-3;
    const double dt = 0.02;
    const std::size_t n = 7501;
    auto r = simulate_bouc_wen(p, sine(amp, w, dt, n, "xdd"));
    const auto& y = r.at("y");
    double ss = 0.0;
    for (std::size_t k = n - 1000; k < n; ++k) ss = std::max(ss, std::abs(y[k]));
    const double expected = amp / std::sqrt(std::pow(k_eff - w * w, 2) + std::pow(2 * p.zeta * p.omega * w, 2));
    CHECK(ss == Catch::Approx(expected).epsilon(0.02));
}

TEST_CASE("simulator error handling", "[simulators]") {
    QuarterCarParams q;
    q.k1 = 0.0;
    CHECK_THROWS_AS(q.validate(), ConfigError);
    BoucWenParams b;
    b.n = 0.5;
    CHECK_THROWS_AS(b.validate(), ConfigError);

    SimOptions tiny;
    tiny.overflow_guard = 1e-3;
    excitation::HarmonicSuperpositionSpec spec;
    CHECK_THROWS_AS(simulate_quarter_car({}, excitation::sample_harmonic(spec, 1), tiny), DivergenceError);

    SimOptions zero;
    zero.substeps = 0;
    CHECK_THROWS_AS(simulate_quarter_car({}, excitation::sample_harmonic(spec, 1), zero), ConfigError);
}
