#include "catch_amalgamated.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/model_io.hpp"
#include "dynsur/narx.hpp"

#include <cmath>
#include <random>

using namespace dynsur;
using namespace dynsur::narx;

namespace {

const TimeGrid kGrid(0.0, 0.01, 3001);

std::vector<double> noise(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (double& x : v) x = d(g);
    return v;
}

// Smooth random input: a few sines with random frequencies and phases.
std::vector<double> smooth_input(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n, 0.0);
    for (int h = 0; h < 4; ++h) {
        const double a = u(g), f = 0.2 + 2.0 * u(g), p = 6.28 * u(g);
        for (std::size_t k = 0; k < n; ++k) v[k] += a * std::sin(6.2832 * f * 0.01 * static_cast<double>(k) + p);
    }
    return v;
}

// y(t) = 0.9 y(t-1) + 0.5 x(t)
Scenario linear_scenario(std::uint64_t seed) {
    auto x = noise(kGrid.size(), seed);
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t t = 1; t < x.size(); ++t) y[t] = 0.9 * y[t - 1] + 0.5 * x[t];
    Scenario s;
    s.excitations.emplace_back(kGrid, x, "x");
    s.responses.emplace("y", Trajectory(kGrid, y, "y"));
    return s;
}

NarxSpec linear_spec() {
    NarxSpec s;
    s.output = "y";
    s.ar_lags = {1};
    s.exogenous = {{"x", {0}}};
    s.basis.max_degree = 1;
    return s;
}

double coefficient(const FittedStage& st, const regression::MultiIndex& a) {
    for (std::size_t k = 0; k < st.model.basis.size(); ++k)
        if (st.model.basis[k] == a) return st.model.theta[static_cast<Eigen::Index>(k)];
    return 0.0;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

// Two-stage chain: z is a linear filter of x, y is nonlinear in z and its own past.
Scenario chain_scenario(std::uint64_t seed, double noise_sd = 0.0) {
    auto x = smooth_input(kGrid.size(), seed);
    auto e = noise(kGrid.size(), seed + 100, noise_sd);
    std::vector<double> z(x.size(), 0.0), y(x.size(), 0.0);
    for (std::size_t t = 2; t < x.size(); ++t) {
        z[t] = 1.6 * z[t - 1] - 0.7 * z[t - 2] + 0.1 * x[t];
        y[t] = 0.6 * y[t - 1] + 0.3 * z[t] + 0.2 * z[t] * z[t] - 0.1 * y[t - 1] * z[t] + e[t];
    }
    Scenario s;
    s.excitations.emplace_back(kGrid, x, "x");
    s.responses.emplace("z", Trajectory(kGrid, z, "z"));
    s.responses.emplace("y", Trajectory(kGrid, y, "y"));
    return s;
}

std::vector<NarxSpec> chain_stages() {
    NarxSpec z;
    z.output = "z";
    z.ar_lags = {1, 2};
    z.exogenous = {{"x", {0}}};
    NarxSpec y;
    y.output = "y";
    y.ar_lags = {1};
    y.exogenous = {{"z", {0}}};
    y.basis.max_degree = 2;
    y.basis.max_interaction = 2;
    return {z, y};
}

}  // namespace

TEST_CASE("linear system is recovered and forecast exactly", "[narx]") {
    std::vector<Scenario> ed{linear_scenario(1), linear_scenario(2), linear_scenario(3)};
    auto m = fit_narx(ed, linear_spec());
    REQUIRE(m.stages.size() == 1);
    const auto& st = m.stages[0];
    CHECK(coefficient(st, {1, 0}) == Catch::Approx(0.9).margin(1e-8));
    CHECK(coefficient(st, {0, 1}) == Catch::Approx(0.5).margin(1e-8));
    CHECK(std::abs(coefficient(st, {0, 0})) <= 1e-8);
    CHECK(st.model.diagnostics.training_error <= 1e-20);

    auto fresh = linear_scenario(42);
    auto pred = forecast_qoi(m, fresh);
    CHECK(max_abs_diff(pred.values(), fresh.responses.at("y").values()) <= 1e-8);
    CHECK(mean_forecast_error(m, std::vector<Scenario>{fresh}).mean <= 1e-16);
}

TEST_CASE("nonlinear in-basis chain is recovered exactly", "[narx]") {
    std::vector<Scenario> ed;
    for (std::uint64_t s = 0; s < 4; ++s) ed.push_back(chain_scenario(10 + s));
    auto m = fit_mnarx(ed, chain_stages());
    const auto& zs = m.stages[0];
    CHECK(coefficient(zs, {1, 0, 0}) == Catch::Approx(1.6).margin(1e-8));
    CHECK(coefficient(zs, {0, 1, 0}) == Catch::Approx(-0.7).margin(1e-8));
    CHECK(coefficient(zs, {0, 0, 1}) == Catch::Approx(0.1).margin(1e-8));
    const auto& ys = m.stages[1];
    CHECK(coefficient(ys, {1, 0}) == Catch::Approx(0.6).margin(1e-8));
    CHECK(coefficient(ys, {0, 1}) == Catch::Approx(0.3).margin(1e-8));
    CHECK(coefficient(ys, {0, 2}) == Catch::Approx(0.2).margin(1e-8));
    CHECK(coefficient(ys, {1, 1}) == Catch::Approx(-0.1).margin(1e-8));
    CHECK(std::abs(coefficient(ys, {2, 0})) <= 1e-8);

    auto fresh = chain_scenario(99);
    auto all = forecast(m, fresh);
    CHECK(max_abs_diff(all.at("z").values(), fresh.responses.at("z").values()) <= 1e-8);
    CHECK(max_abs_diff(all.at("y").values(), fresh.responses.at("y").values()) <= 1e-8);
}

TEST_CASE("chain of one stage is classical narx", "[narx]") {
    std::vector<Scenario> ed{chain_scenario(1, 1e-3), chain_scenario(2, 1e-3)};
    auto a = fit_narx(ed, chain_stages()[0]);
    auto b = fit_mnarx(ed, {chain_stages()[0]});
    CHECK(a.stages[0].model.basis == b.stages[0].model.basis);
    CHECK(a.stages[0].model.theta == b.stages[0].model.theta);
    auto fresh = chain_scenario(3);
    CHECK(forecast_qoi(a, fresh).values() == forecast_qoi(b, fresh).values());
}

TEST_CASE("teacher forcing never loses to recursion", "[narx]") {
    std::vector<Scenario> ed;
    for (std::uint64_t s = 0; s < 5; ++s) ed.push_back(chain_scenario(20 + s, 2e-3));
    auto m = fit_mnarx(ed, chain_stages());
    for (const auto& st : m.stages) {
        CHECK(st.diagnostics.teacher_forcing_violations == 0);
        REQUIRE(st.diagnostics.one_step_error.size() == ed.size());
        for (std::size_t i = 0; i < ed.size(); ++i)
            CHECK(st.diagnostics.one_step_error[i] <= st.diagnostics.recursive_error[i]);
    }

    // true auxiliary trajectories can only help the last stage
    std::vector<Scenario> val;
    for (std::uint64_t s = 0; s < 5; ++s) val.push_back(chain_scenario(50 + s, 2e-3));
    for (const auto& v : val) {
        const auto& truth = v.responses.at("y").values();
        ForecastOptions with_true;
        with_true.true_channels = {"z"};
        const double e_true = forecast_error(truth, forecast_qoi(m, v, with_true).values(), 0.0);
        const double e_rec = forecast_error(truth, forecast_qoi(m, v).values(), 0.0);
        CHECK(e_true <= e_rec * (1.0 + 1e-9));
    }
}

TEST_CASE("zero input and no constant give a zero forecast", "[narx]") {
    std::vector<Scenario> ed{chain_scenario(5, 1e-3), chain_scenario(6, 1e-3)};
    auto stages = chain_stages();
    for (auto& s : stages) s.basis.include_constant = false;
    auto m = fit_mnarx(ed, stages);
    Scenario rest;
    rest.excitations.emplace_back(kGrid, std::vector<double>(kGrid.size(), 0.0), "x");
    auto all = forecast(m, rest);
    for (const auto& [label, tr] : all)
        for (double v : tr.values()) CHECK(v == 0.0);
}

TEST_CASE("degenerate f-narx window equals classical narx", "[narx]") {
    std::vector<Scenario> ed;
    for (std::uint64_t s = 0; s < 3; ++s) ed.push_back(chain_scenario(30 + s, 1e-3));
    NarxSpec n;
    n.output = "y";
    n.ar_lags = {1};
    n.exogenous = {{"x", {0}}};
    FNarxSpec f;
    f.output = "y";
    f.channels = {{"x", 1}};
    f.ar_window = 1;
    f.pca_threshold = 1.0;
    auto mn = fit_narx(ed, n);
    auto mf = fit_fnarx(ed, {f}, {});
    REQUIRE(mf.stages[0].pca.size() == 2);
    for (const auto& p : mf.stages[0].pca) CHECK(p.n_features() == 1);
    CHECK(mn.stages[0].model.basis.size() == mf.stages[0].model.basis.size());
    auto fresh = chain_scenario(77, 1e-3);
    auto a = forecast_qoi(mn, fresh).values();
    auto b = forecast_qoi(mf, fresh).values();
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    CHECK(max_abs_diff(a, b) <= 1e-10 * scale);
}

TEST_CASE("linear system in feature space is forecast exactly", "[narx]") {
    // y(t) = 0.7 y(t-1) + sum_l w_l x(t-l), l < 5
    const double w[5] = {0.4, -0.2, 0.1, 0.3, -0.05};
    auto make = [&](std::uint64_t seed) {
        auto x = smooth_input(kGrid.size(), seed);
        auto e = noise(kGrid.size(), seed + 7, 0.3);
        for (std::size_t k = 0; k < x.size(); ++k) x[k] += e[k];
        std::vector<double> y(x.size(), 0.0);
        for (std::size_t t = 4; t < x.size(); ++t) {
            y[t] = 0.7 * y[t - 1];
            for (int l = 0; l < 5; ++l) y[t] += w[l] * x[t - l];
        }
        Scenario s;
        s.excitations.emplace_back(kGrid, x, "x");
        s.responses.emplace("y", Trajectory(kGrid, y, "y"));
        return s;
    };
    std::vector<Scenario> ed{make(1), make(2), make(3)};
    FNarxSpec f;
    f.output = "y";
    f.channels = {{"x", 5}};
    f.ar_window = 1;
    f.pca_threshold = 1.0;
    auto m = fit_fnarx(ed, {f}, {});
    CHECK(m.stages[0].pca[0].n_features() == 5);
    auto fresh = make(11);
    auto pred = forecast_qoi(m, fresh).values();
    const auto& truth = fresh.responses.at("y").values();
    double scale = 0.0;
    for (double v : truth) scale = std::max(scale, std::abs(v));
    CHECK(max_abs_diff(pred, truth) <= 1e-6 * scale);
}

TEST_CASE("forecast error normalization", "[narx]") {
    std::vector<double> y{1.0, 3.0, -2.0, 0.5, 4.0};
    CHECK(forecast_error(y, y, 0.0) == 0.0);
    std::vector<double> c(5, 2.0);
    CHECK(forecast_error(c, c, 1e-12) == 0.0);
    auto big = noise(100000, 4);
    double mean = 0.0;
    for (double v : big) mean += v / static_cast<double>(big.size());
    std::vector<double> flat(big.size(), mean);
    CHECK(forecast_error(big, flat, 1e-12) == Catch::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(forecast_error(y, std::vector<double>(4, 0.0), 0.0), DimensionError);
}

TEST_CASE("unstable forecasts surface as divergence", "[narx]") {
    std::vector<Scenario> ed{linear_scenario(1), linear_scenario(2)};
    auto m = fit_narx(ed, linear_spec());
    auto& st = m.stages[0];
    for (std::size_t k = 0; k < st.model.basis.size(); ++k)
        if (st.model.basis[k] == regression::MultiIndex{1, 0}) st.model.theta[static_cast<Eigen::Index>(k)] = 1.5;
    auto fresh = linear_scenario(3);
    try {
        forecast_qoi(m, fresh);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.stage() == "y");
        CHECK(e.step() > 1);
    }
    auto err = mean_forecast_error(m, std::vector<Scenario>{fresh, linear_scenario(4)});
    CHECK(err.diverged == 2);
    CHECK(std::isinf(err.mean));
}

TEST_CASE("forecast is deterministic across runs and thread counts", "[narx]") {
    std::vector<Scenario> ed;
    for (std::uint64_t s = 0; s < 4; ++s) ed.push_back(chain_scenario(60 + s, 1e-3));
    auto m1 = fit_mnarx(ed, chain_stages());
    auto m2 = fit_mnarx(ed, chain_stages());
    CHECK(m1.stages[1].model.theta == m2.stages[1].model.theta);
    auto fresh = chain_scenario(70, 1e-3);
    CHECK(forecast_qoi(m1, fresh).values() == forecast_qoi(m2, fresh).values());
    auto e1 = mean_forecast_error(m1, ed, 1e-12, 1);
    auto e3 = mean_forecast_error(m1, ed, 1e-12, 3);
    CHECK(e1.per_trace == e3.per_trace);
}

TEST_CASE("model files round trip", "[narx]") {
    std::vector<Scenario> ed{linear_scenario(1), linear_scenario(2)};
    auto base = fit_narx(ed, linear_spec());
    FNarxSpec f;
    f.output = "y";
    f.channels = {{"x", 4}};
    f.ar_window = 3;
    f.pca_threshold = 0.95;
    f.basis.max_degree = 2;
    f.basis.max_interaction = 2;
    auto fm = fit_fnarx(ed, {f}, {{"xi", "x"}});
    for (const auto* m : {&base, &fm}) {
        const auto j = io::model_to_json(*m);
        auto back = io::model_from_json(nlohmann::json::parse(j.dump()));
        CHECK(io::model_to_json(back) == j);
        auto fresh = linear_scenario(9);
        CHECK(forecast_qoi(back, fresh).values() == forecast_qoi(*m, fresh).values());
    }
    auto bad = io::model_to_json(base);
    bad.erase("stages");
    CHECK_THROWS_AS(io::model_from_json(bad), ConfigError);
}

TEST_CASE("model selection", "[narx]") {
    std::vector<Scenario> ed{linear_scenario(1), linear_scenario(2), linear_scenario(3)};
    SurrogateSpec good;
    good.architecture = Architecture::narx;
    good.stages = {linear_spec()};
    SurrogateSpec poor = good;
    // no autoregression: cannot reproduce the memory of the system
    std::get<NarxSpec>(poor.stages[0]).ar_lags.clear();

    auto one = select_model(ed, std::vector<SurrogateSpec>{poor});
    CHECK(one.best == 0);
    CHECK(std::isfinite(one.mean_errors[0]));
    CHECK(one.mean_errors[0] > 0.01);

    auto res = select_model(ed, std::vector<SurrogateSpec>{poor, good});
    CHECK(res.best == 1);
    CHECK(res.mean_errors[1] <= 1e-16);
    CHECK(res.mean_errors[1] < res.mean_errors[0]);
    double amp[3] = {0, 0, 0};
    for (int i = 0; i < 3; ++i)
        for (double v : ed[i].responses.at("y").values()) amp[i] = std::max(amp[i], std::abs(v));
    CHECK(res.selection_trace == static_cast<std::size_t>(std::max_element(amp, amp + 3) - amp));
    CHECK_THROWS_AS(select_model(ed, std::vector<SurrogateSpec>{}), ConfigError);
}

TEST_CASE("spec validation", "[narx]") {
    NarxSpec s = linear_spec();
    s.ar_lags = {0};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.ar_lags = {2, 1};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = linear_spec();
    s.exogenous = {{"missing", {0}}};
    std::vector<Scenario> ed{linear_scenario(1)};
    CHECK_THROWS_AS(fit_narx(ed, s), ConfigError);

    auto stages = chain_stages();
    std::swap(stages[0], stages[1]);
    SurrogateSpec bad;
    bad.architecture = Architecture::mnarx;
    bad.stages = {stages[0], stages[1]};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    FNarxSpec f;
    f.output = "y";
    f.channels = {{"x", 0}};
    CHECK_THROWS_AS(f.validate(), ConfigError);
    CHECK(parse_architecture("fnarx") == Architecture::fnarx);
    CHECK_THROWS_AS(parse_architecture("rnn"), ConfigError);
}
