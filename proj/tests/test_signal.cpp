#include "catch_amalgamated.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/rng.hpp"
#include "dynsur/signal.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace dynsur;

namespace {

Trajectory series(std::vector<double> v) {
    const std::size_t n = v.size();
    return Trajectory(TimeGrid(0.0, 0.1, n), std::move(v), "v");
}

// Model-independent copy of the sampler: mt19937_64 + rejection, then Fisher-Yates.
std::vector<std::size_t> reference_draw(std::size_t total, std::size_t count, bool replace, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    auto idx = [&](std::size_t n) {
        const std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t d;
        do {
            d = g();
        } while (d >= lim);
        return static_cast<std::size_t>(d % n);
    };
    std::vector<std::size_t> out;
    if (replace) {
        for (std::size_t k = 0; k < count; ++k) out.push_back(idx(total));
        return out;
    }
    std::vector<std::size_t> p(total);
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t k = 0; k < count; ++k) std::swap(p[k], p[k + idx(total - k)]);
    p.resize(count);
    return p;
}

}  // namespace

TEST_CASE("time grid computes times without accumulation", "[signal]") {
    TimeGrid g(0.0, 0.01, 3001);
    CHECK(g.time(3000) == 0.0 + 3000 * 0.01);
    CHECK(g.t_max() == Catch::Approx(30.0));
    CHECK(TimeGrid::covering(0.0, 0.01, 30.0).size() == 3001);
    CHECK(TimeGrid::covering(0.0, 0.02, 30.0).size() == 1501);
    CHECK_THROWS_AS(TimeGrid(0.0, 0.0, 10), ConfigError);
    CHECK_THROWS_AS(TimeGrid(0.0, 0.1, 1), ConfigError);
}

TEST_CASE("trajectory rejects bad values", "[signal]") {
    CHECK_THROWS_AS(Trajectory(TimeGrid(0, 1, 3), {1, 2}, "x"), DimensionError);
    CHECK_THROWS_AS(Trajectory(TimeGrid(0, 1, 3), {1, std::nan(""), 2}, "x"), NumericalError);
    CHECK_THROWS_AS(Trajectory(TimeGrid(0, 1, 2), {1, std::numeric_limits<double>::infinity()}, "x"),
                    NumericalError);
}

TEST_CASE("lagged matrix examples", "[signal]") {
    std::vector<std::size_t> l0{0};
    auto m = build_lagged_matrix(series({1, 2, 3}), l0, 0);
    REQUIRE(m.rows.rows() == 3);
    REQUIRE(m.rows.cols() == 1);
    CHECK(m.rows(0, 0) == 1);
    CHECK(m.rows(2, 0) == 3);

    std::vector<std::size_t> l12{1, 2};
    auto m2 = build_lagged_matrix(series({1, 2, 3, 4, 5}), l12, 2);
    Matrix want(3, 2);
    want << 2, 1, 3, 2, 4, 3;
    CHECK(m2.rows == want);
    CHECK(m2.t_min_index == 2);

    std::vector<double> v(57);
    std::iota(v.begin(), v.end(), 0.0);
    std::vector<std::size_t> l{0, 3, 7};
    auto m3 = build_lagged_matrix(series(v), l, 9);
    CHECK(m3.rows.rows() == 57 - 9);
    for (Eigen::Index r = 0; r < m3.rows.rows(); ++r) {
        for (std::size_t c = 0; c < l.size(); ++c) {
            CHECK(m3.rows(r, static_cast<Eigen::Index>(c)) == v[9 + r - l[c]]);
        }
    }
}

TEST_CASE("lagged matrix errors", "[signal]") {
    std::vector<std::size_t> none;
    std::vector<std::size_t> big{3};
    std::vector<std::size_t> unsorted{2, 1};
    auto t = series({1, 2, 3, 4});
    CHECK_THROWS_AS(build_lagged_matrix(t, none, 0), ConfigError);
    CHECK_THROWS_AS(build_lagged_matrix(t, big, 2), ConfigError);
    CHECK_THROWS_AS(build_lagged_matrix(t, unsorted, 2), ConfigError);
}

TEST_CASE("concat and subsample", "[signal]") {
    Design a{Matrix::Constant(3, 2, 1.0), Vector::Constant(3, 1.0)};
    Design b{Matrix::Constant(3, 2, 2.0), Vector::Constant(3, 2.0)};
    std::vector<Design> blocks{a, b};
    auto s = concat_designs(blocks);
    REQUIRE(s.matrix.rows() == 6);
    CHECK(s.matrix(2, 0) == 1.0);
    CHECK(s.matrix(3, 1) == 2.0);
    CHECK(s.output[5] == 2.0);

    std::vector<Design> one{a};
    CHECK(concat_designs(one).matrix == a.matrix);

    std::vector<Design> bad{a, Design{Matrix::Zero(2, 3), Vector::Zero(2)}};
    CHECK_THROWS_AS(concat_designs(bad), DimensionError);

    std::vector<std::size_t> all(6);
    std::iota(all.begin(), all.end(), 0);
    auto same = subsample_rows(s, all);
    CHECK(same.matrix == s.matrix);
    CHECK(same.output == s.output);

    Design c{Matrix(3, 1), Vector(3)};
    c.matrix << 10, 11, 12;
    c.output << 0, 1, 2;
    std::vector<std::size_t> perm{2, 0};
    auto p = subsample_rows(c, perm);
    CHECK(p.matrix(0, 0) == 12);
    CHECK(p.output[1] == 0);

    std::vector<std::size_t> oob{3};
    CHECK_THROWS_AS(subsample_rows(c, oob), IndexError);
}

TEST_CASE("seeded row draws match an independent sampler", "[signal]") {
    for (std::uint64_t seed : {1ULL, 42ULL, 987654321ULL}) {
        CHECK(draw_row_indices(5000, 300, SubsampleMode::uniform_with_replacement, seed) ==
              reference_draw(5000, 300, true, seed));
        CHECK(draw_row_indices(5000, 300, SubsampleMode::uniform_without_replacement, seed) ==
              reference_draw(5000, 300, false, seed));
    }
    auto s = draw_row_indices(10, 5, SubsampleMode::strided, 0);
    CHECK(s == std::vector<std::size_t>{0, 2, 4, 6, 8});
    CHECK_THROWS_AS(draw_row_indices(3, 4, SubsampleMode::uniform_without_replacement, 1), SizeError);
}

TEST_CASE("trapezoid integral of a line", "[signal]") {
    std::vector<double> v(101);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = 2.0 * 0.01 * static_cast<double>(k);
    auto t = Trajectory(TimeGrid(0.0, 0.01, v.size()), v, "a");
    auto i = cumulative_trapezoid(t, "b");
    CHECK(i[0] == 0.0);
    CHECK(i[100] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("seconds to steps", "[signal]") {
    CHECK(seconds_to_steps(0.02, 0.01) == 2);
    CHECK(seconds_to_steps(1.0, 0.02) == 50);
    CHECK_THROWS_AS(seconds_to_steps(0.015, 0.01), ConfigError);
}

TEST_CASE("seed derivation separates streams", "[signal]") {
    CHECK(derive_seed(1, "pool") != derive_seed(1, "design"));
    CHECK(derive_seed(1, std::uint64_t{0}) != derive_seed(1, std::uint64_t{1}));
    CHECK(derive_seed(7, "fit/x") == derive_seed(7, "fit/x"));
}
