#include "catch_amalgamated.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/features.hpp"

#include <cmath>
#include <random>

using namespace dynsur;
using namespace dynsur::features;

namespace {

Matrix gaussian(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> d;
    Matrix m(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) m(i, j) = d(g);
    return m;
}

Matrix standardize(const PcaMap& map, const Matrix& rows) {
    Matrix z = rows;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        z.col(j).array() -= map.mu[j];
        z.col(j) /= map.sigma[j];
    }
    return z;
}

}  // namespace

TEST_CASE("rank one data keeps one component", "[features]") {
    Vector pattern(6);
    pattern << 1, -2, 0.5, 3, 1, -1;
    Vector a = gaussian(200, 1, 1).col(0);
    Matrix rows = a * pattern.transpose();
    rows.rowwise() += Eigen::RowVectorXd::LinSpaced(6, 10, 20);
    PcaMap m = fit_pca(rows, 0.99);
    CHECK(m.n_features() == 1);
    CHECK(m.explained == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("isotropic two-column data keeps both components", "[features]") {
    // exactly uncorrelated columns with equal variance
    Matrix rows(4, 2);
    rows << 1, 1, 1, -1, -1, 1, -1, -1;
    PcaMap m = fit_pca(rows, 0.9);
    CHECK(m.n_features() == 2);
    CHECK(m.eigvals[0] == Catch::Approx(1.0));
    CHECK(m.eigvals[1] == Catch::Approx(1.0));
}

TEST_CASE("correlated pair recovers 1+rho and 1-rho", "[features]") {
    const double rho = 0.8;
    Matrix z = gaussian(10000, 2, 7);
    Matrix rows(10000, 2);
    rows.col(0) = 3.0 * z.col(0).array() + 1.0;
    rows.col(1) = -2.0 + 0.5 * (rho * z.col(0) + std::sqrt(1 - rho * rho) * z.col(1)).array();
    PcaMap m = fit_pca(rows, 1.0);
    REQUIRE(m.n_features() == 2);
    CHECK(std::abs(m.eigvals[0] - (1 + rho)) <= 0.05);
    CHECK(std::abs(m.eigvals[1] - (1 - rho)) <= 0.05);
    CHECK((m.eigvecs.transpose() * m.eigvecs - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("pca invariants on windowed data", "[features]") {
    // Windows of a smooth random signal, like the F-NARX memory windows.
    Vector w = gaussian(3000, 1, 11).col(0);
    Vector s = Vector::Zero(3000);
    for (Eigen::Index t = 1; t < 3000; ++t) s[t] = 0.97 * s[t - 1] + w[t];
    Matrix rows(2950, 50);
    for (Eigen::Index r = 0; r < 2950; ++r)
        for (Eigen::Index c = 0; c < 50; ++c) rows(r, c) = s[r + 49 - c];
    for (double nu : {0.9, 0.99, 0.999}) {
        PcaMap m = fit_pca(rows, nu);
        const Eigen::Index k = static_cast<Eigen::Index>(m.n_features());
        CHECK(m.explained >= nu);
        // smallest such count
        const double total = m.spectrum.sum();
        CHECK(total == Catch::Approx(50.0).epsilon(1e-6));
        CHECK(m.spectrum.head(k - 1).sum() / total < nu);
        CHECK((m.eigvecs.transpose() * m.eigvecs - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() <= 1e-8);
        for (Eigen::Index i = 1; i < k; ++i) CHECK(m.eigvals[i] <= m.eigvals[i - 1]);
        CHECK(m.eigvals.minCoeff() >= 0.0);
        for (Eigen::Index j = 0; j < k; ++j) {
            Eigen::Index arg;
            m.eigvecs.col(j).cwiseAbs().maxCoeff(&arg);
            CHECK(m.eigvecs(arg, j) > 0.0);
        }

        Matrix f = project(m, rows);
        REQUIRE(f.rows() == rows.rows());
        REQUIRE(f.cols() == k);
        // feature covariance is diag(eigvals)
        Matrix fc = f.rowwise() - f.colwise().mean();
        Matrix cov = fc.transpose() * fc / static_cast<double>(rows.rows() - 1);
        Matrix want = m.eigvals.asDiagonal();
        CHECK((cov - want).cwiseAbs().maxCoeff() <= 1e-6 * m.eigvals[0]);

        // squared reconstruction error in standardized units is the discarded variance
        Matrix rec = reconstruct(m, f);
        Matrix z = standardize(m, rows);
        Matrix zr = standardize(m, rec);
        const double rel = (z - zr).squaredNorm() / z.squaredNorm();
        CHECK(rel <= 1.0 - m.explained + 1e-8);
        CHECK(rel == Catch::Approx(1.0 - m.explained).margin(1e-8));
    }
}

TEST_CASE("projection is affine and centered", "[features]") {
    Matrix rows = gaussian(500, 5, 3);
    rows.col(1) += 2.0 * rows.col(0);
    PcaMap m = fit_pca(rows, 0.95);
    Matrix mean_row = m.mu.transpose();
    CHECK(project(m, mean_row).cwiseAbs().maxCoeff() <= 1e-12);
    Matrix r1 = rows.topRows(1);
    Matrix r2 = rows.bottomRows(1);
    const double a = 0.3;
    Matrix lhs = project(m, a * r1 + (1 - a) * r2);
    Matrix rhs = a * project(m, r1) + (1 - a) * project(m, r2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(project(m, Matrix::Zero(2, 4)), DimensionError);
}

TEST_CASE("constant columns are masked", "[features]") {
    Matrix rows = gaussian(100, 4, 5);
    rows.col(2).setConstant(7.0);
    PcaMap m = fit_pca(rows, 1.0);
    CHECK(m.mask[2] == 0);
    CHECK(m.sigma[2] == 1.0);
    CHECK(m.eigvecs.row(2).cwiseAbs().maxCoeff() == 0.0);
    Matrix rec = reconstruct(m, project(m, rows));
    CHECK((rec.col(2).array() - 7.0).abs().maxCoeff() <= 1e-12);
    CHECK((rec - rows).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK_THROWS_AS(fit_pca(Matrix::Constant(10, 3, 1.0), 0.9), DegenerateDataError);
}

TEST_CASE("pca is deterministic", "[features]") {
    Matrix rows = gaussian(300, 8, 21);
    PcaMap a = fit_pca(rows, 0.9);
    PcaMap b = fit_pca(rows, 0.9);
    CHECK(a.eigvecs == b.eigvecs);
    CHECK(a.eigvals == b.eigvals);
}

TEST_CASE("compress input", "[features]") {
    const TimeGrid grid(0.0, 0.01, 400);
    Vector s1(400), s2(400);
    for (Eigen::Index t = 0; t < 400; ++t) {
        s1[t] = std::sin(0.05 * t);
        s2[t] = std::cos(0.13 * t) + 0.2 * std::sin(0.41 * t);
    }

    SECTION("scalar input is standardized") {
        Matrix x = (2.0 * s1.array() + 5.0).matrix();
        auto c = compress_input(x, grid, 0.99);
        REQUIRE(c.reduced.size() == 1);
        const double mu = x.mean();
        const double sd = std::sqrt((x.array() - mu).square().sum() / 399.0);
        for (std::size_t t = 0; t < 400; t += 37)
            CHECK(c.reduced[0][t] == Catch::Approx((x(t, 0) - mu) / sd).margin(1e-12));
        CHECK(c.reduced[0].label() == "xr0");
    }
    SECTION("separable field has one mode") {
        Vector a = Vector::LinSpaced(12, 0.5, 3.0);
        Matrix x = s1 * a.transpose();
        auto c = compress_input(x, grid, 0.99);
        REQUIRE(c.reduced.size() == 1);
        // proportional to s1
        Vector r = Eigen::Map<const Vector>(c.reduced[0].values().data(), 400);
        const double corr = (r.array() - r.mean()).matrix().dot((s1.array() - s1.mean()).matrix()) /
                            ((r.array() - r.mean()).matrix().norm() * (s1.array() - s1.mean()).matrix().norm());
        CHECK(std::abs(corr) == Catch::Approx(1.0).margin(1e-10));
    }
    SECTION("two-mode field is reconstructed") {
        Vector a = Vector::LinSpaced(20, -1.0, 2.0);
        Vector b = Vector::LinSpaced(20, 1.0, 1.5).array().square();
        Matrix x = s1 * a.transpose() + s2 * b.transpose();
        auto c = compress_input(x, grid, 0.999);
        REQUIRE(c.reduced.size() == 2);
        Matrix f(400, 2);
        for (int k = 0; k < 2; ++k)
            for (Eigen::Index t = 0; t < 400; ++t) f(t, k) = c.reduced[k][static_cast<std::size_t>(t)];
        Matrix rec = reconstruct(c.map, f);
        CHECK((rec - x).norm() / x.norm() <= 1e-6);
    }
}
