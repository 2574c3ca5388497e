#include "dynsur/errors.hpp"
#include "dynsur/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dynsur::regression {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Modified Gram-Schmidt QR of the active columns, grown one column at a time.
class IncrementalQr {
public:
    IncrementalQr(Eigen::Index rows, Eigen::Index capacity) : q_(rows, capacity), r_(capacity, capacity) {
        r_.setZero();
    }

    Eigen::Index size() const noexcept { return m_; }
    auto q() const { return q_.leftCols(m_); }
    auto r() const { return r_.topLeftCorner(m_, m_); }

    void clear() {
        m_ = 0;
        r_.setZero();
    }

    // Returns false (and leaves the factorization untouched) when the column is numerically
    // in the span of the current ones.
    bool push(const Eigen::Ref<const Vector>& column, double collinearity_tol) {
        if (m_ == q_.cols()) {
            grow();
        }
        Vector v = column;
        Vector coeff = Vector::Zero(m_);
        for (int pass = 0; pass < 2; ++pass) {
            if (m_ == 0) {
                break;
            }
            const Vector c = q_.leftCols(m_).transpose() * v;
            v.noalias() -= q_.leftCols(m_) * c;
            coeff += c;
        }
        const double rr = v.squaredNorm();
        const double ref = std::max(column.squaredNorm(), 1e-300);
        if (!(rr > collinearity_tol * ref)) {
            return false;
        }
        const double rd = std::sqrt(rr);
        r_.col(m_).head(m_) = coeff;
        r_(m_, m_) = rd;
        q_.col(m_) = v / rd;
        ++m_;
        return true;
    }

    // w = (R^T R)^{-1} s
    Vector solve_gram(const Vector& s) const {
        const auto rt = r().transpose().template triangularView<Eigen::Lower>();
        Vector z = rt.solve(s);
        return r().template triangularView<Eigen::Upper>().solve(z);
    }

    // ||R^{-1}||_F^2 = trace((R^T R)^{-1})
    double gram_inverse_trace() const {
        const Matrix eye = Matrix::Identity(m_, m_);
        const Matrix rinv = r().template triangularView<Eigen::Upper>().solve(eye);
        return rinv.squaredNorm();
    }

private:
    void grow() {
        const Eigen::Index cap = std::max<Eigen::Index>(4, 2 * q_.cols());
        Matrix q(q_.rows(), cap);
        q.leftCols(m_) = q_.leftCols(m_);
        Matrix r = Matrix::Zero(cap, cap);
        r.topLeftCorner(m_, m_) = r_.topLeftCorner(m_, m_);
        q_.swap(q);
        r_.swap(r);
    }

    Matrix q_;
    Matrix r_;
    Eigen::Index m_ = 0;
};

double sign_of(double v) { return v >= 0.0 ? 1.0 : -1.0; }

struct Selector {
    const LarsOptions& opt;
    const LarsPath& path;
    const Vector& y_centered;
    double var_y;
    std::size_t n_columns;

    // Corrected LOO error of the OLS fit on the current active set.
    double loo(const IncrementalQr& qr) const {
        const Eigen::Index n = y_centered.size();
        const bool intercept = path.intercept_column >= 0;
        const Eigen::Index m = qr.size();
        const double p = static_cast<double>(m) + (intercept ? 1.0 : 0.0);
        if (static_cast<double>(n) <= p) {
            return kInf;
        }
        Vector e = y_centered;
        Vector h = Vector::Constant(n, intercept ? 1.0 / static_cast<double>(n) : 0.0);
        if (m > 0) {
            const Vector qty = qr.q().transpose() * y_centered;
            e.noalias() -= qr.q() * qty;
            h += qr.q().rowwise().squaredNorm();
        }
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double denom = 1.0 - h[i];
            if (!(denom > 1e-12)) {
                return kInf;
            }
            const double d = e[i] / denom;
            acc += d * d;
        }
        const double nd = static_cast<double>(n);
        // Unit-norm columns: R^T R is the empirical covariance of unit-variance columns, so
        // trace(C_emp^{-1}) / n = ||R^{-1}||_F^2 / n.
        const double correction = nd / (nd - p) * (1.0 + (m > 0 ? qr.gram_inverse_trace() / nd : 0.0));
        return acc / nd * correction;
    }

    double holdout(const IncrementalQr& qr, const std::vector<std::size_t>& active) const {
        const Matrix& xh = *opt.holdout_design;
        const Vector& yh = *opt.holdout_output;
        LarsKnot k;
        k.active = active;
        if (qr.size() > 0) {
            const Vector qty = qr.q().transpose() * y_centered;
            k.beta_std = qr.r().template triangularView<Eigen::Upper>().solve(qty);
        }
        const auto [b0, coef] = destandardize(path, k, n_columns);
        const Vector pred = (xh * coef).array() + b0;
        return (yh - pred).squaredNorm() / static_cast<double>(yh.size());
    }

    double operator()(const IncrementalQr& qr, const std::vector<std::size_t>& active) const {
        if (opt.selection == LarsOptions::Selection::holdout) {
            return holdout(qr, active);
        }
        return loo(qr);
    }
};

}  // namespace

LarsPath lars_path(Matrix x, const Vector& y, const LarsOptions& opt) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (y.size() != n) {
        throw DimensionError("lars: output length differs from design rows");
    }
    if (n < 2 || p < 1) {
        throw DimensionError("lars: need at least two rows and one column");
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw NumericalError("lars: non-finite entries in design or output");
    }
    if (opt.selection == LarsOptions::Selection::holdout) {
        if (!opt.holdout_design || !opt.holdout_output || opt.holdout_design->cols() != p ||
            opt.holdout_design->rows() != opt.holdout_output->size() || opt.holdout_output->size() == 0) {
            throw ConfigError("lars: holdout selection requires a matching holdout design and output");
        }
    }

    LarsPath path;
    path.column_mean = Vector::Zero(p);
    path.column_scale = Vector::Ones(p);

    std::vector<char> constant(static_cast<std::size_t>(p), 0);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double first = x(0, j);
        if ((x.col(j).array() == first).all()) {
            constant[static_cast<std::size_t>(j)] = 1;
            if (path.intercept_column < 0 && first != 0.0) {
                path.intercept_column = j;
            }
        }
    }
    const bool intercept = path.intercept_column >= 0;
    const double nd = static_cast<double>(n);
    if (intercept) {
        path.y_mean = y.mean();
    }

    std::vector<char> excluded(static_cast<std::size_t>(p), 0);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (constant[static_cast<std::size_t>(j)]) {
            excluded[static_cast<std::size_t>(j)] = 1;
            if (j != path.intercept_column) {
                path.excluded_columns.push_back(static_cast<std::size_t>(j));
            }
            x.col(j).setZero();
            continue;
        }
        if (intercept) {
            path.column_mean[j] = x.col(j).mean();
            x.col(j).array() -= path.column_mean[j];
        }
        const double s = x.col(j).norm();
        if (!(s > 0.0)) {
            excluded[static_cast<std::size_t>(j)] = 1;
            path.excluded_columns.push_back(static_cast<std::size_t>(j));
            x.col(j).setZero();
            continue;
        }
        path.column_scale[j] = s;
        x.col(j) /= s;
    }

    const Vector y_centered = y.array() - path.y_mean;
    const double var_y = y_centered.squaredNorm() / nd;
    std::size_t max_terms = opt.max_terms;
    if (max_terms == 0) {
        max_terms = std::min<std::size_t>(static_cast<std::size_t>(n) / 2, 200);
    }
    max_terms = std::max<std::size_t>(max_terms, 1);

    Selector select{opt, path, y_centered, var_y, static_cast<std::size_t>(p)};
    IncrementalQr qr(n, static_cast<Eigen::Index>(std::min<std::size_t>(max_terms + 1, static_cast<std::size_t>(p))));

    Vector resid = y_centered;
    Vector c = x.transpose() * resid;
    std::vector<std::size_t> active;
    std::vector<char> is_active(static_cast<std::size_t>(p), 0);
    Vector beta = Vector::Zero(p);

    auto available = [&](Eigen::Index j) {
        return !excluded[static_cast<std::size_t>(j)] && !is_active[static_cast<std::size_t>(j)];
    };

    double c0 = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (available(j)) {
            c0 = std::max(c0, std::abs(c[j]));
        }
    }

    auto record = [&](double lambda) {
        LarsKnot k;
        k.active = active;
        k.beta_std.resize(static_cast<Eigen::Index>(active.size()));
        for (std::size_t i = 0; i < active.size(); ++i) {
            k.beta_std[static_cast<Eigen::Index>(i)] = beta[static_cast<Eigen::Index>(active[i])];
        }
        k.lambda = lambda;
        k.residual_norm = resid.norm();
        k.selection_error = select(qr, active);
        path.knots.push_back(std::move(k));
    };

    record(c0);
    // Nothing to explain: y is constant (or zero without intercept).
    if (!(c0 > 1e-300) || !(std::sqrt(var_y) > 1e-300)) {
        return path;
    }

    auto try_enter = [&](Eigen::Index j) {
        if (qr.push(x.col(j), opt.collinearity_tol)) {
            active.push_back(static_cast<std::size_t>(j));
            is_active[static_cast<std::size_t>(j)] = 1;
            return true;
        }
        excluded[static_cast<std::size_t>(j)] = 1;
        path.excluded_columns.push_back(static_cast<std::size_t>(j));
        return false;
    };

    auto rebuild = [&]() {
        qr.clear();
        std::vector<std::size_t> keep;
        for (std::size_t j : active) {
            if (qr.push(x.col(static_cast<Eigen::Index>(j)), opt.collinearity_tol)) {
                keep.push_back(j);
            } else {
                is_active[j] = 0;
                excluded[j] = 1;
                beta[static_cast<Eigen::Index>(j)] = 0.0;
                path.excluded_columns.push_back(j);
            }
        }
        active = std::move(keep);
    };

    // First entry: the column with maximal absolute correlation.
    {
        Eigen::Index best = -1;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (available(j) && (best < 0 || std::abs(c[j]) > std::abs(c[best]))) {
                best = j;
            }
        }
        while (best >= 0 && !try_enter(best)) {
            best = -1;
            for (Eigen::Index j = 0; j < p; ++j) {
                if (available(j) && (best < 0 || std::abs(c[j]) > std::abs(c[best]))) {
                    best = j;
                }
            }
        }
        if (best < 0) {
            return path;
        }
    }

    const std::size_t max_iterations = 8 * max_terms + 16;
    Eigen::Index just_dropped = -1;
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        const Eigen::Index m = static_cast<Eigen::Index>(active.size());
        double big_c = 0.0;
        Vector s(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double ci = c[static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])];
            s[i] = sign_of(ci);
            big_c = std::max(big_c, std::abs(ci));
        }
        Vector w = qr.solve_gram(s);
        const double sw = s.dot(w);
        if (!(sw > 0.0) || !std::isfinite(sw)) {
            throw NumericalError("lars: equiangular direction is undefined (ill-conditioned active set)");
        }
        const double big_a = 1.0 / std::sqrt(sw);
        w *= big_a;
        const Vector u = qr.q() * (qr.r() * w);
        const Vector a = x.transpose() * u;

        double gamma = big_c / big_a;
        Eigen::Index entering = -1;
        const double eps = 1e-13 * gamma;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (!available(j) || j == just_dropped) {
                continue;
            }
            const double d1 = big_a - a[j];
            const double d2 = big_a + a[j];
            if (d1 > 0.0) {
                const double g = (big_c - c[j]) / d1;
                if (g > eps && g < gamma) {
                    gamma = g;
                    entering = j;
                }
            }
            if (d2 > 0.0) {
                const double g = (big_c + c[j]) / d2;
                if (g > eps && g < gamma) {
                    gamma = g;
                    entering = j;
                }
            }
        }
        // Lasso modification: a coefficient crossing zero leaves the active set.
        Eigen::Index dropping = -1;
        for (Eigen::Index i = 0; i < m; ++i) {
            const double bi = beta[static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])];
            if (w[i] == 0.0) {
                continue;
            }
            const double g = -bi / w[i];
            if (g > eps && g < gamma) {
                gamma = g;
                dropping = i;
                entering = -1;
            }
        }

        for (Eigen::Index i = 0; i < m; ++i) {
            beta[static_cast<Eigen::Index>(active[static_cast<std::size_t>(i)])] += gamma * w[i];
        }
        resid.noalias() -= gamma * u;
        if (iter % 8 == 7) {
            c.noalias() = x.transpose() * resid;
        } else {
            c.noalias() -= gamma * a;
        }
        const double lambda = std::max(0.0, big_c - gamma * big_a);
        just_dropped = -1;

        if (dropping >= 0) {
            const std::size_t col = active[static_cast<std::size_t>(dropping)];
            beta[static_cast<Eigen::Index>(col)] = 0.0;
            is_active[col] = 0;
            active.erase(active.begin() + dropping);
            just_dropped = static_cast<Eigen::Index>(col);
            rebuild();
            record(lambda);
            if (active.empty()) {
                break;
            }
            continue;
        }
        if (entering < 0) {
            // Reached the least-squares fit on every available column.
            record(lambda);
            break;
        }
        if (active.size() >= max_terms) {
            record(lambda);
            path.truncated = lambda > opt.tol * c0;
            break;
        }
        try_enter(entering);
        record(lambda);
        if (lambda <= opt.tol * c0) {
            break;
        }
        if (iter + 1 == max_iterations) {
            path.truncated = true;
        }
    }
    return path;
}

std::pair<double, Vector> destandardize(const LarsPath& path, const LarsKnot& knot, std::size_t n_columns) {
    Vector coef = Vector::Zero(static_cast<Eigen::Index>(n_columns));
    double b0 = path.y_mean;
    for (std::size_t i = 0; i < knot.active.size(); ++i) {
        const auto j = static_cast<Eigen::Index>(knot.active[i]);
        const double cj = knot.beta_std[static_cast<Eigen::Index>(i)] / path.column_scale[j];
        coef[j] = cj;
        b0 -= cj * path.column_mean[j];
    }
    return {b0, coef};
}

std::size_t best_knot(const LarsPath& path, const Vector& y) {
    double best = kInf;
    for (const auto& k : path.knots) {
        best = std::min(best, k.selection_error);
    }
    const Vector yc = y.array() - y.mean();
    const double var_y = yc.squaredNorm() / static_cast<double>(y.size());
    if (std::isfinite(best)) {
        const double cutoff = best * (1.0 + 1e-9) + 1e-20 * var_y;
        for (std::size_t i = 0; i < path.knots.size(); ++i) {
            if (path.knots[i].selection_error <= cutoff) {
                return i;
            }
        }
    }
    return 0;
}

SparseModel refit_knot(const Matrix& design, const Vector& y, const LarsPath& path, std::size_t chosen) {
    if (chosen >= path.knots.size()) {
        throw IndexError("knot index beyond the lars path");
    }
    const LarsKnot& knot = path.knots[chosen];

    SparseModel model;
    model.columns = knot.active;
    if (path.intercept_column >= 0) {
        model.columns.push_back(static_cast<std::size_t>(path.intercept_column));
    }
    std::sort(model.columns.begin(), model.columns.end());

    Matrix sub(design.rows(), static_cast<Eigen::Index>(model.columns.size()));
    for (std::size_t i = 0; i < model.columns.size(); ++i) {
        sub.col(static_cast<Eigen::Index>(i)) = design.col(static_cast<Eigen::Index>(model.columns[i]));
    }
    model.theta = fit_ols(sub, y);

    model.diagnostics.path_length = path.knots.size();
    model.diagnostics.chosen_knot = chosen;
    model.diagnostics.chosen_lambda = knot.lambda;
    model.diagnostics.selection_error = knot.selection_error;
    model.diagnostics.truncated = path.truncated;
    const Vector res = model.columns.empty() ? Vector(y) : Vector(y - sub * model.theta);
    model.diagnostics.training_error = res.squaredNorm() / static_cast<double>(y.size());
    return model;
}

SparseModel fit_lars(const Matrix& design, const Vector& y, const LarsOptions& options) {
    const LarsPath path = lars_path(design, y, options);
    return refit_knot(design, y, path, best_knot(path, y));
}

}  // namespace dynsur::regression
