#include "dynsur/regression.hpp"

#include "dynsur/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dynsur::regression {

namespace {

// Saturating binomial coefficient; large values only matter for the cap check.
double binomial(std::size_t n, std::size_t k) {
    if (k > n) {
        return 0.0;
    }
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    }
    return r;
}

double count_terms(const BasisSpec& spec) {
    double total = spec.include_constant ? 1.0 : 0.0;
    const std::size_t n = spec.n_regressors;
    for (int d = 1; d <= spec.max_degree; ++d) {
        const std::size_t kmax = std::min<std::size_t>({static_cast<std::size_t>(spec.max_interaction), n,
                                                        static_cast<std::size_t>(d)});
        for (std::size_t k = 1; k <= kmax; ++k) {
            // k nonzero exponents summing to d: choose the variables, then compose d into k parts.
            total += binomial(n, k) * binomial(static_cast<std::size_t>(d - 1), k - 1);
        }
    }
    return total;
}

void enumerate_degree(std::size_t var, int remaining, int nonzero_left, MultiIndex& current,
                      std::vector<MultiIndex>& out) {
    const std::size_t n = current.size();
    if (var + 1 == n) {
        if (remaining > 0 && nonzero_left == 0) {
            return;
        }
        current[var] = remaining;
        out.push_back(current);
        current[var] = 0;
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        if (e > 0 && nonzero_left == 0) {
            continue;
        }
        current[var] = e;
        enumerate_degree(var + 1, remaining - e, nonzero_left - (e > 0 ? 1 : 0), current, out);
    }
    current[var] = 0;
}

}  // namespace

void BasisSpec::validate() const {
    if (n_regressors < 1) {
        throw ConfigError("basis: at least one regressor required");
    }
    if (max_degree < 1) {
        throw ConfigError("basis: max_degree must be >= 1");
    }
    if (max_interaction < 1 || static_cast<std::size_t>(max_interaction) > n_regressors) {
        std::ostringstream msg;
        msg << "basis: max_interaction must lie in [1, n_regressors = " << n_regressors << "], got "
            << max_interaction;
        throw ConfigError(msg.str());
    }
}

std::size_t count_basis(const BasisSpec& spec) {
    spec.validate();
    const double c = count_terms(spec);
    if (c > 1e18) {
        return static_cast<std::size_t>(-1);
    }
    return static_cast<std::size_t>(std::llround(c));
}

std::vector<MultiIndex> enumerate_basis(const BasisSpec& spec) {
    spec.validate();
    const double total = count_terms(spec);
    if (total > static_cast<double>(spec.max_size)) {
        std::ostringstream msg;
        msg << "basis: " << total << " terms exceed the cap of " << spec.max_size
            << " (n_regressors = " << spec.n_regressors << ", degree = " << spec.max_degree
            << ", interaction = " << spec.max_interaction << "); lower the degree or interaction";
        throw BasisExplosionError(msg.str());
    }
    std::vector<MultiIndex> out;
    out.reserve(static_cast<std::size_t>(total));
    MultiIndex current(spec.n_regressors, 0);
    if (spec.include_constant) {
        out.push_back(current);
    }
    for (int d = 1; d <= spec.max_degree; ++d) {
        enumerate_degree(0, d, spec.max_interaction, current, out);
    }
    return out;
}

int degree(const MultiIndex& index) {
    int d = 0;
    for (int e : index) {
        d += e;
    }
    return d;
}

CompiledBasis::CompiledBasis(std::span<const MultiIndex> basis) {
    offsets_.push_back(0);
    for (const auto& idx : basis) {
        if (n_regressors_ == 0) {
            n_regressors_ = idx.size();
        } else if (idx.size() != n_regressors_) {
            throw DimensionError("basis: multi-indices of different lengths");
        }
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0) {
                throw ConfigError("basis: negative exponent");
            }
            if (idx[i] > 0) {
                vars_.push_back(static_cast<int>(i));
                exps_.push_back(idx[i]);
                max_exponent_ = std::max(max_exponent_, idx[i]);
            }
        }
        offsets_.push_back(vars_.size());
    }
}

const double* CompiledBasis::fill_powers(std::span<const double> row) const {
    // Per-thread scratch so a shared basis can be evaluated concurrently.
    thread_local std::vector<double> powers;
    const std::size_t stride = static_cast<std::size_t>(max_exponent_ + 1);
    powers.resize(n_regressors_ * stride);
    for (std::size_t i = 0; i < n_regressors_; ++i) {
        double* p = powers.data() + i * stride;
        p[0] = 1.0;
        for (int e = 1; e <= max_exponent_; ++e) {
            p[e] = p[e - 1] * row[i];
        }
    }
    return powers.data();
}

void CompiledBasis::evaluate(std::span<const double> row, std::span<double> out) const {
    if (row.size() != n_regressors_ || out.size() != size()) {
        throw DimensionError("basis evaluation: row or output length mismatch");
    }
    const std::size_t stride = static_cast<std::size_t>(max_exponent_ + 1);
    const double* powers = fill_powers(row);
    for (std::size_t j = 0; j + 1 < offsets_.size(); ++j) {
        double v = 1.0;
        for (std::size_t q = offsets_[j]; q < offsets_[j + 1]; ++q) {
            v *= powers[static_cast<std::size_t>(vars_[q]) * stride + static_cast<std::size_t>(exps_[q])];
        }
        out[j] = v;
    }
}

double CompiledBasis::dot(std::span<const double> row, const Vector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != size()) {
        throw DimensionError("basis dot: coefficient count mismatch");
    }
    if (row.size() != n_regressors_) {
        throw DimensionError("basis evaluation: row length mismatch");
    }
    const std::size_t stride = static_cast<std::size_t>(max_exponent_ + 1);
    const double* powers = fill_powers(row);
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < offsets_.size(); ++j) {
        double v = 1.0;
        for (std::size_t q = offsets_[j]; q < offsets_[j + 1]; ++q) {
            v *= powers[static_cast<std::size_t>(vars_[q]) * stride + static_cast<std::size_t>(exps_[q])];
        }
        acc += theta[static_cast<Eigen::Index>(j)] * v;
    }
    return acc;
}

Matrix CompiledBasis::evaluate_rows(const Matrix& regressors) const {
    if (static_cast<std::size_t>(regressors.cols()) != n_regressors_) {
        throw DimensionError("basis evaluation: regressor matrix has wrong column count");
    }
    const Eigen::Index n = regressors.rows();
    Matrix out(n, static_cast<Eigen::Index>(size()));
    std::vector<double> row(n_regressors_);
    std::vector<double> vals(size());
    for (Eigen::Index r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < n_regressors_; ++i) {
            row[i] = regressors(r, static_cast<Eigen::Index>(i));
        }
        evaluate(row, vals);
        for (std::size_t j = 0; j < vals.size(); ++j) {
            out(r, static_cast<Eigen::Index>(j)) = vals[j];
        }
    }
    return out;
}

Vector evaluate_basis(std::span<const MultiIndex> basis, std::span<const double> row) {
    if (basis.empty()) {
        return Vector();
    }
    CompiledBasis cb(basis);
    Vector out(static_cast<Eigen::Index>(cb.size()));
    cb.evaluate(row, std::span<double>(out.data(), cb.size()));
    return out;
}

Matrix evaluate_basis_matrix(std::span<const MultiIndex> basis, const Matrix& regressors) {
    return CompiledBasis(basis).evaluate_rows(regressors);
}

Vector fit_ols(const Matrix& design, const Vector& y, double max_condition) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (y.size() != n) {
        throw DimensionError("ols: output length differs from design rows");
    }
    if (p == 0) {
        return Vector();
    }
    if (n < p) {
        std::ostringstream msg;
        msg << "ols: " << n << " rows for " << p << " columns";
        throw DimensionError(msg.str());
    }
    Vector scale = design.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!(scale[j] > 0.0) || !std::isfinite(scale[j])) {
            std::ostringstream msg;
            msg << "ols: column " << j << " is zero or non-finite";
            throw SingularityError(msg.str());
        }
    }
    const Matrix scaled = design * scale.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<Matrix> qr(scaled);
    const auto& r = qr.matrixR();
    const double r0 = std::abs(r(0, 0));
    std::vector<Eigen::Index> weak;
    for (Eigen::Index k = 0; k < p; ++k) {
        if (!(std::abs(r(k, k)) * max_condition >= r0)) {
            weak.push_back(qr.colsPermutation().indices()[k]);
        }
    }
    if (!weak.empty()) {
        std::sort(weak.begin(), weak.end());
        std::ostringstream msg;
        msg << "ols: design is rank deficient (condition estimate above " << max_condition
            << "); dependent columns:";
        for (auto c : weak) {
            msg << ' ' << c;
        }
        throw SingularityError(msg.str());
    }
    Vector theta = qr.solve(y);
    return theta.cwiseQuotient(scale);
}

}  // namespace dynsur::regression
