#pragma once

#include "dynsur/signal.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace dynsur::regression {

struct BasisSpec {
    std::size_t n_regressors = 1;
    int max_degree = 1;
    /// Maximum number of distinct regressors in one term.
    int max_interaction = 1;
    bool include_constant = true;
    std::size_t max_size = 100000;

    void validate() const;
};

/// Exponent vector over the regressors.
using MultiIndex = std::vector<int>;

/// Graded lexicographic order: total degree ascending, then exponent vectors in descending
/// lexicographic order (phi1^2 before phi1*phi2 before phi2^2).
std::vector<MultiIndex> enumerate_basis(const BasisSpec& spec);

/// Number of terms enumerate_basis would produce, without materializing them.
std::size_t count_basis(const BasisSpec& spec);

int degree(const MultiIndex& index);

/// Product form of a basis for fast repeated evaluation.
class CompiledBasis {
public:
    CompiledBasis() = default;
    explicit CompiledBasis(std::span<const MultiIndex> basis);

    std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t n_regressors() const noexcept { return n_regressors_; }

    /// out[j] = prod_i row[i]^alpha_ji, with 0^0 = 1.
    void evaluate(std::span<const double> row, std::span<double> out) const;
    double dot(std::span<const double> row, const Vector& theta) const;
    /// One basis row per regressor row.
    Matrix evaluate_rows(const Matrix& regressors) const;

private:
    const double* fill_powers(std::span<const double> row) const;

    std::size_t n_regressors_ = 0;
    int max_exponent_ = 0;
    std::vector<std::size_t> offsets_;
    std::vector<int> vars_;
    std::vector<int> exps_;
};

Vector evaluate_basis(std::span<const MultiIndex> basis, std::span<const double> row);
Matrix evaluate_basis_matrix(std::span<const MultiIndex> basis, const Matrix& regressors);

/// Least squares by column-pivoted Householder QR on unit-norm columns.
/// Throws SingularityError listing the dependent columns when cond(R) > max_condition.
Vector fit_ols(const Matrix& design, const Vector& y, double max_condition = 1e12);

struct LarsOptions {
    enum class Selection { corrected_loo, holdout };

    /// 0 means min(rows / 2, 200).
    std::size_t max_terms = 0;
    /// Path stops once the maximal correlation falls below tol * initial correlation.
    double tol = 1e-10;
    /// Squared residual norm (relative to the unit column) under which an entering column is
    /// considered collinear with the active set and excluded.
    double collinearity_tol = 2e-10;
    Selection selection = Selection::corrected_loo;
    const Matrix* holdout_design = nullptr;
    const Vector* holdout_output = nullptr;
};

struct LarsKnot {
    /// Active columns (indices into the design) in order of entry.
    std::vector<std::size_t> active;
    /// Lasso coefficients of the active columns in the standardized problem.
    Vector beta_std;
    /// Penalty of the standardized lasso problem 1/2||y - Xb||^2 + lambda ||b||_1 at this knot.
    double lambda = 0.0;
    double residual_norm = 0.0;
    /// Corrected leave-one-out error of the OLS fit on `active` (or holdout error).
    double selection_error = std::numeric_limits<double>::infinity();
};

struct LarsPath {
    std::vector<LarsKnot> knots;
    /// Column centering (zero without intercept) and scaling used for the standardized problem.
    Vector column_mean;
    Vector column_scale;
    double y_mean = 0.0;
    /// First constant column of the design, if any; it acts as intercept and is never on the path.
    std::ptrdiff_t intercept_column = -1;
    std::vector<std::size_t> excluded_columns;
    bool truncated = false;
};

/// LARS with the lasso modification on the internally standardized design.
LarsPath lars_path(Matrix design, const Vector& y, const LarsOptions& options = {});

/// Raw-scale (intercept, coefficients over all columns) of a standardized knot.
std::pair<double, Vector> destandardize(const LarsPath& path, const LarsKnot& knot, std::size_t n_columns);

struct SparseDiagnostics {
    std::size_t path_length = 0;
    std::size_t chosen_knot = 0;
    double chosen_lambda = 0.0;
    double selection_error = 0.0;
    double training_error = 0.0;
    bool truncated = false;
};

/// Selected support with coefficients. `columns` index the candidate design; `basis` is
/// filled when the columns correspond to polynomial terms.
struct SparseModel {
    std::vector<std::size_t> columns;
    std::vector<MultiIndex> basis;
    Vector theta;
    SparseDiagnostics diagnostics;
};

/// First knot whose selection error is minimal (up to round-off).
std::size_t best_knot(const LarsPath& path, const Vector& y);

/// OLS on the support of one knot (plus the intercept column).
SparseModel refit_knot(const Matrix& design, const Vector& y, const LarsPath& path, std::size_t knot);

/// LARS path, knot selection, then OLS on the selected support.
SparseModel fit_lars(const Matrix& design, const Vector& y, const LarsOptions& options = {});

}  // namespace dynsur::regression
