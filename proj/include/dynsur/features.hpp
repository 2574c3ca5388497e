#pragma once

#include "dynsur/signal.hpp"

#include <span>
#include <string>
#include <vector>

namespace dynsur::features {

/// Standardize-then-project map over the columns of a lagged window or a spatial snapshot.
struct PcaMap {
    Vector mu;
    /// Sample standard deviation; 1 for masked (constant) columns.
    Vector sigma;
    /// 1 for columns taking part in the decomposition, 0 for constant columns.
    std::vector<char> mask;
    /// n_cols x n_features; rows of masked columns are zero.
    Matrix eigvecs;
    /// Retained eigenvalues, descending.
    Vector eigvals;
    /// Every eigenvalue of the standardized covariance, descending (sums to the unmasked count).
    Vector spectrum;
    double explained = 0.0;
    double threshold = 0.0;

    std::size_t n_cols() const noexcept { return static_cast<std::size_t>(mu.size()); }
    std::size_t n_features() const noexcept { return static_cast<std::size_t>(eigvals.size()); }

    /// out = ((row - mu) / sigma) * V
    void project_row(std::span<const double> row, std::span<double> out) const;
    void validate() const;
};

PcaMap fit_pca(const Matrix& rows, double threshold);
PcaMap fit_pca(const LaggedMatrix& lagged, double threshold);

Matrix project(const PcaMap& map, const Matrix& rows);

/// Inverse map on the retained subspace: features * V^T * sigma + mu.
Matrix reconstruct(const PcaMap& map, const Matrix& features);

struct CompressedInput {
    PcaMap map;
    std::vector<Trajectory> reduced;
};

/// PCA across the spatial dimension: `snapshots` is (steps x M). Reduced channels are labelled
/// prefix0, prefix1, ...
CompressedInput compress_input(const Matrix& snapshots, const TimeGrid& grid, double threshold,
                               const std::string& prefix = "xr");

}  // namespace dynsur::features
