#include "dynsur/features.hpp"

#include "dynsur/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace dynsur::features {

void PcaMap::validate() const {
    const auto n = mu.size();
    if (sigma.size() != n || static_cast<Eigen::Index>(mask.size()) != n || eigvecs.rows() != n ||
        eigvecs.cols() != eigvals.size()) {
        throw DimensionError("pca map: inconsistent member dimensions");
    }
    if (eigvals.size() == 0) {
        throw DimensionError("pca map: no retained components");
    }
}

void PcaMap::project_row(std::span<const double> row, std::span<double> out) const {
    const std::size_t n = n_cols();
    const std::size_t k = n_features();
    if (row.size() != n || out.size() != k) {
        throw DimensionError("pca projection: row or feature length mismatch");
    }
    for (std::size_t f = 0; f < k; ++f) {
        out[f] = 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) {
            continue;
        }
        const double z = (row[i] - mu[static_cast<Eigen::Index>(i)]) / sigma[static_cast<Eigen::Index>(i)];
        for (std::size_t f = 0; f < k; ++f) {
            out[f] += z * eigvecs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
        }
    }
}

PcaMap fit_pca(const Matrix& rows, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw ConfigError("pca: threshold must lie in (0, 1]");
    }
    const Eigen::Index n = rows.rows();
    const Eigen::Index p = rows.cols();
    if (n < 2 || p < 1) {
        throw DimensionError("pca: need at least two rows and one column");
    }
    PcaMap map;
    map.threshold = threshold;
    map.mu = rows.colwise().mean().transpose();
    map.sigma = Vector::Ones(p);
    map.mask.assign(static_cast<std::size_t>(p), 0);

    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < p; ++j) {
        const double first = rows(0, j);
        if ((rows.col(j).array() == first).all()) {
            continue;
        }
        const double var = (rows.col(j).array() - map.mu[j]).square().sum() / static_cast<double>(n - 1);
        if (!(var > 0.0)) {
            continue;
        }
        map.sigma[j] = std::sqrt(var);
        map.mask[static_cast<std::size_t>(j)] = 1;
        kept.push_back(j);
    }
    if (kept.empty()) {
        throw DegenerateDataError("pca: every column is constant");
    }
    const auto q = static_cast<Eigen::Index>(kept.size());
    Matrix z(n, q);
    for (Eigen::Index c = 0; c < q; ++c) {
        const Eigen::Index j = kept[static_cast<std::size_t>(c)];
        z.col(c) = (rows.col(j).array() - map.mu[j]) / map.sigma[j];
    }
    Matrix cov = (z.transpose() * z) / static_cast<double>(n - 1);
    cov = 0.5 * (cov + cov.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) {
        throw NumericalError("pca: eigendecomposition failed");
    }
    // Solver returns ascending order.
    const Vector values = eig.eigenvalues().reverse().cwiseMax(0.0);
    const Matrix vectors = eig.eigenvectors().rowwise().reverse();
    const double total = values.sum();
    if (!(total > 0.0)) {
        throw DegenerateDataError("pca: zero total variance");
    }
    Eigen::Index keep = q;
    double cum = 0.0;
    for (Eigen::Index k = 0; k < q; ++k) {
        cum += values[k];
        if (cum / total >= threshold - 1e-12) {
            keep = k + 1;
            break;
        }
    }
    map.spectrum = values;
    map.eigvals = values.head(keep);
    map.explained = std::min(1.0, values.head(keep).sum() / total);
    map.eigvecs = Matrix::Zero(p, keep);
    for (Eigen::Index k = 0; k < keep; ++k) {
        Vector v = vectors.col(k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) {
            v = -v;
        }
        for (Eigen::Index c = 0; c < q; ++c) {
            map.eigvecs(kept[static_cast<std::size_t>(c)], k) = v[c];
        }
    }
    return map;
}

PcaMap fit_pca(const LaggedMatrix& lagged, double threshold) {
    return fit_pca(lagged.rows, threshold);
}

Matrix project(const PcaMap& map, const Matrix& rows) {
    if (static_cast<std::size_t>(rows.cols()) != map.n_cols()) {
        std::ostringstream msg;
        msg << "pca projection: " << rows.cols() << " columns for a map over " << map.n_cols();
        throw DimensionError(msg.str());
    }
    Matrix z = rows.rowwise() - map.mu.transpose();
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        if (map.mask[static_cast<std::size_t>(j)]) {
            z.col(j) /= map.sigma[j];
        } else {
            z.col(j).setZero();
        }
    }
    return z * map.eigvecs;
}

Matrix reconstruct(const PcaMap& map, const Matrix& features) {
    if (static_cast<std::size_t>(features.cols()) != map.n_features()) {
        throw DimensionError("pca reconstruction: feature count mismatch");
    }
    Matrix z = features * map.eigvecs.transpose();
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        z.col(j) *= map.sigma[j];
    }
    return z.rowwise() + map.mu.transpose();
}

CompressedInput compress_input(const Matrix& snapshots, const TimeGrid& grid, double threshold,
                               const std::string& prefix) {
    if (static_cast<std::size_t>(snapshots.rows()) != grid.size()) {
        throw DimensionError("compress_input: snapshot rows differ from grid length");
    }
    if (snapshots.cols() < 1) {
        throw DimensionError("compress_input: need at least one spatial dimension");
    }
    CompressedInput out;
    out.map = fit_pca(snapshots, threshold);
    const Matrix f = project(out.map, snapshots);
    for (Eigen::Index k = 0; k < f.cols(); ++k) {
        std::vector<double> v(f.col(k).data(), f.col(k).data() + f.rows());
        out.reduced.emplace_back(grid, std::move(v), prefix + std::to_string(k));
    }
    return out;
}

}  // namespace dynsur::features
