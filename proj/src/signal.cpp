#include "dynsur/signal.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dynsur {

TimeGrid::TimeGrid(double t0, double dt, std::size_t n_steps) : t0_(t0), dt_(dt), n_steps_(n_steps) {
    if (!std::isfinite(t0) || !std::isfinite(dt) || dt <= 0.0) {
        throw ConfigError("time grid: dt must be positive and finite");
    }
    if (n_steps < 2) {
        throw ConfigError("time grid: at least two steps required");
    }
}

TimeGrid TimeGrid::covering(double t0, double dt, double t_max) {
    if (!(dt > 0.0) || !(t_max > t0)) {
        throw ConfigError("time grid: need dt > 0 and t_max > t0");
    }
    const double steps = (t_max - t0) / dt;
    const double rounded = std::round(steps);
    if (std::abs(steps - rounded) > 1e-6) {
        throw ConfigError("time grid: duration is not a whole number of steps");
    }
    return TimeGrid(t0, dt, static_cast<std::size_t>(rounded) + 1);
}

Trajectory::Trajectory(TimeGrid grid, std::vector<double> values, std::string label)
    : grid_(grid), values_(std::move(values)), label_(std::move(label)) {
    if (values_.size() != grid_.size()) {
        std::ostringstream msg;
        msg << "trajectory '" << label_ << "': " << values_.size() << " values on a grid of "
            << grid_.size() << " steps";
        throw DimensionError(msg.str());
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
        if (!std::isfinite(values_[k])) {
            std::ostringstream msg;
            msg << "trajectory '" << label_ << "': non-finite value at step " << k;
            throw NumericalError(msg.str());
        }
    }
}

Trajectory Trajectory::relabeled(std::string label) const {
    Trajectory out = *this;
    out.label_ = std::move(label);
    return out;
}

const TimeGrid& Scenario::grid() const {
    if (!excitations.empty()) {
        return excitations.front().grid();
    }
    if (!responses.empty()) {
        return responses.begin()->second.grid();
    }
    throw ConfigError("scenario has no trajectories");
}

const Trajectory* Scenario::find(const std::string& label) const {
    for (const auto& x : excitations) {
        if (x.label() == label) {
            return &x;
        }
    }
    if (auto it = responses.find(label); it != responses.end()) {
        return &it->second;
    }
    return nullptr;
}

const Trajectory& Scenario::channel(const std::string& label) const {
    if (const auto* t = find(label)) {
        return *t;
    }
    throw ConfigError("scenario has no channel '" + label + "'");
}

void Scenario::validate() const {
    const TimeGrid& g = grid();
    for (const auto& x : excitations) {
        if (!(x.grid() == g)) {
            throw DimensionError("scenario: excitation '" + x.label() + "' is on a different grid");
        }
    }
    for (const auto& [label, y] : responses) {
        if (!(y.grid() == g)) {
            throw DimensionError("scenario: response '" + label + "' is on a different grid");
        }
    }
}

LaggedMatrix build_lagged_matrix(const Trajectory& traj, std::span<const std::size_t> lags,
                                 std::size_t t_min_index) {
    if (lags.empty()) {
        throw ConfigError("lagged matrix: empty lag list for '" + traj.label() + "'");
    }
    for (std::size_t c = 1; c < lags.size(); ++c) {
        if (lags[c] <= lags[c - 1]) {
            throw ConfigError("lagged matrix: lags must be sorted and distinct");
        }
    }
    if (lags.back() > t_min_index) {
        std::ostringstream msg;
        msg << "lagged matrix: lag " << lags.back() << " exceeds t_min_index " << t_min_index;
        throw ConfigError(msg.str());
    }
    const std::size_t n = traj.size();
    if (t_min_index >= n) {
        throw ConfigError("lagged matrix: t_min_index beyond trajectory length");
    }

    LaggedMatrix out;
    out.variable = traj.label();
    out.lags.assign(lags.begin(), lags.end());
    out.t_min_index = t_min_index;
    const std::size_t rows = n - t_min_index;
    out.rows.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lags.size()));
    const auto& v = traj.values();
    for (std::size_t c = 0; c < lags.size(); ++c) {
        const std::size_t offset = t_min_index - lags[c];
        for (std::size_t r = 0; r < rows; ++r) {
            out.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[offset + r];
        }
    }
    return out;
}

Design concat_designs(std::span<const Design> blocks) {
    if (blocks.empty()) {
        throw DimensionError("concat_designs: no blocks");
    }
    const Eigen::Index cols = blocks.front().matrix.cols();
    Eigen::Index rows = 0;
    for (const auto& b : blocks) {
        if (b.matrix.cols() != cols) {
            throw DimensionError("concat_designs: column count mismatch");
        }
        if (b.matrix.rows() != b.output.size()) {
            throw DimensionError("concat_designs: matrix rows differ from output length");
        }
        rows += b.matrix.rows();
    }
    Design out;
    out.matrix.resize(rows, cols);
    out.output.resize(rows);
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        out.matrix.middleRows(at, b.matrix.rows()) = b.matrix;
        out.output.segment(at, b.output.size()) = b.output;
        at += b.matrix.rows();
    }
    return out;
}

Design subsample_rows(const Design& design, std::span<const std::size_t> row_indices) {
    const auto n = static_cast<std::size_t>(design.matrix.rows());
    if (static_cast<std::size_t>(design.output.size()) != n) {
        throw DimensionError("subsample_rows: matrix rows differ from output length");
    }
    Design out;
    out.matrix.resize(static_cast<Eigen::Index>(row_indices.size()), design.matrix.cols());
    out.output.resize(static_cast<Eigen::Index>(row_indices.size()));
    for (std::size_t r = 0; r < row_indices.size(); ++r) {
        const std::size_t src = row_indices[r];
        if (src >= n) {
            std::ostringstream msg;
            msg << "subsample_rows: index " << src << " out of bounds for " << n << " rows";
            throw IndexError(msg.str());
        }
        out.matrix.row(static_cast<Eigen::Index>(r)) = design.matrix.row(static_cast<Eigen::Index>(src));
        out.output(static_cast<Eigen::Index>(r)) = design.output(static_cast<Eigen::Index>(src));
    }
    return out;
}

std::vector<std::size_t> draw_row_indices(std::size_t total, std::size_t count, SubsampleMode mode,
                                          std::uint64_t seed) {
    if (total == 0) {
        throw SizeError("draw_row_indices: no rows to draw from");
    }
    std::vector<std::size_t> out;
    out.reserve(count);
    switch (mode) {
    case SubsampleMode::uniform_with_replacement: {
        Rng rng(seed);
        for (std::size_t k = 0; k < count; ++k) {
            out.push_back(uniform_index(rng, total));
        }
        break;
    }
    case SubsampleMode::uniform_without_replacement: {
        if (count > total) {
            throw SizeError("draw_row_indices: cannot draw more rows than available without replacement");
        }
        Rng rng(seed);
        std::vector<std::size_t> perm(total);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        // Partial Fisher-Yates: the first `count` slots are the draw.
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t j = k + uniform_index(rng, total - k);
            std::swap(perm[k], perm[j]);
        }
        perm.resize(count);
        out = std::move(perm);
        break;
    }
    case SubsampleMode::strided: {
        if (count > total) {
            throw SizeError("draw_row_indices: strided draw larger than the design");
        }
        for (std::size_t k = 0; k < count; ++k) {
            out.push_back(k * total / count);
        }
        break;
    }
    }
    return out;
}

Trajectory cumulative_trapezoid(const Trajectory& traj, std::string label) {
    const auto& v = traj.values();
    std::vector<double> out(v.size(), 0.0);
    const double half_dt = 0.5 * traj.grid().dt();
    for (std::size_t k = 1; k < v.size(); ++k) {
        out[k] = out[k - 1] + half_dt * (v[k] + v[k - 1]);
    }
    return Trajectory(traj.grid(), std::move(out), std::move(label));
}

std::size_t seconds_to_steps(double seconds, double dt) {
    if (!(seconds >= 0.0) || !(dt > 0.0)) {
        throw ConfigError("lag in seconds must be nonnegative and dt positive");
    }
    const double steps = std::round(seconds / dt);
    if (std::abs(steps * dt - seconds) > 1e-6 * dt) {
        std::ostringstream msg;
        msg << "lag " << seconds << " s is not a whole number of steps of " << dt << " s";
        throw ConfigError(msg.str());
    }
    return static_cast<std::size_t>(steps);
}

}  // namespace dynsur
