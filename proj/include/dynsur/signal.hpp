#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dynsur {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Uniform time grid t_k = t0 + k * dt, k = 0 .. n_steps-1.
class TimeGrid {
public:
    TimeGrid(double t0, double dt, std::size_t n_steps);

    /// Grid covering [t0, t_max] inclusive; t_max must be a whole number of steps.
    static TimeGrid covering(double t0, double dt, double t_max);

    double t0() const noexcept { return t0_; }
    double dt() const noexcept { return dt_; }
    std::size_t size() const noexcept { return n_steps_; }
    double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
    double t_max() const noexcept { return time(n_steps_ - 1); }

    bool operator==(const TimeGrid&) const = default;

private:
    double t0_;
    double dt_;
    std::size_t n_steps_;
};

/// One variable sampled on a TimeGrid. Values are finite by construction.
class Trajectory {
public:
    Trajectory(TimeGrid grid, std::vector<double> values, std::string label);

    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::span<const double> view() const noexcept { return values_; }
    const std::string& label() const noexcept { return label_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t k) const noexcept { return values_[k]; }

    Trajectory relabeled(std::string label) const;

private:
    TimeGrid grid_;
    std::vector<double> values_;
    std::string label_;
};

/// Exogenous inputs, time-constant parameters and (optionally) responses of one run.
struct Scenario {
    std::vector<Trajectory> excitations;
    std::vector<double> static_params;
    std::map<std::string, Trajectory> responses;

    const TimeGrid& grid() const;
    /// Excitations are searched before responses.
    const Trajectory* find(const std::string& label) const;
    const Trajectory& channel(const std::string& label) const;
    /// Throws DimensionError when trajectories live on different grids.
    void validate() const;
};

/// Delayed copies of one variable: row r, column c holds x[t_min_index + r - lags[c]].
struct LaggedMatrix {
    std::string variable;
    std::vector<std::size_t> lags;
    Matrix rows;
    std::size_t t_min_index = 0;
};

LaggedMatrix build_lagged_matrix(const Trajectory& traj, std::span<const std::size_t> lags,
                                 std::size_t t_min_index);

/// Regression matrix with its target vector.
struct Design {
    Matrix matrix;
    Vector output;
};

Design concat_designs(std::span<const Design> blocks);
Design subsample_rows(const Design& design, std::span<const std::size_t> row_indices);

enum class SubsampleMode { uniform_with_replacement, uniform_without_replacement, strided };

/// Row indices in [0, total) of length `count` according to `mode`.
std::vector<std::size_t> draw_row_indices(std::size_t total, std::size_t count, SubsampleMode mode,
                                          std::uint64_t seed);

/// Cumulative trapezoidal integral with zero initial value.
Trajectory cumulative_trapezoid(const Trajectory& traj, std::string label);

/// Converts a lag in seconds to whole steps; throws ConfigError if it is not a multiple of dt.
std::size_t seconds_to_steps(double seconds, double dt);

}  // namespace dynsur
