#pragma once

#include "dynsur/signal.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>

namespace dynsur::sim {

/// Quarter-car with cubic suspension spring. Values are used verbatim (nondimensional).
struct QuarterCarParams {
    double k1 = 5000.0;
    double k2 = 1000.0;
    double m1 = 50.0;
    double m2 = 10.0;
    double c = 50.0;

    void validate() const;
};

struct BoucWenParams {
    double zeta = 0.02;
    double omega = 10.0;
    double rho = 0.2;
    double gamma = 0.5;
    double alpha = 25.0;
    double beta = 25.0;
    double n = 1.0;

    void validate() const;
    /// Analytic envelope of the hysteretic variable, (gamma / (alpha + beta))^(1/n).
    double z_bound() const;
};

struct SimOptions {
    /// RK4 steps per grid interval.
    int substeps = 1;
    /// Throw NumericalError if a physical invariant (Bouc-Wen z bound) is violated.
    bool check_invariants = false;
    double overflow_guard = 1e12;
};

struct SimDiagnostics {
    std::size_t steps = 0;
    double max_state_norm = 0.0;
};

struct SimResult {
    std::map<std::string, Trajectory> outputs;
    SimDiagnostics diagnostics;

    const Trajectory& at(const std::string& label) const;
};

/// Outputs y1, y2 (wheel, body) and y1_dot, y2_dot.
SimResult simulate_quarter_car(const QuarterCarParams& params, const Trajectory& excitation,
                               const SimOptions& options = {},
                               std::optional<std::array<double, 4>> initial_state = std::nullopt);

/// Excitation is ground acceleration. Outputs y, y_dot, z.
SimResult simulate_bouc_wen(const BoucWenParams& params, const Trajectory& excitation,
                            const SimOptions& options = {});

}  // namespace dynsur::sim
