#include "dynsur/simulators.hpp"

#include "dynsur/errors.hpp"

#include <cmath>
#include <sstream>

namespace dynsur::sim {

namespace {

template <std::size_t N>
using State = std::array<double, N>;

template <std::size_t N>
State<N> axpy(const State<N>& x, double a, const State<N>& d) {
    State<N> out;
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = x[i] + a * d[i];
    }
    return out;
}

template <std::size_t N>
double norm(const State<N>& x) {
    double s = 0.0;
    for (double v : x) {
        s += v * v;
    }
    return std::sqrt(s);
}

// Right-hand sides that are smooth everywhere.
struct Smooth {
    static constexpr int count = 0;
    template <std::size_t N>
    unsigned mode(const State<N>&) const {
        return 0;
    }
    template <std::size_t N>
    double indicator(const State<N>&, int) const {
        return 0.0;
    }
};

// Classical RK4 over the excitation grid; the forcing is linearly interpolated inside each
// interval. `observe` is called with the state at every grid step.
// rhs(state, x, mode) is evaluated with the sign pattern `mode` frozen. When a step changes the
// pattern, the step is split at the zero of the switching indicator so that each piece
// integrates a smooth field (otherwise |.| kinks cost two orders of accuracy).
template <std::size_t N, class Switch, class Rhs, class Observe>
SimDiagnostics integrate_rk4(const Trajectory& excitation, State<N> state, const SimOptions& opt,
                             const char* system, const Switch& sw, Rhs&& rhs, Observe&& observe) {
    if (opt.substeps < 1) {
        throw ConfigError("simulation: substeps must be >= 1");
    }
    const auto& x = excitation.values();
    const std::size_t n = x.size();
    const double dt = excitation.grid().dt();
    const double h = dt / opt.substeps;

    SimDiagnostics diag;
    diag.max_state_norm = norm(state);
    observe(std::size_t{0}, state);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double x0 = x[k];
        const double slope = (x[k + 1] - x[k]);
        // From fraction fa of the interval, advance by tau seconds.
        auto step = [&](const State<N>& s0, double fa, double tau, unsigned m) {
            const double xa = x0 + fa * slope;
            const double xm = x0 + (fa + 0.5 * tau / dt) * slope;
            const double xb = x0 + (fa + tau / dt) * slope;
            const State<N> k1 = rhs(s0, xa, m);
            const State<N> k2 = rhs(axpy(s0, 0.5 * tau, k1), xm, m);
            const State<N> k3 = rhs(axpy(s0, 0.5 * tau, k2), xm, m);
            const State<N> k4 = rhs(axpy(s0, tau, k3), xb, m);
            State<N> out = s0;
            for (std::size_t i = 0; i < N; ++i) {
                out[i] += tau / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            return out;
        };
        for (int s = 0; s < opt.substeps; ++s) {
            double fa = static_cast<double>(s) / opt.substeps;
            double remaining = h;
            unsigned m = sw.mode(state);
            for (int split = 0;; ++split) {
                const State<N> trial = step(state, fa, remaining, m);
                const unsigned changed = sw.mode(trial) ^ m;
                if (changed == 0 || split == 2 * Switch::count) {
                    state = trial;
                    break;
                }
                // Earliest crossing among the indicators that flipped (Illinois regula falsi).
                double tau = remaining;
                int which = -1;
                for (int i = 0; i < Switch::count; ++i) {
                    if (!(changed & (1u << i))) {
                        continue;
                    }
                    double lo = 0.0;
                    double hi = remaining;
                    double glo = sw.indicator(state, i);
                    double ghi = sw.indicator(trial, i);
                    int side = 0;
                    for (int it = 0; it < 100 && glo != 0.0 && hi - lo > 1e-14 * h; ++it) {
                        const double mid = (lo * ghi - hi * glo) / (ghi - glo);
                        const double gm = sw.indicator(step(state, fa, mid, m), i);
                        if ((gm > 0.0) == (glo > 0.0)) {
                            lo = mid;
                            glo = gm;
                            if (side == -1) {
                                ghi *= 0.5;
                            }
                            side = -1;
                        } else {
                            hi = mid;
                            ghi = gm;
                            if (side == 1) {
                                glo *= 0.5;
                            }
                            side = 1;
                        }
                    }
                    const double root = glo == 0.0 ? lo : hi;
                    if (root < tau || which < 0) {
                        tau = root;
                        which = i;
                    }
                }
                state = step(state, fa, tau, m);
                fa += tau / dt;
                remaining -= tau;
                m ^= 1u << which;
                if (!(remaining > 0.0)) {
                    break;
                }
            }
            ++diag.steps;
        }
        const double nrm = norm(state);
        if (!(nrm <= opt.overflow_guard)) {
            std::ostringstream msg;
            msg << system << ": state norm " << nrm << " exceeds guard at step " << (k + 1);
            throw DivergenceError(msg.str(), system, k + 1);
        }
        diag.max_state_norm = std::max(diag.max_state_norm, nrm);
        observe(k + 1, state);
    }
    return diag;
}

// Signs of y_dot (bit 0) and z (bit 1).
struct BoucWenSwitch {
    static constexpr int count = 2;
    unsigned mode(const State<3>& s) const { return (s[1] < 0.0 ? 1u : 0u) | (s[2] < 0.0 ? 2u : 0u); }
    double indicator(const State<3>& s, int i) const { return i == 0 ? s[1] : s[2]; }
};

}  // namespace

void QuarterCarParams::validate() const {
    if (!(k1 > 0 && k2 > 0 && m1 > 0 && m2 > 0 && c > 0)) {
        throw ConfigError("quarter-car: all parameters must be strictly positive");
    }
}

void BoucWenParams::validate() const {
    if (!(zeta > 0.0) || !(omega > 0.0) || !(rho >= 0.0 && rho <= 1.0) || !(alpha + beta > 0.0)) {
        throw ConfigError("bouc-wen: need zeta > 0, omega > 0, 0 <= rho <= 1, alpha + beta > 0");
    }
    if (!(n >= 1.0)) {
        throw ConfigError("bouc-wen: exponent n must be >= 1 (|z|^(n-1) is singular at z = 0)");
    }
}

double BoucWenParams::z_bound() const {
    return std::pow(gamma / (alpha + beta), 1.0 / n);
}

const Trajectory& SimResult::at(const std::string& label) const {
    auto it = outputs.find(label);
    if (it == outputs.end()) {
        throw ConfigError("simulation result has no output '" + label + "'");
    }
    return it->second;
}

SimResult simulate_quarter_car(const QuarterCarParams& p, const Trajectory& excitation,
                               const SimOptions& options, std::optional<std::array<double, 4>> initial_state) {
    p.validate();
    const std::size_t n = excitation.size();
    std::vector<double> y1(n), v1(n), y2(n), v2(n);

    // state = (y1, y1_dot, y2, y2_dot)
    auto rhs = [&p](const State<4>& s, double x, unsigned) {
        const double rel = s[2] - s[0];
        const double spring = p.k2 * rel * rel * rel;
        const double damper = p.c * (s[3] - s[1]);
        return State<4>{s[1], (spring + damper + p.k1 * (x - s[0])) / p.m1, s[3], (-spring - damper) / p.m2};
    };
    auto observe = [&](std::size_t k, const State<4>& s) {
        y1[k] = s[0];
        v1[k] = s[1];
        y2[k] = s[2];
        v2[k] = s[3];
    };
    SimResult result;
    result.diagnostics = integrate_rk4<4>(excitation, initial_state.value_or(State<4>{0, 0, 0, 0}), options,
                                          "quarter-car", Smooth{}, rhs, observe);
    const TimeGrid& g = excitation.grid();
    result.outputs.emplace("y1", Trajectory(g, std::move(y1), "y1"));
    result.outputs.emplace("y2", Trajectory(g, std::move(y2), "y2"));
    result.outputs.emplace("y1_dot", Trajectory(g, std::move(v1), "y1_dot"));
    result.outputs.emplace("y2_dot", Trajectory(g, std::move(v2), "y2_dot"));
    return result;
}

SimResult simulate_bouc_wen(const BoucWenParams& p, const Trajectory& excitation, const SimOptions& options) {
    p.validate();
    const std::size_t n = excitation.size();
    std::vector<double> y(n), v(n), z(n);
    const bool linear_n = (p.n == 1.0);
    const double w2 = p.omega * p.omega;

    // state = (y, y_dot, z)
    auto rhs = [&](const State<3>& s, double xdd, unsigned mode) {
        const double vel = s[1];
        const double zz = s[2];
        // |y_dot| and |z| with the signs of the current piece
        const double av = (mode & 1u) ? -vel : vel;
        const double az = (mode & 2u) ? -zz : zz;
        double zdot;
        if (linear_n) {
            zdot = p.gamma * vel - p.alpha * av * zz - p.beta * vel * az;
        } else {
            const double azn1 = std::pow(std::max(az, 0.0), p.n - 1.0);
            zdot = p.gamma * vel - p.alpha * av * azn1 * zz - p.beta * vel * azn1 * az;
        }
        const double acc = -xdd - 2.0 * p.zeta * p.omega * vel - w2 * (p.rho * s[0] + (1.0 - p.rho) * zz);
        return State<3>{vel, acc, zdot};
    };
    const double bound = p.z_bound();
    auto observe = [&](std::size_t k, const State<3>& s) {
        y[k] = s[0];
        v[k] = s[1];
        z[k] = s[2];
        if (options.check_invariants && std::abs(s[2]) > bound * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "bouc-wen: |z| = " << std::abs(s[2]) << " exceeds analytic bound " << bound << " at step "
                << k;
            throw NumericalError(msg.str());
        }
    };
    SimResult result;
    result.diagnostics = integrate_rk4<3>(excitation, State<3>{0, 0, 0}, options, "bouc-wen", BoucWenSwitch{}, rhs,
                                             observe);
    const TimeGrid& g = excitation.grid();
    result.outputs.emplace("y", Trajectory(g, std::move(y), "y"));
    result.outputs.emplace("y_dot", Trajectory(g, std::move(v), "y_dot"));
    result.outputs.emplace("z", Trajectory(g, std::move(z), "z"));
    return result;
}

}  // namespace dynsur::sim
