#pragma once

#include "dynsur/signal.hpp"

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace dynsur::excitation {

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

/// x(t) = (1/N) sum_i A_i sin(2 pi B_i t + C_i), N uniform on {1..n_omega_max}.
struct HarmonicSuperpositionSpec {
    int n_omega_max = 5;
    Interval amplitude_range{-1.0, 1.0};
    Interval frequency_range{-1.0, 1.0};
    Interval phase_range{-1.0, 1.0};
    TimeGrid grid{0.0, 0.01, 3001};

    void validate() const;
};

/// Random draws behind one harmonic realization.
struct HarmonicDraw {
    int n_omega = 0;
    std::vector<double> amplitude;
    std::vector<double> frequency;
    std::vector<double> phase;
};

HarmonicDraw draw_harmonic(const HarmonicSuperpositionSpec& spec, std::uint64_t seed);
Trajectory evaluate_harmonic(const HarmonicSuperpositionSpec& spec, const HarmonicDraw& draw,
                             std::string label = "x");
Trajectory sample_harmonic(const HarmonicSuperpositionSpec& spec, std::uint64_t seed,
                           std::string label = "x");

/// Modulated filtered white noise (time-varying SDOF filter, gamma-type envelope).
/// Defaults are the Northridge LA00/090 fit.
struct GroundMotionSpec {
    double arias_intensity = 0.109;  // s*g
    double effective_duration = 7.96;  // D_5-95, s
    double t_mid = 7.78;  // s
    double omega_mid = 4.66 * 2.0 * std::numbers::pi;  // rad/s
    double omega_slope = -0.09 * 2.0 * std::numbers::pi;  // rad/s per s
    double filter_damping = 0.24;
    TimeGrid grid{0.0, 0.02, 1501};
    double gravity = 9.81;
    /// Corner of the critically damped high-pass applied after modulation (Hz); 0 disables it.
    /// Without it the integrated ground velocity/displacement drift.
    double highpass_hz = 0.0;

    double filter_frequency(double t) const { return omega_mid + omega_slope * (t - t_mid); }
    void validate() const;
};

/// q(t) = scale * t^(shape-1) * exp(-rate * t), zero for t <= 0.
struct GammaEnvelope {
    double scale = 0.0;
    double shape = 1.0;
    double rate = 1.0;

    double operator()(double t) const;
};

/// Solves the envelope for the spec's Arias intensity, 5-95% duration and t_mid (45% point).
/// Throws CalibrationError with the residuals if the targets cannot be met on the grid.
GammaEnvelope calibrate_envelope(const GroundMotionSpec& spec);

/// Precomputes the envelope and the per-step filter kernels; sampling is then O(N * kernel length).
class GroundMotionGenerator {
public:
    explicit GroundMotionGenerator(GroundMotionSpec spec);

    const GroundMotionSpec& spec() const noexcept { return spec_; }
    const GammaEnvelope& envelope() const noexcept { return envelope_; }

    Trajectory sample(std::uint64_t seed, std::string label = "xdd") const;
    /// Same filter applied to caller-provided unit white noise (one value per grid step).
    Trajectory filter(const std::vector<double>& white_noise, std::string label = "xdd") const;

private:
    GroundMotionSpec spec_;
    GammaEnvelope envelope_;
    std::size_t kernel_len_ = 0;
    // kernel_[i * kernel_len_ + m]: response at step i+m to a unit pulse at step i.
    std::vector<double> kernel_;
    // q(t_k) / sigma_f(t_k), zero where the filter variance vanishes.
    std::vector<double> gain_;
};

Trajectory sample_ground_motion(const GroundMotionSpec& spec, std::uint64_t seed,
                                std::string label = "xdd");

double max_abs_amplitude(const Trajectory& traj);

/// (pi / 2g) * sum a_k^2 * dt expressed in s*g (accelerations in m/s^2).
double arias_intensity(const Trajectory& accel, double gravity = 9.81);

/// Time between the 5% and 95% points of the cumulative Arias integral (linear interpolation).
double significant_duration(const Trajectory& accel, double lo = 0.05, double hi = 0.95);

}  // namespace dynsur::excitation
