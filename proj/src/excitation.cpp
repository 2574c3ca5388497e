#include "dynsur/excitation.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/rng.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace dynsur::excitation {

namespace {

constexpr double kPi = std::numbers::pi;

// Fraction of pulse-response amplitude below which the filter kernel is truncated.
constexpr double kKernelTruncation = 1e-10;

bool valid_interval(const Interval& iv) {
    return std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo <= iv.hi;
}

}  // namespace

void HarmonicSuperpositionSpec::validate() const {
    if (n_omega_max < 1) {
        throw ConfigError("harmonic excitation: n_omega_max must be >= 1");
    }
    if (!valid_interval(amplitude_range) || !valid_interval(frequency_range) ||
        !valid_interval(phase_range)) {
        throw ConfigError("harmonic excitation: empty or non-finite interval");
    }
}

HarmonicDraw draw_harmonic(const HarmonicSuperpositionSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    HarmonicDraw d;
    d.n_omega = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.n_omega_max)));
    std::uniform_real_distribution<double> amp(spec.amplitude_range.lo, spec.amplitude_range.hi);
    std::uniform_real_distribution<double> freq(spec.frequency_range.lo, spec.frequency_range.hi);
    std::uniform_real_distribution<double> phase(spec.phase_range.lo, spec.phase_range.hi);
    for (int i = 0; i < d.n_omega; ++i) {
        d.amplitude.push_back(amp(rng));
        d.frequency.push_back(freq(rng));
        d.phase.push_back(phase(rng));
    }
    return d;
}

Trajectory evaluate_harmonic(const HarmonicSuperpositionSpec& spec, const HarmonicDraw& draw,
                             std::string label) {
    const TimeGrid& g = spec.grid;
    std::vector<double> x(g.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(draw.n_omega);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double t = g.time(k);
        double acc = 0.0;
        for (int i = 0; i < draw.n_omega; ++i) {
            acc += draw.amplitude[i] * std::sin(2.0 * kPi * draw.frequency[i] * t + draw.phase[i]);
        }
        x[k] = inv_n * acc;
    }
    return Trajectory(g, std::move(x), std::move(label));
}

Trajectory sample_harmonic(const HarmonicSuperpositionSpec& spec, std::uint64_t seed, std::string label) {
    return evaluate_harmonic(spec, draw_harmonic(spec, seed), std::move(label));
}

void GroundMotionSpec::validate() const {
    if (!(arias_intensity > 0.0) || !(effective_duration > 0.0)) {
        throw ConfigError("ground motion: arias_intensity and effective_duration must be positive");
    }
    if (!(filter_damping > 0.0 && filter_damping < 1.0)) {
        throw ConfigError("ground motion: filter damping must lie in (0, 1)");
    }
    if (!(highpass_hz >= 0.0)) {
        throw ConfigError("ground motion: highpass_hz must be nonnegative");
    }
    if (!(omega_mid > 0.0) || !(gravity > 0.0) || !(t_mid > 0.0)) {
        throw ConfigError("ground motion: omega_mid, t_mid and gravity must be positive");
    }
    // omega(t) is affine, so checking the end points covers the grid.
    if (!(filter_frequency(grid.t0()) > 0.0) || !(filter_frequency(grid.t_max()) > 0.0)) {
        throw ConfigError("ground motion: filter frequency becomes nonpositive on the grid");
    }
}

double GammaEnvelope::operator()(double t) const {
    if (t <= 0.0) {
        return 0.0;
    }
    return scale * std::pow(t, shape - 1.0) * std::exp(-rate * t);
}

GammaEnvelope calibrate_envelope(const GroundMotionSpec& spec) {
    spec.validate();
    // q^2 is proportional to a gamma density with shape k = 2*shape - 1 and rate 2*rate,
    // so the normalized cumulative Arias curve is P(k, 2*rate*t).
    const double target_ratio = spec.effective_duration / spec.t_mid;
    auto ratio_residual = [&](double k) {
        const double q05 = boost::math::gamma_p_inv(k, 0.05);
        const double q45 = boost::math::gamma_p_inv(k, 0.45);
        const double q95 = boost::math::gamma_p_inv(k, 0.95);
        return (q95 - q05) / q45 - target_ratio;
    };

    // Ratio decreases monotonically in k; k > 1 keeps q(0) finite.
    double k_lo = 1.0 + 1e-9;
    double k_hi = 1e6;
    const double f_lo = ratio_residual(k_lo);
    const double f_hi = ratio_residual(k_hi);
    if (!(f_lo > 0.0) || !(f_hi < 0.0)) {
        std::ostringstream msg;
        msg << "ground motion: duration/t_mid ratio " << target_ratio
            << " is outside the reachable range of the envelope family (residuals " << f_lo << ", "
            << f_hi << ")";
        throw CalibrationError(msg.str());
    }
    boost::uintmax_t max_iter = 200;
    auto bracket = boost::math::tools::toms748_solve(ratio_residual, k_lo, k_hi, f_lo, f_hi,
                                                     boost::math::tools::eps_tolerance<double>(50),
                                                     max_iter);
    const double k = 0.5 * (bracket.first + bracket.second);
    const double q05 = boost::math::gamma_p_inv(k, 0.05);
    const double q45 = boost::math::gamma_p_inv(k, 0.45);
    const double q95 = boost::math::gamma_p_inv(k, 0.95);
    const double lambda = q45 / spec.t_mid;

    GammaEnvelope env;
    env.shape = 0.5 * (k + 1.0);
    env.rate = 0.5 * lambda;

    const double duration_residual = (q95 - q05) / lambda - spec.effective_duration;
    const double t95 = q95 / lambda;
    if (std::abs(duration_residual) > 1e-8 || t95 > spec.grid.t_max()) {
        std::ostringstream msg;
        msg << "ground motion: envelope calibration failed (duration residual " << duration_residual
            << " s, t95 = " << t95 << " s, grid ends at " << spec.grid.t_max() << " s)";
        throw CalibrationError(msg.str());
    }

    // Expected Arias intensity on the grid; the normalized filter output has unit variance
    // at every step except the first, where no pulse has propagated yet.
    env.scale = 1.0;
    double sum_q2 = 0.0;
    for (std::size_t i = 1; i < spec.grid.size(); ++i) {
        const double q = env(spec.grid.time(i));
        sum_q2 += q * q;
    }
    // in s*g, accelerations in m/s^2
    const double unit_arias = kPi / (2.0 * spec.gravity * spec.gravity) * sum_q2 * spec.grid.dt();
    if (!(unit_arias > 0.0)) {
        throw CalibrationError("ground motion: envelope vanishes on the grid");
    }
    env.scale = std::sqrt(spec.arias_intensity / unit_arias);
    return env;
}

GroundMotionGenerator::GroundMotionGenerator(GroundMotionSpec spec)
    : spec_(std::move(spec)), envelope_(calibrate_envelope(spec_)) {
    const TimeGrid& g = spec_.grid;
    const std::size_t n = g.size();
    const double dt = g.dt();
    const double zeta = spec_.filter_damping;
    const double sq = std::sqrt(1.0 - zeta * zeta);
    const double omega_min = std::min(spec_.filter_frequency(g.t0()), spec_.filter_frequency(g.t_max()));
    const double decay_steps = -std::log(kKernelTruncation) / (zeta * omega_min * dt);
    kernel_len_ = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(decay_steps)) + 1);

    kernel_.assign(n * kernel_len_, 0.0);
    std::vector<double> variance(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = spec_.filter_frequency(g.time(i));
        const double amp = w / sq;
        double* row = kernel_.data() + i * kernel_len_;
        const std::size_t m_max = std::min(kernel_len_, n - i);
        for (std::size_t m = 0; m < m_max; ++m) {
            const double tau = static_cast<double>(m) * dt;
            const double h = amp * std::exp(-zeta * w * tau) * std::sin(w * sq * tau);
            row[m] = h;
            variance[i + m] += h * h;
        }
    }
    gain_.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (variance[k] > 0.0) {
            gain_[k] = envelope_(g.time(k)) / std::sqrt(variance[k]);
        }
    }
}

Trajectory GroundMotionGenerator::filter(const std::vector<double>& white_noise, std::string label) const {
    const std::size_t n = spec_.grid.size();
    if (white_noise.size() != n) {
        throw DimensionError("ground motion: white noise length differs from grid");
    }
    std::vector<double> acc(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = white_noise[i];
        const double* row = kernel_.data() + i * kernel_len_;
        const std::size_t m_max = std::min(kernel_len_, n - i);
        double* out = acc.data() + i;
        for (std::size_t m = 0; m < m_max; ++m) {
            out[m] += row[m] * u;
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        acc[k] *= gain_[k];
    }
    if (spec_.highpass_hz > 0.0) {
        // s^2 / (s + wc)^2, bilinear transform.
        const double wc = 2.0 * kPi * spec_.highpass_hz;
        const double k2 = 2.0 / spec_.grid.dt();
        const double a0 = (k2 + wc) * (k2 + wc);
        const double a1 = 2.0 * (wc * wc - k2 * k2) / a0;
        const double a2 = (k2 - wc) * (k2 - wc) / a0;
        const double b0 = k2 * k2 / a0;
        double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
        for (auto& v : acc) {
            const double y = b0 * (v - 2.0 * x1 + x2) - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            v = y;
        }
    }
    return Trajectory(spec_.grid, std::move(acc), std::move(label));
}

Trajectory GroundMotionGenerator::sample(std::uint64_t seed, std::string label) const {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(spec_.grid.size());
    for (auto& v : w) {
        v = normal(rng);
    }
    return filter(w, std::move(label));
}

Trajectory sample_ground_motion(const GroundMotionSpec& spec, std::uint64_t seed, std::string label) {
    return GroundMotionGenerator(spec).sample(seed, std::move(label));
}

double max_abs_amplitude(const Trajectory& traj) {
    double m = 0.0;
    for (double v : traj.values()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

double arias_intensity(const Trajectory& accel, double gravity) {
    double s = 0.0;
    for (double v : accel.values()) {
        s += v * v;
    }
    return kPi / (2.0 * gravity * gravity) * s * accel.grid().dt();
}

double significant_duration(const Trajectory& accel, double lo, double hi) {
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) {
        throw ConfigError("significant_duration: need 0 <= lo < hi <= 1");
    }
    const auto& v = accel.values();
    std::vector<double> cum(v.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        total += v[k] * v[k];
        cum[k] = total;
    }
    if (!(total > 0.0)) {
        throw DegenerateDataError("significant_duration: zero-energy record");
    }
    auto crossing = [&](double level) {
        const double target = level * total;
        auto it = std::lower_bound(cum.begin(), cum.end(), target);
        const auto k = static_cast<std::size_t>(it - cum.begin());
        if (k == 0) {
            return accel.grid().time(0);
        }
        const double c0 = cum[k - 1];
        const double c1 = cum[k];
        const double frac = c1 > c0 ? (target - c0) / (c1 - c0) : 0.0;
        return accel.grid().time(k - 1) + frac * accel.grid().dt();
    };
    return crossing(hi) - crossing(lo);
}

}  // namespace dynsur::excitation
