#include "dynsur/reliability.hpp"

#include "dynsur/csv.hpp"
#include "dynsur/errors.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dynsur::reliability {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Acklam's rational approximation of the normal quantile (relative error ~1e-9).
double acklam(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

}  // namespace

FailureMode parse_failure_mode(const std::string& s) {
    if (s == "absolute") {
        return FailureMode::absolute;
    }
    if (s == "signed") {
        return FailureMode::signed_max;
    }
    throw ConfigError("unknown failure mode '" + s + "' (expected absolute or signed)");
}

double max_response(std::span<const double> values, FailureMode mode) {
    if (values.empty()) {
        throw DimensionError("max_response: empty trajectory");
    }
    double m = -kInf;
    for (double v : values) {
        m = std::max(m, mode == FailureMode::absolute ? std::abs(v) : v);
    }
    return m;
}

double max_response(const Trajectory& traj, FailureMode mode) { return max_response(traj.view(), mode); }

double min_limit_state(std::span<const double> values, double threshold, FailureMode mode) {
    if (values.empty()) {
        throw DimensionError("min_limit_state: empty trajectory");
    }
    double g = kInf;
    for (double v : values) {
        g = std::min(g, threshold - (mode == FailureMode::absolute ? std::abs(v) : v));
    }
    return g;
}

PfEstimate estimate_pf(std::span<const double> max_responses, double threshold, double confidence) {
    if (max_responses.empty()) {
        throw SizeError("estimate_pf: no samples");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw ConfigError("estimate_pf: confidence must lie in (0, 1)");
    }
    PfEstimate e;
    e.n = max_responses.size();
    for (double m : max_responses) {
        if (m > threshold) {
            ++e.exceedances;
        }
    }
    const double n = static_cast<double>(e.n);
    const double k = static_cast<double>(e.exceedances);
    e.pf = k / n;
    const double alpha = 1.0 - confidence;
    e.ci_low = e.exceedances == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
    e.ci_high = e.exceedances == e.n ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
    return e;
}

ReliabilityCurve pf_curve(std::span<const double> max_responses, std::span<const double> thresholds,
                          double confidence) {
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (thresholds[i] < thresholds[i - 1]) {
            throw ConfigError("pf_curve: thresholds must be sorted ascending");
        }
    }
    ReliabilityCurve c;
    c.n_samples = max_responses.size();
    for (double t : thresholds) {
        const PfEstimate e = estimate_pf(max_responses, t, confidence);
        c.thresholds.push_back(t);
        c.pf.push_back(e.pf);
        c.beta.push_back(reliability_index(e.pf));
        c.ci_low.push_back(e.ci_low);
        c.ci_high.push_back(e.ci_high);
    }
    return c;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError("normal_quantile: probability outside [0, 1]");
    }
    if (p == 0.0) {
        return -kInf;
    }
    if (p == 1.0) {
        return kInf;
    }
    double x = acklam(p);
    // Halley refinement; the lower tail is evaluated through erfc to keep precision.
    for (int it = 0; it < 2; ++it) {
        const double e = (x < 0.0 ? 0.5 * std::erfc(-x / std::numbers::sqrt2)
                                  : 1.0 - 0.5 * std::erfc(x / std::numbers::sqrt2)) -
                         p;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double reliability_index(double pf) {
    if (pf <= 0.0) {
        return kInf;
    }
    if (pf >= 1.0) {
        return -kInf;
    }
    return -normal_quantile(pf);
}

ResponseSummary response_summary(std::span<const double> max_responses, std::size_t bins) {
    if (bins < 1) {
        throw ConfigError("response_summary: bins must be >= 1");
    }
    if (max_responses.empty()) {
        throw SizeError("response_summary: no samples");
    }
    ResponseSummary s;
    s.sorted.assign(max_responses.begin(), max_responses.end());
    std::sort(s.sorted.begin(), s.sorted.end());
    const std::size_t n = s.sorted.size();
    for (std::size_t i = 0; i < n; ++i) {
        s.cdf.push_back(static_cast<double>(i + 1) / static_cast<double>(n));
    }
    // Histogram over the finite range; infinite values (divergent rollouts) fall in the last bin.
    double lo = kInf;
    double hi = -kInf;
    for (double v : s.sorted) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi == lo) {
        const double pad = lo == 0.0 ? 0.5 : 0.5 * std::abs(lo);
        lo -= pad;
        hi += pad;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b <= bins; ++b) {
        s.bin_edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
    }
    s.counts.assign(bins, 0);
    for (double v : s.sorted) {
        std::size_t b;
        if (!std::isfinite(v) || v >= hi) {
            b = bins - 1;
        } else {
            b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
        }
        ++s.counts[b];
    }
    return s;
}

double ks_distance(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) {
        throw SizeError("ks_distance: empty sample");
    }
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double na = static_cast<double>(x.size());
    const double nb = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) {
            ++i;
        }
        while (j < y.size() && y[j] <= v) {
            ++j;
        }
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double ks_uniform_statistic(std::span<const double> sample, double lo, double hi) {
    if (sample.empty() || !(hi > lo)) {
        throw ConfigError("ks_uniform_statistic: need a sample and hi > lo");
    }
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = std::clamp((x[i] - lo) / (hi - lo), 0.0, 1.0);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

double kolmogorov_survival(double x) {
    // The series converges slowly near zero, where the survival function is 1 to double precision.
    if (x < 0.2) {
        return 1.0;
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-16) {
            break;
        }
    }
    return std::clamp(s, 0.0, 1.0);
}

double threshold_at_beta(std::span<const double> max_responses, double beta) {
    const std::size_t n = max_responses.size();
    if (n < 2) {
        throw SizeError("threshold_at_beta: need at least two samples");
    }
    std::vector<double> v(max_responses.begin(), max_responses.end());
    std::sort(v.begin(), v.end(), std::greater<>());
    const double p = normal_cdf(-beta);
    const auto k = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
    if (k < 1 || k >= n) {
        throw SizeError("threshold_at_beta: sample too small to resolve the requested probability");
    }
    return 0.5 * (v[k - 1] + v[k]);
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
    if (count < 2 || !(hi > lo)) {
        throw ConfigError("linspace: need count >= 2 and hi > lo");
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return out;
}

void write_curve(const std::filesystem::path& path, const ReliabilityCurve& curve) {
    csv::Table t;
    t.header = {"threshold", "pf", "beta", "ci_low", "ci_high"};
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
        auto fmt = [](double v) {
            if (std::isinf(v)) {
                return std::string(v > 0 ? "inf" : "-inf");
            }
            return csv::format_double(v);
        };
        t.rows.push_back({fmt(curve.thresholds[i]), fmt(curve.pf[i]), fmt(curve.beta[i]), fmt(curve.ci_low[i]),
                          fmt(curve.ci_high[i])});
    }
    csv::write_table(path, t);
}

ReliabilityCurve read_curve(const std::filesystem::path& path) {
    const csv::Table t = csv::read_table(path);
    const std::size_t c0 = t.column("threshold");
    const std::size_t c1 = t.column("pf");
    const std::size_t c2 = t.column("beta");
    const std::size_t c3 = t.column("ci_low");
    const std::size_t c4 = t.column("ci_high");
    auto parse = [&](const std::string& s) {
        if (s == "inf") {
            return kInf;
        }
        if (s == "-inf") {
            return -kInf;
        }
        try {
            return std::stod(s);
        } catch (const std::exception&) {
            throw IoError("curve " + path.string() + ": cannot parse '" + s + "'");
        }
    };
    ReliabilityCurve c;
    for (const auto& r : t.rows) {
        c.thresholds.push_back(parse(r[c0]));
        c.pf.push_back(parse(r[c1]));
        c.beta.push_back(parse(r[c2]));
        c.ci_low.push_back(parse(r[c3]));
        c.ci_high.push_back(parse(r[c4]));
    }
    return c;
}

void write_summary(const std::filesystem::path& hist_path, const std::filesystem::path& cdf_path,
                   const ResponseSummary& summary) {
    csv::Table h;
    h.header = {"bin_low", "bin_high", "count"};
    for (std::size_t b = 0; b < summary.counts.size(); ++b) {
        h.rows.push_back({csv::format_double(summary.bin_edges[b]), csv::format_double(summary.bin_edges[b + 1]),
                          std::to_string(summary.counts[b])});
    }
    csv::write_table(hist_path, h);
    csv::Table c;
    c.header = {"value", "cdf"};
    for (std::size_t i = 0; i < summary.sorted.size(); ++i) {
        const double v = summary.sorted[i];
        c.rows.push_back({std::isinf(v) ? std::string("inf") : csv::format_double(v), csv::format_double(summary.cdf[i])});
    }
    csv::write_table(cdf_path, c);
}

}  // namespace dynsur::reliability
