#pragma once

#include "dynsur/signal.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dynsur::reliability {

enum class FailureMode { absolute, signed_max };

FailureMode parse_failure_mode(const std::string& s);

struct FailureSpec {
    std::string response_label;
    double threshold = 0.0;
    FailureMode mode = FailureMode::absolute;
};

double max_response(std::span<const double> values, FailureMode mode = FailureMode::absolute);
double max_response(const Trajectory& traj, FailureMode mode = FailureMode::absolute);

/// min over t of g = y_adm - response(t).
double min_limit_state(std::span<const double> values, double threshold, FailureMode mode = FailureMode::absolute);

struct PfEstimate {
    double pf = 0.0;
    double ci_low = 0.0;
    double ci_high = 1.0;
    std::size_t exceedances = 0;
    std::size_t n = 0;
};

/// pf = #{m > threshold} / n with Clopper-Pearson bounds at `confidence`.
PfEstimate estimate_pf(std::span<const double> max_responses, double threshold, double confidence = 0.95);

struct ReliabilityCurve {
    std::vector<double> thresholds;
    std::vector<double> pf;
    std::vector<double> beta;
    std::vector<double> ci_low;
    std::vector<double> ci_high;
    std::size_t n_samples = 0;
};

ReliabilityCurve pf_curve(std::span<const double> max_responses, std::span<const double> thresholds,
                          double confidence = 0.95);

double normal_cdf(double x);
/// Standard normal quantile (rational approximation refined against erfc).
double normal_quantile(double p);

/// beta = -Phi^{-1}(pf); +inf at pf = 0, -inf at pf = 1.
double reliability_index(double pf);

struct ResponseSummary {
    std::vector<double> bin_edges;
    std::vector<std::size_t> counts;
    std::vector<double> sorted;
    std::vector<double> cdf;
};

ResponseSummary response_summary(std::span<const double> max_responses, std::size_t bins);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::span<const double> a, std::span<const double> b);
/// One-sample KS statistic against the uniform distribution on [lo, hi].
double ks_uniform_statistic(std::span<const double> sample, double lo, double hi);
/// Asymptotic Kolmogorov survival function P(sqrt(n) D > x).
double kolmogorov_survival(double x);

/// Threshold at which the empirical pf equals Phi(-beta): midpoint between the k-th and (k+1)-th
/// largest values, k = round(Phi(-beta) * n).
double threshold_at_beta(std::span<const double> max_responses, double beta);

/// Evenly spaced thresholds.
std::vector<double> linspace(double lo, double hi, std::size_t count);

void write_curve(const std::filesystem::path& path, const ReliabilityCurve& curve);
ReliabilityCurve read_curve(const std::filesystem::path& path);
void write_summary(const std::filesystem::path& hist_path, const std::filesystem::path& cdf_path,
                   const ResponseSummary& summary);

}  // namespace dynsur::reliability
