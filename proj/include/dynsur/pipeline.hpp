#pragma once

#include "dynsur/config.hpp"
#include "dynsur/excitation.hpp"
#include "dynsur/narx.hpp"
#include "dynsur/reliability.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dynsur::pipeline {

/// Excitation generator plus simulator for one configured system.
class SystemModel {
public:
    explicit SystemModel(config::SystemConfig cfg);

    const config::SystemConfig& config() const noexcept { return cfg_; }
    Trajectory excitation(std::uint64_t seed) const;
    /// Amplitude statistic used by the biased design: max |x| or max |xdd|.
    double amplitude(const Trajectory& x) const;
    /// Scenario with the excitation and every response label filled in.
    Scenario simulate(const Trajectory& x) const;
    Scenario simulate_seed(std::uint64_t seed) const { return simulate(excitation(seed)); }

private:
    config::SystemConfig cfg_;
    std::shared_ptr<const excitation::GroundMotionGenerator> ground_motion_;
};

/// Ensemble seeds shared by the reference and every surrogate (matched seeds).
std::uint64_t validation_seed(std::uint64_t master, std::size_t i);

struct RunSummary {
    std::string surrogate;
    std::string strategy;
    std::size_t n_ed = 0;
    std::string selected;
    double eps_bar = 0.0;
    std::size_t n_divergent_validation = 0;
    std::size_t n_divergent_mcs = 0;
    double beta_ref_t3 = 0.0;
    double beta_t3 = 0.0;
    double rel_err_t3 = 0.0;
    /// max |beta - beta_ref| where 1e-3 <= pf_ref <= 1e-1.
    double max_dbeta = 0.0;
    double dbeta_pf01 = 0.0;
    double ks = 0.0;
    /// Largest |value| of each stage output over the validation forecasts.
    std::map<std::string, double> max_abs;
    std::string model_file;
};

struct BenchmarkResult {
    std::filesystem::path dir;
    double t3 = 0.0;
    double t01 = 0.0;
    std::vector<double> reference_maxima;
    /// Largest |value| of each response over the reference ensemble.
    std::map<std::string, double> reference_max_abs;
    std::vector<RunSummary> runs;

    const RunSummary* find(const std::string& surrogate, const std::string& strategy, std::size_t n_ed) const;
};

struct BenchmarkOptions {
    std::size_t jobs = 1;
    std::ostream* log = nullptr;
};

/// Pool, designs, reference ensemble, fits, surrogate ensembles, curves and manifest under
/// cfg.output_dir / cfg.name. On failure the manifest records the failed stage before rethrowing.
BenchmarkResult run_benchmark(const config::RunConfig& cfg, const BenchmarkOptions& options = {});

struct ValidationReport {
    std::vector<double> per_trace;
    double eps_bar = 0.0;
    std::size_t diverged = 0;
    double ks = 0.0;
    reliability::ReliabilityCurve reference;
    reliability::ReliabilityCurve surrogate;
};

/// Compares a surrogate with reference scenarios (per-trace error, max-response CDFs and curves).
ValidationReport validate_model(const narx::FittedSurrogate& model, std::span<const Scenario> reference,
                                reliability::FailureMode mode, std::size_t n_thresholds, std::size_t jobs = 1);

/// Hex SHA-256 digest of a file.
std::string sha256_file(const std::filesystem::path& path);

/// Every regular file below `dir` (relative path -> digest), excluding manifest.json.
nlohmann::json file_inventory(const std::filesystem::path& dir);

}  // namespace dynsur::pipeline
