#pragma once

#include "dynsur/design.hpp"
#include "dynsur/excitation.hpp"
#include "dynsur/narx.hpp"
#include "dynsur/reliability.hpp"
#include "dynsur/simulators.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dynsur::config {

enum class System { quarter_car, bouc_wen };

System parse_system(const std::string& s);
std::string to_string(System s);

struct SystemConfig {
    System system = System::quarter_car;
    sim::QuarterCarParams quarter_car;
    sim::BoucWenParams bouc_wen;
    sim::SimOptions sim;
    excitation::HarmonicSuperpositionSpec harmonic;
    excitation::GroundMotionSpec ground_motion;

    /// "x" for the road profile, "xdd" for ground acceleration.
    std::string excitation_label() const;
    /// Responses stored in training scenarios.
    std::vector<std::string> response_labels() const;
    /// Default quantity of interest: y2 (quarter-car body) or y (Bouc-Wen displacement).
    std::string default_qoi() const;
    const TimeGrid& grid() const;
};

struct SurrogateEntry {
    std::string name;
    narx::SurrogateSpec spec;
    /// Non-empty: the spec is chosen among these by select_model (spec is then ignored).
    std::vector<narx::SurrogateSpec> candidates;
    /// Empty means every strategy / size of the design section.
    std::set<design::Strategy> strategies;
    std::vector<std::size_t> n_ed;
};

struct ThresholdConfig {
    /// When unset, the grid spans the reference maxima.
    std::optional<double> lo;
    std::optional<double> hi;
    std::size_t count = 400;
};

struct RunConfig {
    std::string name = "run";
    std::uint64_t seed = 1;
    SystemConfig system;
    std::size_t pool_size = 20000;
    std::vector<std::size_t> n_ed{10, 50, 100};
    std::vector<design::Strategy> strategies{design::Strategy::random, design::Strategy::biased};
    std::vector<SurrogateEntry> surrogates;
    std::size_t n_mcs = 20000;
    std::size_t n_error_traces = 200;
    std::string qoi;
    reliability::FailureMode mode = reliability::FailureMode::absolute;
    ThresholdConfig thresholds;
    std::size_t bins = 50;
    std::filesystem::path output_dir = "runs";

    void validate() const;
};

SystemConfig parse_system_config(const nlohmann::json& j);
nlohmann::json system_to_json(const SystemConfig& s);

/// Parses a run document; missing sections keep their defaults.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_to_json(const RunConfig& c);

/// Smaller pool and validation ensemble for smoke runs.
void apply_quick(RunConfig& c);

/// Locates a preset by name (quarter-car, bouc-wen) or path.
std::filesystem::path find_preset(const std::string& name_or_path);

}  // namespace dynsur::config
