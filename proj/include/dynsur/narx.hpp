#pragma once

#include "dynsur/features.hpp"
#include "dynsur/regression.hpp"
#include "dynsur/signal.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace dynsur::narx {

struct BasisOptions {
    int max_degree = 1;
    int max_interaction = 1;
    bool include_constant = true;
    std::size_t max_size = 100000;
};

struct LaggedInput {
    std::string label;
    /// Delays in steps; 0 is the current sample.
    std::vector<std::size_t> lags;
};

/// Polynomial NARX on discrete lags. Regressor order: output lags, then each exogenous input.
struct NarxSpec {
    std::string output;
    std::vector<LaggedInput> exogenous;
    std::vector<std::size_t> ar_lags;
    BasisOptions basis;

    void validate() const;
    std::size_t t_min() const;
    std::size_t n_regressors() const;
};

struct WindowInput {
    std::string label;
    /// Number of samples in the window: x(t), x(t - dt), ..., x(t - (window-1) dt).
    std::size_t window = 1;
};

/// NARX on PCA features of memory windows. The output window covers y(t - dt) ... y(t - ar_window dt);
/// ar_window = 0 disables the autoregressive part.
struct FNarxSpec {
    std::string output;
    std::vector<WindowInput> channels;
    std::size_t ar_window = 1;
    double pca_threshold = 0.99;
    BasisOptions basis;

    void validate() const;
    std::size_t t_min() const;
};

using StageSpec = std::variant<NarxSpec, FNarxSpec>;

const std::string& stage_output(const StageSpec& stage);
std::vector<std::string> stage_inputs(const StageSpec& stage);
std::size_t stage_t_min(const StageSpec& stage);

enum class Architecture { narx, mnarx, fnarx };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& s);

/// Channel obtained as the cumulative trapezoidal integral of another (zero initial value).
struct DerivedChannel {
    std::string label;
    std::string source;
};

struct TrainingOptions {
    /// Rows beyond this cap are subsampled uniformly for the sparse path; the support is then
    /// refitted by OLS on every row.
    std::size_t max_rows = 200000;
    std::uint64_t seed = 0;
    regression::LarsOptions lars;
    /// Restrict the sparse path to the rows of one training trace (model selection).
    std::optional<std::size_t> lars_trace;
    /// Forecast aborts when |y_hat| exceeds this factor times the largest training |y|.
    double divergence_factor = 1e6;
    /// forecast: the stage support is chosen among `forecast_knots` points of the LARS path
    /// (plus the corrected-LOO knot) by mean recursive error on the training traces.
    enum class KnotSelection { corrected_loo, forecast };
    KnotSelection knot_selection = KnotSelection::corrected_loo;
    std::size_t forecast_knots = 16;
};

struct SurrogateSpec {
    Architecture architecture = Architecture::mnarx;
    /// Chain order; the last stage predicts the quantity of interest.
    std::vector<StageSpec> stages;
    std::vector<DerivedChannel> derived;
    TrainingOptions training;

    /// Structural checks; stage k may only consume raw inputs, derived channels and outputs
    /// of stages before k.
    void validate() const;
    const std::string& qoi() const;
};

struct StageDiagnostics {
    std::size_t rows_total = 0;
    std::size_t rows_sparse = 0;
    std::size_t candidate_terms = 0;
    /// Per training trace, teacher forcing vs recursive forecast (other inputs true).
    std::vector<double> one_step_error;
    std::vector<double> recursive_error;
    std::size_t teacher_forcing_violations = 0;
};

struct FittedStage {
    StageSpec spec;
    /// F-NARX only: one map per channel in spec order, then the output window map.
    std::vector<features::PcaMap> pca;
    regression::BasisSpec basis_spec;
    regression::SparseModel model;
    double max_train_abs = 0.0;
    StageDiagnostics diagnostics;

    std::size_t t_min() const { return stage_t_min(spec); }
};

struct FittedSurrogate {
    Architecture architecture = Architecture::mnarx;
    std::vector<FittedStage> stages;
    std::vector<DerivedChannel> derived;
    TrainingOptions training;
    /// Full-chain recursive forecast errors of the quantity of interest on the training traces.
    std::vector<double> training_errors;
    double mean_training_error = 0.0;

    const std::string& qoi() const;
};

/// Adds derived channels to the excitations (no-op for labels already present).
Scenario with_derived_channels(const Scenario& scenario, std::span<const DerivedChannel> derived);

FittedSurrogate fit_surrogate(std::span<const Scenario> ed, const SurrogateSpec& spec);

FittedSurrogate fit_narx(std::span<const Scenario> ed, const NarxSpec& spec, const TrainingOptions& options = {});
FittedSurrogate fit_mnarx(std::span<const Scenario> ed, const std::vector<NarxSpec>& stages,
                          const TrainingOptions& options = {});
FittedSurrogate fit_fnarx(std::span<const Scenario> ed, const std::vector<FNarxSpec>& stages,
                          const std::vector<DerivedChannel>& derived, const TrainingOptions& options = {});

struct ForecastOptions {
    /// Stage outputs taken from the scenario responses instead of the chain's own predictions.
    std::set<std::string> true_channels;
    /// Output values for the steps before t_min; zeros when absent.
    std::map<std::string, std::vector<double>> initial_segments;
};

/// Stage-by-stage recursive forecast; returns every stage output.
std::map<std::string, Trajectory> forecast(const FittedSurrogate& model, const Scenario& inputs,
                                           const ForecastOptions& options = {});

Trajectory forecast_qoi(const FittedSurrogate& model, const Scenario& inputs, const ForecastOptions& options = {});

/// (1/N) sum (y - y_hat)^2 / (Var(y) + gamma), population variance.
double forecast_error(std::span<const double> truth, std::span<const double> prediction, double gamma);

struct ForecastErrorSummary {
    double mean = 0.0;
    std::vector<double> per_trace;
    std::size_t diverged = 0;
};

/// Divergent forecasts count as +inf. gamma = gamma_rel * largest trace variance.
ForecastErrorSummary mean_forecast_error(const FittedSurrogate& model, std::span<const Scenario> traces,
                                         double gamma_rel = 1e-12, std::size_t jobs = 1);

struct SelectionResult {
    std::size_t best = 0;
    std::size_t selection_trace = 0;
    std::vector<double> mean_errors;
    FittedSurrogate model;
};

/// Sparse path on the trace with the largest |QoI|, OLS on the whole design, choose the
/// candidate with the smallest mean recursive forecast error.
SelectionResult select_model(std::span<const Scenario> ed, std::span<const SurrogateSpec> candidates,
                             std::size_t jobs = 1);

}  // namespace dynsur::narx
