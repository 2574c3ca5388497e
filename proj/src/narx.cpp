#include "dynsur/narx.hpp"

#include "dynsur/errors.hpp"
#include "dynsur/parallel.hpp"
#include "dynsur/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

namespace dynsur::narx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Channels = std::map<std::string, std::vector<double>>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_lags(const std::vector<std::size_t>& lags, const std::string& what, bool allow_zero) {
    for (std::size_t i = 0; i < lags.size(); ++i) {
        if (!allow_zero && lags[i] == 0) {
            throw ConfigError(what + ": autoregressive lags must be >= 1");
        }
        if (i > 0 && lags[i] <= lags[i - 1]) {
            throw ConfigError(what + ": lags must be sorted ascending without repeats");
        }
    }
}

void check_basis(const BasisOptions& b, const std::string& what) {
    if (b.max_degree < 1 || b.max_interaction < 1) {
        throw ConfigError(what + ": degree and interaction must be >= 1");
    }
}

std::vector<std::size_t> iota_lags(std::size_t first, std::size_t count) {
    std::vector<std::size_t> v(count);
    std::iota(v.begin(), v.end(), first);
    return v;
}

// Resolved inputs of one stage on one trace.
struct StageInputs {
    std::vector<const std::vector<double>*> exogenous;
    std::size_t n = 0;
};

StageInputs resolve_inputs(const StageSpec& spec, const Channels& channels) {
    StageInputs in;
    for (const auto& label : stage_inputs(spec)) {
        auto it = channels.find(label);
        if (it == channels.end()) {
            throw ConfigError("stage '" + stage_output(spec) + "': input channel '" + label + "' not available");
        }
        if (in.n == 0) {
            in.n = it->second.size();
        } else if (it->second.size() != in.n) {
            throw DimensionError("stage '" + stage_output(spec) + "': input channels differ in length");
        }
        in.exogenous.push_back(&it->second);
    }
    return in;
}

// Builds regressor rows for one stage; identical code serves teacher forcing and forecasting.
class RowBuilder {
public:
    RowBuilder(const StageSpec& spec, const std::vector<features::PcaMap>& pca) : spec_(spec), pca_(pca) {
        std::visit(overloaded{[&](const NarxSpec& s) {
                                  n_reg_ = s.n_regressors();
                              },
                              [&](const FNarxSpec& s) {
                                  std::size_t expected = s.channels.size() + (s.ar_window > 0 ? 1 : 0);
                                  if (pca_.size() != expected) {
                                      throw DimensionError("f-narx stage '" + s.output +
                                                           "': PCA map count does not match the channels");
                                  }
                                  n_reg_ = 0;
                                  std::size_t widest = s.ar_window;
                                  for (const auto& m : pca_) {
                                      n_reg_ += m.n_features();
                                      widest = std::max(widest, m.n_cols());
                                  }
                                  window_.resize(widest);
                                  feat_.resize(n_reg_);
                              }},
                   spec_);
    }

    std::size_t n_regressors() const noexcept { return n_reg_; }

    void fill(const StageInputs& in, const std::vector<double>& y, std::size_t t, double* row) {
        std::visit(overloaded{[&](const NarxSpec& s) {
                                  std::size_t k = 0;
                                  for (std::size_t l : s.ar_lags) {
                                      row[k++] = y[t - l];
                                  }
                                  for (std::size_t c = 0; c < s.exogenous.size(); ++c) {
                                      const auto& x = *in.exogenous[c];
                                      for (std::size_t l : s.exogenous[c].lags) {
                                          row[k++] = x[t - l];
                                      }
                                  }
                              },
                              [&](const FNarxSpec& s) {
                                  std::size_t k = 0;
                                  if (s.ar_window > 0) {
                                      const auto& m = pca_.back();
                                      for (std::size_t l = 0; l < s.ar_window; ++l) {
                                          window_[l] = y[t - 1 - l];
                                      }
                                      m.project_row(std::span<const double>(window_.data(), s.ar_window),
                                                    std::span<double>(row + k, m.n_features()));
                                      k += m.n_features();
                                  }
                                  for (std::size_t c = 0; c < s.channels.size(); ++c) {
                                      const auto& x = *in.exogenous[c];
                                      const auto& m = pca_[c];
                                      const std::size_t w = s.channels[c].window;
                                      for (std::size_t l = 0; l < w; ++l) {
                                          window_[l] = x[t - l];
                                      }
                                      m.project_row(std::span<const double>(window_.data(), w),
                                                    std::span<double>(row + k, m.n_features()));
                                      k += m.n_features();
                                  }
                              }},
                   spec_);
    }

private:
    const StageSpec& spec_;
    const std::vector<features::PcaMap>& pca_;
    std::size_t n_reg_ = 0;
    std::vector<double> window_;
    std::vector<double> feat_;
};

Channels channels_of(const Scenario& s) {
    Channels ch;
    for (const auto& x : s.excitations) {
        ch[x.label()] = x.values();
    }
    for (const auto& [label, y] : s.responses) {
        ch.emplace(label, y.values());
    }
    return ch;
}

std::vector<double> forecast_stage(const FittedStage& stage, const StageInputs& in, std::size_t n,
                                   const std::vector<double>* initial, const regression::CompiledBasis& cb,
                                   double divergence_factor) {
    const std::size_t t_min = stage.t_min();
    const std::string& label = stage_output(stage.spec);
    if (n <= t_min) {
        throw DimensionError("forecast '" + label + "': trace shorter than the model memory");
    }
    std::vector<double> y(n, 0.0);
    if (initial) {
        if (initial->size() < t_min) {
            throw DimensionError("forecast '" + label + "': initial segment shorter than t_min");
        }
        std::copy(initial->begin(), initial->begin() + static_cast<std::ptrdiff_t>(t_min), y.begin());
    }
    RowBuilder rb(stage.spec, stage.pca);
    std::vector<double> row(rb.n_regressors());
    const double limit = divergence_factor * stage.max_train_abs;
    const Vector& theta = stage.model.theta;
    for (std::size_t t = t_min; t < n; ++t) {
        rb.fill(in, y, t, row.data());
        const double v = theta.size() == 0 ? 0.0 : cb.dot(row, theta);
        if (!std::isfinite(v) || std::abs(v) > limit) {
            std::ostringstream msg;
            msg << "forecast of '" << label << "' diverged at step " << t << " (|y_hat| = " << std::abs(v)
                << ", limit " << limit << ")";
            throw DivergenceError(msg.str(), label, t);
        }
        y[t] = v;
    }
    return y;
}

double population_variance(std::span<const double> v) {
    if (v.empty()) {
        return 0.0;
    }
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return s / static_cast<double>(v.size());
}

// `scoring` holds the training traces with upstream stage outputs replaced by the chain's own
// forecasts (empty map: upstream diverged); forecast knot selection scores candidates on it.
FittedStage fit_stage(const StageSpec& spec, const std::vector<Channels>& traces, const TrainingOptions& opt,
                      const std::vector<Channels>* scoring = nullptr) {
    const std::string& label = stage_output(spec);
    const std::size_t t_min = stage_t_min(spec);

    std::vector<StageInputs> inputs;
    std::vector<const std::vector<double>*> outputs;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        auto it = traces[i].find(label);
        if (it == traces[i].end()) {
            throw ConfigError("training trace " + std::to_string(i) + " has no output '" + label + "'");
        }
        StageInputs in = resolve_inputs(spec, traces[i]);
        if (in.n == 0) {
            in.n = it->second.size();
        }
        if (it->second.size() != in.n) {
            throw DimensionError("stage '" + label + "': output and inputs differ in length");
        }
        if (in.n <= t_min + 1) {
            throw DimensionError("stage '" + label + "': trace shorter than the model memory");
        }
        inputs.push_back(std::move(in));
        outputs.push_back(&it->second);
    }

    FittedStage stage;
    stage.spec = spec;

    if (const auto* fs = std::get_if<FNarxSpec>(&spec)) {
        auto stacked_pca = [&](auto&& get_traj, const std::vector<std::size_t>& lags) {
            std::vector<Matrix> blocks;
            Eigen::Index rows = 0;
            for (std::size_t i = 0; i < traces.size(); ++i) {
                const std::vector<double>& v = get_traj(i);
                Trajectory tr(TimeGrid(0.0, 1.0, v.size()), v, "w");
                blocks.push_back(build_lagged_matrix(tr, lags, t_min).rows);
                rows += blocks.back().rows();
            }
            Matrix all(rows, static_cast<Eigen::Index>(lags.size()));
            Eigen::Index r = 0;
            for (const auto& b : blocks) {
                all.middleRows(r, b.rows()) = b;
                r += b.rows();
            }
            return features::fit_pca(all, fs->pca_threshold);
        };
        for (std::size_t c = 0; c < fs->channels.size(); ++c) {
            stage.pca.push_back(stacked_pca([&](std::size_t i) -> const std::vector<double>& { return *inputs[i].exogenous[c]; },
                                            iota_lags(0, fs->channels[c].window)));
        }
        if (fs->ar_window > 0) {
            stage.pca.push_back(stacked_pca([&](std::size_t i) -> const std::vector<double>& { return *outputs[i]; },
                                            iota_lags(1, fs->ar_window)));
        }
    }

    RowBuilder rb(stage.spec, stage.pca);
    const std::size_t n_reg = rb.n_regressors();
    std::vector<std::size_t> row_offset(traces.size() + 1, 0);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        row_offset[i + 1] = row_offset[i] + (inputs[i].n - t_min);
    }
    const std::size_t total = row_offset.back();
    Matrix regressors(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(n_reg));
    Vector target(static_cast<Eigen::Index>(total));
    {
        std::vector<double> row(n_reg);
        for (std::size_t i = 0; i < traces.size(); ++i) {
            const auto& y = *outputs[i];
            for (std::size_t t = t_min; t < inputs[i].n; ++t) {
                rb.fill(inputs[i], y, t, row.data());
                const auto r = static_cast<Eigen::Index>(row_offset[i] + t - t_min);
                for (std::size_t k = 0; k < n_reg; ++k) {
                    regressors(r, static_cast<Eigen::Index>(k)) = row[k];
                }
                target[r] = y[t];
            }
            for (double v : y) {
                stage.max_train_abs = std::max(stage.max_train_abs, std::abs(v));
            }
        }
    }

    const BasisOptions& bo = std::visit([](const auto& s) -> const BasisOptions& { return s.basis; }, spec);
    stage.basis_spec.n_regressors = n_reg;
    stage.basis_spec.max_degree = bo.max_degree;
    stage.basis_spec.max_interaction = std::min<int>(bo.max_interaction, static_cast<int>(n_reg));
    stage.basis_spec.include_constant = bo.include_constant;
    stage.basis_spec.max_size = bo.max_size;
    const auto candidates = regression::enumerate_basis(stage.basis_spec);

    // Rows for the sparse path.
    std::vector<std::size_t> rows;
    if (opt.lars_trace) {
        if (*opt.lars_trace >= traces.size()) {
            throw IndexError("lars_trace beyond the number of training traces");
        }
        rows.resize(row_offset[*opt.lars_trace + 1] - row_offset[*opt.lars_trace]);
        std::iota(rows.begin(), rows.end(), row_offset[*opt.lars_trace]);
    } else {
        rows.resize(total);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    if (opt.max_rows > 0 && rows.size() > opt.max_rows) {
        auto pick = draw_row_indices(rows.size(), opt.max_rows, SubsampleMode::uniform_without_replacement,
                                     derive_seed(opt.seed, "rows/" + label));
        std::sort(pick.begin(), pick.end());
        std::vector<std::size_t> sub;
        sub.reserve(pick.size());
        for (auto p : pick) {
            sub.push_back(rows[p]);
        }
        rows = std::move(sub);
    }

    regression::SparseModel sparse;
    {
        const regression::CompiledBasis cb_all(candidates);
        Matrix reg_sub(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_reg));
        Vector y_sub(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            reg_sub.row(static_cast<Eigen::Index>(r)) = regressors.row(static_cast<Eigen::Index>(rows[r]));
            y_sub[static_cast<Eigen::Index>(r)] = target[static_cast<Eigen::Index>(rows[r])];
        }
        Matrix x = cb_all.evaluate_rows(reg_sub);
        reg_sub.resize(0, 0);
        const regression::LarsPath path = regression::lars_path(x, y_sub, opt.lars);
        const std::size_t loo_knot = regression::best_knot(path, y_sub);
        auto with_basis = [&](std::size_t k) {
            regression::SparseModel m = regression::refit_knot(x, y_sub, path, k);
            for (std::size_t c : m.columns) {
                m.basis.push_back(candidates[c]);
            }
            return m;
        };
        if (opt.knot_selection == TrainingOptions::KnotSelection::forecast && path.knots.size() > 1) {
            std::vector<std::size_t> knots{loo_knot};
            const std::size_t last = path.knots.size() - 1;
            const std::size_t n_pick = std::max<std::size_t>(opt.forecast_knots, 1);
            for (std::size_t i = 1; i <= n_pick; ++i) {
                knots.push_back(std::max<std::size_t>(1, (i * last + n_pick / 2) / n_pick));
            }
            std::sort(knots.begin(), knots.end());
            knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

            double max_var = 0.0;
            for (const auto* y : outputs) {
                max_var = std::max(max_var, population_variance(*y));
            }
            std::vector<std::optional<StageInputs>> score_in(traces.size());
            for (std::size_t i = 0; i < traces.size(); ++i) {
                if (!scoring) {
                    score_in[i] = inputs[i];
                } else if (!(*scoring)[i].empty()) {
                    score_in[i] = resolve_inputs(spec, (*scoring)[i]);
                    score_in[i]->n = inputs[i].n;
                }
            }
            double best = kInf;
            std::size_t chosen = loo_knot;
            for (std::size_t k : knots) {
                stage.model = with_basis(k);
                const regression::CompiledBasis cbk(stage.model.basis);
                // score the coefficients that would be deployed, i.e. OLS on every row
                if (!stage.model.basis.empty()) {
                    try {
                        stage.model.theta = regression::fit_ols(cbk.evaluate_rows(regressors), target);
                    } catch (const SingularityError&) {
                        continue;
                    }
                }
                double sum = 0.0;
                for (std::size_t i = 0; i < traces.size() && std::isfinite(sum); ++i) {
                    if (!score_in[i]) {
                        continue;
                    }
                    try {
                        sum += forecast_error(*outputs[i],
                                              forecast_stage(stage, *score_in[i], inputs[i].n, nullptr, cbk,
                                                             opt.divergence_factor),
                                              1e-12 * max_var);
                    } catch (const DivergenceError&) {
                        sum = kInf;
                    }
                }
                if (sum < best * (1.0 - 1e-9)) {
                    best = sum;
                    chosen = k;
                }
            }
            sparse = with_basis(chosen);
        } else {
            sparse = with_basis(loo_knot);
        }
    }

    // Coefficients of the support from every row.
    const regression::CompiledBasis cb(sparse.basis);
    Vector fitted = Vector::Zero(static_cast<Eigen::Index>(total));
    if (!sparse.basis.empty()) {
        const Matrix xs = cb.evaluate_rows(regressors);
        sparse.theta = regression::fit_ols(xs, target);
        fitted = xs * sparse.theta;
    } else {
        sparse.theta = Vector();
    }
    sparse.diagnostics.training_error = (target - fitted).squaredNorm() / static_cast<double>(total);
    stage.model = std::move(sparse);

    auto& diag = stage.diagnostics;
    diag.rows_total = total;
    diag.rows_sparse = rows.size();
    diag.candidate_terms = candidates.size();

    // Teacher forcing vs recursion on every training trace.
    double max_var = 0.0;
    for (const auto* y : outputs) {
        max_var = std::max(max_var, population_variance(*y));
    }
    const double gamma = 1e-12 * max_var;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const std::size_t n = inputs[i].n;
        std::vector<double> one_step(n, 0.0);
        for (std::size_t t = t_min; t < n; ++t) {
            one_step[t] = fitted[static_cast<Eigen::Index>(row_offset[i] + t - t_min)];
        }
        const double e1 = forecast_error(*outputs[i], one_step, gamma);
        double er = kInf;
        try {
            er = forecast_error(*outputs[i], forecast_stage(stage, inputs[i], n, nullptr, cb, opt.divergence_factor),
                                gamma);
        } catch (const DivergenceError&) {
        }
        diag.one_step_error.push_back(e1);
        diag.recursive_error.push_back(er);
        if (e1 > er * (1.0 + 1e-9) + 1e-15) {
            ++diag.teacher_forcing_violations;
        }
    }
    return stage;
}

}  // namespace

void NarxSpec::validate() const {
    if (output.empty()) {
        throw ConfigError("narx: output label is empty");
    }
    check_lags(ar_lags, "narx '" + output + "'", false);
    for (const auto& in : exogenous) {
        if (in.label.empty() || in.label == output) {
            throw ConfigError("narx '" + output + "': invalid exogenous label '" + in.label + "'");
        }
        if (in.lags.empty()) {
            throw ConfigError("narx '" + output + "': exogenous input '" + in.label + "' has no lags");
        }
        check_lags(in.lags, "narx '" + output + "' input '" + in.label + "'", true);
    }
    if (n_regressors() == 0) {
        throw ConfigError("narx '" + output + "': no regressors");
    }
    check_basis(basis, "narx '" + output + "'");
}

std::size_t NarxSpec::t_min() const {
    std::size_t t = ar_lags.empty() ? 0 : ar_lags.back();
    for (const auto& in : exogenous) {
        if (!in.lags.empty()) {
            t = std::max(t, in.lags.back());
        }
    }
    return t;
}

std::size_t NarxSpec::n_regressors() const {
    std::size_t n = ar_lags.size();
    for (const auto& in : exogenous) {
        n += in.lags.size();
    }
    return n;
}

void FNarxSpec::validate() const {
    if (output.empty()) {
        throw ConfigError("f-narx: output label is empty");
    }
    for (const auto& c : channels) {
        if (c.label.empty() || c.label == output) {
            throw ConfigError("f-narx '" + output + "': invalid channel label '" + c.label + "'");
        }
        if (c.window < 1) {
            throw ConfigError("f-narx '" + output + "': window of '" + c.label + "' must be >= 1");
        }
    }
    if (channels.empty() && ar_window == 0) {
        throw ConfigError("f-narx '" + output + "': no inputs");
    }
    if (!(pca_threshold > 0.0 && pca_threshold <= 1.0)) {
        throw ConfigError("f-narx '" + output + "': pca threshold must lie in (0, 1]");
    }
    check_basis(basis, "f-narx '" + output + "'");
}

std::size_t FNarxSpec::t_min() const {
    std::size_t t = ar_window;
    for (const auto& c : channels) {
        t = std::max(t, c.window - 1);
    }
    return t;
}

const std::string& stage_output(const StageSpec& stage) {
    return std::visit([](const auto& s) -> const std::string& { return s.output; }, stage);
}

std::vector<std::string> stage_inputs(const StageSpec& stage) {
    std::vector<std::string> out;
    std::visit(overloaded{[&](const NarxSpec& s) {
                              for (const auto& in : s.exogenous) {
                                  out.push_back(in.label);
                              }
                          },
                          [&](const FNarxSpec& s) {
                              for (const auto& c : s.channels) {
                                  out.push_back(c.label);
                              }
                          }},
               stage);
    return out;
}

std::size_t stage_t_min(const StageSpec& stage) {
    return std::visit([](const auto& s) { return s.t_min(); }, stage);
}

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::narx:
            return "narx";
        case Architecture::mnarx:
            return "mnarx";
        case Architecture::fnarx:
            return "fnarx";
    }
    return "unknown";
}

Architecture parse_architecture(const std::string& s) {
    if (s == "narx") {
        return Architecture::narx;
    }
    if (s == "mnarx") {
        return Architecture::mnarx;
    }
    if (s == "fnarx") {
        return Architecture::fnarx;
    }
    throw ConfigError("unknown architecture '" + s + "' (expected narx, mnarx or fnarx)");
}

void SurrogateSpec::validate() const {
    if (stages.empty()) {
        throw ConfigError("surrogate: no stages");
    }
    std::set<std::string> produced;
    std::set<std::string> derived_labels;
    for (const auto& d : derived) {
        if (d.label.empty() || d.source.empty() || d.label == d.source) {
            throw ConfigError("surrogate: invalid derived channel '" + d.label + "'");
        }
        derived_labels.insert(d.label);
    }
    std::set<std::string> outputs;
    for (const auto& st : stages) {
        outputs.insert(stage_output(st));
    }
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const auto& st = stages[k];
        std::visit([](const auto& s) { s.validate(); }, st);
        if (architecture == Architecture::fnarx && !std::holds_alternative<FNarxSpec>(st)) {
            throw ConfigError("surrogate: f-narx architecture requires f-narx stages");
        }
        if (architecture != Architecture::fnarx && !std::holds_alternative<NarxSpec>(st)) {
            throw ConfigError("surrogate: narx/mnarx architectures require lag-based stages");
        }
        const std::string& out = stage_output(st);
        if (produced.count(out) || derived_labels.count(out)) {
            throw ConfigError("surrogate: output '" + out + "' produced twice");
        }
        for (const auto& in : stage_inputs(st)) {
            if (outputs.count(in) && !produced.count(in)) {
                throw ConfigError("surrogate: stage '" + out + "' consumes '" + in +
                                  "' before the stage that predicts it");
            }
        }
        produced.insert(out);
    }
    for (const auto& d : derived) {
        if (outputs.count(d.source)) {
            throw ConfigError("surrogate: derived channel '" + d.label + "' must come from a raw input");
        }
    }
    if (architecture == Architecture::narx && stages.size() != 1) {
        throw ConfigError("surrogate: classical narx has exactly one stage");
    }
}

const std::string& SurrogateSpec::qoi() const {
    if (stages.empty()) {
        throw ConfigError("surrogate: no stages");
    }
    return stage_output(stages.back());
}

const std::string& FittedSurrogate::qoi() const {
    if (stages.empty()) {
        throw ConfigError("surrogate: no stages");
    }
    return stage_output(stages.back().spec);
}

Scenario with_derived_channels(const Scenario& scenario, std::span<const DerivedChannel> derived) {
    Scenario out = scenario;
    for (const auto& d : derived) {
        if (out.find(d.label)) {
            continue;
        }
        const Trajectory* src = out.find(d.source);
        if (!src) {
            throw ConfigError("derived channel '" + d.label + "': source '" + d.source + "' not found");
        }
        out.excitations.push_back(cumulative_trapezoid(*src, d.label));
    }
    return out;
}

FittedSurrogate fit_surrogate(std::span<const Scenario> ed, const SurrogateSpec& spec) {
    spec.validate();
    if (ed.empty()) {
        throw SizeError("fit: empty experimental design");
    }
    std::vector<Channels> traces;
    traces.reserve(ed.size());
    for (const auto& s : ed) {
        s.validate();
        traces.push_back(channels_of(with_derived_channels(s, spec.derived)));
    }
    FittedSurrogate model;
    model.architecture = spec.architecture;
    model.derived = spec.derived;
    model.training = spec.training;
    const bool chain_scoring =
        spec.training.knot_selection == TrainingOptions::KnotSelection::forecast && spec.stages.size() > 1;
    std::vector<Channels> chained = chain_scoring ? traces : std::vector<Channels>{};
    for (const auto& st : spec.stages) {
        model.stages.push_back(fit_stage(st, traces, spec.training, chain_scoring ? &chained : nullptr));
        if (!chain_scoring) {
            continue;
        }
        const FittedStage& fitted = model.stages.back();
        const regression::CompiledBasis cb(fitted.model.basis);
        for (auto& ch : chained) {
            if (ch.empty()) {
                continue;
            }
            try {
                const StageInputs in = resolve_inputs(st, ch);
                const std::size_t n = ch.at(stage_output(st)).size();
                ch[stage_output(st)] = forecast_stage(fitted, in, n, nullptr, cb, spec.training.divergence_factor);
            } catch (const DivergenceError&) {
                ch.clear();
            }
        }
    }
    auto err = mean_forecast_error(model, ed);
    model.training_errors = std::move(err.per_trace);
    model.mean_training_error = err.mean;
    return model;
}

FittedSurrogate fit_narx(std::span<const Scenario> ed, const NarxSpec& spec, const TrainingOptions& options) {
    SurrogateSpec s;
    s.architecture = Architecture::narx;
    s.stages.emplace_back(spec);
    s.training = options;
    return fit_surrogate(ed, s);
}

FittedSurrogate fit_mnarx(std::span<const Scenario> ed, const std::vector<NarxSpec>& stages,
                          const TrainingOptions& options) {
    SurrogateSpec s;
    s.architecture = Architecture::mnarx;
    for (const auto& st : stages) {
        s.stages.emplace_back(st);
    }
    s.training = options;
    return fit_surrogate(ed, s);
}

FittedSurrogate fit_fnarx(std::span<const Scenario> ed, const std::vector<FNarxSpec>& stages,
                          const std::vector<DerivedChannel>& derived, const TrainingOptions& options) {
    SurrogateSpec s;
    s.architecture = Architecture::fnarx;
    for (const auto& st : stages) {
        s.stages.emplace_back(st);
    }
    s.derived = derived;
    s.training = options;
    return fit_surrogate(ed, s);
}

std::map<std::string, Trajectory> forecast(const FittedSurrogate& model, const Scenario& inputs,
                                           const ForecastOptions& options) {
    const Scenario full = with_derived_channels(inputs, model.derived);
    full.validate();
    const TimeGrid& grid = full.grid();
    Channels channels;
    for (const auto& x : full.excitations) {
        channels[x.label()] = x.values();
    }
    std::map<std::string, Trajectory> out;
    for (const auto& stage : model.stages) {
        const std::string& label = stage_output(stage.spec);
        std::vector<double> y;
        if (options.true_channels.count(label)) {
            auto it = full.responses.find(label);
            if (it == full.responses.end()) {
                throw ConfigError("forecast: true trajectory of '" + label + "' requested but not supplied");
            }
            y = it->second.values();
        } else {
            StageInputs in = resolve_inputs(stage.spec, channels);
            const std::vector<double>* initial = nullptr;
            if (auto it = options.initial_segments.find(label); it != options.initial_segments.end()) {
                initial = &it->second;
            }
            const regression::CompiledBasis cb(stage.model.basis);
            y = forecast_stage(stage, in, grid.size(), initial, cb, model.training.divergence_factor);
        }
        channels[label] = y;
        out.emplace(label, Trajectory(grid, std::move(y), label));
    }
    return out;
}

Trajectory forecast_qoi(const FittedSurrogate& model, const Scenario& inputs, const ForecastOptions& options) {
    auto all = forecast(model, inputs, options);
    return all.at(model.qoi());
}

double forecast_error(std::span<const double> truth, std::span<const double> prediction, double gamma) {
    if (truth.size() != prediction.size() || truth.empty()) {
        throw DimensionError("forecast_error: length mismatch");
    }
    double sse = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double d = truth[k] - prediction[k];
        sse += d * d;
    }
    const double denom = population_variance(truth) + gamma;
    const double mse = sse / static_cast<double>(truth.size());
    if (mse == 0.0) {
        return 0.0;
    }
    if (!(denom > 0.0)) {
        return kInf;
    }
    return mse / denom;
}

ForecastErrorSummary mean_forecast_error(const FittedSurrogate& model, std::span<const Scenario> traces,
                                         double gamma_rel, std::size_t jobs) {
    ForecastErrorSummary out;
    if (traces.empty()) {
        throw SizeError("mean_forecast_error: no traces");
    }
    const std::string& qoi = model.qoi();
    double max_var = 0.0;
    for (const auto& s : traces) {
        auto it = s.responses.find(qoi);
        if (it == s.responses.end()) {
            throw ConfigError("mean_forecast_error: trace without response '" + qoi + "'");
        }
        max_var = std::max(max_var, population_variance(it->second.view()));
    }
    const double gamma = gamma_rel * max_var;
    out.per_trace.assign(traces.size(), kInf);
    parallel_for(traces.size(), jobs, [&](std::size_t i) {
        try {
            const Trajectory pred = forecast_qoi(model, traces[i]);
            out.per_trace[i] = forecast_error(traces[i].responses.at(qoi).view(), pred.view(), gamma);
        } catch (const DivergenceError&) {
            out.per_trace[i] = kInf;
        }
    });
    double sum = 0.0;
    for (double e : out.per_trace) {
        if (!std::isfinite(e)) {
            ++out.diverged;
        }
        sum += e;
    }
    out.mean = sum / static_cast<double>(traces.size());
    return out;
}

SelectionResult select_model(std::span<const Scenario> ed, std::span<const SurrogateSpec> candidates,
                             std::size_t jobs) {
    if (candidates.empty()) {
        throw ConfigError("select_model: no candidates");
    }
    if (ed.empty()) {
        throw SizeError("select_model: empty experimental design");
    }
    const std::string& qoi = candidates.front().qoi();
    for (const auto& c : candidates) {
        if (c.qoi() != qoi) {
            throw ConfigError("select_model: candidates predict different quantities");
        }
    }
    SelectionResult res;
    double best_amp = -1.0;
    for (std::size_t i = 0; i < ed.size(); ++i) {
        auto it = ed[i].responses.find(qoi);
        if (it == ed[i].responses.end()) {
            throw ConfigError("select_model: trace without response '" + qoi + "'");
        }
        double amp = 0.0;
        for (double v : it->second.values()) {
            amp = std::max(amp, std::abs(v));
        }
        if (amp > best_amp) {
            best_amp = amp;
            res.selection_trace = i;
        }
    }

    std::vector<std::optional<FittedSurrogate>> fitted(candidates.size());
    res.mean_errors.assign(candidates.size(), kInf);
    parallel_for(candidates.size(), jobs, [&](std::size_t c) {
        SurrogateSpec spec = candidates[c];
        spec.training.lars_trace = res.selection_trace;
        try {
            fitted[c] = fit_surrogate(ed, spec);
            res.mean_errors[c] = fitted[c]->mean_training_error;
        } catch (const NumericalError&) {
            res.mean_errors[c] = kInf;
        }
    });
    std::size_t best = candidates.size();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (std::isfinite(res.mean_errors[c]) && (best == candidates.size() || res.mean_errors[c] < res.mean_errors[best])) {
            best = c;
        }
    }
    if (best == candidates.size()) {
        throw NumericalError("select_model: every candidate diverged or failed to fit");
    }
    res.best = best;
    res.model = std::move(*fitted[best]);
    return res;
}

}  // namespace dynsur::narx
