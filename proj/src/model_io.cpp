#include "dynsur/model_io.hpp"

#include "dynsur/errors.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dynsur::io {

namespace {

using narx::Architecture;
using narx::FNarxSpec;
using narx::NarxSpec;

// JSON has no infinity; store non-finite values as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double as_number(const json& j) {
    if (j.is_null()) {
        return std::numeric_limits<double>::infinity();
    }
    return j.get<double>();
}

json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(number(v[i]));
    }
    return a;
}

Vector vector_from(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = as_number(j[i]);
    }
    return v;
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError(where + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

template <class T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        return fallback;
    }
    return field<T>(j, key, where);
}

void basis_to(json& j, const narx::BasisOptions& b) {
    j["degree"] = b.max_degree;
    j["interaction"] = b.max_interaction;
    j["constant"] = b.include_constant;
    j["max_basis_size"] = b.max_size;
}

narx::BasisOptions basis_from(const json& j, const std::string& where) {
    narx::BasisOptions b;
    b.max_degree = field<int>(j, "degree", where);
    b.max_interaction = field<int>(j, "interaction", where);
    b.include_constant = field_or<bool>(j, "constant", true, where);
    b.max_size = field_or<std::size_t>(j, "max_basis_size", b.max_size, where);
    return b;
}

json training_to_json(const narx::TrainingOptions& t) {
    json j;
    j["max_rows"] = t.max_rows;
    j["seed"] = t.seed;
    j["max_terms"] = t.lars.max_terms;
    j["divergence_factor"] = t.divergence_factor;
    if (t.knot_selection == narx::TrainingOptions::KnotSelection::forecast) {
        j["knot_selection"] = "forecast";
        j["forecast_knots"] = t.forecast_knots;
    }
    if (t.lars_trace) {
        j["lars_trace"] = *t.lars_trace;
    }
    return j;
}

narx::TrainingOptions training_from_json(const json& j) {
    narx::TrainingOptions t;
    if (j.is_null()) {
        return t;
    }
    const std::string where = "training";
    t.max_rows = field_or<std::size_t>(j, "max_rows", t.max_rows, where);
    t.seed = field_or<std::uint64_t>(j, "seed", t.seed, where);
    t.lars.max_terms = field_or<std::size_t>(j, "max_terms", t.lars.max_terms, where);
    t.divergence_factor = field_or<double>(j, "divergence_factor", t.divergence_factor, where);
    const auto ks = field_or<std::string>(j, "knot_selection", "corrected_loo", where);
    if (ks == "forecast") {
        t.knot_selection = narx::TrainingOptions::KnotSelection::forecast;
    } else if (ks != "corrected_loo") {
        throw ConfigError(where + ": knot_selection must be 'corrected_loo' or 'forecast'");
    }
    t.forecast_knots = field_or<std::size_t>(j, "forecast_knots", t.forecast_knots, where);
    if (j.contains("lars_trace")) {
        t.lars_trace = field<std::size_t>(j, "lars_trace", where);
    }
    return t;
}

json sparse_to_json(const regression::SparseModel& m) {
    json j;
    j["columns"] = m.columns;
    j["terms"] = m.basis;
    j["theta"] = vector_json(m.theta);
    j["diagnostics"] = {{"path_length", m.diagnostics.path_length},
                        {"chosen_knot", m.diagnostics.chosen_knot},
                        {"chosen_lambda", number(m.diagnostics.chosen_lambda)},
                        {"selection_error", number(m.diagnostics.selection_error)},
                        {"training_error", number(m.diagnostics.training_error)},
                        {"truncated", m.diagnostics.truncated}};
    return j;
}

regression::SparseModel sparse_from_json(const json& j) {
    regression::SparseModel m;
    const std::string where = "sparse model";
    m.columns = field<std::vector<std::size_t>>(j, "columns", where);
    m.basis = field<std::vector<regression::MultiIndex>>(j, "terms", where);
    m.theta = vector_from(j.at("theta"));
    if (static_cast<std::size_t>(m.theta.size()) != m.basis.size()) {
        throw ConfigError("sparse model: coefficient count differs from term count");
    }
    const json& d = j.at("diagnostics");
    m.diagnostics.path_length = d.at("path_length").get<std::size_t>();
    m.diagnostics.chosen_knot = d.at("chosen_knot").get<std::size_t>();
    m.diagnostics.chosen_lambda = as_number(d.at("chosen_lambda"));
    m.diagnostics.selection_error = as_number(d.at("selection_error"));
    m.diagnostics.training_error = as_number(d.at("training_error"));
    m.diagnostics.truncated = d.at("truncated").get<bool>();
    return m;
}

}  // namespace

json stage_to_json(const narx::StageSpec& stage) {
    json j;
    if (const auto* s = std::get_if<NarxSpec>(&stage)) {
        j["type"] = "narx";
        j["output"] = s->output;
        j["ar_lags"] = s->ar_lags;
        j["exogenous"] = json::array();
        for (const auto& in : s->exogenous) {
            j["exogenous"].push_back({{"label", in.label}, {"lags", in.lags}});
        }
        basis_to(j, s->basis);
    } else {
        const auto& f = std::get<FNarxSpec>(stage);
        j["type"] = "fnarx";
        j["output"] = f.output;
        j["ar_window"] = f.ar_window;
        j["pca_threshold"] = f.pca_threshold;
        j["channels"] = json::array();
        for (const auto& c : f.channels) {
            j["channels"].push_back({{"label", c.label}, {"window", c.window}});
        }
        basis_to(j, f.basis);
    }
    return j;
}

narx::StageSpec stage_from_json(const json& j) {
    const std::string type = field<std::string>(j, "type", "stage");
    const std::string where = "stage '" + field_or<std::string>(j, "output", "?", "stage") + "'";
    if (type == "narx") {
        NarxSpec s;
        s.output = field<std::string>(j, "output", where);
        s.ar_lags = field_or<std::vector<std::size_t>>(j, "ar_lags", {}, where);
        if (j.contains("exogenous")) {
            for (const auto& e : j.at("exogenous")) {
                s.exogenous.push_back({field<std::string>(e, "label", where),
                                       field<std::vector<std::size_t>>(e, "lags", where)});
            }
        }
        s.basis = basis_from(j, where);
        return s;
    }
    if (type == "fnarx") {
        FNarxSpec f;
        f.output = field<std::string>(j, "output", where);
        f.ar_window = field<std::size_t>(j, "ar_window", where);
        f.pca_threshold = field_or<double>(j, "pca_threshold", 0.99, where);
        if (j.contains("channels")) {
            for (const auto& c : j.at("channels")) {
                f.channels.push_back({field<std::string>(c, "label", where), field<std::size_t>(c, "window", where)});
            }
        }
        f.basis = basis_from(j, where);
        return f;
    }
    throw ConfigError("stage: unknown type '" + type + "' (expected narx or fnarx)");
}

json spec_to_json(const narx::SurrogateSpec& spec) {
    json j;
    j["architecture"] = narx::to_string(spec.architecture);
    j["stages"] = json::array();
    for (const auto& st : spec.stages) {
        j["stages"].push_back(stage_to_json(st));
    }
    j["derived"] = json::array();
    for (const auto& d : spec.derived) {
        j["derived"].push_back({{"label", d.label}, {"integral_of", d.source}});
    }
    j["training"] = training_to_json(spec.training);
    return j;
}

narx::SurrogateSpec spec_from_json(const json& j) {
    narx::SurrogateSpec spec;
    spec.architecture = narx::parse_architecture(field<std::string>(j, "architecture", "surrogate"));
    if (!j.contains("stages") || !j.at("stages").is_array()) {
        throw ConfigError("surrogate: 'stages' must be an array");
    }
    for (const auto& st : j.at("stages")) {
        spec.stages.push_back(stage_from_json(st));
    }
    if (j.contains("derived")) {
        for (const auto& d : j.at("derived")) {
            spec.derived.push_back({field<std::string>(d, "label", "derived"), field<std::string>(d, "integral_of", "derived")});
        }
    }
    spec.training = training_from_json(j.contains("training") ? j.at("training") : json());
    spec.validate();
    return spec;
}

json pca_to_json(const features::PcaMap& map) {
    json j;
    j["mu"] = vector_json(map.mu);
    j["sigma"] = vector_json(map.sigma);
    std::vector<int> mask(map.mask.begin(), map.mask.end());
    j["mask"] = mask;
    j["rows"] = map.eigvecs.rows();
    j["cols"] = map.eigvecs.cols();
    json v = json::array();
    for (Eigen::Index r = 0; r < map.eigvecs.rows(); ++r) {
        for (Eigen::Index c = 0; c < map.eigvecs.cols(); ++c) {
            v.push_back(map.eigvecs(r, c));
        }
    }
    j["eigvecs"] = std::move(v);
    j["eigvals"] = vector_json(map.eigvals);
    j["spectrum"] = vector_json(map.spectrum);
    j["explained"] = map.explained;
    j["threshold"] = map.threshold;
    return j;
}

features::PcaMap pca_from_json(const json& j) {
    features::PcaMap m;
    m.mu = vector_from(j.at("mu"));
    m.sigma = vector_from(j.at("sigma"));
    for (int v : j.at("mask").get<std::vector<int>>()) {
        m.mask.push_back(static_cast<char>(v ? 1 : 0));
    }
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto flat = j.at("eigvecs").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
        throw ConfigError("pca map: eigvecs size mismatch");
    }
    m.eigvecs.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m.eigvecs(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
        }
    }
    m.eigvals = vector_from(j.at("eigvals"));
    m.spectrum = vector_from(j.at("spectrum"));
    m.explained = j.at("explained").get<double>();
    m.threshold = j.at("threshold").get<double>();
    m.validate();
    return m;
}

json model_to_json(const narx::FittedSurrogate& model) {
    json j;
    j["schema"] = kModelSchema;
    narx::SurrogateSpec spec;
    spec.architecture = model.architecture;
    spec.derived = model.derived;
    spec.training = model.training;
    for (const auto& st : model.stages) {
        spec.stages.push_back(st.spec);
    }
    j["spec"] = spec_to_json(spec);
    j["stages"] = json::array();
    for (const auto& st : model.stages) {
        json s;
        s["output"] = narx::stage_output(st.spec);
        s["n_regressors"] = st.basis_spec.n_regressors;
        s["max_train_abs"] = st.max_train_abs;
        s["sparse"] = sparse_to_json(st.model);
        s["pca"] = json::array();
        for (const auto& p : st.pca) {
            s["pca"].push_back(pca_to_json(p));
        }
        const auto& d = st.diagnostics;
        json dj;
        dj["rows_total"] = d.rows_total;
        dj["rows_sparse"] = d.rows_sparse;
        dj["candidate_terms"] = d.candidate_terms;
        dj["teacher_forcing_violations"] = d.teacher_forcing_violations;
        dj["one_step_error"] = json::array();
        dj["recursive_error"] = json::array();
        for (double e : d.one_step_error) {
            dj["one_step_error"].push_back(number(e));
        }
        for (double e : d.recursive_error) {
            dj["recursive_error"].push_back(number(e));
        }
        s["diagnostics"] = std::move(dj);
        j["stages"].push_back(std::move(s));
    }
    j["training_errors"] = json::array();
    for (double e : model.training_errors) {
        j["training_errors"].push_back(number(e));
    }
    j["mean_training_error"] = number(model.mean_training_error);
    return j;
}

narx::FittedSurrogate model_from_json(const json& j) {
    try {
        if (field<std::string>(j, "schema", "model") != kModelSchema) {
            throw ConfigError("model: unsupported schema '" + j.at("schema").get<std::string>() + "'");
        }
        const narx::SurrogateSpec spec = spec_from_json(j.at("spec"));
        narx::FittedSurrogate model;
        model.architecture = spec.architecture;
        model.derived = spec.derived;
        model.training = spec.training;
        const json& stages = j.at("stages");
        if (stages.size() != spec.stages.size()) {
            throw ConfigError("model: stage count differs from spec");
        }
        for (std::size_t k = 0; k < stages.size(); ++k) {
            const json& s = stages[k];
            narx::FittedStage st;
            st.spec = spec.stages[k];
            st.max_train_abs = s.at("max_train_abs").get<double>();
            st.model = sparse_from_json(s.at("sparse"));
            for (const auto& p : s.at("pca")) {
                st.pca.push_back(pca_from_json(p));
            }
            const narx::BasisOptions& bo =
                std::visit([](const auto& x) -> const narx::BasisOptions& { return x.basis; }, st.spec);
            st.basis_spec.n_regressors = s.at("n_regressors").get<std::size_t>();
            st.basis_spec.max_degree = bo.max_degree;
            st.basis_spec.max_interaction = std::min<int>(bo.max_interaction, static_cast<int>(st.basis_spec.n_regressors));
            st.basis_spec.include_constant = bo.include_constant;
            st.basis_spec.max_size = bo.max_size;
            for (const auto& term : st.model.basis) {
                if (term.size() != st.basis_spec.n_regressors) {
                    throw ConfigError("model: term length differs from regressor count");
                }
            }
            const json& d = s.at("diagnostics");
            st.diagnostics.rows_total = d.at("rows_total").get<std::size_t>();
            st.diagnostics.rows_sparse = d.at("rows_sparse").get<std::size_t>();
            st.diagnostics.candidate_terms = d.at("candidate_terms").get<std::size_t>();
            st.diagnostics.teacher_forcing_violations = d.at("teacher_forcing_violations").get<std::size_t>();
            for (const auto& e : d.at("one_step_error")) {
                st.diagnostics.one_step_error.push_back(as_number(e));
            }
            for (const auto& e : d.at("recursive_error")) {
                st.diagnostics.recursive_error.push_back(as_number(e));
            }
            model.stages.push_back(std::move(st));
        }
        for (const auto& e : j.at("training_errors")) {
            model.training_errors.push_back(as_number(e));
        }
        model.mean_training_error = as_number(j.at("mean_training_error"));
        return model;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model: malformed document (") + e.what() + ")");
    }
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void save_model(const std::filesystem::path& path, const narx::FittedSurrogate& model) {
    write_json_file(path, model_to_json(model));
}

narx::FittedSurrogate load_model(const std::filesystem::path& path) {
    return model_from_json(read_json_file(path));
}

}  // namespace dynsur::io
