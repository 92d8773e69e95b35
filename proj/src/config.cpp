#include "dms/config.hpp"

#include <cmath>
#include <set>

namespace dms {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& what) {
    require(j.is_object(), what + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key)) throw InvalidArgument("unknown key '" + key + "' in " + what);
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("bad value for '") + key + "': " + e.what());
    }
}

template <typename E>
E parse_enum(const Json& j, const char* key, E fallback, std::initializer_list<std::pair<const char*, E>> names) {
    if (!j.contains(key)) return fallback;
    require(j.at(key).is_string(), std::string("'") + key + "' must be a string");
    const std::string v = j.at(key).get<std::string>();
    for (const auto& [name, e] : names)
        if (v == name) return e;
    throw InvalidArgument(std::string("unknown value '") + v + "' for '" + key + "'");
}

}  // namespace

std::string to_string(EpsilonRule r) {
    switch (r) {
        case EpsilonRule::median: return "median";
        case EpsilonRule::fixed: return "fixed";
        case EpsilonRule::loglog_scan: return "loglog_scan";
    }
    return "median";
}

std::string to_string(EllRule r) { return r == EllRule::fixed ? "fixed" : "largest_gap"; }
std::string to_string(MStepRule r) { return r == MStepRule::expected ? "expected" : "plug_in"; }
std::string to_string(TransitionScheme s) {
    return s == TransitionScheme::one_minus_lambda ? "one_minus_lambda" : "matrix_exponential";
}

Json to_json(const EmbeddingConfig& c) {
    Json j;
    j["epsilon_rule"] = to_string(c.epsilon_rule);
    j["epsilon"] = c.epsilon;
    j["ell_rule"] = to_string(c.ell_rule);
    j["ell"] = c.ell;
    j["ell_max"] = c.ell_max;
    j["window"] = c.window;
    j["rate_scale"] = c.rate_scale;
    return j;
}

EmbeddingConfig embedding_config_from_json(const Json& j) {
    reject_unknown(j, {"epsilon_rule", "epsilon", "ell_rule", "ell", "ell_max", "window", "rate_scale"}, "embedding");
    EmbeddingConfig c;
    c.epsilon_rule = parse_enum(j, "epsilon_rule", c.epsilon_rule,
                                {{"median", EpsilonRule::median},
                                 {"fixed", EpsilonRule::fixed},
                                 {"loglog_scan", EpsilonRule::loglog_scan}});
    c.ell_rule = parse_enum(j, "ell_rule", c.ell_rule, {{"fixed", EllRule::fixed}, {"largest_gap", EllRule::largest_gap}});
    read(j, "epsilon", c.epsilon);
    read(j, "ell", c.ell);
    read(j, "ell_max", c.ell_max);
    read(j, "window", c.window);
    read(j, "rate_scale", c.rate_scale);
    require(c.ell >= 1, "ell must be positive");
    require(c.window >= 2, "covariation window must be at least 2");
    require(c.rate_scale > 0, "rate_scale must be positive");
    if (c.epsilon_rule == EpsilonRule::fixed) require(c.epsilon > 0, "fixed epsilon must be positive");
    return c;
}

Json to_json(const EmConfig& c) {
    Json j;
    j["tolerance"] = c.tolerance;
    j["max_iters"] = c.max_iters;
    j["jitter"] = c.jitter;
    j["m_step"] = to_string(c.rule);
    j["joseph_form"] = c.filter.joseph_form;
    return j;
}

EmConfig em_config_from_json(const Json& j) {
    reject_unknown(j, {"tolerance", "max_iters", "jitter", "m_step", "joseph_form"}, "em");
    EmConfig c;
    read(j, "tolerance", c.tolerance);
    read(j, "max_iters", c.max_iters);
    read(j, "jitter", c.jitter);
    read(j, "joseph_form", c.filter.joseph_form);
    c.rule = parse_enum(j, "m_step", c.rule, {{"expected", MStepRule::expected}, {"plug_in", MStepRule::plug_in}});
    require(c.tolerance > 0, "EM tolerance must be positive");
    require(c.max_iters >= 0, "EM max_iters must be non-negative");
    require(c.jitter >= 0, "EM jitter must be non-negative");
    return c;
}

Json to_json(const JdkfConfig& c) {
    Json j;
    j["embedding"] = to_json(c.embedding);
    j["em"] = to_json(c.em);
    j["transition"] = to_string(c.scheme);
    j["linear_factor"] = c.linear_factor;
    j["embed_response"] = c.embed_response;
    return j;
}

JdkfConfig jdkf_config_from_json(const Json& j) {
    reject_unknown(j, {"embedding", "em", "transition", "linear_factor", "embed_response"}, "jdkf");
    JdkfConfig c;
    if (j.contains("embedding")) c.embedding = embedding_config_from_json(j.at("embedding"));
    if (j.contains("em")) c.em = em_config_from_json(j.at("em"));
    c.scheme = parse_enum(j, "transition", c.scheme,
                          {{"one_minus_lambda", TransitionScheme::one_minus_lambda},
                           {"matrix_exponential", TransitionScheme::matrix_exponential}});
    read(j, "linear_factor", c.linear_factor);
    read(j, "embed_response", c.embed_response);
    return c;
}

Json to_json(const ConditioningOptions& c) {
    Json j;
    j["add_measurement_noise"] = c.add_measurement_noise;
    j["covariates_only_when_possible"] = c.covariates_only_when_possible;
    return j;
}

ConditioningOptions conditioning_from_json(const Json& j) {
    reject_unknown(j, {"add_measurement_noise", "covariates_only_when_possible"}, "conditioning");
    ConditioningOptions c;
    read(j, "add_measurement_noise", c.add_measurement_noise);
    read(j, "covariates_only_when_possible", c.covariates_only_when_possible);
    return c;
}

Json to_json(const BacktestConfig& c) {
    Json j;
    j["window"] = c.window;
    j["refit"] = c.refit;
    j["samples"] = c.samples;
    j["scenario"] = c.scenario;
    j["scenario_names"] = c.scenario_names;
    j["weighting"] = "equal";
    j["seed"] = c.seed;
    Json methods = Json::array();
    for (Method m : c.methods) methods.push_back(method_name(m));
    j["methods"] = methods;
    j["static_pca_dim"] = c.static_pca_dim;
    j["dynamic_pca_dim"] = c.dynamic_pca_dim;
    j["jdkf"] = to_json(c.jdkf);
    j["pca_em"] = to_json(c.pca_em);
    j["conditioning"] = to_json(c.conditioning);
    j["var_levels"] = c.var_levels;
    return j;
}

BacktestConfig backtest_config_from_json(const Json& j) {
    reject_unknown(j,
                   {"window", "refit", "samples", "scenario", "scenario_names", "weighting", "seed", "methods",
                    "static_pca_dim", "dynamic_pca_dim", "jdkf", "pca_em", "conditioning", "var_levels", "threads"},
                   "backtest");
    BacktestConfig c;
    read(j, "window", c.window);
    read(j, "refit", c.refit);
    read(j, "samples", c.samples);
    read(j, "seed", c.seed);
    read(j, "static_pca_dim", c.static_pca_dim);
    read(j, "dynamic_pca_dim", c.dynamic_pca_dim);
    read(j, "var_levels", c.var_levels);
    read(j, "threads", c.threads);
    read(j, "scenario_names", c.scenario_names);
    if (j.contains("scenario")) {
        for (const auto& e : j.at("scenario")) {
            if (e.is_string())
                c.scenario_names.push_back(e.get<std::string>());
            else if (e.is_number_integer())
                c.scenario.push_back(e.get<Index>());
            else
                throw InvalidArgument("scenario entries must be names or integer indices");
        }
    }
    if (j.contains("weighting")) require(j.at("weighting") == "equal", "only equal weighting is supported");
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& e : j.at("methods")) {
            require(e.is_string(), "methods must be strings");
            c.methods.push_back(parse_method(e.get<std::string>()));
        }
    }
    if (j.contains("jdkf")) c.jdkf = jdkf_config_from_json(j.at("jdkf"));
    if (j.contains("pca_em")) c.pca_em = em_config_from_json(j.at("pca_em"));
    if (j.contains("conditioning")) c.conditioning = conditioning_from_json(j.at("conditioning"));
    c.validate();
    return c;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(finite_or_null(v(i)));
    return a;
}

Json matrix_json(const Matrix& m) {
    Json a = Json::array();
    for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
    return a;
}

Vector vector_from_json(const Json& j) {
    require(j.is_array(), "expected a JSON array of numbers");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        require(j[i].is_number(), "expected a number");
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

Matrix matrix_from_json(const Json& j, Index cols_if_empty) {
    require(j.is_array(), "expected a JSON array of rows");
    if (j.empty()) return Matrix(0, cols_if_empty);
    const Index cols = static_cast<Index>(j[0].size());
    Matrix m(static_cast<Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        Vector row = vector_from_json(j[i]);
        require(row.size() == cols, "ragged matrix rows");
        m.row(static_cast<Index>(i)) = row.transpose();
    }
    return m;
}

}  // namespace dms
