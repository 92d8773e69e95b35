#include "dms/bundle.hpp"

#include "dms/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dms {

namespace {

Json state_space_json(const StateSpaceModel<double>& m) {
    Json j;
    j["A"] = matrix_json(m.A);
    j["Q"] = matrix_json(m.Q);
    j["Hx"] = matrix_json(m.Hx);
    j["Hy"] = matrix_json(m.Hy);
    j["Rx"] = matrix_json(m.Rx);
    j["Ry"] = matrix_json(m.Ry);
    j["Rxy"] = matrix_json(m.Rxy);
    j["linear_factor"] = m.linear_factor;
    j["B"] = matrix_json(m.B);
    return j;
}

StateSpaceModel<double> state_space_from_json(const Json& j, Index ell, Index m, Index n) {
    StateSpaceModel<double> s;
    s.A = matrix_from_json(j.at("A"), ell);
    s.Q = matrix_from_json(j.at("Q"), ell);
    s.Hx = matrix_from_json(j.at("Hx"), ell);
    s.Hy = matrix_from_json(j.at("Hy"), ell);
    s.Rx = matrix_from_json(j.at("Rx"), m);
    s.Ry = matrix_from_json(j.at("Ry"), n);
    s.Rxy = matrix_from_json(j.at("Rxy"), n);
    s.linear_factor = j.at("linear_factor").get<bool>();
    s.B = matrix_from_json(j.at("B"), m);
    return s;
}

std::vector<double> quantile_levels(const std::vector<double>& alphas) {
    std::set<double> levels{0.5};
    for (double a : alphas) {
        levels.insert(1 - a);
        levels.insert(a);
    }
    return {levels.begin(), levels.end()};
}

std::vector<double> column(const Matrix& m, Index c) {
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, c);
    return v;
}

Json quantiles_json(const std::vector<double>& draws, const std::vector<double>& levels) {
    Json a = Json::array();
    for (double q : levels) a.push_back({{"level", q}, {"value", empirical_quantile(draws, q)}});
    return a;
}

}  // namespace

void ModelBundle::validate() const {
    const Index l = model.ell();
    require(l >= 1, "bundle has an empty state space");
    require(l == ell, "bundle ell disagrees with the state-space model");
    require(model.m() == m(), "bundle factor names disagree with Hx");
    require(model.n() == n(), "bundle asset names disagree with Hy");
    require(x_mean.size() == m() && y_mean.size() == n(), "bundle means have the wrong length");
    require(state.mean.size() == l, "bundle filter state has the wrong dimension");
    require(state.cov.size() == 0 || (state.cov.rows() == l && state.cov.cols() == l), "bundle state covariance shape");
    require(kappa.size() == l && lambda.size() == l, "bundle spectrum has the wrong length");
    model.validate();
    std::set<std::string> seen;
    for (const auto& s : factor_names) require(seen.insert(s).second, "duplicate name '" + s + "' in bundle");
    for (const auto& s : asset_names) require(seen.insert(s).second, "duplicate name '" + s + "' in bundle");
}

Index ModelBundle::resolve(const std::string& name) const {
    auto it = std::find(factor_names.begin(), factor_names.end(), name);
    if (it != factor_names.end()) return static_cast<Index>(it - factor_names.begin());
    it = std::find(asset_names.begin(), asset_names.end(), name);
    if (it != asset_names.end()) return m() + static_cast<Index>(it - asset_names.begin());
    throw UnknownName(name);
}

ModelBundle make_bundle(const JdkfFit<double>& fit, const TimeSeriesPanel& x, const TimeSeriesPanel& y,
                        const JdkfConfig& cfg, const Vector& offset_x, const Vector& offset_y) {
    ModelBundle b;
    b.factor_names = x.columns;
    b.asset_names = y.columns;
    b.x_mean = fit.x_mean;
    b.y_mean = fit.y_mean;
    if (offset_x.size() > 0) b.x_mean += offset_x;
    if (offset_y.size() > 0) b.y_mean += offset_y;
    b.ell = fit.embedding.ell();
    b.epsilon = fit.embedding.epsilon;
    b.window = fit.embedding.window;
    b.rate_scale = fit.embedding.rate_scale;
    b.kappa = fit.embedding.kappa;
    b.lambda = fit.embedding.lambda;
    b.model = fit.model();
    const Index last = fit.run().filtered_means.rows() - 1;
    b.state.mean = fit.run().filtered_means.row(last).transpose();
    b.state.cov = fit.run().filtered_covs[static_cast<std::size_t>(last)];
    b.fitted_at = x.index.empty() ? "" : x.index.back();
    b.observations = x.values.rows();
    b.config = cfg;
    b.validate();
    return b;
}

Json bundle_to_json(const ModelBundle& b) {
    Json j;
    j["format"] = "dms-bundle/1";
    j["fitted_at"] = b.fitted_at;
    j["observations"] = b.observations;
    j["factors"] = b.factor_names;
    j["assets"] = b.asset_names;
    j["x_mean"] = vector_json(b.x_mean);
    j["y_mean"] = vector_json(b.y_mean);
    j["embedding"] = {{"ell", b.ell},
                      {"epsilon", b.epsilon},
                      {"window", b.window},
                      {"rate_scale", b.rate_scale},
                      {"kappa", vector_json(b.kappa)},
                      {"lambda", vector_json(b.lambda)}};
    j["model"] = state_space_json(b.model);
    j["state"] = {{"mean", vector_json(b.state.mean)}, {"cov", matrix_json(b.state.cov)}};
    j["config"] = to_json(b.config);
    return j;
}

ModelBundle bundle_from_json(const Json& j) {
    try {
        require(j.value("format", "") == "dms-bundle/1", "not a model bundle (format tag missing)");
        ModelBundle b;
        b.fitted_at = j.at("fitted_at").get<std::string>();
        b.observations = j.at("observations").get<Index>();
        b.factor_names = j.at("factors").get<std::vector<std::string>>();
        b.asset_names = j.at("assets").get<std::vector<std::string>>();
        b.x_mean = vector_from_json(j.at("x_mean"));
        b.y_mean = vector_from_json(j.at("y_mean"));
        const Json& e = j.at("embedding");
        b.ell = e.at("ell").get<Index>();
        b.epsilon = e.at("epsilon").get<double>();
        b.window = e.at("window").get<Index>();
        b.rate_scale = e.at("rate_scale").get<double>();
        b.kappa = vector_from_json(e.at("kappa"));
        b.lambda = vector_from_json(e.at("lambda"));
        b.model = state_space_from_json(j.at("model"), b.ell, b.m(), b.n());
        b.state.mean = vector_from_json(j.at("state").at("mean"));
        b.state.cov = matrix_from_json(j.at("state").at("cov"), 0);
        b.config = jdkf_config_from_json(j.at("config"));
        b.validate();
        return b;
    } catch (const nlohmann::json::exception& ex) {
        throw InvalidArgument(std::string("malformed model bundle: ") + ex.what());
    }
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
    write_text(path, bundle_to_json(b).dump(2) + "\n");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InvalidArgument("model bundle not found: " + path.string());
    Json j;
    try {
        j = Json::parse(read_text(path));
    } catch (const nlohmann::json::exception& ex) {
        throw InvalidArgument("model bundle is not valid JSON: " + std::string(ex.what()));
    }
    return bundle_from_json(j);
}

ScenarioRequest parse_scenario_request(const Json& j, const ModelBundle& b) {
    require(j.is_object(), "scenario request must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        static const std::set<std::string> known{"fixed", "horizon", "K", "seed", "alphas", "include_draws", "conditioning"};
        if (!known.count(key)) throw InvalidArgument("unknown key '" + key + "' in scenario request");
    }
    ScenarioRequest req;
    try {
        std::vector<std::pair<Index, double>> pairs;
        if (j.contains("fixed")) {
            require(j.at("fixed").is_array(), "'fixed' must be an array");
            for (const auto& f : j.at("fixed")) {
                require(f.is_object() && f.contains("value") && f.at("value").is_number(),
                        "each fixed entry needs a numeric 'value'");
                Index idx = -1;
                if (f.contains("name")) {
                    idx = b.resolve(f.at("name").get<std::string>());
                } else {
                    require(f.contains("index") && f.at("index").is_number_integer(), "fixed entry needs 'name' or 'index'");
                    idx = f.at("index").get<Index>();
                    require(idx >= 0 && idx < b.m() + b.n(), "fixed index out of range");
                }
                const double v = f.at("value").get<double>();
                require(std::isfinite(v), "fixed values must be finite");
                pairs.emplace_back(idx, v);
            }
        }
        const Index horizon = j.value("horizon", Index(1));
        req.scenario = make_scenario(pairs, horizon);
        for (Index i : req.scenario.fixed_indices)
            req.names.push_back(i < b.m() ? b.factor_names[static_cast<std::size_t>(i)]
                                          : b.asset_names[static_cast<std::size_t>(i - b.m())]);
        req.samples = j.value("K", req.samples);
        req.seed = j.value("seed", req.seed);
        if (j.contains("alphas")) req.alphas = j.at("alphas").get<std::vector<double>>();
        req.include_draws = j.value("include_draws", req.include_draws);
        if (j.contains("conditioning")) req.conditioning = conditioning_from_json(j.at("conditioning"));
    } catch (const nlohmann::json::exception& ex) {
        throw InvalidArgument(std::string("malformed scenario request: ") + ex.what());
    }
    require(req.samples >= 1 && req.samples <= 1000000, "K must lie in [1, 1000000]");
    require(req.scenario.horizon >= 1, "horizon must be at least 1");
    for (double a : req.alphas) require(a > 0.5 && a < 1, "alpha levels must lie in (0.5, 1)");
    return req;
}

Json evaluate_scenario(const ModelBundle& b, const ScenarioRequest& req) {
    StressPrediction<double> pred =
        jdkf_predict(b.model, b.x_mean, b.y_mean, b.state, req.scenario, req.samples, req.seed, req.conditioning);
    const Index K = req.samples;
    const std::vector<double> levels = quantile_levels(req.alphas);

    Json out;
    out["fitted_at"] = b.fitted_at;
    out["K"] = K;
    out["seed"] = req.seed;
    out["horizon"] = req.scenario.horizon;
    Json fixed = Json::array();
    for (std::size_t k = 0; k < req.names.size(); ++k)
        fixed.push_back({{"name", req.names[k]},
                         {"index", req.scenario.fixed_indices[k]},
                         {"value", req.scenario.values(static_cast<Index>(k))}});
    out["fixed"] = fixed;
    out["conditional"] = {{"mean", vector_json(pred.law.mean)}, {"cov", matrix_json(pred.law.cov)}};

    Json factors = Json::array();
    for (Index i = 0; i < b.m(); ++i)
        factors.push_back({{"name", b.factor_names[static_cast<std::size_t>(i)]},
                           {"mean", pred.x_draws.col(i).mean()}});
    out["factors"] = factors;

    Json assets = Json::array();
    for (Index i = 0; i < b.n(); ++i)
        assets.push_back({{"name", b.asset_names[static_cast<std::size_t>(i)]},
                          {"mean", pred.y_draws.col(i).mean()},
                          {"quantiles", quantiles_json(column(pred.y_draws, i), levels)}});
    out["assets"] = assets;

    Vector port = b.n() > 0 ? Vector(pred.y_draws.rowwise().mean()) : Vector::Zero(K);
    std::vector<double> pd(port.data(), port.data() + port.size());
    const double mean = port.mean();
    const double var = K > 1 ? (port.array() - mean).square().sum() / double(K - 1) : 0.0;
    Json portfolio;
    portfolio["weights"] = "equal";
    portfolio["mean"] = mean;
    portfolio["std"] = std::sqrt(var);
    portfolio["quantiles"] = quantiles_json(pd, levels);
    if (req.include_draws) portfolio["draws"] = pd;
    out["portfolio"] = portfolio;

    Json var_levels = Json::array();
    for (double a : req.alphas) var_levels.push_back({{"alpha", a}, {"threshold", empirical_quantile(pd, 1 - a)}});
    out["var"] = var_levels;
    return out;
}

Json evaluate_scenario(const ModelBundle& b, const Json& request) {
    return evaluate_scenario(b, parse_scenario_request(request, b));
}

}  // namespace dms
