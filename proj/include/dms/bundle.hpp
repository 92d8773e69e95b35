#pragma once

#include "dms/config.hpp"
#include "dms/jdkf.hpp"
#include "dms/panel.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dms {

class UnknownName : public InvalidArgument {
public:
    explicit UnknownName(const std::string& name) : InvalidArgument("unknown factor or asset name '" + name + "'") {}
};

// Everything needed to answer scenario queries without the training panel.
struct ModelBundle {
    std::vector<std::string> factor_names;
    std::vector<std::string> asset_names;
    // Offsets from panel units to the centered units the model works in.
    Vector x_mean;
    Vector y_mean;
    Index ell = 0;
    double epsilon = 0;
    Index window = 0;
    double rate_scale = 1;
    Vector kappa;
    Vector lambda;
    StateSpaceModel<double> model;
    GaussianState<double> state;
    std::string fitted_at;
    Index observations = 0;
    JdkfConfig config;

    Index m() const { return static_cast<Index>(factor_names.size()); }
    Index n() const { return static_cast<Index>(asset_names.size()); }
    void validate() const;
    // Factor names first, then asset names at offset m.
    Index resolve(const std::string& name) const;
};

// `offset_x`/`offset_y` are means already removed from the panels before fitting.
ModelBundle make_bundle(const JdkfFit<double>& fit, const TimeSeriesPanel& x, const TimeSeriesPanel& y,
                        const JdkfConfig& cfg, const Vector& offset_x = Vector(), const Vector& offset_y = Vector());

Json bundle_to_json(const ModelBundle& b);
ModelBundle bundle_from_json(const Json& j);
void save_bundle(const ModelBundle& b, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

struct ScenarioRequest {
    std::vector<std::string> names;
    Scenario<double> scenario;
    Index samples = 10000;
    std::uint64_t seed = 20240601;
    std::vector<double> alphas{0.95, 0.99};
    bool include_draws = true;
    ConditioningOptions conditioning;
};

// {"fixed": [{"name"|"index", "value"}], "horizon", "K", "seed", "alphas", "include_draws", "conditioning"}
ScenarioRequest parse_scenario_request(const Json& j, const ModelBundle& b);

// Shared by the CLI and the HTTP service so both produce identical bodies.
Json evaluate_scenario(const ModelBundle& b, const ScenarioRequest& req);
Json evaluate_scenario(const ModelBundle& b, const Json& request);

}  // namespace dms
