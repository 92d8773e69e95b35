#pragma once

#include "dms/backtest.hpp"
#include "dms/diffusion_map.hpp"
#include "dms/jdkf.hpp"
#include "dms/state_space.hpp"

#include "json.hpp"

namespace dms {

using Json = nlohmann::ordered_json;

// Readers reject unknown keys and fill absent ones with defaults.
Json to_json(const EmbeddingConfig& c);
Json to_json(const EmConfig& c);
Json to_json(const JdkfConfig& c);
Json to_json(const ConditioningOptions& c);
Json to_json(const BacktestConfig& c);

EmbeddingConfig embedding_config_from_json(const Json& j);
EmConfig em_config_from_json(const Json& j);
JdkfConfig jdkf_config_from_json(const Json& j);
ConditioningOptions conditioning_from_json(const Json& j);
BacktestConfig backtest_config_from_json(const Json& j);

std::string to_string(EpsilonRule r);
std::string to_string(EllRule r);
std::string to_string(MStepRule r);
std::string to_string(TransitionScheme s);

// Non-finite values become null.
Json finite_or_null(double v);
Json vector_json(const Vector& v);
Json matrix_json(const Matrix& m);
Vector vector_from_json(const Json& j);
Matrix matrix_from_json(const Json& j, Index cols_if_empty = 0);

}  // namespace dms
