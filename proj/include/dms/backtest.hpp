#pragma once

#include "dms/conditional.hpp"
#include "dms/core.hpp"
#include "dms/jdkf.hpp"
#include "dms/metrics.hpp"
#include "dms/panel.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dms {

enum class Method { ssa, static_pca, dynamic_pca, jdkf };

std::string method_name(Method m);
Method parse_method(const std::string& name);
std::vector<Method> parse_methods(const std::string& comma_list);

struct BacktestConfig {
    Index window = 60;
    Index refit = 100;
    Index samples = 1000;
    // Indices win over names when both are given.
    std::vector<Index> scenario;
    std::vector<std::string> scenario_names;
    std::uint64_t seed = 20240601;
    std::vector<Method> methods{Method::ssa, Method::static_pca, Method::dynamic_pca, Method::jdkf};
    // 0 picks the dimension with the lowest MAE from the sweep.
    Index static_pca_dim = 0;
    Index dynamic_pca_dim = 5;
    JdkfConfig jdkf;
    EmConfig pca_em;
    ConditioningOptions conditioning;
    std::vector<double> var_levels{0.95, 0.99};
    // Worker threads for the periods of one segment; results do not depend on it.
    int threads = 1;

    void validate() const;
};

struct PeriodRecord {
    // Prediction made at row t for row t + 1.
    Index t = 0;
    std::string label;
    double v_true = 0;
    std::vector<double> v_hat;
    std::vector<double> error;
    std::vector<std::string> failure;
};

struct MethodSummary {
    Method method = Method::ssa;
    double mae = 0;
    Index evaluated = 0;
    Index missing = 0;
};

struct PairwiseAccuracy {
    Method a = Method::ssa;
    Method b = Method::ssa;
    double percent = 0;
    Index periods = 0;
};

struct MethodVar {
    Method method = Method::ssa;
    VarTestResult result;
};

struct SegmentInfo {
    Index begin = 0;
    Index end = 0;
    Index jdkf_ell = 0;
    int jdkf_iterations = 0;
    double jdkf_loglik = 0;
    std::string jdkf_failure;
    std::string dynamic_pca_failure;
};

struct BacktestReport {
    BacktestConfig config;
    std::vector<std::string> factor_names;
    std::vector<std::string> asset_names;
    std::vector<PeriodRecord> periods;
    std::vector<MethodSummary> summaries;
    std::vector<PairwiseAccuracy> accuracy;
    std::vector<MethodVar> var;
    std::vector<SegmentInfo> segments;
    std::vector<Index> static_pca_dims;
    std::vector<double> static_pca_sweep_mae;
    Index static_pca_dim = 0;

    std::size_t method_slot(Method m) const;
    std::vector<double> errors(Method m) const;
};

BacktestReport run_backtest(const TimeSeriesPanel& x, const TimeSeriesPanel& y, const BacktestConfig& cfg);

struct StaticPcaSweep {
    std::vector<Index> dims;
    std::vector<double> mae;
    Index best_dim = 0;
};

// Static PCA evaluated at every dimension 1..p over the backtest periods.
StaticPcaSweep static_pca_sweep(const TimeSeriesPanel& x, const TimeSeriesPanel& y, const BacktestConfig& cfg);

// Table of MAE per method and accuracy of each method against the others.
std::string summary_table(const BacktestReport& report);
std::string report_json(const BacktestReport& report);
std::string metrics_csv(const BacktestReport& report);
std::string predictions_csv(const BacktestReport& report);
std::string plot_csv(const BacktestReport& report);
void write_report(const BacktestReport& report, const std::filesystem::path& dir);

}  // namespace dms
