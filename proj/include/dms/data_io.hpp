#pragma once

#include "dms/core.hpp"
#include "dms/panel.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dms {

// Rows lost to differencing under each transformation code.
Index tcode_order(int code);

// 1 x, 2 dx, 3 d2x, 4 log x, 5 dlog x, 6 d2log x, 7 d(x_t / x_{t-1} - 1).
Vector apply_tcode(const Vector& series, int code);

struct DatasetManifest {
    std::filesystem::path covariates;
    std::filesystem::path responses;
    std::map<std::string, int> tcodes;
    std::map<std::string, int> response_tcodes;
    std::string start;
    std::string end;
    std::vector<std::string> scenario;
    Index expected_covariates = 0;

    static DatasetManifest load(const std::filesystem::path& path);
};

struct LoadedPanels {
    TimeSeriesPanel x;
    TimeSeriesPanel y;
    Vector x_mean;
    Vector y_mean;
};

LoadedPanels load_panel(const DatasetManifest& manifest);

std::vector<Index> resolve_columns(const TimeSeriesPanel& panel, const std::vector<std::string>& names);

}  // namespace dms
