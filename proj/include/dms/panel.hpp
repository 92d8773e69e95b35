#pragma once

#include "dms/core.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dms {

struct TimeSeriesPanel {
    std::vector<std::string> index;
    std::vector<std::string> columns;
    Matrix values;

    Index rows() const { return values.rows(); }
    Index cols() const { return values.cols(); }
    Index column(const std::string& name) const;
    void validate() const;
    TimeSeriesPanel slice_rows(Index begin, Index end) const;
};

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& field, bool& ok);

TimeSeriesPanel parse_csv(const std::string& text, const std::string& source = "<memory>");
TimeSeriesPanel read_csv(const std::filesystem::path& path);
std::string to_csv(const TimeSeriesPanel& panel, const std::string& index_name = "date");
void write_csv(const std::filesystem::path& path, const TimeSeriesPanel& panel,
               const std::string& index_name = "date");

TimeSeriesPanel make_panel(const Matrix& values, const std::vector<std::string>& columns,
                           std::vector<std::string> index = {});
std::vector<std::string> step_index(Index n);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace dms
