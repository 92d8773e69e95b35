#include "dms/panel.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dms {

Index TimeSeriesPanel::column(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k)
        if (columns[k] == name) return static_cast<Index>(k);
    return -1;
}

void TimeSeriesPanel::validate() const {
    if (static_cast<Index>(index.size()) != values.rows())
        throw DataError("panel index length differs from row count");
    if (static_cast<Index>(columns.size()) != values.cols())
        throw DataError("panel column names differ from column count");
}

TimeSeriesPanel TimeSeriesPanel::slice_rows(Index begin, Index end) const {
    TimeSeriesPanel out;
    out.columns = columns;
    out.index.assign(index.begin() + begin, index.begin() + end);
    out.values = values.middleRows(begin, end - begin);
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& field, bool& ok) {
    std::size_t b = field.find_first_not_of(" \t\r");
    std::size_t e = field.find_last_not_of(" \t\r");
    ok = true;
    if (b == std::string::npos) return std::numeric_limits<double>::quiet_NaN();
    std::string s = field.substr(b, e - b + 1);
    if (s == "NA" || s == "nan" || s == "NaN" || s == "na") return std::numeric_limits<double>::quiet_NaN();
    const char* first = s.data();
    if (*first == '+') ++first;
    double v = 0;
    auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) ok = false;
    return v;
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\"");
    std::size_t e = s.find_last_not_of(" \t\r\"");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

TimeSeriesPanel parse_csv(const std::string& text, const std::string& source) {
    std::stringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split(line);
            break;
        }
    }
    if (header.empty()) throw DataError(source + ": empty file");
    if (header.size() < 2) throw DataError(source + ": header needs an index column and at least one series");

    TimeSeriesPanel panel;
    for (std::size_t k = 1; k < header.size(); ++k) panel.columns.push_back(trim(header[k]));
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (fields.size() != header.size())
            throw DataError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(header.size()));
        panel.index.push_back(trim(fields[0]));
        std::vector<double> row;
        for (std::size_t k = 1; k < fields.size(); ++k) {
            bool ok = true;
            double v = parse_double(fields[k], ok);
            if (!ok)
                throw DataError(source + ": line " + std::to_string(line_no) + ": cannot parse '" + fields[k] + "'");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    panel.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(panel.columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            panel.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return panel;
}

TimeSeriesPanel read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

std::string to_csv(const TimeSeriesPanel& panel, const std::string& index_name) {
    panel.validate();
    std::string out = index_name;
    for (const auto& c : panel.columns) out += "," + c;
    out += "\n";
    for (Index i = 0; i < panel.rows(); ++i) {
        out += panel.index[static_cast<std::size_t>(i)];
        for (Index j = 0; j < panel.cols(); ++j) out += "," + format_double(panel.values(i, j));
        out += "\n";
    }
    return out;
}

void write_csv(const std::filesystem::path& path, const TimeSeriesPanel& panel, const std::string& index_name) {
    write_text(path, to_csv(panel, index_name));
}

TimeSeriesPanel make_panel(const Matrix& values, const std::vector<std::string>& columns,
                           std::vector<std::string> index) {
    TimeSeriesPanel p;
    p.values = values;
    p.columns = columns;
    p.index = index.empty() ? step_index(values.rows()) : std::move(index);
    p.validate();
    return p;
}

std::vector<std::string> step_index(Index n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.push_back(std::to_string(i));
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace dms
