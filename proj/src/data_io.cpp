#include "dms/data_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace dms {

Index tcode_order(int code) {
    switch (code) {
        case 1:
        case 4: return 0;
        case 2:
        case 5: return 1;
        case 3:
        case 6:
        case 7: return 2;
        default: throw InvalidArgument("tCode must be in 1..7, got " + std::to_string(code));
    }
}

namespace {

Vector diff(const Vector& v) {
    if (v.size() < 2) return Vector(0);
    return v.tail(v.size() - 1) - v.head(v.size() - 1);
}

Vector checked_log(const Vector& v) {
    Vector out(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        if (!(v(i) > 0) && !std::isnan(v(i)))
            throw DataError("non-positive value under a log tCode at index " + std::to_string(i));
        out(i) = std::log(v(i));
    }
    return out;
}

}  // namespace

Vector apply_tcode(const Vector& series, int code) {
    tcode_order(code);
    switch (code) {
        case 1: return series;
        case 2: return diff(series);
        case 3: return diff(diff(series));
        case 4: return checked_log(series);
        case 5: return diff(checked_log(series));
        case 6: return diff(diff(checked_log(series)));
        case 7: {
            if (series.size() < 2) return Vector(0);
            Vector growth(series.size() - 1);
            for (Index i = 1; i < series.size(); ++i) {
                if (series(i - 1) == 0) throw DataError("division by zero under tCode 7 at index " + std::to_string(i - 1));
                growth(i - 1) = series(i) / series(i - 1) - 1.0;
            }
            return diff(growth);
        }
    }
    return series;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InvalidArgument("manifest not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    DatasetManifest m;
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    try {
        m.covariates = resolve(j.at("covariates").get<std::string>());
        m.responses = resolve(j.at("responses").get<std::string>());
        if (j.contains("tcodes")) m.tcodes = j.at("tcodes").get<std::map<std::string, int>>();
        if (j.contains("response_tcodes")) m.response_tcodes = j.at("response_tcodes").get<std::map<std::string, int>>();
        if (j.contains("date_range")) {
            m.start = j["date_range"].value("start", "");
            m.end = j["date_range"].value("end", "");
        }
        if (j.contains("scenario")) m.scenario = j.at("scenario").get<std::vector<std::string>>();
        m.expected_covariates = j.value("expected_covariates", Index(0));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("manifest " + path.string() + ": " + e.what());
    }
    return m;
}

namespace {

TimeSeriesPanel transform(const TimeSeriesPanel& raw, const std::map<std::string, int>& codes, bool require_all,
                          Index& lost) {
    TimeSeriesPanel out = raw;
    std::vector<Vector> cols;
    lost = 0;
    for (Index j = 0; j < raw.cols(); ++j) {
        const auto& name = raw.columns[static_cast<std::size_t>(j)];
        auto it = codes.find(name);
        if (it == codes.end() && require_all) throw InvalidArgument("covariate '" + name + "' has no tCode");
        int code = it == codes.end() ? 1 : it->second;
        try {
            cols.push_back(apply_tcode(raw.values.col(j), code));
        } catch (const DataError& e) {
            throw DataError("column '" + name + "': " + e.what());
        }
        lost = std::max(lost, tcode_order(code));
    }
    const Index T = raw.rows() - lost;
    if (T <= 0) throw DataError("no rows left after transformation");
    out.values.resize(T, raw.cols());
    for (Index j = 0; j < raw.cols(); ++j) out.values.col(j) = cols[static_cast<std::size_t>(j)].tail(T);
    out.index.assign(raw.index.end() - T, raw.index.end());
    return out;
}

TimeSeriesPanel select_rows(const TimeSeriesPanel& p, const std::vector<Index>& rows) {
    TimeSeriesPanel out;
    out.columns = p.columns;
    out.values.resize(static_cast<Index>(rows.size()), p.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.values.row(static_cast<Index>(k)) = p.values.row(rows[k]);
        out.index.push_back(p.index[static_cast<std::size_t>(rows[k])]);
    }
    return out;
}

void check_complete(const TimeSeriesPanel& p, const std::string& what) {
    for (Index i = 0; i < p.rows(); ++i)
        for (Index j = 0; j < p.cols(); ++j)
            if (!std::isfinite(p.values(i, j)))
                throw DataError(what + ": missing value at " + p.index[static_cast<std::size_t>(i)] + ", column '" +
                                p.columns[static_cast<std::size_t>(j)] + "'");
}

}  // namespace

LoadedPanels load_panel(const DatasetManifest& manifest) {
    TimeSeriesPanel xr = read_csv(manifest.covariates);
    TimeSeriesPanel yr = read_csv(manifest.responses);
    if (xr.rows() == 0 || yr.rows() == 0) throw DataError("covariate and response files need data rows");
    if (manifest.expected_covariates > 0 && xr.cols() != manifest.expected_covariates)
        throw DataError("expected " + std::to_string(manifest.expected_covariates) + " covariates, found " +
                        std::to_string(xr.cols()));

    Index lost_x = 0;
    Index lost_y = 0;
    TimeSeriesPanel xt = transform(xr, manifest.tcodes, true, lost_x);
    TimeSeriesPanel yt = transform(yr, manifest.response_tcodes, false, lost_y);

    // Inner join on dates after transformation, restricted to the date range.
    std::unordered_map<std::string, Index> y_rows;
    for (Index i = 0; i < yt.rows(); ++i) y_rows[yt.index[static_cast<std::size_t>(i)]] = i;
    std::vector<Index> keep_x;
    std::vector<Index> keep_y;
    for (Index i = 0; i < xt.rows(); ++i) {
        const auto& date = xt.index[static_cast<std::size_t>(i)];
        if (!manifest.start.empty() && date < manifest.start) continue;
        if (!manifest.end.empty() && date > manifest.end) continue;
        auto it = y_rows.find(date);
        if (it == y_rows.end()) continue;
        keep_x.push_back(i);
        keep_y.push_back(it->second);
    }
    if (keep_x.empty()) throw DataError("covariate and response dates do not overlap");

    LoadedPanels out;
    out.x = select_rows(xt, keep_x);
    out.y = select_rows(yt, keep_y);
    check_complete(out.x, "covariates");
    check_complete(out.y, "responses");
    out.x_mean = out.x.values.colwise().mean().transpose();
    out.y_mean = out.y.values.colwise().mean().transpose();
    out.x.values.rowwise() -= out.x_mean.transpose();
    out.y.values.rowwise() -= out.y_mean.transpose();
    resolve_columns(out.x, manifest.scenario);
    return out;
}

std::vector<Index> resolve_columns(const TimeSeriesPanel& panel, const std::vector<std::string>& names) {
    std::vector<Index> out;
    for (const auto& n : names) {
        Index c = panel.column(n);
        if (c < 0) throw InvalidArgument("unknown column '" + n + "'");
        out.push_back(c);
    }
    return out;
}

}  // namespace dms
