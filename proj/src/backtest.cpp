#include "dms/backtest.hpp"

#include "dms/benchmarks.hpp"
#include "dms/config.hpp"
#include "dms/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

namespace dms {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Segment {
    Index begin = 0;
    Index end = 0;
    Index t_begin = 0;
    Index t_end = 0;
};

// Refit segments; prediction rows t satisfy t + 1 < T and tile [s, T - 1).
std::vector<Segment> plan_segments(Index T, const BacktestConfig& cfg) {
    std::vector<Segment> out;
    for (Index r = 0; r < T - 1; r += cfg.refit) {
        Segment seg;
        seg.begin = r;
        seg.end = std::min(r + cfg.refit + cfg.window, T);
        seg.t_begin = std::max(cfg.window, r + cfg.window);
        seg.t_end = std::min(seg.end, T - 1);
        if (seg.t_begin >= seg.t_end) break;
        out.push_back(seg);
    }
    return out;
}

std::vector<Index> resolve_scenario(const TimeSeriesPanel& x, const BacktestConfig& cfg) {
    std::vector<Index> idx = cfg.scenario;
    if (idx.empty()) {
        for (const auto& name : cfg.scenario_names) {
            auto it = std::find(x.columns.begin(), x.columns.end(), name);
            if (it == x.columns.end()) throw InvalidArgument("unknown scenario factor '" + name + "'");
            idx.push_back(static_cast<Index>(it - x.columns.begin()));
        }
    }
    require(!idx.empty(), "backtest scenario must fix at least one factor");
    std::sort(idx.begin(), idx.end());
    require(std::adjacent_find(idx.begin(), idx.end()) == idx.end(), "duplicate scenario factor");
    require(idx.front() >= 0 && idx.back() < x.values.cols(), "scenario index out of range");
    return idx;
}

Scenario<double> realized_scenario(const Matrix& X, Index row, const std::vector<Index>& idx) {
    Scenario<double> sc;
    sc.fixed_indices = idx;
    sc.values.resize(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) sc.values(static_cast<Index>(k)) = X(row, idx[k]);
    return sc;
}

void check_panels(const TimeSeriesPanel& x, const TimeSeriesPanel& y, const BacktestConfig& cfg) {
    x.validate();
    y.validate();
    cfg.validate();
    require(x.values.rows() == y.values.rows(), "covariate and response panels differ in length");
    require(x.index == y.index, "covariate and response panels have different dates");
    require(y.values.cols() >= 1, "response panel has no assets");
    require(x.values.rows() >= cfg.window + 2, "backtest needs T >= window + 2");
    require(cfg.window >= 3, "backtest window must be at least 3 for the difference PCA");
}

template <typename F>
void parallel_for(Index begin, Index end, int threads, F&& body) {
    const Index n = end - begin;
    const int workers = static_cast<int>(std::min<Index>(std::max(threads, 1), std::max<Index>(n, 1)));
    if (workers <= 1) {
        for (Index i = begin; i < end; ++i) body(i);
        return;
    }
    std::atomic<Index> next{begin};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (Index i = next++; i < end; i = next++) body(i);
        });
    for (auto& th : pool) th.join();
}

bool is_probabilistic(Method m) { return m == Method::jdkf || m == Method::dynamic_pca; }

std::uint64_t method_purpose(Method m) { return 0x5eed0000ULL + static_cast<std::uint64_t>(m); }

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::ssa: return "ssa";
        case Method::static_pca: return "static_pca";
        case Method::dynamic_pca: return "dynamic_pca";
        case Method::jdkf: return "jdkf";
    }
    return "ssa";
}

Method parse_method(const std::string& name) {
    for (Method m : {Method::ssa, Method::static_pca, Method::dynamic_pca, Method::jdkf})
        if (method_name(m) == name) return m;
    throw InvalidArgument("unknown method '" + name + "'");
}

std::vector<Method> parse_methods(const std::string& comma_list) {
    std::vector<Method> out;
    std::stringstream ss(comma_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(parse_method(item));
    }
    require(!out.empty(), "method list is empty");
    return out;
}

void BacktestConfig::validate() const {
    require(window >= 2, "backtest window must be at least 2");
    require(refit >= 1, "refit period must be at least 1");
    require(samples >= 1, "Monte Carlo sample count must be at least 1");
    require(!methods.empty(), "no backtest methods selected");
    for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t j = i + 1; j < methods.size(); ++j)
            require(methods[i] != methods[j], "duplicate backtest method");
    require(static_pca_dim >= 0, "static PCA dimension must be non-negative");
    require(dynamic_pca_dim >= 1, "dynamic PCA dimension must be positive");
    for (double a : var_levels) require(a > 0 && a < 1, "VaR levels must lie in (0, 1)");
    require(threads >= 1, "thread count must be positive");
}

std::size_t BacktestReport::method_slot(Method m) const {
    for (std::size_t i = 0; i < config.methods.size(); ++i)
        if (config.methods[i] == m) return i;
    throw InvalidArgument("method '" + method_name(m) + "' was not part of the backtest");
}

std::vector<double> BacktestReport::errors(Method m) const {
    const std::size_t slot = method_slot(m);
    std::vector<double> out;
    out.reserve(periods.size());
    for (const auto& p : periods) out.push_back(p.error[slot]);
    return out;
}

StaticPcaSweep static_pca_sweep(const TimeSeriesPanel& x, const TimeSeriesPanel& y, const BacktestConfig& cfg) {
    check_panels(x, y, cfg);
    const Matrix& X = x.values;
    const Matrix& Y = y.values;
    const Index T = X.rows();
    const Index p = X.cols();
    const Index s = cfg.window;
    const std::vector<Index> idx = resolve_scenario(x, cfg);

    StaticPcaSweep out;
    std::vector<std::vector<double>> errs(static_cast<std::size_t>(p));
    const Index first = s;
    const Index last = T - 1;
    std::vector<std::vector<double>> per_t(static_cast<std::size_t>(last - first),
                                           std::vector<double>(static_cast<std::size_t>(p), kNaN));
    parallel_for(first, last, cfg.threads, [&](Index t) {
        auto& row = per_t[static_cast<std::size_t>(t - first)];
        try {
            Matrix xw = X.middleRows(t - s, s);
            FactorModelFit<double> fit = fit_factor_loadings<double>(xw, Matrix(Y.middleRows(t - s, s)));
            Scenario<double> sc = realized_scenario(X, t + 1, idx);
            const double v_true = Y.row(t + 1).mean();
            const Vector x_t = X.row(t).transpose();
            PcaBasis<double> full = fit_difference_pca<double>(xw, p);
            for (Index d = 1; d <= p; ++d) {
                PcaBasis<double> basis{full.mean, full.W.leftCols(d), full.explained};
                const double v = static_pca_predict(basis, x_t, sc, fit).y.mean();
                row[static_cast<std::size_t>(d - 1)] = std::abs(v - v_true);
            }
        } catch (const std::exception&) {
        }
    });
    for (const auto& row : per_t)
        for (Index d = 0; d < p; ++d) errs[static_cast<std::size_t>(d)].push_back(row[static_cast<std::size_t>(d)]);

    double best = std::numeric_limits<double>::infinity();
    for (Index d = 1; d <= p; ++d) {
        std::vector<double> valid;
        for (double e : errs[static_cast<std::size_t>(d - 1)])
            if (std::isfinite(e)) valid.push_back(e);
        const double m = valid.empty() ? kNaN : mae(valid);
        out.dims.push_back(d);
        out.mae.push_back(m);
        if (std::isfinite(m) && m < best) {
            best = m;
            out.best_dim = d;
        }
    }
    if (out.best_dim == 0) out.best_dim = p;
    return out;
}

BacktestReport run_backtest(const TimeSeriesPanel& x, const TimeSeriesPanel& y, const BacktestConfig& cfg) {
    check_panels(x, y, cfg);
    BacktestReport report;
    report.config = cfg;
    report.factor_names = x.columns;
    report.asset_names = y.columns;
    report.config.scenario = resolve_scenario(x, cfg);
    report.config.scenario_names.clear();
    for (Index i : report.config.scenario) report.config.scenario_names.push_back(x.columns[static_cast<std::size_t>(i)]);
    const BacktestConfig& c = report.config;
    const std::vector<Index>& idx = c.scenario;

    const Matrix& X = x.values;
    const Matrix& Y = y.values;
    const Index T = X.rows();
    const Index s = c.window;
    const std::size_t M = c.methods.size();
    const auto has = [&](Method m) { return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end(); };

    Index static_dim = std::min(c.static_pca_dim, X.cols());
    if (has(Method::static_pca) && c.static_pca_dim == 0) {
        StaticPcaSweep sweep = static_pca_sweep(x, y, c);
        report.static_pca_dims = sweep.dims;
        report.static_pca_sweep_mae = sweep.mae;
        static_dim = sweep.best_dim;
    }
    report.static_pca_dim = static_dim;

    // Portfolio draws for the VaR test, one row per period.
    std::vector<std::vector<std::vector<double>>> draws(M);

    for (const Segment& seg : plan_segments(T, c)) {
        SegmentInfo info;
        info.begin = seg.begin;
        info.end = seg.end;
        const Index len = seg.end - seg.begin;
        std::optional<JdkfFit<double>> jdkf;
        std::optional<DynamicPcaModel<double>> dpca;
        if (has(Method::jdkf)) {
            try {
                jdkf = fit_jdkf<double>(X.middleRows(seg.begin, len), Y.middleRows(seg.begin, len), c.jdkf);
                info.jdkf_ell = jdkf->embedding.ell();
                info.jdkf_iterations = jdkf->em.iterations;
                info.jdkf_loglik = jdkf->em.trace.empty() ? kNaN : jdkf->em.trace.back();
            } catch (const std::exception& e) {
                info.jdkf_failure = e.what();
            }
        }
        if (has(Method::dynamic_pca)) {
            try {
                const Index d = std::min(c.dynamic_pca_dim, X.cols());
                dpca = dynamic_pca_fit<double>(X.middleRows(seg.begin, len), d, c.pca_em);
            } catch (const std::exception& e) {
                info.dynamic_pca_failure = e.what();
            }
        }

        const Index n_t = seg.t_end - seg.t_begin;
        std::vector<PeriodRecord> records(static_cast<std::size_t>(n_t));
        std::vector<std::vector<std::vector<double>>> seg_draws(M, std::vector<std::vector<double>>(
                                                                       static_cast<std::size_t>(n_t)));
        parallel_for(seg.t_begin, seg.t_end, c.threads, [&](Index t) {
            const std::size_t k = static_cast<std::size_t>(t - seg.t_begin);
            PeriodRecord& rec = records[k];
            rec.t = t;
            rec.label = x.index[static_cast<std::size_t>(t + 1)];
            rec.v_true = Y.row(t + 1).mean();
            rec.v_hat.assign(M, kNaN);
            rec.error.assign(M, kNaN);
            rec.failure.assign(M, "");

            const Scenario<double> sc = realized_scenario(X, t + 1, idx);
            const Vector x_t = X.row(t).transpose();
            const Matrix xw = X.middleRows(t - s, s);
            std::optional<FactorModelFit<double>> fit;
            std::string fit_error;
            try {
                fit = fit_factor_loadings<double>(xw, Matrix(Y.middleRows(t - s, s)));
            } catch (const std::exception& e) {
                fit_error = e.what();
            }

            for (std::size_t slot = 0; slot < M; ++slot) {
                const Method m = c.methods[slot];
                const std::uint64_t seed = derive_seed(c.seed, method_purpose(m), static_cast<std::uint64_t>(t));
                try {
                    if (m != Method::jdkf && !fit) throw NumericalError("factor regression failed: " + fit_error);
                    double v = kNaN;
                    switch (m) {
                        case Method::ssa: v = ssa_predict(x_t, sc, *fit).y.mean(); break;
                        case Method::static_pca: v = static_pca_predict(xw, x_t, sc, *fit, static_dim).y.mean(); break;
                        case Method::dynamic_pca: {
                            if (!dpca) throw NumericalError("dynamic PCA fit failed: " + info.dynamic_pca_failure);
                            const Vector z_t = dpca->em.run.filtered_means.row(t - seg.begin).transpose();
                            StressPrediction<double> pred =
                                dynamic_pca_predict(*dpca, z_t, sc, *fit, c.samples, seed, c.conditioning);
                            Vector port = pred.y_draws.rowwise().mean();
                            seg_draws[slot][k].assign(port.data(), port.data() + port.size());
                            v = port.mean();
                            break;
                        }
                        case Method::jdkf: {
                            if (!jdkf) throw NumericalError("JDKF fit failed: " + info.jdkf_failure);
                            const Vector psi_t = jdkf->run().filtered_means.row(t - seg.begin).transpose();
                            StressPrediction<double> pred =
                                jdkf_predict(jdkf->model(), jdkf->x_mean, jdkf->y_mean, GaussianState<double>{psi_t, {}},
                                             sc, c.samples, seed, c.conditioning);
                            Vector port = pred.y_draws.rowwise().mean();
                            seg_draws[slot][k].assign(port.data(), port.data() + port.size());
                            v = port.mean();
                            break;
                        }
                    }
                    if (!std::isfinite(v)) throw NumericalError("non-finite prediction");
                    rec.v_hat[slot] = v;
                    rec.error[slot] = std::abs(v - rec.v_true);
                } catch (const std::exception& e) {
                    rec.v_hat[slot] = kNaN;
                    rec.error[slot] = kNaN;
                    rec.failure[slot] = e.what();
                    seg_draws[slot][k].clear();
                }
            }
        });
        for (auto& r : records) report.periods.push_back(std::move(r));
        for (std::size_t slot = 0; slot < M; ++slot)
            for (auto& d : seg_draws[slot]) draws[slot].push_back(std::move(d));
        report.segments.push_back(std::move(info));
    }

    for (std::size_t slot = 0; slot < M; ++slot) {
        MethodSummary sum;
        sum.method = c.methods[slot];
        std::vector<double> valid;
        for (const auto& p : report.periods)
            if (std::isfinite(p.error[slot])) valid.push_back(p.error[slot]);
        sum.evaluated = static_cast<Index>(valid.size());
        sum.missing = static_cast<Index>(report.periods.size()) - sum.evaluated;
        sum.mae = valid.empty() ? kNaN : mae(valid);
        report.summaries.push_back(sum);
    }

    for (std::size_t a = 0; a < M; ++a)
        for (std::size_t b = 0; b < M; ++b) {
            if (a == b) continue;
            std::vector<double> ea, eb;
            for (const auto& p : report.periods)
                if (std::isfinite(p.error[a]) && std::isfinite(p.error[b])) {
                    ea.push_back(p.error[a]);
                    eb.push_back(p.error[b]);
                }
            PairwiseAccuracy acc;
            acc.a = c.methods[a];
            acc.b = c.methods[b];
            acc.periods = static_cast<Index>(ea.size());
            acc.percent = ea.empty() ? kNaN : accuracy_ratio(ea, eb);
            report.accuracy.push_back(acc);
        }

    for (std::size_t slot = 0; slot < M; ++slot) {
        if (!is_probabilistic(c.methods[slot])) continue;
        std::vector<std::size_t> rows;
        for (std::size_t k = 0; k < report.periods.size(); ++k)
            if (!draws[slot][k].empty()) rows.push_back(k);
        if (rows.empty()) continue;
        Matrix samples(static_cast<Index>(rows.size()), c.samples);
        Vector realized(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& d = draws[slot][rows[i]];
            for (Index j = 0; j < c.samples; ++j) samples(static_cast<Index>(i), j) = d[static_cast<std::size_t>(j)];
            realized(static_cast<Index>(i)) = report.periods[rows[i]].v_true;
        }
        for (double alpha : c.var_levels) report.var.push_back({c.methods[slot], var_exceptions_test(samples, realized, alpha)});
    }
    return report;
}

std::string summary_table(const BacktestReport& report) {
    std::ostringstream os;
    os << "method        MAE         evaluated  missing\n";
    for (const auto& s : report.summaries) {
        char line[128];
        std::snprintf(line, sizeof line, "%-12s  %-10.6g  %-9lld  %lld\n", method_name(s.method).c_str(), s.mae,
                      static_cast<long long>(s.evaluated), static_cast<long long>(s.missing));
        os << line;
    }
    os << "\naccuracy (% of periods where the row method beats the column method)\n";
    os << "            ";
    for (Method m : report.config.methods) {
        char cell[32];
        std::snprintf(cell, sizeof cell, "%12s", method_name(m).c_str());
        os << cell;
    }
    os << "\n";
    for (Method a : report.config.methods) {
        char head[32];
        std::snprintf(head, sizeof head, "%-12s", method_name(a).c_str());
        os << head;
        for (Method b : report.config.methods) {
            char cell[32];
            if (a == b) {
                std::snprintf(cell, sizeof cell, "%12s", "-");
            } else {
                double pct = kNaN;
                for (const auto& acc : report.accuracy)
                    if (acc.a == a && acc.b == b) pct = acc.percent;
                std::snprintf(cell, sizeof cell, "%12.2f", pct);
            }
            os << cell;
        }
        os << "\n";
    }
    if (!report.var.empty()) {
        os << "\nVaR exceptions\n";
        for (const auto& v : report.var) {
            char line[160];
            std::snprintf(line, sizeof line, "%-12s  alpha=%.2f  exceptions=%lld  expected=%.2f  p=%.4f\n",
                          method_name(v.method).c_str(), v.result.alpha, static_cast<long long>(v.result.exceptions),
                          v.result.expected, v.result.p_value);
            os << line;
        }
    }
    return os.str();
}

std::string report_json(const BacktestReport& report) {
    Json j;
    j["config"] = to_json(report.config);
    j["factors"] = report.factor_names;
    j["assets"] = report.asset_names;
    j["static_pca_dim"] = report.static_pca_dim;
    if (!report.static_pca_dims.empty()) {
        Json sweep = Json::array();
        for (std::size_t i = 0; i < report.static_pca_dims.size(); ++i)
            sweep.push_back({{"dim", report.static_pca_dims[i]}, {"mae", finite_or_null(report.static_pca_sweep_mae[i])}});
        j["static_pca_sweep"] = sweep;
    }
    Json segs = Json::array();
    for (const auto& s : report.segments) {
        Json e;
        e["begin"] = s.begin;
        e["end"] = s.end;
        e["jdkf_ell"] = s.jdkf_ell;
        e["jdkf_em_iterations"] = s.jdkf_iterations;
        e["jdkf_loglik"] = finite_or_null(s.jdkf_loglik);
        e["jdkf_failure"] = s.jdkf_failure;
        e["dynamic_pca_failure"] = s.dynamic_pca_failure;
        segs.push_back(e);
    }
    j["segments"] = segs;
    Json summ = Json::array();
    for (const auto& s : report.summaries)
        summ.push_back({{"method", method_name(s.method)},
                        {"mae", finite_or_null(s.mae)},
                        {"evaluated", s.evaluated},
                        {"missing", s.missing}});
    j["summary"] = summ;
    Json acc = Json::array();
    for (const auto& a : report.accuracy)
        acc.push_back({{"method", method_name(a.a)},
                       {"against", method_name(a.b)},
                       {"percent", finite_or_null(a.percent)},
                       {"periods", a.periods}});
    j["accuracy"] = acc;
    Json var = Json::array();
    for (const auto& v : report.var) {
        Json e;
        e["method"] = method_name(v.method);
        e["alpha"] = v.result.alpha;
        e["periods"] = v.result.periods;
        e["exceptions"] = v.result.exceptions;
        e["expected"] = v.result.expected;
        e["z_stat"] = finite_or_null(v.result.z_stat);
        e["p_value"] = finite_or_null(v.result.p_value);
        Json th = Json::array();
        for (double d : v.result.thresholds) th.push_back(finite_or_null(d));
        e["thresholds"] = th;
        e["exceptions_by_period"] = v.result.exceptions_by_period;
        var.push_back(e);
    }
    j["var"] = var;
    Json periods = Json::array();
    for (const auto& p : report.periods) {
        Json e;
        e["t"] = p.t;
        e["date"] = p.label;
        e["v_true"] = p.v_true;
        Json vh, er, fl;
        for (std::size_t k = 0; k < report.config.methods.size(); ++k) {
            const std::string name = method_name(report.config.methods[k]);
            vh[name] = finite_or_null(p.v_hat[k]);
            er[name] = finite_or_null(p.error[k]);
            if (!p.failure[k].empty()) fl[name] = p.failure[k];
        }
        e["v_hat"] = vh;
        e["abs_error"] = er;
        if (!fl.is_null()) e["failures"] = fl;
        periods.push_back(e);
    }
    j["periods"] = periods;
    return j.dump(2) + "\n";
}

std::string metrics_csv(const BacktestReport& report) {
    std::ostringstream os;
    os << "metric,method,against,level,value\n";
    for (const auto& s : report.summaries) {
        const std::string m = method_name(s.method);
        os << "mae," << m << ",,," << format_double(s.mae) << "\n";
        os << "evaluated," << m << ",,," << s.evaluated << "\n";
        os << "missing," << m << ",,," << s.missing << "\n";
    }
    for (const auto& a : report.accuracy)
        os << "accuracy," << method_name(a.a) << "," << method_name(a.b) << ",," << format_double(a.percent) << "\n";
    for (const auto& v : report.var) {
        const std::string m = method_name(v.method);
        const std::string lv = format_double(v.result.alpha);
        os << "var_exceptions," << m << ",," << lv << "," << v.result.exceptions << "\n";
        os << "var_expected," << m << ",," << lv << "," << format_double(v.result.expected) << "\n";
        os << "var_z," << m << ",," << lv << "," << format_double(v.result.z_stat) << "\n";
        os << "var_p_value," << m << ",," << lv << "," << format_double(v.result.p_value) << "\n";
    }
    return os.str();
}

std::string predictions_csv(const BacktestReport& report) {
    std::ostringstream os;
    os << "t,date,v_true";
    for (Method m : report.config.methods) os << "," << method_name(m) << "_pred," << method_name(m) << "_abs_error";
    os << "\n";
    for (const auto& p : report.periods) {
        os << p.t << "," << p.label << "," << format_double(p.v_true);
        for (std::size_t k = 0; k < report.config.methods.size(); ++k)
            os << "," << format_double(p.v_hat[k]) << "," << format_double(p.error[k]);
        os << "\n";
    }
    return os.str();
}

std::string plot_csv(const BacktestReport& report) {
    std::ostringstream os;
    os << "date,true";
    for (Method m : report.config.methods) os << "," << method_name(m);
    os << "\n";
    for (const auto& p : report.periods) {
        os << p.label << "," << format_double(p.v_true);
        for (std::size_t k = 0; k < report.config.methods.size(); ++k) os << "," << format_double(p.v_hat[k]);
        os << "\n";
    }
    return os.str();
}

void write_report(const BacktestReport& report, const std::filesystem::path& dir) {
    write_text(dir / "report.json", report_json(report));
    write_text(dir / "metrics.csv", metrics_csv(report));
    write_text(dir / "predictions.csv", predictions_csv(report));
    write_text(dir / "plot_data.csv", plot_csv(report));
}

}  // namespace dms
