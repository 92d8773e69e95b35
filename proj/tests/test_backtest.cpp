#include "dms/backtest.hpp"
#include "dms/config.hpp"
#include "dms/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace dms;

namespace {

SyntheticWorld world(std::uint64_t seed, Index T = 260) {
    SyntheticWorldConfig c;
    c.T = T;
    c.seed = seed;
    return make_synthetic_world(c);
}

BacktestConfig quick_config() {
    BacktestConfig c;
    c.window = 40;
    c.refit = 80;
    c.samples = 200;
    c.scenario_names = {"f1", "f2", "f3"};
    c.static_pca_dim = 3;
    c.dynamic_pca_dim = 3;
    c.jdkf.embedding.ell = 3;
    c.jdkf.embedding.window = 30;
    c.jdkf.em.max_iters = 20;
    return c;
}

}  // namespace

TEST(Backtest, PeriodsTileTheEvaluationRange) {
    SyntheticWorld w = world(1);
    BacktestConfig c = quick_config();
    auto r = run_backtest(w.x, w.y, c);
    ASSERT_EQ(static_cast<Index>(r.periods.size()), w.x.rows() - 1 - c.window);
    std::set<Index> seen;
    for (std::size_t k = 0; k < r.periods.size(); ++k) {
        const auto& p = r.periods[k];
        EXPECT_EQ(p.t, c.window + Index(k));
        EXPECT_EQ(p.label, w.x.index[static_cast<std::size_t>(p.t + 1)]);
        EXPECT_DOUBLE_EQ(p.v_true, w.y.values.row(p.t + 1).mean());
        seen.insert(p.t);
    }
    EXPECT_EQ(seen.size(), r.periods.size());
    for (const auto& s : r.segments) {
        EXPECT_LE(s.end, w.x.rows());
        EXPECT_EQ(s.begin % c.refit, 0);
    }
}

TEST(Backtest, MetricsFollowFromPeriodErrors) {
    SyntheticWorld w = world(2);
    auto r = run_backtest(w.x, w.y, quick_config());
    for (const auto& s : r.summaries) {
        auto e = r.errors(s.method);
        std::vector<double> finite;
        for (double v : e)
            if (std::isfinite(v)) finite.push_back(v);
        EXPECT_EQ(s.evaluated, Index(finite.size()));
        EXPECT_EQ(s.missing, Index(e.size() - finite.size()));
        if (!finite.empty()) EXPECT_NEAR(s.mae, mae(finite), 1e-15);
        for (const auto& p : r.periods) {
            const std::size_t slot = r.method_slot(s.method);
            if (std::isfinite(p.v_hat[slot])) EXPECT_EQ(p.error[slot], std::abs(p.v_hat[slot] - p.v_true));
        }
    }
    for (const auto& a : r.accuracy)
        for (const auto& b : r.accuracy)
            if (a.a == b.b && a.b == b.a && a.periods > 0) EXPECT_LE(a.percent + b.percent, 100.0 + 1e-12);
    EXPECT_EQ(r.var.size(), 4u);
}

TEST(Backtest, FullStressSsaOnLinearWorldHasZeroError) {
    NormalStream rng(5);
    const Index T = 120, p = 4, n = 3;
    Matrix x = rng.matrix<double>(T, p);
    Matrix B = rng.matrix<double>(n, p);
    Matrix y = x * B.transpose();
    auto xp = make_panel(x, {"f1", "f2", "f3", "f4"}, monthly_index(T));
    auto yp = make_panel(y, {"a1", "a2", "a3"}, monthly_index(T));
    BacktestConfig c;
    c.window = 30;
    c.methods = {Method::ssa};
    c.scenario = {0, 1, 2, 3};
    auto r = run_backtest(xp, yp, c);
    EXPECT_LT(r.summaries[0].mae, 1e-12);
    EXPECT_EQ(r.summaries[0].missing, 0);
}

TEST(Backtest, IdenticalSeedsGiveIdenticalArtifacts) {
    SyntheticWorld w = world(3, 200);
    BacktestConfig c = quick_config();
    auto a = run_backtest(w.x, w.y, c);
    auto b = run_backtest(w.x, w.y, c);
    EXPECT_EQ(report_json(a), report_json(b));
    EXPECT_EQ(metrics_csv(a), metrics_csv(b));
    EXPECT_EQ(predictions_csv(a), predictions_csv(b));
    c.threads = 3;
    auto threaded = run_backtest(w.x, w.y, c);
    EXPECT_EQ(predictions_csv(a), predictions_csv(threaded));
    c.seed += 1;
    auto other = run_backtest(w.x, w.y, c);
    EXPECT_NE(predictions_csv(a), predictions_csv(other));
}

TEST(Backtest, StaticPcaSweepPicksBestDimension) {
    SyntheticWorld w = world(4, 160);
    BacktestConfig c = quick_config();
    c.methods = {Method::ssa, Method::static_pca};
    c.static_pca_dim = 0;
    auto sweep = static_pca_sweep(w.x, w.y, c);
    ASSERT_EQ(sweep.dims.size(), 8u);
    Index best = 0;
    for (std::size_t k = 0; k < sweep.mae.size(); ++k)
        if (sweep.mae[k] < sweep.mae[static_cast<std::size_t>(best)]) best = Index(k);
    EXPECT_EQ(sweep.best_dim, sweep.dims[static_cast<std::size_t>(best)]);
    auto r = run_backtest(w.x, w.y, c);
    EXPECT_EQ(r.static_pca_dim, sweep.best_dim);
    // d = p coincides with SSA.
    EXPECT_NEAR(sweep.mae.back(), r.summaries[0].mae, 1e-12);
}

TEST(Backtest, ConfigValidation) {
    SyntheticWorld w = world(5, 60);
    BacktestConfig c = quick_config();
    c.window = 2;
    EXPECT_THROW(run_backtest(w.x, w.y, c), InvalidArgument);
    c = quick_config();
    c.window = 59;
    EXPECT_THROW(run_backtest(w.x, w.y, c), InvalidArgument);
    c = quick_config();
    c.scenario_names = {"nope"};
    EXPECT_THROW(run_backtest(w.x, w.y, c), InvalidArgument);
    EXPECT_THROW(parse_methods("ssa,bogus"), InvalidArgument);
    EXPECT_EQ(parse_methods("jdkf,ssa").size(), 2u);
}

TEST(Backtest, FailingFitsBecomeMissingPeriods) {
    SyntheticWorld w = world(6, 140);
    BacktestConfig c = quick_config();
    c.methods = {Method::ssa, Method::jdkf};
    c.jdkf.embedding.ell = 120;
    auto r = run_backtest(w.x, w.y, c);
    const auto& js = r.summaries[r.method_slot(Method::jdkf)];
    EXPECT_EQ(js.evaluated, 0);
    EXPECT_GT(js.missing, 0);
    EXPECT_FALSE(r.segments.front().jdkf_failure.empty());
    EXPECT_EQ(r.summaries[r.method_slot(Method::ssa)].missing, 0);
    EXPECT_NE(report_json(r).find("null"), std::string::npos);
}

TEST(BacktestConfigJson, RoundTripAndUnknownKeys) {
    BacktestConfig c = quick_config();
    c.methods = {Method::jdkf, Method::ssa};
    Json j = to_json(c);
    BacktestConfig back = backtest_config_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
    j["surprise"] = 1;
    EXPECT_THROW(backtest_config_from_json(j), InvalidArgument);
    Json bad = to_json(c);
    bad["weighting"] = "cap";
    EXPECT_THROW(backtest_config_from_json(bad), InvalidArgument);
}
