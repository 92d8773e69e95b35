#include "dms/conditional.hpp"
#include "dms/jdkf.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dms;

TEST(GaussianConditioning, MatchesPrecisionOracle) {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        NormalStream rng(seed);
        const Index n = 2 + Index(seed % 7);
        const Matrix cov = oracle::random_spd(rng, n, 0.1);
        const Vector mean = rng.vector<double>(n);
        std::vector<std::pair<Index, double>> pairs;
        for (Index i = 0; i < n; ++i)
            if ((splitmix64(seed * 31 + std::uint64_t(i)) & 1) && Index(pairs.size()) + 1 < n) pairs.push_back({i, rng.next()});
        if (pairs.empty()) pairs.push_back({n - 1, 0.7});
        auto sc = make_scenario(pairs);
        auto got = condition_gaussian(mean, cov, sc);
        Vector m;
        Matrix c;
        oracle::precision_condition(mean, cov, sc.fixed_indices, sc.values, m, c);
        EXPECT_LT((got.mean - m).cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed;
        EXPECT_LT((got.cov - c).cwiseAbs().maxCoeff(), 1e-8) << "seed " << seed;
    }
}

TEST(GaussianConditioning, BivariateClosedForm) {
    for (double rho : {-0.9, -0.25, 0.0, 0.5, 0.75}) {
        for (double c : {-2.0, 0.5, 1.0}) {
            Matrix cov(2, 2);
            cov << 1, rho, rho, 1;
            auto got = condition_gaussian(Vector(Vector::Zero(2)), cov, make_scenario<double>({{0, c}}));
            EXPECT_EQ(got.mean(0), rho * c);
            EXPECT_EQ(got.cov(0, 0), 1 - rho * rho);
        }
    }
}

TEST(GaussianConditioning, EmptyFixedSetReturnsMarginal) {
    NormalStream rng(3);
    Matrix cov = oracle::random_spd(rng, 4);
    Vector mean = rng.vector<double>(4);
    auto got = condition_gaussian(mean, cov, Scenario<double>{});
    EXPECT_EQ((got.mean - mean).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((got.cov - cov).cwiseAbs().maxCoeff(), 0.0);
}

TEST(GaussianConditioning, PosteriorCovarianceIsSymmetricPsd) {
    NormalStream rng(8);
    Matrix cov = oracle::random_spd(rng, 6, 0.05);
    auto got = condition_gaussian(Vector(Vector::Zero(6)), cov, make_scenario<double>({{1, 1.0}, {4, -1.0}}));
    EXPECT_EQ((got.cov - got.cov.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(got.cov).eigenvalues().minCoeff(), -1e-12);
}

TEST(GaussianConditioning, SingularFixedBlockIsRidgedOrRejected) {
    Matrix cov = Matrix::Ones(3, 3);
    cov(2, 2) = 2;
    // Fixing two perfectly collinear coordinates.
    auto sc = make_scenario<double>({{0, 1.0}, {1, 1.0}});
    auto got = condition_gaussian(Vector(Vector::Zero(3)), cov, sc);
    EXPECT_NEAR(got.mean(0), 1.0, 1e-6);
    Matrix zero = Matrix::Zero(2, 2);
    EXPECT_THROW(condition_gaussian(Vector(Vector::Zero(2)), zero, make_scenario<double>({{0, 1.0}})), SingularMatrix);
}

TEST(Scenario, ValidationAndOrdering) {
    auto sc = make_scenario<double>({{3, 1.0}, {0, 2.0}});
    EXPECT_EQ(sc.fixed_indices, (std::vector<Index>{0, 3}));
    EXPECT_EQ(sc.values(0), 2.0);
    EXPECT_EQ(sc.free_indices(5), (std::vector<Index>{1, 2, 4}));
    EXPECT_THROW(make_scenario<double>({{1, 1.0}, {1, 2.0}}), InvalidArgument);
    EXPECT_THROW(sc.validate(3), InvalidArgument);
    Scenario<double> bad = sc;
    bad.horizon = 0;
    EXPECT_THROW(bad.validate(5), InvalidArgument);
}

namespace {

StateSpaceModel<double> small_model() {
    StateSpaceModel<double> md;
    md.A = Vector::Constant(2, 0.9).asDiagonal();
    md.Q = Matrix::Identity(2, 2) * 0.19;
    md.Hx.resize(3, 2);
    md.Hx << 1, 0, 0, 1, 1, 1;
    md.Hy.resize(1, 2);
    md.Hy << 0.5, -0.5;
    md.Rx = Matrix::Identity(3, 3) * 0.01;
    md.Ry = Matrix::Identity(1, 1) * 0.01;
    md.Rxy = Matrix::Zero(3, 1);
    return md;
}

}  // namespace

TEST(ConditionalLaw, FullPipelineMatchesHandComputation) {
    auto md = small_model();
    Vector psi(2);
    psi << 1.0, -1.0;
    auto sc = make_scenario<double>({{0, 2.0}});
    auto law = conditional_law(md, GaussianState<double>{psi, {}}, sc);
    // Observation law over Hx rows: mean Hx A psi, cov Hx Q Hx^T.
    Vector mean = md.Hx * (md.A * psi);
    Matrix cov = md.Hx * md.Q * md.Hx.transpose();
    // One fixed coordinate: scalar regression of the free rows on row 0.
    Vector m2 = mean.tail(2) + cov.block(1, 0, 2, 1) * ((2.0 - mean(0)) / cov(0, 0));
    Matrix h2 = md.Hx.bottomRows(2);
    Matrix pinv = h2.completeOrthogonalDecomposition().pseudoInverse();
    EXPECT_LT((law.mean - pinv * m2).cwiseAbs().maxCoeff(), 1e-10);
    // A coordinate fixed at c pins psi_1 = c.
    EXPECT_NEAR(law.mean(0), 2.0, 1e-10);
}

TEST(ConditionalLaw, FixingEveryObservationRaisesEmptyFreeSet) {
    auto md = small_model();
    auto sc = make_scenario<double>({{0, 1.0}, {1, 1.0}, {2, 1.0}});
    EXPECT_THROW(conditional_law(md, GaussianState<double>{Vector::Zero(2), {}}, sc), EmptyFreeSet);
    auto all = make_scenario<double>({{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 0.0}});
    EXPECT_THROW(conditional_law(md, GaussianState<double>{Vector::Zero(2), {}}, all), EmptyFreeSet);
}

TEST(ConditionalLaw, ResponseScenarioUsesStackedRows) {
    auto md = small_model();
    auto sc = make_scenario<double>({{3, 0.4}});
    auto law = conditional_law(md, GaussianState<double>{Vector::Zero(2), {}}, sc);
    Vector y = md.Hy * law.mean;
    EXPECT_NEAR(y(0), 0.4, 1e-8);
}

TEST(ConditionalLaw, MeasurementNoiseWidensTheLaw) {
    auto md = small_model();
    auto sc = make_scenario<double>({{0, 1.0}});
    GaussianState<double> s{Vector::Zero(2), {}};
    auto a = conditional_law(md, s, sc);
    auto b = conditional_law(md, s, sc, ConditioningOptions{true, true});
    EXPECT_GT(b.cov.trace(), a.cov.trace());
}

TEST(Propagate, HorizonAccumulatesTransitionAndNoise) {
    auto md = small_model();
    Vector psi(2);
    psi << 1, 2;
    auto s = propagate(md, GaussianState<double>{psi, {}}, 2);
    EXPECT_NEAR(s.mean(0), 0.81, 1e-15);
    EXPECT_NEAR(s.cov(0, 0), 0.19 * 0.81 + 0.19, 1e-15);
}

TEST(Sampling, DrawsMatchLawMoments) {
    ConditionalLaw<double> law;
    law.mean = Vector(2);
    law.mean << 1, -2;
    law.cov = Matrix(2, 2);
    law.cov << 2, 0.6, 0.6, 1;
    Matrix d = sample_conditional(law, 200000, 17);
    Vector m = d.colwise().mean().transpose();
    Matrix c = (d.rowwise() - m.transpose()).transpose() * (d.rowwise() - m.transpose()) / double(d.rows() - 1);
    EXPECT_LT((m - law.mean).cwiseAbs().maxCoeff(), 0.015);
    EXPECT_LT((c - law.cov).cwiseAbs().maxCoeff(), 0.03);
}

TEST(Sampling, SameSeedSameDrawsAndPrefixStable) {
    ConditionalLaw<double> law{Vector::Zero(3), Matrix::Identity(3, 3)};
    Matrix a = sample_conditional(law, 100, 5);
    Matrix b = sample_conditional(law, 100, 5);
    Matrix c = sample_conditional(law, 50, 5);
    EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((a.topRows(50) - c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Sampling, DegenerateCovarianceStillSamples) {
    ConditionalLaw<double> law{Vector::Zero(2), Matrix::Ones(2, 2)};
    Matrix d = sample_conditional(law, 10, 1);
    EXPECT_LT((d.col(0) - d.col(1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CenterScenario, SubtractsCovariateAndResponseMeans) {
    auto sc = make_scenario<double>({{1, 5.0}, {3, 1.0}});
    Vector xm(3), ym(1);
    xm << 1, 2, 3;
    ym << 0.5;
    auto c = center_scenario(sc, xm, ym);
    EXPECT_EQ(c.values(0), 3.0);
    EXPECT_EQ(c.values(1), 0.5);
}
