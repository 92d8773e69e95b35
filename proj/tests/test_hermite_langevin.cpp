#include "dms/hermite.hpp"
#include "dms/langevin.hpp"
#include "dms/linalg.hpp"
#include "dms/random.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dms;

TEST(Hermite, ClosedFormsOfLowOrders) {
    for (double x : {-2.5, -1.0, 0.0, 0.3, 1.7}) {
        EXPECT_EQ(hermite(0, x), 1.0);
        EXPECT_EQ(hermite(1, x), x);
        EXPECT_NEAR(hermite(2, x), (x * x - 1) / std::sqrt(2.0), 1e-15);
        EXPECT_NEAR(hermite(3, x), (x * x * x - 3 * x) / std::sqrt(6.0), 1e-14);
        EXPECT_NEAR(hermite_derivative(3, x), (3 * x * x - 3) / std::sqrt(6.0), 1e-14);
    }
    EXPECT_THROW(hermite(-1, 0.0), InvalidArgument);
}

// (Delta - w . grad) h_{i,j} = -(i + j) h_{i,j}, checked by central differences.
TEST(Hermite, GeneratorEigenRelationByFiniteDifferences) {
    const double h = 1e-3;
    double worst = 0;
    for (int i = 0; i <= 3; ++i)
        for (int j = 0; j <= 3 - i; ++j) {
            const HermiteIndex idx{i, j};
            auto f = [&](double a, double b) { return hermite(i, a) * hermite(j, b); };
            for (double a = -3; a <= 3 + 1e-9; a += 0.25)
                for (double b = -3; b <= 3 + 1e-9; b += 0.25) {
                    const double fa = (f(a + h, b) - f(a - h, b)) / (2 * h);
                    const double fb = (f(a, b + h) - f(a, b - h)) / (2 * h);
                    const double lap = (f(a + h, b) + f(a - h, b) + f(a, b + h) + f(a, b - h) - 4 * f(a, b)) / (h * h);
                    const double lhs = lap - a * fa - b * fb;
                    worst = std::max(worst, std::abs(lhs + idx.eigenvalue() * f(a, b)));
                }
        }
    EXPECT_LE(worst, 1e-4);
}

TEST(Hermite, GradientMatchesDerivatives) {
    Matrix pts(3, 2);
    pts << 0.5, -1.0, 2.0, 0.1, -0.7, 1.3;
    Matrix g = hermite_gradient(HermiteIndex{2, 1}, pts);
    for (Index t = 0; t < 3; ++t) {
        const double a = pts(t, 0), b = pts(t, 1);
        EXPECT_NEAR(g(t, 0), std::sqrt(2.0) * a * b, 1e-14);
        EXPECT_NEAR(g(t, 1), (a * a - 1) / std::sqrt(2.0), 1e-14);
    }
    EXPECT_THROW(hermite_eval(HermiteIndex{1, 0}, Matrix(Matrix::Zero(2, 3))), InvalidArgument);
}

TEST(Hermite, OrthonormalUnderStandardGaussian) {
    NormalStream rng(2024);
    const Index N = 1000000;
    Matrix w = rng.matrix<double>(N, 2);
    std::vector<HermiteIndex> fns{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
    Matrix vals(N, Index(fns.size()));
    for (std::size_t k = 0; k < fns.size(); ++k) vals.col(Index(k)) = hermite_eval(fns[k], w);
    Matrix gram = vals.transpose() * vals / double(N);
    EXPECT_LE((gram - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Langevin, IsotropicPathHasUnitStationaryMoments) {
    SimulationConfig<double> sc;
    sc.steps = 200000;
    sc.dt = 0.01;
    sc.seed = 31;
    sc.burn_in = 1000;
    auto path = simulate_langevin(PotentialSpec<double>::isotropic(2), sc);
    ASSERT_EQ(path.size(), 200001);
    Vector mean = path.states.colwise().mean().transpose();
    Vector var = (path.states.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() / double(path.size());
    // Euler stationary variance is 2 / (2 - dt).
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.1);
    EXPECT_NEAR(var(0), 2.0 / 1.99, 0.08);
    EXPECT_NEAR(var(1), 2.0 / 1.99, 0.08);
}

TEST(Langevin, EulerStepMatchesHandUpdate) {
    SimulationConfig<double> sc;
    sc.steps = 3;
    sc.dt = 0.05;
    sc.seed = 4;
    sc.keep_noise = true;
    sc.initial = Vector(2);
    sc.initial << 1.0, -0.5;
    Vector a(2);
    a << 1.0, 2.0;
    auto path = simulate_langevin(PotentialSpec<double>::quadratic(a), sc);
    for (Index k = 0; k < 3; ++k) {
        Vector prev = path.states.row(k).transpose();
        Vector next = prev - a.cwiseProduct(prev) * sc.dt + std::sqrt(2 * sc.dt) * path.noise.row(k).transpose();
        EXPECT_LT((next - path.states.row(k + 1).transpose()).cwiseAbs().maxCoeff(), 1e-15);
    }
    EXPECT_DOUBLE_EQ(path.times(3), 0.15);
}

TEST(Langevin, ThinningKeepsEveryKthStep) {
    SimulationConfig<double> fine, coarse;
    fine.steps = 20;
    fine.seed = coarse.seed = 9;
    coarse.steps = 4;
    coarse.thin = 5;
    auto pf = simulate_langevin(PotentialSpec<double>::isotropic(2), fine);
    auto pc = simulate_langevin(PotentialSpec<double>::isotropic(2), coarse);
    for (Index k = 0; k <= 4; ++k) EXPECT_EQ((pc.states.row(k) - pf.states.row(5 * k)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(pc.spacing, 0.05);
}

TEST(Langevin, GuardsAndDivergence) {
    SimulationConfig<double> sc;
    sc.steps = 10;
    sc.dt = 1.5;
    EXPECT_THROW(simulate_langevin(PotentialSpec<double>::isotropic(2), sc), InvalidArgument);
    EXPECT_THROW(PotentialSpec<double>::quadratic(Vector(Vector::Constant(2, -1.0))), InvalidArgument);
    sc.dt = 0.1;
    sc.steps = 100000;
    auto explode = PotentialSpec<double>::custom(1, [](const Vector& w) { return Vector(-w.array().cube()); });
    sc.initial = Vector::Constant(1, 3.0);
    EXPECT_THROW(simulate_langevin(explode, sc), SimulationDiverged);
    EXPECT_EQ(default_burn_in(PotentialSpec<double>::isotropic(2), 0.01), 1000);
}

TEST(ObservationMap, AllKinds) {
    Matrix s(2, 2);
    s << 3, 4, -1, 0;
    EXPECT_EQ(apply_observation_map(s, ObservationMap<double>::sum_of_squares())(0, 0), 25.0);
    EXPECT_EQ(apply_observation_map(s, ObservationMap<double>::norm())(0, 0), 5.0);
    EXPECT_EQ(apply_observation_map(s, ObservationMap<double>::projection({1}))(0, 0), 4.0);
    EXPECT_EQ(apply_observation_map(s, ObservationMap<double>::exponential())(1, 1), 1.0);
    Matrix m(1, 2);
    m << 2, -1;
    EXPECT_EQ(apply_observation_map(s, ObservationMap<double>::linear(m))(0, 0), 2.0);
    EXPECT_THROW(apply_observation_map(s, ObservationMap<double>::projection({2})), InvalidArgument);
}

TEST(Random, DerivedSeedsAreStableAndDistinct) {
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
    EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
    NormalStream a(5), b(5);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(a.next(), b.next());
}

TEST(Random, MatrixFillIsRowMajor) {
    NormalStream a(6), b(6);
    Matrix m = a.matrix<double>(3, 2);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 2; ++j) EXPECT_EQ(m(i, j), b.next());
}

TEST(Linalg, JitteredCholeskyEscalatesOnlyWhenNeeded) {
    Matrix spd(2, 2);
    spd << 2, 1, 1, 2;
    JitteredCholesky<double> c;
    ASSERT_TRUE(try_cholesky(spd, c));
    EXPECT_EQ(c.jitter, 0.0);
    EXPECT_NEAR(c.log_det(), std::log(3.0), 1e-15);
    Matrix psd = Matrix::Ones(2, 2);
    ASSERT_TRUE(try_cholesky(psd, c));
    EXPECT_GT(c.jitter, 0.0);
    Matrix neg = -Matrix::Identity(2, 2);
    EXPECT_THROW(jittered_cholesky(neg, "test", 7), SingularMatrix);
}

TEST(Linalg, PseudoInverseAndPsdProjection) {
    Matrix a(3, 2);
    a << 1, 2, 3, 4, 5, 6;
    Matrix p = pseudo_inverse(a);
    EXPECT_LT((a * p * a - a).cwiseAbs().maxCoeff(), 1e-12);
    Matrix indefinite(2, 2);
    indefinite << 1, 2, 2, 1;
    Matrix q = psd_project(indefinite);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(q).eigenvalues().minCoeff(), -1e-15);
    Matrix x(4, 2);
    x << 1, 0, 2, 1, 3, 0, 4, 1;
    Matrix s = sample_covariance(x);
    EXPECT_NEAR(s(0, 0), 5.0 / 3.0, 1e-15);
    EXPECT_NEAR(s(0, 1), 1.0 / 3.0, 1e-15);
}
