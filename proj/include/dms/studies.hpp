#pragma once

#include "dms/config.hpp"
#include "dms/hermite.hpp"
#include "dms/langevin.hpp"

#include <cstdint>
#include <vector>

namespace dms {

// Example 1: 2-d OU latent state, X = |theta|^2, Y = theta^1.
struct Example1Config {
    Index samples = 500;
    double dt = 0.01;
    Index thin = 5;
    Index burn_in = 1000;
    std::uint64_t seed = 0;
    EmbeddingConfig embedding{EpsilonRule::median, 0.0, EllRule::fixed, 10, 50, 50, 1.0};
};

struct Example1Result {
    LatentPath<double> path;
    Matrix panel;
    Matrix reconstruction;
    DiffusionEmbedding<double> embedding;
    Matrix lifting;
    double r2_x = 0;
    double r2_y = 0;
};

Example1Result run_example1(const Example1Config& cfg);
Matrix example1_panel(const Matrix& states);
double r_squared(const Vector& truth, const Vector& fitted);

enum class CovariationMode { windowed, exact };

struct LaplacianStudyConfig {
    std::vector<Index> sizes{500, 2000};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    double dt = 0.01;
    // Sample spacing in latent time.
    double spacing = 0.2;
    // Kernel bandwidth in latent units: W = exp(-|dtheta|^2 / (2 epsilon)).
    double epsilon = 0.2;
    Index window = 50;
    CovariationMode mode = CovariationMode::windowed;
    std::vector<HermiteIndex> functions{{1, 0}, {0, 1}, {1, 1}};
    int threads = 1;
};

struct SizeStatistics {
    Index size = 0;
    // errors[seed][function]
    std::vector<std::vector<double>> errors;
    std::vector<double> median;
    std::vector<double> mean;
    std::vector<double> max;
    std::vector<double> std;
};

struct ConvergenceStudy {
    std::vector<std::uint64_t> seeds;
    std::vector<SizeStatistics> sizes;
    // Median error of the first function strictly decreases across sizes.
    bool decreasing = true;
};

// Relative L2 error of (P f - f) / epsilon against -lambda f for Hermite f;
// for the constant function the plain RMS of the generator is reported.
ConvergenceStudy laplacian_convergence_study(const LaplacianStudyConfig& cfg);
Json to_json(const LaplacianStudyConfig& cfg, const ConvergenceStudy& study);

struct CltStudyConfig {
    std::vector<Index> sizes{1000, 4000, 16000};
    Index seeds = 200;
    std::uint64_t master_seed = 7;
    double dt = 0.01;
    double spacing = 0.1;
    HermiteIndex function{2, 0};
    // Use the stationary variance of the Euler chain rather than 1.
    bool discretization_corrected = true;
    int threads = 1;
};

struct CltSizeStatistics {
    Index size = 0;
    std::vector<double> statistic;
    double mean = 0;
    double variance = 0;
    double skewness = 0;
};

struct CltStudy {
    double analytic = 0;
    double analytic_continuous = 0;
    std::vector<CltSizeStatistics> sizes;
    std::vector<double> variance_ratios;
    bool variance_stable = true;
    bool skewness_ok = true;
};

// <|theta|^2, h_{i,j}> under N(0, v I): sqrt(2)(2v^2 - v) for (2,0)/(0,2), v for (0,0), else 0 up to order 2.
double sum_of_squares_coefficient(HermiteIndex idx, double v = 1.0);
CltStudy lifting_clt_study(const CltStudyConfig& cfg);
Json to_json(const CltStudyConfig& cfg, const CltStudy& study);

// Realized covariation sum_t dphi_i dphi_j normalized by the diagonal.
Matrix eigen_decorrelation_study(const Matrix& states, const std::vector<HermiteIndex>& functions);

struct LinearSdeStudyConfig {
    Index paths = 20000;
    double dt = 0.01;
    double horizon = 5.0;
    Index record_every = 10;
    std::uint64_t seed = 11;
    std::vector<HermiteIndex> functions{{1, 0}, {2, 0}};
    double slack = 0.2;
    int threads = 1;
};

struct LinearSdeCurve {
    HermiteIndex function;
    double lambda = 0;
    double gamma = 0;
    double gradient_variance = 0;
    std::vector<double> times;
    std::vector<double> empirical;
    // exp(-2 lambda t) (e0 + 2 t V), alpha = 0 from equilibrium.
    std::vector<double> printed_bound;
    // e0 exp(-2 lambda t) + V (1 - exp(-2 lambda t)) / lambda.
    std::vector<double> exact;
    double max_error = 0;
    double worst_printed_ratio = 0;
    double worst_exact_ratio = 0;
};

struct LinearSdeStudy {
    std::vector<LinearSdeCurve> curves;
};

// E ||grad h_{i,j}|| under N(0, I), by Gauss-Hermite quadrature.
double hermite_gradient_norm_mean(HermiteIndex idx);
LinearSdeStudy linear_sde_approx_study(const LinearSdeStudyConfig& cfg);
Json to_json(const LinearSdeStudyConfig& cfg, const LinearSdeStudy& study);

}  // namespace dms
