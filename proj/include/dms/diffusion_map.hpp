#pragma once

#include "dms/core.hpp"
#include "dms/covariation.hpp"
#include "dms/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace dms {

enum class EpsilonRule { median, fixed, loglog_scan };
enum class EllRule { fixed, largest_gap };

struct EmbeddingConfig {
    EpsilonRule epsilon_rule = EpsilonRule::median;
    double epsilon = 0.0;
    EllRule ell_rule = EllRule::fixed;
    Index ell = 10;
    Index ell_max = 50;
    Index window = 50;
    // lambda = -log(kappa) / (rate_scale * epsilon)
    double rate_scale = 1.0;
};

template <typename Scalar>
struct DiffusionEmbedding {
    Vec<Scalar> kappa;
    Vec<Scalar> lambda;
    // Orthonormal columns in R^T; coordinates() rescales by sqrt(T).
    Mat<Scalar> psi;
    Vec<Scalar> spectrum;
    Vec<Scalar> mean_vector;
    Scalar epsilon = 0;
    Scalar rate_scale = 1;
    Index window = 0;

    Index size() const { return psi.rows(); }
    Index ell() const { return psi.cols(); }
    Scalar scale() const { return std::sqrt(Scalar(psi.rows())); }
    Mat<Scalar> coordinates() const { return psi * scale(); }
};

template <typename Scalar>
struct KernelMatrices {
    Mat<Scalar> W;
    Mat<Scalar> P;
    Vec<Scalar> degree;
};

namespace detail {

// Lower Cholesky factor of C, ridged by tau * tr(C) / p only when C is not
// comfortably positive definite.
template <typename Scalar>
Mat<Scalar> covariance_factor(const Mat<Scalar>& c, Index index) {
    const Index p = c.rows();
    Eigen::LLT<Mat<Scalar>> llt(c);
    if (llt.info() == Eigen::Success && llt.rcond() > Scalar(1e-12)) return llt.matrixL();
    const Scalar base = c.trace() / Scalar(p);
    if (!(base > Scalar(0))) throw SingularMatrix("covariation matrix is zero; cannot regularize", index);
    for (Scalar tau : {Scalar(1e-6), Scalar(1e-5), Scalar(1e-4), Scalar(1e-3)}) {
        Mat<Scalar> ridged = c;
        ridged.diagonal().array() += tau * base;
        llt.compute(ridged);
        if (llt.info() == Eigen::Success && llt.rcond() > Scalar(1e-12)) return llt.matrixL();
    }
    throw SingularMatrix("covariation matrix singular beyond regularization budget", index);
}

}  // namespace detail

// D_ij = 1/2 (z_i - z_j)^T (C_i^{-1} + C_j^{-1}) (z_i - z_j)
template <typename Derived>
Mat<typename Derived::Scalar> mahalanobis_distance_matrix(const Eigen::MatrixBase<Derived>& z,
                                                          const std::vector<Mat<typename Derived::Scalar>>& covs) {
    using S = typename Derived::Scalar;
    const Index T = z.rows();
    require(static_cast<Index>(covs.size()) == T, "one covariation matrix per row required");
    Mat<S> zt = z.transpose();
    Mat<S> q(T, T);
    Mat<S> factor;
    const Mat<S>* last = nullptr;
    for (Index i = 0; i < T; ++i) {
        const Mat<S>& c = covs[static_cast<std::size_t>(i)];
        require(c.rows() == z.cols() && c.cols() == z.cols(), "covariation dimension mismatch");
        if (last == nullptr || !(c.array() == last->array()).all()) factor = detail::covariance_factor(c, i);
        last = &c;
        Mat<S> delta = zt.colwise() - zt.col(i);
        factor.template triangularView<Eigen::Lower>().solveInPlace(delta);
        q.row(i) = delta.colwise().squaredNorm();
    }
    Mat<S> d = (q + q.transpose()) * S(0.5);
    d.diagonal().setZero();
    return d;
}

template <typename Scalar>
Scalar median_offdiagonal(const Mat<Scalar>& d) {
    const Index T = d.rows();
    require(T >= 2, "epsilon selection needs at least 2 points");
    std::vector<Scalar> v;
    v.reserve(static_cast<std::size_t>(T * (T - 1) / 2));
    for (Index j = 1; j < T; ++j)
        for (Index i = 0; i < j; ++i) v.push_back(d(i, j));
    const std::size_t n = v.size();
    const std::size_t mid = n / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    Scalar upper = v[mid];
    if (n % 2 == 1) return upper;
    Scalar lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return (lower + upper) / Scalar(2);
}

template <typename Scalar>
Scalar kernel_mass(const Mat<Scalar>& d, Scalar epsilon) {
    return (-d.array() / (Scalar(2) * epsilon)).exp().sum();
}

struct LogLogScan {
    std::vector<double> epsilons;
    std::vector<double> log_mass;
    std::vector<double> slope;
    std::size_t chosen = 0;
};

// Grid of epsilons spanning six decades around the median distance; the chosen
// point has the steepest log-log slope, where the curve is locally linear.
template <typename Scalar>
LogLogScan loglog_scan(const Mat<Scalar>& d, int points_per_decade = 10) {
    const Scalar med = median_offdiagonal(d);
    if (!(med > Scalar(0))) throw DegenerateInput("all distances are zero; cannot choose epsilon");
    LogLogScan scan;
    const int n = 6 * points_per_decade + 1;
    for (int k = 0; k < n; ++k) {
        double e = double(med) * std::pow(10.0, -3.0 + double(k) / points_per_decade);
        scan.epsilons.push_back(e);
        scan.log_mass.push_back(std::log(double(kernel_mass(d, Scalar(e)))));
    }
    const double h = std::log(10.0) / points_per_decade;
    scan.slope.assign(static_cast<std::size_t>(n), 0.0);
    for (int k = 1; k + 1 < n; ++k)
        scan.slope[static_cast<std::size_t>(k)] =
            (scan.log_mass[static_cast<std::size_t>(k + 1)] - scan.log_mass[static_cast<std::size_t>(k - 1)]) / (2 * h);
    scan.chosen = static_cast<std::size_t>(
        std::max_element(scan.slope.begin() + 1, scan.slope.end() - 1) - scan.slope.begin());
    return scan;
}

template <typename Scalar>
Scalar select_epsilon(const Mat<Scalar>& d, EpsilonRule rule, Scalar fixed_value = Scalar(0)) {
    switch (rule) {
        case EpsilonRule::fixed:
            require(fixed_value > Scalar(0), "fixed epsilon must be positive");
            return fixed_value;
        case EpsilonRule::median: {
            Scalar med = median_offdiagonal(d);
            if (!(med > Scalar(0))) throw DegenerateInput("all distances are zero; cannot choose epsilon");
            return med;
        }
        case EpsilonRule::loglog_scan: {
            LogLogScan scan = loglog_scan(d);
            return Scalar(scan.epsilons[scan.chosen]);
        }
    }
    throw InvalidArgument("unknown epsilon rule");
}

template <typename Scalar>
KernelMatrices<Scalar> kernel_and_stochastic_matrix(const Mat<Scalar>& d, Scalar epsilon) {
    require(epsilon > Scalar(0), "epsilon must be positive");
    KernelMatrices<Scalar> k;
    k.W = (-d.array() / (Scalar(2) * epsilon)).exp().matrix();
    k.degree = k.W.rowwise().sum();
    if (!(k.degree.array() > Scalar(0)).all()) throw NumericalError("kernel row with zero mass");
    k.P = k.degree.cwiseInverse().asDiagonal() * k.W;
    return k;
}

// 1-based index preceding the largest consecutive drop.
template <typename Derived>
Index select_ell(const Eigen::MatrixBase<Derived>& kappa) {
    require(kappa.size() >= 2, "select_ell needs at least two eigenvalues");
    Index best = 0;
    auto best_gap = kappa(0) - kappa(1);
    for (Index i = 1; i + 1 < kappa.size(); ++i) {
        auto gap = kappa(i) - kappa(i + 1);
        if (gap > best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    return best + 1;
}

// Eigenpairs of P through the symmetric matrix D^{-1/2} W D^{-1/2}, sorted by
// decreasing eigenvalue. Vectors are those of the symmetric matrix.
template <typename Scalar>
std::pair<Vec<Scalar>, Mat<Scalar>> symmetric_spectrum(const KernelMatrices<Scalar>& k) {
    Vec<Scalar> root = k.degree.cwiseSqrt().cwiseInverse();
    Mat<Scalar> s = root.asDiagonal() * k.W * root.asDiagonal();
    s = symmetrize(s);
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(s);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
    Vec<Scalar> values = es.eigenvalues().reverse();
    Mat<Scalar> vectors = es.eigenvectors().rowwise().reverse();
    return {values, vectors};
}

// Largest-magnitude entry of each column made positive.
template <typename Scalar>
void fix_signs(Mat<Scalar>& v) {
    for (Index c = 0; c < v.cols(); ++c) {
        Index arg = 0;
        v.col(c).cwiseAbs().maxCoeff(&arg);
        if (v(arg, c) < Scalar(0)) v.col(c) *= Scalar(-1);
    }
}

template <typename Derived>
DiffusionEmbedding<typename Derived::Scalar> embed(const Eigen::MatrixBase<Derived>& panel, const EmbeddingConfig& cfg,
                                                   KernelMatrices<typename Derived::Scalar>* kernel_out = nullptr) {
    using S = typename Derived::Scalar;
    const Index T = panel.rows();
    require(T >= 2, "embedding needs at least two rows");
    if (cfg.ell_rule == EllRule::fixed) {
        require(cfg.ell >= 1, "ell must be at least 1");
        require(T >= cfg.ell + 1, "embedding needs T >= ell + 1");
    }
    DiffusionEmbedding<S> emb;
    emb.mean_vector = panel.colwise().mean().transpose();
    Mat<S> z = panel.rowwise() - emb.mean_vector.transpose();
    if ((z.rowwise() - z.row(0)).cwiseAbs().maxCoeff() == S(0))
        throw DegenerateInput("degenerate geometry: all rows are identical");

    auto covs = windowed_covariation(z, cfg.window);
    Mat<S> d = mahalanobis_distance_matrix(z, covs);
    emb.epsilon = select_epsilon<S>(d, cfg.epsilon_rule, S(cfg.epsilon));
    emb.window = cfg.window;
    emb.rate_scale = S(cfg.rate_scale);

    KernelMatrices<S> k = kernel_and_stochastic_matrix(d, emb.epsilon);
    auto [values, vectors] = symmetric_spectrum(k);

    // Drop the top (constant) eigenvector; keep only the positive part.
    Index positive = 0;
    while (positive + 1 < T && values(positive + 1) > S(0)) ++positive;
    emb.spectrum = values.segment(1, T - 1);

    Index ell = cfg.ell;
    if (cfg.ell_rule == EllRule::largest_gap) {
        Index span = std::min<Index>(positive, std::max<Index>(cfg.ell_max, 2));
        require(span >= 2, "largest-gap rule needs at least two positive eigenvalues");
        ell = select_ell(values.segment(1, span));
    }
    if (ell > positive) throw InvalidArgument("requested ell exceeds available spectrum");

    emb.kappa = values.segment(1, ell).cwiseMin(S(1));
    emb.psi = vectors.middleCols(1, ell);
    fix_signs(emb.psi);
    emb.lambda = (-emb.kappa.array().log() / (emb.rate_scale * emb.epsilon)).matrix().cwiseMax(S(0));
    if (kernel_out) *kernel_out = std::move(k);
    return emb;
}

// H = (1/T) Z_c^T (sqrt(T) psi), Z_c the panel minus the embedding mean.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Mat<Scalar> lifting_operator(const Eigen::MatrixBase<Derived>& panel, const DiffusionEmbedding<Scalar>& emb) {
    require(panel.rows() == emb.size(), "panel and embedding must share T");
    require(panel.cols() == emb.mean_vector.size(), "panel width differs from embedding mean");
    Mat<Scalar> z = panel.rowwise() - emb.mean_vector.transpose();
    return z.transpose() * emb.coordinates() / Scalar(emb.size());
}

template <typename Scalar>
Mat<Scalar> lift(const Mat<Scalar>& h, const DiffusionEmbedding<Scalar>& emb) {
    Mat<Scalar> out = emb.coordinates() * h.transpose();
    return out.rowwise() + emb.mean_vector.transpose();
}

template <typename Scalar, typename Derived>
Vec<Scalar> graph_laplacian_apply(const Mat<Scalar>& p, const Eigen::MatrixBase<Derived>& f, Scalar epsilon) {
    require(p.rows() == f.size() && p.cols() == f.size(), "graph Laplacian shape mismatch");
    return (p * f - f) / epsilon;
}

}  // namespace dms
