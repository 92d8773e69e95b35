#pragma once

// Test-side reference computations. They share no code with the library beyond
// the model structs, and favour brute force over speed.

#include "dms/random.hpp"
#include "dms/state_space.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

using dms::Index;
using dms::Matrix;
using dms::Vector;

inline Matrix random_spd(dms::NormalStream& rng, Index n, double floor = 0.3) {
    Matrix g = rng.matrix<double>(n, n);
    return g * g.transpose() / double(n) + floor * Matrix::Identity(n, n);
}

struct RandomSystem {
    dms::StateSpaceModel<double> model;
    dms::GaussianState<double> prior;
    Matrix x;
    Matrix y;
};

// Random stable system with correlated observation noise, observations drawn from it.
inline RandomSystem random_system(std::uint64_t seed, Index l, Index m, Index n, Index T) {
    dms::NormalStream rng(seed);
    RandomSystem s;
    auto& md = s.model;
    md.A = 0.6 * rng.matrix<double>(l, l) / std::sqrt(double(l));
    md.Q = random_spd(rng, l);
    md.Hx = rng.matrix<double>(m, l);
    md.Hy = rng.matrix<double>(n, l);
    Matrix R = random_spd(rng, m + n);
    md.Rx = R.topLeftCorner(m, m);
    md.Ry = R.bottomRightCorner(n, n);
    md.Rxy = R.topRightCorner(m, n);
    s.prior.mean = rng.vector<double>(l);
    s.prior.cov = random_spd(rng, l);
    s.x = rng.matrix<double>(T, m);
    s.y = rng.matrix<double>(T, n);
    return s;
}

struct DenseSmoothing {
    std::vector<Vector> filtered_mean;
    std::vector<Matrix> filtered_cov;
    std::vector<Vector> smoothed_mean;
    std::vector<Matrix> smoothed_cov;
    double loglik = 0;
};

// Writes (psi_1..psi_T, z_1..z_T) as a linear map of the independent Gaussians
// (psi_0, w_1..w_T, v_1..v_T), then conditions the joint law directly.
inline DenseSmoothing dense_smoothing(const dms::StateSpaceModel<double>& md, const dms::GaussianState<double>& prior,
                                      const Matrix& x, const Matrix& y) {
    const Index T = x.rows(), l = md.ell(), d = md.m() + md.n();
    const Matrix H = md.Hz();
    const Matrix R = md.R();
    const Index nin = l + T * l + T * d;
    Matrix Lpsi = Matrix::Zero(T * l, nin);
    Vector mpsi = Vector::Zero(T * l);
    Matrix prev = Matrix::Zero(l, nin);
    prev.block(0, 0, l, l).setIdentity();
    Vector prev_mean = prior.mean;
    for (Index t = 0; t < T; ++t) {
        Matrix cur = md.A * prev;
        cur.block(0, l + t * l, l, l) += Matrix::Identity(l, l);
        Lpsi.middleRows(t * l, l) = cur;
        prev_mean = md.A * prev_mean;
        mpsi.segment(t * l, l) = prev_mean;
        prev = cur;
    }
    Matrix Lz = Matrix::Zero(T * d, nin);
    Vector mz(T * d);
    for (Index t = 0; t < T; ++t) {
        Lz.middleRows(t * d, d) = H * Lpsi.middleRows(t * l, l);
        Lz.block(t * d, l + T * l + t * d, d, d) += Matrix::Identity(d, d);
        mz.segment(t * d, d) = H * mpsi.segment(t * l, l);
    }
    Matrix Sin = Matrix::Zero(nin, nin);
    Sin.topLeftCorner(l, l) = prior.cov;
    for (Index t = 0; t < T; ++t) {
        Sin.block(l + t * l, l + t * l, l, l) = md.Q;
        Sin.block(l + T * l + t * d, l + T * l + t * d, d, d) = R;
    }
    const Matrix Spp = Lpsi * Sin * Lpsi.transpose();
    const Matrix Spz = Lpsi * Sin * Lz.transpose();
    const Matrix Szz = Lz * Sin * Lz.transpose();
    Vector zobs(T * d);
    for (Index t = 0; t < T; ++t) {
        zobs.segment(t * d, md.m()) = x.row(t).transpose();
        if (md.n() > 0) zobs.segment(t * d + md.m(), md.n()) = y.row(t).transpose();
    }

    DenseSmoothing out;
    auto condition = [&](Index upto, Index t, Vector& mean, Matrix& cov) {
        const Index k = upto * d;
        Matrix s11 = Szz.topLeftCorner(k, k);
        Matrix s21 = Spz.block(t * l, 0, l, k);
        Eigen::FullPivLU<Matrix> lu(s11);
        mean = mpsi.segment(t * l, l) + s21 * lu.solve(Vector(zobs.head(k) - mz.head(k)));
        cov = Spp.block(t * l, t * l, l, l) - s21 * lu.solve(Matrix(s21.transpose()));
    };
    for (Index t = 0; t < T; ++t) {
        Vector m;
        Matrix c;
        condition(t + 1, t, m, c);
        out.filtered_mean.push_back(m);
        out.filtered_cov.push_back(c);
        condition(T, t, m, c);
        out.smoothed_mean.push_back(m);
        out.smoothed_cov.push_back(c);
    }
    Eigen::LDLT<Matrix> ldlt(Szz);
    Vector r = zobs - mz;
    double logdet = ldlt.vectorD().array().log().sum();
    out.loglik = -0.5 * (logdet + r.dot(ldlt.solve(r)) + double(T * d) * std::log(2 * std::numbers::pi));
    return out;
}

// Conditional law of the free block through the precision matrix:
// mean_2 - K22^{-1} K21 (a - mean_1), cov K22^{-1}.
inline void precision_condition(const Vector& mean, const Matrix& cov, const std::vector<Index>& fixed,
                                const Vector& values, Vector& out_mean, Matrix& out_cov) {
    const Index n = mean.size();
    std::vector<Index> free;
    for (Index i = 0; i < n; ++i)
        if (std::find(fixed.begin(), fixed.end(), i) == fixed.end()) free.push_back(i);
    const Matrix K = cov.inverse();
    const Index nf = static_cast<Index>(free.size()), nx = static_cast<Index>(fixed.size());
    Matrix K22(nf, nf), K21(nf, nx);
    for (Index i = 0; i < nf; ++i) {
        for (Index j = 0; j < nf; ++j) K22(i, j) = K(free[i], free[j]);
        for (Index j = 0; j < nx; ++j) K21(i, j) = K(free[i], fixed[j]);
    }
    Vector a(nx);
    for (Index j = 0; j < nx; ++j) a(j) = values(j) - mean(fixed[j]);
    out_cov = K22.inverse();
    out_mean = -out_cov * K21 * a;
    for (Index i = 0; i < nf; ++i) out_mean(i) += mean(free[i]);
}

// Exact binomial two-sided p-value with probabilities built by the recurrence
// P(k+1) = P(k) (n-k)/(k+1) p/(1-p) in long double.
inline double binomial_two_sided(Index n, Index k, double p) {
    std::vector<long double> pmf(static_cast<std::size_t>(n + 1));
    pmf[0] = std::pow(1.0L - p, static_cast<long double>(n));
    for (Index i = 0; i < n; ++i)
        pmf[static_cast<std::size_t>(i + 1)] =
            pmf[static_cast<std::size_t>(i)] * (long double)(n - i) / (long double)(i + 1) * p / (1.0L - p);
    const long double obs = pmf[static_cast<std::size_t>(k)];
    long double total = 0;
    for (long double v : pmf)
        if (v <= obs * (1 + 1e-7L)) total += v;
    return static_cast<double>(std::min<long double>(total, 1.0L));
}

}  // namespace oracle
