#pragma once

#include "dms/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dms {

template <typename Derived>
Mat<typename Derived::Scalar> symmetrize(const Eigen::MatrixBase<Derived>& m) {
    using S = typename Derived::Scalar;
    return (m + m.transpose()) * S(0.5);
}

// Cholesky factor with an escalating diagonal jitter. Jitter is relative to the
// mean diagonal magnitude; rung 0 is exact.
template <typename Scalar>
struct JitteredCholesky {
    Eigen::LLT<Mat<Scalar>> llt;
    Scalar jitter = 0;

    Scalar log_det() const {
        return Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
    }
};

template <typename Derived>
bool try_cholesky(const Eigen::MatrixBase<Derived>& a, JitteredCholesky<typename Derived::Scalar>& out,
                  typename Derived::Scalar max_jitter = typename Derived::Scalar(1e-6)) {
    using S = typename Derived::Scalar;
    const Index n = a.rows();
    if (n == 0) {
        out.llt.compute(Mat<S>(0, 0));
        out.jitter = 0;
        return true;
    }
    const S scale = std::max(S(1), a.diagonal().cwiseAbs().mean());
    static constexpr std::array<double, 6> ladder{0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
    for (double rung : ladder) {
        if (S(rung) > max_jitter) break;
        Mat<S> shifted = a;
        shifted.diagonal().array() += S(rung) * scale;
        out.llt.compute(shifted);
        if (out.llt.info() == Eigen::Success && out.llt.matrixLLT().diagonal().minCoeff() > S(0)) {
            out.jitter = S(rung) * scale;
            return true;
        }
    }
    return false;
}

template <typename Derived>
JitteredCholesky<typename Derived::Scalar> jittered_cholesky(const Eigen::MatrixBase<Derived>& a,
                                                             const std::string& what, Index index) {
    JitteredCholesky<typename Derived::Scalar> out;
    if (!try_cholesky(a, out)) throw SingularMatrix(what + " is not positive definite after jitter", index);
    return out;
}

// Moore-Penrose pseudoinverse; singular values below rtol * sigma_max are dropped.
template <typename Derived>
Mat<typename Derived::Scalar> pseudo_inverse(const Eigen::MatrixBase<Derived>& a,
                                             typename Derived::Scalar rtol = typename Derived::Scalar(1e-10)) {
    using S = typename Derived::Scalar;
    if (a.size() == 0) return Mat<S>::Zero(a.cols(), a.rows());
    Eigen::JacobiSVD<Mat<S>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const S cutoff = rtol * (sv.size() > 0 ? sv(0) : S(0));
    Vec<S> inv = Vec<S>::Zero(sv.size());
    for (Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff && sv(i) > S(0)) inv(i) = S(1) / sv(i);
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Clamps negative eigenvalues of the symmetric part to zero.
template <typename Derived>
Mat<typename Derived::Scalar> psd_project(const Eigen::MatrixBase<Derived>& a) {
    using S = typename Derived::Scalar;
    Mat<S> sym = symmetrize(a);
    if (sym.size() == 0) return sym;
    Eigen::SelfAdjointEigenSolver<Mat<S>> es(sym);
    if (es.eigenvalues().minCoeff() >= S(0)) return sym;
    Vec<S> clamped = es.eigenvalues().cwiseMax(S(0));
    Mat<S> out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
    return symmetrize(out);
}

// Column means and unbiased covariance of the rows of x.
template <typename Derived>
Mat<typename Derived::Scalar> sample_covariance(const Eigen::MatrixBase<Derived>& x) {
    using S = typename Derived::Scalar;
    const Index n = x.rows();
    if (n < 2) return Mat<S>::Zero(x.cols(), x.cols());
    Mat<S> centered = x.rowwise() - x.colwise().mean();
    Mat<S> cov = centered.transpose() * centered / S(n - 1);
    return symmetrize(cov);
}

template <typename Derived>
Mat<typename Derived::Scalar> spd_inverse(const Eigen::MatrixBase<Derived>& a, const std::string& what,
                                          Index index = 0) {
    using S = typename Derived::Scalar;
    auto chol = jittered_cholesky(a, what, index);
    return chol.llt.solve(Mat<S>::Identity(a.rows(), a.rows()));
}

}  // namespace dms
