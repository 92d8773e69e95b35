#pragma once

#include "dms/core.hpp"

#include <cmath>

namespace dms {

// Unit-norm probabilists' Hermite function under N(0,1):
// h_0 = 1, h_1 = x, h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1).
template <typename Scalar>
Scalar hermite(int k, Scalar x) {
    require(k >= 0, "hermite order must be nonnegative");
    if (k == 0) return Scalar(1);
    Scalar prev = Scalar(1);
    Scalar cur = x;
    for (int n = 1; n < k; ++n) {
        Scalar next = (x * cur - std::sqrt(Scalar(n)) * prev) / std::sqrt(Scalar(n + 1));
        prev = cur;
        cur = next;
    }
    return cur;
}

// h_k' = sqrt(k) h_{k-1}
template <typename Scalar>
Scalar hermite_derivative(int k, Scalar x) {
    if (k == 0) return Scalar(0);
    return std::sqrt(Scalar(k)) * hermite(k - 1, x);
}

struct HermiteIndex {
    int i = 0;
    int j = 0;

    int eigenvalue() const { return i + j; }
};

// h_{i,j}(w) = h_i(w_1) h_j(w_2) for each row of a T x 2 matrix.
template <typename Derived>
Vec<typename Derived::Scalar> hermite_eval(HermiteIndex idx, const Eigen::MatrixBase<Derived>& points) {
    using S = typename Derived::Scalar;
    require(points.cols() == 2, "hermite_eval expects T x 2 points");
    Vec<S> out(points.rows());
    for (Index t = 0; t < points.rows(); ++t)
        out(t) = hermite(idx.i, S(points(t, 0))) * hermite(idx.j, S(points(t, 1)));
    return out;
}

// Rows are the gradients of h_{i,j} at each point.
template <typename Derived>
Mat<typename Derived::Scalar> hermite_gradient(HermiteIndex idx, const Eigen::MatrixBase<Derived>& points) {
    using S = typename Derived::Scalar;
    require(points.cols() == 2, "hermite_gradient expects T x 2 points");
    Mat<S> out(points.rows(), 2);
    for (Index t = 0; t < points.rows(); ++t) {
        const S a = points(t, 0);
        const S b = points(t, 1);
        out(t, 0) = hermite_derivative(idx.i, a) * hermite(idx.j, b);
        out(t, 1) = hermite(idx.i, a) * hermite_derivative(idx.j, b);
    }
    return out;
}

}  // namespace dms
