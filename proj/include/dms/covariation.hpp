#pragma once

#include "dms/core.hpp"
#include "dms/linalg.hpp"

#include <vector>

namespace dms {

// Trailing-window sample covariance of first differences, one matrix per panel
// row. Row t uses the `window` differences ending at row max(t, window); rows
// before the first full window reuse the first estimate.
template <typename Derived>
std::vector<Mat<typename Derived::Scalar>> windowed_covariation(const Eigen::MatrixBase<Derived>& z, Index window) {
    using S = typename Derived::Scalar;
    require(window >= 2, "covariation window must be at least 2");
    const Index T = z.rows();
    require(T - 1 >= window, "fewer rows than window: need at least window + 1 rows for window differences");
    Mat<S> diffs = z.bottomRows(T - 1) - z.topRows(T - 1);

    std::vector<Mat<S>> out(static_cast<std::size_t>(T));
    // Difference j (0-based) is z_{j+1} - z_j, so row t's last difference is t - 1.
    for (Index t = window; t < T; ++t)
        out[static_cast<std::size_t>(t)] = sample_covariance(diffs.middleRows(t - window, window));
    for (Index t = 0; t < window; ++t) out[static_cast<std::size_t>(t)] = out[static_cast<std::size_t>(window)];
    return out;
}

}  // namespace dms
