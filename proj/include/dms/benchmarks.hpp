#pragma once

#include "dms/conditional.hpp"
#include "dms/core.hpp"
#include "dms/linalg.hpp"
#include "dms/state_space.hpp"

#include <cstdint>

namespace dms {

template <typename Scalar>
struct FactorModelFit {
    Mat<Scalar> B;
    Vec<Scalar> x_mean;
    Vec<Scalar> y_mean;
    Mat<Scalar> residual_cov;
    bool ridge_used = false;
};

// Least squares y ~ B x on centered data; predictions use B x with no intercept.
template <typename Scalar>
FactorModelFit<Scalar> fit_factor_loadings(const Mat<Scalar>& xw, const Mat<Scalar>& yw) {
    require(xw.rows() == yw.rows(), "factor windows must share rows");
    require(xw.rows() >= 2, "factor window needs at least two rows");
    FactorModelFit<Scalar> fit;
    fit.x_mean = xw.colwise().mean().transpose();
    fit.y_mean = yw.colwise().mean().transpose();
    Mat<Scalar> xc = xw.rowwise() - fit.x_mean.transpose();
    Mat<Scalar> yc = yw.rowwise() - fit.y_mean.transpose();
    Eigen::ColPivHouseholderQR<Mat<Scalar>> qr(xc);
    Mat<Scalar> coef;
    if (qr.rank() == xc.cols()) {
        coef = qr.solve(yc);
    } else {
        fit.ridge_used = true;
        Mat<Scalar> gram = xc.transpose() * xc;
        const Scalar scale = std::max(gram.trace() / Scalar(gram.rows()), Scalar(1));
        gram.diagonal().array() += Scalar(1e-8) * scale;
        coef = gram.ldlt().solve(xc.transpose() * yc);
    }
    fit.B = coef.transpose();
    Mat<Scalar> resid = yc - xc * coef;
    fit.residual_cov = resid.transpose() * resid / Scalar(xw.rows());
    return fit;
}

template <typename Scalar>
struct FactorPrediction {
    Vec<Scalar> x;
    Vec<Scalar> y;
};

template <typename Scalar>
Vec<Scalar> apply_scenario(const Vec<Scalar>& x_t, const Scenario<Scalar>& scenario) {
    scenario.validate(x_t.size());
    Vec<Scalar> x = x_t;
    for (std::size_t k = 0; k < scenario.fixed_indices.size(); ++k)
        x(scenario.fixed_indices[k]) = scenario.values(static_cast<Index>(k));
    return x;
}

template <typename Scalar>
FactorPrediction<Scalar> ssa_predict(const Vec<Scalar>& x_t, const Scenario<Scalar>& scenario,
                                     const FactorModelFit<Scalar>& fit) {
    FactorPrediction<Scalar> out;
    out.x = apply_scenario(x_t, scenario);
    out.y = fit.B * out.x;
    return out;
}

template <typename Scalar>
struct PcaBasis {
    Vec<Scalar> mean;
    Mat<Scalar> W;
    Vec<Scalar> explained;
};

// Principal directions of the centered rows of data, top d kept.
template <typename Scalar>
PcaBasis<Scalar> fit_pca(const Mat<Scalar>& data, Index d) {
    require(d >= 1 && d <= data.cols(), "PCA dimension must lie in [1, p]");
    require(data.rows() >= 2, "PCA needs at least two rows");
    PcaBasis<Scalar> basis;
    basis.mean = data.colwise().mean().transpose();
    Mat<Scalar> centered = data.rowwise() - basis.mean.transpose();
    Mat<Scalar> cov = centered.transpose() * centered / Scalar(data.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrize(cov));
    Vec<Scalar> values = es.eigenvalues().reverse().cwiseMax(Scalar(0));
    Mat<Scalar> vectors = es.eigenvectors().rowwise().reverse();
    const Scalar total = values.sum();
    basis.explained = total > Scalar(0) ? Vec<Scalar>(values / total) : Vec<Scalar>(Vec<Scalar>::Zero(values.size()));
    basis.W = vectors.leftCols(d);
    for (Index c = 0; c < d; ++c) {
        Index arg = 0;
        basis.W.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis.W(arg, c) < Scalar(0)) basis.W.col(c) *= Scalar(-1);
    }
    return basis;
}

template <typename Scalar>
PcaBasis<Scalar> fit_difference_pca(const Mat<Scalar>& x_window, Index d) {
    require(x_window.rows() >= 3, "static PCA window needs at least three rows");
    Mat<Scalar> diffs = x_window.bottomRows(x_window.rows() - 1) - x_window.topRows(x_window.rows() - 1);
    return fit_pca(diffs, d);
}

// x_pca = x_t + W W^T (dx - mu) + mu, evaluated as the SSA vector plus the
// projection residual so that d = p reproduces the scenario values exactly.
template <typename Scalar>
FactorPrediction<Scalar> static_pca_predict(const PcaBasis<Scalar>& basis, const Vec<Scalar>& x_t,
                                            const Scenario<Scalar>& scenario, const FactorModelFit<Scalar>& fit) {
    const Index p = x_t.size();
    require(basis.W.rows() == p, "PCA basis dimension mismatch");
    Vec<Scalar> x_scn = apply_scenario(x_t, scenario);
    Vec<Scalar> centered = (x_scn - x_t) - basis.mean;
    Vec<Scalar> correction = Vec<Scalar>::Zero(p);
    if (basis.W.cols() < p) correction = basis.W * (basis.W.transpose() * centered) - centered;
    FactorPrediction<Scalar> out;
    out.x = x_scn + correction;
    out.y = fit.B * out.x;
    return out;
}

template <typename Scalar>
FactorPrediction<Scalar> static_pca_predict(const Mat<Scalar>& x_window, const Vec<Scalar>& x_t,
                                            const Scenario<Scalar>& scenario, const FactorModelFit<Scalar>& fit,
                                            Index d) {
    require(d <= x_t.size(), "PCA dimension exceeds factor count");
    return static_pca_predict(fit_difference_pca(x_window, d), x_t, scenario, fit);
}

template <typename Scalar>
struct DynamicPcaModel {
    PcaBasis<Scalar> basis;
    GaussianState<Scalar> prior;
    EmResult<Scalar> em;

    const StateSpaceModel<Scalar>& model() const { return em.model; }
};

// PCA on window levels, VAR(1) on the components, R by EM with Hx = Gamma.
template <typename Scalar>
DynamicPcaModel<Scalar> dynamic_pca_fit(const Mat<Scalar>& x_window, Index d, const EmConfig& em) {
    const Index T = x_window.rows();
    require(T > d + 1, "dynamic PCA window must exceed d + 1 rows");
    DynamicPcaModel<Scalar> out;
    out.basis = fit_pca(x_window, d);
    const Mat<Scalar>& G = out.basis.W;
    Mat<Scalar> xc = x_window.rowwise() - out.basis.mean.transpose();
    Mat<Scalar> z = xc * G;

    Mat<Scalar> lagged = z.topRows(T - 1);
    Mat<Scalar> lead = z.bottomRows(T - 1);
    Mat<Scalar> gram = lagged.transpose() * lagged;
    Eigen::LLT<Mat<Scalar>> llt(gram);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > Scalar(0)) ||
        llt.rcond() < Scalar(1e-12))
        throw DegenerateInput("degenerate VAR(1) fit: component second-moment matrix is singular");

    StateSpaceModel<Scalar> mdl;
    mdl.A = llt.solve(lagged.transpose() * lead).transpose();
    Mat<Scalar> resid = lead - lagged * mdl.A.transpose();
    mdl.Q = symmetrize(Mat<Scalar>(resid.transpose() * resid / Scalar(T - 1)));
    mdl.Hx = G;
    mdl.Hy.resize(0, d);
    Mat<Scalar> obs_resid = xc - z * G.transpose();
    Vec<Scalar> var = obs_resid.colwise().squaredNorm().transpose() / Scalar(T);
    const Scalar floor = Scalar(1e-8) * std::max(xc.colwise().squaredNorm().mean() / Scalar(T), Scalar(1e-300));
    mdl.Rx = var.cwiseMax(floor).asDiagonal();

    out.prior.mean = z.row(0).transpose();
    out.prior.cov = mdl.Q;
    out.em = fit_em(mdl, out.prior, xc, Mat<Scalar>(T, 0), em);
    return out;
}

template <typename Scalar>
StressPrediction<Scalar> dynamic_pca_predict(const DynamicPcaModel<Scalar>& dm, const Vec<Scalar>& z_t,
                                             const Scenario<Scalar>& scenario, const FactorModelFit<Scalar>& fit,
                                             Index K, std::uint64_t seed, const ConditioningOptions& opt = {}) {
    StressPrediction<Scalar> out;
    Scenario<Scalar> centered = center_scenario(scenario, dm.basis.mean);
    out.law = conditional_law(dm.model(), GaussianState<Scalar>{z_t, {}}, centered, opt);
    out.states = sample_conditional(out.law, K, seed);
    out.x_draws = out.states * dm.basis.W.transpose();
    out.x_draws.rowwise() += dm.basis.mean.transpose();
    out.y_draws = out.x_draws * fit.B.transpose();
    out.y_mean = out.y_draws.colwise().mean().transpose();
    return out;
}

}  // namespace dms
