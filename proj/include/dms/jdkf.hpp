#pragma once

#include "dms/conditional.hpp"
#include "dms/core.hpp"
#include "dms/diffusion_map.hpp"
#include "dms/linalg.hpp"
#include "dms/state_space.hpp"

#include <cmath>

namespace dms {

enum class TransitionScheme { one_minus_lambda, matrix_exponential };

inline constexpr double kTransitionCeiling = 1.0 - 1e-6;

template <typename Derived>
Mat<typename Derived::Scalar> build_transition(const Eigen::MatrixBase<Derived>& lambda, TransitionScheme scheme) {
    using S = typename Derived::Scalar;
    require(lambda.allFinite(), "mapped rates must be finite");
    Vec<S> diag = scheme == TransitionScheme::one_minus_lambda ? Vec<S>((S(1) - lambda.array()).matrix())
                                                               : Vec<S>((-lambda.array()).exp().matrix());
    diag = diag.cwiseMax(S(0)).cwiseMin(S(kTransitionCeiling));
    return diag.asDiagonal();
}

template <typename Scalar>
struct JdkfInit {
    StateSpaceModel<Scalar> model;
    GaussianState<Scalar> prior;
};

// xc, yc are centered; yc may have zero columns.
template <typename Scalar>
JdkfInit<Scalar> initialize_jdkf(const Mat<Scalar>& coords, const Vec<Scalar>& lambda, const Mat<Scalar>& xc,
                                 const Mat<Scalar>& yc, bool linear_factor, TransitionScheme scheme) {
    const Index T = coords.rows();
    require(xc.rows() == T && (yc.cols() == 0 || yc.rows() == T), "panel rows must match the embedding");
    JdkfInit<Scalar> init;
    auto& mdl = init.model;
    mdl.A = build_transition(lambda, scheme);
    mdl.Q = sample_covariance(coords);
    mdl.Hx = xc.transpose() * coords / Scalar(T);

    auto diag_residual_variance = [&](const Mat<Scalar>& data, const Mat<Scalar>& h) {
        Mat<Scalar> resid = data - coords * h.transpose();
        Mat<Scalar> r = Mat<Scalar>::Zero(data.cols(), data.cols());
        r.diagonal() = resid.colwise().squaredNorm().transpose() / Scalar(T);
        return r;
    };
    mdl.Rx = diag_residual_variance(xc, mdl.Hx);

    if (yc.cols() > 0) {
        mdl.linear_factor = linear_factor;
        if (linear_factor) {
            Mat<Scalar> u = coords * mdl.Hx.transpose();
            mdl.B = yc.transpose() * u * pseudo_inverse(Mat<Scalar>(u.transpose() * u));
            mdl.Hy = mdl.B * mdl.Hx;
        } else {
            mdl.Hy = yc.transpose() * coords / Scalar(T);
        }
        mdl.Ry = diag_residual_variance(yc, mdl.Hy);
        mdl.Rxy = Mat<Scalar>::Zero(xc.cols(), yc.cols());
    } else {
        mdl.Hy.resize(0, coords.cols());
    }
    init.prior.mean = coords.row(0).transpose();
    init.prior.cov = mdl.Q;
    return init;
}

struct JdkfConfig {
    EmbeddingConfig embedding;
    EmConfig em;
    TransitionScheme scheme = TransitionScheme::one_minus_lambda;
    bool linear_factor = true;
    // Embed the stacked (x, y) panel instead of x alone.
    bool embed_response = false;
};

template <typename Scalar>
struct JdkfFit {
    DiffusionEmbedding<Scalar> embedding;
    Vec<Scalar> x_mean;
    Vec<Scalar> y_mean;
    GaussianState<Scalar> prior;
    EmResult<Scalar> em;

    const StateSpaceModel<Scalar>& model() const { return em.model; }
    const FilterRun<Scalar>& run() const { return em.run; }
};

template <typename Scalar>
JdkfFit<Scalar> fit_jdkf(const Mat<Scalar>& x, const Mat<Scalar>& y, const JdkfConfig& cfg) {
    JdkfFit<Scalar> fit;
    fit.x_mean = x.colwise().mean().transpose();
    Mat<Scalar> xc = x.rowwise() - fit.x_mean.transpose();
    Mat<Scalar> yc = y;
    if (y.cols() > 0) {
        require(y.rows() == x.rows(), "x and y must share T");
        fit.y_mean = y.colwise().mean().transpose();
        yc = y.rowwise() - fit.y_mean.transpose();
    } else {
        fit.y_mean.resize(0);
    }
    if (cfg.embed_response && y.cols() > 0) {
        Mat<Scalar> z(x.rows(), x.cols() + y.cols());
        z << x, y;
        fit.embedding = embed(z, cfg.embedding);
    } else {
        fit.embedding = embed(x, cfg.embedding);
    }
    Mat<Scalar> coords = fit.embedding.coordinates();
    JdkfInit<Scalar> init = initialize_jdkf(coords, fit.embedding.lambda, xc, yc, cfg.linear_factor, cfg.scheme);
    fit.prior = init.prior;
    fit.em = fit_em(init.model, init.prior, xc, yc, cfg.em);
    return fit;
}

// One-step stressed prediction from the filtered state psi_t; scenario values
// are in raw units and draws are mapped back through the lifting rows.
template <typename Scalar>
StressPrediction<Scalar> jdkf_predict(const StateSpaceModel<Scalar>& model, const Vec<Scalar>& x_mean,
                                      const Vec<Scalar>& y_mean, const GaussianState<Scalar>& state,
                                      const Scenario<Scalar>& scenario, Index K, std::uint64_t seed,
                                      const ConditioningOptions& opt = {}) {
    StressPrediction<Scalar> out;
    out.law = conditional_law(model, state, center_scenario(scenario, x_mean, y_mean), opt);
    out.states = sample_conditional(out.law, K, seed);
    out.x_draws = out.states * model.Hx.transpose();
    out.x_draws.rowwise() += x_mean.transpose();
    if (model.has_response()) {
        out.y_draws = out.states * model.Hy.transpose();
        out.y_draws.rowwise() += y_mean.transpose();
        out.y_mean = out.y_draws.colwise().mean().transpose();
    }
    return out;
}

}  // namespace dms
