#pragma once

#include "dms/core.hpp"
#include "dms/linalg.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace dms {

template <typename Scalar>
struct StateSpaceModel {
    Mat<Scalar> A;
    Mat<Scalar> Q;
    Mat<Scalar> Hx;
    Mat<Scalar> Hy;
    Mat<Scalar> Rx;
    Mat<Scalar> Ry;
    Mat<Scalar> Rxy;
    // Linear factor case: Hy == B * Hx is maintained by the M-step.
    bool linear_factor = false;
    Mat<Scalar> B;

    Index ell() const { return A.rows(); }
    Index m() const { return Hx.rows(); }
    Index n() const { return Hy.rows(); }
    bool has_response() const { return Hy.rows() > 0; }

    Mat<Scalar> Hz() const {
        Mat<Scalar> h(m() + n(), ell());
        h << Hx, Hy;
        return h;
    }

    Mat<Scalar> R() const {
        Mat<Scalar> r(m() + n(), m() + n());
        if (!has_response()) return Rx;
        r << Rx, Rxy, Rxy.transpose(), Ry;
        return r;
    }

    void set_R(const Mat<Scalar>& r) {
        Rx = r.topLeftCorner(m(), m());
        if (has_response()) {
            Ry = r.bottomRightCorner(n(), n());
            Rxy = r.topRightCorner(m(), n());
        }
    }

    void validate() const {
        const Index l = ell();
        require(A.cols() == l && Q.rows() == l && Q.cols() == l, "A and Q must be ell x ell");
        require(Hx.cols() == l, "Hx must have ell columns");
        require(Rx.rows() == m() && Rx.cols() == m(), "Rx must be m x m");
        if (has_response()) {
            require(Hy.cols() == l, "Hy must have ell columns");
            require(Ry.rows() == n() && Ry.cols() == n(), "Ry must be n x n");
            require(Rxy.rows() == m() && Rxy.cols() == n(), "Rxy must be m x n");
        }
        if (linear_factor) require(B.rows() == n() && B.cols() == m(), "B must be n x m");
    }
};

template <typename Scalar>
struct GaussianState {
    Vec<Scalar> mean;
    Mat<Scalar> cov;
};

struct FilterOptions {
    bool joseph_form = false;
};

template <typename Scalar>
struct FilterRun {
    Mat<Scalar> predicted_means;
    Mat<Scalar> filtered_means;
    Mat<Scalar> smoothed_means;
    std::vector<Mat<Scalar>> predicted_covs;
    std::vector<Mat<Scalar>> filtered_covs;
    std::vector<Mat<Scalar>> smoothed_covs;
    Vec<Scalar> loglik_terms;
    Scalar loglik = 0;

    Index size() const { return filtered_means.rows(); }
    bool smoothed() const { return smoothed_means.rows() == filtered_means.rows() && size() > 0; }
};

namespace detail {

template <typename Scalar>
Mat<Scalar> stack_observations(const Mat<Scalar>& x, const Mat<Scalar>& y) {
    if (y.cols() == 0) return x;
    Mat<Scalar> z(x.rows(), x.cols() + y.cols());
    z << x, y;
    return z;
}

}  // namespace detail

// Prior is the law of the state one step before the first observation.
template <typename Scalar>
FilterRun<Scalar> kalman_filter(const StateSpaceModel<Scalar>& model, const Mat<Scalar>& x, const Mat<Scalar>& y,
                                const GaussianState<Scalar>& prior, const FilterOptions& options = {}) {
    model.validate();
    const Index T = x.rows();
    const Index l = model.ell();
    require(x.cols() == model.m(), "x width must equal m");
    require(y.cols() == model.n(), "y width must equal n (0 when the response channel is absent)");
    require(y.cols() == 0 || y.rows() == T, "x and y must share T");
    require(prior.mean.size() == l && prior.cov.rows() == l, "prior dimension mismatch");

    const Mat<Scalar> z = detail::stack_observations(x, y);
    const Mat<Scalar> H = model.Hz();
    const Mat<Scalar> R = model.R();
    const Mat<Scalar> I = Mat<Scalar>::Identity(l, l);
    const Scalar log2pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    const Index dim = z.cols();

    FilterRun<Scalar> run;
    run.predicted_means.resize(T, l);
    run.filtered_means.resize(T, l);
    run.predicted_covs.resize(static_cast<std::size_t>(T));
    run.filtered_covs.resize(static_cast<std::size_t>(T));
    run.loglik_terms.resize(T);

    Vec<Scalar> m = prior.mean;
    Mat<Scalar> P = prior.cov;
    for (Index t = 0; t < T; ++t) {
        Vec<Scalar> m_pred = model.A * m;
        Mat<Scalar> P_pred = symmetrize(model.A * P * model.A.transpose() + model.Q);

        Vec<Scalar> e = z.row(t).transpose() - H * m_pred;
        if (!e.allFinite()) throw SingularMatrix("non-finite innovation", t);
        Mat<Scalar> S = symmetrize(H * P_pred * H.transpose() + R);
        auto chol = jittered_cholesky(S, "innovation covariance", t);

        // K = P H^T S^{-1}
        Mat<Scalar> K = chol.llt.solve(H * P_pred).transpose();
        m = m_pred + K * e;
        Mat<Scalar> IKH = I - K * H;
        if (options.joseph_form)
            P = IKH * P_pred * IKH.transpose() + K * R * K.transpose();
        else
            P = IKH * P_pred;
        P = symmetrize(P);

        Vec<Scalar> se = chol.llt.solve(e);
        run.loglik_terms(t) = Scalar(-0.5) * (chol.log_det() + e.dot(se) + Scalar(dim) * log2pi);
        run.predicted_means.row(t) = m_pred.transpose();
        run.filtered_means.row(t) = m.transpose();
        run.predicted_covs[static_cast<std::size_t>(t)] = P_pred;
        run.filtered_covs[static_cast<std::size_t>(t)] = P;
    }
    run.loglik = run.loglik_terms.sum();
    return run;
}

template <typename Scalar>
void rts_smoother(const StateSpaceModel<Scalar>& model, FilterRun<Scalar>& run) {
    const Index T = run.size();
    run.smoothed_means = run.filtered_means;
    run.smoothed_covs = run.filtered_covs;
    for (Index t = T - 2; t >= 0; --t) {
        const auto u = static_cast<std::size_t>(t);
        const Mat<Scalar>& P_pred_next = run.predicted_covs[u + 1];
        auto chol = jittered_cholesky(P_pred_next, "predicted state covariance", t + 1);
        // J = P_{t|t} A^T P_{t+1|t}^{-1}
        Mat<Scalar> J = chol.llt.solve(model.A * run.filtered_covs[u]).transpose();
        Vec<Scalar> diff = (run.smoothed_means.row(t + 1) - run.predicted_means.row(t + 1)).transpose();
        run.smoothed_means.row(t) = run.filtered_means.row(t) + (J * diff).transpose();
        run.smoothed_covs[u] =
            symmetrize(run.filtered_covs[u] + J * (run.smoothed_covs[u + 1] - P_pred_next) * J.transpose());
    }
}

enum class MStepRule {
    // Expected complete-data update: residual covariance plus H P_{t|T} H^T, and
    // the loading update conditioned on the current cross-covariance.
    expected,
    // Residual-only covariance and unweighted least-squares loadings.
    plug_in
};

struct EmConfig {
    double tolerance = 1e-6;
    int max_iters = 100;
    double jitter = 0.0;
    MStepRule rule = MStepRule::expected;
    FilterOptions filter;
};

template <typename Scalar>
StateSpaceModel<Scalar> m_step(const StateSpaceModel<Scalar>& model, const Mat<Scalar>& x, const Mat<Scalar>& y,
                               const FilterRun<Scalar>& run, const EmConfig& cfg = {}) {
    require(run.smoothed(), "m_step needs smoothed means");
    const Index T = x.rows();
    const Mat<Scalar>& psi = run.smoothed_means;
    const bool expected = cfg.rule == MStepRule::expected;

    Mat<Scalar> sum_P = Mat<Scalar>::Zero(model.ell(), model.ell());
    if (expected)
        for (const auto& P : run.smoothed_covs) sum_P += P;

    StateSpaceModel<Scalar> next = model;
    if (model.linear_factor && model.has_response()) {
        Mat<Scalar> u = psi * model.Hx.transpose();
        if (expected) {
            // With G = Rxy^T Rx^+, the response residual given the covariate
            // residual is y - G x - (B - G) Hx psi; regress on Hx psi.
            Mat<Scalar> G = model.Rxy.transpose() * pseudo_inverse(model.Rx);
            Mat<Scalar> y_tilde = y - x * G.transpose();
            Mat<Scalar> suu = model.Hx * (psi.transpose() * psi + sum_P) * model.Hx.transpose();
            next.B = G + y_tilde.transpose() * u * pseudo_inverse(symmetrize(suu));
        } else {
            next.B = y.transpose() * u * pseudo_inverse(symmetrize(Mat<Scalar>(u.transpose() * u)));
        }
        next.Hy = next.B * model.Hx;
    }

    const Mat<Scalar> H = next.Hz();
    Mat<Scalar> resid = detail::stack_observations(x, y) - psi * H.transpose();
    Mat<Scalar> R = resid.transpose() * resid;
    if (expected) R += H * sum_P * H.transpose();
    R /= Scalar(T);
    R = symmetrize(R);
    if (cfg.jitter > 0) R.diagonal().array() += Scalar(cfg.jitter);
    next.set_R(R);
    return next;
}

template <typename Scalar>
struct EmResult {
    StateSpaceModel<Scalar> model;
    FilterRun<Scalar> run;
    std::vector<Scalar> trace;
    int iterations = 0;
    bool converged = false;
};

// trace[k] is the log-likelihood of the model after k M-steps; the returned run
// belongs to the returned model.
template <typename Scalar>
EmResult<Scalar> fit_em(const StateSpaceModel<Scalar>& initial, const GaussianState<Scalar>& prior,
                        const Mat<Scalar>& x, const Mat<Scalar>& y, const EmConfig& cfg) {
    require(cfg.tolerance > 0, "EM tolerance must be positive");
    require(cfg.max_iters >= 0, "EM max_iters must be nonnegative");
    require(x.rows() >= initial.ell(), "EM needs T >= ell");
    EmResult<Scalar> res;
    res.model = initial;
    for (int k = 0;; ++k) {
        try {
            res.run = kalman_filter(res.model, x, y, prior, cfg.filter);
            rts_smoother(res.model, res.run);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " during EM iteration " + std::to_string(k));
        }
        res.trace.push_back(res.run.loglik);
        res.iterations = k;
        if (k > 0) {
            const Scalar prev = res.trace[res.trace.size() - 2];
            const Scalar rel = std::abs(res.run.loglik - prev) / std::max(std::abs(prev), Scalar(1e-300));
            if (rel < Scalar(cfg.tolerance)) {
                res.converged = true;
                break;
            }
        }
        if (k == cfg.max_iters) break;
        res.model = m_step(res.model, x, y, res.run, cfg);
    }
    return res;
}

}  // namespace dms
