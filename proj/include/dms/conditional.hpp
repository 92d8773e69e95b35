#pragma once

#include "dms/core.hpp"
#include "dms/linalg.hpp"
#include "dms/random.hpp"
#include "dms/state_space.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace dms {

class EmptyFreeSet : public InvalidArgument {
public:
    EmptyFreeSet() : InvalidArgument("scenario fixes every coordinate; nothing left to sample") {}
};

template <typename Scalar>
struct Scenario {
    std::vector<Index> fixed_indices;
    Vec<Scalar> values;
    Index horizon = 1;

    void validate(Index dim) const {
        require(static_cast<Index>(fixed_indices.size()) == values.size(), "scenario indices and values differ in length");
        require(horizon >= 1, "scenario horizon must be at least 1");
        for (std::size_t k = 0; k < fixed_indices.size(); ++k) {
            require(fixed_indices[k] >= 0 && fixed_indices[k] < dim, "scenario index out of range");
            if (k > 0) require(fixed_indices[k] > fixed_indices[k - 1], "scenario indices must be sorted and unique");
        }
    }

    std::vector<Index> free_indices(Index dim) const {
        std::vector<Index> free;
        std::size_t k = 0;
        for (Index i = 0; i < dim; ++i) {
            if (k < fixed_indices.size() && fixed_indices[k] == i)
                ++k;
            else
                free.push_back(i);
        }
        return free;
    }
};

// Sorts (index, value) pairs into a scenario; duplicate indices are rejected.
template <typename Scalar>
Scenario<Scalar> make_scenario(std::vector<std::pair<Index, Scalar>> pairs, Index horizon = 1) {
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Scenario<Scalar> s;
    s.horizon = horizon;
    s.values.resize(static_cast<Index>(pairs.size()));
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (k > 0) require(pairs[k].first != pairs[k - 1].first, "duplicate scenario index");
        s.fixed_indices.push_back(pairs[k].first);
        s.values(static_cast<Index>(k)) = pairs[k].second;
    }
    return s;
}

template <typename Scalar>
struct ObservationLaw {
    Vec<Scalar> mean;
    Mat<Scalar> cov;
};

template <typename Scalar>
struct ConditionalLaw {
    Vec<Scalar> mean;
    Mat<Scalar> cov;
};

struct ConditioningOptions {
    bool add_measurement_noise = false;
    // Use only the covariate rows of H^z when every fixed index is a covariate.
    bool covariates_only_when_possible = true;
};

template <typename Scalar>
Mat<Scalar> take_rows(const Mat<Scalar>& m, const std::vector<Index>& rows) {
    Mat<Scalar> out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
    return out;
}

template <typename Scalar>
Mat<Scalar> take_block(const Mat<Scalar>& m, const std::vector<Index>& rows, const std::vector<Index>& cols) {
    Mat<Scalar> out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
    return out;
}

template <typename Scalar>
Vec<Scalar> take(const Vec<Scalar>& v, const std::vector<Index>& idx) {
    Vec<Scalar> out(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = v(idx[k]);
    return out;
}

// Law of the state `steps` transitions after `state`.
template <typename Scalar>
GaussianState<Scalar> propagate(const StateSpaceModel<Scalar>& model, const GaussianState<Scalar>& state, Index steps) {
    GaussianState<Scalar> out = state;
    if (out.cov.size() == 0) out.cov = Mat<Scalar>::Zero(model.ell(), model.ell());
    for (Index k = 0; k < steps; ++k) {
        out.mean = model.A * out.mean;
        out.cov = symmetrize(model.A * out.cov * model.A.transpose() + model.Q);
    }
    return out;
}

// Observation rows used for a scenario: H^z, or Hx alone for covariate-only scenarios.
template <typename Scalar>
Mat<Scalar> observation_rows(const StateSpaceModel<Scalar>& model, const Scenario<Scalar>& scenario,
                             const ConditioningOptions& opt) {
    const bool x_only = !model.has_response() ||
                        (opt.covariates_only_when_possible &&
                         (scenario.fixed_indices.empty() || scenario.fixed_indices.back() < model.m()));
    return x_only ? model.Hx : model.Hz();
}

// Mean H A psi and covariance H (A P A^T + Q) H^T for the observation rows H;
// P is the state covariance (zero for a point state).
template <typename Scalar>
ObservationLaw<Scalar> predict_observation_law(const StateSpaceModel<Scalar>& model, const Mat<Scalar>& H,
                                               const GaussianState<Scalar>& state, bool add_measurement_noise) {
    GaussianState<Scalar> next = propagate(model, state, 1);
    ObservationLaw<Scalar> law;
    law.mean = H * next.mean;
    law.cov = symmetrize(H * next.cov * H.transpose());
    if (add_measurement_noise) {
        Mat<Scalar> R = model.R();
        law.cov += R.topLeftCorner(H.rows(), H.rows());
    }
    return law;
}

template <typename Scalar>
ObservationLaw<Scalar> predict_observation_law(const StateSpaceModel<Scalar>& model, const Vec<Scalar>& psi_t,
                                               bool add_measurement_noise = false) {
    return predict_observation_law(model, model.Hz(), GaussianState<Scalar>{psi_t, {}}, add_measurement_noise);
}

template <typename Scalar>
struct ConditionedBlock {
    std::vector<Index> free;
    Vec<Scalar> mean;
    Mat<Scalar> cov;
};

template <typename Scalar>
ConditionedBlock<Scalar> condition_gaussian(const Vec<Scalar>& mean, const Mat<Scalar>& cov,
                                            const Scenario<Scalar>& scenario) {
    const Index dim = mean.size();
    require(cov.rows() == dim && cov.cols() == dim, "covariance shape mismatch");
    scenario.validate(dim);
    ConditionedBlock<Scalar> out;
    out.free = scenario.free_indices(dim);
    const auto& fixed = scenario.fixed_indices;
    Mat<Scalar> s22 = take_block(cov, out.free, out.free);
    out.mean = take(mean, out.free);
    if (fixed.empty() || out.free.empty()) {
        out.cov = s22;
        return out;
    }
    Mat<Scalar> s11 = take_block(cov, fixed, fixed);
    Mat<Scalar> s21 = take_block(cov, out.free, fixed);
    const Scalar scale = std::max(s11.diagonal().cwiseAbs().mean(), Scalar(0));
    Eigen::LLT<Mat<Scalar>> llt;
    bool ok = false;
    for (Scalar tau : {Scalar(0), Scalar(1e-12), Scalar(1e-10), Scalar(1e-8), Scalar(1e-6)}) {
        Mat<Scalar> ridged = s11;
        ridged.diagonal().array() += tau * scale;
        llt.compute(ridged);
        if (llt.info() == Eigen::Success && llt.rcond() > Scalar(1e-13)) {
            ok = true;
            break;
        }
    }
    if (!ok || !(scale > Scalar(0))) throw SingularMatrix("fixed-block covariance singular beyond ridge budget", 0);
    Vec<Scalar> resid = scenario.values - take(mean, fixed);
    // K = S21 S11^{-1}
    Mat<Scalar> K = llt.solve(s21.transpose()).transpose();
    out.mean += K * resid;
    out.cov = symmetrize(s22 - K * s21.transpose());
    return out;
}

// Pulls the free-coordinate law back to the embedding via the pseudoinverse of
// the free rows of H.
template <typename Scalar>
ConditionalLaw<Scalar> restrict_to_embedding(const Mat<Scalar>& H, const ConditionedBlock<Scalar>& block,
                                             Scalar rtol = Scalar(1e-10)) {
    if (block.free.empty()) throw EmptyFreeSet();
    Mat<Scalar> h2 = take_rows(H, block.free);
    Mat<Scalar> pinv = pseudo_inverse(h2, rtol);
    ConditionalLaw<Scalar> law;
    law.mean = pinv * block.mean;
    law.cov = psd_project(Mat<Scalar>(pinv * block.cov * pinv.transpose()));
    return law;
}

template <typename Scalar>
Mat<Scalar> covariance_factor_psd(const Mat<Scalar>& cov) {
    Eigen::LLT<Mat<Scalar>> llt(cov);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > Scalar(0)) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(symmetrize(cov));
    Vec<Scalar> root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

template <typename Scalar>
Mat<Scalar> sample_conditional(const ConditionalLaw<Scalar>& law, Index count, std::uint64_t seed) {
    require(count >= 1, "sample count must be positive");
    const Index l = law.mean.size();
    Mat<Scalar> L = covariance_factor_psd(law.cov);
    NormalStream rng(seed);
    Mat<Scalar> z = rng.matrix<Scalar>(count, l);
    Mat<Scalar> draws = z * L.transpose();
    draws.rowwise() += law.mean.transpose();
    return draws;
}

// Full one-step pipeline: predict, condition on the scenario, restrict.
template <typename Scalar>
ConditionalLaw<Scalar> conditional_law(const StateSpaceModel<Scalar>& model, const GaussianState<Scalar>& state,
                                       const Scenario<Scalar>& scenario, const ConditioningOptions& opt = {}) {
    Mat<Scalar> H = observation_rows(model, scenario, opt);
    GaussianState<Scalar> start = propagate(model, state, scenario.horizon - 1);
    ObservationLaw<Scalar> obs = predict_observation_law(model, H, start, opt.add_measurement_noise);
    scenario.validate(H.rows());
    if (static_cast<Index>(scenario.fixed_indices.size()) == H.rows()) throw EmptyFreeSet();
    ConditionedBlock<Scalar> block = condition_gaussian(obs.mean, obs.cov, scenario);
    return restrict_to_embedding(H, block);
}

template <typename Scalar>
struct StressPrediction {
    ConditionalLaw<Scalar> law;
    Mat<Scalar> states;
    Mat<Scalar> x_draws;
    Mat<Scalar> y_draws;
    Vec<Scalar> y_mean;
};

// Scenario values are in raw covariate units; `x_mean` re-centers them.
template <typename Scalar>
Scenario<Scalar> center_scenario(const Scenario<Scalar>& scenario, const Vec<Scalar>& x_mean,
                                 const Vec<Scalar>& y_mean = Vec<Scalar>()) {
    Scenario<Scalar> out = scenario;
    const Index m = x_mean.size();
    for (std::size_t k = 0; k < scenario.fixed_indices.size(); ++k) {
        const Index i = scenario.fixed_indices[k];
        out.values(static_cast<Index>(k)) -= i < m ? x_mean(i) : y_mean(i - m);
    }
    return out;
}

}  // namespace dms
