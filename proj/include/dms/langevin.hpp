#pragma once

#include "dms/core.hpp"
#include "dms/random.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dms {

template <typename Scalar>
struct PotentialSpec {
    enum class Kind { quadratic_diagonal, custom_gradient };

    Kind kind = Kind::quadratic_diagonal;
    Vec<Scalar> coefficients;
    std::function<Vec<Scalar>(const Vec<Scalar>&)> gradient_fn;
    Index dim = 0;

    static PotentialSpec quadratic(const Vec<Scalar>& a) {
        require(a.size() > 0, "quadratic potential needs at least one coefficient");
        require((a.array() > Scalar(0)).all(), "quadratic coefficients must be strictly positive");
        PotentialSpec spec;
        spec.kind = Kind::quadratic_diagonal;
        spec.coefficients = a;
        spec.dim = a.size();
        return spec;
    }

    static PotentialSpec isotropic(Index d) { return quadratic(Vec<Scalar>::Ones(d)); }

    static PotentialSpec custom(Index d, std::function<Vec<Scalar>(const Vec<Scalar>&)> grad) {
        require(d > 0, "custom potential dimension must be positive");
        PotentialSpec spec;
        spec.kind = Kind::custom_gradient;
        spec.gradient_fn = std::move(grad);
        spec.dim = d;
        return spec;
    }

    Vec<Scalar> gradient(const Vec<Scalar>& w) const {
        if (kind == Kind::quadratic_diagonal) return coefficients.cwiseProduct(w);
        return gradient_fn(w);
    }
};

template <typename Scalar>
struct SimulationConfig {
    Index steps = 0;
    Scalar dt = Scalar(0.01);
    std::uint64_t seed = 0;
    Index burn_in = 0;
    // Record every thin-th step; the recorded spacing is thin * dt.
    Index thin = 1;
    Vec<Scalar> initial;
    bool keep_noise = false;
};

template <typename Scalar>
struct LatentPath {
    Vec<Scalar> times;
    Mat<Scalar> states;
    // Row k holds the standard normals driving row k -> k+1 (thin == 1 only).
    Mat<Scalar> noise;
    Scalar spacing = 0;

    Index size() const { return states.rows(); }
    Index dim() const { return states.cols(); }
};

// 10 relaxation times of the slowest mode, in steps of dt.
template <typename Scalar>
Index default_burn_in(const PotentialSpec<Scalar>& spec, Scalar dt) {
    require(spec.kind == PotentialSpec<Scalar>::Kind::quadratic_diagonal,
            "default burn-in needs a quadratic potential");
    return static_cast<Index>(std::ceil(Scalar(10) / (spec.coefficients.minCoeff() * dt)));
}

template <typename Scalar>
LatentPath<Scalar> simulate_langevin(const PotentialSpec<Scalar>& spec, const SimulationConfig<Scalar>& cfg) {
    require(cfg.steps >= 0, "steps must be nonnegative");
    require(cfg.dt > Scalar(0), "dt must be positive");
    require(cfg.burn_in >= 0, "burn_in must be nonnegative");
    require(cfg.thin >= 1, "thin must be at least 1");
    require(!cfg.keep_noise || cfg.thin == 1, "noise can only be kept when thin == 1");
    if (spec.kind == PotentialSpec<Scalar>::Kind::quadratic_diagonal)
        require((spec.coefficients.array() * cfg.dt < Scalar(1)).all(),
                "dt too large: a_i * dt must be < 1 for every coordinate");

    const Index d = spec.dim;
    Vec<Scalar> theta = cfg.initial.size() == 0 ? Vec<Scalar>::Zero(d) : cfg.initial;
    require(theta.size() == d, "initial state dimension mismatch");

    LatentPath<Scalar> path;
    path.spacing = cfg.dt * Scalar(cfg.thin);
    path.states.resize(cfg.steps + 1, d);
    path.times.resize(cfg.steps + 1);
    if (cfg.keep_noise) path.noise.resize(cfg.steps, d);

    NormalStream rng(cfg.seed);
    const Scalar diffusion = std::sqrt(Scalar(2) * cfg.dt);
    Vec<Scalar> xi(d);
    Index fine_step = 0;
    auto advance = [&]() {
        for (Index i = 0; i < d; ++i) xi(i) = Scalar(rng.next());
        theta = theta - spec.gradient(theta) * cfg.dt + diffusion * xi;
        ++fine_step;
        if (!theta.allFinite()) throw SimulationDiverged(fine_step);
    };

    for (Index k = 0; k < cfg.burn_in; ++k) advance();
    path.states.row(0) = theta.transpose();
    path.times(0) = 0;
    for (Index k = 1; k <= cfg.steps; ++k) {
        for (Index j = 0; j < cfg.thin; ++j) {
            advance();
            if (cfg.keep_noise) path.noise.row(k - 1) = xi.transpose();
        }
        path.states.row(k) = theta.transpose();
        path.times(k) = Scalar(k) * path.spacing;
    }
    return path;
}

template <typename Scalar>
struct ObservationMap {
    enum class Kind { linear, sum_of_squares, coordinate_projection, exponential, norm };

    Kind kind = Kind::linear;
    Mat<Scalar> matrix;
    std::vector<Index> indices;

    static ObservationMap linear(const Mat<Scalar>& m) { return {Kind::linear, m, {}}; }
    static ObservationMap sum_of_squares() { return {Kind::sum_of_squares, {}, {}}; }
    static ObservationMap projection(std::vector<Index> idx) {
        return {Kind::coordinate_projection, {}, std::move(idx)};
    }
    static ObservationMap exponential() { return {Kind::exponential, {}, {}}; }
    static ObservationMap norm() { return {Kind::norm, {}, {}}; }

    Index output_dim(Index d) const {
        switch (kind) {
            case Kind::linear: return matrix.rows();
            case Kind::sum_of_squares:
            case Kind::norm: return 1;
            case Kind::coordinate_projection: return static_cast<Index>(indices.size());
            case Kind::exponential: return d;
        }
        return 0;
    }
};

// Maps each row of a T x d state matrix through the observation map.
template <typename Scalar>
Mat<Scalar> apply_observation_map(const Mat<Scalar>& states, const ObservationMap<Scalar>& map) {
    using Kind = typename ObservationMap<Scalar>::Kind;
    const Index d = states.cols();
    switch (map.kind) {
        case Kind::linear:
            require(map.matrix.cols() == d, "linear observation map input dimension mismatch");
            return states * map.matrix.transpose();
        case Kind::sum_of_squares:
            return states.rowwise().squaredNorm();
        case Kind::norm:
            return states.rowwise().norm();
        case Kind::exponential:
            return states.array().exp().matrix();
        case Kind::coordinate_projection: {
            Mat<Scalar> out(states.rows(), static_cast<Index>(map.indices.size()));
            for (std::size_t k = 0; k < map.indices.size(); ++k) {
                require(map.indices[k] >= 0 && map.indices[k] < d, "projection index out of range");
                out.col(static_cast<Index>(k)) = states.col(map.indices[k]);
            }
            return out;
        }
    }
    throw InvalidArgument("unknown observation map");
}

}  // namespace dms
