#pragma once

#include "dms/core.hpp"
#include "dms/panel.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dms {

// Linear-Gaussian world: psi AR(1) with unit stationary variance,
// x = Hx psi + v_x, y = B Hx psi + v_y.
struct SyntheticWorldConfig {
    Index ell = 3;
    Index p = 8;
    Index n = 5;
    Index T = 400;
    std::vector<double> persistence{0.9, 0.85, 0.8};
    double x_noise = 0.1;
    double y_noise = 0.1;
    std::uint64_t seed = 1;
};

struct SyntheticWorld {
    Matrix psi;
    Matrix Hx;
    Matrix B;
    TimeSeriesPanel x;
    TimeSeriesPanel y;
};

SyntheticWorld make_synthetic_world(const SyntheticWorldConfig& cfg);

// "YYYY-MM" labels, monthly from January 1990.
std::vector<std::string> monthly_index(Index n, int start_year = 1990);

}  // namespace dms
