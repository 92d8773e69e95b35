#include "dms/synthetic.hpp"

#include "dms/random.hpp"

#include <cmath>
#include <cstdio>

namespace dms {

std::vector<std::string> monthly_index(Index n, int start_year) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d", start_year + static_cast<int>(i / 12), static_cast<int>(i % 12) + 1);
        out.emplace_back(buf);
    }
    return out;
}

SyntheticWorld make_synthetic_world(const SyntheticWorldConfig& cfg) {
    require(cfg.ell >= 1 && cfg.p >= 1 && cfg.n >= 1 && cfg.T >= 2, "synthetic world dimensions must be positive");
    require(static_cast<Index>(cfg.persistence.size()) == cfg.ell, "one persistence value per latent coordinate");
    for (double phi : cfg.persistence) require(std::abs(phi) < 1, "persistence must lie in (-1, 1)");
    require(cfg.x_noise >= 0 && cfg.y_noise >= 0, "noise levels must be non-negative");

    NormalStream loadings(derive_seed(cfg.seed, 1));
    NormalStream shocks(derive_seed(cfg.seed, 2));
    NormalStream noise(derive_seed(cfg.seed, 3));

    SyntheticWorld w;
    w.Hx = loadings.matrix<double>(cfg.p, cfg.ell);
    w.B = loadings.matrix<double>(cfg.n, cfg.p) / std::sqrt(static_cast<double>(cfg.p));

    w.psi.resize(cfg.T, cfg.ell);
    for (Index k = 0; k < cfg.ell; ++k) w.psi(0, k) = shocks.next();
    for (Index t = 1; t < cfg.T; ++t)
        for (Index k = 0; k < cfg.ell; ++k) {
            const double phi = cfg.persistence[static_cast<std::size_t>(k)];
            w.psi(t, k) = phi * w.psi(t - 1, k) + std::sqrt(1 - phi * phi) * shocks.next();
        }

    Matrix signal = w.psi * w.Hx.transpose();
    Matrix x = signal + cfg.x_noise * noise.matrix<double>(cfg.T, cfg.p);
    Matrix y = signal * w.B.transpose() + cfg.y_noise * noise.matrix<double>(cfg.T, cfg.n);

    std::vector<std::string> xc, yc;
    for (Index i = 0; i < cfg.p; ++i) xc.push_back("f" + std::to_string(i + 1));
    for (Index i = 0; i < cfg.n; ++i) yc.push_back("a" + std::to_string(i + 1));
    const auto index = monthly_index(cfg.T);
    w.x = make_panel(x, xc, index);
    w.y = make_panel(y, yc, index);
    return w;
}

}  // namespace dms
