#include "dms/studies.hpp"

#include "dms/diffusion_map.hpp"
#include "dms/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace dms {

namespace {

template <typename F>
void parallel_for(Index n, int threads, F&& body) {
    const int workers = static_cast<int>(std::min<Index>(std::max(threads, 1), std::max<Index>(n, 1)));
    if (workers <= 1) {
        for (Index i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (Index i = next++; i < n; i = next++) body(i);
        });
    for (auto& th : pool) th.join();
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Index thin_for(double spacing, double dt) {
    const Index thin = static_cast<Index>(std::llround(spacing / dt));
    require(thin >= 1 && std::abs(double(thin) * dt - spacing) < 1e-9 * std::max(1.0, spacing),
            "spacing must be a positive integer multiple of dt");
    return thin;
}

LatentPath<double> ou_path(Index samples, double dt, Index thin, std::uint64_t seed) {
    SimulationConfig<double> sc;
    sc.steps = samples - 1;
    sc.dt = dt;
    sc.thin = thin;
    sc.seed = seed;
    const PotentialSpec<double> spec = PotentialSpec<double>::isotropic(2);
    sc.burn_in = default_burn_in(spec, dt);
    return simulate_langevin(spec, sc);
}

}  // namespace

double r_squared(const Vector& truth, const Vector& fitted) {
    require(truth.size() == fitted.size() && truth.size() > 1, "R^2 needs equal-length vectors");
    const double ss = (truth.array() - truth.mean()).square().sum();
    require(ss > 0, "R^2 undefined for a constant series");
    return 1.0 - (truth - fitted).squaredNorm() / ss;
}

Matrix example1_panel(const Matrix& states) {
    require(states.cols() == 2, "Example 1 needs a 2-d latent path");
    Matrix z(states.rows(), 2);
    z.col(0) = apply_observation_map<double>(states, ObservationMap<double>::sum_of_squares());
    z.col(1) = states.col(0);
    return z;
}

Example1Result run_example1(const Example1Config& cfg) {
    require(cfg.samples >= 3, "Example 1 needs at least 3 samples");
    SimulationConfig<double> sc;
    sc.steps = cfg.samples - 1;
    sc.dt = cfg.dt;
    sc.thin = cfg.thin;
    sc.burn_in = cfg.burn_in;
    sc.seed = cfg.seed;
    Example1Result r;
    r.path = simulate_langevin(PotentialSpec<double>::isotropic(2), sc);
    r.panel = example1_panel(r.path.states);
    r.embedding = embed(r.panel, cfg.embedding);
    r.lifting = lifting_operator(r.panel, r.embedding);
    r.reconstruction = lift(r.lifting, r.embedding);
    r.r2_x = r_squared(r.panel.col(0), r.reconstruction.col(0));
    r.r2_y = r_squared(r.panel.col(1), r.reconstruction.col(1));
    return r;
}

ConvergenceStudy laplacian_convergence_study(const LaplacianStudyConfig& cfg) {
    require(!cfg.sizes.empty() && !cfg.seeds.empty() && !cfg.functions.empty(), "study needs sizes, seeds and functions");
    for (std::size_t i = 0; i < cfg.sizes.size(); ++i) {
        require(cfg.sizes[i] >= 100, "study sizes must be at least 100");
        if (i > 0) require(cfg.sizes[i] > cfg.sizes[i - 1], "study sizes must be strictly increasing");
    }
    require(cfg.epsilon > 0, "latent bandwidth must be positive");
    const Index thin = thin_for(cfg.spacing, cfg.dt);
    // Increments of the identity observation have covariance 2 * spacing * I.
    const double rate_scale = 2.0 * cfg.spacing;
    const double eps_d = cfg.epsilon / rate_scale;
    const std::size_t F = cfg.functions.size();

    ConvergenceStudy study;
    study.seeds = cfg.seeds;
    for (Index size : cfg.sizes) {
        SizeStatistics st;
        st.size = size;
        st.errors.assign(cfg.seeds.size(), std::vector<double>(F, 0.0));
        parallel_for(static_cast<Index>(cfg.seeds.size()), cfg.threads, [&](Index k) {
            const std::uint64_t seed = derive_seed(cfg.seeds[static_cast<std::size_t>(k)], 0x1a9, static_cast<std::uint64_t>(size));
            LatentPath<double> path = ou_path(size, cfg.dt, thin, seed);
            const Matrix& theta = path.states;
            Matrix z = theta.rowwise() - theta.colwise().mean();
            std::vector<Matrix> covs;
            if (cfg.mode == CovariationMode::windowed)
                covs = windowed_covariation(z, cfg.window);
            else
                covs.assign(static_cast<std::size_t>(size), Matrix(rate_scale * Matrix::Identity(2, 2)));
            Matrix d = mahalanobis_distance_matrix(z, covs);
            KernelMatrices<double> km = kernel_and_stochastic_matrix(d, eps_d);
            for (std::size_t f = 0; f < F; ++f) {
                const HermiteIndex h = cfg.functions[f];
                Vector phi = hermite_eval(h, theta);
                Vector g = graph_laplacian_apply(km.P, phi, eps_d * rate_scale);
                const double lam = h.eigenvalue();
                st.errors[static_cast<std::size_t>(k)][f] =
                    lam > 0 ? (g + lam * phi).norm() / (lam * phi).norm() : g.norm() / std::sqrt(double(size));
            }
        });
        for (std::size_t f = 0; f < F; ++f) {
            std::vector<double> col;
            for (const auto& row : st.errors) col.push_back(row[f]);
            const double mean = std::accumulate(col.begin(), col.end(), 0.0) / double(col.size());
            double var = 0;
            for (double e : col) var += (e - mean) * (e - mean);
            st.median.push_back(median_of(col));
            st.mean.push_back(mean);
            st.max.push_back(*std::max_element(col.begin(), col.end()));
            st.std.push_back(col.size() > 1 ? std::sqrt(var / double(col.size() - 1)) : 0.0);
        }
        study.sizes.push_back(std::move(st));
    }
    for (std::size_t i = 1; i < study.sizes.size(); ++i)
        if (!(study.sizes[i].median[0] < study.sizes[i - 1].median[0])) study.decreasing = false;
    return study;
}

Json to_json(const LaplacianStudyConfig& cfg, const ConvergenceStudy& study) {
    Json j;
    Json c;
    c["sizes"] = cfg.sizes;
    c["seeds"] = cfg.seeds;
    c["dt"] = cfg.dt;
    c["spacing"] = cfg.spacing;
    c["epsilon"] = cfg.epsilon;
    c["window"] = cfg.window;
    c["covariation"] = cfg.mode == CovariationMode::windowed ? "windowed" : "exact";
    Json fs = Json::array();
    for (auto h : cfg.functions) fs.push_back({h.i, h.j});
    c["functions"] = fs;
    j["config"] = c;
    Json sizes = Json::array();
    for (const auto& s : study.sizes)
        sizes.push_back({{"size", s.size},
                         {"median", s.median},
                         {"mean", s.mean},
                         {"max", s.max},
                         {"std", s.std},
                         {"errors", s.errors}});
    j["sizes"] = sizes;
    j["median_decreasing"] = study.decreasing;
    return j;
}

double sum_of_squares_coefficient(HermiteIndex idx, double v) {
    if (idx.i == 0 && idx.j == 0) return 2 * v;
    if ((idx.i == 2 && idx.j == 0) || (idx.i == 0 && idx.j == 2)) return (4 * v * v - 2 * v) / std::sqrt(2.0);
    require(idx.i + idx.j <= 2, "closed form only for total order <= 2");
    return 0.0;
}

CltStudy lifting_clt_study(const CltStudyConfig& cfg) {
    require(!cfg.sizes.empty() && cfg.seeds >= 3, "CLT study needs sizes and at least 3 seeds");
    for (std::size_t i = 0; i < cfg.sizes.size(); ++i) {
        require(cfg.sizes[i] >= 100, "study sizes must be at least 100");
        if (i > 0) require(cfg.sizes[i] > cfg.sizes[i - 1], "study sizes must be strictly increasing");
    }
    const Index thin = thin_for(cfg.spacing, cfg.dt);
    // Stationary variance of theta_{k+1} = (1 - dt) theta_k + sqrt(2 dt) xi.
    const double v = cfg.discretization_corrected ? 2.0 / (2.0 - cfg.dt) : 1.0;
    CltStudy study;
    study.analytic = sum_of_squares_coefficient(cfg.function, v);
    study.analytic_continuous = sum_of_squares_coefficient(cfg.function, 1.0);
    for (Index size : cfg.sizes) {
        CltSizeStatistics st;
        st.size = size;
        st.statistic.assign(static_cast<std::size_t>(cfg.seeds), 0.0);
        parallel_for(cfg.seeds, cfg.threads, [&](Index k) {
            const std::uint64_t seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(k));
            LatentPath<double> path = ou_path(size, cfg.dt, thin, seed);
            Vector f = apply_observation_map<double>(path.states, ObservationMap<double>::sum_of_squares());
            Vector phi = hermite_eval(cfg.function, path.states);
            const double emp = f.dot(phi) / double(size);
            st.statistic[static_cast<std::size_t>(k)] = std::sqrt(double(size)) * (emp - study.analytic);
        });
        const double n = double(st.statistic.size());
        st.mean = std::accumulate(st.statistic.begin(), st.statistic.end(), 0.0) / n;
        double m2 = 0, m3 = 0;
        for (double s : st.statistic) {
            m2 += (s - st.mean) * (s - st.mean);
            m3 += std::pow(s - st.mean, 3);
        }
        st.variance = m2 / (n - 1);
        const double pop = m2 / n;
        st.skewness = pop > 0 ? (m3 / n) / std::pow(pop, 1.5) : 0.0;
        study.sizes.push_back(std::move(st));
    }
    for (std::size_t i = 1; i < study.sizes.size(); ++i) {
        const double r = study.sizes[i].variance / study.sizes[i - 1].variance;
        study.variance_ratios.push_back(r);
        if (!(r >= 0.5 && r <= 2.0)) study.variance_stable = false;
    }
    study.skewness_ok = std::abs(study.sizes.back().skewness) < 0.5;
    return study;
}

Json to_json(const CltStudyConfig& cfg, const CltStudy& study) {
    Json j;
    j["config"] = {{"sizes", cfg.sizes},
                   {"seeds", cfg.seeds},
                   {"master_seed", cfg.master_seed},
                   {"dt", cfg.dt},
                   {"spacing", cfg.spacing},
                   {"function", {cfg.function.i, cfg.function.j}},
                   {"discretization_corrected", cfg.discretization_corrected}};
    j["analytic"] = study.analytic;
    j["analytic_continuous"] = study.analytic_continuous;
    Json sizes = Json::array();
    for (const auto& s : study.sizes)
        sizes.push_back({{"size", s.size}, {"mean", s.mean}, {"variance", s.variance}, {"skewness", s.skewness}});
    j["sizes"] = sizes;
    j["variance_ratios"] = study.variance_ratios;
    j["variance_stable"] = study.variance_stable;
    j["skewness_ok"] = study.skewness_ok;
    return j;
}

Matrix eigen_decorrelation_study(const Matrix& states, const std::vector<HermiteIndex>& functions) {
    require(states.rows() >= 2, "decorrelation study needs at least two states");
    const Index k = static_cast<Index>(functions.size());
    Matrix inc(states.rows() - 1, k);
    for (Index f = 0; f < k; ++f) {
        Vector phi = hermite_eval(functions[static_cast<std::size_t>(f)], states);
        inc.col(f) = phi.tail(phi.size() - 1) - phi.head(phi.size() - 1);
    }
    Matrix cov = inc.transpose() * inc;
    Vector root = cov.diagonal().cwiseSqrt();
    require((root.array() > 0).all(), "a test function has zero realized variation");
    Matrix out(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index j = i; j < k; ++j) out(i, j) = out(j, i) = cov(i, j) / (root(i) * root(j));
    return out;
}

double hermite_gradient_norm_mean(HermiteIndex idx) {
    // Composite Simpson on [-L, L]^2 against the Gaussian density.
    const double L = 10.0;
    const Index n = 4000;
    const double h = 2 * L / double(n);
    std::vector<double> x(static_cast<std::size_t>(n + 1)), w(static_cast<std::size_t>(n + 1));
    std::vector<double> fa, da, fb, db;
    const double norm = 1.0 / std::sqrt(2 * M_PI);
    for (Index k = 0; k <= n; ++k) {
        const double xk = -L + h * double(k);
        const double simpson = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        x[static_cast<std::size_t>(k)] = xk;
        w[static_cast<std::size_t>(k)] = simpson * h / 3.0 * norm * std::exp(-0.5 * xk * xk);
        fa.push_back(hermite(idx.i, xk));
        da.push_back(hermite_derivative(idx.i, xk));
        fb.push_back(hermite(idx.j, xk));
        db.push_back(hermite_derivative(idx.j, xk));
    }
    double total = 0;
    for (std::size_t a = 0; a < x.size(); ++a) {
        double row = 0;
        for (std::size_t b = 0; b < x.size(); ++b) {
            const double g0 = da[a] * fb[b];
            const double g1 = fa[a] * db[b];
            row += w[b] * std::sqrt(g0 * g0 + g1 * g1);
        }
        total += w[a] * row;
    }
    return total;
}

LinearSdeStudy linear_sde_approx_study(const LinearSdeStudyConfig& cfg) {
    require(cfg.paths >= 2 && cfg.dt > 0 && cfg.horizon > 0 && cfg.record_every >= 1, "invalid linear SDE study config");
    const Index steps = static_cast<Index>(std::llround(cfg.horizon / cfg.dt));
    const std::size_t F = cfg.functions.size();
    const double diffusion = std::sqrt(2 * cfg.dt);

    LinearSdeStudy study;
    std::vector<double> gammas;
    for (auto h : cfg.functions) {
        LinearSdeCurve c;
        c.function = h;
        c.lambda = h.eigenvalue();
        require(c.lambda > 0, "linear SDE study needs non-constant eigenfunctions");
        c.gamma = hermite_gradient_norm_mean(h);
        // E ||grad h_{i,j}||^2 = i + j under N(0, I).
        c.gradient_variance = std::max(0.0, double(h.i + h.j) - c.gamma * c.gamma);
        for (Index s = 0; s <= steps; s += cfg.record_every) c.times.push_back(double(s) * cfg.dt);
        c.empirical.assign(c.times.size(), 0.0);
        study.curves.push_back(std::move(c));
    }

    // Per-path accumulation in chunks so each path has its own stream.
    const Index chunk = 256;
    const Index chunks = (cfg.paths + chunk - 1) / chunk;
    std::vector<std::vector<std::vector<double>>> partial(
        static_cast<std::size_t>(chunks), std::vector<std::vector<double>>(F, std::vector<double>(study.curves[0].times.size(), 0.0)));
    parallel_for(chunks, cfg.threads, [&](Index c) {
        auto& acc = partial[static_cast<std::size_t>(c)];
        const auto phi_at = [](HermiteIndex h, double a, double b) { return hermite(h.i, a) * hermite(h.j, b); };
        for (Index p = c * chunk; p < std::min(cfg.paths, (c + 1) * chunk); ++p) {
            NormalStream rng(derive_seed(cfg.seed, 0x5de, static_cast<std::uint64_t>(p)));
            Vector theta(2);
            theta << rng.next(), rng.next();
            std::vector<double> xi(F);
            for (std::size_t f = 0; f < F; ++f) xi[f] = phi_at(cfg.functions[f], theta(0), theta(1));
            std::size_t rec = 0;
            for (Index s = 0; s <= steps; ++s) {
                if (s % cfg.record_every == 0) {
                    for (std::size_t f = 0; f < F; ++f) {
                        const double e = phi_at(cfg.functions[f], theta(0), theta(1)) - xi[f];
                        acc[f][rec] += e * e;
                    }
                    ++rec;
                }
                if (s == steps) break;
                const double w0 = rng.next();
                const double w1 = rng.next();
                for (std::size_t f = 0; f < F; ++f) {
                    const HermiteIndex h = cfg.functions[f];
                    const double g0 = hermite_derivative(h.i, theta(0)) * hermite(h.j, theta(1));
                    const double g1 = hermite(h.i, theta(0)) * hermite_derivative(h.j, theta(1));
                    const double gn = std::hypot(g0, g1);
                    // dB = (grad phi / |grad phi|) . dW, the motion driving phi(theta).
                    const double db = gn > 0 ? (g0 * w0 + g1 * w1) / gn : w0;
                    const auto& cv = study.curves[f];
                    xi[f] = xi[f] - cv.lambda * xi[f] * cfg.dt + cv.gamma * diffusion * db;
                }
                theta(0) = theta(0) - theta(0) * cfg.dt + diffusion * w0;
                theta(1) = theta(1) - theta(1) * cfg.dt + diffusion * w1;
            }
        }
    });

    for (std::size_t f = 0; f < F; ++f) {
        LinearSdeCurve& c = study.curves[f];
        for (const auto& part : partial)
            for (std::size_t r = 0; r < c.times.size(); ++r) c.empirical[r] += part[f][r];
        const double V = c.gradient_variance;
        for (std::size_t r = 0; r < c.times.size(); ++r) {
            c.empirical[r] /= double(cfg.paths);
            const double t = c.times[r];
            const double decay = std::exp(-2 * c.lambda * t);
            c.printed_bound.push_back(decay * (c.empirical[0] + 2 * t * V));
            c.exact.push_back(c.empirical[0] * decay + V * (1 - decay) / c.lambda);
            c.max_error = std::max(c.max_error, c.empirical[r]);
            if (r > 0) {
                if (c.printed_bound[r] > 0)
                    c.worst_printed_ratio = std::max(c.worst_printed_ratio, c.empirical[r] / c.printed_bound[r]);
                else if (c.empirical[r] > 0)
                    c.worst_printed_ratio = std::numeric_limits<double>::infinity();
                if (c.exact[r] > 0) c.worst_exact_ratio = std::max(c.worst_exact_ratio, c.empirical[r] / c.exact[r]);
            }
        }
    }
    return study;
}

Json to_json(const LinearSdeStudyConfig& cfg, const LinearSdeStudy& study) {
    Json j;
    Json fs = Json::array();
    for (auto h : cfg.functions) fs.push_back({h.i, h.j});
    j["config"] = {{"paths", cfg.paths},     {"dt", cfg.dt},       {"horizon", cfg.horizon},
                   {"record_every", cfg.record_every}, {"seed", cfg.seed}, {"functions", fs},
                   {"slack", cfg.slack}};
    Json curves = Json::array();
    for (const auto& c : study.curves) {
        Json e;
        e["function"] = {c.function.i, c.function.j};
        e["lambda"] = c.lambda;
        e["gamma"] = c.gamma;
        e["gradient_variance"] = c.gradient_variance;
        e["max_error"] = c.max_error;
        e["worst_ratio_printed_bound"] = finite_or_null(c.worst_printed_ratio);
        e["worst_ratio_exact"] = finite_or_null(c.worst_exact_ratio);
        e["times"] = c.times;
        e["empirical"] = c.empirical;
        e["printed_bound"] = c.printed_bound;
        e["exact"] = c.exact;
        curves.push_back(e);
    }
    j["curves"] = curves;
    return j;
}

}  // namespace dms
