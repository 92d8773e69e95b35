#include "dms/backtest.hpp"
#include "dms/bundle.hpp"
#include "dms/config.hpp"
#include "dms/data_io.hpp"
#include "dms/diffusion_map.hpp"
#include "dms/jdkf.hpp"
#include "dms/service.hpp"
#include "dms/studies.hpp"
#include "dms/synthetic.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dms;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240601;

struct Globals {
    std::string config;
    std::uint64_t seed = kDefaultSeed;
    int threads = 1;
    std::string out = "out";
    bool json = false;
    int verbosity = 0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
    CLI::Option* out_opt = nullptr;
};

// Flags shared by every command that builds an embedding or runs EM.
struct ModelFlags {
    Index ell = 0;
    std::string ell_rule;
    Index window = 0;
    std::string epsilon_rule;
    double epsilon = 0;
    double rate_scale = 0;
    int max_iters = -1;
    double tolerance = 0;
    std::string m_step;
    std::string transition;
    bool joseph = false;
    bool embed_response = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f, bool with_em) {
    cmd->add_option("--ell", f.ell, "Number of diffusion coordinates");
    cmd->add_option("--ell-rule", f.ell_rule, "fixed | largest_gap");
    cmd->add_option("--window", f.window, "Covariation window (differences)");
    cmd->add_option("--epsilon-rule", f.epsilon_rule, "median | fixed | loglog_scan");
    cmd->add_option("--epsilon", f.epsilon, "Kernel bandwidth for --epsilon-rule fixed");
    cmd->add_option("--rate-scale", f.rate_scale, "Time units per unit of epsilon in lambda");
    if (!with_em) return;
    cmd->add_option("--max-iters", f.max_iters, "EM iteration cap (0 keeps the initial model)");
    cmd->add_option("--tol", f.tolerance, "EM relative log-likelihood tolerance");
    cmd->add_option("--m-step", f.m_step, "expected | plug_in");
    cmd->add_option("--transition", f.transition, "one_minus_lambda | matrix_exponential");
    cmd->add_flag("--joseph", f.joseph, "Joseph-form covariance update");
    cmd->add_flag("--embed-response", f.embed_response, "Embed the stacked covariate and response panel");
}

bool given(const CLI::App* cmd, const std::string& name) {
    const CLI::Option* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

Json load_config_file(const Globals& g) {
    if (g.config.empty()) return Json::object();
    if (!fs::exists(g.config)) throw InvalidArgument("config file not found: " + g.config);
    try {
        Json j = Json::parse(read_text(g.config));
        require(j.is_object(), "config file must hold a JSON object");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config file is not valid JSON: " + std::string(e.what()));
    }
}

// CLI flags > config file > defaults.
void resolve_globals(Globals& g, const Json& file) {
    if (!g.seed_opt->count() && file.contains("seed")) g.seed = file.at("seed").get<std::uint64_t>();
    if (!g.threads_opt->count() && file.contains("threads")) g.threads = file.at("threads").get<int>();
    if (!g.out_opt->count() && file.contains("out")) g.out = file.at("out").get<std::string>();
    require(g.threads >= 1, "--threads must be at least 1");
}

JdkfConfig resolve_jdkf(const Json& file, const CLI::App* cmd, const ModelFlags& f) {
    JdkfConfig c;
    if (file.contains("jdkf")) c = jdkf_config_from_json(file.at("jdkf"));
    if (file.contains("embedding")) c.embedding = embedding_config_from_json(file.at("embedding"));
    if (file.contains("em")) c.em = em_config_from_json(file.at("em"));
    Json e = to_json(c.embedding);
    if (given(cmd, "--ell")) e["ell"] = f.ell;
    if (given(cmd, "--ell-rule")) e["ell_rule"] = f.ell_rule;
    if (given(cmd, "--window")) e["window"] = f.window;
    if (given(cmd, "--epsilon-rule")) e["epsilon_rule"] = f.epsilon_rule;
    if (given(cmd, "--epsilon")) {
        e["epsilon"] = f.epsilon;
        if (!given(cmd, "--epsilon-rule")) e["epsilon_rule"] = "fixed";
    }
    if (given(cmd, "--rate-scale")) e["rate_scale"] = f.rate_scale;
    c.embedding = embedding_config_from_json(e);
    Json m = to_json(c.em);
    if (given(cmd, "--max-iters")) m["max_iters"] = f.max_iters;
    if (given(cmd, "--tol")) m["tolerance"] = f.tolerance;
    if (given(cmd, "--m-step")) m["m_step"] = f.m_step;
    if (given(cmd, "--joseph")) m["joseph_form"] = f.joseph;
    c.em = em_config_from_json(m);
    Json whole = to_json(c);
    if (given(cmd, "--transition")) whole["transition"] = f.transition;
    if (given(cmd, "--embed-response")) whole["embed_response"] = f.embed_response;
    return jdkf_config_from_json(whole);
}

void echo_config(const Globals& g, const std::string& command, Json resolved) {
    Json j;
    j["command"] = command;
    j["seed"] = g.seed;
    j["threads"] = g.threads;
    for (auto& [k, v] : resolved.items()) j[k] = v;
    write_text(fs::path(g.out) / "resolved_config.json", j.dump(2) + "\n");
}

void log(const Globals& g, const std::string& msg) {
    if (!g.json) std::cerr << msg << "\n";
}

void finish(const Globals& g, const std::string& command, Json summary) {
    if (g.json) {
        Json j{{"command", command}, {"status", "ok"}};
        for (auto& [k, v] : summary.items()) j[k] = v;
        std::cout << j.dump() << "\n";
    }
}

Matrix stack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateFlags {
    std::string example = "ou2d";
    Index steps = 500;
    double dt = 0.01;
    Index thin = 5;
    Index burn_in = -1;
    Index window = 50;
    Index ell = 10;
    Index factors = 8;
    Index assets = 5;
    Index latent = 3;
    double x_noise = 0.1;
    double y_noise = 0.1;
};

int cmd_simulate(Globals& g, const Json& file, const CLI::App* cmd, const SimulateFlags& f) {
    SimulateFlags s = f;
    if (file.contains("simulate")) {
        const Json& j = file.at("simulate");
        auto pick = [&](const char* key, const std::string& flag, auto& out) {
            if (j.contains(key) && !given(cmd, flag)) out = j.at(key).get<std::decay_t<decltype(out)>>();
        };
        pick("example", "--example", s.example);
        pick("steps", "--steps", s.steps);
        pick("dt", "--dt", s.dt);
        pick("thin", "--thin", s.thin);
        pick("burn_in", "--burn-in", s.burn_in);
        pick("window", "--window", s.window);
        pick("ell", "--ell", s.ell);
        pick("factors", "--factors", s.factors);
        pick("assets", "--assets", s.assets);
        pick("latent", "--latent", s.latent);
        pick("x_noise", "--x-noise", s.x_noise);
        pick("y_noise", "--y-noise", s.y_noise);
    }
    require(s.steps >= 1, "--steps must be at least 1");
    const fs::path out(g.out);
    Json resolved{{"example", s.example}, {"steps", s.steps}};

    if (s.example == "ou2d") {
        Example1Config c;
        c.samples = s.steps;
        c.dt = s.dt;
        c.thin = s.thin;
        c.seed = g.seed;
        c.burn_in = s.burn_in >= 0 ? s.burn_in : default_burn_in(PotentialSpec<double>::isotropic(2), s.dt);
        c.embedding.window = s.window;
        c.embedding.ell = s.ell;
        resolved.update({{"dt", c.dt}, {"thin", c.thin}, {"burn_in", c.burn_in}, {"embedding", to_json(c.embedding)}});
        echo_config(g, "simulate", resolved);
        Example1Result r = run_example1(c);
        std::vector<std::string> times;
        for (Index i = 0; i < r.path.size(); ++i) times.push_back(format_double(r.path.times(i)));
        write_csv(out / "latent.csv", make_panel(r.path.states, {"theta1", "theta2"}, times), "t");
        write_csv(out / "observations.csv", make_panel(r.panel, {"X", "Y"}, times), "t");
        write_csv(out / "reconstruction.csv", make_panel(r.reconstruction, {"X", "Y"}, times), "t");
        Json summary{{"samples", r.panel.rows()},
                     {"spacing", r.path.spacing},
                     {"epsilon", r.embedding.epsilon},
                     {"r2_x", r.r2_x},
                     {"r2_y", r.r2_y},
                     {"lambda", vector_json(r.embedding.lambda)}};
        write_text(out / "summary.json", summary.dump(2) + "\n");
        log(g, "simulated " + std::to_string(r.panel.rows()) + " samples; lifted R^2 X=" + format_double(r.r2_x) +
                   " Y=" + format_double(r.r2_y));
        finish(g, "simulate", summary);
        return 0;
    }
    if (s.example == "factor-world") {
        SyntheticWorldConfig c;
        c.T = s.steps;
        c.p = s.factors;
        c.n = s.assets;
        c.ell = s.latent;
        c.x_noise = s.x_noise;
        c.y_noise = s.y_noise;
        c.seed = g.seed;
        c.persistence.clear();
        for (Index k = 0; k < c.ell; ++k) c.persistence.push_back(0.9 - 0.03 * double(k));
        resolved.update({{"factors", c.p}, {"assets", c.n}, {"latent", c.ell}, {"persistence", c.persistence},
                         {"x_noise", c.x_noise}, {"y_noise", c.y_noise}});
        echo_config(g, "simulate", resolved);
        SyntheticWorld w = make_synthetic_world(c);
        write_csv(out / "x.csv", w.x);
        write_csv(out / "y.csv", w.y);
        std::vector<std::string> latent_names;
        for (Index k = 0; k < c.ell; ++k) latent_names.push_back("psi" + std::to_string(k + 1));
        write_csv(out / "latent.csv", make_panel(w.psi, latent_names, w.x.index));
        Json manifest;
        manifest["covariates"] = "x.csv";
        manifest["responses"] = "y.csv";
        Json codes = Json::object();
        for (const auto& name : w.x.columns) codes[name] = 1;
        manifest["tcodes"] = codes;
        Json scen = Json::array();
        for (Index k = 0; k < std::min<Index>(3, c.p); ++k) scen.push_back(w.x.columns[static_cast<std::size_t>(k)]);
        manifest["scenario"] = scen;
        manifest["expected_covariates"] = c.p;
        write_text(out / "manifest.json", manifest.dump(2) + "\n");
        log(g, "wrote synthetic factor world with T=" + std::to_string(c.T) + " to " + out.string());
        finish(g, "simulate", Json{{"T", c.T}, {"manifest", (out / "manifest.json").string()}});
        return 0;
    }
    throw InvalidArgument("unknown example '" + s.example + "' (expected ou2d or factor-world)");
}

// ---------------------------------------------------------------- embed / fit

LoadedPanels load_data(const std::string& manifest) {
    require(!manifest.empty(), "--data MANIFEST is required");
    return load_panel(DatasetManifest::load(manifest));
}

int cmd_embed(Globals& g, const Json& file, const CLI::App* cmd, const ModelFlags& f, const std::string& data) {
    JdkfConfig jc = resolve_jdkf(file, cmd, f);
    LoadedPanels d = load_data(data);
    echo_config(g, "embed", Json{{"data", data}, {"embedding", to_json(jc.embedding)}, {"embed_response", jc.embed_response}});
    Matrix panel = jc.embed_response ? stack(d.x.values, d.y.values) : d.x.values;
    std::vector<std::string> cols = d.x.columns;
    if (jc.embed_response) cols.insert(cols.end(), d.y.columns.begin(), d.y.columns.end());
    DiffusionEmbedding<double> emb = embed(panel, jc.embedding);
    Matrix H = lifting_operator(panel, emb);
    Matrix rec = lift(H, emb);

    const fs::path out(g.out);
    std::vector<std::string> names;
    for (Index k = 0; k < emb.ell(); ++k) names.push_back("psi" + std::to_string(k + 1));
    write_csv(out / "coordinates.csv", make_panel(emb.coordinates(), names, d.x.index));
    Json r2 = Json::object();
    for (Index j = 0; j < panel.cols(); ++j) {
        const Vector truth = panel.col(j);
        const bool flat = (truth.array() - truth.mean()).square().sum() == 0;
        r2[cols[static_cast<std::size_t>(j)]] = flat ? Json(nullptr) : Json(r_squared(truth, rec.col(j)));
    }
    Json j;
    j["ell"] = emb.ell();
    j["epsilon"] = emb.epsilon;
    j["window"] = emb.window;
    j["rate_scale"] = emb.rate_scale;
    j["kappa"] = vector_json(emb.kappa);
    j["lambda"] = vector_json(emb.lambda);
    j["spectrum_head"] = vector_json(emb.spectrum.head(std::min<Index>(emb.spectrum.size(), 50)));
    j["columns"] = cols;
    j["lifting"] = matrix_json(H);
    j["reconstruction_r2"] = r2;
    write_text(out / "embedding.json", j.dump(2) + "\n");
    log(g, "embedded " + std::to_string(panel.rows()) + " rows into ell=" + std::to_string(emb.ell()) +
               " coordinates; epsilon=" + format_double(emb.epsilon));
    finish(g, "embed", Json{{"ell", emb.ell()}, {"epsilon", emb.epsilon}});
    return 0;
}

int cmd_fit(Globals& g, const Json& file, const CLI::App* cmd, const ModelFlags& f, const std::string& data) {
    JdkfConfig jc = resolve_jdkf(file, cmd, f);
    LoadedPanels d = load_data(data);
    echo_config(g, "fit", Json{{"data", data}, {"jdkf", to_json(jc)}});
    JdkfFit<double> fit = fit_jdkf<double>(d.x.values, d.y.values, jc);
    ModelBundle bundle = make_bundle(fit, d.x, d.y, jc, d.x_mean, d.y_mean);

    const fs::path out(g.out);
    save_bundle(bundle, out / "model.json");
    std::ostringstream trace;
    trace << "iteration,loglik\n";
    for (std::size_t k = 0; k < fit.em.trace.size(); ++k) trace << k << "," << format_double(fit.em.trace[k]) << "\n";
    write_text(out / "em_trace.csv", trace.str());
    std::vector<std::string> names;
    for (Index k = 0; k < bundle.ell; ++k) names.push_back("psi" + std::to_string(k + 1));
    write_csv(out / "filtered.csv", make_panel(fit.run().filtered_means, names, d.x.index));
    const double ll = fit.em.trace.empty() ? 0.0 : fit.em.trace.back();
    log(g, "fitted JDKF: ell=" + std::to_string(bundle.ell) + ", EM iterations=" + std::to_string(fit.em.iterations) +
               (fit.em.converged ? " (converged)" : " (not converged)") + ", loglik=" + format_double(ll));
    finish(g, "fit", Json{{"ell", bundle.ell},
                          {"iterations", fit.em.iterations},
                          {"converged", fit.em.converged},
                          {"loglik", ll},
                          {"model", (out / "model.json").string()}});
    return 0;
}

// ---------------------------------------------------------------- stress

struct StressFlags {
    std::string model;
    std::string scenario;
    std::vector<std::string> fix;
    Index samples = 10000;
    std::vector<double> alphas;
    Index horizon = 1;
    bool add_noise = false;
    bool no_draws = false;
};

int cmd_stress(Globals& g, const Json& file, const CLI::App* cmd, const StressFlags& f) {
    require(!f.model.empty(), "--model BUNDLE is required");
    ModelBundle b = load_bundle(f.model);
    Json req = Json::object();
    if (file.contains("stress")) req = file.at("stress");
    if (!f.scenario.empty()) {
        if (!fs::exists(f.scenario)) throw InvalidArgument("scenario file not found: " + f.scenario);
        try {
            req = Json::parse(read_text(f.scenario));
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument("scenario file is not valid JSON: " + std::string(e.what()));
        }
    }
    if (!f.fix.empty()) {
        Json fixed = Json::array();
        for (const auto& item : f.fix) {
            const auto eq = item.rfind('=');
            require(eq != std::string::npos && eq > 0, "--fix expects NAME=VALUE, got '" + item + "'");
            bool ok = false;
            const double v = parse_double(item.substr(eq + 1), ok);
            require(ok && std::isfinite(v), "--fix value is not a number: '" + item + "'");
            fixed.push_back({{"name", item.substr(0, eq)}, {"value", v}});
        }
        req["fixed"] = fixed;
    }
    if (given(cmd, "--samples") || !req.contains("K")) req["K"] = f.samples;
    if (g.seed_opt->count() || !req.contains("seed")) req["seed"] = g.seed;
    if (given(cmd, "--alpha")) req["alphas"] = f.alphas;
    if (given(cmd, "--horizon")) req["horizon"] = f.horizon;
    if (given(cmd, "--add-measurement-noise")) req["conditioning"] = to_json(ConditioningOptions{true, true});
    if (given(cmd, "--no-draws")) req["include_draws"] = false;

    ScenarioRequest parsed = parse_scenario_request(req, b);
    echo_config(g, "stress", Json{{"model", f.model}, {"request", req}});
    Json response = evaluate_scenario(b, parsed);
    const std::string body = response.dump() + "\n";
    write_text(fs::path(g.out) / "stress.json", body);
    if (g.json) {
        std::cout << body;
    } else {
        std::ostringstream os;
        os << "portfolio mean " << format_double(response["portfolio"]["mean"].get<double>()) << ", std "
           << format_double(response["portfolio"]["std"].get<double>()) << "\n";
        for (const auto& v : response["var"])
            os << "VaR threshold at " << format_double(v["alpha"].get<double>()) << ": "
               << format_double(v["threshold"].get<double>()) << "\n";
        std::cout << os.str();
    }
    return 0;
}

// ---------------------------------------------------------------- backtest

struct BacktestFlags {
    std::string data;
    std::string methods;
    Index window = 0;
    Index refit = 0;
    Index samples = 0;
    std::vector<std::string> scenario;
    Index static_dim = -1;
    Index dynamic_dim = 0;
    bool add_noise = false;
};

int cmd_backtest(Globals& g, const Json& file, const CLI::App* cmd, const ModelFlags& mf, const BacktestFlags& f) {
    require(!f.data.empty(), "--data MANIFEST is required");
    DatasetManifest manifest = DatasetManifest::load(f.data);
    BacktestConfig c;
    if (file.contains("backtest")) c = backtest_config_from_json(file.at("backtest"));
    // The model flags and any top-level jdkf/embedding/em sections refine the backtest's JDKF settings.
    Json jfile = file;
    if (!jfile.contains("jdkf")) jfile["jdkf"] = to_json(c.jdkf);
    c.jdkf = resolve_jdkf(jfile, cmd, mf);
    if (given(cmd, "--methods")) c.methods = parse_methods(f.methods);
    if (given(cmd, "--bt-window")) c.window = f.window;
    if (given(cmd, "--refit")) c.refit = f.refit;
    if (given(cmd, "--samples")) c.samples = f.samples;
    if (given(cmd, "--static-pca-dim")) c.static_pca_dim = f.static_dim;
    if (given(cmd, "--dynamic-pca-dim")) c.dynamic_pca_dim = f.dynamic_dim;
    if (given(cmd, "--add-measurement-noise")) c.conditioning.add_measurement_noise = true;
    if (given(cmd, "--scenario")) {
        c.scenario.clear();
        c.scenario_names = f.scenario;
    } else if (c.scenario.empty() && c.scenario_names.empty()) {
        c.scenario_names = manifest.scenario;
    }
    if (g.seed_opt->count() || !(file.contains("backtest") && file.at("backtest").contains("seed"))) c.seed = g.seed;
    c.threads = g.threads;
    c.validate();

    LoadedPanels d = load_panel(manifest);
    echo_config(g, "backtest", Json{{"data", f.data}, {"backtest", to_json(c)}});
    BacktestReport report = run_backtest(d.x, d.y, c);
    write_report(report, g.out);
    if (!g.json) std::cout << summary_table(report);
    Json summary = Json::object();
    for (const auto& s : report.summaries) summary[method_name(s.method)] = finite_or_null(s.mae);
    finish(g, "backtest", Json{{"periods", report.periods.size()}, {"mae", summary}, {"report", (fs::path(g.out) / "report.json").string()}});
    return 0;
}

// ---------------------------------------------------------------- report

struct ReportFlags {
    std::string backtest_dir;
    std::string study;
    std::vector<Index> sizes;
    Index seeds = 0;
    Index paths = 0;
};

std::string curve_csv(const LinearSdeStudy& st) {
    std::ostringstream os;
    os << "function,t,empirical,printed_bound,exact\n";
    for (const auto& c : st.curves)
        for (std::size_t r = 0; r < c.times.size(); ++r)
            os << "h" << c.function.i << c.function.j << "," << format_double(c.times[r]) << ","
               << format_double(c.empirical[r]) << "," << format_double(c.printed_bound[r]) << ","
               << format_double(c.exact[r]) << "\n";
    return os.str();
}

int run_study(Globals& g, const CLI::App* cmd, const ReportFlags& f) {
    const fs::path out(g.out);
    Json result;
    std::string csv;
    if (f.study == "example1") {
        Example1Config c;
        c.seed = g.seed;
        Example1Result r = run_example1(c);
        result = {{"seed", g.seed}, {"r2_x", r.r2_x}, {"r2_y", r.r2_y}, {"epsilon", r.embedding.epsilon},
                  {"lambda", vector_json(r.embedding.lambda)}};
    } else if (f.study == "laplacian") {
        LaplacianStudyConfig c;
        if (given(cmd, "--sizes")) c.sizes = f.sizes;
        if (given(cmd, "--seeds")) {
            c.seeds.clear();
            for (Index k = 0; k < f.seeds; ++k) c.seeds.push_back(derive_seed(g.seed, 0x1a, static_cast<std::uint64_t>(k)));
        }
        c.threads = g.threads;
        ConvergenceStudy st = laplacian_convergence_study(c);
        result = to_json(c, st);
        std::ostringstream os;
        os << "size,function,median,mean,max,std\n";
        for (const auto& s : st.sizes)
            for (std::size_t k = 0; k < c.functions.size(); ++k)
                os << s.size << ",h" << c.functions[k].i << c.functions[k].j << "," << format_double(s.median[k]) << ","
                   << format_double(s.mean[k]) << "," << format_double(s.max[k]) << "," << format_double(s.std[k]) << "\n";
        csv = os.str();
    } else if (f.study == "clt") {
        Json all = Json::array();
        for (HermiteIndex h : {HermiteIndex{2, 0}, HermiteIndex{1, 1}}) {
            CltStudyConfig c;
            c.function = h;
            c.master_seed = g.seed;
            if (given(cmd, "--sizes")) c.sizes = f.sizes;
            if (given(cmd, "--seeds")) c.seeds = f.seeds;
            c.threads = g.threads;
            all.push_back(to_json(c, lifting_clt_study(c)));
        }
        result = {{"studies", all}};
    } else if (f.study == "decorrelation") {
        SimulationConfig<double> sc;
        sc.steps = 100000;
        sc.seed = g.seed;
        sc.burn_in = default_burn_in(PotentialSpec<double>::isotropic(2), sc.dt);
        LatentPath<double> p = simulate_langevin(PotentialSpec<double>::isotropic(2), sc);
        std::vector<HermiteIndex> fns{{1, 0}, {0, 1}, {2, 0}, {1, 1}};
        Matrix m = eigen_decorrelation_study(p.states, fns);
        Json names = Json::array();
        for (auto h : fns) names.push_back("h" + std::to_string(h.i) + std::to_string(h.j));
        result = {{"steps", sc.steps}, {"functions", names}, {"normalized_covariation", matrix_json(m)}};
    } else if (f.study == "linear-sde") {
        LinearSdeStudyConfig c;
        c.seed = g.seed;
        if (given(cmd, "--paths")) c.paths = f.paths;
        c.threads = g.threads;
        LinearSdeStudy st = linear_sde_approx_study(c);
        result = to_json(c, st);
        csv = curve_csv(st);
    } else {
        throw InvalidArgument("unknown study '" + f.study + "' (example1, laplacian, clt, decorrelation, linear-sde)");
    }
    write_text(out / ("study_" + f.study + ".json"), result.dump(2) + "\n");
    if (!csv.empty()) write_text(out / ("study_" + f.study + ".csv"), csv);
    if (g.json)
        std::cout << result.dump() << "\n";
    else
        log(g, "wrote " + (out / ("study_" + f.study + ".json")).string());
    return 0;
}

int cmd_report(Globals& g, const CLI::App* cmd, const ReportFlags& f) {
    require(f.backtest_dir.empty() != f.study.empty(), "report needs exactly one of --backtest DIR or --study NAME");
    if (!f.study.empty()) return run_study(g, cmd, f);
    const fs::path path = fs::path(f.backtest_dir) / "report.json";
    if (!fs::exists(path)) throw InvalidArgument("no report.json in " + f.backtest_dir);
    Json j = Json::parse(read_text(path));
    std::ostringstream os;
    os << "method        MAE         evaluated  missing\n";
    for (const auto& s : j.at("summary")) {
        char line[160];
        const double mae = s.at("mae").is_null() ? std::nan("") : s.at("mae").get<double>();
        std::snprintf(line, sizeof line, "%-12s  %-10.6g  %-9lld  %lld\n", s.at("method").get<std::string>().c_str(), mae,
                      s.at("evaluated").get<long long>(), s.at("missing").get<long long>());
        os << line;
    }
    os << "\naccuracy\n";
    for (const auto& a : j.at("accuracy")) {
        char line[160];
        const double pct = a.at("percent").is_null() ? std::nan("") : a.at("percent").get<double>();
        std::snprintf(line, sizeof line, "%-12s vs %-12s  %6.2f%%  (%lld periods)\n",
                      a.at("method").get<std::string>().c_str(), a.at("against").get<std::string>().c_str(), pct,
                      a.at("periods").get<long long>());
        os << line;
    }
    if (g.json)
        std::cout << Json{{"summary", j.at("summary")}, {"accuracy", j.at("accuracy")}}.dump() << "\n";
    else
        std::cout << os.str();
    return 0;
}

// ---------------------------------------------------------------- serve

int cmd_serve(Globals& g, const std::string& model, const std::string& host, int port) {
    std::optional<ModelBundle> bundle;
    if (!model.empty()) bundle = load_bundle(model);
    ScenarioService service(std::move(bundle));
    if (!service.has_model()) log(g, "no model loaded; scenario endpoints answer 409");
    service.listen(host, port, std::max(g.threads, 2));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion-map state-space toolkit: embeddings, joint Kalman filtering, scenario stress tests and backtests"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON config file (flags override it)");
    g.seed_opt = app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
    g.threads_opt = app.add_option("--threads", g.threads, "Worker threads")->capture_default_str();
    g.out_opt = app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_flag("--json", g.json, "Machine-readable output on stdout");
    app.add_flag("-v,--verbose", g.verbosity, "More logging");
    app.fallthrough();

    SimulateFlags sim_f;
    auto* sim = app.add_subcommand("simulate", "Simulate an example dataset");
    sim->add_option("--example", sim_f.example, "ou2d | factor-world")->capture_default_str();
    sim->add_option("--steps", sim_f.steps, "Number of recorded samples")->capture_default_str();
    sim->add_option("--dt", sim_f.dt, "Euler step")->capture_default_str();
    sim->add_option("--thin", sim_f.thin, "Euler steps per recorded sample")->capture_default_str();
    sim->add_option("--burn-in", sim_f.burn_in, "Burn-in steps (default: ten relaxation times)");
    sim->add_option("--window", sim_f.window, "Covariation window for the embedding")->capture_default_str();
    sim->add_option("--ell", sim_f.ell, "Diffusion coordinates for the embedding")->capture_default_str();
    sim->add_option("--factors", sim_f.factors, "factor-world: covariates p")->capture_default_str();
    sim->add_option("--assets", sim_f.assets, "factor-world: assets n")->capture_default_str();
    sim->add_option("--latent", sim_f.latent, "factor-world: latent dimension")->capture_default_str();
    sim->add_option("--x-noise", sim_f.x_noise, "factor-world: covariate noise sd")->capture_default_str();
    sim->add_option("--y-noise", sim_f.y_noise, "factor-world: response noise sd")->capture_default_str();

    ModelFlags emb_f;
    std::string emb_data;
    auto* emb = app.add_subcommand("embed", "Anisotropic diffusion-map embedding of a dataset");
    emb->add_option("--data", emb_data, "Dataset manifest");
    add_model_flags(emb, emb_f, false);
    emb->add_flag("--embed-response", emb_f.embed_response, "Embed the stacked covariate and response panel");

    ModelFlags fit_f;
    std::string fit_data;
    auto* fit = app.add_subcommand("fit", "Fit the joint diffusion Kalman filter by EM and write a model bundle");
    fit->add_option("--data", fit_data, "Dataset manifest");
    add_model_flags(fit, fit_f, true);

    StressFlags st_f;
    auto* st = app.add_subcommand("stress", "Conditional scenario stress test from a model bundle");
    st->add_option("--model", st_f.model, "Model bundle (model.json)");
    st->add_option("--scenario", st_f.scenario, "Scenario request JSON");
    st->add_option("--fix", st_f.fix, "NAME=VALUE; repeatable");
    st->add_option("--samples,-K", st_f.samples, "Monte Carlo draws")->capture_default_str();
    st->add_option("--alpha", st_f.alphas, "VaR confidence levels");
    st->add_option("--horizon", st_f.horizon, "Steps ahead")->capture_default_str();
    st->add_flag("--add-measurement-noise", st_f.add_noise, "Include R in the predicted observation covariance");
    st->add_flag("--no-draws", st_f.no_draws, "Omit per-draw portfolio returns");

    ModelFlags bt_m;
    BacktestFlags bt_f;
    auto* bt = app.add_subcommand("backtest", "Rolling historical backtest with periodic refitting");
    bt->add_option("--data", bt_f.data, "Dataset manifest");
    bt->add_option("--methods", bt_f.methods, "Comma list of ssa, static_pca, dynamic_pca, jdkf");
    bt->add_option("--bt-window", bt_f.window, "Rolling window s");
    bt->add_option("--refit", bt_f.refit, "Refit period R");
    bt->add_option("--samples,-K", bt_f.samples, "Monte Carlo draws per period");
    bt->add_option("--scenario", bt_f.scenario, "Stressed factor names");
    bt->add_option("--static-pca-dim", bt_f.static_dim, "Static PCA dimension (0 = best from sweep)");
    bt->add_option("--dynamic-pca-dim", bt_f.dynamic_dim, "Dynamic PCA dimension");
    bt->add_flag("--add-measurement-noise", bt_f.add_noise, "Include R in the predicted observation covariance");
    add_model_flags(bt, bt_m, true);

    ReportFlags rp_f;
    auto* rp = app.add_subcommand("report", "Summarize a backtest or run a verification study");
    rp->add_option("--backtest", rp_f.backtest_dir, "Directory holding report.json");
    rp->add_option("--study", rp_f.study, "example1 | laplacian | clt | decorrelation | linear-sde");
    rp->add_option("--sizes", rp_f.sizes, "Study sample sizes");
    rp->add_option("--seeds", rp_f.seeds, "Number of study seeds");
    rp->add_option("--paths", rp_f.paths, "linear-sde: Monte Carlo paths");

    std::string sv_model, sv_host = "127.0.0.1";
    int sv_port = 8080;
    auto* sv = app.add_subcommand("serve", "HTTP scenario service over a model bundle");
    sv->add_option("--model", sv_model, "Model bundle (model.json)");
    sv->add_option("--host", sv_host, "Bind address")->capture_default_str();
    sv->add_option("--port", sv_port, "Port")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const Json file = load_config_file(g);
        resolve_globals(g, file);
        if (sim->parsed()) return cmd_simulate(g, file, sim, sim_f);
        if (emb->parsed()) return cmd_embed(g, file, emb, emb_f, emb_data);
        if (fit->parsed()) return cmd_fit(g, file, fit, fit_f, fit_data);
        if (st->parsed()) return cmd_stress(g, file, st, st_f);
        if (bt->parsed()) return cmd_backtest(g, file, bt, bt_m, bt_f);
        if (rp->parsed()) return cmd_report(g, rp, rp_f);
        if (sv->parsed()) return cmd_serve(g, sv_model, sv_host, sv_port);
    } catch (const InvalidArgument& e) {
        if (g.json) std::cout << Json{{"status", "error"}, {"exit_code", 2}, {"message", e.what()}}.dump() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        if (g.json) std::cout << Json{{"status", "error"}, {"exit_code", 1}, {"message", e.what()}}.dump() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
