#include "dms/service.hpp"

#include "httplib.h"

#include <iostream>

namespace dms {

namespace {

HttpResponse json_response(int status, const Json& j) { return {status, j.dump() + "\n"}; }

HttpResponse error_response(int status, const std::string& message) {
    return json_response(status, Json{{"error", message}, {"status", status}});
}

}  // namespace

ScenarioService::ScenarioService(std::optional<ModelBundle> bundle) : bundle_(std::move(bundle)) {
    if (bundle_) bundle_->validate();
}

HttpResponse ScenarioService::handle(const std::string& method, const std::string& path, const std::string& body) const {
    if (method == "OPTIONS") return {204, ""};
    const bool get = method == "GET";
    const bool post = method == "POST";

    if (path == "/health") {
        if (!get) return error_response(405, "method not allowed");
        return json_response(200, Json{{"status", "ok"}, {"version", kVersion}, {"model_loaded", has_model()}});
    }
    if (path == "/model/meta" || path == "/factors" || path == "/scenario") {
        if (path == "/scenario" ? !post : !get) return error_response(405, "method not allowed");
        if (!bundle_) return error_response(409, "no model loaded");
    } else {
        return error_response(404, "not found: " + path);
    }
    const ModelBundle& b = *bundle_;

    if (path == "/model/meta") {
        Json j;
        j["ell"] = b.ell;
        j["m"] = b.m();
        j["n"] = b.n();
        j["fitted_at"] = b.fitted_at;
        j["observations"] = b.observations;
        j["epsilon"] = b.epsilon;
        j["window"] = b.window;
        j["lambda"] = vector_json(b.lambda);
        j["kappa"] = vector_json(b.kappa);
        return json_response(200, j);
    }
    if (path == "/factors") {
        Json factors = Json::array();
        for (Index i = 0; i < b.m(); ++i) factors.push_back({{"name", b.factor_names[static_cast<std::size_t>(i)]}, {"index", i}});
        Json assets = Json::array();
        for (Index i = 0; i < b.n(); ++i)
            assets.push_back({{"name", b.asset_names[static_cast<std::size_t>(i)]}, {"index", b.m() + i}});
        return json_response(200, Json{{"factors", factors}, {"assets", assets}});
    }

    Json request;
    try {
        request = Json::parse(body.empty() ? std::string("{}") : body);
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, std::string("request body is not valid JSON: ") + e.what());
    }
    try {
        return json_response(200, evaluate_scenario(b, request));
    } catch (const EmptyFreeSet& e) {
        return error_response(422, e.what());
    } catch (const InvalidArgument& e) {
        return error_response(400, e.what());
    } catch (const NumericalError& e) {
        return error_response(422, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

void ScenarioService::listen(const std::string& host, int port, int threads) const {
    httplib::Server server;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<size_t>(std::max(threads, 1))); };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
        HttpResponse r = handle(req.method, req.path, req.body);
        res.status = r.status;
        if (!r.body.empty()) res.set_content(r.body, "application/json");
    };
    server.Get(".*", route);
    server.Post(".*", route);
    server.Options(".*", route);
    if (!server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    std::cerr << "listening on http://" << host << ":" << port << "\n";
    server.listen_after_bind();
}

}  // namespace dms
