#pragma once

#include "dms/bundle.hpp"

#include <optional>
#include <string>

namespace dms {

inline constexpr const char* kVersion = "0.1.0";

struct HttpResponse {
    int status = 200;
    std::string body;
};

// Read-only after construction; handle() is safe to call concurrently.
class ScenarioService {
public:
    explicit ScenarioService(std::optional<ModelBundle> bundle = std::nullopt);

    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) const;
    bool has_model() const { return bundle_.has_value(); }

    // Blocks until the server stops.
    void listen(const std::string& host, int port, int threads = 4) const;

private:
    std::optional<ModelBundle> bundle_;
};

}  // namespace dms
