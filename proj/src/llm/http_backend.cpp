#include "prefx/llm/http_backend.hpp"

#include "prefx/util/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>

namespace prefx::llm {

HttpBackend::HttpBackend(const GatewayConfig& config)
    : model_(config.model), timeout_seconds_(config.timeout_seconds) {
    const char* key = std::getenv(config.credential_env.c_str());
    if (key == nullptr || *key == '\0')
        throw ConfigError("http backend: credential variable " + config.credential_env + " is not set");
    credential_ = key;

    const auto& url = config.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos || (url.compare(0, scheme_end, "http") != 0 && url.compare(0, scheme_end, "https") != 0))
        throw ConfigError("http backend: endpoint must be an http(s) URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpBackend::send(const ChatRequest& request) {
    httplib::Client client(origin_);
    const auto seconds = static_cast<time_t>(timeout_seconds_);
    client.set_connection_timeout(seconds);
    client.set_read_timeout(seconds);
    client.set_write_timeout(seconds);
    client.set_bearer_token_auth(credential_);

    nlohmann::json body{{"model", model_},
                        {"messages", {{{"role", "user"}, {"content", request.prompt}}}},
                        {"temperature", request.temperature},
                        {"max_tokens", request.max_output}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw TransientError("http backend: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransientError("http backend: status " + std::to_string(res->status));
    if (res->status != 200)
        throw TransportError("http backend: status " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    try {
        const auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("http backend: malformed reply: ") + e.what());
    }
}

}  // namespace prefx::llm
