#pragma once

#include "prefx/llm/gateway.hpp"

#include <string>

namespace prefx::llm {

/// OpenAI-style chat completions over HTTPS.
class HttpBackend : public Backend {
public:
    /// ConfigError when the credential variable is unset or the endpoint is not
    /// an http(s) URL. No network traffic happens here.
    explicit HttpBackend(const GatewayConfig& config);

    std::string id() const override { return "http:" + model_; }
    std::string send(const ChatRequest& request) override;

private:
    std::string origin_;  // scheme://host[:port]
    std::string path_;
    std::string model_;
    std::string credential_;
    double timeout_seconds_;
};

}  // namespace prefx::llm
