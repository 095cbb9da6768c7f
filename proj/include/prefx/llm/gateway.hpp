#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace prefx::llm {

enum class Purpose { discovery, relevance, comp, score, judge, generation };

std::string to_string(Purpose p);

struct ChatRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_output = 4096;
    Purpose tag = Purpose::discovery;
    /// Which prompt asset produced the text. The mock synthesizer keys on it;
    /// it is not part of the cache key.
    std::string template_id;
    /// Retry ordinal after a bad reply. Nonzero values join the cache key, so
    /// a retry is never answered by the cached reply it is replacing.
    unsigned attempt = 0;
};

/// Throws ValidationError for an empty prompt, a negative or non-finite
/// temperature, or a non-positive output budget.
void validate(const ChatRequest& r);

struct ChatResponse {
    std::string text;
    bool cached = false;
    std::string backend;
};

/// A failure worth retrying: throttling, server errors, dropped connections.
class TransientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Backend {
public:
    virtual ~Backend() = default;
    /// Stable identifier; part of the cache key.
    virtual std::string id() const = 0;
    /// Throws TransientError for retryable failures, TransportError otherwise.
    virtual std::string send(const ChatRequest& request) = 0;
};

enum class BackendKind { http, mock };

struct GatewayConfig {
    BackendKind backend = BackendKind::mock;
    /// Chat-completions URL for the http backend.
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o-mini";
    /// Environment variable holding the API credential.
    std::string credential_env = "PREFX_API_KEY";
    std::size_t max_parallel = 4;
    std::size_t retry_budget = 3;
    std::chrono::milliseconds backoff{500};
    double timeout_seconds = 120.0;
    /// Content-addressed response cache; empty disables caching.
    std::filesystem::path cache_dir;
    /// Mock backend: scripted replies keyed by prompt SHA-256.
    std::filesystem::path mock_script;
    /// Mock backend: answer unscripted prompts with the built-in synthesizer.
    bool mock_synthesize = true;
};

void validate(const GatewayConfig& c);
GatewayConfig parse_gateway_config(const nlohmann::json& j);
nlohmann::json to_json(const GatewayConfig& c);

/// Builds the configured backend. The http backend fails with ConfigError
/// right here when the credential variable is unset.
std::unique_ptr<Backend> make_backend(const GatewayConfig& config);

struct GatewayStats {
    std::size_t requests = 0;
    std::size_t cache_hits = 0;
    std::size_t backend_calls = 0;
    std::size_t retries = 0;
};

/// Result of one request in a batch: a response or the error text.
struct Outcome {
    std::optional<ChatResponse> response;
    std::string error;
};

class Gateway {
public:
    explicit Gateway(GatewayConfig config);
    Gateway(GatewayConfig config, std::unique_ptr<Backend> backend);

    /// Served from cache when possible; otherwise at most max_parallel calls
    /// are in flight across all threads. Retries transient failures with
    /// exponential backoff and throws TransportError once the budget is spent.
    ChatResponse complete(const ChatRequest& request);

    /// Runs every request, up to max_parallel at a time; outcomes keep input order.
    std::vector<Outcome> complete_all(const std::vector<ChatRequest>& requests);

    const GatewayConfig& config() const noexcept { return config_; }
    std::string backend_id() const { return backend_->id(); }
    GatewayStats stats() const;

    /// sha256 over (backend id, temperature, prompt), plus the attempt when nonzero.
    static std::string cache_key(const std::string& backend_id, const ChatRequest& request);

private:
    std::optional<std::string> cache_read(const std::string& key, const ChatRequest& request) const;
    void cache_write(const std::string& key, const ChatRequest& request, const std::string& text) const;

    GatewayConfig config_;
    std::unique_ptr<Backend> backend_;
    std::counting_semaphore<1024> slots_;
    mutable std::mutex stats_mutex_;
    GatewayStats stats_;
};

/// Runs `requests` through the gateway and hands each reply to `parse(i, text)`.
/// A failed call or a reply `parse` rejects by throwing is retried once with
/// attempt = 1. Returns the accepted reply texts; `errors`, when given,
/// receives the last error per request (empty on success).
std::vector<std::optional<std::string>> complete_with_retry(
    Gateway& gateway, std::vector<ChatRequest> requests,
    const std::function<void(std::size_t, const std::string&)>& parse,
    std::vector<std::string>* errors = nullptr);

}  // namespace prefx::llm
