#include "prefx/llm/gateway.hpp"

#include "prefx/llm/http_backend.hpp"
#include "prefx/llm/mock_backend.hpp"
#include "prefx/util/error.hpp"
#include "prefx/util/fs.hpp"
#include "prefx/util/hash.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

namespace prefx::llm {

std::string to_string(Purpose p) {
    switch (p) {
        case Purpose::discovery: return "discovery";
        case Purpose::relevance: return "relevance";
        case Purpose::comp: return "comp";
        case Purpose::score: return "score";
        case Purpose::judge: return "judge";
        case Purpose::generation: return "generation";
    }
    return "unknown";
}

void validate(const ChatRequest& r) {
    if (r.prompt.empty()) throw ValidationError("chat request: empty prompt");
    if (!std::isfinite(r.temperature) || r.temperature < 0.0)
        throw ValidationError("chat request: temperature must be finite and non-negative");
    if (r.max_output <= 0) throw ValidationError("chat request: max_output must be positive");
}

void validate(const GatewayConfig& c) {
    if (c.max_parallel < 1 || c.max_parallel > 1024) throw ConfigError("gateway: max_parallel must be in [1, 1024]");
    if (c.backoff.count() < 0) throw ConfigError("gateway: backoff must be non-negative");
    if (!(c.timeout_seconds > 0.0)) throw ConfigError("gateway: timeout must be positive");
    if (c.backend == BackendKind::http && c.endpoint.empty()) throw ConfigError("gateway: http backend needs an endpoint");
    if (c.backend == BackendKind::mock && c.mock_script.empty() && !c.mock_synthesize)
        throw ConfigError("gateway: mock backend needs a script or the synthesizer");
}

GatewayConfig parse_gateway_config(const nlohmann::json& j) {
    GatewayConfig c;
    try {
        if (j.contains("backend")) {
            const auto b = j.at("backend").get<std::string>();
            if (b == "http") c.backend = BackendKind::http;
            else if (b == "mock") c.backend = BackendKind::mock;
            else throw ConfigError("gateway: unknown backend '" + b + "'");
        }
        c.endpoint = j.value("endpoint", c.endpoint);
        c.model = j.value("model", c.model);
        c.credential_env = j.value("credential_env", c.credential_env);
        c.max_parallel = j.value("max_parallel", c.max_parallel);
        c.retry_budget = j.value("retry_budget", c.retry_budget);
        c.backoff = std::chrono::milliseconds(j.value("backoff_ms", static_cast<long>(c.backoff.count())));
        c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
        c.cache_dir = j.value("cache_dir", std::string{});
        c.mock_script = j.value("mock_script", std::string{});
        c.mock_synthesize = j.value("mock_synthesize", c.mock_synthesize);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("gateway config: ") + e.what());
    }
    validate(c);
    return c;
}

nlohmann::json to_json(const GatewayConfig& c) {
    return {{"backend", c.backend == BackendKind::http ? "http" : "mock"},
            {"endpoint", c.endpoint},
            {"model", c.model},
            {"credential_env", c.credential_env},
            {"max_parallel", c.max_parallel},
            {"retry_budget", c.retry_budget},
            {"backoff_ms", c.backoff.count()},
            {"timeout_seconds", c.timeout_seconds},
            {"cache_dir", c.cache_dir.string()},
            {"mock_script", c.mock_script.string()},
            {"mock_synthesize", c.mock_synthesize}};
}

std::unique_ptr<Backend> make_backend(const GatewayConfig& config) {
    validate(config);
    if (config.backend == BackendKind::http) return std::make_unique<HttpBackend>(config);
    auto mock = config.mock_script.empty() ? std::make_unique<MockBackend>()
                                           : std::make_unique<MockBackend>(load_mock_script(config.mock_script));
    if (config.mock_synthesize) mock->set_synthesizer(synthesize_reply);
    return mock;
}

Gateway::Gateway(GatewayConfig config) : Gateway(config, make_backend(config)) {}

Gateway::Gateway(GatewayConfig config, std::unique_ptr<Backend> backend)
    : config_(std::move(config)), backend_(std::move(backend)),
      slots_(static_cast<std::ptrdiff_t>(config_.max_parallel)) {
    validate(config_);
    if (!backend_) throw ConfigError("gateway: no backend");
}

std::string Gateway::cache_key(const std::string& backend_id, const ChatRequest& request) {
    char temperature[32];
    std::snprintf(temperature, sizeof temperature, "%.17g", request.temperature);
    std::string material = backend_id;
    material += '\0';
    material += temperature;
    material += '\0';
    material += request.prompt;
    if (request.attempt != 0) {
        material += '\0';
        material += "attempt:" + std::to_string(request.attempt);
    }
    return sha256_hex(material);
}

std::optional<std::string> Gateway::cache_read(const std::string& key, const ChatRequest& request) const {
    if (config_.cache_dir.empty()) return std::nullopt;
    const auto path = config_.cache_dir / key.substr(0, 2) / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        // Guards against a hand-edited or colliding entry.
        if (j.at("backend") != backend_->id() || j.at("prompt_sha256") != sha256_hex(request.prompt))
            return std::nullopt;
        return j.at("text").get<std::string>();
    } catch (const std::exception& e) {
        spdlog::warn("gateway: ignoring unreadable cache entry {}: {}", path.string(), e.what());
        return std::nullopt;
    }
}

void Gateway::cache_write(const std::string& key, const ChatRequest& request, const std::string& text) const {
    if (config_.cache_dir.empty()) return;
    const auto path = config_.cache_dir / key.substr(0, 2) / (key + ".json");
    nlohmann::ordered_json j;
    j["backend"] = backend_->id();
    j["temperature"] = request.temperature;
    j["tag"] = to_string(request.tag);
    j["template"] = request.template_id;
    j["prompt_sha256"] = sha256_hex(request.prompt);
    j["text"] = text;
    write_file_atomic(path, j.dump(2) + "\n");
}

ChatResponse Gateway::complete(const ChatRequest& request) {
    validate(request);
    const auto key = cache_key(backend_->id(), request);
    {
        std::lock_guard lock(stats_mutex_);
        ++stats_.requests;
    }
    if (auto hit = cache_read(key, request)) {
        std::lock_guard lock(stats_mutex_);
        ++stats_.cache_hits;
        return {*hit, true, backend_->id()};
    }

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= config_.retry_budget; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(config_.backoff * (1LL << std::min<std::size_t>(attempt - 1, 16)));
            std::lock_guard lock(stats_mutex_);
            ++stats_.retries;
        }
        slots_.acquire();
        try {
            {
                std::lock_guard lock(stats_mutex_);
                ++stats_.backend_calls;
            }
            std::string text = backend_->send(request);
            slots_.release();
            cache_write(key, request, text);
            return {std::move(text), false, backend_->id()};
        } catch (const TransientError& e) {
            slots_.release();
            last_error = e.what();
            spdlog::debug("gateway: attempt {} failed: {}", attempt + 1, last_error);
        } catch (...) {
            slots_.release();
            throw;
        }
    }
    throw TransportError("gateway: " + std::to_string(config_.retry_budget + 1) + " attempts failed; last error: " +
                         last_error);
}

std::vector<Outcome> Gateway::complete_all(const std::vector<ChatRequest>& requests) {
    std::vector<Outcome> outcomes(requests.size());
    auto run = [&](std::size_t i) {
        try {
            outcomes[i].response = complete(requests[i]);
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    };
    const std::size_t workers = std::min(config_.max_parallel, requests.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < requests.size(); ++i) run(i);
        return outcomes;
    }
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < requests.size(); i = next++) run(i);
            });
    }
    return outcomes;
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(stats_mutex_);
    return stats_;
}

}  // namespace prefx::llm

namespace prefx::llm {

std::vector<std::optional<std::string>> complete_with_retry(
    Gateway& gateway, std::vector<ChatRequest> requests,
    const std::function<void(std::size_t, const std::string&)>& parse, std::vector<std::string>* errors) {
    std::vector<std::optional<std::string>> replies(requests.size());
    std::vector<std::string> last_error(requests.size());
    std::vector<std::size_t> pending(requests.size());
    std::iota(pending.begin(), pending.end(), std::size_t{0});
    for (unsigned attempt = 0; attempt < 2 && !pending.empty(); ++attempt) {
        std::vector<ChatRequest> round;
        round.reserve(pending.size());
        for (std::size_t i : pending) {
            requests[i].attempt = attempt;
            round.push_back(requests[i]);
        }
        const auto outcomes = gateway.complete_all(round);
        std::vector<std::size_t> again;
        for (std::size_t k = 0; k < pending.size(); ++k) {
            const std::size_t i = pending[k];
            if (!outcomes[k].response) {
                last_error[i] = outcomes[k].error;
                again.push_back(i);
                continue;
            }
            try {
                parse(i, outcomes[k].response->text);
                replies[i] = outcomes[k].response->text;
                last_error[i].clear();
            } catch (const std::exception& e) {
                last_error[i] = e.what();
                again.push_back(i);
            }
        }
        pending = std::move(again);
    }
    if (errors) *errors = std::move(last_error);
    return replies;
}

}  // namespace prefx::llm
