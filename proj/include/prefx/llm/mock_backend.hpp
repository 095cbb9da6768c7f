#pragma once

#include "prefx/llm/gateway.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>

namespace prefx::llm {

/// Prompt SHA-256 → reply text.
using MockScript = std::map<std::string, std::string>;

MockScript load_mock_script(const std::filesystem::path& path);
void save_mock_script(const MockScript& script, const std::filesystem::path& path);

/// Deterministic offline backend. Scripted replies win; otherwise the
/// synthesizer (if set) answers; otherwise TransportError.
class MockBackend : public Backend {
public:
    using Synthesizer = std::function<std::string(const ChatRequest&)>;

    MockBackend() = default;
    explicit MockBackend(MockScript script) : script_(std::move(script)) {}

    void set_synthesizer(Synthesizer s) { synthesizer_ = std::move(s); }
    std::string id() const override { return "mock"; }
    std::string send(const ChatRequest& request) override;

private:
    MockScript script_;
    Synthesizer synthesizer_;
};

/// Answers any bundled prompt template with a well-formed reply derived only
/// from the prompt text. Comparative answers come from per-response content
/// hashes, so swapping two responses mirrors the answer; near-equal pairs get
/// a first-position bias, which shows up as an order-swap inconsistency.
std::string synthesize_reply(const ChatRequest& request);

}  // namespace prefx::llm
