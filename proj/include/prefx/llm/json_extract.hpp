#pragma once

#include <nlohmann/json.hpp>

#include <string_view>

namespace prefx::llm {

using Json = nlohmann::ordered_json;

/// First well-formed fenced block (```json or bare ```), then the whole text,
/// then the first balanced {...} or [...] span. Python-style True/False/None
/// are accepted outside strings. Key order is preserved. ExtractionError
/// (carrying the raw text) when nothing parses.
Json extract_json_block(std::string_view text);

}  // namespace prefx::llm
