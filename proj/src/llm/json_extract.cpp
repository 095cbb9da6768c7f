#include "prefx/llm/json_extract.hpp"

#include "prefx/util/error.hpp"

#include <cctype>
#include <optional>
#include <string>

namespace prefx::llm {

namespace {

/// Rewrites bare True/False/None tokens to JSON literals, leaving strings alone.
std::string pythonic_literals(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            out += c;
            if (c == '\\' && i + 1 < s.size()) out += s[++i];
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
            out += c;
            continue;
        }
        auto word_at = [&](std::string_view w) {
            if (s.substr(i, w.size()) != w) return false;
            const bool left = i == 0 || !std::isalnum(static_cast<unsigned char>(s[i - 1]));
            const std::size_t j = i + w.size();
            const bool right = j >= s.size() || !std::isalnum(static_cast<unsigned char>(s[j]));
            return left && right;
        };
        if (word_at("True")) {
            out += "true";
            i += 3;
        } else if (word_at("False")) {
            out += "false";
            i += 4;
        } else if (word_at("None")) {
            out += "null";
            i += 3;
        } else {
            out += c;
        }
    }
    return out;
}

std::optional<Json> try_parse(std::string_view s) {
    auto j = Json::parse(s, nullptr, false);
    if (!j.is_discarded()) return j;
    j = Json::parse(pythonic_literals(s), nullptr, false);
    if (!j.is_discarded()) return j;
    return std::nullopt;
}

/// End of the balanced value starting at `open`, honoring strings.
std::optional<std::size_t> balanced_end(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{' || c == '[') ++depth;
        else if (c == '}' || c == ']') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::nullopt;
}

}  // namespace

Json extract_json_block(std::string_view text) {
    for (std::size_t pos = text.find("```"); pos != std::string_view::npos;) {
        auto body = pos + 3;
        // Skip an info string such as "json" on the fence line.
        while (body < text.size() && std::isalpha(static_cast<unsigned char>(text[body]))) ++body;
        const auto close = text.find("```", body);
        if (close == std::string_view::npos) break;
        if (auto j = try_parse(text.substr(body, close - body)); j && (j->is_object() || j->is_array())) return *j;
        pos = text.find("```", close + 3);
    }
    if (auto j = try_parse(text); j && (j->is_object() || j->is_array())) return *j;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') continue;
        if (auto end = balanced_end(text, i))
            if (auto j = try_parse(text.substr(i, *end - i))) return *j;
    }
    throw ExtractionError("no parseable JSON block in model output", std::string(text));
}

}  // namespace prefx::llm
