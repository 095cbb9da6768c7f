#include "prefx/llm/template.hpp"

#include "prefx/util/error.hpp"

#include <algorithm>

namespace prefx::llm {

namespace {

struct Tag {
    std::size_t begin;  // position of "{{"
    std::size_t end;    // one past "}}"
    char kind;          // '#', '/' or 0 for a value
    std::string name;
};

std::optional<Tag> next_tag(std::string_view t, std::size_t from) {
    const auto open = t.find("{{", from);
    if (open == std::string_view::npos) return std::nullopt;
    const auto close = t.find("}}", open + 2);
    if (close == std::string_view::npos) throw TemplateError("template: unterminated tag");
    Tag tag{open, close + 2, 0, std::string(t.substr(open + 2, close - open - 2))};
    if (!tag.name.empty() && (tag.name[0] == '#' || tag.name[0] == '/')) {
        tag.kind = tag.name[0];
        tag.name.erase(0, 1);
    }
    if (tag.name.empty()) throw TemplateError("template: empty tag");
    return tag;
}

/// Widens a section tag to its whole line when nothing else shares the line.
std::pair<std::size_t, std::size_t> standalone_span(std::string_view t, const Tag& tag) {
    const auto line_start = tag.begin == 0 ? 0 : t.rfind('\n', tag.begin - 1) + 1;
    const auto line_end = t.find('\n', tag.end);
    const auto before = t.substr(line_start, tag.begin - line_start);
    const auto after = t.substr(tag.end, (line_end == std::string_view::npos ? t.size() : line_end) - tag.end);
    auto blank = [](std::string_view s) {
        return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
    };
    if (blank(before) && blank(after))
        return {line_start, line_end == std::string_view::npos ? t.size() : line_end + 1};
    return {tag.begin, tag.end};
}

/// Values inside a disabled section are not required, so `emit` gates lookups.
void render_into(std::string_view t, const TemplateVars& vars, std::string& out, std::size_t& pos,
                 const std::string* closing, bool emit) {
    while (true) {
        auto tag = next_tag(t, pos);
        if (!tag) {
            if (closing) throw TemplateError("template: section '" + *closing + "' is not closed");
            out.append(t.substr(pos));
            pos = t.size();
            return;
        }
        if (tag->kind == 0) {
            out.append(t.substr(pos, tag->begin - pos));
            pos = tag->end;
            if (!emit) continue;
            auto it = vars.values.find(tag->name);
            if (it == vars.values.end()) throw TemplateError("template: no value for " + tag->name);
            if (it->second.empty()) throw TemplateError("template: empty value for " + tag->name);
            out += it->second;
            continue;
        }
        const auto [span_begin, span_end] = standalone_span(t, *tag);
        out.append(t.substr(pos, span_begin - pos));
        pos = span_end;
        if (tag->kind == '/') {
            if (!closing || *closing != tag->name)
                throw TemplateError("template: unexpected close of section '" + tag->name + "'");
            return;
        }
        const bool on = emit && vars.flags.count(tag->name) > 0;
        std::string inner;
        render_into(t, vars, inner, pos, &tag->name, on);
        if (on) out += inner;
    }
}

}  // namespace

std::string render(std::string_view tmpl, const TemplateVars& vars) {
    std::string out;
    std::size_t pos = 0;
    render_into(tmpl, vars, out, pos, nullptr, true);
    return out;
}

std::string_view prompt_asset(std::string_view name) {
    for (const auto& [n, text] : detail::embedded_assets())
        if (n == name) return text;
    throw LookupError("no prompt asset named " + std::string(name));
}

std::vector<std::string> prompt_asset_names() {
    std::vector<std::string> names;
    for (const auto& [n, text] : detail::embedded_assets()) names.emplace_back(n);
    return names;
}

std::string render_asset(std::string_view name, const TemplateVars& vars) {
    return render(prompt_asset(name), vars);
}

}  // namespace prefx::llm
