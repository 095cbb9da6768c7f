#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace prefx::llm {

/// Values and switches for a prompt template.
///
/// Templates use `{{NAME}}` for substitution and `{{#flag}}...{{/flag}}` for
/// optional text. A section tag alone on its line removes the whole line.
struct TemplateVars {
    std::map<std::string, std::string> values;
    std::set<std::string> flags;

    TemplateVars& set(std::string key, std::string value) {
        values[std::move(key)] = std::move(value);
        return *this;
    }
    TemplateVars& flag(std::string name, bool on = true) {
        if (on) flags.insert(std::move(name));
        return *this;
    }
};

/// Throws TemplateError on a missing value, an unbalanced section, or an empty
/// substituted value.
std::string render(std::string_view tmpl, const TemplateVars& vars);

/// A bundled prompt asset by file name (e.g. "comp.txt"); LookupError if absent.
std::string_view prompt_asset(std::string_view name);
std::vector<std::string> prompt_asset_names();

/// Renders a bundled asset.
std::string render_asset(std::string_view name, const TemplateVars& vars);

namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_assets();
}

}  // namespace prefx::llm
