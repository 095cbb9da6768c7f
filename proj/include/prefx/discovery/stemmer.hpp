#pragma once

#include <set>
#include <string>
#include <string_view>

namespace prefx::discovery {

/// Porter (1980) suffix stripping for a lowercase ASCII word.
std::string porter_stem(std::string_view word);

/// Stems of a concept name: lowercased, punctuation removed, split on
/// whitespace, with "of", "to", "the" and "and" left out.
std::set<std::string> name_stems(std::string_view name);

}  // namespace prefx::discovery
