#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dlrepro::index {

/// Identifier-aware terms: lowercase, split on non-alphanumerics, underscores
/// and camelCase transitions. Dotted names (`model.fit`) are also kept whole,
/// and so are snake_case identifiers.
std::vector<std::string> tokenize_terms(std::string_view text);

std::map<std::string, int> count_terms(std::string_view text);

}  // namespace dlrepro::index
