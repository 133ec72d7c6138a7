#pragma once

#include <string_view>

namespace dlrepro {

/// Data files compiled into the library (prompt templates, bundled taxonomy).
/// Throws Error(InvalidArgument) for an unknown name.
std::string_view asset(std::string_view name);

}  // namespace dlrepro
