#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dlrepro::text {

/// Splits on '\n'. A trailing newline does not produce an empty last line.
std::vector<std::string> split_lines(std::string_view s);

/// Lines [first, last] (1-based, inclusive) of `s`, byte-exact including their newlines.
std::string slice_lines(std::string_view s, int first, int last);

std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool icontains(std::string_view haystack, std::string_view needle);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Removes the common leading whitespace of all non-blank lines.
std::string dedent(std::string_view s);

/// Collapses runs of whitespace into single spaces and trims.
std::string normalize_ws(std::string_view s);

/// Approximate model token count: whitespace-separated words x 1.3, rounded up.
std::size_t approx_tokens(std::string_view s);

/// Numeric literals (integers and decimals) appearing in `s`, in order.
std::vector<std::string> numeric_literals(std::string_view s);

/// Substitutes `{{key}}` placeholders.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& vars);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace dlrepro::text
