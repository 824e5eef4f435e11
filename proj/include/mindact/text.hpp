#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mindact {

// Small string helpers shared by the parser, the textualizers and the metrics.
// All of them are ASCII-case aware only; non-ASCII bytes pass through.

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string trim(std::string_view s);
/// Collapses runs of ASCII whitespace into one space and trims both ends.
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
/// Keeps the first `max_words` whitespace-separated words.
std::string truncate_words(std::string_view s, std::size_t max_words);
/// Cuts to at most `max_bytes` without splitting a UTF-8 sequence.
std::string utf8_prefix(std::string_view s, std::size_t max_bytes);
/// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view s);
/// First `max_chars` code points.
std::string utf8_take(std::string_view s, std::size_t max_chars);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);
/// Lowercased runs of ASCII letters and digits.
std::vector<std::string> alnum_tokens(std::string_view s);
/// Stable 64-bit FNV-1a hash rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view s);

}  // namespace mindact
