#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace riskforge::text {

// Splits on ASCII whitespace, no other normalization.
std::vector<std::string> whitespace_tokens(std::string_view s);

// ASCII lower-casing; bytes >= 0x80 pass through untouched.
std::string casefold(std::string_view s);

// Case-folded tokens with separators = whitespace and common punctuation
// (, ; ( ) [ ] { } " ' ! ?) and underscores. Used wherever the simulator
// compares free text (search, extraction, answer acceptance).
std::vector<std::string> loose_tokens(std::string_view s);

// True iff every loose token of `needle` occurs among the loose tokens of
// `haystack`. An empty needle is contained in anything.
bool token_contained(std::string_view needle, std::string_view haystack);

// Shortest decimal rendering that round-trips.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace riskforge::text
