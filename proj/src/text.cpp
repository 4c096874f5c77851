#include "riskforge/text.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>

namespace riskforge::text {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_loose_separator(char c) {
  switch (c) {
    case ',': case ';': case '(': case ')': case '[': case ']': case '{':
    case '}': case '"': case '\'': case '!': case '?': case '_':
      return true;
    default:
      return is_space(c);
  }
}

// Trailing '.' and ':' are sentence punctuation, not part of the token.
std::string trim_trailing(std::string tok) {
  while (!tok.empty() && (tok.back() == '.' || tok.back() == ':')) {
    tok.pop_back();
  }
  return tok;
}

}  // namespace

std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string casefold(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> loose_tokens(std::string_view s) {
  const std::string folded = casefold(s);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < folded.size()) {
    while (i < folded.size() && is_loose_separator(folded[i])) ++i;
    std::size_t j = i;
    while (j < folded.size() && !is_loose_separator(folded[j])) ++j;
    if (j > i) {
      auto tok = trim_trailing(folded.substr(i, j - i));
      if (!tok.empty()) out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

bool token_contained(std::string_view needle, std::string_view haystack) {
  const auto hay = loose_tokens(haystack);
  const std::set<std::string> bag(hay.begin(), hay.end());
  for (const auto& tok : loose_tokens(needle)) {
    if (!bag.count(tok)) return false;
  }
  return true;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf, 16);
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

}  // namespace riskforge::text
