#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace riskforge {

using Json = nlohmann::ordered_json;

// How a field behaves when the JSON form omits it.
enum class Presence {
  Required,   // must be present and non-null
  Defaulted,  // absent/null takes the struct's default and is materialized
  Optional,   // absent/null stays absent (std::optional)
};

// One struct per tool of the browser action space. Fields are declared in
// the tool schema's order; `fields` visits them in that order and is the
// single source of truth for rendering, decoding and item extraction.
namespace act {

struct SearchGoogle {
  static constexpr std::string_view kName = "search_google";
  std::string query;
  template <class Self, class F>
  static void fields(Self& s, F&& f) { f("query", s.query, Presence::Required); }
  bool operator==(const SearchGoogle&) const = default;
};

struct Done {
  static constexpr std::string_view kName = "done";
  std::string text;
  bool success = false;
  std::vector<std::string> files_to_display;
  template <class Self, class F>
  static void fields(Self& s, F&& f) {
    f("text", s.text, Presence::Required);
    f("success", s.success, Presence::Required);
    f("files_to_display", s.files_to_display, Presence::Defaulted);
  }
  bool operator==(const Done&) const = default;
};

struct ClickElementByIndex {
  static constexpr std::string_view kName = "click_element_by_index";
  std::int64_t index = 0;
  std::optional<std::int64_t> delay;  // milliseconds
  template <class Self, class F>
  static void fields(Self& s, F&& f) {
    f("index", s.index, Presence::Required);
    f("delay", s.delay, Presence::Optional);
  }
  bool operator==(const ClickElementByIndex&) const = default;
};

struct Scroll {
  static constexpr std::string_view kName = "scroll";
  bool down = true;
  double num_pages = 1.0;
  std::optional<std::int64_t> index;
  template <class Self, class F>
  static void fields(Self& s, F&& f) {
    f("down", s.down, Presence::Required);
    f("num_pages", s.num_pages, Presence::Required);
    f("index", s.index, Presence::Optional);
  }
  bool operator==(const Scroll&) const = default;
};

struct SwitchTab {
  static constexpr std::string_view kName = "switch_tab";
  std::int64_t page_id = 0;
  template <class Self, class F>
  static void fields(Self& s, F&& f) { f("page_id", s.page_id, Presence::Required); }
  bool operator==(const SwitchTab&) const = default;
};

struct GoBack {
  static constexpr std::string_view kName = "go_back";
  template <class Self, class F>
  static void fields(Self&, F&&) {}
  bool operator==(const GoBack&) const = default;
};

struct ExtractStructuredData {
  static constexpr std::string_view kName = "extract_structured_data";
  std::string query;
  bool extract_links = false;
  template <class Self, class F>
  static void fields(Self& s, F&& f) {
    f("query", s.query, Presence::Required);
    f("extract_links", s.extract_links, Presence::Required);
  }
  bool operator==(const ExtractStructuredData&) const = default;
};

struct InputText {
  static constexpr std::string_view kName = "input_text";
  std::int64_t index = 0;
  std::string text;
  template <class Self, class F>
  static void fields(Self& s, F&& f) {
    f("index", s.index, Presence::Required);
    f("text", s.text, Presence::Required);
  }
  bool operator==(const InputText&) const = default;
};

struct Refresh {
  static constexpr std::string_view kName = "refresh";
  template <class Self, class F>
  static void fields(Self&, F&&) {}
  bool operator==(const Refresh&) const = default;
};

struct Wait {
  static constexpr std::string_view kName = "wait";
  std::int64_t seconds = 3;
  template <class Self, class F>
  static void fields(Self& s, F&& f) { f("seconds", s.seconds, Presence::Defaulted); }
  bool operator==(const Wait&) const = default;
};

struct ScrollToText {
  static constexpr std::string_view kName = "scroll_to_text";
  std::string text;
  template <class Self, class F>
  static void fields(Self& s, F&& f) { f("text", s.text, Presence::Required); }
  bool operator==(const ScrollToText&) const = default;
};

struct GoToUrl {
  static constexpr std::string_view kName = "go_to_url";
  std::string url;
  bool new_tab = false;
  template <class Self, class F>
  static void fields(Self& s, F&& f) {
    f("url", s.url, Presence::Required);
    f("new_tab", s.new_tab, Presence::Required);
  }
  bool operator==(const GoToUrl&) const = default;
};

struct ReadFile {
  static constexpr std::string_view kName = "read_file";
  std::string file_name;
  template <class Self, class F>
  static void fields(Self& s, F&& f) { f("file_name", s.file_name, Presence::Required); }
  bool operator==(const ReadFile&) const = default;
};

struct SendKeys {
  static constexpr std::string_view kName = "send_keys";
  std::string keys;
  template <class Self, class F>
  static void fields(Self& s, F&& f) { f("keys", s.keys, Presence::Required); }
  bool operator==(const SendKeys&) const = default;
};

struct SelectDropdownOption {
  static constexpr std::string_view kName = "select_dropdown_option";
  std::int64_t index = 0;
  std::string text;
  template <class Self, class F>
  static void fields(Self& s, F&& f) {
    f("index", s.index, Presence::Required);
    f("text", s.text, Presence::Required);
  }
  bool operator==(const SelectDropdownOption&) const = default;
};

}  // namespace act

using Action =
    std::variant<act::SearchGoogle, act::Done, act::ClickElementByIndex,
                 act::Scroll, act::SwitchTab, act::GoBack,
                 act::ExtractStructuredData, act::InputText, act::Refresh,
                 act::Wait, act::ScrollToText, act::GoToUrl, act::ReadFile,
                 act::SendKeys, act::SelectDropdownOption>;

inline constexpr std::size_t kToolCount = std::variant_size_v<Action>;

// Tool names in variant order.
const std::array<std::string_view, kToolCount>& tool_names();

std::string_view tool_name(const Action& a);

// Default-constructed action for a tool name, or nullopt if unknown.
std::optional<Action> make_default_action(std::string_view tool);

// Throws InvalidAction when a value violates the tool schema
// (index/page_id >= 0, num_pages > 0 and finite, seconds >= 0).
void validate(const Action& a);

// Deterministic rendering: name{key=value,...} in schema field order with
// defaults materialized and absent optionals rendered as ∅.
std::string canonicalize(const Action& a);

// Inverse of canonicalize. Throws InvalidAction on malformed input.
Action parse_canonical(std::string_view text);

enum class StringMode {
  Token,  // string values are compared by whitespace-token F1
  Exact,  // string values require exact equality
};

struct ActionItem {
  std::string key;
  std::string value;  // canonical rendering of the value
  bool token_match = false;
  auto operator<=>(const ActionItem&) const = default;
};

inline constexpr std::string_view kNameItemKey = "__name__";

// Multiset of (key, value) items, sorted. The tool name is an item under
// kNameItemKey; absent optionals and an empty files_to_display are omitted.
std::vector<ActionItem> action_items(const Action& a,
                                     StringMode mode = StringMode::Token);

// JSON form used in responses: {"<tool>": {<args>}} with every materialized
// argument written out.
Json action_to_json(const Action& a);

// Failure taxonomy shared by the response parser and trajectory readers.
enum class FailureCode {
  MissingField,
  EmptyField,
  BadActionShape,
  UnknownTool,
  BadArgument,
  NotParseable,
};

std::string_view failure_code_name(FailureCode c);

struct FormatFailure {
  FailureCode code;
  std::string path;
  std::string detail;
  bool operator==(const FormatFailure&) const = default;
};

// Decodes one {"<tool>": {...}} object. Appends every problem found to
// `failures`; returns nullopt iff at least one failure was appended.
std::optional<Action> action_from_json(const Json& j, const std::string& path,
                                       std::vector<FormatFailure>& failures);

// Throwing convenience wrapper.
Action action_from_json(const Json& j);

}  // namespace riskforge
