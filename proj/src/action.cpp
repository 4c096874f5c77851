#include "riskforge/action.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "riskforge/errors.hpp"
#include "riskforge/text.hpp"

namespace riskforge {

namespace {

template <class T>
struct always_false : std::false_type {};

std::string quote(const std::string& s) {
  return Json(s).dump(-1, ' ', false, Json::error_handler_t::replace);
}

template <class T>
std::string render_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return quote(v);
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::int64_t>) {
    return std::to_string(v);
  } else if constexpr (std::is_same_v<T, double>) {
    return text::format_double(v);
  } else if constexpr (std::is_same_v<T, std::optional<std::int64_t>>) {
    return v ? std::to_string(*v) : std::string("\xE2\x88\x85");  // ∅
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    return Json(v).dump(-1, ' ', false, Json::error_handler_t::replace);
  } else {
    static_assert(always_false<T>::value, "unhandled field type");
  }
}

template <class T>
Json value_to_json(const T& v) {
  if constexpr (std::is_same_v<T, std::optional<std::int64_t>>) {
    return v ? Json(*v) : Json(nullptr);
  } else {
    return Json(v);
  }
}

// Decodes one JSON value into a field. Returns an error message or empty.
template <class T>
std::string decode_value(const Json& j, T& out) {
  if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) return "expected string";
    out = j.get<std::string>();
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) return "expected boolean";
    out = j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::int64_t>) {
    if (j.is_number_unsigned()) {
      auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX)) return "integer out of range";
      out = static_cast<std::int64_t>(u);
    } else if (j.is_number_integer()) {
      out = j.get<std::int64_t>();
    } else {
      return "expected integer";
    }
  } else if constexpr (std::is_same_v<T, double>) {
    if (!j.is_number()) return "expected number";
    out = j.get<double>();
  } else if constexpr (std::is_same_v<T, std::optional<std::int64_t>>) {
    if (j.is_null()) {
      out.reset();
      return {};
    }
    std::int64_t v = 0;
    auto err = decode_value(j, v);
    if (!err.empty()) return err;
    out = v;
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    if (!j.is_array()) return "expected list of strings";
    std::vector<std::string> v;
    for (const auto& e : j) {
      if (!e.is_string()) return "expected list of strings";
      v.push_back(e.get<std::string>());
    }
    out = std::move(v);
  } else {
    static_assert(always_false<T>::value, "unhandled field type");
  }
  return {};
}

// Value constraints keyed by field name; shared across tools.
template <class T>
std::string check_value(std::string_view name, const T& v) {
  if constexpr (std::is_same_v<T, std::int64_t>) {
    if ((name == "index" || name == "page_id" || name == "seconds") && v < 0) {
      return std::string(name) + " must be >= 0";
    }
  } else if constexpr (std::is_same_v<T, std::optional<std::int64_t>>) {
    if (name == "index" && v && *v < 0) return "index must be >= 0";
  } else if constexpr (std::is_same_v<T, double>) {
    if (name == "num_pages" && (!std::isfinite(v) || v <= 0.0)) {
      return "num_pages must be a positive finite number";
    }
  }
  return {};
}

template <std::size_t... I>
constexpr std::array<std::string_view, kToolCount> names_impl(
    std::index_sequence<I...>) {
  return {std::variant_alternative_t<I, Action>::kName...};
}

template <std::size_t... I>
std::optional<Action> make_impl(std::string_view tool, std::index_sequence<I...>) {
  std::optional<Action> out;
  ((std::variant_alternative_t<I, Action>::kName == tool
        ? (void)(out = Action(std::variant_alternative_t<I, Action>{}))
        : (void)0),
   ...);
  return out;
}

}  // namespace

const std::array<std::string_view, kToolCount>& tool_names() {
  static constexpr auto names = names_impl(std::make_index_sequence<kToolCount>{});
  return names;
}

std::string_view tool_name(const Action& a) {
  return std::visit([](const auto& t) { return std::decay_t<decltype(t)>::kName; }, a);
}

std::optional<Action> make_default_action(std::string_view tool) {
  return make_impl(tool, std::make_index_sequence<kToolCount>{});
}

void validate(const Action& a) {
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        T::fields(t, [&](std::string_view name, const auto& v, Presence) {
          auto err = check_value(name, v);
          if (!err.empty()) {
            throw InvalidAction(std::string(T::kName) + ": " + err);
          }
        });
      },
      a);
}

std::string canonicalize(const Action& a) {
  validate(a);
  return std::visit(
      [](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        std::string out(T::kName);
        out += '{';
        bool first = true;
        T::fields(t, [&](std::string_view name, const auto& v, Presence) {
          if (!first) out += ',';
          first = false;
          out += name;
          out += '=';
          out += render_value(v);
        });
        out += '}';
        return out;
      },
      a);
}

namespace {

// Scans one canonical value starting at `pos`; returns its JSON form.
Json scan_canonical_value(std::string_view s, std::size_t& pos) {
  static constexpr std::string_view kAbsent = "\xE2\x88\x85";
  if (s.substr(pos, kAbsent.size()) == kAbsent) {
    pos += kAbsent.size();
    return nullptr;
  }
  const std::size_t start = pos;
  if (pos < s.size() && (s[pos] == '"' || s[pos] == '[')) {
    bool in_string = false;
    int depth = 0;
    for (; pos < s.size(); ++pos) {
      const char c = s[pos];
      if (in_string) {
        if (c == '\\') {
          ++pos;
        } else if (c == '"') {
          in_string = false;
          if (depth == 0) {
            ++pos;
            break;
          }
        }
      } else if (c == '"') {
        in_string = true;
      } else if (c == '[') {
        ++depth;
      } else if (c == ']') {
        if (--depth == 0) {
          ++pos;
          break;
        }
      }
    }
  } else {
    while (pos < s.size() && s[pos] != ',' && s[pos] != '}') ++pos;
  }
  auto token = s.substr(start, pos - start);
  auto parsed = Json::parse(token, nullptr, false);
  if (parsed.is_discarded()) {
    throw InvalidAction("malformed canonical value: " + std::string(token));
  }
  return parsed;
}

}  // namespace

Action parse_canonical(std::string_view s) {
  const auto brace = s.find('{');
  if (brace == std::string_view::npos || s.empty() || s.back() != '}') {
    throw InvalidAction("malformed canonical action: " + std::string(s));
  }
  const std::string name(s.substr(0, brace));
  Json args = Json::object();
  std::size_t pos = brace + 1;
  if (s[pos] != '}') {
    while (true) {
      const auto eq = s.find('=', pos);
      if (eq == std::string_view::npos) {
        throw InvalidAction("malformed canonical action: " + std::string(s));
      }
      std::string key(s.substr(pos, eq - pos));
      pos = eq + 1;
      args[key] = scan_canonical_value(s, pos);
      if (pos >= s.size()) {
        throw InvalidAction("malformed canonical action: " + std::string(s));
      }
      if (s[pos] == ',') {
        ++pos;
        continue;
      }
      if (s[pos] == '}' && pos + 1 == s.size()) break;
      throw InvalidAction("malformed canonical action: " + std::string(s));
    }
  }
  Json j = Json::object();
  j[name] = std::move(args);
  return action_from_json(j);
}

std::vector<ActionItem> action_items(const Action& a, StringMode mode) {
  validate(a);
  std::vector<ActionItem> items;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        items.push_back({std::string(kNameItemKey), std::string(T::kName), false});
        T::fields(t, [&](std::string_view name, const auto& v, Presence) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, std::string>) {
            items.push_back({std::string(name), v, mode == StringMode::Token});
          } else if constexpr (std::is_same_v<V, std::optional<std::int64_t>>) {
            if (v) items.push_back({std::string(name), std::to_string(*v), false});
          } else if constexpr (std::is_same_v<V, std::vector<std::string>>) {
            if (!v.empty()) items.push_back({std::string(name), render_value(v), false});
          } else {
            items.push_back({std::string(name), render_value(v), false});
          }
        });
      },
      a);
  std::sort(items.begin(), items.end());
  return items;
}

Json action_to_json(const Action& a) {
  return std::visit(
      [](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        Json args = Json::object();
        T::fields(t, [&](std::string_view name, const auto& v, Presence p) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, std::optional<std::int64_t>>) {
            if (!v && p == Presence::Optional) return;
          }
          args[std::string(name)] = value_to_json(v);
        });
        Json j = Json::object();
        j[std::string(T::kName)] = std::move(args);
        return j;
      },
      a);
}

std::string_view failure_code_name(FailureCode c) {
  switch (c) {
    case FailureCode::MissingField: return "missing_field";
    case FailureCode::EmptyField: return "empty_field";
    case FailureCode::BadActionShape: return "bad_action_shape";
    case FailureCode::UnknownTool: return "unknown_tool";
    case FailureCode::BadArgument: return "bad_argument";
    case FailureCode::NotParseable: return "not_parseable";
  }
  return "unknown";
}

std::optional<Action> action_from_json(const Json& j, const std::string& path,
                                       std::vector<FormatFailure>& failures) {
  if (!j.is_object() || j.size() != 1) {
    failures.push_back({FailureCode::BadActionShape, path,
                        "expected an object with exactly one tool name"});
    return std::nullopt;
  }
  const auto& [tool, args] = *j.items().begin();
  auto action = make_default_action(tool);
  if (!action) {
    failures.push_back({FailureCode::UnknownTool, path + "." + tool,
                        "unknown tool '" + tool + "'"});
    return std::nullopt;
  }
  const std::string tool_path = path + "." + tool;
  if (!args.is_object()) {
    failures.push_back({FailureCode::BadActionShape, tool_path,
                        "arguments must be an object"});
    return std::nullopt;
  }
  const std::size_t before = failures.size();
  std::visit(
      [&](auto& t) {
        using T = std::decay_t<decltype(t)>;
        std::set<std::string> known;
        T::fields(t, [&](std::string_view name, auto& v, Presence p) {
          const std::string key(name);
          known.insert(key);
          auto it = args.find(key);
          if (it == args.end() || it->is_null()) {
            if (p == Presence::Required) {
              failures.push_back({FailureCode::BadArgument, tool_path + "." + key,
                                  "missing required argument"});
            }
            return;
          }
          auto err = decode_value(*it, v);
          if (err.empty()) err = check_value(name, v);
          if (!err.empty()) {
            failures.push_back({FailureCode::BadArgument, tool_path + "." + key, err});
          }
        });
        for (const auto& [key, value] : args.items()) {
          if (!known.count(key)) {
            failures.push_back({FailureCode::BadArgument, tool_path + "." + key,
                                "unknown argument"});
          }
        }
      },
      *action);
  if (failures.size() != before) return std::nullopt;
  return action;
}

Action action_from_json(const Json& j) {
  std::vector<FormatFailure> failures;
  auto a = action_from_json(j, "action", failures);
  if (!a) {
    const auto& f = failures.front();
    throw InvalidAction(f.path + ": " + f.detail);
  }
  return *a;
}

}  // namespace riskforge
