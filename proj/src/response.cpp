#include "riskforge/response.hpp"

#include <array>

namespace riskforge {

namespace {

constexpr std::array<std::string_view, 4> kTextFields = {
    "think", "evaluation_previous_goal", "memory", "next_goal"};

std::string* text_field(AgentResponse& r, std::string_view name) {
  if (name == "think") return &r.think;
  if (name == "evaluation_previous_goal") return &r.evaluation_previous_goal;
  if (name == "memory") return &r.memory;
  return &r.next_goal;
}

}  // namespace

ParseResult parse_response_json(const Json& j, const ParseOptions& opts) {
  ParseResult result;
  auto& failures = result.verdict.failures;
  if (!j.is_object()) {
    failures.push_back({FailureCode::NotParseable, "$", "top level is not a JSON object"});
    return result;
  }

  AgentResponse r;
  for (auto name : kTextFields) {
    const std::string key(name);
    auto it = j.find(key);
    if (it == j.end()) {
      failures.push_back({FailureCode::MissingField, key, "field missing"});
      continue;
    }
    if (!it->is_string()) {
      failures.push_back({FailureCode::BadArgument, key, "expected string"});
      continue;
    }
    auto value = it->get<std::string>();
    if (value.empty() && !(name == "think" && opts.allow_empty_think)) {
      failures.push_back({FailureCode::EmptyField, key, "field is empty"});
    }
    *text_field(r, name) = std::move(value);
  }

  auto it = j.find("action");
  if (it == j.end()) {
    failures.push_back({FailureCode::MissingField, "action", "field missing"});
  } else if (!it->is_array()) {
    failures.push_back({FailureCode::BadActionShape, "action", "expected a list"});
  } else if (it->empty()) {
    failures.push_back({FailureCode::EmptyField, "action", "action list is empty"});
  } else {
    for (std::size_t i = 0; i < it->size(); ++i) {
      auto a = action_from_json((*it)[i], "action[" + std::to_string(i) + "]", failures);
      if (a) r.action.push_back(std::move(*a));
    }
  }

  for (const auto& [key, value] : j.items()) {
    if (key != "action" && key != "think" && key != "evaluation_previous_goal" &&
        key != "memory" && key != "next_goal") {
      result.verdict.warnings.push_back("unexpected field '" + key + "'");
    }
  }

  if (failures.empty()) result.response = std::move(r);
  return result;
}

ParseResult parse_response(std::string_view raw, const ParseOptions& opts) {
  auto j = Json::parse(raw.begin(), raw.end(), nullptr, false);
  if (j.is_discarded()) {
    ParseResult result;
    result.verdict.failures.push_back(
        {FailureCode::NotParseable, "$", "not valid JSON"});
    return result;
  }
  return parse_response_json(j, opts);
}

int format_reward(std::string_view raw, const ParseOptions& opts) {
  return parse_response(raw, opts).ok() ? 1 : 0;
}

Json response_to_json(const AgentResponse& r) {
  Json j = Json::object();
  j["think"] = r.think;
  j["evaluation_previous_goal"] = r.evaluation_previous_goal;
  j["memory"] = r.memory;
  j["next_goal"] = r.next_goal;
  Json actions = Json::array();
  for (const auto& a : r.action) actions.push_back(action_to_json(a));
  j["action"] = std::move(actions);
  return j;
}

std::string serialize_response(const AgentResponse& r) {
  return response_to_json(r).dump(-1, ' ', false, Json::error_handler_t::replace);
}

std::string canonical_action_list(const std::vector<Action>& actions) {
  std::string out = "[";
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i) out += ';';
    out += canonicalize(actions[i]);
  }
  return out + "]";
}

}  // namespace riskforge
