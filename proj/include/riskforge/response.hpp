#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "riskforge/action.hpp"

namespace riskforge {

// One agent turn in the Browser-Use output layout.
struct AgentResponse {
  std::string think;
  std::string evaluation_previous_goal;
  std::string memory;
  std::string next_goal;
  std::vector<Action> action;

  bool operator==(const AgentResponse&) const = default;
};

struct ParseOptions {
  bool allow_empty_think = false;
};

struct FormatVerdict {
  std::vector<FormatFailure> failures;
  // Extra top-level keys: tolerated, reported for diagnostics only.
  std::vector<std::string> warnings;

  bool ok() const { return failures.empty(); }
};

struct ParseResult {
  std::optional<AgentResponse> response;  // set iff verdict.ok()
  FormatVerdict verdict;

  bool ok() const { return response.has_value(); }
};

// Strict parse of raw model output. Never throws; every failure found is
// collected in the verdict.
ParseResult parse_response(std::string_view raw, const ParseOptions& opts = {});

ParseResult parse_response_json(const Json& j, const ParseOptions& opts = {});

// 1 iff the raw text parses into a valid response, else 0.
int format_reward(std::string_view raw, const ParseOptions& opts = {});

Json response_to_json(const AgentResponse& r);

// Compact JSON text; parse_response(serialize_response(r)) == r.
std::string serialize_response(const AgentResponse& r);

// Canonical one-line rendering of the action list, used for equality tests
// on whole lists (step cleaning, deduplication).
std::string canonical_action_list(const std::vector<Action>& actions);

}  // namespace riskforge
