#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "riskforge/webenv.hpp"

namespace riskforge {

struct OracleOptions {
  std::size_t depth_cap = 12;
  std::size_t state_cap = 200000;
};

struct OracleResult {
  std::vector<Action> actions;  // ends with a successful done
  std::size_t states_explored = 0;
};

// Candidate actions the search considers in a state, in the fixed order
// done, extract, click, input, send_keys, select, scroll, search, go_back.
// `done` appears only when it would be judged a success.
std::vector<Action> candidate_actions(const SiteGraph& site, const TaskSpec& task,
                                      const EnvState& state);

// State key used for duplicate detection: URL, viewport, history, focus,
// form values and extracted facts.
std::string abstract_key(const EnvState& state);

// Breadth-first search for a shortest successful action sequence. Throws
// Unsolvable when none exists within the depth cap.
OracleResult oracle_search(const SiteGraph& site, const TaskSpec& task,
                           const OracleOptions& options = {});

// Actions that keep the current page; they share an agent step with the
// action that follows them.
bool is_page_preserving(const Action& a);

// Splits an action sequence into agent steps: page-preserving actions are
// batched with the next action.
std::vector<std::vector<Action>> group_into_steps(const std::vector<Action>& actions);

// Gold response for one agent step of an oracle episode.
AgentResponse gold_response(const TaskSpec& task, std::size_t step_index, std::size_t step_count,
                            const std::vector<Action>& actions);

// Oracle episode as a gold trajectory: one step per agent step, each with
// the snapshot observed before it and the task instruction as question.
Trajectory gold_trajectory(const SiteGraph& site, const TaskSpec& task,
                           const OracleOptions& options = {});

}  // namespace riskforge
