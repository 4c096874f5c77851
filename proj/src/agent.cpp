#include "riskforge/agent.hpp"

#include "riskforge/errors.hpp"
#include "riskforge/oracle.hpp"

namespace riskforge {

namespace {

class ScriptSession : public AgentSession {
 public:
  ScriptSession(std::vector<std::string> lines, std::optional<std::string> final_error)
      : lines_(std::move(lines)), final_error_(std::move(final_error)) {}

  std::string respond(const AgentTurn&) override {
    if (next_ < lines_.size()) return lines_[next_++];
    throw Error(final_error_.value_or("no scripted response left"));
  }

 private:
  std::vector<std::string> lines_;
  std::optional<std::string> final_error_;
  std::size_t next_ = 0;
};

class PolicySession : public AgentSession {
 public:
  explicit PolicySession(const PolicyAgent& agent) : agent_(agent) {}
  std::string respond(const AgentTurn& turn) override {
    return agent_.respond(prompt_id(turn.task.id, turn.step_index));
  }

 private:
  const PolicyAgent& agent_;
};

}  // namespace

std::unique_ptr<AgentSession> OracleAgent::start(const TaskSpec& task, std::uint64_t) const {
  const auto plan = oracle_search(site_, task);
  const auto steps = group_into_steps(plan.actions);
  std::vector<std::string> lines;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    lines.push_back(serialize_response(gold_response(task, k + 1, steps.size(), steps[k])));
  }
  return std::make_unique<ScriptSession>(std::move(lines), "oracle plan exhausted");
}

PolicyAgent::PolicyAgent(Checkpoint checkpoint, std::size_t length_cap)
    : checkpoint_(std::move(checkpoint)), length_cap_(length_cap) {
  for (std::size_t i = 0; i < checkpoint_.prompt_ids.size(); ++i) {
    contexts_.emplace(checkpoint_.prompt_ids[i], i);
  }
}

std::string PolicyAgent::respond(const std::string& prompt) const {
  auto it = contexts_.find(prompt);
  if (it == contexts_.end()) throw Error("policy has no prompt " + prompt);
  const auto seq = greedy_decode(checkpoint_.policy, Observation{it->second}, length_cap_);
  return decode_to_response(checkpoint_.policy.vocabulary(), seq, checkpoint_.slots.at(it->second));
}

std::unique_ptr<AgentSession> PolicyAgent::start(const TaskSpec&, std::uint64_t) const {
  return std::make_unique<PolicySession>(*this);
}

ReplayAgent::ReplayAgent(std::vector<EpisodeLog> episodes) {
  for (auto& e : episodes) {
    const auto id = e.task_id;
    episodes_.insert_or_assign(id, std::move(e));
  }
}

std::unique_ptr<AgentSession> ReplayAgent::start(const TaskSpec& task, std::uint64_t) const {
  auto it = episodes_.find(task.id);
  if (it == episodes_.end()) throw Error("no logged episode for task " + task.id);
  std::vector<std::string> lines;
  for (const auto& s : it->second.steps) lines.push_back(s.response_raw_text);
  return std::make_unique<ScriptSession>(std::move(lines), it->second.agent_error);
}

std::unique_ptr<AgentSession> ConstantAgent::start(const TaskSpec&, std::uint64_t) const {
  struct Session : AgentSession {
    std::string raw;
    std::string respond(const AgentTurn&) override { return raw; }
  };
  auto s = std::make_unique<Session>();
  s->raw = raw_;
  return s;
}

}  // namespace riskforge
