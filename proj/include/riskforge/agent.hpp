#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "riskforge/eval.hpp"
#include "riskforge/trainer.hpp"

namespace riskforge {

// Plays the oracle's shortest solution, one gold response per agent step.
class OracleAgent : public Agent {
 public:
  explicit OracleAgent(const SiteGraph& site) : site_(site) {}
  std::string name() const override { return "oracle"; }
  std::unique_ptr<AgentSession> start(const TaskSpec& task, std::uint64_t seed) const override;

 private:
  const SiteGraph& site_;
};

// Greedy decoding of a trained toy policy. The prompt for step k of task t
// is "t#k"; pages the policy was not trained on raise an error, which ends
// the episode.
class PolicyAgent : public Agent {
 public:
  explicit PolicyAgent(Checkpoint checkpoint, std::size_t length_cap = 16);
  std::string name() const override { return "policy"; }
  std::unique_ptr<AgentSession> start(const TaskSpec& task, std::uint64_t seed) const override;

  // Raw response for one prompt id; throws Error for unknown ids.
  std::string respond(const std::string& prompt) const;

 private:
  Checkpoint checkpoint_;
  std::size_t length_cap_;
  std::map<std::string, std::size_t> contexts_;
};

// Re-sends the responses of logged episodes. A logged agent error is raised
// again at the same point.
class ReplayAgent : public Agent {
 public:
  explicit ReplayAgent(std::vector<EpisodeLog> episodes);
  std::string name() const override { return "replay"; }
  std::unique_ptr<AgentSession> start(const TaskSpec& task, std::uint64_t seed) const override;

 private:
  std::map<std::string, EpisodeLog> episodes_;
};

// Always answers with the same raw text.
class ConstantAgent : public Agent {
 public:
  ConstantAgent(std::string name, std::string raw) : name_(std::move(name)), raw_(std::move(raw)) {}
  std::string name() const override { return name_; }
  std::unique_ptr<AgentSession> start(const TaskSpec& task, std::uint64_t seed) const override;

 private:
  std::string name_;
  std::string raw_;
};

}  // namespace riskforge
