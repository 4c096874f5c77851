#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "riskforge/reward.hpp"
#include "riskforge/trajectory.hpp"
#include "riskforge/webenv.hpp"

namespace riskforge {

// ---- prediction files

// One line of a prediction file: {id, step_index?, response_raw_text}.
struct PredictionRecord {
  std::string id;
  std::optional<std::int64_t> step_index;
  std::string response_raw_text;
  bool operator==(const PredictionRecord&) const = default;
};

Json prediction_to_json(const PredictionRecord& p);
std::vector<PredictionRecord> parse_predictions(std::string_view jsonl);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);
std::string format_predictions(const std::vector<PredictionRecord>& ps);

// Serialized gold responses for every step of every sample.
std::vector<PredictionRecord> gold_predictions(const std::vector<Trajectory>& bench);

// ---- offline scoring

struct LevelScore {
  std::size_t n = 0;
  std::size_t correct = 0;
  double rate() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
  bool operator==(const LevelScore&) const = default;
};

struct StepVerdict {
  std::int64_t step_index = 1;
  bool correct = false;
  std::string reason;  // empty, "missing", "format" or "mismatch"
  bool operator==(const StepVerdict&) const = default;
};

struct SampleVerdict {
  std::string id;
  Difficulty difficulty = Difficulty::Ungraded;
  bool correct = false;
  std::string reason;  // first failing step's reason
  std::vector<StepVerdict> steps;
  bool operator==(const SampleVerdict&) const = default;
};

enum class OfflineMode { Single, Multi };
std::string_view to_string(OfflineMode m);

struct OfflineResult {
  OfflineMode mode = OfflineMode::Single;
  LevelScore easy, moderate, difficult, overall;
  std::vector<SampleVerdict> samples;  // bench order
  std::vector<std::string> warnings;
  bool operator==(const OfflineResult&) const = default;
};

// A sample is correct iff its predicted action list matches gold as a
// whole (later-stage binary match). Missing predictions count as wrong and
// are reported as warnings. Ungraded samples are graded by the tool-count
// rule so that every sample lands in a level. Throws SchemaError on
// duplicate predictions or bench samples without gold.
OfflineResult score_offline_single(const std::vector<PredictionRecord>& predictions,
                                   const std::vector<Trajectory>& bench,
                                   const RewardConfig& matcher = {}, std::size_t workers = 1);

// Teacher forced: every step is compared against its own gold response; a
// trajectory succeeds iff all of its steps match.
OfflineResult score_offline_multi(const std::vector<PredictionRecord>& predictions,
                                  const std::vector<Trajectory>& bench,
                                  const RewardConfig& matcher = {}, std::size_t workers = 1);

Json offline_result_to_json(const OfflineResult& r);
OfflineResult offline_result_from_json(const Json& j);

// Per-step reward breakdowns of the predictions (missing ones skipped), as
// JSON lines {id, step_index, breakdown}.
std::string breakdown_lines(const std::vector<PredictionRecord>& predictions,
                            const std::vector<Trajectory>& bench, const RewardConfig& c);

// ---- online evaluation

struct AgentTurn {
  const TaskSpec& task;
  std::int64_t step_index;  // 1-based
  const DomSnapshot& dom;
  const std::vector<ActionOutcome>& last_outcomes;
};

// One episode's conversation with an agent.
class AgentSession {
 public:
  virtual ~AgentSession() = default;
  // Raw response text for the current page. May throw.
  virtual std::string respond(const AgentTurn& turn) = 0;
};

// Agents are shared across concurrent episodes; all per-episode state lives
// in the session.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<AgentSession> start(const TaskSpec& task, std::uint64_t seed) const = 0;
};

struct EpisodeStep {
  std::int64_t step_index = 1;
  std::string response_raw_text;
  bool format_ok = false;
  std::vector<std::string> format_failures;
  std::vector<ActionOutcome> outcomes;
  std::string url_after;
  bool operator==(const EpisodeStep&) const = default;
};

struct EpisodeLog {
  std::string task_id;
  std::vector<EpisodeStep> steps;
  std::optional<std::string> agent_error;
  std::optional<DoneRecord> done;
  std::int64_t steps_used = 0;
  Verdict verdict;
  bool operator==(const EpisodeLog&) const = default;
};

Json episode_to_json(const EpisodeLog& e);
EpisodeLog episode_from_json(const Json& j, std::size_t line = 0);
std::vector<EpisodeLog> parse_episodes(std::string_view jsonl);

struct OnlineOptions {
  std::int64_t max_steps = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct OnlineResult {
  std::string agent;
  std::size_t tasks = 0;
  double completion_rate = 0.0;
  double success_rate_unconditional = 0.0;
  double success_rate_among_completed = 0.0;  // 0 when nothing completed
  std::vector<EpisodeLog> episodes;  // task order
  bool operator==(const OnlineResult&) const = default;
};

// Runs one episode per task: the agent answers each page, malformed output
// wastes the step, and the episode ends at done or the step cap. Agent
// exceptions end the episode as a failure and the run continues.
OnlineResult run_online(const Agent& agent, const SiteGraph& site,
                        const std::vector<TaskSpec>& tasks, const OnlineOptions& options = {});

Json online_result_to_json(const OnlineResult& r);
OnlineResult online_result_from_json(const Json& j);

// ---- reports

enum class ReportFormat { Json, Csv, Markdown };
// Accepts json, csv, markdown, markdown-table and md. Throws UnknownFormat.
ReportFormat report_format_from_string(std::string_view s);

// Every rendering carries the config hash: a field in JSON, a column in CSV
// and a trailing line in markdown.
std::string emit_report(const OfflineResult& r, ReportFormat f, const std::string& label,
                        const std::string& config_hash);
std::string emit_report(const OnlineResult& r, ReportFormat f, const std::string& config_hash);

}  // namespace riskforge
