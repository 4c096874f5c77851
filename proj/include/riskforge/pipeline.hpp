#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "riskforge/reward.hpp"
#include "riskforge/trajectory.hpp"

namespace riskforge {

enum class PipelineStage { Filter, Clean, Refine, Augment, Chain, Grade };
enum class AugmentOp { TemplateParaphrase, DropScreenshot };
enum class GraderKind { Rule, Oracle };

std::string_view to_string(PipelineStage s);
std::optional<PipelineStage> pipeline_stage_from_string(std::string_view s);
std::string_view to_string(AugmentOp op);
std::optional<AugmentOp> augment_op_from_string(std::string_view s);

struct Delimiters {
  std::string open;
  std::string close;
  bool operator==(const Delimiters&) const = default;
};

// Word -> alternatives. Lookup is case-insensitive on whitespace tokens.
using TemplateTable = std::map<std::string, std::vector<std::string>>;

struct PipelineConfig {
  std::vector<PipelineStage> stages{PipelineStage::Filter, PipelineStage::Clean,
                                    PipelineStage::Refine, PipelineStage::Augment,
                                    PipelineStage::Chain,  PipelineStage::Grade};
  std::vector<std::string> failure_markers{"Failed", "Unknown"};
  std::vector<Delimiters> example_delimiters{{"<example>", "</example>"}};
  std::vector<AugmentOp> augment_ops{AugmentOp::TemplateParaphrase, AugmentOp::DropScreenshot};
  TemplateTable templates;
  GraderKind grader = GraderKind::Rule;
  std::size_t grade_k = 5;
  std::uint64_t seed = 0;
  double f1_threshold = 0.5;
};

Json pipeline_config_to_json(const PipelineConfig& c);
// Missing keys keep their defaults. Throws SchemaError.
PipelineConfig pipeline_config_from_json(const Json& j);
TemplateTable template_table_from_json(const Json& j);

// ---- filtering

enum class DropReason { Unsuccessful, Incomplete, Empty };
std::string_view to_string(DropReason r);

struct FilterResult {
  std::vector<Trajectory> kept;
  std::vector<std::pair<Trajectory, DropReason>> dropped;
};

// Keeps a trajectory iff every step has a well-formed gold response and the
// last step's action list ends with done(success=true).
FilterResult filter_trajectories(const std::vector<Trajectory>& raw);

// ---- step cleaning

// Drops steps whose successor's evaluation_previous_goal starts with a
// failure marker (the successor inherits the earliest dropped step's
// evaluation), then collapses consecutive steps with identical canonical
// action lists on the same observed page to the first. Renumbers.
Trajectory clean_steps(const Trajectory& t, const std::vector<std::string>& failure_markers);

// ---- refinement

struct RefineResult {
  Trajectory trajectory;
  bool flagged = false;  // unbalanced markers; trajectory left untouched
};

inline constexpr std::string_view kUnbalancedTag = "flag:unbalanced-markers";

// Strips every open...close span (markers included) from the step questions.
RefineResult refine(const Trajectory& t, const std::vector<Delimiters>& markers);

// ---- augmentation

inline constexpr std::string_view kParaphraseTag = "augment:template_paraphrase";
inline constexpr std::string_view kNoScreenshotTag = "augment:drop_screenshot";

std::string paraphrase(std::string_view question, const TemplateTable& table,
                       std::uint64_t seed);

// Originals are kept; each original gains one variant per op, with a
// derived id and a provenance tag. Augmented samples are not augmented
// again, and variants already present are not duplicated.
std::vector<Trajectory> augment(const std::vector<Trajectory>& samples,
                                const std::vector<AugmentOp>& ops, const TemplateTable& table,
                                std::uint64_t seed);

// ---- multi-step chaining

inline constexpr std::string_view kChainedTag = "chained";
inline constexpr std::string_view kObservationMarker = "\n[observation] ";

std::string observation_ref(const StepRecord& step);

// Every question after the first becomes the previous gold response
// (serialized) followed by the new observation reference. Throws
// TooFewSteps.
Trajectory chain_multistep(const std::vector<StepRecord>& steps, std::string id,
                           Difficulty difficulty = Difficulty::Ungraded);

// Inverse used in tests: the previous gold responses recovered from the
// chained questions, with every question reset to the first step's.
std::vector<StepRecord> unchain(const Trajectory& chained);
// Gold responses embedded in the chained questions (steps 2..n).
std::vector<AgentResponse> embedded_gold(const Trajectory& chained);

// ---- difficulty grading

// Stand-in for the answering model used to grade difficulty.
class GraderOracle {
 public:
  virtual ~GraderOracle() = default;
  // Throws OracleFailure.
  virtual AgentResponse respond(const std::string& sample_id, const StepRecord& step,
                                std::uint64_t seed) = 0;
};

// Answers with the gold response with a fixed per-sample probability and a
// corrupted copy otherwise.
class ScriptedResponder : public GraderOracle {
 public:
  explicit ScriptedResponder(std::map<std::string, double> p_correct, double fallback = 1.0)
      : p_correct_(std::move(p_correct)), fallback_(fallback) {}
  AgentResponse respond(const std::string& sample_id, const StepRecord& step,
                        std::uint64_t seed) override;
  double probability(const std::string& sample_id) const;

 private:
  std::map<std::string, double> p_correct_;
  double fallback_;
};

// Loads {"schema_version":1, "default": p, "samples": {id: p}}.
ScriptedResponder scripted_responder_from_json(const Json& j);

// Band for c correct answers out of k: easy iff c == k, difficult iff
// c/k < 0.2, moderate otherwise.
Difficulty difficulty_band(std::size_t correct, std::size_t k);

struct GradeOutcome {
  Difficulty level = Difficulty::Ungraded;
  std::size_t correct = 0;
  std::size_t k = 0;
};

// Queries the oracle k times; an attempt is correct when every step's
// action list matches gold as a whole (teacher forced).
GradeOutcome grade_difficulty(const Trajectory& sample, GraderOracle& oracle, std::size_t k,
                              std::uint64_t seed, const RewardConfig& matcher = {});

// 1 tool: easy, 2: moderate, more: difficult.
Difficulty grade_step_by_rule(const StepRecord& step);
// Hardest step of the trajectory.
Difficulty grade_by_rule(const Trajectory& t);

// ---- whole pipeline

struct StageReport {
  PipelineStage stage;
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t added = 0;
  std::size_t flagged = 0;
  std::map<std::string, std::size_t> reasons;
};

struct PipelineReport {
  std::vector<StageReport> stages;
  std::map<std::string, std::size_t> levels;  // after grading
  std::size_t output = 0;
};

Json pipeline_report_to_json(const PipelineReport& r);

struct PipelineRun {
  std::vector<Trajectory> output;
  PipelineReport report;
};

// Runs the configured stages in order. Grading by oracle needs `oracle`.
PipelineRun run_pipeline(const std::vector<Trajectory>& raw, const PipelineConfig& c,
                         GraderOracle* oracle = nullptr, std::size_t workers = 1);

}  // namespace riskforge
