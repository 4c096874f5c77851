#pragma once

#include <string_view>
#include <vector>

#include "riskforge/action.hpp"
#include "riskforge/response.hpp"
#include "riskforge/trajectory.hpp"

namespace riskforge {

// Which accuracy reward is active: per-tool mean (early) or whole-list
// binary match (later).
enum class RewardStage { Early, Later };

std::string_view to_string(RewardStage s);

struct LevelWeights {
  double easy = 1.0;
  double moderate = 1.1;
  double difficult = 1.2;
};

struct RewardConfig {
  double alpha = 0.1;         // format reward coefficient
  double beta = 0.9;          // accuracy reward coefficient
  double gamma = 0.7;         // process weight of the first step
  double delta = 4.0;         // process weight growth rate
  double f1_threshold = 0.5;  // strict: a tool matches iff F1 > threshold
  RewardStage stage = RewardStage::Early;
  LevelWeights level_weights;
  // Rescale the sigmoid so that the first step weighs exactly gamma and the
  // last exactly 1.
  bool normalize_process_endpoints = false;
  ParseOptions parse;
};

// Throws std::invalid_argument on out-of-range coefficients.
void validate(const RewardConfig& c);

struct RewardBreakdown {
  int format_r = 0;
  std::vector<double> tool_f1s;
  std::vector<int> tool_matches;
  double step_acc = 0.0;
  double process_weight = 1.0;
  double combined = 0.0;
  double level_weight = 1.0;
};

Json breakdown_to_json(const RewardBreakdown& b);
Json reward_config_to_json(const RewardConfig& c);

// Whitespace-token F1 of two strings (multiset overlap). Two empty strings
// score 1.
double token_f1(std::string_view pred, std::string_view gold);

// F1 over two item multisets under a maximum one-to-one matching: items pair
// up iff their keys are equal and their values match (token F1 above the
// threshold for token_match items, exact equality otherwise).
double multiset_f1(const std::vector<ActionItem>& pred,
                   const std::vector<ActionItem>& gold, double f1_threshold);

// Item F1 between two tool calls. Arguments are scoped to their tool, so
// calls to different tools score 0.
double tool_f1(const Action& pred, const Action& gold, double f1_threshold = 0.5);

int tool_match(const Action& pred, const Action& gold, const RewardConfig& c);

// Positional alignment over n = max(|pred|, |gold|). Early: mean of
// per-position matches. Later: 1 iff same length and all positions match.
double stepwise_accuracy(const std::vector<Action>& pred,
                         const std::vector<Action>& gold, RewardStage stage,
                         const RewardConfig& c);

double sigmoid(double x);

// Weight of step i (1-based) in an n-step trajectory. n == 1 gives 1.
double process_weight(std::int64_t i, std::int64_t n, double gamma, double delta,
                      bool normalize_endpoints = false);
double process_weight(std::int64_t i, std::int64_t n, const RewardConfig& c);

double combined_reward(double format_r, double step_acc, double theta,
                       const RewardConfig& c);

double level_weight(Difficulty d, const RewardConfig& c);

RewardBreakdown score_rollout(const StepRecord& gold_step, std::string_view candidate,
                              const RewardConfig& c,
                              Difficulty difficulty = Difficulty::Ungraded);

}  // namespace riskforge
