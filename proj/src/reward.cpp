#include "riskforge/reward.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "riskforge/text.hpp"

namespace riskforge {

std::string_view to_string(RewardStage s) {
  return s == RewardStage::Early ? "early" : "later";
}

void validate(const RewardConfig& c) {
  if (!(c.alpha >= 0.0) || !(c.beta >= 0.0)) {
    throw std::invalid_argument("alpha and beta must be >= 0");
  }
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1]");
  }
  if (!(c.delta > 0.0)) throw std::invalid_argument("delta must be > 0");
  const auto& w = c.level_weights;
  if (!(w.easy > 0.0 && w.moderate > 0.0 && w.difficult > 0.0)) {
    throw std::invalid_argument("level weights must be > 0");
  }
}

Json breakdown_to_json(const RewardBreakdown& b) {
  Json j = Json::object();
  j["format_r"] = b.format_r;
  j["tool_f1s"] = b.tool_f1s;
  j["tool_matches"] = b.tool_matches;
  j["step_acc"] = b.step_acc;
  j["process_weight"] = b.process_weight;
  j["combined"] = b.combined;
  j["level_weight"] = b.level_weight;
  return j;
}

double token_f1(std::string_view pred, std::string_view gold) {
  const auto p = text::whitespace_tokens(pred);
  const auto g = text::whitespace_tokens(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double multiset_f1(const std::vector<ActionItem>& pred,
                   const std::vector<ActionItem>& gold, double f1_threshold) {
  if (pred.empty() && gold.empty()) return 1.0;
  const std::size_t np = pred.size();
  const std::size_t ng = gold.size();
  std::vector<std::vector<std::size_t>> adj(np);
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      if (pred[i].key != gold[j].key) continue;
      const bool ok = gold[j].token_match
                          ? token_f1(pred[i].value, gold[j].value) > f1_threshold
                          : pred[i].value == gold[j].value;
      if (ok) adj[i].push_back(j);
    }
  }
  // Maximum bipartite matching by augmenting paths.
  std::vector<std::ptrdiff_t> owner(ng, -1);
  std::function<bool(std::size_t, std::vector<char>&)> augment =
      [&](std::size_t i, std::vector<char>& seen) {
        for (auto j : adj[i]) {
          if (seen[j]) continue;
          seen[j] = 1;
          if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]), seen)) {
            owner[j] = static_cast<std::ptrdiff_t>(i);
            return true;
          }
        }
        return false;
      };
  std::size_t matched = 0;
  for (std::size_t i = 0; i < np; ++i) {
    std::vector<char> seen(ng, 0);
    if (augment(i, seen)) ++matched;
  }
  return 2.0 * static_cast<double>(matched) / static_cast<double>(np + ng);
}

double tool_f1(const Action& pred, const Action& gold, double f1_threshold) {
  if (pred.index() != gold.index()) return 0.0;
  return multiset_f1(action_items(pred), action_items(gold), f1_threshold);
}

int tool_match(const Action& pred, const Action& gold, const RewardConfig& c) {
  return tool_f1(pred, gold, c.f1_threshold) > c.f1_threshold ? 1 : 0;
}

double stepwise_accuracy(const std::vector<Action>& pred,
                         const std::vector<Action>& gold, RewardStage stage,
                         const RewardConfig& c) {
  const std::size_t n = std::max(pred.size(), gold.size());
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(pred.size(), gold.size()); ++i) {
    hits += static_cast<std::size_t>(tool_match(pred[i], gold[i], c));
  }
  if (stage == RewardStage::Early) {
    return static_cast<double>(hits) / static_cast<double>(n);
  }
  return (pred.size() == gold.size() && hits == n) ? 1.0 : 0.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double process_weight(std::int64_t i, std::int64_t n, double gamma, double delta,
                      bool normalize_endpoints) {
  if (n <= 1) return 1.0;
  const double position = static_cast<double>(i - 1) / static_cast<double>(n - 1);
  const double x = 2.0 * delta * position - delta;
  double s = sigmoid(x);
  if (normalize_endpoints) {
    const double lo = sigmoid(-delta);
    const double hi = sigmoid(delta);
    s = (s - lo) / (hi - lo);
  }
  return gamma + (1.0 - gamma) * s;
}

double process_weight(std::int64_t i, std::int64_t n, const RewardConfig& c) {
  return process_weight(i, n, c.gamma, c.delta, c.normalize_process_endpoints);
}

double combined_reward(double format_r, double step_acc, double theta,
                       const RewardConfig& c) {
  return c.alpha * format_r + c.beta * theta * step_acc;
}

double level_weight(Difficulty d, const RewardConfig& c) {
  switch (d) {
    case Difficulty::Easy: return c.level_weights.easy;
    case Difficulty::Moderate: return c.level_weights.moderate;
    case Difficulty::Difficult: return c.level_weights.difficult;
    case Difficulty::Ungraded: return 1.0;
  }
  return 1.0;
}

Json reward_config_to_json(const RewardConfig& c) {
  Json j = Json::object();
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["delta"] = c.delta;
  j["f1_threshold"] = c.f1_threshold;
  j["stage"] = to_string(c.stage);
  j["level_weights"] = Json{{"easy", c.level_weights.easy},
                            {"moderate", c.level_weights.moderate},
                            {"difficult", c.level_weights.difficult}};
  j["normalize_process_endpoints"] = c.normalize_process_endpoints;
  j["allow_empty_think"] = c.parse.allow_empty_think;
  return j;
}

RewardBreakdown score_rollout(const StepRecord& gold_step, std::string_view candidate,
                              const RewardConfig& c, Difficulty difficulty) {
  if (!gold_step.gold) throw std::invalid_argument("gold step has no gold response");
  const auto& gold = gold_step.gold->action;
  RewardBreakdown b;
  b.process_weight = process_weight(gold_step.step_index, gold_step.step_count, c);
  b.level_weight = level_weight(difficulty, c);
  auto parsed = parse_response(candidate, c.parse);
  if (parsed.ok()) {
    b.format_r = 1;
    const auto& pred = parsed.response->action;
    const std::size_t n = std::max(pred.size(), gold.size());
    for (std::size_t i = 0; i < n; ++i) {
      double f1 = 0.0;
      if (i < pred.size() && i < gold.size()) f1 = tool_f1(pred[i], gold[i], c.f1_threshold);
      b.tool_f1s.push_back(f1);
      b.tool_matches.push_back(f1 > c.f1_threshold ? 1 : 0);
    }
    b.step_acc = stepwise_accuracy(pred, gold, c.stage, c);
  }
  b.combined = combined_reward(b.format_r, b.step_acc, b.process_weight, c);
  return b;
}

}  // namespace riskforge
