#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riskforge/reward.hpp"
#include "riskforge/toy_policy.hpp"

namespace riskforge {

enum class StageSchedule {
  EarlyThenLater,  // stepwise accuracy for the first `early_epochs`, then binary
  LaterOnly,       // binary accuracy throughout
  EarlyOnly,       // stepwise accuracy throughout
};

std::string_view to_string(StageSchedule s);
std::optional<StageSchedule> stage_schedule_from_string(std::string_view s);

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind k);
std::optional<OptimizerKind> optimizer_from_string(std::string_view s);

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_eps = 0.2;
  double kl_coef = 0.04;
  double learning_rate = 1e-6;
  std::size_t epochs = 1;
  std::size_t iterations_per_epoch = 50;
  std::size_t updates_per_iteration = 1;
  std::size_t prompts_per_iteration = 0;  // 0 = every prompt each iteration
  StageSchedule stage_schedule = StageSchedule::EarlyThenLater;
  std::size_t early_epochs = 1;
  std::uint64_t seed = 0;
  std::size_t length_cap = 16;
  std::size_t eval_samples = 64;
  std::size_t workers = 1;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  // Strength of the grammar prior the policy (and reference) starts from;
  // 0 starts from the uniform policy.
  double prior_strength = 6.0;
};

Json grpo_config_to_json(const GrpoConfig& c);

// Throws std::invalid_argument (G >= 2, eps in (0,1), kl_coef >= 0).
void validate(const GrpoConfig& c);

// Reward stage active in a 1-based epoch.
RewardStage stage_for_epoch(const GrpoConfig& c, std::size_t epoch);

struct Rollout {
  TokenSeq tokens;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  bool truncated = false;
};

struct GroupRollouts {
  std::string prompt_id;
  Observation observation;
  std::vector<Rollout> responses;
  std::vector<double> rewards;
  std::vector<double> advantages;
  double level_weight = 1.0;
};

// (r_i - mean) / std with the population std; all zeros when std < 1e-8.
// Throws GroupTooSmall for fewer than 2 rewards.
std::vector<double> group_advantages(std::span<const double> rewards);

// k3 estimator r - ln r - 1 with r = pi_ref / pi_theta; always >= 0.
double kl_token(double logp_theta, double logp_ref);

// min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)
double clipped_surrogate(double ratio, double advantage, double eps);

// Fills logp_old / logp_ref of every response.
void attach_logprobs(GroupRollouts& g, const ToyPolicy& old_policy,
                     const ToyPolicy& ref_policy);

struct ObjectiveEvaluation {
  double objective = 0.0;
  std::vector<double> gradient;  // dJ/dW, empty unless requested
  double mean_kl = 0.0;          // mean k3 over every token
};

// J = mean over groups of w * (1/G) sum_i (1/|o_i|) sum_t
//       [ min(rho A_i, clip(rho, 1-eps, 1+eps) A_i) - kl_coef * k3 ]
// with rho = pi_theta / pi_old per token. Per-group contributions are
// reduced in group order, independent of `workers`.
ObjectiveEvaluation grpo_evaluate(std::span<const GroupRollouts> groups,
                                  const ToyPolicy& policy, const GrpoConfig& c,
                                  bool with_gradient, std::size_t workers = 1);

double grpo_objective(std::span<const GroupRollouts> groups, const ToyPolicy& policy,
                      const GrpoConfig& c);
std::vector<double> grpo_gradient(std::span<const GroupRollouts> groups,
                                  const ToyPolicy& policy, const GrpoConfig& c);

// Gradient ascent on the policy parameters.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<double> params, std::span<const double> grad) = 0;
  virtual Json state() const = 0;
  virtual void load_state(const Json& j) = 0;
};

class Sgd : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<double> params, std::span<const double> grad) override;
  Json state() const override;
  void load_state(const Json&) override {}

 private:
  double lr_;
};

class Adam : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::span<double> params, std::span<const double> grad) override;
  Json state() const override;
  void load_state(const Json& j) override;

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const GrpoConfig& c);

}  // namespace riskforge
