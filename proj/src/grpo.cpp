#include "riskforge/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "riskforge/errors.hpp"
#include "riskforge/parallel.hpp"

namespace riskforge {

std::string_view to_string(StageSchedule s) {
  switch (s) {
    case StageSchedule::EarlyThenLater: return "schedule";
    case StageSchedule::LaterOnly: return "binary-only";
    case StageSchedule::EarlyOnly: return "stepwise-only";
  }
  return "schedule";
}

std::optional<StageSchedule> stage_schedule_from_string(std::string_view s) {
  if (s == "schedule") return StageSchedule::EarlyThenLater;
  if (s == "binary-only") return StageSchedule::LaterOnly;
  if (s == "stepwise-only") return StageSchedule::EarlyOnly;
  return std::nullopt;
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

std::optional<OptimizerKind> optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  return std::nullopt;
}

Json grpo_config_to_json(const GrpoConfig& c) {
  Json j = Json::object();
  j["group_size"] = c.group_size;
  j["clip_eps"] = c.clip_eps;
  j["kl_coef"] = c.kl_coef;
  j["learning_rate"] = c.learning_rate;
  j["optimizer"] = to_string(c.optimizer);
  j["prior_strength"] = c.prior_strength;
  j["epochs"] = c.epochs;
  j["iterations_per_epoch"] = c.iterations_per_epoch;
  j["updates_per_iteration"] = c.updates_per_iteration;
  j["prompts_per_iteration"] = c.prompts_per_iteration;
  j["stage_schedule"] = to_string(c.stage_schedule);
  j["early_epochs"] = c.early_epochs;
  j["seed"] = c.seed;
  j["length_cap"] = c.length_cap;
  j["eval_samples"] = c.eval_samples;
  return j;
}

void validate(const GrpoConfig& c) {
  if (c.group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (!(c.clip_eps > 0.0 && c.clip_eps < 1.0)) {
    throw std::invalid_argument("clip_eps must lie in (0, 1)");
  }
  if (!(c.kl_coef >= 0.0)) throw std::invalid_argument("kl_coef must be >= 0");
  if (c.iterations_per_epoch == 0 || c.updates_per_iteration == 0) {
    throw std::invalid_argument("iterations_per_epoch and updates_per_iteration must be >= 1");
  }
  if (c.length_cap == 0) throw std::invalid_argument("length_cap must be >= 1");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw std::invalid_argument("learning_rate must be positive");
  }
}

RewardStage stage_for_epoch(const GrpoConfig& c, std::size_t epoch) {
  switch (c.stage_schedule) {
    case StageSchedule::EarlyThenLater:
      return epoch <= c.early_epochs ? RewardStage::Early : RewardStage::Later;
    case StageSchedule::LaterOnly: return RewardStage::Later;
    case StageSchedule::EarlyOnly: return RewardStage::Early;
  }
  return RewardStage::Later;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  const std::size_t g = rewards.size();
  if (g < 2) throw GroupTooSmall(g);
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(g);
  const double sd = std::sqrt(var);
  std::vector<double> out(g, 0.0);
  if (sd < 1e-8) return out;
  for (std::size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

double kl_token(double logp_theta, double logp_ref) {
  const double log_r = logp_ref - logp_theta;
  // expm1 keeps r - ln r - 1 accurate (and non-negative) for r near 1.
  return std::max(0.0, std::expm1(log_r) - log_r);
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

void attach_logprobs(GroupRollouts& g, const ToyPolicy& old_policy,
                     const ToyPolicy& ref_policy) {
  for (auto& r : g.responses) {
    r.logp_old = token_logprob(old_policy, g.observation, r.tokens);
    r.logp_ref = token_logprob(ref_policy, g.observation, r.tokens);
  }
}

namespace {

void check_shapes(const GroupRollouts& g) {
  const auto n = g.responses.size();
  if (g.rewards.size() != n || g.advantages.size() != n) {
    throw ShapeMismatch("group " + g.prompt_id + ": rewards/advantages/responses differ in size");
  }
  for (const auto& r : g.responses) {
    if (r.logp_old.size() != r.tokens.size() || r.logp_ref.size() != r.tokens.size()) {
      throw ShapeMismatch("group " + g.prompt_id + ": log-probabilities do not match tokens");
    }
  }
}

struct GroupTerm {
  double objective = 0.0;
  double kl_sum = 0.0;
  std::size_t tokens = 0;
  std::vector<double> gradient;
};

GroupTerm evaluate_group(const GroupRollouts& g, const ToyPolicy& policy,
                         const GrpoConfig& c, double scale, bool with_gradient) {
  GroupTerm term;
  if (with_gradient) term.gradient.assign(policy.num_params(), 0.0);
  const double inv_g = 1.0 / static_cast<double>(g.responses.size());
  for (std::size_t i = 0; i < g.responses.size(); ++i) {
    const auto& r = g.responses[i];
    if (r.tokens.empty()) continue;
    const auto logp = token_logprob(policy, g.observation, r.tokens);
    const double a = g.advantages[i];
    const double per_token = scale * g.level_weight * inv_g / static_cast<double>(r.tokens.size());
    std::vector<double> coef(r.tokens.size(), 0.0);
    double seq_sum = 0.0;
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      const double ratio = std::exp(logp[t] - r.logp_old[t]);
      const double k3 = kl_token(logp[t], r.logp_ref[t]);
      seq_sum += clipped_surrogate(ratio, a, c.clip_eps) - c.kl_coef * k3;
      term.kl_sum += k3;
      ++term.tokens;
      if (with_gradient) {
        // A > 0: the surrogate is min(rho, 1+eps) * A; A < 0: max(rho, 1-eps) * A.
        // The flat side (and the kink itself) has derivative 0.
        double d_surr = 0.0;
        if ((a > 0.0 && ratio < 1.0 + c.clip_eps) || (a < 0.0 && ratio > 1.0 - c.clip_eps)) {
          d_surr = ratio * a;
        }
        const double ref_ratio = std::exp(r.logp_ref[t] - logp[t]);
        const double d_k3 = 1.0 - ref_ratio;
        coef[t] = per_token * (d_surr - c.kl_coef * d_k3);
      }
    }
    term.objective += per_token * seq_sum;
    if (with_gradient) {
      accumulate_logprob_gradient(policy, g.observation, r.tokens, coef, term.gradient);
    }
  }
  return term;
}

}  // namespace

ObjectiveEvaluation grpo_evaluate(std::span<const GroupRollouts> groups,
                                  const ToyPolicy& policy, const GrpoConfig& c,
                                  bool with_gradient, std::size_t workers) {
  for (const auto& g : groups) check_shapes(g);
  ObjectiveEvaluation out;
  if (with_gradient) out.gradient.assign(policy.num_params(), 0.0);
  if (groups.empty()) return out;
  const double scale = 1.0 / static_cast<double>(groups.size());
  std::vector<GroupTerm> terms(groups.size());
  parallel_for(groups.size(), workers, [&](std::size_t k) {
    terms[k] = evaluate_group(groups[k], policy, c, scale, with_gradient);
  });
  double kl_sum = 0.0;
  std::size_t tokens = 0;
  for (const auto& t : terms) {
    out.objective += t.objective;
    kl_sum += t.kl_sum;
    tokens += t.tokens;
    if (with_gradient) {
      for (std::size_t p = 0; p < out.gradient.size(); ++p) out.gradient[p] += t.gradient[p];
    }
  }
  out.mean_kl = tokens ? kl_sum / static_cast<double>(tokens) : 0.0;
  return out;
}

double grpo_objective(std::span<const GroupRollouts> groups, const ToyPolicy& policy,
                      const GrpoConfig& c) {
  return grpo_evaluate(groups, policy, c, false).objective;
}

std::vector<double> grpo_gradient(std::span<const GroupRollouts> groups,
                                  const ToyPolicy& policy, const GrpoConfig& c) {
  return grpo_evaluate(groups, policy, c, true).gradient;
}

void Sgd::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size()) throw ShapeMismatch("gradient size differs from parameters");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += lr_ * grad[i];
}

Json Sgd::state() const { return Json{{"kind", "sgd"}}; }

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size()) throw ShapeMismatch("gradient size differs from parameters");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] += lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

Json Adam::state() const { return Json{{"kind", "adam"}, {"t", t_}, {"m", m_}, {"v", v_}}; }

void Adam::load_state(const Json& j) {
  t_ = j.at("t").get<std::uint64_t>();
  m_ = j.at("m").get<std::vector<double>>();
  v_ = j.at("v").get<std::vector<double>>();
}

std::unique_ptr<Optimizer> make_optimizer(const GrpoConfig& c) {
  if (c.optimizer == OptimizerKind::Adam) return std::make_unique<Adam>(c.learning_rate);
  return std::make_unique<Sgd>(c.learning_rate);
}

}  // namespace riskforge
