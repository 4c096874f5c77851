#include "riskforge/trainer.hpp"

#include <algorithm>

#include "riskforge/errors.hpp"
#include "riskforge/oracle.hpp"
#include "riskforge/parallel.hpp"
#include "riskforge/pipeline.hpp"

namespace riskforge {

std::string prompt_id(const std::string& trajectory_id, std::int64_t step_index) {
  return trajectory_id + "#" + std::to_string(step_index);
}

TrainingData training_data_from_trajectories(const std::vector<Trajectory>& trajectories,
                                             std::size_t int_literals) {
  TrainingData d;
  d.vocab = action_vocabulary(int_literals);
  for (const auto& t : trajectories) {
    for (const auto& s : t.steps) {
      if (!s.gold) continue;
      TrainingPrompt p;
      p.id = prompt_id(t.id, s.step_index);
      p.step = s;
      p.difficulty = grade_step_by_rule(s);
      p.slots = slots_from_actions(s.gold->action);
      fill_default_slots(p.slots, s.question, s.dom.url);
      d.max_actions = std::max(d.max_actions, s.gold->action.size());
      d.prompts.push_back(std::move(p));
    }
  }
  return d;
}

TrainingData training_data_from_site(const SiteGraph& site, const std::vector<TaskSpec>& tasks,
                                     std::size_t int_literals) {
  std::vector<Trajectory> gold;
  for (const auto& t : tasks) gold.push_back(gold_trajectory(site, t));
  return training_data_from_trajectories(gold, int_literals);
}

// ---------------------------------------------------------------- JSON

Json training_report_to_json(const TrainingReport& r) {
  Json j = Json::object();
  j["schema_version"] = 1;
  j["config_hash"] = r.config_hash;
  Json its = Json::array();
  for (const auto& it : r.iterations) {
    its.push_back(Json{{"iteration", it.iteration},
                       {"epoch", it.epoch},
                       {"stage", to_string(it.stage)},
                       {"mean_reward", it.mean_reward},
                       {"mean_kl", it.mean_kl},
                       {"objective", it.objective}});
  }
  j["iterations"] = std::move(its);
  Json ep = Json::object();
  Json num = Json::array(), stage = Json::array(), rew = Json::array(), kl = Json::array(),
       obj = Json::array();
  for (const auto& e : r.epochs) {
    num.push_back(e.epoch);
    stage.push_back(to_string(e.stage));
    rew.push_back(e.mean_reward);
    kl.push_back(e.mean_kl);
    obj.push_back(e.objective);
  }
  ep["epoch"] = std::move(num);
  ep["stage"] = std::move(stage);
  ep["mean_reward"] = std::move(rew);
  ep["mean_kl"] = std::move(kl);
  ep["objective"] = std::move(obj);
  j["epochs"] = std::move(ep);
  j["final_mean_reward"] = r.final_mean_reward;
  j["final_exact_rate"] = r.final_exact_rate;
  return j;
}

namespace {

RewardStage stage_from(const Json& j) {
  const auto s = j.get<std::string>();
  if (s == "early") return RewardStage::Early;
  if (s == "later") return RewardStage::Later;
  throw SchemaError(0, "stage", "unknown stage " + s);
}

}  // namespace

TrainingReport training_report_from_json(const Json& j) {
  try {
    TrainingReport r;
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& it : j.at("iterations")) {
      IterationRecord rec;
      rec.iteration = it.at("iteration").get<std::size_t>();
      rec.epoch = it.at("epoch").get<std::size_t>();
      rec.stage = stage_from(it.at("stage"));
      rec.mean_reward = it.at("mean_reward").get<double>();
      rec.mean_kl = it.at("mean_kl").get<double>();
      rec.objective = it.at("objective").get<double>();
      r.iterations.push_back(rec);
    }
    const auto& ep = j.at("epochs");
    for (std::size_t i = 0; i < ep.at("epoch").size(); ++i) {
      EpochRecord e;
      e.epoch = ep["epoch"][i].get<std::size_t>();
      e.stage = stage_from(ep.at("stage")[i]);
      e.mean_reward = ep.at("mean_reward")[i].get<double>();
      e.mean_kl = ep.at("mean_kl")[i].get<double>();
      e.objective = ep.at("objective")[i].get<double>();
      r.epochs.push_back(e);
    }
    r.final_mean_reward = j.at("final_mean_reward").get<double>();
    r.final_exact_rate = j.at("final_exact_rate").get<double>();
    return r;
  } catch (const Json::exception& e) {
    throw SchemaError(0, "training report", e.what());
  }
}

Json checkpoint_to_json(const Checkpoint& c) {
  Json j = Json::object();
  j["format"] = "riskforge-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config_hash"] = c.config_hash;
  j["epochs_done"] = c.epochs_done;
  j["iterations_done"] = c.iterations_done;
  j["vocabulary"] = c.policy.vocabulary().tokens();
  j["num_contexts"] = c.policy.num_contexts();
  j["max_actions"] = c.policy.max_actions();
  j["params"] = std::vector<double>(c.policy.params().begin(), c.policy.params().end());
  j["reference_params"] =
      std::vector<double>(c.reference.params().begin(), c.reference.params().end());
  Json prompts = Json::array();
  for (std::size_t i = 0; i < c.prompt_ids.size(); ++i) {
    prompts.push_back(Json{{"id", c.prompt_ids[i]}, {"slots", slots_to_json(c.slots.at(i))}});
  }
  j["prompts"] = std::move(prompts);
  j["optimizer"] = c.optimizer_state;
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "riskforge-checkpoint") {
      throw SchemaError(0, "format", "not a checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw SchemaError(0, "version", "unsupported checkpoint version");
    }
    Checkpoint c;
    c.config_hash = j.at("config_hash").get<std::string>();
    c.epochs_done = j.at("epochs_done").get<std::size_t>();
    c.iterations_done = j.at("iterations_done").get<std::size_t>();
    Vocabulary vocab(j.at("vocabulary").get<std::vector<std::string>>());
    const auto contexts = j.at("num_contexts").get<std::size_t>();
    const auto max_actions = j.at("max_actions").get<std::size_t>();
    c.policy = ToyPolicy(vocab, contexts, max_actions);
    c.reference = ToyPolicy(vocab, contexts, max_actions);
    const auto params = j.at("params").get<std::vector<double>>();
    const auto ref = j.at("reference_params").get<std::vector<double>>();
    if (params.size() != c.policy.num_params() || ref.size() != c.reference.num_params()) {
      throw SchemaError(0, "params", "parameter count does not match the policy shape");
    }
    std::copy(params.begin(), params.end(), c.policy.params().begin());
    std::copy(ref.begin(), ref.end(), c.reference.params().begin());
    for (const auto& p : j.at("prompts")) {
      c.prompt_ids.push_back(p.at("id").get<std::string>());
      c.slots.push_back(slots_from_json(p.at("slots")));
    }
    if (c.prompt_ids.size() != contexts) {
      throw SchemaError(0, "prompts", "prompt count does not match num_contexts");
    }
    c.optimizer_state = j.at("optimizer");
    return c;
  } catch (const Json::exception& e) {
    throw SchemaError(0, "checkpoint", e.what());
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(c).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Json j = Json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw SchemaError(0, path.string(), "not valid JSON");
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------- training

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616cULL;

double score_tokens(const TrainingData& data, const TrainingPrompt& p, const TokenSeq& tokens,
                    const RewardConfig& reward) {
  const auto raw = decode_to_response(data.vocab, tokens, p.slots);
  return score_rollout(p.step, raw, reward, p.difficulty).combined;
}

}  // namespace

std::pair<double, double> evaluate_policy(const TrainingData& data, const ToyPolicy& policy,
                                          const RewardConfig& reward, std::size_t samples,
                                          std::uint64_t seed, std::size_t length_cap,
                                          std::size_t workers) {
  if (data.prompts.empty() || samples == 0) return {0.0, 0.0};
  RewardConfig later = reward;
  later.stage = RewardStage::Later;
  std::vector<std::pair<double, double>> per(data.prompts.size());
  parallel_for(data.prompts.size(), workers, [&](std::size_t k) {
    const auto& p = data.prompts[k];
    const auto gold = encode_actions(data.vocab, p.step.gold->action);
    const auto seqs = sample_group(policy, Observation{k}, samples, mix_seed(seed, kEvalStream, k),
                                   length_cap);
    double sum = 0.0, exact = 0.0;
    for (const auto& s : seqs) {
      sum += score_tokens(data, p, s.tokens, later);
      if (gold && s.tokens == *gold) exact += 1.0;
    }
    per[k] = {sum / static_cast<double>(samples), exact / static_cast<double>(samples)};
  });
  double r = 0.0, e = 0.0;
  for (const auto& [a, b] : per) {
    r += a;
    e += b;
  }
  const auto n = static_cast<double>(data.prompts.size());
  return {r / n, e / n};
}

TrainResult train(const TrainingData& data, const RewardConfig& reward, const GrpoConfig& grpo,
                  const std::string& config_hash, const Checkpoint* resume,
                  const ProgressFn& progress) {
  validate(reward);
  validate(grpo);
  if (data.prompts.empty()) throw std::invalid_argument("no training prompts");
  for (const auto& p : data.prompts) {
    if (!p.step.gold) throw std::invalid_argument("prompt " + p.id + " has no gold response");
  }

  TrainResult out;
  Checkpoint& ck = out.checkpoint;
  auto optimizer = make_optimizer(grpo);
  if (resume) {
    ck = *resume;
    if (ck.prompt_ids.size() != data.prompts.size() || !(ck.policy.vocabulary() == data.vocab)) {
      throw SchemaError(0, "checkpoint", "checkpoint was trained on different prompts");
    }
    for (std::size_t i = 0; i < data.prompts.size(); ++i) {
      if (ck.prompt_ids[i] != data.prompts[i].id) {
        throw SchemaError(0, "checkpoint.prompts", "prompt " + ck.prompt_ids[i] + " does not match");
      }
    }
    if (!ck.optimizer_state.is_null() &&
        ck.optimizer_state.value("kind", "") == std::string(to_string(grpo.optimizer))) {
      optimizer->load_state(ck.optimizer_state);
    }
  } else {
    ck.policy = ToyPolicy(data.vocab, data.prompts.size(), data.max_actions);
    if (grpo.prior_strength != 0.0) apply_grammar_prior(ck.policy, grpo.prior_strength);
    ck.reference = ck.policy;
    for (const auto& p : data.prompts) {
      ck.prompt_ids.push_back(p.id);
      ck.slots.push_back(p.slots);
    }
  }
  ck.config_hash = config_hash;
  out.report.config_hash = config_hash;

  const std::size_t n_prompts = data.prompts.size();
  const std::size_t per_iter =
      grpo.prompts_per_iteration == 0 ? n_prompts : std::min(grpo.prompts_per_iteration, n_prompts);

  for (std::size_t e = 0; e < grpo.epochs; ++e) {
    const std::size_t epoch = ck.epochs_done + 1;
    RewardConfig rc = reward;
    rc.stage = stage_for_epoch(grpo, epoch);
    EpochRecord er{epoch, rc.stage, 0.0, 0.0, 0.0};
    for (std::size_t it = 0; it < grpo.iterations_per_epoch; ++it) {
      const std::size_t global = ck.iterations_done + 1;
      const ToyPolicy old = ck.policy;
      std::vector<std::size_t> chosen(per_iter);
      for (std::size_t k = 0; k < per_iter; ++k) chosen[k] = ((global - 1) * per_iter + k) % n_prompts;

      std::vector<GroupRollouts> groups(per_iter);
      parallel_for(per_iter, grpo.workers, [&](std::size_t k) {
        const std::size_t pi = chosen[k];
        const auto& p = data.prompts[pi];
        auto& g = groups[k];
        g.prompt_id = p.id;
        g.observation = Observation{pi};
        g.level_weight = level_weight(p.difficulty, rc);
        const auto samples = sample_group(old, g.observation, grpo.group_size,
                                          mix_seed(grpo.seed, global, pi), grpo.length_cap);
        for (const auto& s : samples) {
          Rollout r;
          r.tokens = s.tokens;
          r.truncated = s.truncated;
          g.rewards.push_back(score_tokens(data, p, s.tokens, rc));
          g.responses.push_back(std::move(r));
        }
        g.advantages = group_advantages(g.rewards);
        attach_logprobs(g, old, ck.reference);
      });

      for (std::size_t u = 0; u < grpo.updates_per_iteration; ++u) {
        const auto ev = grpo_evaluate(groups, ck.policy, grpo, true, grpo.workers);
        optimizer->step(ck.policy.params(), ev.gradient);
      }
      const auto after = grpo_evaluate(groups, ck.policy, grpo, false, grpo.workers);

      IterationRecord rec;
      rec.iteration = global;
      rec.epoch = epoch;
      rec.stage = rc.stage;
      for (const auto& g : groups) {
        double s = 0.0;
        for (double r : g.rewards) s += r;
        rec.mean_reward += s / static_cast<double>(g.rewards.size());
      }
      rec.mean_reward /= static_cast<double>(groups.size());
      rec.mean_kl = after.mean_kl;
      rec.objective = after.objective;
      out.report.iterations.push_back(rec);
      er.mean_reward += rec.mean_reward;
      er.mean_kl += rec.mean_kl;
      er.objective += rec.objective;
      ck.iterations_done = global;
      if (progress) progress(rec);
    }
    const auto n = static_cast<double>(grpo.iterations_per_epoch);
    er.mean_reward /= n;
    er.mean_kl /= n;
    er.objective /= n;
    out.report.epochs.push_back(er);
    ck.epochs_done = epoch;
  }
  ck.optimizer_state = optimizer->state();
  const auto [final_reward, exact] = evaluate_policy(data, ck.policy, reward, grpo.eval_samples,
                                                     grpo.seed, grpo.length_cap, grpo.workers);
  out.report.final_mean_reward = final_reward;
  out.report.final_exact_rate = exact;
  return out;
}

}  // namespace riskforge
