#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "riskforge/grpo.hpp"
#include "riskforge/trajectory.hpp"
#include "riskforge/webenv.hpp"

namespace riskforge {

// One training prompt: a gold step the policy has to reproduce. The
// prompt's position in TrainingData::prompts is its policy context.
struct TrainingPrompt {
  std::string id;
  StepRecord step;
  Difficulty difficulty = Difficulty::Ungraded;
  SlotTable slots;
};

struct TrainingData {
  Vocabulary vocab;
  std::vector<TrainingPrompt> prompts;
  std::size_t max_actions = 1;
};

std::string prompt_id(const std::string& trajectory_id, std::int64_t step_index);

// Every step with a gold response becomes a prompt; difficulty comes from
// the tool-count rule.
TrainingData training_data_from_trajectories(const std::vector<Trajectory>& trajectories,
                                             std::size_t int_literals = 10);
// Oracle gold trajectories of every task.
TrainingData training_data_from_site(const SiteGraph& site, const std::vector<TaskSpec>& tasks,
                                     std::size_t int_literals = 10);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based, continues across resumes
  std::size_t epoch = 0;      // 1-based
  RewardStage stage = RewardStage::Early;
  double mean_reward = 0.0;
  double mean_kl = 0.0;    // k3 to the reference policy after the update
  double objective = 0.0;  // after the update, on the iteration's rollouts
};

struct EpochRecord {
  std::size_t epoch = 0;
  RewardStage stage = RewardStage::Early;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double objective = 0.0;
};

struct TrainingReport {
  std::string config_hash;
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;
  // Later-stage reward of fresh samples from the final policy.
  double final_mean_reward = 0.0;
  double final_exact_rate = 0.0;  // fraction of those samples matching gold exactly
};

Json training_report_to_json(const TrainingReport& r);
TrainingReport training_report_from_json(const Json& j);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_hash;
  std::size_t epochs_done = 0;
  std::size_t iterations_done = 0;
  ToyPolicy policy;
  ToyPolicy reference;
  std::vector<std::string> prompt_ids;
  std::vector<SlotTable> slots;
  Json optimizer_state;
};

Json checkpoint_to_json(const Checkpoint& c);
// Throws SchemaError on a malformed or wrong-version checkpoint.
Checkpoint checkpoint_from_json(const Json& j);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainResult {
  TrainingReport report;
  Checkpoint checkpoint;
};

using ProgressFn = std::function<void(const IterationRecord&)>;

// GRPO loop: sample G rollouts per prompt from pi_old, score them with the
// reward of the epoch's stage, normalize within groups, then ascend the
// level-weighted objective. pi_old is refreshed every iteration and the
// reference stays frozen (the initial policy, or the one in `resume`).
// `grpo.epochs` further epochs are run.
TrainResult train(const TrainingData& data, const RewardConfig& reward, const GrpoConfig& grpo,
                  const std::string& config_hash, const Checkpoint* resume = nullptr,
                  const ProgressFn& progress = {});

// Mean later-stage reward (and exact-match rate) of `samples` fresh rollouts
// per prompt.
std::pair<double, double> evaluate_policy(const TrainingData& data, const ToyPolicy& policy,
                                          const RewardConfig& reward, std::size_t samples,
                                          std::uint64_t seed, std::size_t length_cap,
                                          std::size_t workers = 1);

}  // namespace riskforge
