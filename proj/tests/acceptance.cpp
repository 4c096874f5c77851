// Acceptance checks 1-12. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "riskforge/agent.hpp"
#include "riskforge/errors.hpp"
#include "riskforge/eval.hpp"
#include "riskforge/grpo.hpp"
#include "riskforge/oracle.hpp"
#include "riskforge/pipeline.hpp"
#include "riskforge/response.hpp"
#include "riskforge/reward.hpp"
#include "riskforge/trainer.hpp"
#include "riskforge/webenv.hpp"

namespace fs = std::filesystem;
using namespace riskforge;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Env {
  fs::path fixtures;
  fs::path cli;
  fs::path work;
  SiteGraph site;
  std::vector<TaskSpec> tasks;
};

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string fmt(double x) {
  std::ostringstream o;
  o << x;
  return o.str();
}

// ---- 1

Outcome advantages() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  double worst_mean = 0, worst_std = 0;
  bool degenerate_ok = true;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(8);
    for (auto& x : r) x = u(rng);
    if (i % 100 == 0) std::fill(r.begin(), r.end(), r[0]);
    const auto a = group_advantages(r);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / 8;
    double var = 0;
    for (double x : a) var += (x - mean) * (x - mean);
    if (i % 100 == 0) {
      degenerate_ok &= std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; });
      continue;
    }
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(var / 8) - 1.0));
  }
  return {worst_mean < 1e-12 && worst_std < 1e-9 && degenerate_ok,
          "max |mean| " + fmt(worst_mean) + ", max |std-1| " + fmt(worst_std) +
              (degenerate_ok ? ", flat groups all zero" : ", flat groups NOT zero")};
}

// ---- 2

Outcome gradient_check() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    auto policy = rf_test::small_policy(rng, 0.5);
    const auto groups = rf_test::random_groups(rng, policy, 3, 4);
    GrpoConfig c;
    c.kl_coef = 0.04 * static_cast<double>(seed % 3);
    const auto grad = grpo_gradient(groups, policy, c);
    double diff2 = 0, norm2 = 0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double w = policy.params()[k];
      policy.params()[k] = w + h;
      const double up = grpo_objective(groups, policy, c);
      policy.params()[k] = w - h;
      const double down = grpo_objective(groups, policy, c);
      policy.params()[k] = w;
      const double fd = (up - down) / (2 * h);
      diff2 += (grad[k] - fd) * (grad[k] - fd);
      norm2 += grad[k] * grad[k];
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(norm2), 1e-12));
  }
  return {worst < 1e-4, "20 instances, worst relative error " + fmt(worst)};
}

// ---- 3

Outcome zero_objective() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto policy = rf_test::small_policy(rng, 1.0);
    auto groups = rf_test::random_groups(rng, policy, 4, 8);
    for (std::size_t k = 0; k < groups.size(); ++k) {
      groups[k].level_weight = 1.0 + 0.37 * static_cast<double>((seed + k) % 7);
      attach_logprobs(groups[k], policy, policy);
    }
    worst = std::max(worst, std::abs(grpo_objective(groups, policy, GrpoConfig{})));
  }
  // Sums of O(1) terms that cancel: a few ulps.
  return {worst < 1e-13, "max |J| " + fmt(worst)};
}

// ---- 4

Outcome process_curve() {
  bool mono = true, mid = true;
  for (double gamma : {0.0, 0.3, 0.5, 0.7, 1.0}) {
    for (double delta : {0.5, 1.0, 2.0, 4.0, 7.0}) {
      for (std::int64_t n = 2; n <= 30; ++n) {
        for (std::int64_t i = 1; i < n; ++i) {
          mono &= process_weight(i, n, gamma, delta) <= process_weight(i + 1, n, gamma, delta);
        }
        if (n % 2) mid &= process_weight((n + 1) / 2, n, gamma, delta) == gamma + (1 - gamma) / 2;
      }
    }
  }
  const double first = process_weight(1, 7, 0.7, 4), last = process_weight(7, 7, 0.7, 4);
  const bool ends = std::abs(first - (0.7 + 0.3 * sig(-4))) < 1e-12 &&
                    std::abs(last - (0.7 + 0.3 * sig(4))) < 1e-12 &&
                    std::abs(first - 0.70540) < 1e-5 && std::abs(last - 0.99460) < 1e-5;
  return {mono && mid && ends, std::string(mono ? "monotone" : "NOT monotone") +
                                   (mid ? ", exact midpoints" : ", midpoint mismatch") +
                                   ", endpoints " + fmt(first) + " / " + fmt(last)};
}

// ---- 5

Outcome f1_matcher() {
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const Action g = rf_test::random_action(rng);
    Action p = rf_test::random_action(rng);
    if (i % 2 == 0) {
      while (tool_name(p) != tool_name(g)) p = rf_test::random_action(rng);
    }
    if (std::abs(tool_f1(p, g) - rf_test::brute_f1(p, g, 0.5)) > 1e-12) ++mismatches;
  }
  const Action c12 = act::ClickElementByIndex{12, std::nullopt};
  const Action c13 = act::ClickElementByIndex{13, std::nullopt};
  const bool boundary = tool_f1(c13, c12) == 0.5 && tool_match(c13, c12, RewardConfig{}) == 0;
  return {mismatches == 0 && boundary, std::to_string(mismatches) +
                                           " mismatches in 10^4 pairs, F1 = 0.5 " +
                                           (boundary ? "rejected" : "ACCEPTED")};
}

// ---- 6

Outcome bands() {
  bool ok = difficulty_band(5, 5) == Difficulty::Easy && difficulty_band(0, 5) == Difficulty::Difficult;
  for (std::size_t c = 1; c <= 4; ++c) ok &= difficulty_band(c, 5) == Difficulty::Moderate;
  auto step = [](std::size_t tools) {
    StepRecord s;
    s.gold = AgentResponse{"t", "e", "m", "n", std::vector<Action>(tools, act::GoBack{})};
    return s;
  };
  ok &= grade_step_by_rule(step(1)) == Difficulty::Easy;
  ok &= grade_step_by_rule(step(2)) == Difficulty::Moderate;
  ok &= grade_step_by_rule(step(3)) == Difficulty::Difficult;
  ok &= grade_step_by_rule(step(6)) == Difficulty::Difficult;
  return {ok, "k=5 {5,1-4,0} and rule {1,2,>2} bands"};
}

// ---- 7

Outcome composition() {
  RewardConfig c;
  bool ok = std::abs(combined_reward(1, 1, 1, c) - 1.0) < 1e-15;
  ok &= std::abs(combined_reward(1, 0, 0.8, c) - 0.1) < 1e-15;
  ok &= std::abs(combined_reward(1, 0, 0.3, c) - 0.1) < 1e-15;
  const double grid[] = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  for (double f : {0.0, 1.0}) {
    for (double s : grid) {
      for (double t : grid) {
        ok &= std::abs(combined_reward(f, s, t, c) - (0.1 * f + 0.9 * s * t)) < 1e-15;
        // Additive in R_for, linear in each of R_step and theta.
        ok &= std::abs(combined_reward(1, s, t, c) - combined_reward(0, s, t, c) - 0.1) < 1e-15;
        ok &= std::abs(combined_reward(f, s, t, c) + combined_reward(f, 1 - s, t, c) -
                       2 * combined_reward(f, 0.5, t, c)) < 1e-14;
        ok &= std::abs(combined_reward(f, s, t, c) + combined_reward(f, s, 1 - t, c) -
                       2 * combined_reward(f, s, 0.5, c)) < 1e-14;
      }
    }
  }
  return {ok, "(1,1,1) -> " + fmt(combined_reward(1, 1, 1, c)) + ", (1,0,theta) -> " +
                  fmt(combined_reward(1, 0, 0.8, c)) + ", grid linear"};
}

// ---- 8

bool success_within(const Env& e, const TaskSpec& t, const EnvState& s, std::size_t depth,
                    std::size_t& visited) {
  if (depth == 0) return false;
  for (const auto& a : candidate_actions(e.site, t, s)) {
    ++visited;
    const std::vector<Action> one{a};
    const auto r = step(e.site, s, one);
    if (r.state.terminated) {
      if (judge(e.site, t, r.state).success) return true;
      continue;
    }
    if (success_within(e, t, r.state, depth - 1, visited)) return true;
  }
  return false;
}

Outcome oracle_closure(const Env& e) {
  bool ok = true;
  std::string lens;
  std::size_t checked = 0;
  for (const auto& t : e.tasks) {
    const auto traj = gold_trajectory(e.site, t);
    auto s = reset(e.site, t).state;
    std::size_t actions = 0;
    for (const auto& st : traj.steps) {
      s = step(e.site, s, st.gold->action).state;
      actions += st.gold->action.size();
    }
    const auto v = judge(e.site, t, s);
    ok &= v.completed && v.success;
    // Every action sequence one shorter than the oracle's fails.
    std::size_t visited = 0;
    const auto s0 = reset(e.site, t).state;
    if (actions > 1 && success_within(e, t, s0, actions - 1, visited)) ok = false;
    if (visited <= 10000) ++checked;
    lens += (lens.empty() ? "" : " ") + std::to_string(actions);
  }
  return {ok, "all tasks replay to success; oracle lengths " + lens + "; minimality enumerated on " +
                  std::to_string(e.tasks.size()) + " tasks (" + std::to_string(checked) +
                  " under 10^4 expansions)"};
}

// ---- 9

GrpoConfig toy_config(std::uint64_t seed) {
  GrpoConfig g;
  g.learning_rate = 1.0;
  g.group_size = 8;
  g.kl_coef = 0.04;
  g.prior_strength = 6.0;
  g.seed = seed;
  return g;
}

Outcome toy_training(const Env& e) {
  const auto one = training_data_from_site(e.site, {e.tasks.at(0)});
  const RewardConfig rc;
  auto g = toy_config(1);
  g.epochs = 4;
  g.iterations_per_epoch = 50;
  const auto run = train(one, rc, g, "acceptance");
  const double final_reward = run.report.final_mean_reward;

  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = toy_config(seed);
    const auto staged = train(one, rc, c, "acceptance").report;
    c.stage_schedule = StageSchedule::LaterOnly;
    const auto binary = train(one, rc, c, "acceptance").report;
    const double a = staged.epochs.at(0).mean_reward, b = binary.epochs.at(0).mean_reward;
    wins += a > b;
    per_seed += " " + fmt(a) + ">" + fmt(b);
  }
  // One-sided sign test at 5%: 5 of 5 (p = 1/32).
  const bool pass = final_reward > 0.9 && wins == 5;
  return {pass, "200 iterations on " + e.tasks.at(0).id + ": final mean reward " +
                    fmt(final_reward) + "; epoch-1 schedule vs binary wins " +
                    std::to_string(wins) + "/5 (" + per_seed.substr(1) + ")"};
}

// ---- 10

Outcome level_kl(const Env& e) {
  const auto all = training_data_from_site(e.site, e.tasks);
  RewardConfig weighted, flat;
  flat.level_weights = {1.0, 1.0, 1.0};
  int larger = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = toy_config(seed);
    const double a = train(all, weighted, c, "acceptance").report.epochs.at(0).mean_kl;
    const double b = train(all, flat, c, "acceptance").report.epochs.at(0).mean_kl;
    larger += a > b;
    per_seed += " " + fmt(a) + "/" + fmt(b);
  }
  return {larger >= 4, "weighted KL larger in " + std::to_string(larger) + "/5 (" +
                           per_seed.substr(1) + ")"};
}

// ---- 11

std::vector<double> rates(const OfflineResult& r) {
  return {r.easy.rate(), r.moderate.rate(), r.difficult.rate(), r.overall.rate()};
}

Outcome metrics(const Env& e) {
  const auto single = read_trajectories(e.fixtures / "bench_single.jsonl");
  const auto multi = read_trajectories(e.fixtures / "bench_multi.jsonl");
  bool gold_ok = true;
  for (const auto& r : {score_offline_single(gold_predictions(single), single),
                        score_offline_multi(gold_predictions(multi), multi)}) {
    gold_ok &= r.overall.rate() == 1.0;
    for (const auto* l : {&r.easy, &r.moderate, &r.difficult}) gold_ok &= l->n == 0 || l->rate() == 1.0;
  }

  std::mt19937_64 rng(11);
  int raised = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const bool is_multi = trial % 2;
    const auto& b = is_multi ? multi : single;
    auto p = gold_predictions(b);
    auto corrupt = [&](std::vector<PredictionRecord>& ps) {
      const auto i = rng() % ps.size();
      switch (rng() % 3) {
        case 0: ps[i].response_raw_text = "{}"; break;
        case 1: ps.erase(ps.begin() + static_cast<std::ptrdiff_t>(i)); break;
        default: {
          auto parsed = parse_response(ps[i].response_raw_text);
          if (!parsed.ok()) return;
          parsed.response->action.insert(parsed.response->action.begin(), act::Refresh{});
          ps[i].response_raw_text = serialize_response(*parsed.response);
        }
      }
    };
    for (std::size_t k = 0, n = rng() % 3; k < n && !p.empty(); ++k) corrupt(p);
    if (p.empty()) continue;
    auto worse = p;
    corrupt(worse);
    auto score = [&](const std::vector<PredictionRecord>& x) {
      return is_multi ? score_offline_multi(x, b) : score_offline_single(x, b);
    };
    const auto before = rates(score(p)), after = rates(score(worse));
    for (std::size_t k = 0; k < before.size(); ++k) raised += after[k] > before[k];
  }

  const OracleAgent agent(e.site);
  const auto online = run_online(agent, e.site, e.tasks);
  const bool online_ok = online.completion_rate == 1.0 && online.success_rate_unconditional == 1.0 &&
                         online.success_rate_among_completed == 1.0;
  return {gold_ok && online_ok && raised == 0,
          std::string(gold_ok ? "gold scores 100%" : "gold below 100%") +
              (online_ok ? ", oracle online 100%" : ", oracle online below 100%") + ", " +
              std::to_string(raised) + " rate increases in 10^3 corruptions"};
}

// ---- 12

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      out[fs::relative(entry.path(), dir).string()] = read_text_file(entry.path());
    }
  }
  return out;
}

Outcome cli_determinism(const Env& e) {
  const auto F = [&](const char* name) { return quote(e.fixtures / name); };
  const std::string site = " --site " + F("site.json") + " --tasks " + F("tasks.jsonl");
  const std::vector<std::string> commands{
      "score-single --gold " + F("bench_single.jsonl") + " --predictions " +
          F("predictions_single.jsonl") + " --out single.md --emit-breakdown single_steps.jsonl",
      "score-multi --gold " + F("bench_multi.jsonl") + " --predictions " +
          F("predictions_multi.jsonl") + " --out multi.csv --format csv",
      "run-online" + site + " --out online.json --episodes episodes.jsonl --workers 3",
      "train" + site + " --epochs 1 --iterations 5 --eval-samples 8 --seed 3 --workers 2"
          " --out-checkpoint ckpt.json --out-report train.json",
      "train" + site + " --epochs 1 --iterations 5 --eval-samples 8 --seed 3 --resume ckpt.json"
          " --out-checkpoint ckpt2.json --out-report train2.json",
      "run-online" + site + " --agent policy:ckpt2.json --out online_policy.md --format md",
      "run-online" + site + " --agent replay:episodes.jsonl --out online_replay.json",
      "pipeline --in " + F("raw_trajectories.jsonl") + " --config " + F("pipeline.json") +
          " --out curated.jsonl --report pipeline_report.json --workers 2",
      "grade --in curated.jsonl --grader oracle --responder " + F("responder.json") +
          " --k 5 --seed 4 --out graded.jsonl",
      "curves --out process_weight.csv",
      "curves --what training-report --report train2.json --out train_curve.csv",
      "simulate" + site + " --task t05-globex-risk"
          " --actions '[{\"click_element_by_index\":{\"index\":0}}]' --out sim.json",
  };

  fs::remove_all(e.work);
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* run : {"run1", "run2"}) {
    const auto dir = e.work / run;
    fs::create_directories(dir);
    for (const auto& c : commands) {
      const std::string line = "cd " + quote(dir) + " && " + quote(e.cli) + " " + c +
                               " > /dev/null 2>> " + quote(dir / "stderr.log");
      if (std::system(line.c_str()) != 0) return {false, "command failed: riskforge " + c};
    }
    fs::remove(dir / "stderr.log");
    trees.push_back(read_tree(dir));
  }
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : trees[0]) {
    auto it = trees[1].find(name);
    if (it == trees[1].end() || it->second != bytes) {
      if (!differing) first_diff = name;
      ++differing;
    }
  }
  const bool ok = differing == 0 && trees[0].size() == trees[1].size();
  return {ok, std::to_string(commands.size()) + " invocations over all 8 subcommands, " +
                  std::to_string(trees[0].size()) + " artifacts, " + std::to_string(differing) +
                  " differ" + (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"riskforge acceptance checks"};
  Env e;
  app.add_option("--fixtures", e.fixtures, "fixture directory")->required();
  app.add_option("--cli", e.cli, "riskforge executable")->required();
  app.add_option("--work", e.work, "scratch directory")->required();
  std::set<int> only;
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  e.site = load_site(e.fixtures / "site.json");
  e.tasks = load_tasks(e.fixtures / "tasks.jsonl");
  e.cli = fs::absolute(e.cli);
  e.fixtures = fs::absolute(e.fixtures);
  e.work = fs::absolute(e.work);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 = no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "advantage normalization", 1, advantages},
      {2, "GRPO gradient check", 30, gradient_check},
      {3, "zero-objective identity", 0, zero_objective},
      {4, "process-weight curve", 0, process_curve},
      {5, "F1 matcher oracle equivalence", 0, f1_matcher},
      {6, "difficulty bands", 0, bands},
      {7, "reward composition", 0, composition},
      {8, "oracle replay closure", 60, [&] { return oracle_closure(e); }},
      {9, "end-to-end toy training", 300, [&] { return toy_training(e); }},
      {10, "level-reweight KL direction", 600, [&] { return level_kl(e); }},
      {11, "metric degeneracy and monotonicity", 0, [&] { return metrics(e); }},
      {12, "CLI determinism", 0, [&] { return cli_determinism(e); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("threw: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs > c.limit_s) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.limit_s) + " s budget";
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << " (" << timing
              << "): " << o.detail << std::endl;
    failed += !o.pass;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
