#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "riskforge/action.hpp"
#include "riskforge/grpo.hpp"
#include "riskforge/reward.hpp"

namespace rf_test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(RISKFORGE_FIXTURES) / name;
}

// Random valid action drawn from every tool. Strings come from a small word
// pool so that partial token overlaps are common.
inline riskforge::Action random_action(std::mt19937_64& rng) {
  using namespace riskforge;
  static const std::vector<std::string> words{"acme", "ltd", "registration", "number",
                                              "of", "risk", "email", "Enter"};
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto phrase = [&] {
    std::string s;
    const auto n = 1 + pick(4);
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[pick(words.size())];
    return s;
  };
  auto small = [&] { return static_cast<std::int64_t>(pick(3)); };
  switch (pick(kToolCount)) {
    case 0: return act::SearchGoogle{phrase()};
    case 1: {
      std::vector<std::string> files;
      if (pick(2)) files.push_back(phrase());
      return act::Done{phrase(), pick(2) == 1, files};
    }
    case 2: return act::ClickElementByIndex{small(), pick(2) ? std::optional<std::int64_t>(small()) : std::nullopt};
    case 3: return act::Scroll{pick(2) == 1, pick(2) ? 0.5 : 1.0, pick(2) ? std::optional<std::int64_t>(small()) : std::nullopt};
    case 4: return act::SwitchTab{small()};
    case 5: return act::GoBack{};
    case 6: return act::ExtractStructuredData{phrase(), pick(2) == 1};
    case 7: return act::InputText{small(), phrase()};
    case 8: return act::Refresh{};
    case 9: return act::Wait{small()};
    case 10: return act::ScrollToText{phrase()};
    case 11: return act::GoToUrl{"https://x.test/" + std::to_string(pick(3)), pick(2) == 1};
    case 12: return act::ReadFile{"extract_" + std::to_string(pick(3))};
    case 13: return act::SendKeys{pick(2) ? "Enter" : "Tab"};
    default: return act::SelectDropdownOption{small(), phrase()};
  }
}

// Independent token F1: whitespace split, multiset overlap.
inline double ref_token_f1(const std::string& p, const std::string& g) {
  auto split = [](const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  };
  const auto a = split(p), b = split(g);
  if (a.empty() && b.empty()) return 1.0;
  std::map<std::string, int> left;
  for (const auto& w : b) ++left[w];
  int common = 0;
  for (const auto& w : a) {
    if (left[w] > 0) {
      --left[w];
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double pr = double(common) / a.size(), rc = double(common) / b.size();
  return 2 * pr * rc / (pr + rc);
}

// Exhaustive maximum one-to-one matching over every assignment.
inline double brute_f1(const riskforge::Action& pred, const riskforge::Action& gold, double thr) {
  if (riskforge::tool_name(pred) != riskforge::tool_name(gold)) return 0.0;
  const auto p = riskforge::action_items(pred), g = riskforge::action_items(gold);
  if (p.empty() && g.empty()) return 1.0;
  auto ok = [&](const riskforge::ActionItem& x, const riskforge::ActionItem& y) {
    if (x.key != y.key) return false;
    return y.token_match ? ref_token_f1(x.value, y.value) > thr : x.value == y.value;
  };
  std::vector<bool> used(g.size(), false);
  std::function<int(std::size_t)> best = [&](std::size_t i) -> int {
    if (i == p.size()) return 0;
    int m = best(i + 1);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (used[j] || !ok(p[i], g[j])) continue;
      used[j] = true;
      m = std::max(m, 1 + best(i + 1));
      used[j] = false;
    }
    return m;
  };
  return 2.0 * best(0) / double(p.size() + g.size());
}

inline riskforge::ToyPolicy small_policy(std::mt19937_64& rng, double scale) {
  riskforge::ToyPolicy p(riskforge::Vocabulary({"go_back", "click_element_by_index", "index", "0", "1", ";", "<eos>"}), 2, 2);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& w : p.params()) w = n(rng);
  return p;
}

// Random groups with rollouts drawn uniformly over the vocabulary, old and
// reference policies perturbed away from `policy`.
inline std::vector<riskforge::GroupRollouts> random_groups(std::mt19937_64& rng, const riskforge::ToyPolicy& policy,
                                         std::size_t count, std::size_t g) {
  riskforge::ToyPolicy old_p = policy, ref_p = policy;
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& w : old_p.params()) w += n(rng);
  for (auto& w : ref_p.params()) w += n(rng);
  std::vector<riskforge::GroupRollouts> out;
  for (std::size_t k = 0; k < count; ++k) {
    riskforge::GroupRollouts gr;
    gr.prompt_id = "p" + std::to_string(k);
    gr.observation.context = k % policy.num_contexts();
    gr.level_weight = 1.0 + 0.1 * static_cast<double>(k % 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < g; ++i) {
      riskforge::Rollout r;
      const auto len = 1 + rng() % 5;
      for (std::size_t t = 0; t < len; ++t) r.tokens.push_back(rng() % policy.vocabulary().size());
      gr.responses.push_back(r);
      gr.rewards.push_back(u(rng));
    }
    gr.advantages = riskforge::group_advantages(gr.rewards);
    riskforge::attach_logprobs(gr, old_p, ref_p);
    out.push_back(std::move(gr));
  }
  return out;
}

}  // namespace rf_test
