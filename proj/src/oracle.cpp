#include "riskforge/oracle.hpp"

#include <deque>
#include <limits>
#include <set>
#include <unordered_set>

#include "riskforge/errors.hpp"
#include "riskforge/text.hpp"

namespace riskforge {

namespace {

std::string fact_query(const std::string& key) {
  std::string q = key;
  for (char& c : q) {
    if (c == '_') c = ' ';
  }
  return q;
}

bool goal_reached(const TaskSpec& task, const EnvState& s) {
  for (const auto& f : task.required_facts) {
    if (!s.extracted_facts.count(f)) return false;
  }
  return !task.target_url || s.tab().url == *task.target_url;
}

std::string answer_text(const SiteGraph& site, const TaskSpec& task) {
  std::string out;
  for (const auto& f : task.required_facts) {
    if (!out.empty()) out += "; ";
    out += fact_query(f) + ": " + site.fact_value(f).value_or("");
  }
  if (out.empty()) out = "Reached " + task.target_url.value_or("the page");
  return out;
}

}  // namespace

std::vector<Action> candidate_actions(const SiteGraph& site, const TaskSpec& task,
                                      const EnvState& s) {
  std::vector<Action> out;
  if (s.terminated) return out;
  if (goal_reached(task, s)) {
    out.push_back(act::Done{answer_text(site, task), true, {}});
    return out;
  }
  const Tab& tab = s.tab();
  const Page* page = site.find(tab.url);
  if (!page) return out;

  for (const auto& f : task.required_facts) {
    if (s.extracted_facts.count(f)) continue;
    for (const auto& [key, value] : page->facts) {
      if (key == f) out.push_back(act::ExtractStructuredData{fact_query(f), false});
    }
  }

  const auto lo = tab.scroll;
  const auto hi = tab.scroll + site.page_size;
  auto visible_ordinals = [&] {
    std::vector<std::int64_t> v;
    for (std::size_t k = 0; k < page->interactive.size(); ++k) {
      const auto pos = static_cast<std::int64_t>(page->interactive[k]);
      if (pos >= lo && pos < hi) v.push_back(static_cast<std::int64_t>(k));
    }
    return v;
  }();

  for (auto k : visible_ordinals) {
    const auto* el = page->interactive_element(k);
    if ((el->tag == "a" && !el->dead) || (el->tag == "button" && enabled(s, *el))) {
      out.push_back(act::ClickElementByIndex{k, std::nullopt});
    }
  }
  for (auto k : visible_ordinals) {
    const auto* el = page->interactive_element(k);
    if (el->tag != "input" || !el->submit) continue;
    auto it = s.input_values.find({tab.url, k});
    if (it == s.input_values.end() || it->second != el->submit->accept) {
      out.push_back(act::InputText{k, el->submit->accept});
    }
  }
  if (tab.focus) {
    const auto* el = page->interactive_element(*tab.focus);
    if (el && el->submit) out.push_back(act::SendKeys{"Enter"});
  }
  for (auto k : visible_ordinals) {
    const auto* el = page->interactive_element(k);
    if (el->tag != "select") continue;
    auto it = s.input_values.find({tab.url, k});
    for (const auto& o : el->options) {
      if (it == s.input_values.end() || it->second != o) out.push_back(act::SelectDropdownOption{k, o});
    }
  }
  const auto max_start =
      std::max<std::int64_t>(0, static_cast<std::int64_t>(page->elements.size()) - site.page_size);
  if (tab.scroll < max_start) out.push_back(act::Scroll{true, 1.0, std::nullopt});
  if (tab.scroll > 0) out.push_back(act::Scroll{false, 1.0, std::nullopt});

  const auto it = text::loose_tokens(task.instruction);
  const std::set<std::string> instr(it.begin(), it.end());
  for (const auto& e : site.search_index) {
    bool overlap = false;
    for (const auto& t : text::loose_tokens(e.key)) overlap = overlap || instr.count(t);
    if (overlap) out.push_back(act::SearchGoogle{e.key});
  }
  if (!tab.history.empty()) out.push_back(act::GoBack{});
  return out;
}

std::string abstract_key(const EnvState& s) {
  std::string k;
  const Tab& t = s.tab();
  k += t.url;
  k += '\x1f';
  k += std::to_string(t.scroll);
  k += '\x1f';
  k += t.focus ? std::to_string(*t.focus) : "-";
  k += '\x1f';
  for (const auto& h : t.history) k += h + '\x1e';
  k += '\x1f';
  for (const auto& [key, v] : s.input_values) {
    k += key.first + '#' + std::to_string(key.second) + '=' + v + '\x1e';
  }
  k += '\x1f';
  for (const auto& f : s.extracted_facts) k += f + '\x1e';
  k += '\x1f';
  k += std::to_string(s.active_tab) + '/' + std::to_string(s.tabs.size());
  return k;
}

OracleResult oracle_search(const SiteGraph& site, const TaskSpec& task,
                           const OracleOptions& options) {
  struct Node {
    EnvState state;
    std::size_t parent;
    std::optional<Action> via;
    std::size_t depth;
  };
  auto start = reset(site, task).state;
  start.max_steps = std::numeric_limits<std::int64_t>::max();
  std::vector<Node> nodes;
  nodes.push_back({start, 0, std::nullopt, 0});
  std::unordered_set<std::string> seen{abstract_key(start)};
  std::deque<std::size_t> queue{0};

  auto path_to = [&](std::size_t idx) {
    std::vector<Action> rev;
    while (nodes[idx].via) {
      rev.push_back(*nodes[idx].via);
      idx = nodes[idx].parent;
    }
    return std::vector<Action>(rev.rbegin(), rev.rend());
  };

  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop_front();
    const std::size_t depth = nodes[cur].depth;
    const auto cands = candidate_actions(site, task, nodes[cur].state);
    for (const auto& a : cands) {
      if (depth + 1 > options.depth_cap) break;
      const Action one[] = {a};
      auto r = step(site, nodes[cur].state, one);
      if (!r.outcomes.front().ok) continue;
      if (std::holds_alternative<act::Done>(a)) {
        if (!judge(site, task, r.state).success) continue;
        OracleResult out;
        out.actions = path_to(cur);
        out.actions.push_back(a);
        out.states_explored = nodes.size();
        return out;
      }
      if (!seen.insert(abstract_key(r.state)).second) continue;
      if (nodes.size() >= options.state_cap) throw Unsolvable(options.depth_cap);
      nodes.push_back({std::move(r.state), cur, a, depth + 1});
      queue.push_back(nodes.size() - 1);
    }
  }
  throw Unsolvable(options.depth_cap);
}

bool is_page_preserving(const Action& a) {
  return std::holds_alternative<act::ExtractStructuredData>(a) ||
         std::holds_alternative<act::InputText>(a) ||
         std::holds_alternative<act::SelectDropdownOption>(a) ||
         std::holds_alternative<act::Scroll>(a) ||
         std::holds_alternative<act::ScrollToText>(a) ||
         std::holds_alternative<act::Wait>(a) || std::holds_alternative<act::ReadFile>(a);
}

std::vector<std::vector<Action>> group_into_steps(const std::vector<Action>& actions) {
  std::vector<std::vector<Action>> steps;
  std::vector<Action> cur;
  for (const auto& a : actions) {
    cur.push_back(a);
    if (!is_page_preserving(a)) {
      steps.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) steps.push_back(std::move(cur));
  return steps;
}

AgentResponse gold_response(const TaskSpec& task, std::size_t step_index, std::size_t step_count,
                            const std::vector<Action>& actions) {
  AgentResponse r;
  r.think = "Working on: " + task.instruction;
  r.evaluation_previous_goal = step_index == 1 ? "Start - nothing attempted yet"
                                               : "Success - the previous actions completed";
  r.memory = "Step " + std::to_string(step_index) + " of " + std::to_string(step_count) + ".";
  std::string tools;
  for (const auto& a : actions) tools += (tools.empty() ? "" : ", ") + std::string(tool_name(a));
  r.next_goal = "Run " + tools;
  r.action = actions;
  return r;
}

Trajectory gold_trajectory(const SiteGraph& site, const TaskSpec& task,
                           const OracleOptions& options) {
  const auto result = oracle_search(site, task, options);
  const auto steps = group_into_steps(result.actions);
  Trajectory t;
  t.id = task.id;
  t.kind = steps.size() > 1 ? TrajectoryKind::MultiStep : TrajectoryKind::SingleStep;
  t.source = Source::Curated;
  auto [state, dom] = reset(site, task);
  state.max_steps = std::max<std::int64_t>(state.max_steps, static_cast<std::int64_t>(steps.size()));
  for (std::size_t k = 0; k < steps.size(); ++k) {
    StepRecord rec;
    rec.question = task.instruction;
    rec.screenshot_ref = task.id + "/step-" + std::to_string(k + 1) + ".png";
    rec.dom = dom;
    rec.gold = gold_response(task, k + 1, steps.size(), steps[k]);
    t.steps.push_back(std::move(rec));
    auto r = step(site, state, steps[k]);
    state = std::move(r.state);
    dom = std::move(r.snapshot);
  }
  renumber(t);
  return t;
}

}  // namespace riskforge
