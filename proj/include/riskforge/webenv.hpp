#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "riskforge/action.hpp"
#include "riskforge/trajectory.hpp"

namespace riskforge {

inline constexpr int kFixtureSchemaVersion = 1;

struct SubmitSpec {
  std::string accept;  // tokens the input value must contain
  std::string target;
  bool operator==(const SubmitSpec&) const = default;
};

struct Requirement {
  std::int64_t element = 0;  // interactive ordinal on the same page
  std::string value;
  bool operator==(const Requirement&) const = default;
};

// Fixture element. Interactive tags: a, button, input, select.
struct ElementSpec {
  std::string tag;
  std::string text;
  std::optional<std::string> target;    // a, button
  bool dead = false;                    // a: declared external-dead link
  std::optional<SubmitSpec> submit;     // input: submitted by Enter
  std::vector<std::string> options;     // select
  std::optional<Requirement> requires_value;  // button: enabled when satisfied

  bool interactive() const;
  bool operator==(const ElementSpec&) const = default;
};

struct Page {
  std::string url;
  std::string title;
  std::vector<ElementSpec> elements;
  std::vector<std::pair<std::string, std::string>> facts;  // fixture order
  std::vector<std::size_t> interactive;  // ordinal -> element position

  const ElementSpec* interactive_element(std::int64_t ordinal) const;
  std::optional<std::size_t> position_of(std::int64_t ordinal) const;
};

struct SearchEntry {
  std::string key;
  std::vector<std::string> urls;
};

class SiteGraph {
 public:
  std::string start_url;
  std::int64_t page_size = 4;
  std::vector<Page> pages;
  std::vector<SearchEntry> search_index;

  // Rebuilds lookup tables and synthetic search-result pages, then checks
  // referential integrity. Throws FixtureError.
  void finalize();

  const Page* find(const std::string& url) const;
  // Fixture page holding a fact key, or nullptr.
  const Page* page_with_fact(const std::string& key) const;
  std::optional<std::string> fact_value(const std::string& key) const;
  const std::vector<Page>& result_pages() const { return result_pages_; }

 private:
  std::map<std::string, std::size_t> by_url_;
  std::vector<Page> result_pages_;
  std::map<std::string, std::size_t> results_by_url_;
};

std::string results_url(const std::string& search_key);

SiteGraph site_from_json(const Json& j);
Json site_to_json(const SiteGraph& site);
SiteGraph load_site(const std::filesystem::path& path);
std::string format_site(const SiteGraph& site);
void save_site(const SiteGraph& site, const std::filesystem::path& path);

enum class TaskCategory { InformationSearch, WebsiteVerification };

struct TaskSpec {
  std::string id;
  std::string instruction;
  TaskCategory category = TaskCategory::InformationSearch;
  std::vector<std::string> required_facts;
  std::optional<std::string> target_url;
  std::int64_t max_steps = 20;
  bool operator==(const TaskSpec&) const = default;
};

Json task_to_json(const TaskSpec& t);
TaskSpec task_from_json(const Json& j, std::size_t line = 0);
std::vector<TaskSpec> load_tasks(const std::filesystem::path& path);
std::vector<TaskSpec> parse_tasks(std::string_view jsonl);
// Throws FixtureError when a task references facts or pages the site lacks.
void check_task(const SiteGraph& site, const TaskSpec& task);

struct Tab {
  std::string url;
  std::int64_t scroll = 0;  // first visible element position
  std::vector<std::string> history;
  std::optional<std::int64_t> focus;  // interactive ordinal
  bool operator==(const Tab&) const = default;
};

struct DoneRecord {
  std::string text;
  bool success = false;
  bool operator==(const DoneRecord&) const = default;
};

struct EnvState {
  std::vector<Tab> tabs;
  std::size_t active_tab = 0;
  std::map<std::pair<std::string, std::int64_t>, std::string> input_values;
  std::map<std::string, std::string> virtual_files;
  std::int64_t clock = 0;
  std::int64_t step_counter = 0;
  std::int64_t max_steps = 20;
  std::optional<DoneRecord> terminated;
  std::set<std::string> extracted_facts;
  std::int64_t extract_counter = 0;

  const Tab& tab() const { return tabs.at(active_tab); }
  Tab& tab() { return tabs.at(active_tab); }
  bool operator==(const EnvState&) const = default;
};

Json state_to_json(const EnvState& s);
EnvState state_from_json(const Json& j);

struct ActionOutcome {
  std::string tool;
  bool ok = false;
  std::string message;
  bool operator==(const ActionOutcome&) const = default;
};

Json outcome_to_json(const ActionOutcome& o);

struct StepResult {
  EnvState state;
  DomSnapshot snapshot;
  std::vector<ActionOutcome> outcomes;
};

struct ResetResult {
  EnvState state;
  DomSnapshot snapshot;
};

// The simulator is deterministic; the seed only exists for interface parity.
ResetResult reset(const SiteGraph& site, const TaskSpec& task, std::uint64_t seed = 0);

DomSnapshot snapshot(const SiteGraph& site, const EnvState& state);

// Applies the actions in order as one agent step. Per-action failures are
// outcomes that leave the state untouched; actions after `done` are
// discarded. Throws AlreadyTerminated, or Error when the step cap is spent.
StepResult step(const SiteGraph& site, const EnvState& state,
                std::span<const Action> actions);

// False for a button whose required form value is not filled in on the
// active tab's page.
bool enabled(const EnvState& s, const ElementSpec& el);

struct Verdict {
  bool completed = false;
  bool success = false;
  bool operator==(const Verdict&) const = default;
};

Verdict judge(const SiteGraph& site, const TaskSpec& task, const EnvState& final_state);

}  // namespace riskforge
