// Regenerates the data fixtures from fixtures/site.json and fixtures/tasks.jsonl.
// Output is deterministic; tests compare a fresh run against the shipped files.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "riskforge/errors.hpp"
#include "riskforge/eval.hpp"
#include "riskforge/oracle.hpp"
#include "riskforge/pipeline.hpp"
#include "riskforge/response.hpp"
#include "riskforge/trajectory.hpp"
#include "riskforge/webenv.hpp"

namespace fs = std::filesystem;
using namespace riskforge;

namespace {

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Trajectory single_from(const Trajectory& t, std::size_t step) {
  Trajectory out;
  out.id = t.id + "#" + std::to_string(step + 1);
  out.steps.push_back(t.steps.at(step));
  out.source = Source::Curated;
  renumber(out);
  out.difficulty = grade_by_rule(out);
  return out;
}

Trajectory as_bench(Trajectory t) {
  t.source = Source::Curated;
  t.difficulty = grade_by_rule(t);
  return t;
}

// Ten raw trajectories; the last three fail the filter.
std::vector<Trajectory> raw_corpus(const std::map<std::string, Trajectory>& gold) {
  std::vector<Trajectory> out;
  auto take = [&](const std::string& task, const std::string& id) {
    Trajectory t = gold.at(task);
    t.id = id;
    t.source = Source::Raw;
    t.difficulty = Difficulty::Ungraded;
    return t;
  };

  out.push_back(take("t01-review-deadline", "raw-t01"));

  // A wasted wait that the next step reports as failed.
  auto t02 = take("t02-acme-registration", "raw-t02");
  StepRecord wasted = t02.steps[1];
  wasted.gold->action = {act::Wait{2}};
  wasted.gold->next_goal = "Wait for the listing to load";
  t02.steps[1].gold->evaluation_previous_goal = "Failed - the page did not change";
  t02.steps.insert(t02.steps.begin() + 1, wasted);
  renumber(t02);
  out.push_back(t02);

  // Instruction carries an example span.
  auto t03 = take("t03-support-email", "raw-t03");
  for (auto& s : t03.steps) {
    s.question += " <example>scroll, then click index 2</example>";
  }
  out.push_back(t03);

  // The same click logged twice in a row.
  auto t04 = take("t04-acme-license", "raw-t04");
  t04.steps.insert(t04.steps.begin() + 1, t04.steps[1]);
  renumber(t04);
  out.push_back(t04);

  // Unbalanced marker: refine flags it and leaves the text alone.
  auto t05 = take("t05-globex-risk", "raw-t05");
  t05.steps[0].question += " <example>type the company name";
  out.push_back(t05);

  out.push_back(take("t06-open-directory", "raw-t06"));

  auto t01b = take("t01-review-deadline", "raw-t01-alt");
  t01b.steps[0].question = "When does the quarterly merchant review close? Answer with the date.";
  t01b.steps[0].screenshot_ref = "shots/raw-t01-alt-1.png";
  out.push_back(t01b);

  auto failed = take("t03-support-email", "raw-bad-unsuccessful");
  auto& last = failed.steps.back().gold->action.back();
  std::get<act::Done>(last) = act::Done{"could not find the email", false, {}};
  out.push_back(failed);

  auto broken = take("t02-acme-registration", "raw-bad-malformed");
  broken.steps[1].gold.reset();
  broken.steps[1].gold_malformed = Json{{"think", "..."}, {"action", "click the first link"}};
  out.push_back(broken);

  // Log cut off before the final answer.
  auto truncated = take("t04-acme-license", "raw-bad-truncated");
  truncated.steps.pop_back();
  renumber(truncated);
  out.push_back(truncated);
  return out;
}

std::string predictions(const std::vector<Trajectory>& bench,
                        const std::map<std::string, std::string>& overrides) {
  auto preds = gold_predictions(bench);
  for (auto& p : preds) {
    auto key = p.id + (p.step_index ? "@" + std::to_string(*p.step_index) : "");
    if (auto it = overrides.find(key); it != overrides.end()) p.response_raw_text = it->second;
  }
  return format_predictions(preds);
}

std::string with_action(const AgentResponse& gold, std::vector<Action> action) {
  AgentResponse r = gold;
  r.action = std::move(action);
  return serialize_response(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate riskforge data fixtures"};
  fs::path dir = "fixtures";
  app.add_option("--dir", dir, "fixture directory (reads site.json and tasks.jsonl)")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto site = load_site(dir / "site.json");
    const auto tasks = load_tasks(dir / "tasks.jsonl");
    std::map<std::string, Trajectory> gold;
    for (const auto& t : tasks) gold[t.id] = gold_trajectory(site, t);

    write_trajectories(raw_corpus(gold), dir / "raw_trajectories.jsonl");

    // One sample per level; the moderate one is answered wrongly.
    std::vector<Trajectory> single{single_from(gold.at("t02-acme-registration"), 0),
                                   single_from(gold.at("t03-support-email"), 0),
                                   single_from(gold.at("t05-globex-risk"), 2)};
    write_trajectories(single, dir / "bench_single.jsonl");
    auto wrong_click = with_action(
        *single[1].steps[0].gold,
        {act::Scroll{true, 1, std::nullopt}, act::ClickElementByIndex{3, std::nullopt}});
    write_text_file(dir / "predictions_single.jsonl",
                    predictions(single, {{single[1].id, wrong_click}}));

    // Four trajectories, one with a wrong step.
    std::vector<Trajectory> multi;
    for (const auto* id : {"t02-acme-registration", "t03-support-email", "t04-acme-license",
                           "t05-globex-risk"}) {
      multi.push_back(as_bench(gold.at(id)));
    }
    auto wrong_step = with_action(
        *multi[2].steps[2].gold,
        {act::ClickElementByIndex{0, std::nullopt}, act::ClickElementByIndex{1, std::nullopt}});
    write_text_file(dir / "predictions_multi.jsonl",
                    predictions(multi, {{multi[2].id + "@3", wrong_step}}));
    write_trajectories(multi, dir / "bench_multi.jsonl");

    PipelineConfig pc;
    pc.templates = {{"find", {"locate", "look up"}},
                    {"open", {"go to", "navigate to"}},
                    {"quarterly", {"three-monthly"}},
                    {"verify", {"check", "confirm"}},
                    {"when", {"at what date"}}};
    pc.grade_k = 5;
    pc.seed = 7;
    write_text_file(dir / "pipeline.json", dump(pipeline_config_to_json(pc)));

    Json responder = {{"schema_version", 1},
                      {"default", 1.0},
                      {"samples", {{"raw-t02", 0.5}, {"raw-t04", 0.0}, {"raw-t05", 0.6}}}};
    write_text_file(dir / "responder.json", dump(responder));
  } catch (const std::exception& e) {
    std::cerr << "make_fixtures: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
