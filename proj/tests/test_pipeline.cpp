#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "helpers.hpp"
#include "riskforge/errors.hpp"
#include "riskforge/pipeline.hpp"
#include "riskforge/response.hpp"

using namespace riskforge;

namespace {

DomSnapshot page(const std::string& url) {
  DomSnapshot d;
  d.url = url;
  d.elements = {DomElement{0, "a", "next", true, {}}};
  return d;
}

StepRecord make_step(std::vector<Action> actions, const std::string& eval = "Start",
                     const std::string& url = "https://x.test/") {
  StepRecord s;
  s.question = "Find the thing.";
  s.dom = page(url);
  s.gold = AgentResponse{"think", eval, "memory", "goal", std::move(actions)};
  return s;
}

Trajectory make(std::string id, std::vector<StepRecord> steps) {
  Trajectory t;
  t.id = std::move(id);
  t.steps = std::move(steps);
  renumber(t);
  return t;
}

const Action kClick0 = act::ClickElementByIndex{0, std::nullopt};
const Action kDone = act::Done{"answer", true, {}};

std::vector<Trajectory> raw() { return read_trajectories(rf_test::fixture("raw_trajectories.jsonl")); }

PipelineConfig fixture_config() {
  return pipeline_config_from_json(Json::parse(read_text_file(rf_test::fixture("pipeline.json"))));
}

}  // namespace

TEST_CASE("filter examples") {
  const auto ok = make("ok", {make_step({kClick0}), make_step({kDone})});
  const auto gave_up = make("gave-up", {make_step({act::Done{"none", false, {}}})});
  const auto open = make("open", {make_step({kClick0})});
  auto broken = ok;
  broken.id = "broken";
  broken.steps[0].gold.reset();
  broken.steps[0].gold_malformed = Json{{"action", "?"}};

  const auto r = filter_trajectories({ok, gave_up, open, broken});
  REQUIRE(r.kept.size() == 1);
  CHECK(r.kept[0].id == "ok");
  REQUIRE(r.dropped.size() == 3);
  CHECK(r.dropped[0].second == DropReason::Unsuccessful);
  CHECK(r.dropped[1].second == DropReason::Unsuccessful);
  CHECK(r.dropped[2].second == DropReason::Incomplete);
}

TEST_CASE("filter on the raw fixture keeps seven") {
  const auto r = filter_trajectories(raw());
  CHECK(r.kept.size() == 7);
  CHECK(r.dropped.size() == 3);
  for (const auto& [t, why] : r.dropped) CHECK(t.id.rfind("raw-bad-", 0) == 0);
}

TEST_CASE("clean collapses repeats on the same page") {
  const auto t = make("rep", {make_step({kClick0}), make_step({kClick0}), make_step({kClick0}),
                              make_step({kDone})});
  const auto c = clean_steps(t, {"Failed"});
  REQUIRE(c.steps.size() == 2);
  CHECK(c.steps[0].gold->action == std::vector<Action>{kClick0});
  CHECK(c.steps[1].gold->action == std::vector<Action>{kDone});
  CHECK(c.steps[1].step_index == 2);
  CHECK(c.steps[1].step_count == 2);

  // Same action on a new page is progress.
  const auto moving = make("mv", {make_step({kClick0}, "Start", "https://x.test/a"),
                                  make_step({kClick0}, "ok", "https://x.test/b"),
                                  make_step({kDone})});
  CHECK(clean_steps(moving, {"Failed"}).steps.size() == 3);
}

TEST_CASE("clean drops steps the next step reports as failed") {
  const auto t = make("fail", {make_step({kClick0}, "Start"),
                               make_step({act::Wait{2}}, "Success - opened"),
                               make_step({kDone}, "Failed - retry")});
  const auto c = clean_steps(t, {"Failed", "Unknown"});
  REQUIRE(c.steps.size() == 2);
  CHECK(c.steps[0].gold->action == std::vector<Action>{kClick0});
  CHECK(c.steps[1].gold->action == std::vector<Action>{kDone});
  CHECK(c.steps[1].gold->evaluation_previous_goal == "Success - opened");
  CHECK_NOTHROW(check_trajectory(c));
}

TEST_CASE("clean is idempotent") {
  for (const auto& t : filter_trajectories(raw()).kept) {
    const auto once = clean_steps(t, {"Failed", "Unknown"});
    CHECK(clean_steps(once, {"Failed", "Unknown"}) == once);
  }
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    std::vector<StepRecord> steps;
    const char* evals[] = {"ok", "Failed - x", "Unknown", "Success"};
    for (std::size_t k = 0, n = 1 + rng() % 6; k < n; ++k) {
      steps.push_back(make_step({rng() % 2 ? kClick0 : Action{act::GoBack{}}}, evals[rng() % 4],
                                "https://x.test/" + std::to_string(rng() % 2)));
    }
    const auto once = clean_steps(make("r", steps), {"Failed", "Unknown"});
    CHECK(clean_steps(once, {"Failed", "Unknown"}) == once);
  }
}

TEST_CASE("refine strips example spans") {
  auto t = make("ex", {make_step({kDone})});
  t.steps[0].question = "Find it <example>click 2</example> now <example>x</example>";
  const std::vector<Delimiters> d{{"<example>", "</example>"}};
  auto r = refine(t, d);
  CHECK_FALSE(r.flagged);
  CHECK(r.trajectory.steps[0].question.find("<example>") == std::string::npos);
  CHECK(r.trajectory.steps[0].question.find("click 2") == std::string::npos);
  CHECK(refine(r.trajectory, d).trajectory == r.trajectory);

  t.steps[0].question = "Find it <example>unclosed";
  r = refine(t, d);
  CHECK(r.flagged);
  CHECK(r.trajectory.steps[0].question == t.steps[0].question);
  CHECK(std::count(r.trajectory.provenance.begin(), r.trajectory.provenance.end(),
                   std::string(kUnbalancedTag)) == 1);

  t.steps[0].question = "Plain question";
  r = refine(t, d);
  CHECK_FALSE(r.flagged);
  CHECK(r.trajectory == t);
}

TEST_CASE("augment") {
  auto t = make("a", {make_step({kDone})});
  t.steps[0].question = "find the quarterly report";
  t.steps[0].screenshot_ref = "shot.png";
  const TemplateTable table{{"find", {"locate"}}, {"quarterly", {"three-monthly"}}};
  const std::vector<AugmentOp> ops{AugmentOp::TemplateParaphrase, AugmentOp::DropScreenshot};

  const auto out = augment({t}, ops, table, 7);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == t);
  std::set<std::string> ids;
  for (const auto& x : out) ids.insert(x.id);
  CHECK(ids.size() == 3);
  const auto para = std::find_if(out.begin(), out.end(), [](const Trajectory& x) {
    return std::count(x.provenance.begin(), x.provenance.end(), std::string(kParaphraseTag));
  });
  REQUIRE(para != out.end());
  CHECK(para->steps[0].question == "locate the three-monthly report");
  CHECK(para->steps[0].gold == t.steps[0].gold);
  const auto shot = std::find_if(out.begin(), out.end(), [](const Trajectory& x) {
    return std::count(x.provenance.begin(), x.provenance.end(), std::string(kNoScreenshotTag));
  });
  REQUIRE(shot != out.end());
  CHECK_FALSE(shot->steps[0].screenshot_ref);

  CHECK(augment(out, ops, table, 7) == out);
  CHECK(paraphrase("nothing to swap", table, 3) == "nothing to swap");
  CHECK(paraphrase("find it", {}, 3) == "find it");
}

TEST_CASE("chain and unchain") {
  auto ts = read_trajectories(rf_test::fixture("bench_multi.jsonl"));
  for (const auto& t : ts) {
    const auto chained = chain_multistep(t.steps, t.id + "-chained", t.difficulty);
    REQUIRE(chained.steps.size() == t.steps.size());
    CHECK(chained.steps[0].question == t.steps[0].question);
    const auto golds = embedded_gold(chained);
    REQUIRE(golds.size() == t.steps.size() - 1);
    for (std::size_t i = 1; i < t.steps.size(); ++i) {
      CHECK(chained.steps[i].question.rfind(serialize_response(*t.steps[i - 1].gold), 0) == 0);
      CHECK(chained.steps[i].question.find(kObservationMarker) != std::string::npos);
      CHECK(golds[i - 1] == *t.steps[i - 1].gold);
    }
    const auto back = unchain(chained);
    REQUIRE(back.size() == t.steps.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].gold == t.steps[i].gold);
      CHECK(back[i].question == t.steps[0].question);
    }
  }
  CHECK_THROWS_AS(chain_multistep({make_step({kDone})}, "one"), TooFewSteps);
}

TEST_CASE("difficulty bands for k = 5") {
  CHECK(difficulty_band(5, 5) == Difficulty::Easy);
  for (std::size_t c = 1; c <= 4; ++c) CHECK(difficulty_band(c, 5) == Difficulty::Moderate);
  CHECK(difficulty_band(0, 5) == Difficulty::Difficult);
}

TEST_CASE("rule grader") {
  CHECK(grade_step_by_rule(make_step({kDone})) == Difficulty::Easy);
  CHECK(grade_step_by_rule(make_step({kClick0, kDone})) == Difficulty::Moderate);
  CHECK(grade_step_by_rule(make_step({kClick0, kClick0, kClick0, kDone})) == Difficulty::Difficult);
  const auto t = make("m", {make_step({kDone}), make_step({kClick0, kDone}), make_step({kDone})});
  CHECK(grade_by_rule(t) == Difficulty::Moderate);
}

TEST_CASE("scripted responder band frequencies") {
  for (double p : {0.5, 0.8}) {
    ScriptedResponder responder({}, p);
    const std::size_t n = 1000, k = 5;
    std::map<Difficulty, double> counts;
    for (std::size_t q = 0; q < n; ++q) {
      const auto t = make("q" + std::to_string(q), {make_step({kClick0})});
      const auto g = grade_difficulty(t, responder, k, q);
      CHECK(g.k == k);
      CHECK(g.level == difficulty_band(g.correct, k));
      counts[g.level] += 1;
    }
    const double easy = std::pow(p, 5), difficult = std::pow(1 - p, 5);
    const std::map<Difficulty, double> expected{{Difficulty::Easy, easy},
                                                {Difficulty::Difficult, difficult},
                                                {Difficulty::Moderate, 1 - easy - difficult}};
    for (const auto& [level, q] : expected) {
      CAPTURE(p);
      CAPTURE(to_string(level));
      CHECK(std::abs(counts[level] - n * q) <= 3 * std::sqrt(n * q * (1 - q)) + 1e-9);
    }
  }
}

TEST_CASE("scripted responder is deterministic and can be forced") {
  const auto t = make("s", {make_step({kClick0})});
  ScriptedResponder always({{"s", 1.0}}, 0.0);
  CHECK(grade_difficulty(t, always, 5, 1).level == Difficulty::Easy);
  ScriptedResponder never({{"s", 0.0}}, 1.0);
  CHECK(grade_difficulty(t, never, 5, 1).level == Difficulty::Difficult);
  ScriptedResponder half({}, 0.5);
  CHECK(grade_difficulty(t, half, 5, 9).correct == grade_difficulty(t, half, 5, 9).correct);
}

TEST_CASE("pipeline report conserves counts") {
  const auto config = fixture_config();
  const auto run = run_pipeline(raw(), config);
  const auto& st = run.report.stages;
  REQUIRE(st.size() == config.stages.size());
  CHECK(st.front().input == 10);
  for (std::size_t i = 0; i < st.size(); ++i) {
    CHECK(st[i].input == st[i].kept + st[i].dropped);
    if (i + 1 < st.size()) CHECK(st[i + 1].input == st[i].kept + st[i].added);
  }
  CHECK(run.report.output == st.back().kept + st.back().added);
  CHECK(run.report.output == run.output.size());
  std::size_t graded = 0;
  for (const auto& [level, n] : run.report.levels) graded += n;
  CHECK(graded == run.output.size());
  CHECK(st[0].kept == 7);
  CHECK(st[1].reasons.at("steps_removed") == 2);
  CHECK(st[2].flagged == 1);
  CHECK(st[3].added == 14);
  CHECK(run.output.size() == 21);
  for (const auto& t : run.output) CHECK_NOTHROW(check_trajectory(t));
}

TEST_CASE("pipeline output does not depend on workers") {
  const auto config = fixture_config();
  const auto a = run_pipeline(raw(), config, nullptr, 1);
  const auto b = run_pipeline(raw(), config, nullptr, 4);
  CHECK(format_trajectories(a.output) == format_trajectories(b.output));
}

TEST_CASE("pipeline config round-trips") {
  const auto c = fixture_config();
  CHECK(pipeline_config_to_json(pipeline_config_from_json(pipeline_config_to_json(c))) ==
        pipeline_config_to_json(c));
  CHECK_THROWS_AS(pipeline_config_from_json(Json{{"stages", {"filter", "polish"}}}), SchemaError);
}
