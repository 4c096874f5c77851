#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "riskforge/errors.hpp"
#include "riskforge/trajectory.hpp"

using namespace riskforge;

TEST_CASE("canonical renderings") {
  CHECK(canonicalize(act::ClickElementByIndex{12, std::nullopt}) ==
        "click_element_by_index{index=12,delay=∅}");
  CHECK(canonicalize(act::Wait{}) == "wait{seconds=3}");
  CHECK(canonicalize(act::Scroll{true, 0.5, std::nullopt}) ==
        "scroll{down=true,num_pages=0.5,index=∅}");
  CHECK(canonicalize(act::Done{"ok", true, {}}) ==
        "done{text=\"ok\",success=true,files_to_display=[]}");
  CHECK(canonicalize(act::GoBack{}) == "go_back{}");
}

TEST_CASE("every tool constructs, canonicalizes and round-trips") {
  CHECK(tool_names().size() == 15);
  for (auto name : tool_names()) {
    auto a = make_default_action(name);
    REQUIRE(a.has_value());
    CHECK(tool_name(*a) == name);
    const auto c = canonicalize(*a);
    CHECK(parse_canonical(c) == *a);
    CHECK(action_from_json(action_to_json(*a)) == *a);
  }
  CHECK_FALSE(make_default_action("click_xy").has_value());
}

TEST_CASE("canonicalization is idempotent on random actions") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto a = rf_test::random_action(rng);
    const auto c = canonicalize(a);
    CHECK(canonicalize(parse_canonical(c)) == c);
    CHECK(action_from_json(action_to_json(a)) == a);
  }
}

TEST_CASE("invariant violations") {
  CHECK_THROWS_AS(validate(act::ClickElementByIndex{-1, std::nullopt}), InvalidAction);
  CHECK_THROWS_AS(validate(act::Scroll{true, 0.0, std::nullopt}), InvalidAction);
  CHECK_THROWS_AS(validate(act::Wait{-2}), InvalidAction);
  CHECK_THROWS_AS(validate(act::SwitchTab{-3}), InvalidAction);
  CHECK_THROWS_AS(canonicalize(act::ClickElementByIndex{-1, std::nullopt}), InvalidAction);
  CHECK_THROWS_AS(parse_canonical("click_element_by_index{index=}"), InvalidAction);
  CHECK_THROWS_AS(parse_canonical("teleport{}"), InvalidAction);
}

TEST_CASE("action items") {
  auto items = action_items(act::ClickElementByIndex{12, std::nullopt});
  REQUIRE(items.size() == 2);
  CHECK(std::count_if(items.begin(), items.end(), [](const ActionItem& i) {
          return i.key == kNameItemKey && i.value == "click_element_by_index";
        }) == 1);
  CHECK(std::count_if(items.begin(), items.end(),
                      [](const ActionItem& i) { return i.key == "index" && i.value == "12"; }) == 1);
  CHECK(action_items(act::GoBack{}).size() == 1);
  CHECK(action_items(act::Done{"ok", true, {}}).size() == 3);
  CHECK(action_items(act::Wait{}).size() == 2);  // default materialized

  const auto token = action_items(act::SearchGoogle{"acme ltd"});
  const auto exact = action_items(act::SearchGoogle{"acme ltd"}, StringMode::Exact);
  CHECK(std::any_of(token.begin(), token.end(), [](const ActionItem& i) { return i.token_match; }));
  CHECK(std::none_of(exact.begin(), exact.end(), [](const ActionItem& i) { return i.token_match; }));
}

TEST_CASE("action items ignore JSON argument order") {
  const auto a = action_from_json(Json::parse(R"({"input_text":{"index":2,"text":"acme"}})"));
  const auto b = action_from_json(Json::parse(R"({"input_text":{"text":"acme","index":2}})"));
  CHECK(action_items(a) == action_items(b));
}

TEST_CASE("action JSON failures") {
  std::vector<FormatFailure> failures;
  CHECK_FALSE(action_from_json(Json::parse(R"({"click_element_by_index":{"x":10,"y":20}})"),
                               "action[0]", failures)
                  .has_value());
  REQUIRE_FALSE(failures.empty());
  CHECK(std::any_of(failures.begin(), failures.end(),
                    [](const FormatFailure& f) { return f.code == FailureCode::BadArgument; }));

  failures.clear();
  CHECK_FALSE(action_from_json(Json::parse(R"({"fly":{}})"), "a", failures).has_value());
  CHECK(failures.front().code == FailureCode::UnknownTool);

  failures.clear();
  CHECK_FALSE(action_from_json(Json::parse(R"({"go_back":{},"refresh":{}})"), "a", failures)
                  .has_value());
  CHECK(failures.front().code == FailureCode::BadActionShape);
}

TEST_CASE("trajectory files") {
  SUBCASE("one line") {
    const auto text = read_text_file(rf_test::fixture("bench_multi.jsonl"));
    CHECK(parse_trajectories(text.substr(0, text.find('\n') + 1)).size() == 1);
  }
  SUBCASE("missing steps reports line 1") {
    try {
      parse_trajectories(R"({"schema_version":1,"id":"x","kind":"single-step","difficulty":"easy","source":"raw"})"
                         "\n");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(e.line() == 1);
      CHECK(e.path().find("steps") != std::string::npos);
    }
  }
  SUBCASE("shipped corpora round-trip byte for byte") {
    for (const char* name : {"raw_trajectories.jsonl", "bench_single.jsonl", "bench_multi.jsonl"}) {
      const auto text = read_text_file(rf_test::fixture(name));
      CHECK(format_trajectories(parse_trajectories(text)) == text);
    }
  }
  SUBCASE("malformed gold is kept verbatim") {
    const auto ts = read_trajectories(rf_test::fixture("raw_trajectories.jsonl"));
    auto it = std::find_if(ts.begin(), ts.end(),
                           [](const Trajectory& t) { return t.id == "raw-bad-malformed"; });
    REQUIRE(it != ts.end());
    CHECK_FALSE(it->steps[1].gold.has_value());
    CHECK(it->steps[1].gold_malformed.has_value());
  }
}

TEST_CASE("trajectory invariants") {
  auto ts = read_trajectories(rf_test::fixture("bench_multi.jsonl"));
  auto t = ts.front();
  CHECK_NOTHROW(check_trajectory(t));
  t.kind = TrajectoryKind::SingleStep;
  CHECK_THROWS_AS(check_trajectory(t), SchemaError);
  renumber(t);
  CHECK(t.kind == TrajectoryKind::MultiStep);
  t.steps[1].step_index = 7;
  CHECK_THROWS_AS(check_trajectory(t), SchemaError);
}

TEST_CASE("snapshot checks") {
  DomSnapshot d;
  d.url = "u";
  d.elements = {DomElement{0, "a", "x", true, {}}, DomElement{2, "a", "y", true, {}}};
  CHECK_THROWS_AS(check_snapshot(d), SchemaError);
  d.elements[1].index = 1;
  CHECK_NOTHROW(check_snapshot(d));
  CHECK(snapshot_from_json(snapshot_to_json(d)) == d);
}
