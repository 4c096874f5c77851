#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "riskforge/response.hpp"
#include "riskforge/trajectory.hpp"

using namespace riskforge;

namespace {

Json valid_json() {
  return Json::parse(R"({"think":"look for acme","evaluation_previous_goal":"Start",
    "memory":"nothing yet","next_goal":"search",
    "action":[{"search_google":{"query":"acme"}}]})");
}

bool has(const FormatVerdict& v, FailureCode code, const std::string& path_part) {
  return std::any_of(v.failures.begin(), v.failures.end(), [&](const FormatFailure& f) {
    return f.code == code && f.path.find(path_part) != std::string::npos;
  });
}

}  // namespace

TEST_CASE("valid response parses") {
  const auto r = parse_response(valid_json().dump());
  REQUIRE(r.ok());
  REQUIRE(r.response->action.size() == 1);
  CHECK(r.response->action[0] == Action{act::SearchGoogle{"acme"}});
  CHECK(format_reward(valid_json().dump()) == 1);
}

TEST_CASE("missing field") {
  auto j = valid_json();
  j.erase("next_goal");
  const auto r = parse_response(j.dump());
  CHECK_FALSE(r.ok());
  CHECK(has(r.verdict, FailureCode::MissingField, "next_goal"));
}

TEST_CASE("coordinate clicks are bad arguments") {
  auto j = valid_json();
  j["action"] = Json::parse(R"([{"click_element_by_index":{"x":10,"y":20}}])");
  const auto r = parse_response(j.dump());
  CHECK_FALSE(r.ok());
  CHECK(has(r.verdict, FailureCode::BadArgument, "action"));
}

TEST_CASE("format reward edge cases") {
  CHECK(format_reward("") == 0);
  auto j = valid_json();
  j["action"] = Json::array();
  CHECK(format_reward(j.dump()) == 0);
  j = valid_json();
  j["think"] = "";
  CHECK(format_reward(j.dump()) == 0);
  CHECK(format_reward(j.dump(), ParseOptions{true}) == 1);
  CHECK(format_reward("[1,2,3]") == 0);
}

TEST_CASE("failures accumulate") {
  auto j = valid_json();
  j.erase("memory");
  j.erase("think");
  j["action"] = Json::parse(R"([{"fly":{}}, {"wait":{"seconds":-1}}])");
  const auto r = parse_response(j.dump());
  CHECK(r.verdict.failures.size() >= 4);
  CHECK(has(r.verdict, FailureCode::MissingField, "memory"));
  CHECK(has(r.verdict, FailureCode::MissingField, "think"));
  CHECK(has(r.verdict, FailureCode::UnknownTool, "action"));
  CHECK(has(r.verdict, FailureCode::BadArgument, "action"));
}

TEST_CASE("extra keys warn without failing") {
  auto j = valid_json();
  j["confidence"] = 0.9;
  const auto r = parse_response(j.dump());
  CHECK(r.ok());
  CHECK(r.verdict.warnings.size() == 1);
}

TEST_CASE("done mixed with other tools is format-valid") {
  auto j = valid_json();
  j["action"] = Json::parse(R"([{"extract_structured_data":{"query":"q","extract_links":false}},
                                 {"done":{"text":"x","success":true}}])");
  CHECK(format_reward(j.dump()) == 1);
}

TEST_CASE("serialize round-trips") {
  SUBCASE("three actions keep their order") {
    AgentResponse r{"t", "e", "m", "n",
                    {act::Scroll{true, 1.0, std::nullopt}, act::ClickElementByIndex{2, 100},
                     act::Done{"x", true, {}}}};
    const auto back = parse_response(serialize_response(r));
    REQUIRE(back.ok());
    CHECK(*back.response == r);
  }
  SUBCASE("non-ASCII memory") {
    AgentResponse r{"t", "e", "Prüfung 审核 ✓", "n", {act::GoBack{}}};
    const auto text = serialize_response(r);
    const auto back = parse_response(text);
    REQUIRE(back.ok());
    CHECK(back.response->memory == r.memory);
    CHECK(serialize_response(*back.response) == text);
  }
  SUBCASE("random responses") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
      AgentResponse r{"think " + std::to_string(i), "eval", "mem", "next", {}};
      const auto n = 1 + rng() % 4;
      for (std::size_t k = 0; k < n; ++k) r.action.push_back(rf_test::random_action(rng));
      const auto back = parse_response(serialize_response(r));
      REQUIRE(back.ok());
      CHECK(*back.response == r);
    }
  }
  SUBCASE("every fixture gold response") {
    for (const char* name : {"raw_trajectories.jsonl", "bench_multi.jsonl"}) {
      for (const auto& t : read_trajectories(rf_test::fixture(name))) {
        for (const auto& s : t.steps) {
          if (!s.gold) continue;
          const auto back = parse_response(serialize_response(*s.gold));
          REQUIRE(back.ok());
          CHECK(*back.response == *s.gold);
        }
      }
    }
  }
}

TEST_CASE("random bytes never parse and never throw") {
  std::mt19937_64 rng(99);
  const std::string pieces[] = {"{", "}", "[", "]", "\"", ":", ",", "think", "action", "null",
                                "1", "\xff", "\\u12", " "};
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const auto n = rng() % 40;
    for (std::size_t k = 0; k < n; ++k) {
      if (rng() % 2) {
        s += static_cast<char>(rng() % 256);
      } else {
        s += pieces[rng() % std::size(pieces)];
      }
    }
    ParseResult r;
    CHECK_NOTHROW(r = parse_response(s));
    CHECK_FALSE(r.ok());
    CHECK_FALSE(r.verdict.failures.empty());
    CHECK(format_reward(s) == 0);
  }
}

TEST_CASE("canonical action list") {
  CHECK(canonical_action_list({act::GoBack{}, act::Wait{}}) == "[go_back{};wait{seconds=3}]");
}
