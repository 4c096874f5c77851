#include "riskforge/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>

#include "riskforge/errors.hpp"
#include "riskforge/parallel.hpp"
#include "riskforge/text.hpp"
#include "riskforge/toy_policy.hpp"

namespace riskforge {

namespace {

constexpr std::array<std::pair<PipelineStage, std::string_view>, 6> kStageNames{{
    {PipelineStage::Filter, "filter"},
    {PipelineStage::Clean, "clean"},
    {PipelineStage::Refine, "refine"},
    {PipelineStage::Augment, "augment"},
    {PipelineStage::Chain, "chain"},
    {PipelineStage::Grade, "grade"},
}};

bool has_tag(const Trajectory& t, std::string_view tag) {
  return std::find(t.provenance.begin(), t.provenance.end(), tag) != t.provenance.end();
}

void add_tag(Trajectory& t, std::string_view tag) {
  if (!has_tag(t, tag)) t.provenance.emplace_back(tag);
}

}  // namespace

std::string_view to_string(PipelineStage s) {
  for (const auto& [stage, name] : kStageNames) {
    if (stage == s) return name;
  }
  return "filter";
}

std::optional<PipelineStage> pipeline_stage_from_string(std::string_view s) {
  for (const auto& [stage, name] : kStageNames) {
    if (name == s) return stage;
  }
  return std::nullopt;
}

std::string_view to_string(AugmentOp op) {
  return op == AugmentOp::TemplateParaphrase ? "template_paraphrase" : "drop_screenshot";
}

std::optional<AugmentOp> augment_op_from_string(std::string_view s) {
  if (s == "template_paraphrase") return AugmentOp::TemplateParaphrase;
  if (s == "drop_screenshot") return AugmentOp::DropScreenshot;
  return std::nullopt;
}

std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::Unsuccessful: return "unsuccessful";
    case DropReason::Incomplete: return "incomplete";
    case DropReason::Empty: return "empty";
  }
  return "incomplete";
}

// ---------------------------------------------------------------- config

Json pipeline_config_to_json(const PipelineConfig& c) {
  Json j = Json::object();
  Json stages = Json::array();
  for (auto s : c.stages) stages.push_back(to_string(s));
  j["stages"] = std::move(stages);
  j["failure_markers"] = c.failure_markers;
  Json delims = Json::array();
  for (const auto& d : c.example_delimiters) delims.push_back(Json{{"open", d.open}, {"close", d.close}});
  j["example_delimiters"] = std::move(delims);
  Json ops = Json::array();
  for (auto op : c.augment_ops) ops.push_back(to_string(op));
  j["augment_ops"] = std::move(ops);
  Json templates = Json::object();
  for (const auto& [k, v] : c.templates) templates[k] = v;
  j["templates"] = std::move(templates);
  j["grader"] = c.grader == GraderKind::Rule ? "rule" : "oracle";
  j["grade_k"] = c.grade_k;
  j["seed"] = c.seed;
  j["f1_threshold"] = c.f1_threshold;
  return j;
}

TemplateTable template_table_from_json(const Json& j) {
  TemplateTable t;
  if (!j.is_object()) throw SchemaError(0, "templates", "expected object");
  for (const auto& [word, alts] : j.items()) {
    if (!alts.is_array()) throw SchemaError(0, "templates." + word, "expected list");
    auto& out = t[text::casefold(word)];
    for (const auto& a : alts) {
      if (!a.is_string()) throw SchemaError(0, "templates." + word, "expected strings");
      out.push_back(a.get<std::string>());
    }
  }
  return t;
}

PipelineConfig pipeline_config_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError(0, "", "pipeline config must be an object");
  PipelineConfig c;
  for (const auto& [key, v] : j.items()) {
    const std::string path = key;
    if (key == "schema_version") {
      continue;
    } else if (key == "stages") {
      c.stages.clear();
      for (const auto& s : v) {
        auto st = s.is_string() ? pipeline_stage_from_string(s.get<std::string>()) : std::nullopt;
        if (!st) throw SchemaError(0, path, "unknown stage " + s.dump());
        c.stages.push_back(*st);
      }
    } else if (key == "failure_markers") {
      if (!v.is_array()) throw SchemaError(0, path, "expected list");
      c.failure_markers.clear();
      for (const auto& m : v) {
        if (!m.is_string()) throw SchemaError(0, path, "expected strings");
        c.failure_markers.push_back(m.get<std::string>());
      }
    } else if (key == "example_delimiters") {
      if (!v.is_array()) throw SchemaError(0, path, "expected list");
      c.example_delimiters.clear();
      for (const auto& d : v) {
        if (!d.is_object() || !d.contains("open") || !d.contains("close") ||
            !d["open"].is_string() || !d["close"].is_string() ||
            d["open"].get<std::string>().empty() || d["close"].get<std::string>().empty()) {
          throw SchemaError(0, path, "expected {open, close} with non-empty strings");
        }
        c.example_delimiters.push_back({d["open"].get<std::string>(), d["close"].get<std::string>()});
      }
    } else if (key == "augment_ops") {
      if (!v.is_array()) throw SchemaError(0, path, "expected list");
      c.augment_ops.clear();
      for (const auto& o : v) {
        auto op = o.is_string() ? augment_op_from_string(o.get<std::string>()) : std::nullopt;
        if (!op) throw SchemaError(0, path, "unknown augmentation " + o.dump());
        c.augment_ops.push_back(*op);
      }
    } else if (key == "templates") {
      c.templates = template_table_from_json(v);
    } else if (key == "grader") {
      const std::string g = v.is_string() ? v.get<std::string>() : "";
      if (g == "rule") {
        c.grader = GraderKind::Rule;
      } else if (g == "oracle") {
        c.grader = GraderKind::Oracle;
      } else {
        throw SchemaError(0, path, "expected \"rule\" or \"oracle\"");
      }
    } else if (key == "grade_k") {
      if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) {
        throw SchemaError(0, path, "expected a positive integer");
      }
      c.grade_k = v.get<std::size_t>();
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw SchemaError(0, path, "expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "f1_threshold") {
      if (!v.is_number()) throw SchemaError(0, path, "expected number");
      c.f1_threshold = v.get<double>();
    } else {
      throw SchemaError(0, path, "unknown key");
    }
  }
  return c;
}

// ---------------------------------------------------------------- filter

FilterResult filter_trajectories(const std::vector<Trajectory>& raw) {
  FilterResult out;
  for (const auto& t : raw) {
    if (t.steps.empty()) {
      out.dropped.emplace_back(t, DropReason::Empty);
      continue;
    }
    const bool complete = std::all_of(t.steps.begin(), t.steps.end(),
                                      [](const StepRecord& s) { return s.gold.has_value(); });
    if (!complete) {
      out.dropped.emplace_back(t, DropReason::Incomplete);
      continue;
    }
    const auto& last = t.steps.back().gold->action;
    const auto* done = last.empty() ? nullptr : std::get_if<act::Done>(&last.back());
    if (!done || !done->success) {
      out.dropped.emplace_back(t, DropReason::Unsuccessful);
      continue;
    }
    out.kept.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------- clean

Trajectory clean_steps(const Trajectory& t, const std::vector<std::string>& failure_markers) {
  auto failed = [&](const StepRecord& s) {
    if (!s.gold) return false;
    for (const auto& m : failure_markers) {
      if (!m.empty() && text::starts_with(s.gold->evaluation_previous_goal, m)) return true;
    }
    return false;
  };

  // (b) a step is dropped when its successor reports that it failed.
  std::vector<StepRecord> kept;
  std::optional<std::string> inherited;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const bool drop = i + 1 < t.steps.size() && failed(t.steps[i + 1]);
    if (drop) {
      if (!inherited && t.steps[i].gold) inherited = t.steps[i].gold->evaluation_previous_goal;
      continue;
    }
    StepRecord s = t.steps[i];
    if (inherited && s.gold) s.gold->evaluation_previous_goal = *inherited;
    inherited.reset();
    kept.push_back(std::move(s));
  }

  // (a) consecutive identical steps collapse to the first. The same action
  // on a different page is progress, not a repeat.
  Trajectory out = t;
  out.steps.clear();
  std::optional<std::string> prev;
  for (auto& s : kept) {
    std::optional<std::string> cur;
    if (s.gold) cur = canonical_action_list(s.gold->action) + "\n" + snapshot_to_json(s.dom).dump();
    if (cur && prev && *cur == *prev) continue;
    prev = cur;
    out.steps.push_back(std::move(s));
  }
  if (!out.steps.empty()) renumber(out);
  return out;
}

// ---------------------------------------------------------------- refine

namespace {

// nullopt when a span is opened and never closed (or closed unopened).
std::optional<std::string> strip_spans(const std::string& s, const std::vector<Delimiters>& markers) {
  std::string cur = s;
  bool any = false;
  for (const auto& d : markers) {
    if (d.open.empty() || d.close.empty()) continue;
    std::string out;
    std::size_t pos = 0;
    while (true) {
      const auto open = cur.find(d.open, pos);
      const auto stray_close = cur.find(d.close, pos);
      if (open == std::string::npos) {
        if (stray_close != std::string::npos) return std::nullopt;
        out += cur.substr(pos);
        break;
      }
      if (stray_close != std::string::npos && stray_close < open) return std::nullopt;
      const auto close = cur.find(d.close, open + d.open.size());
      if (close == std::string::npos) return std::nullopt;
      out += cur.substr(pos, open - pos);
      pos = close + d.close.size();
      any = true;
    }
    cur = std::move(out);
  }
  if (!any) return s;
  // Trim what the removed spans leave behind.
  const auto b = cur.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return std::string();
  const auto e = cur.find_last_not_of(" \t\n\r");
  return cur.substr(b, e - b + 1);
}

}  // namespace

RefineResult refine(const Trajectory& t, const std::vector<Delimiters>& markers) {
  RefineResult r{t, false};
  if (has_tag(t, kUnbalancedTag)) {
    r.flagged = true;
    return r;
  }
  Trajectory out = t;
  for (auto& s : out.steps) {
    auto stripped = strip_spans(s.question, markers);
    if (!stripped) {
      r.flagged = true;
      add_tag(r.trajectory, kUnbalancedTag);
      return r;
    }
    s.question = std::move(*stripped);
  }
  r.trajectory = std::move(out);
  return r;
}

// ---------------------------------------------------------------- augment

std::string paraphrase(std::string_view question, const TemplateTable& table, std::uint64_t seed) {
  if (table.empty()) return std::string(question);
  std::string out;
  std::size_t word = 0;
  std::size_t i = 0;
  while (i < question.size()) {
    if (std::isspace(static_cast<unsigned char>(question[i]))) {
      out += question[i++];
      continue;
    }
    std::size_t j = i;
    while (j < question.size() && !std::isspace(static_cast<unsigned char>(question[j]))) ++j;
    const std::string tok(question.substr(i, j - i));
    auto it = table.find(text::casefold(tok));
    if (it != table.end() && !it->second.empty()) {
      const auto pick = mix_seed(seed, text::fnv1a64(tok), word) % it->second.size();
      out += it->second[pick];
    } else {
      out += tok;
    }
    ++word;
    i = j;
  }
  return out;
}

std::vector<Trajectory> augment(const std::vector<Trajectory>& samples,
                                const std::vector<AugmentOp>& ops, const TemplateTable& table,
                                std::uint64_t seed) {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.id);
  std::vector<Trajectory> out;
  for (const auto& s : samples) {
    out.push_back(s);
    if (has_tag(s, kParaphraseTag) || has_tag(s, kNoScreenshotTag)) continue;
    for (auto op : ops) {
      Trajectory v = s;
      if (op == AugmentOp::TemplateParaphrase) {
        v.id = s.id + "#paraphrase";
        const auto sample_seed = mix_seed(seed, text::fnv1a64(s.id));
        for (auto& step : v.steps) step.question = paraphrase(step.question, table, sample_seed);
        add_tag(v, kParaphraseTag);
      } else {
        v.id = s.id + "#noscreenshot";
        for (auto& step : v.steps) step.screenshot_ref.reset();
        add_tag(v, kNoScreenshotTag);
      }
      if (!ids.insert(v.id).second) continue;
      out.push_back(std::move(v));
    }
  }
  return out;
}

// ---------------------------------------------------------------- chaining

std::string observation_ref(const StepRecord& step) {
  if (step.screenshot_ref) return *step.screenshot_ref;
  return "dom:" + step.dom.url + "@" + std::to_string(step.step_index);
}

Trajectory chain_multistep(const std::vector<StepRecord>& steps, std::string id,
                           Difficulty difficulty) {
  if (steps.size() < 2) throw TooFewSteps();
  Trajectory t;
  t.id = std::move(id);
  t.kind = TrajectoryKind::MultiStep;
  t.difficulty = difficulty;
  t.steps = steps;
  for (std::size_t i = 1; i < t.steps.size(); ++i) {
    const auto& prev = steps[i - 1];
    if (!prev.gold) throw std::invalid_argument("chaining needs gold responses on every step");
    t.steps[i].question =
        serialize_response(*prev.gold) + std::string(kObservationMarker) + observation_ref(t.steps[i]);
  }
  renumber(t);
  t.provenance.emplace_back(kChainedTag);
  return t;
}

std::vector<AgentResponse> embedded_gold(const Trajectory& chained) {
  std::vector<AgentResponse> out;
  for (std::size_t i = 1; i < chained.steps.size(); ++i) {
    const auto& q = chained.steps[i].question;
    const auto cut = q.rfind(kObservationMarker);
    if (cut == std::string::npos) throw SchemaError(0, "steps[" + std::to_string(i) + "]", "not a chained question");
    auto parsed = parse_response(std::string_view(q).substr(0, cut));
    if (!parsed.ok()) throw SchemaError(0, "steps[" + std::to_string(i) + "]", "embedded response does not parse");
    out.push_back(*parsed.response);
  }
  return out;
}

std::vector<StepRecord> unchain(const Trajectory& chained) {
  const auto golds = embedded_gold(chained);
  std::vector<StepRecord> steps = chained.steps;
  for (std::size_t i = 0; i + 1 < steps.size(); ++i) steps[i].gold = golds[i];
  for (auto& s : steps) s.question = chained.steps.front().question;
  return steps;
}

// ---------------------------------------------------------------- grading

double ScriptedResponder::probability(const std::string& sample_id) const {
  auto it = p_correct_.find(sample_id);
  return it == p_correct_.end() ? fallback_ : it->second;
}

AgentResponse ScriptedResponder::respond(const std::string& sample_id, const StepRecord& step,
                                         std::uint64_t seed) {
  if (!step.gold) throw OracleFailure("sample " + sample_id + " has no gold response to imitate");
  std::mt19937_64 rng(mix_seed(seed, text::fnv1a64(sample_id), static_cast<std::uint64_t>(step.step_index)));
  AgentResponse r = *step.gold;
  if (uniform_unit(rng()) < probability(sample_id)) return r;
  std::vector<Action> wrong{act::Wait{1}};
  if (r.action == wrong) wrong = {act::GoBack{}};
  r.action = std::move(wrong);
  return r;
}

ScriptedResponder scripted_responder_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError(0, "", "responder script must be an object");
  double fallback = 1.0;
  std::map<std::string, double> p;
  auto check = [](const Json& v, const std::string& path) {
    if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) {
      throw SchemaError(0, path, "expected a probability");
    }
    return v.get<double>();
  };
  if (j.contains("default")) fallback = check(j["default"], "default");
  if (j.contains("samples")) {
    for (const auto& [id, v] : j["samples"].items()) p[id] = check(v, "samples." + id);
  }
  return ScriptedResponder(std::move(p), fallback);
}

Difficulty difficulty_band(std::size_t correct, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (correct > k) throw std::invalid_argument("more correct answers than attempts");
  if (correct == k) return Difficulty::Easy;
  // c/k < 0.2 without floating point.
  if (5 * correct < k) return Difficulty::Difficult;
  return Difficulty::Moderate;
}

GradeOutcome grade_difficulty(const Trajectory& sample, GraderOracle& oracle, std::size_t k,
                              std::uint64_t seed, const RewardConfig& matcher) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  GradeOutcome g;
  g.k = k;
  for (std::size_t attempt = 0; attempt < k; ++attempt) {
    bool all = !sample.steps.empty();
    for (const auto& step : sample.steps) {
      if (!step.gold) throw OracleFailure("sample " + sample.id + " lacks gold responses");
      const auto r = oracle.respond(sample.id, step, mix_seed(seed, attempt));
      if (stepwise_accuracy(r.action, step.gold->action, RewardStage::Later, matcher) != 1.0) {
        all = false;
        break;
      }
    }
    if (all) ++g.correct;
  }
  g.level = difficulty_band(g.correct, k);
  return g;
}

Difficulty grade_step_by_rule(const StepRecord& step) {
  const std::size_t n = step.gold ? step.gold->action.size() : 0;
  if (n <= 1) return Difficulty::Easy;
  if (n == 2) return Difficulty::Moderate;
  return Difficulty::Difficult;
}

Difficulty grade_by_rule(const Trajectory& t) {
  Difficulty worst = Difficulty::Easy;
  for (const auto& s : t.steps) {
    const auto d = grade_step_by_rule(s);
    if (static_cast<int>(d) > static_cast<int>(worst)) worst = d;
  }
  return worst;
}

// ---------------------------------------------------------------- pipeline

Json pipeline_report_to_json(const PipelineReport& r) {
  Json j = Json::object();
  Json stages = Json::array();
  for (const auto& s : r.stages) {
    Json sj = Json::object();
    sj["stage"] = to_string(s.stage);
    sj["input"] = s.input;
    sj["kept"] = s.kept;
    sj["dropped"] = s.dropped;
    sj["added"] = s.added;
    sj["flagged"] = s.flagged;
    Json reasons = Json::object();
    for (const auto& [k, v] : s.reasons) reasons[k] = v;
    sj["reasons"] = std::move(reasons);
    stages.push_back(std::move(sj));
  }
  j["stages"] = std::move(stages);
  Json levels = Json::object();
  for (const auto& [k, v] : r.levels) levels[k] = v;
  j["levels"] = std::move(levels);
  j["output"] = r.output;
  return j;
}

PipelineRun run_pipeline(const std::vector<Trajectory>& raw, const PipelineConfig& c,
                         GraderOracle* oracle, std::size_t workers) {
  PipelineRun run;
  std::vector<Trajectory> cur = raw;
  for (auto stage : c.stages) {
    StageReport rep;
    rep.stage = stage;
    rep.input = cur.size();
    switch (stage) {
      case PipelineStage::Filter: {
        auto f = filter_trajectories(cur);
        for (const auto& [t, why] : f.dropped) ++rep.reasons[std::string(to_string(why))];
        rep.dropped = f.dropped.size();
        cur = std::move(f.kept);
        break;
      }
      case PipelineStage::Clean: {
        std::vector<Trajectory> next(cur.size());
        parallel_for(cur.size(), workers, [&](std::size_t i) { next[i] = clean_steps(cur[i], c.failure_markers); });
        std::vector<Trajectory> kept;
        for (std::size_t i = 0; i < next.size(); ++i) {
          const auto removed = cur[i].steps.size() - next[i].steps.size();
          if (removed) rep.reasons["steps_removed"] += removed;
          kept.push_back(std::move(next[i]));
        }
        cur = std::move(kept);
        break;
      }
      case PipelineStage::Refine: {
        std::vector<RefineResult> next(cur.size());
        parallel_for(cur.size(), workers, [&](std::size_t i) { next[i] = refine(cur[i], c.example_delimiters); });
        for (std::size_t i = 0; i < next.size(); ++i) {
          if (next[i].flagged) ++rep.flagged;
          cur[i] = std::move(next[i].trajectory);
        }
        if (rep.flagged) rep.reasons["unbalanced_markers"] = rep.flagged;
        break;
      }
      case PipelineStage::Augment: {
        auto next = augment(cur, c.augment_ops, c.templates, c.seed);
        rep.added = next.size() - cur.size();
        cur = std::move(next);
        break;
      }
      case PipelineStage::Chain: {
        parallel_for(cur.size(), workers, [&](std::size_t i) {
          auto& t = cur[i];
          if (t.steps.size() < 2 || has_tag(t, kChainedTag)) return;
          auto chained = chain_multistep(t.steps, t.id, t.difficulty);
          chained.source = t.source;
          chained.provenance = t.provenance;
          chained.provenance.emplace_back(kChainedTag);
          t = std::move(chained);
        });
        break;
      }
      case PipelineStage::Grade: {
        if (c.grader == GraderKind::Oracle && !oracle) {
          throw std::invalid_argument("oracle grading requested without an oracle");
        }
        RewardConfig matcher;
        matcher.f1_threshold = c.f1_threshold;
        // The oracle may keep state, so it is queried from one thread.
        for (auto& t : cur) {
          t.difficulty = c.grader == GraderKind::Rule
                             ? grade_by_rule(t)
                             : grade_difficulty(t, *oracle, c.grade_k, c.seed, matcher).level;
        }
        break;
      }
    }
    rep.kept = cur.size() - rep.added;
    run.report.stages.push_back(std::move(rep));
  }
  for (auto d : {Difficulty::Easy, Difficulty::Moderate, Difficulty::Difficult, Difficulty::Ungraded}) {
    run.report.levels[std::string(to_string(d))] = 0;
  }
  for (const auto& t : cur) ++run.report.levels[std::string(to_string(t.difficulty))];
  run.report.output = cur.size();
  run.output = std::move(cur);
  return run;
}

}  // namespace riskforge
