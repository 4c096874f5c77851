#include "riskforge/eval.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "riskforge/errors.hpp"
#include "riskforge/parallel.hpp"
#include "riskforge/pipeline.hpp"
#include "riskforge/text.hpp"

namespace riskforge {

namespace {

std::string dump_line(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

// Calls fn(line_number, json) for every non-blank line.
template <class Fn>
void for_each_json_line(std::string_view jsonl, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const auto nl = jsonl.find('\n', pos);
    const auto end = nl == std::string_view::npos ? jsonl.size() : nl;
    const auto line = jsonl.substr(pos, end - pos);
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      Json j;
      try {
        j = Json::parse(line);
      } catch (const Json::parse_error& e) {
        throw SchemaError(line_no, "", std::string("invalid JSON: ") + e.what());
      }
      if (!j.is_object()) throw SchemaError(line_no, "", "expected a JSON object");
      fn(line_no, j);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * rate);
  return buf;
}

Difficulty level_of(const Trajectory& t) {
  return t.difficulty == Difficulty::Ungraded ? grade_by_rule(t) : t.difficulty;
}

using PredictionIndex = std::map<std::pair<std::string, std::int64_t>, const PredictionRecord*>;

PredictionIndex index_predictions(const std::vector<PredictionRecord>& predictions) {
  PredictionIndex idx;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto key = std::make_pair(p.id, p.step_index.value_or(1));
    if (!idx.emplace(key, &p).second) {
      throw SchemaError(i + 1, "id",
                        "duplicate prediction for " + p.id + " step " + std::to_string(key.second));
    }
  }
  return idx;
}

StepVerdict judge_step(const StepRecord& gold, const PredictionRecord* pred,
                       const RewardConfig& matcher) {
  StepVerdict v;
  v.step_index = gold.step_index;
  if (pred == nullptr) {
    v.reason = "missing";
    return v;
  }
  const auto parsed = parse_response(pred->response_raw_text, matcher.parse);
  if (!parsed.ok()) {
    v.reason = "format";
    return v;
  }
  v.correct = stepwise_accuracy(parsed.response->action, gold.gold->action, RewardStage::Later,
                                matcher) == 1.0;
  if (!v.correct) v.reason = "mismatch";
  return v;
}

OfflineResult score_offline(OfflineMode mode, const std::vector<PredictionRecord>& predictions,
                            const std::vector<Trajectory>& bench, const RewardConfig& matcher,
                            std::size_t workers) {
  const auto idx = index_predictions(predictions);
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const auto& t = bench[i];
    if (mode == OfflineMode::Single && t.steps.size() != 1) {
      throw SchemaError(i + 1, "steps", t.id + " is not a single-step sample");
    }
    for (const auto& s : t.steps) {
      if (!s.gold) throw SchemaError(i + 1, "gold", t.id + " has no gold response");
    }
  }

  OfflineResult r;
  r.mode = mode;
  r.samples.resize(bench.size());
  parallel_for(bench.size(), workers, [&](std::size_t i) {
    const auto& t = bench[i];
    auto& v = r.samples[i];
    v.id = t.id;
    v.difficulty = level_of(t);
    v.correct = true;
    for (const auto& s : t.steps) {
      auto it = idx.find({t.id, s.step_index});
      auto sv = judge_step(s, it == idx.end() ? nullptr : it->second, matcher);
      if (!sv.correct && v.correct) {
        v.correct = false;
        v.reason = sv.reason;
      }
      v.steps.push_back(std::move(sv));
    }
  });

  for (const auto& v : r.samples) {
    LevelScore* level = v.difficulty == Difficulty::Easy       ? &r.easy
                        : v.difficulty == Difficulty::Moderate ? &r.moderate
                                                               : &r.difficult;
    for (LevelScore* s : {level, &r.overall}) {
      ++s->n;
      if (v.correct) ++s->correct;
    }
    for (const auto& sv : v.steps) {
      if (sv.reason == "missing") {
        r.warnings.push_back("missing prediction for " + v.id + " step " +
                             std::to_string(sv.step_index));
      }
    }
  }
  std::map<std::string, bool> known;
  for (const auto& t : bench) known[t.id] = true;
  for (const auto& p : predictions) {
    if (!known.count(p.id)) r.warnings.push_back("prediction for unknown sample " + p.id);
  }
  return r;
}

Json level_json(const LevelScore& s) {
  return Json{{"n", s.n}, {"correct", s.correct}, {"accuracy", s.rate()}};
}

LevelScore level_from_json(const Json& j) {
  LevelScore s;
  s.n = j.at("n").get<std::size_t>();
  s.correct = j.at("correct").get<std::size_t>();
  return s;
}

Json outcomes_json(const std::vector<ActionOutcome>& os) {
  Json a = Json::array();
  for (const auto& o : os) a.push_back(outcome_to_json(o));
  return a;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

// ---- prediction files

Json prediction_to_json(const PredictionRecord& p) {
  Json j = Json::object();
  j["id"] = p.id;
  if (p.step_index) j["step_index"] = *p.step_index;
  j["response_raw_text"] = p.response_raw_text;
  return j;
}

std::vector<PredictionRecord> parse_predictions(std::string_view jsonl) {
  std::vector<PredictionRecord> out;
  for_each_json_line(jsonl, [&](std::size_t line, const Json& j) {
    PredictionRecord p;
    auto id = j.find("id");
    if (id == j.end() || !id->is_string()) throw SchemaError(line, "id", "expected string");
    p.id = id->get<std::string>();
    if (auto s = j.find("step_index"); s != j.end()) {
      if (!s->is_number_integer() || s->get<std::int64_t>() < 1) {
        throw SchemaError(line, "step_index", "expected a positive integer");
      }
      p.step_index = s->get<std::int64_t>();
    }
    auto raw = j.find("response_raw_text");
    if (raw == j.end() || !raw->is_string()) {
      throw SchemaError(line, "response_raw_text", "expected string");
    }
    p.response_raw_text = raw->get<std::string>();
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  return parse_predictions(read_text_file(path));
}

std::string format_predictions(const std::vector<PredictionRecord>& ps) {
  std::string out;
  for (const auto& p : ps) out += dump_line(prediction_to_json(p)) + "\n";
  return out;
}

std::vector<PredictionRecord> gold_predictions(const std::vector<Trajectory>& bench) {
  std::vector<PredictionRecord> out;
  for (const auto& t : bench) {
    for (const auto& s : t.steps) {
      if (!s.gold) continue;
      PredictionRecord p{t.id, std::nullopt, serialize_response(*s.gold)};
      if (t.steps.size() > 1) p.step_index = s.step_index;
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---- offline scoring

std::string_view to_string(OfflineMode m) { return m == OfflineMode::Single ? "single" : "multi"; }

OfflineResult score_offline_single(const std::vector<PredictionRecord>& predictions,
                                   const std::vector<Trajectory>& bench,
                                   const RewardConfig& matcher, std::size_t workers) {
  return score_offline(OfflineMode::Single, predictions, bench, matcher, workers);
}

OfflineResult score_offline_multi(const std::vector<PredictionRecord>& predictions,
                                  const std::vector<Trajectory>& bench,
                                  const RewardConfig& matcher, std::size_t workers) {
  return score_offline(OfflineMode::Multi, predictions, bench, matcher, workers);
}

Json offline_result_to_json(const OfflineResult& r) {
  Json j = Json::object();
  j["mode"] = to_string(r.mode);
  j["levels"] = Json{{"easy", level_json(r.easy)},
                     {"moderate", level_json(r.moderate)},
                     {"difficult", level_json(r.difficult)}};
  j["overall"] = level_json(r.overall);
  Json samples = Json::array();
  for (const auto& v : r.samples) {
    Json s = Json::object();
    s["id"] = v.id;
    s["difficulty"] = to_string(v.difficulty);
    s["correct"] = v.correct;
    s["reason"] = v.reason;
    Json steps = Json::array();
    for (const auto& sv : v.steps) {
      steps.push_back(Json{{"step_index", sv.step_index}, {"correct", sv.correct}, {"reason", sv.reason}});
    }
    s["steps"] = std::move(steps);
    samples.push_back(std::move(s));
  }
  j["samples"] = std::move(samples);
  j["warnings"] = r.warnings;
  return j;
}

OfflineResult offline_result_from_json(const Json& j) {
  try {
    OfflineResult r;
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "single" && mode != "multi") throw SchemaError(0, "mode", "unknown mode " + mode);
    r.mode = mode == "single" ? OfflineMode::Single : OfflineMode::Multi;
    r.easy = level_from_json(j.at("levels").at("easy"));
    r.moderate = level_from_json(j.at("levels").at("moderate"));
    r.difficult = level_from_json(j.at("levels").at("difficult"));
    r.overall = level_from_json(j.at("overall"));
    for (const auto& s : j.at("samples")) {
      SampleVerdict v;
      v.id = s.at("id").get<std::string>();
      auto d = difficulty_from_string(s.at("difficulty").get<std::string>());
      if (!d) throw SchemaError(0, "samples.difficulty", "unknown level");
      v.difficulty = *d;
      v.correct = s.at("correct").get<bool>();
      v.reason = s.at("reason").get<std::string>();
      for (const auto& sv : s.at("steps")) {
        v.steps.push_back(StepVerdict{sv.at("step_index").get<std::int64_t>(),
                                      sv.at("correct").get<bool>(),
                                      sv.at("reason").get<std::string>()});
      }
      r.samples.push_back(std::move(v));
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const Json::exception& e) {
    throw SchemaError(0, "", e.what());
  }
}

std::string breakdown_lines(const std::vector<PredictionRecord>& predictions,
                            const std::vector<Trajectory>& bench, const RewardConfig& c) {
  const auto idx = index_predictions(predictions);
  std::string out;
  for (const auto& t : bench) {
    for (const auto& s : t.steps) {
      auto it = idx.find({t.id, s.step_index});
      if (it == idx.end() || !s.gold) continue;
      const auto b = score_rollout(s, it->second->response_raw_text, c, level_of(t));
      Json j = Json::object();
      j["id"] = t.id;
      j["step_index"] = s.step_index;
      j["breakdown"] = breakdown_to_json(b);
      out += dump_line(j) + "\n";
    }
  }
  return out;
}

// ---- online evaluation

Json episode_to_json(const EpisodeLog& e) {
  Json j = Json::object();
  j["task_id"] = e.task_id;
  Json steps = Json::array();
  for (const auto& s : e.steps) {
    Json sj = Json::object();
    sj["step_index"] = s.step_index;
    sj["response_raw_text"] = s.response_raw_text;
    sj["format_ok"] = s.format_ok;
    sj["format_failures"] = s.format_failures;
    sj["outcomes"] = outcomes_json(s.outcomes);
    sj["url_after"] = s.url_after;
    steps.push_back(std::move(sj));
  }
  j["steps"] = std::move(steps);
  j["agent_error"] = e.agent_error ? Json(*e.agent_error) : Json(nullptr);
  j["done"] = e.done ? Json{{"text", e.done->text}, {"success", e.done->success}} : Json(nullptr);
  j["steps_used"] = e.steps_used;
  j["completed"] = e.verdict.completed;
  j["success"] = e.verdict.success;
  return j;
}

EpisodeLog episode_from_json(const Json& j, std::size_t line) {
  try {
    EpisodeLog e;
    e.task_id = j.at("task_id").get<std::string>();
    for (const auto& sj : j.at("steps")) {
      EpisodeStep s;
      s.step_index = sj.at("step_index").get<std::int64_t>();
      s.response_raw_text = sj.at("response_raw_text").get<std::string>();
      s.format_ok = sj.at("format_ok").get<bool>();
      s.format_failures = sj.at("format_failures").get<std::vector<std::string>>();
      for (const auto& o : sj.at("outcomes")) {
        s.outcomes.push_back(ActionOutcome{o.at("tool").get<std::string>(), o.at("ok").get<bool>(),
                                           o.at("message").get<std::string>()});
      }
      s.url_after = sj.at("url_after").get<std::string>();
      e.steps.push_back(std::move(s));
    }
    if (const auto& err = j.at("agent_error"); !err.is_null()) e.agent_error = err.get<std::string>();
    if (const auto& d = j.at("done"); !d.is_null()) {
      e.done = DoneRecord{d.at("text").get<std::string>(), d.at("success").get<bool>()};
    }
    e.steps_used = j.at("steps_used").get<std::int64_t>();
    e.verdict.completed = j.at("completed").get<bool>();
    e.verdict.success = j.at("success").get<bool>();
    return e;
  } catch (const Json::exception& ex) {
    throw SchemaError(line, "", ex.what());
  }
}

std::vector<EpisodeLog> parse_episodes(std::string_view jsonl) {
  std::vector<EpisodeLog> out;
  for_each_json_line(jsonl, [&](std::size_t line, const Json& j) {
    out.push_back(episode_from_json(j, line));
  });
  return out;
}

namespace {

EpisodeLog run_episode(const Agent& agent, const SiteGraph& site, TaskSpec task,
                       const OnlineOptions& options) {
  task.max_steps = options.max_steps;
  EpisodeLog log;
  log.task_id = task.id;
  auto start = reset(site, task, options.seed);
  EnvState state = std::move(start.state);
  DomSnapshot dom = std::move(start.snapshot);
  std::vector<ActionOutcome> last;
  std::unique_ptr<AgentSession> session;
  try {
    session = agent.start(task, options.seed);
  } catch (const std::exception& e) {
    log.agent_error = e.what();
  }
  while (session && !state.terminated && state.step_counter < state.max_steps) {
    EpisodeStep s;
    s.step_index = state.step_counter + 1;
    try {
      s.response_raw_text = session->respond(AgentTurn{task, s.step_index, dom, last});
    } catch (const std::exception& e) {
      log.agent_error = e.what();
      break;
    }
    const auto parsed = parse_response(s.response_raw_text);
    s.format_ok = parsed.ok();
    if (!parsed.ok()) {
      for (const auto& f : parsed.verdict.failures) s.format_failures.push_back(f.path + ": " + f.detail);
      ++state.step_counter;  // a malformed answer still costs the step
      last.clear();
    } else {
      auto r = step(site, state, parsed.response->action);
      state = std::move(r.state);
      dom = std::move(r.snapshot);
      last = r.outcomes;
      s.outcomes = std::move(r.outcomes);
    }
    s.url_after = state.tab().url;
    log.steps.push_back(std::move(s));
  }
  log.done = state.terminated;
  log.steps_used = state.step_counter;
  log.verdict = judge(site, task, state);
  return log;
}

}  // namespace

OnlineResult run_online(const Agent& agent, const SiteGraph& site,
                        const std::vector<TaskSpec>& tasks, const OnlineOptions& options) {
  OnlineResult r;
  r.agent = agent.name();
  r.tasks = tasks.size();
  r.episodes.resize(tasks.size());
  parallel_for(tasks.size(), options.workers, [&](std::size_t i) {
    r.episodes[i] = run_episode(agent, site, tasks[i], options);
  });
  std::size_t completed = 0, success = 0, success_completed = 0;
  for (const auto& e : r.episodes) {
    completed += e.verdict.completed;
    success += e.verdict.success;
    success_completed += e.verdict.completed && e.verdict.success;
  }
  if (!tasks.empty()) {
    r.completion_rate = static_cast<double>(completed) / static_cast<double>(tasks.size());
    r.success_rate_unconditional = static_cast<double>(success) / static_cast<double>(tasks.size());
  }
  if (completed > 0) {
    r.success_rate_among_completed =
        static_cast<double>(success_completed) / static_cast<double>(completed);
  }
  return r;
}

Json online_result_to_json(const OnlineResult& r) {
  Json j = Json::object();
  j["agent"] = r.agent;
  j["tasks"] = r.tasks;
  j["completion_rate"] = r.completion_rate;
  j["success_rate_unconditional"] = r.success_rate_unconditional;
  j["success_rate_among_completed"] = r.success_rate_among_completed;
  Json eps = Json::array();
  for (const auto& e : r.episodes) eps.push_back(episode_to_json(e));
  j["episodes"] = std::move(eps);
  return j;
}

OnlineResult online_result_from_json(const Json& j) {
  try {
    OnlineResult r;
    r.agent = j.at("agent").get<std::string>();
    r.tasks = j.at("tasks").get<std::size_t>();
    r.completion_rate = j.at("completion_rate").get<double>();
    r.success_rate_unconditional = j.at("success_rate_unconditional").get<double>();
    r.success_rate_among_completed = j.at("success_rate_among_completed").get<double>();
    std::size_t line = 0;
    for (const auto& e : j.at("episodes")) r.episodes.push_back(episode_from_json(e, ++line));
    return r;
  } catch (const Json::exception& e) {
    throw SchemaError(0, "", e.what());
  }
}

// ---- reports

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "markdown-table" || s == "md") return ReportFormat::Markdown;
  throw UnknownFormat(std::string(s));
}

std::string emit_report(const OfflineResult& r, ReportFormat f, const std::string& label,
                        const std::string& config_hash) {
  switch (f) {
    case ReportFormat::Json: {
      Json j = Json::object();
      j["config_hash"] = config_hash;
      j["label"] = label;
      j["result"] = offline_result_to_json(r);
      return j.dump(2) + "\n";
    }
    case ReportFormat::Csv: {
      std::string out = "level,n,correct,accuracy,config_hash\n";
      const std::pair<const char*, const LevelScore*> rows[] = {
          {"easy", &r.easy}, {"moderate", &r.moderate}, {"difficult", &r.difficult},
          {"overall", &r.overall}};
      for (const auto& [name, s] : rows) {
        out += std::string(name) + "," + std::to_string(s->n) + "," + std::to_string(s->correct) +
               "," + text::format_double(s->rate()) + "," + config_hash + "\n";
      }
      return out;
    }
    case ReportFormat::Markdown: {
      std::string out;
      if (r.mode == OfflineMode::Single) {
        out += "| Model | Easy | Moderate | Difficult | Overall |\n";
        out += "|---|---|---|---|---|\n";
        out += "| " + label + " | " + percent(r.easy.rate()) + " | " + percent(r.moderate.rate()) +
               " | " + percent(r.difficult.rate()) + " | " + percent(r.overall.rate()) + " |\n";
      } else {
        out += "| Model | Multi-step success | Trajectories |\n";
        out += "|---|---|---|\n";
        out += "| " + label + " | " + percent(r.overall.rate()) + " | " +
               std::to_string(r.overall.n) + " |\n";
      }
      out += "\nconfig hash: " + config_hash + "\n";
      return out;
    }
  }
  return {};
}

std::string emit_report(const OnlineResult& r, ReportFormat f, const std::string& config_hash) {
  switch (f) {
    case ReportFormat::Json: {
      Json j = Json::object();
      j["config_hash"] = config_hash;
      j["result"] = online_result_to_json(r);
      return j.dump(2) + "\n";
    }
    case ReportFormat::Csv: {
      std::string out = "task_id,completed,success,steps_used,agent_error,config_hash\n";
      for (const auto& e : r.episodes) {
        out += csv_field(e.task_id) + "," + (e.verdict.completed ? "1" : "0") + "," +
               (e.verdict.success ? "1" : "0") + "," + std::to_string(e.steps_used) + "," +
               csv_field(e.agent_error.value_or("")) + "," + config_hash + "\n";
      }
      return out;
    }
    case ReportFormat::Markdown: {
      std::string out = "| Agent | Completion | Success | Success among completed |\n";
      out += "|---|---|---|---|\n";
      out += "| " + r.agent + " | " + percent(r.completion_rate) + " | " +
             percent(r.success_rate_unconditional) + " | " +
             percent(r.success_rate_among_completed) + " |\n";
      out += "\nconfig hash: " + config_hash + "\n";
      return out;
    }
  }
  return {};
}

}  // namespace riskforge
