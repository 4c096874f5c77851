// riskforge command-line entry point.
//
// Exit codes: 0 success, 1 usage error, 2 schema error in an input file,
// 3 environment fixture error.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "riskforge/agent.hpp"
#include "riskforge/config.hpp"
#include "riskforge/curves.hpp"
#include "riskforge/errors.hpp"
#include "riskforge/eval.hpp"
#include "riskforge/oracle.hpp"
#include "riskforge/pipeline.hpp"
#include "riskforge/text.hpp"
#include "riskforge/trainer.hpp"

using namespace riskforge;

namespace {

constexpr int kUsage = 1;
constexpr int kSchema = 2;
constexpr int kFixture = 3;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Data inputs that cannot be read are schema errors (exit 2).
std::string read_input(const std::string& path) {
  try {
    return read_text_file(path);
  } catch (const Error& e) {
    throw SchemaError(0, path, e.what());
  }
}

Json parse_json_text(const std::string& raw, const std::string& path) {
  Json j = Json::parse(raw, nullptr, false);
  if (j.is_discarded()) throw SchemaError(0, path, "not valid JSON");
  return j;
}

Json parse_json_input(const std::string& path) { return parse_json_text(read_input(path), path); }

std::string digest(std::string_view content) { return text::hex64(text::fnv1a64(content)); }

std::string dump_line(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

// Settings plus the CLI11 plumbing of one subcommand.
struct Command {
  std::string name;
  CLI::App* app = nullptr;
  Settings settings;
  std::map<std::string, std::string> flag_values;
  std::string config_file;
  std::map<std::string, std::string> inputs;  // name -> content digest

  // Registers every setting as a flag showing its default.
  void expose() {
    for (const auto& s : settings.all()) {
      auto* opt = app->add_option(flag_name(s.key), flag_values[s.key],
                                  s.help + " (env " + env_name(s.key) + ")");
      opt->default_str(s.value);
      if (!s.choices.empty()) opt->check(CLI::IsMember(s.choices));
    }
    app->add_option("--config", config_file, "JSON file of settings (flags > env > file > defaults)");
  }

  void resolve_settings() {
    if (!config_file.empty()) settings.apply_file(parse_json_input(config_file));
    apply_env_and_flags();
  }

  void apply_env_and_flags() {
    settings.apply_env([](const char* n) { return std::getenv(n); });
    for (const auto& s : settings.all()) {
      if (app->count(flag_name(s.key)) == 0) continue;
      try {
        settings.set(s.key, flag_values[s.key], SettingSource::Flag);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
  }

  void input(const std::string& name, std::string_view content) { inputs[name] = digest(content); }

  Json resolved() const {
    Json j = Json::object();
    j["command"] = name;
    j["settings"] = settings.resolved();
    Json in = Json::object();
    for (const auto& [k, v] : inputs) in[k] = v;
    j["inputs"] = std::move(in);
    return j;
  }

  std::string hash() const { return config_hash(resolved()); }
};

// Sidecar <artifact>.config.json holding the resolved config behind the hash.
void echo_config(const std::string& artifact, const Json& resolved) {
  Json j = Json::object();
  j["config_hash"] = config_hash(resolved);
  j["config"] = resolved;
  write_text_file(artifact + ".config.json", j.dump(2) + "\n");
}

void add_common(Settings& s) {
  s.add("seed", SettingKind::Integer, "0", "random seed");
  s.add("workers", SettingKind::Integer, "1", "concurrent workers (outputs do not depend on it)");
}

std::size_t workers_of(const Settings& s) {
  const auto w = s.integer("workers");
  if (w < 1) throw UsageError("--workers must be >= 1");
  return static_cast<std::size_t>(w);
}

// Replaces any earlier config tag so reprocessing stays idempotent.
void tag_config(std::vector<Trajectory>& ts, const std::string& hash) {
  for (auto& t : ts) {
    std::erase_if(t.provenance, [](const std::string& p) { return text::starts_with(p, "config:"); });
    t.provenance.push_back("config:" + hash);
  }
}

// ---- score-single / score-multi

struct ScoreArgs {
  std::string gold, predictions, out, breakdown;
};

void setup_score(Command& c, ScoreArgs& a) {
  c.app->add_option("--gold", a.gold, "gold samples (trajectory JSONL)")->required();
  c.app->add_option("--predictions", a.predictions, "prediction JSONL")->required();
  c.app->add_option("--out", a.out, "report file")->required();
  c.app->add_option("--emit-breakdown", a.breakdown, "also write per-step reward breakdowns (JSONL)");
  add_reward_settings(c.settings);
  c.settings.add("format", SettingKind::Text, "markdown", "report format",
                 {"json", "csv", "markdown", "markdown-table", "md"});
  c.settings.add("label", SettingKind::Text, "predictions",
                 "model name in the report");
  c.settings.add("workers", SettingKind::Integer, "1", "concurrent workers");
  c.settings.add("stage", SettingKind::Text, "later", "reward stage of the breakdowns",
                 {"early", "later"});
}

int run_score(Command& c, const ScoreArgs& a, bool multi) {
  c.resolve_settings();
  const auto gold_raw = read_input(a.gold);
  const auto pred_raw = read_input(a.predictions);
  c.input("gold", gold_raw);
  c.input("predictions", pred_raw);
  const auto bench = parse_trajectories(gold_raw);
  const auto preds = parse_predictions(pred_raw);
  auto rc = reward_config_from(c.settings);
  const auto format = report_format_from_string(c.settings.text("format"));
  const auto workers = workers_of(c.settings);
  const auto result = multi ? score_offline_multi(preds, bench, rc, workers)
                            : score_offline_single(preds, bench, rc, workers);
  const auto hash = c.hash();
  write_text_file(a.out, emit_report(result, format, c.settings.text("label"), hash));
  echo_config(a.out, c.resolved());
  if (!a.breakdown.empty()) {
    rc.stage = c.settings.text("stage") == "early" ? RewardStage::Early : RewardStage::Later;
    std::string lines;
    std::istringstream in(breakdown_lines(preds, bench, rc));
    for (std::string line; std::getline(in, line);) {
      auto j = Json::parse(line);
      j["config_hash"] = hash;
      lines += dump_line(j) + "\n";
    }
    write_text_file(a.breakdown, lines);
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << (multi ? "success " : "overall ") << result.overall.correct << "/" << result.overall.n
            << " (" << text::format_double(100.0 * result.overall.rate()) << "%)\n";
  return 0;
}

// ---- run-online

struct OnlineArgs {
  std::string site, tasks, out, episodes;
};

void setup_online(Command& c, OnlineArgs& a) {
  c.app->add_option("--site", a.site, "site graph JSON")->required();
  c.app->add_option("--tasks", a.tasks, "task JSONL")->required();
  c.app->add_option("--out", a.out, "result report")->required();
  c.app->add_option("--episodes", a.episodes, "episode log JSONL");
  c.settings.add("agent", SettingKind::Text, "oracle",
                 "oracle | policy:<checkpoint> | replay:<episode log>");
  c.settings.add("max_steps", SettingKind::Integer, "20", "step cap per episode");
  c.settings.add("format", SettingKind::Text, "json", "report format",
                 {"json", "csv", "markdown", "markdown-table", "md"});
  add_common(c.settings);
}

std::unique_ptr<Agent> make_agent(Command& c, const std::string& which, const SiteGraph& site) {
  if (which == "oracle") return std::make_unique<OracleAgent>(site);
  const auto colon = which.find(':');
  const auto kind = which.substr(0, colon);
  const auto arg = colon == std::string::npos ? std::string() : which.substr(colon + 1);
  if (kind == "policy" && !arg.empty()) {
    const auto raw = read_input(arg);
    c.input("checkpoint", raw);
    return std::make_unique<PolicyAgent>(checkpoint_from_json(parse_json_text(raw, arg)));
  }
  if (kind == "replay" && !arg.empty()) {
    const auto raw = read_input(arg);
    c.input("replay", raw);
    return std::make_unique<ReplayAgent>(parse_episodes(raw));
  }
  throw UsageError("unknown agent '" + which + "' (expected oracle, policy:<file> or replay:<file>)");
}

std::pair<SiteGraph, std::vector<TaskSpec>> load_fixture(Command& c, const std::string& site_path,
                                                         const std::string& tasks_path) {
  auto site = load_site(site_path);
  std::vector<TaskSpec> tasks;
  try {
    tasks = load_tasks(tasks_path);
  } catch (const SchemaError& e) {
    throw FixtureError(tasks_path, e.what());
  }
  for (const auto& t : tasks) check_task(site, t);
  c.input("site", format_site(site));
  std::string task_lines;
  for (const auto& t : tasks) task_lines += dump_line(task_to_json(t)) + "\n";
  c.input("tasks", task_lines);
  return {std::move(site), std::move(tasks)};
}

int run_online_cmd(Command& c, const OnlineArgs& a) {
  c.resolve_settings();
  auto [site, tasks] = load_fixture(c, a.site, a.tasks);
  const auto agent = make_agent(c, c.settings.text("agent"), site);
  const auto format = report_format_from_string(c.settings.text("format"));
  OnlineOptions opt;
  opt.max_steps = c.settings.integer("max_steps");
  if (opt.max_steps < 1) throw UsageError("--max-steps must be >= 1");
  opt.seed = static_cast<std::uint64_t>(c.settings.integer("seed"));
  opt.workers = workers_of(c.settings);
  const auto result = run_online(*agent, site, tasks, opt);
  const auto hash = c.hash();
  write_text_file(a.out, emit_report(result, format, hash));
  echo_config(a.out, c.resolved());
  if (!a.episodes.empty()) {
    std::string lines;
    for (const auto& e : result.episodes) {
      auto j = episode_to_json(e);
      j["config_hash"] = hash;
      lines += dump_line(j) + "\n";
    }
    write_text_file(a.episodes, lines);
  }
  std::cout << "completion " << text::format_double(100.0 * result.completion_rate) << "%, success "
            << text::format_double(100.0 * result.success_rate_unconditional) << "%\n";
  return 0;
}

// ---- train

struct TrainArgs {
  std::string site, tasks, data, checkpoint, report, resume;
};

void setup_train(Command& c, TrainArgs& a) {
  c.app->add_option("--site", a.site, "site graph JSON (with --tasks: train on oracle gold)");
  c.app->add_option("--tasks", a.tasks, "task JSONL");
  c.app->add_option("--data", a.data, "curated trajectory JSONL to train on instead");
  c.app->add_option("--out-checkpoint", a.checkpoint, "checkpoint file")->required();
  c.app->add_option("--out-report", a.report, "training report JSON")->required();
  c.app->add_option("--resume", a.resume, "continue from this checkpoint");
  add_reward_settings(c.settings);
  add_grpo_settings(c.settings);
  add_common(c.settings);
}

int run_train(Command& c, const TrainArgs& a) {
  c.resolve_settings();
  TrainingData data;
  if (!a.data.empty()) {
    if (!a.site.empty() || !a.tasks.empty()) throw UsageError("use either --data or --site/--tasks");
    const auto raw = read_input(a.data);
    c.input("data", raw);
    data = training_data_from_trajectories(parse_trajectories(raw));
  } else {
    if (a.site.empty() || a.tasks.empty()) throw UsageError("train needs --data or --site and --tasks");
    auto [site, tasks] = load_fixture(c, a.site, a.tasks);
    data = training_data_from_site(site, tasks);
  }
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    const auto raw = read_input(a.resume);
    c.input("resume", raw);
    resume = checkpoint_from_json(parse_json_text(raw, a.resume));
  }
  const auto rc = reward_config_from(c.settings);
  const auto grpo = grpo_config_from(c.settings);
  const auto hash = c.hash();
  std::size_t shown_epoch = 0;
  auto result = train(data, rc, grpo, hash, resume ? &*resume : nullptr,
                      [&](const IterationRecord& it) {
                        if (it.epoch != shown_epoch) {
                          shown_epoch = it.epoch;
                          std::cerr << "epoch " << it.epoch << " (" << to_string(it.stage) << ")\n";
                        }
                      });
  save_checkpoint(result.checkpoint, a.checkpoint);
  auto report = training_report_to_json(result.report);
  write_text_file(a.report, report.dump(2) + "\n");
  echo_config(a.report, c.resolved());
  std::cout << "final mean reward " << text::format_double(result.report.final_mean_reward)
            << ", exact " << text::format_double(result.report.final_exact_rate) << "\n";
  return 0;
}

// ---- pipeline / grade

struct PipelineArgs {
  std::string in, out, report, responder;
};

std::unique_ptr<GraderOracle> make_responder(Command& c, const std::string& path) {
  if (path.empty()) return nullptr;
  const auto raw = read_input(path);
  c.input("responder", raw);
  return std::make_unique<ScriptedResponder>(scripted_responder_from_json(parse_json_text(raw, path)));
}

void setup_pipeline(Command& c, PipelineArgs& a, bool grade_only) {
  c.app->add_option("--in", a.in, "raw trajectory JSONL")->required();
  c.app->add_option("--out", a.out, "output trajectory JSONL")->required();
  c.app->add_option("--responder", a.responder, "scripted answering model for --grader=oracle");
  if (!grade_only) c.app->add_option("--report", a.report, "pipeline report JSON");
  if (!grade_only) {
    c.settings.add("stages", SettingKind::Text, "filter,clean,refine,augment,chain,grade",
                   "comma-separated stages, in order");
  }
  c.settings.add("grader", SettingKind::Text, "rule", "difficulty grader", {"rule", "oracle"});
  c.settings.add("k", SettingKind::Integer, "5", "oracle queries per sample");
  add_common(c.settings);
}

std::vector<PipelineStage> parse_stages(const std::string& list) {
  std::vector<PipelineStage> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    auto s = pipeline_stage_from_string(item);
    if (!s) throw UsageError("unknown stage '" + item + "'");
    out.push_back(*s);
  }
  return out;
}

int run_pipeline_cmd(Command& c, const PipelineArgs& a, bool grade_only) {
  // The pipeline config file is the file layer of the stage settings.
  PipelineConfig cfg;
  if (!c.config_file.empty()) {
    const auto j = parse_json_input(c.config_file);
    c.input("config", j.dump());
    cfg = pipeline_config_from_json(j);
  }
  auto& s = c.settings;
  std::string stage_list;
  for (auto st : cfg.stages) stage_list += (stage_list.empty() ? "" : ",") + std::string(to_string(st));
  if (!grade_only) s.set("stages", stage_list, SettingSource::File);
  s.set("grader", cfg.grader == GraderKind::Oracle ? "oracle" : "rule", SettingSource::File);
  s.set("k", std::to_string(cfg.grade_k), SettingSource::File);
  s.set("seed", std::to_string(cfg.seed), SettingSource::File);
  c.apply_env_and_flags();
  cfg.stages = grade_only ? std::vector<PipelineStage>{PipelineStage::Grade} : parse_stages(s.text("stages"));
  cfg.grader = s.text("grader") == "oracle" ? GraderKind::Oracle : GraderKind::Rule;
  if (s.integer("k") < 1) throw UsageError("--k must be >= 1");
  cfg.grade_k = static_cast<std::size_t>(s.integer("k"));
  cfg.seed = static_cast<std::uint64_t>(s.integer("seed"));

  const auto raw = read_input(a.in);
  c.input("in", raw);
  const auto trajectories = parse_trajectories(raw);
  auto responder = make_responder(c, a.responder);
  const bool needs_oracle = cfg.grader == GraderKind::Oracle &&
                            std::find(cfg.stages.begin(), cfg.stages.end(), PipelineStage::Grade) !=
                                cfg.stages.end();
  if (needs_oracle && !responder) throw UsageError("--grader=oracle needs --responder");

  Json resolved = c.resolved();
  resolved["pipeline"] = pipeline_config_to_json(cfg);
  const auto hash = config_hash(resolved);
  auto run = run_pipeline(trajectories, cfg, responder.get(), workers_of(s));
  tag_config(run.output, hash);
  write_trajectories(run.output, a.out);
  echo_config(a.out, resolved);
  if (!a.report.empty()) {
    Json rep = Json::object();
    rep["config_hash"] = hash;
    rep["report"] = pipeline_report_to_json(run.report);
    write_text_file(a.report, rep.dump(2) + "\n");
  }
  std::cout << run.output.size() << " samples";
  for (const auto& [level, n] : run.report.levels) {
    if (n > 0) std::cout << ", " << level << " " << n;
  }
  std::cout << "\n";
  return 0;
}

// ---- curves

struct CurveArgs {
  std::string out, report;
};

void setup_curves(Command& c, CurveArgs& a) {
  c.app->add_option("--out", a.out, "CSV file")->required();
  c.app->add_option("--report", a.report, "training report JSON (training-report curves)");
  c.settings.add("what", SettingKind::Text, "process-weight", "process-weight | training-report");
  c.settings.add("n", SettingKind::Integer, "100", "steps per process-weight curve");
  c.settings.add("normalize_endpoints", SettingKind::Boolean, "false",
                 "rescale process weights to exactly gamma..1");
}

int run_curves(Command& c, const CurveArgs& a) {
  c.resolve_settings();
  const auto kind = curve_from_string(c.settings.text("what"));
  if (kind == CurveKind::ProcessWeight) {
    const auto n = c.settings.integer("n");
    if (n < 2) throw UsageError("--n must be >= 2");
    write_text_file(a.out, process_weight_csv(static_cast<std::size_t>(n), reference_curves(),
                                              c.settings.boolean("normalize_endpoints"), c.hash()));
  } else {
    if (a.report.empty()) throw UsageError("training-report curves need --report");
    const auto raw = read_input(a.report);
    c.input("report", raw);
    const auto j = parse_json_text(raw, a.report);
    write_text_file(a.out, training_curve_csv(training_report_from_json(j), c.hash()));
  }
  echo_config(a.out, c.resolved());
  return 0;
}

// ---- simulate

struct SimulateArgs {
  std::string site, tasks, task, state, actions, out;
};

void setup_simulate(Command& c, SimulateArgs& a) {
  c.app->add_option("--site", a.site, "site graph JSON")->required();
  c.app->add_option("--tasks", a.tasks, "task JSONL (with --task: start from its reset state)");
  c.app->add_option("--task", a.task, "task id to reset");
  c.app->add_option("--state", a.state, "state JSON (or an earlier simulate output)");
  c.app->add_option("--actions", a.actions,
                    "file or inline JSON: action list or agent response (omit to only print)");
  c.app->add_option("--out", a.out, "write the result JSON here too");
}

int run_simulate(Command& c, const SimulateArgs& a) {
  c.resolve_settings();
  const auto site = load_site(a.site);
  c.input("site", format_site(site));
  EnvState state;
  if (!a.state.empty()) {
    const auto raw = read_input(a.state);
    c.input("state", raw);
    const auto j = parse_json_text(raw, a.state);
    try {
      state = state_from_json(j.contains("state") ? j.at("state") : j);
    } catch (const Json::exception& e) {
      throw SchemaError(0, a.state, e.what());
    }
  } else if (!a.tasks.empty() && !a.task.empty()) {
    const auto tasks = load_tasks(a.tasks);
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const TaskSpec& t) { return t.id == a.task; });
    if (it == tasks.end()) throw UsageError("no task " + a.task);
    check_task(site, *it);
    c.input("task", dump_line(task_to_json(*it)));
    state = reset(site, *it).state;
  } else {
    throw UsageError("simulate needs --state or --tasks with --task");
  }

  Json out = Json::object();
  if (!a.actions.empty()) {
    const bool inline_json = a.actions.front() == '[' || a.actions.front() == '{';
    const auto raw = inline_json ? a.actions : read_input(a.actions);
    c.input("actions", raw);
    auto j = parse_json_text(raw, a.actions);
    if (j.is_array()) j = Json{{"think", "-"}, {"evaluation_previous_goal", "-"}, {"memory", "-"},
                               {"next_goal", "-"}, {"action", j}};
    const auto parsed = parse_response_json(j);
    if (!parsed.ok()) {
      const auto& f = parsed.verdict.failures.front();
      throw SchemaError(0, f.path, f.detail);
    }
    auto r = step(site, state, parsed.response->action);
    Json outcomes = Json::array();
    for (const auto& o : r.outcomes) outcomes.push_back(outcome_to_json(o));
    out["outcomes"] = std::move(outcomes);
    state = std::move(r.state);
  }
  out["config_hash"] = c.hash();
  out["snapshot"] = snapshot_to_json(snapshot(site, state));
  out["state"] = state_to_json(state);
  const auto text = out.dump(2) + "\n";
  if (!a.out.empty()) {
    write_text_file(a.out, text);
    echo_config(a.out, c.resolved());
  }
  std::cout << out["snapshot"].dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"riskforge: reward design, GRPO training and evaluation for web GUI agents"};
  app.require_subcommand(1);
  app.get_formatter()->column_width(44);

  std::map<std::string, std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& desc) -> Command& {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->app = app.add_subcommand(name, desc);
    auto& ref = *c;
    commands[name] = std::move(c);
    return ref;
  };

  ScoreArgs single_args, multi_args;
  OnlineArgs online_args;
  TrainArgs train_args;
  PipelineArgs pipeline_args, grade_args;
  CurveArgs curve_args;
  SimulateArgs sim_args;

  auto& single = make("score-single", "score single-step predictions against gold samples");
  setup_score(single, single_args);
  auto& multi = make("score-multi", "score multi-step predictions (teacher forced)");
  setup_score(multi, multi_args);
  auto& online = make("run-online", "run an agent on simulated tasks");
  setup_online(online, online_args);
  auto& tr = make("train", "GRPO training of the toy policy");
  setup_train(tr, train_args);
  auto& pipe = make("pipeline", "curate raw trajectories");
  setup_pipeline(pipe, pipeline_args, false);
  auto& grade = make("grade", "grade sample difficulty");
  setup_pipeline(grade, grade_args, true);
  auto& curves = make("curves", "emit curve data as CSV");
  setup_curves(curves, curve_args);
  auto& sim = make("simulate", "apply one action list to a simulator state and print the page");
  setup_simulate(sim, sim_args);
  for (auto& [name, c] : commands) c->expose();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (single.app->parsed()) return run_score(single, single_args, false);
    if (multi.app->parsed()) return run_score(multi, multi_args, true);
    if (online.app->parsed()) return run_online_cmd(online, online_args);
    if (tr.app->parsed()) return run_train(tr, train_args);
    if (pipe.app->parsed()) return run_pipeline_cmd(pipe, pipeline_args, false);
    if (grade.app->parsed()) return run_pipeline_cmd(grade, grade_args, true);
    if (curves.app->parsed()) return run_curves(curves, curve_args);
    if (sim.app->parsed()) return run_simulate(sim, sim_args);
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSchema;
  } catch (const FixtureError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFixture;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
