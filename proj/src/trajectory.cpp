#include "riskforge/trajectory.hpp"

#include <fstream>
#include <sstream>

#include "riskforge/errors.hpp"

namespace riskforge {

namespace {

const Json& require(const Json& j, const char* key, std::size_t line,
                    const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw SchemaError(line, path.empty() ? key : path + "." + key, "missing field");
  }
  return *it;
}

std::string get_string(const Json& j, const char* key, std::size_t line,
                       const std::string& path) {
  const auto& v = require(j, key, line, path);
  if (!v.is_string()) throw SchemaError(line, path + "." + key, "expected string");
  return v.get<std::string>();
}

std::int64_t get_int(const Json& j, const char* key, std::size_t line,
                     const std::string& path) {
  const auto& v = require(j, key, line, path);
  if (!v.is_number_integer()) throw SchemaError(line, path + "." + key, "expected integer");
  return v.get<std::int64_t>();
}

std::string dump_compact(const Json& j) {
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

}  // namespace

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Moderate: return "moderate";
    case Difficulty::Difficult: return "difficult";
    case Difficulty::Ungraded: return "ungraded";
  }
  return "ungraded";
}

std::string_view to_string(TrajectoryKind k) {
  return k == TrajectoryKind::SingleStep ? "single-step" : "multi-step";
}

std::string_view to_string(Source s) { return s == Source::Raw ? "raw" : "curated"; }

std::optional<Difficulty> difficulty_from_string(std::string_view s) {
  if (s == "easy") return Difficulty::Easy;
  if (s == "moderate") return Difficulty::Moderate;
  if (s == "difficult") return Difficulty::Difficult;
  if (s == "ungraded") return Difficulty::Ungraded;
  return std::nullopt;
}

void check_snapshot(const DomSnapshot& dom) {
  std::int64_t next = 0;
  for (std::size_t i = 0; i < dom.elements.size(); ++i) {
    const auto& e = dom.elements[i];
    const std::string path = "dom.elements[" + std::to_string(i) + "].index";
    if (e.interactive) {
      if (e.index != next) {
        throw SchemaError(0, path, "interactive indices must be contiguous from 0");
      }
      ++next;
    } else if (e.index != -1) {
      throw SchemaError(0, path, "non-interactive elements carry index -1");
    }
  }
  const auto n = static_cast<std::int64_t>(dom.elements.size());
  if (dom.viewport_start < 0 || (n > 0 && dom.viewport_start >= n) ||
      (n == 0 && dom.viewport_start != 0)) {
    throw SchemaError(0, "dom.viewport_start", "outside the element list");
  }
}

void renumber(Trajectory& t) {
  const auto n = static_cast<std::int64_t>(t.steps.size());
  for (std::int64_t i = 0; i < n; ++i) {
    t.steps[static_cast<std::size_t>(i)].step_index = i + 1;
    t.steps[static_cast<std::size_t>(i)].step_count = n;
  }
  t.kind = n >= 2 ? TrajectoryKind::MultiStep : TrajectoryKind::SingleStep;
}

void check_trajectory(const Trajectory& t) {
  const auto n = t.steps.size();
  if (t.kind == TrajectoryKind::SingleStep && n != 1) {
    throw SchemaError(0, "steps", "single-step trajectory must have exactly 1 step");
  }
  if (t.kind == TrajectoryKind::MultiStep && n < 2) {
    throw SchemaError(0, "steps", "multi-step trajectory needs at least 2 steps");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = t.steps[i];
    if (s.step_index != static_cast<std::int64_t>(i + 1) ||
        s.step_count != static_cast<std::int64_t>(n)) {
      throw SchemaError(0, "steps[" + std::to_string(i) + "].step_index",
                        "step numbering inconsistent with position");
    }
  }
}

Json snapshot_to_json(const DomSnapshot& d) {
  Json j = Json::object();
  j["url"] = d.url;
  Json elements = Json::array();
  for (const auto& e : d.elements) {
    Json je = Json::object();
    je["index"] = e.index;
    je["tag"] = e.tag;
    je["text"] = e.text;
    je["interactive"] = e.interactive;
    if (!e.attrs.empty()) {
      Json attrs = Json::object();
      for (const auto& [k, v] : e.attrs) attrs[k] = v;
      je["attrs"] = std::move(attrs);
    }
    elements.push_back(std::move(je));
  }
  j["elements"] = std::move(elements);
  j["viewport_start"] = d.viewport_start;
  j["tab_ids"] = d.tab_ids;
  j["history_depth"] = d.history_depth;
  return j;
}

DomSnapshot snapshot_from_json(const Json& j, std::size_t line, const std::string& path) {
  if (!j.is_object()) throw SchemaError(line, path, "expected object");
  DomSnapshot d;
  d.url = get_string(j, "url", line, path);
  const auto& elements = require(j, "elements", line, path);
  if (!elements.is_array()) throw SchemaError(line, path + ".elements", "expected list");
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const auto& je = elements[i];
    const std::string ep = path + ".elements[" + std::to_string(i) + "]";
    if (!je.is_object()) throw SchemaError(line, ep, "expected object");
    DomElement e;
    e.index = get_int(je, "index", line, ep);
    e.tag = get_string(je, "tag", line, ep);
    e.text = get_string(je, "text", line, ep);
    const auto& inter = require(je, "interactive", line, ep);
    if (!inter.is_boolean()) throw SchemaError(line, ep + ".interactive", "expected boolean");
    e.interactive = inter.get<bool>();
    if (auto it = je.find("attrs"); it != je.end()) {
      if (!it->is_object()) throw SchemaError(line, ep + ".attrs", "expected object");
      for (const auto& [k, v] : it->items()) {
        if (!v.is_string()) throw SchemaError(line, ep + ".attrs." + k, "expected string");
        e.attrs[k] = v.get<std::string>();
      }
    }
    d.elements.push_back(std::move(e));
  }
  d.viewport_start = get_int(j, "viewport_start", line, path);
  const auto& tabs = require(j, "tab_ids", line, path);
  if (!tabs.is_array()) throw SchemaError(line, path + ".tab_ids", "expected list");
  for (const auto& t : tabs) {
    if (!t.is_number_integer()) throw SchemaError(line, path + ".tab_ids", "expected integers");
    d.tab_ids.push_back(t.get<std::int64_t>());
  }
  d.history_depth = get_int(j, "history_depth", line, path);
  try {
    check_snapshot(d);
  } catch (const SchemaError& e) {
    throw SchemaError(line, path, e.what());
  }
  return d;
}

Json trajectory_to_json(const Trajectory& t) {
  Json j = Json::object();
  j["id"] = t.id;
  j["kind"] = std::string(to_string(t.kind));
  j["difficulty"] = std::string(to_string(t.difficulty));
  j["source"] = std::string(to_string(t.source));
  if (!t.provenance.empty()) j["provenance"] = t.provenance;
  Json steps = Json::array();
  for (const auto& s : t.steps) {
    Json js = Json::object();
    js["step_index"] = s.step_index;
    js["question"] = s.question;
    js["screenshot_ref"] = s.screenshot_ref ? Json(*s.screenshot_ref) : Json(nullptr);
    js["dom"] = snapshot_to_json(s.dom);
    if (s.gold) {
      js["gold"] = response_to_json(*s.gold);
    } else if (s.gold_malformed) {
      js["gold"] = *s.gold_malformed;
    }
    if (const auto* r = std::get_if<AgentResponse>(&s.predicted)) {
      js["predicted"] = response_to_json(*r);
    } else if (const auto* raw = std::get_if<std::string>(&s.predicted)) {
      js["predicted"] = *raw;
    }
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  return j;
}

Trajectory trajectory_from_json(const Json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "", "expected a JSON object");
  Trajectory t;
  t.id = get_string(j, "id", line, "");
  const auto kind = get_string(j, "kind", line, "");
  if (kind == "single-step") {
    t.kind = TrajectoryKind::SingleStep;
  } else if (kind == "multi-step") {
    t.kind = TrajectoryKind::MultiStep;
  } else {
    throw SchemaError(line, "kind", "expected single-step or multi-step");
  }
  auto diff = difficulty_from_string(get_string(j, "difficulty", line, ""));
  if (!diff) throw SchemaError(line, "difficulty", "unknown difficulty level");
  t.difficulty = *diff;
  if (auto it = j.find("source"); it != j.end()) {
    if (*it == "raw") {
      t.source = Source::Raw;
    } else if (*it == "curated") {
      t.source = Source::Curated;
    } else {
      throw SchemaError(line, "source", "expected raw or curated");
    }
  }
  if (auto it = j.find("provenance"); it != j.end()) {
    if (!it->is_array()) throw SchemaError(line, "provenance", "expected list");
    for (const auto& p : *it) {
      if (!p.is_string()) throw SchemaError(line, "provenance", "expected strings");
      t.provenance.push_back(p.get<std::string>());
    }
  }
  const auto& steps = require(j, "steps", line, "");
  if (!steps.is_array()) throw SchemaError(line, "steps", "expected list");
  const auto n = static_cast<std::int64_t>(steps.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& js = steps[static_cast<std::size_t>(i)];
    const std::string path = "steps[" + std::to_string(i) + "]";
    if (!js.is_object()) throw SchemaError(line, path, "expected object");
    StepRecord s;
    s.step_index = get_int(js, "step_index", line, path);
    if (s.step_index != i + 1) {
      throw SchemaError(line, path + ".step_index", "expected " + std::to_string(i + 1));
    }
    s.step_count = n;
    s.question = get_string(js, "question", line, path);
    const auto& shot = require(js, "screenshot_ref", line, path);
    if (shot.is_string()) {
      s.screenshot_ref = shot.get<std::string>();
    } else if (!shot.is_null()) {
      throw SchemaError(line, path + ".screenshot_ref", "expected string or null");
    }
    s.dom = snapshot_from_json(require(js, "dom", line, path), line, path + ".dom");
    if (auto it = js.find("gold"); it != js.end()) {
      auto parsed = parse_response_json(*it);
      if (parsed.ok()) {
        s.gold = std::move(*parsed.response);
      } else {
        s.gold_malformed = *it;
      }
    }
    if (auto it = js.find("predicted"); it != js.end()) {
      if (it->is_string()) {
        s.predicted = it->get<std::string>();
      } else if (it->is_object()) {
        auto parsed = parse_response_json(*it);
        if (parsed.ok()) {
          s.predicted = std::move(*parsed.response);
        } else {
          s.predicted = dump_compact(*it);
        }
      } else if (!it->is_null()) {
        throw SchemaError(line, path + ".predicted", "expected object or string");
      }
    }
    t.steps.push_back(std::move(s));
  }
  try {
    check_trajectory(t);
  } catch (const SchemaError& e) {
    throw SchemaError(line, e.path(), "trajectory invariant violated");
  }
  return t;
}

std::vector<Trajectory> parse_trajectories(std::string_view jsonl) {
  std::vector<Trajectory> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded()) throw SchemaError(line_no, "", "line is not valid JSON");
    out.push_back(trajectory_from_json(j, line_no));
  }
  return out;
}

std::string format_trajectories(const std::vector<Trajectory>& ts) {
  std::string out;
  for (const auto& t : ts) {
    out += dump_compact(trajectory_to_json(t));
    out += '\n';
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
  return parse_trajectories(read_text_file(path));
}

void write_trajectories(const std::vector<Trajectory>& ts,
                        const std::filesystem::path& path) {
  write_text_file(path, format_trajectories(ts));
}

}  // namespace riskforge
