#include "riskforge/webenv.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "riskforge/errors.hpp"
#include "riskforge/text.hpp"

namespace riskforge {

namespace {

bool is_interactive_tag(std::string_view tag) {
  return tag == "a" || tag == "button" || tag == "input" || tag == "select";
}

std::string page_location(const std::string& url) { return "pages[\"" + url + "\"]"; }

Page build_results_page(const SearchEntry& e, const std::vector<Page>& pages,
                        const std::map<std::string, std::size_t>& by_url) {
  Page p;
  p.url = results_url(e.key);
  p.title = "Results for " + e.key;
  ElementSpec heading;
  heading.tag = "h1";
  heading.text = p.title;
  p.elements.push_back(std::move(heading));
  for (const auto& u : e.urls) {
    ElementSpec link;
    link.tag = "a";
    link.text = pages[by_url.at(u)].title;
    link.target = u;
    p.elements.push_back(std::move(link));
  }
  for (std::size_t i = 0; i < p.elements.size(); ++i) {
    if (p.elements[i].interactive()) p.interactive.push_back(i);
  }
  return p;
}

}  // namespace

bool ElementSpec::interactive() const { return is_interactive_tag(tag); }

const ElementSpec* Page::interactive_element(std::int64_t ordinal) const {
  if (ordinal < 0 || static_cast<std::size_t>(ordinal) >= interactive.size()) return nullptr;
  return &elements[interactive[static_cast<std::size_t>(ordinal)]];
}

std::optional<std::size_t> Page::position_of(std::int64_t ordinal) const {
  if (ordinal < 0 || static_cast<std::size_t>(ordinal) >= interactive.size()) return std::nullopt;
  return interactive[static_cast<std::size_t>(ordinal)];
}

std::string results_url(const std::string& search_key) {
  std::string out = "search://";
  for (char c : search_key) out += c == ' ' ? '+' : c;
  return out;
}

void SiteGraph::finalize() {
  by_url_.clear();
  results_by_url_.clear();
  result_pages_.clear();
  if (page_size < 1) throw FixtureError("page_size", "must be >= 1");
  std::set<std::string> fact_keys;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    auto& p = pages[i];
    if (p.url.empty()) throw FixtureError("pages", "empty page url");
    if (text::starts_with(p.url, "search://")) {
      throw FixtureError(page_location(p.url), "the search:// scheme is reserved");
    }
    if (!by_url_.emplace(p.url, i).second) {
      throw FixtureError(page_location(p.url), "duplicate page url");
    }
    p.interactive.clear();
    for (std::size_t e = 0; e < p.elements.size(); ++e) {
      if (p.elements[e].interactive()) p.interactive.push_back(e);
    }
    for (const auto& [key, value] : p.facts) {
      if (!fact_keys.insert(key).second) {
        throw FixtureError(page_location(p.url) + ".facts." + key,
                           "fact key already defined on another page");
      }
    }
  }
  if (!by_url_.count(start_url)) throw FixtureError("start_url", "not a page: " + start_url);

  for (const auto& p : pages) {
    for (std::size_t e = 0; e < p.elements.size(); ++e) {
      const auto& el = p.elements[e];
      const std::string loc = page_location(p.url) + ".elements[" + std::to_string(e) + "]";
      if (el.tag.empty()) throw FixtureError(loc, "missing tag");
      if (el.tag == "a" || el.tag == "button") {
        if (!el.target) throw FixtureError(loc, "link without target");
        if (!el.dead && !by_url_.count(*el.target)) {
          throw FixtureError(loc, "link target is not a page: " + *el.target);
        }
      } else if (el.target) {
        throw FixtureError(loc, "only a/button elements may have a target");
      }
      if (el.dead && el.tag != "a") throw FixtureError(loc, "only links may be dead");
      if (el.submit) {
        if (el.tag != "input") throw FixtureError(loc, "only inputs may submit");
        if (!by_url_.count(el.submit->target)) {
          throw FixtureError(loc, "submit target is not a page: " + el.submit->target);
        }
      }
      if (el.tag == "select" && el.options.empty()) throw FixtureError(loc, "select without options");
      if (el.tag != "select" && !el.options.empty()) throw FixtureError(loc, "options outside a select");
      if (el.requires_value) {
        if (el.tag != "button") throw FixtureError(loc, "only buttons may have requirements");
        const auto* dep = p.interactive_element(el.requires_value->element);
        if (!dep || (dep->tag != "input" && dep->tag != "select")) {
          throw FixtureError(loc, "requirement must reference an input or select");
        }
      }
    }
  }

  std::set<std::string> keys;
  for (std::size_t i = 0; i < search_index.size(); ++i) {
    const auto& e = search_index[i];
    const std::string loc = "search_index[\"" + e.key + "\"]";
    if (text::loose_tokens(e.key).empty()) throw FixtureError(loc, "empty search key");
    if (!keys.insert(e.key).second) throw FixtureError(loc, "duplicate search key");
    if (e.urls.empty()) throw FixtureError(loc, "no result urls");
    for (const auto& u : e.urls) {
      if (!by_url_.count(u)) throw FixtureError(loc, "result is not a page: " + u);
    }
    result_pages_.push_back(build_results_page(e, pages, by_url_));
    results_by_url_.emplace(result_pages_.back().url, result_pages_.size() - 1);
  }
}

const Page* SiteGraph::find(const std::string& url) const {
  if (auto it = by_url_.find(url); it != by_url_.end()) return &pages[it->second];
  if (auto it = results_by_url_.find(url); it != results_by_url_.end()) {
    return &result_pages_[it->second];
  }
  return nullptr;
}

const Page* SiteGraph::page_with_fact(const std::string& key) const {
  for (const auto& p : pages) {
    for (const auto& f : p.facts) {
      if (f.first == key) return &p;
    }
  }
  return nullptr;
}

std::optional<std::string> SiteGraph::fact_value(const std::string& key) const {
  for (const auto& p : pages) {
    for (const auto& f : p.facts) {
      if (f.first == key) return f.second;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- JSON

namespace {

const Json& need(const Json& j, const char* key, const std::string& loc) {
  if (!j.is_object() || !j.contains(key)) throw FixtureError(loc, std::string("missing ") + key);
  return j.at(key);
}

std::string need_string(const Json& j, const char* key, const std::string& loc) {
  const auto& v = need(j, key, loc);
  if (!v.is_string()) throw FixtureError(loc + "." + key, "expected string");
  return v.get<std::string>();
}

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                const std::string& loc) {
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw FixtureError(loc, "unknown key " + k);
    }
  }
}

ElementSpec element_from_json(const Json& j, const std::string& loc) {
  if (!j.is_object()) throw FixtureError(loc, "expected object");
  check_keys(j, {"tag", "text", "target", "dead", "submit", "options", "requires"}, loc);
  ElementSpec el;
  el.tag = need_string(j, "tag", loc);
  el.text = need_string(j, "text", loc);
  if (j.contains("target")) el.target = need_string(j, "target", loc);
  if (j.contains("dead")) {
    if (!j["dead"].is_boolean()) throw FixtureError(loc + ".dead", "expected boolean");
    el.dead = j["dead"].get<bool>();
  }
  if (j.contains("submit")) {
    const auto& s = j["submit"];
    el.submit = SubmitSpec{need_string(s, "accept", loc + ".submit"),
                           need_string(s, "target", loc + ".submit")};
  }
  if (j.contains("options")) {
    if (!j["options"].is_array()) throw FixtureError(loc + ".options", "expected list");
    for (const auto& o : j["options"]) {
      if (!o.is_string()) throw FixtureError(loc + ".options", "expected strings");
      el.options.push_back(o.get<std::string>());
    }
  }
  if (j.contains("requires")) {
    const auto& r = j["requires"];
    const auto& e = need(r, "element", loc + ".requires");
    if (!e.is_number_integer()) throw FixtureError(loc + ".requires.element", "expected integer");
    el.requires_value = Requirement{e.get<std::int64_t>(), need_string(r, "value", loc + ".requires")};
  }
  return el;
}

Json element_to_json(const ElementSpec& el) {
  Json j = Json::object();
  j["tag"] = el.tag;
  j["text"] = el.text;
  if (el.target) j["target"] = *el.target;
  if (el.dead) j["dead"] = true;
  if (el.submit) j["submit"] = Json{{"accept", el.submit->accept}, {"target", el.submit->target}};
  if (!el.options.empty()) j["options"] = el.options;
  if (el.requires_value) {
    j["requires"] = Json{{"element", el.requires_value->element},
                         {"value", el.requires_value->value}};
  }
  return j;
}

}  // namespace

SiteGraph site_from_json(const Json& j) {
  if (!j.is_object()) throw FixtureError("$", "expected object");
  check_keys(j, {"schema_version", "start_url", "page_size", "pages", "search_index"}, "$");
  const auto& v = need(j, "schema_version", "$");
  if (!v.is_number_integer() || v.get<int>() != kFixtureSchemaVersion) {
    throw FixtureError("schema_version", "unsupported version");
  }
  SiteGraph site;
  site.start_url = need_string(j, "start_url", "$");
  const auto& ps = need(j, "page_size", "$");
  if (!ps.is_number_integer()) throw FixtureError("page_size", "expected integer");
  site.page_size = ps.get<std::int64_t>();
  const auto& pages = need(j, "pages", "$");
  if (!pages.is_object()) throw FixtureError("pages", "expected object keyed by url");
  for (const auto& [url, pj] : pages.items()) {
    const std::string loc = page_location(url);
    if (!pj.is_object()) throw FixtureError(loc, "expected object");
    check_keys(pj, {"title", "elements", "facts"}, loc);
    Page p;
    p.url = url;
    p.title = need_string(pj, "title", loc);
    const auto& els = need(pj, "elements", loc);
    if (!els.is_array()) throw FixtureError(loc + ".elements", "expected list");
    for (std::size_t i = 0; i < els.size(); ++i) {
      p.elements.push_back(element_from_json(els[i], loc + ".elements[" + std::to_string(i) + "]"));
    }
    if (pj.contains("facts")) {
      if (!pj["facts"].is_object()) throw FixtureError(loc + ".facts", "expected object");
      for (const auto& [k, fv] : pj["facts"].items()) {
        if (!fv.is_string()) throw FixtureError(loc + ".facts." + k, "expected string");
        p.facts.emplace_back(k, fv.get<std::string>());
      }
    }
    site.pages.push_back(std::move(p));
  }
  if (j.contains("search_index")) {
    const auto& si = j["search_index"];
    if (!si.is_object()) throw FixtureError("search_index", "expected object");
    for (const auto& [key, urls] : si.items()) {
      SearchEntry e{key, {}};
      if (!urls.is_array()) throw FixtureError("search_index." + key, "expected list");
      for (const auto& u : urls) {
        if (!u.is_string()) throw FixtureError("search_index." + key, "expected strings");
        e.urls.push_back(u.get<std::string>());
      }
      site.search_index.push_back(std::move(e));
    }
  }
  site.finalize();
  return site;
}

Json site_to_json(const SiteGraph& site) {
  Json j = Json::object();
  j["schema_version"] = kFixtureSchemaVersion;
  j["start_url"] = site.start_url;
  j["page_size"] = site.page_size;
  Json pages = Json::object();
  for (const auto& p : site.pages) {
    Json pj = Json::object();
    pj["title"] = p.title;
    Json els = Json::array();
    for (const auto& el : p.elements) els.push_back(element_to_json(el));
    pj["elements"] = std::move(els);
    Json facts = Json::object();
    for (const auto& [k, v] : p.facts) facts[k] = v;
    pj["facts"] = std::move(facts);
    pages[p.url] = std::move(pj);
  }
  j["pages"] = std::move(pages);
  Json si = Json::object();
  for (const auto& e : site.search_index) si[e.key] = e.urls;
  j["search_index"] = std::move(si);
  return j;
}

SiteGraph load_site(const std::filesystem::path& path) {
  std::string raw;
  try {
    raw = read_text_file(path);
  } catch (const std::exception& e) {
    throw FixtureError(path.string(), e.what());
  }
  Json j = Json::parse(raw, nullptr, false);
  if (j.is_discarded()) throw FixtureError(path.string(), "not valid JSON");
  return site_from_json(j);
}

std::string format_site(const SiteGraph& site) { return site_to_json(site).dump(2) + "\n"; }

void save_site(const SiteGraph& site, const std::filesystem::path& path) {
  write_text_file(path, format_site(site));
}

// ---------------------------------------------------------------- tasks

namespace {

std::string_view category_name(TaskCategory c) {
  return c == TaskCategory::WebsiteVerification ? "website_verification" : "information_search";
}

}  // namespace

Json task_to_json(const TaskSpec& t) {
  Json j = Json::object();
  j["schema_version"] = kFixtureSchemaVersion;
  j["id"] = t.id;
  j["instruction"] = t.instruction;
  j["category"] = category_name(t.category);
  j["required_facts"] = t.required_facts;
  j["target_url"] = t.target_url ? Json(*t.target_url) : Json(nullptr);
  j["max_steps"] = t.max_steps;
  return j;
}

TaskSpec task_from_json(const Json& j, std::size_t line) {
  const std::string loc = "tasks line " + std::to_string(line);
  if (!j.is_object()) throw FixtureError(loc, "expected object");
  check_keys(j, {"schema_version", "id", "instruction", "category", "required_facts",
                 "target_url", "max_steps"}, loc);
  const auto& v = need(j, "schema_version", loc);
  if (!v.is_number_integer() || v.get<int>() != kFixtureSchemaVersion) {
    throw FixtureError(loc, "unsupported schema_version");
  }
  TaskSpec t;
  t.id = need_string(j, "id", loc);
  t.instruction = need_string(j, "instruction", loc);
  const std::string cat = need_string(j, "category", loc);
  if (cat == "information_search") {
    t.category = TaskCategory::InformationSearch;
  } else if (cat == "website_verification") {
    t.category = TaskCategory::WebsiteVerification;
  } else {
    throw FixtureError(loc + ".category", "unknown category " + cat);
  }
  if (j.contains("required_facts")) {
    const auto& rf = j["required_facts"];
    if (!rf.is_array()) throw FixtureError(loc + ".required_facts", "expected list");
    for (const auto& f : rf) {
      if (!f.is_string()) throw FixtureError(loc + ".required_facts", "expected strings");
      t.required_facts.push_back(f.get<std::string>());
    }
  }
  if (j.contains("target_url") && !j["target_url"].is_null()) {
    t.target_url = need_string(j, "target_url", loc);
  }
  if (j.contains("max_steps")) {
    if (!j["max_steps"].is_number_integer()) throw FixtureError(loc + ".max_steps", "expected integer");
    t.max_steps = j["max_steps"].get<std::int64_t>();
    if (t.max_steps < 1) throw FixtureError(loc + ".max_steps", "must be >= 1");
  }
  if (t.required_facts.empty() && !t.target_url) {
    throw FixtureError(loc, "task needs required_facts or a target_url");
  }
  return t;
}

std::vector<TaskSpec> parse_tasks(std::string_view jsonl) {
  std::vector<TaskSpec> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    ++line_no;
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == jsonl.size()) break;
      continue;
    }
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FixtureError("tasks line " + std::to_string(line_no), "not valid JSON");
    out.push_back(task_from_json(j, line_no));
    if (end == jsonl.size()) break;
  }
  return out;
}

std::vector<TaskSpec> load_tasks(const std::filesystem::path& path) {
  std::string raw;
  try {
    raw = read_text_file(path);
  } catch (const std::exception& e) {
    throw FixtureError(path.string(), e.what());
  }
  return parse_tasks(raw);
}

void check_task(const SiteGraph& site, const TaskSpec& task) {
  for (const auto& f : task.required_facts) {
    if (!site.page_with_fact(f)) throw FixtureError("task " + task.id, "unknown fact " + f);
  }
  if (task.target_url && !site.find(*task.target_url)) {
    throw FixtureError("task " + task.id, "unknown target_url " + *task.target_url);
  }
}

// ---------------------------------------------------------------- state JSON

Json state_to_json(const EnvState& s) {
  Json j = Json::object();
  j["schema_version"] = kFixtureSchemaVersion;
  Json tabs = Json::array();
  for (const auto& t : s.tabs) {
    tabs.push_back(Json{{"url", t.url},
                        {"scroll", t.scroll},
                        {"history", t.history},
                        {"focus", t.focus ? Json(*t.focus) : Json(nullptr)}});
  }
  j["tabs"] = std::move(tabs);
  j["active_tab"] = s.active_tab;
  Json inputs = Json::array();
  for (const auto& [key, value] : s.input_values) {
    inputs.push_back(Json{{"url", key.first}, {"index", key.second}, {"value", value}});
  }
  j["input_values"] = std::move(inputs);
  Json files = Json::object();
  for (const auto& [k, v] : s.virtual_files) files[k] = v;
  j["virtual_files"] = std::move(files);
  j["clock"] = s.clock;
  j["step_counter"] = s.step_counter;
  j["max_steps"] = s.max_steps;
  j["terminated"] = s.terminated
                        ? Json{{"text", s.terminated->text}, {"success", s.terminated->success}}
                        : Json(nullptr);
  j["extracted_facts"] = std::vector<std::string>(s.extracted_facts.begin(), s.extracted_facts.end());
  j["extract_counter"] = s.extract_counter;
  return j;
}

EnvState state_from_json(const Json& j) {
  try {
    EnvState s;
    for (const auto& t : j.at("tabs")) {
      Tab tab;
      tab.url = t.at("url").get<std::string>();
      tab.scroll = t.at("scroll").get<std::int64_t>();
      tab.history = t.at("history").get<std::vector<std::string>>();
      if (!t.at("focus").is_null()) tab.focus = t.at("focus").get<std::int64_t>();
      s.tabs.push_back(std::move(tab));
    }
    s.active_tab = j.at("active_tab").get<std::size_t>();
    if (s.tabs.empty() || s.active_tab >= s.tabs.size()) {
      throw SchemaError(0, "active_tab", "no such tab");
    }
    for (const auto& iv : j.at("input_values")) {
      s.input_values[{iv.at("url").get<std::string>(), iv.at("index").get<std::int64_t>()}] =
          iv.at("value").get<std::string>();
    }
    for (const auto& [k, v] : j.at("virtual_files").items()) s.virtual_files[k] = v.get<std::string>();
    s.clock = j.at("clock").get<std::int64_t>();
    s.step_counter = j.at("step_counter").get<std::int64_t>();
    s.max_steps = j.at("max_steps").get<std::int64_t>();
    if (!j.at("terminated").is_null()) {
      s.terminated = DoneRecord{j["terminated"].at("text").get<std::string>(),
                                j["terminated"].at("success").get<bool>()};
    }
    for (const auto& f : j.at("extracted_facts")) s.extracted_facts.insert(f.get<std::string>());
    s.extract_counter = j.at("extract_counter").get<std::int64_t>();
    return s;
  } catch (const Json::exception& e) {
    throw SchemaError(0, "state", e.what());
  }
}

Json outcome_to_json(const ActionOutcome& o) {
  return Json{{"tool", o.tool}, {"ok", o.ok}, {"message", o.message}};
}

// ---------------------------------------------------------------- dynamics

ResetResult reset(const SiteGraph& site, const TaskSpec& task, std::uint64_t) {
  EnvState s;
  s.tabs.push_back(Tab{site.start_url, 0, {}, std::nullopt});
  s.max_steps = task.max_steps;
  return {s, snapshot(site, s)};
}

DomSnapshot snapshot(const SiteGraph& site, const EnvState& state) {
  const Tab& tab = state.tab();
  const Page* page = site.find(tab.url);
  DomSnapshot d;
  d.url = tab.url;
  d.viewport_start = tab.scroll;
  d.history_depth = static_cast<std::int64_t>(tab.history.size());
  for (std::size_t i = 0; i < state.tabs.size(); ++i) d.tab_ids.push_back(static_cast<std::int64_t>(i));
  if (!page) return d;
  std::int64_t ordinal = 0;
  for (const auto& el : page->elements) {
    DomElement de;
    de.tag = el.tag;
    de.text = el.text;
    de.interactive = el.interactive();
    if (de.interactive) {
      de.index = ordinal;
      if (el.target) de.attrs["href"] = el.dead ? "external:" + *el.target : *el.target;
      if (!el.options.empty()) {
        std::string joined;
        for (const auto& o : el.options) joined += (joined.empty() ? "" : "|") + o;
        de.attrs["options"] = joined;
      }
      if (auto it = state.input_values.find({tab.url, ordinal}); it != state.input_values.end()) {
        de.attrs["value"] = it->second;
      }
      if (tab.focus == ordinal) de.attrs["focused"] = "true";
      ++ordinal;
    }
    d.elements.push_back(std::move(de));
  }
  return d;
}

namespace {

struct Applied {
  bool ok = false;
  std::string message;
};

Applied fail(std::string m) { return {false, std::move(m)}; }
Applied pass(std::string m) { return {true, std::move(m)}; }

std::int64_t max_scroll(const SiteGraph& site, const Page& page) {
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(page.elements.size()) - site.page_size);
}

void navigate(Tab& tab, const std::string& url) {
  tab.history.push_back(tab.url);
  tab.url = url;
  tab.scroll = 0;
  tab.focus.reset();
}

// Resolves a visible interactive element or explains why not.
const ElementSpec* visible(const SiteGraph& site, const Page& page, const Tab& tab,
                           std::int64_t ordinal, std::string& why) {
  const auto pos = page.position_of(ordinal);
  if (!pos) {
    why = "no interactive element with index " + std::to_string(ordinal);
    return nullptr;
  }
  const auto p = static_cast<std::int64_t>(*pos);
  if (p < tab.scroll || p >= tab.scroll + site.page_size) {
    why = "element " + std::to_string(ordinal) + " is outside the viewport";
    return nullptr;
  }
  return &page.elements[*pos];
}

struct Applier {
  const SiteGraph& site;
  EnvState& s;

  const Page& page() const { return *site.find(s.tab().url); }

  Applied operator()(const act::SearchGoogle& a) {
    const auto q = text::loose_tokens(a.query);
    const std::set<std::string> qs(q.begin(), q.end());
    const SearchEntry* best = nullptr;
    std::size_t best_overlap = 0;
    for (const auto& e : site.search_index) {
      const auto kt = text::loose_tokens(e.key);
      std::size_t overlap = 0;
      for (const auto& t : std::set<std::string>(kt.begin(), kt.end())) overlap += qs.count(t);
      if (overlap > best_overlap) {
        best = &e;
        best_overlap = overlap;
      }
    }
    if (!best) return fail("no results for \"" + a.query + "\"");
    navigate(s.tab(), results_url(best->key));
    return pass("searched \"" + a.query + "\"");
  }

  Applied operator()(const act::Done& a) {
    s.terminated = DoneRecord{a.text, a.success};
    return pass("task finished");
  }

  Applied operator()(const act::ClickElementByIndex& a) {
    std::string why;
    const auto* el = visible(site, page(), s.tab(), a.index, why);
    if (!el) return fail(why);
    if (el->tag == "input" || el->tag == "select") {
      s.tab().focus = a.index;
      return pass("focused element " + std::to_string(a.index));
    }
    if (el->dead) return fail("navigation error: " + *el->target + " is unreachable");
    if (!enabled(s, *el)) return fail("button is disabled until the form is filled in");
    navigate(s.tab(), *el->target);
    return pass("clicked element " + std::to_string(a.index));
  }

  Applied operator()(const act::Scroll& a) {
    const auto& p = page();
    const auto delta = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(a.num_pages * static_cast<double>(site.page_size))));
    const auto target = a.down ? s.tab().scroll + delta : s.tab().scroll - delta;
    s.tab().scroll = std::clamp<std::int64_t>(target, 0, max_scroll(site, p));
    return pass("scrolled to element " + std::to_string(s.tab().scroll));
  }

  Applied operator()(const act::SwitchTab& a) {
    if (a.page_id < 0 || static_cast<std::size_t>(a.page_id) >= s.tabs.size()) {
      return fail("no tab " + std::to_string(a.page_id));
    }
    s.active_tab = static_cast<std::size_t>(a.page_id);
    return pass("switched to tab " + std::to_string(a.page_id));
  }

  Applied operator()(const act::GoBack&) {
    auto& tab = s.tab();
    if (tab.history.empty()) return fail("no previous page");
    tab.url = tab.history.back();
    tab.history.pop_back();
    tab.scroll = 0;
    tab.focus.reset();
    return pass("went back to " + tab.url);
  }

  Applied operator()(const act::ExtractStructuredData& a) {
    const auto& p = page();
    std::string content;
    std::vector<std::string> found;
    for (const auto& [key, value] : p.facts) {
      if (text::token_contained(key, a.query)) {
        content += key + ": " + value + "\n";
        found.push_back(key);
      }
    }
    if (a.extract_links) {
      for (const auto& el : p.elements) {
        if (el.tag == "a" && el.target) content += "link: " + el.text + " -> " + *el.target + "\n";
      }
    }
    if (content.empty()) return fail("nothing on the page matches \"" + a.query + "\"");
    s.extracted_facts.insert(found.begin(), found.end());
    ++s.extract_counter;
    const std::string name = "extract_" + std::to_string(s.extract_counter);
    s.virtual_files[name] = content;
    return pass(content);
  }

  Applied operator()(const act::InputText& a) {
    std::string why;
    const auto* el = visible(site, page(), s.tab(), a.index, why);
    if (!el) return fail(why);
    if (el->tag != "input") return fail("element " + std::to_string(a.index) + " is not a text input");
    s.input_values[{s.tab().url, a.index}] = a.text;
    s.tab().focus = a.index;
    return pass("typed into element " + std::to_string(a.index));
  }

  Applied operator()(const act::Refresh&) {
    const std::string url = s.tab().url;
    std::erase_if(s.input_values, [&](const auto& kv) { return kv.first.first == url; });
    s.tab().scroll = 0;
    s.tab().focus.reset();
    return pass("reloaded " + url);
  }

  Applied operator()(const act::Wait& a) {
    s.clock += a.seconds;
    return pass("waited " + std::to_string(a.seconds) + "s");
  }

  Applied operator()(const act::ScrollToText& a) {
    const auto needle = text::casefold(a.text);
    if (needle.empty()) return fail("empty search text");
    const auto& p = page();
    for (std::size_t i = 0; i < p.elements.size(); ++i) {
      if (text::casefold(p.elements[i].text).find(needle) != std::string::npos) {
        s.tab().scroll = std::min(static_cast<std::int64_t>(i), max_scroll(site, p));
        return pass("scrolled to \"" + a.text + "\"");
      }
    }
    return fail("text not found: " + a.text);
  }

  Applied operator()(const act::GoToUrl& a) {
    if (!site.find(a.url)) return fail("navigation error: " + a.url + " is unreachable");
    if (a.new_tab) {
      s.tabs.push_back(Tab{a.url, 0, {}, std::nullopt});
      s.active_tab = s.tabs.size() - 1;
    } else {
      navigate(s.tab(), a.url);
    }
    return pass("opened " + a.url);
  }

  Applied operator()(const act::ReadFile& a) {
    auto it = s.virtual_files.find(a.file_name);
    if (it == s.virtual_files.end()) return fail("no file " + a.file_name);
    return pass(it->second);
  }

  Applied operator()(const act::SendKeys& a) {
    if (a.keys != "Enter") return pass("sent " + a.keys);
    const auto& tab = s.tab();
    if (!tab.focus) return fail("no focused element");
    const auto* el = page().interactive_element(*tab.focus);
    if (!el || !el->submit) return pass("sent Enter");
    const auto it = s.input_values.find({tab.url, *tab.focus});
    const std::string value = it == s.input_values.end() ? "" : it->second;
    if (value.empty() || !text::token_contained(el->submit->accept, value)) {
      return fail("the form rejected the input");
    }
    navigate(s.tab(), el->submit->target);
    return pass("submitted form");
  }

  Applied operator()(const act::SelectDropdownOption& a) {
    std::string why;
    const auto* el = visible(site, page(), s.tab(), a.index, why);
    if (!el) return fail(why);
    if (el->tag != "select") return fail("element " + std::to_string(a.index) + " is not a dropdown");
    for (const auto& o : el->options) {
      if (text::casefold(o) == text::casefold(a.text)) {
        s.input_values[{s.tab().url, a.index}] = o;
        s.tab().focus = a.index;
        return pass("selected " + o);
      }
    }
    return fail("no option \"" + a.text + "\"");
  }
};

}  // namespace

StepResult step(const SiteGraph& site, const EnvState& state, std::span<const Action> actions) {
  if (state.terminated) throw AlreadyTerminated();
  if (state.step_counter >= state.max_steps) throw Error("step cap reached");
  StepResult out;
  out.state = state;
  out.state.step_counter += 1;
  for (const auto& action : actions) {
    ActionOutcome o;
    o.tool = std::string(tool_name(action));
    if (out.state.terminated) {
      o.message = "discarded: the task already finished";
      out.outcomes.push_back(std::move(o));
      continue;
    }
    try {
      validate(action);
    } catch (const InvalidAction& e) {
      o.message = e.what();
      out.outcomes.push_back(std::move(o));
      continue;
    }
    EnvState trial = out.state;
    const Applied r = std::visit(Applier{site, trial}, action);
    o.ok = r.ok;
    o.message = r.message;
    if (r.ok) out.state = std::move(trial);
    out.outcomes.push_back(std::move(o));
  }
  out.snapshot = snapshot(site, out.state);
  return out;
}

bool enabled(const EnvState& s, const ElementSpec& el) {
  if (!el.requires_value) return true;
  const auto it = s.input_values.find({s.tab().url, el.requires_value->element});
  return it != s.input_values.end() &&
         text::casefold(it->second) == text::casefold(el.requires_value->value);
}

Verdict judge(const SiteGraph& site, const TaskSpec& task, const EnvState& s) {
  Verdict v;
  v.completed = s.terminated.has_value() && s.step_counter <= s.max_steps;
  if (!v.completed || !s.terminated->success) return v;
  for (const auto& key : task.required_facts) {
    const auto value = site.fact_value(key);
    if (!value || !text::token_contained(*value, s.terminated->text)) return v;
  }
  if (task.target_url && s.tab().url != *task.target_url) return v;
  v.success = true;
  return v;
}

}  // namespace riskforge
