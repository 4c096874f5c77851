#include "riskforge/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "riskforge/errors.hpp"
#include "riskforge/text.hpp"

namespace riskforge {

namespace {

std::string canonical_value(const Setting& s, std::string_view raw) {
  const auto bad = [&] {
    return std::invalid_argument("invalid value '" + std::string(raw) + "' for " + s.key);
  };
  switch (s.kind) {
    case SettingKind::Real: {
      double v = 0.0;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size() || !std::isfinite(v)) throw bad();
      return text::format_double(v);
    }
    case SettingKind::Integer: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || p != raw.data() + raw.size()) throw bad();
      return std::to_string(v);
    }
    case SettingKind::Boolean: {
      const auto f = text::casefold(raw);
      if (f == "true" || f == "1" || f == "yes" || f == "on") return "true";
      if (f == "false" || f == "0" || f == "no" || f == "off") return "false";
      throw bad();
    }
    case SettingKind::Text:
      if (!s.choices.empty() &&
          std::find(s.choices.begin(), s.choices.end(), raw) == s.choices.end()) {
        throw bad();
      }
      return std::string(raw);
  }
  throw bad();
}

}  // namespace

std::string_view to_string(SettingSource s) {
  switch (s) {
    case SettingSource::Default: return "default";
    case SettingSource::File: return "file";
    case SettingSource::Env: return "env";
    case SettingSource::Flag: return "flag";
  }
  return "default";
}

void Settings::add(std::string key, SettingKind kind, std::string default_value, std::string help,
                   std::vector<std::string> choices) {
  if (has(key)) throw std::invalid_argument("duplicate setting " + key);
  Setting s{std::move(key), kind, {}, std::move(help), SettingSource::Default, std::move(choices)};
  s.value = canonical_value(s, default_value);
  settings_.push_back(std::move(s));
}

bool Settings::has(std::string_view key) const {
  return std::any_of(settings_.begin(), settings_.end(),
                     [&](const Setting& s) { return s.key == key; });
}

const Setting& Settings::find(std::string_view key) const {
  for (const auto& s : settings_) {
    if (s.key == key) return s;
  }
  throw std::invalid_argument("unknown setting " + std::string(key));
}

void Settings::set(std::string_view key, std::string_view value, SettingSource source) {
  auto& s = const_cast<Setting&>(find(key));
  s.value = canonical_value(s, value);
  s.source = source;
}

void Settings::apply_file(const Json& j) {
  if (!j.is_object()) throw SchemaError(0, "", "config file must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (!has(key)) throw SchemaError(0, key, "unknown setting");
    std::string raw;
    if (v.is_string()) {
      raw = v.get<std::string>();
    } else if (v.is_boolean()) {
      raw = v.get<bool>() ? "true" : "false";
    } else if (v.is_number_integer()) {
      raw = std::to_string(v.get<std::int64_t>());
    } else if (v.is_number()) {
      raw = text::format_double(v.get<double>());
    } else {
      throw SchemaError(0, key, "expected a scalar value");
    }
    try {
      set(key, raw, SettingSource::File);
    } catch (const std::invalid_argument& e) {
      throw SchemaError(0, key, e.what());
    }
  }
}

void Settings::apply_env(const std::function<const char*(const char*)>& lookup) {
  for (const auto& s : settings_) {
    const auto name = env_name(s.key);
    if (const char* v = lookup(name.c_str())) {
      try {
        set(s.key, v, SettingSource::Env);
      } catch (const std::invalid_argument& e) {
        throw SchemaError(0, name, e.what());
      }
    }
  }
}

const std::string& Settings::text(std::string_view key) const { return find(key).value; }

double Settings::real(std::string_view key) const { return std::stod(find(key).value); }

std::int64_t Settings::integer(std::string_view key) const { return std::stoll(find(key).value); }

bool Settings::boolean(std::string_view key) const { return find(key).value == "true"; }

Json Settings::resolved() const {
  Json j = Json::object();
  for (const auto& s : settings_) {
    switch (s.kind) {
      case SettingKind::Real: j[s.key] = std::stod(s.value); break;
      case SettingKind::Integer: j[s.key] = std::stoll(s.value); break;
      case SettingKind::Boolean: j[s.key] = s.value == "true"; break;
      case SettingKind::Text: j[s.key] = s.value; break;
    }
  }
  return j;
}

std::string env_name(std::string_view key) {
  std::string out = "RISKFORGE_";
  for (char c : key) {
    out += (c == '-' || c == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string flag_name(std::string_view key) {
  std::string out = "--";
  for (char c : key) out += c == '_' ? '-' : c;
  return out;
}

std::string config_hash(const Json& resolved) {
  return text::hex64(text::fnv1a64(resolved.dump(-1, ' ', false, Json::error_handler_t::replace)));
}

void add_reward_settings(Settings& s) {
  const RewardConfig d;
  s.add("alpha", SettingKind::Real, text::format_double(d.alpha), "format reward coefficient");
  s.add("beta", SettingKind::Real, text::format_double(d.beta), "accuracy reward coefficient");
  s.add("gamma", SettingKind::Real, text::format_double(d.gamma), "process weight of the first step");
  s.add("delta", SettingKind::Real, text::format_double(d.delta), "process weight growth rate");
  s.add("f1_threshold", SettingKind::Real, text::format_double(d.f1_threshold),
        "a tool call matches iff its F1 exceeds this");
  s.add("weight_easy", SettingKind::Real, text::format_double(d.level_weights.easy),
        "level weight of easy prompts");
  s.add("weight_moderate", SettingKind::Real, text::format_double(d.level_weights.moderate),
        "level weight of moderate prompts");
  s.add("weight_difficult", SettingKind::Real, text::format_double(d.level_weights.difficult),
        "level weight of difficult prompts");
  s.add("normalize_endpoints", SettingKind::Boolean, "false",
        "rescale process weights to exactly gamma..1");
  s.add("allow_empty_think", SettingKind::Boolean, "false", "accept responses with empty think");
}

void add_grpo_settings(Settings& s) {
  const GrpoConfig d;
  s.add("group_size", SettingKind::Integer, std::to_string(d.group_size), "rollouts per prompt (G)");
  s.add("clip_eps", SettingKind::Real, text::format_double(d.clip_eps), "ratio clip epsilon");
  s.add("kl_coef", SettingKind::Real, text::format_double(d.kl_coef), "KL penalty coefficient");
  s.add("lr", SettingKind::Real, "0.1", "learning rate (toy policy scale)");
  s.add("epochs", SettingKind::Integer, "4", "training epochs");
  s.add("iterations", SettingKind::Integer, std::to_string(d.iterations_per_epoch),
        "iterations per epoch");
  s.add("updates", SettingKind::Integer, std::to_string(d.updates_per_iteration),
        "gradient steps per iteration");
  s.add("prompts_per_iteration", SettingKind::Integer, "0", "prompts per iteration (0 = all)");
  s.add("stage", SettingKind::Text, "schedule", "accuracy reward schedule",
        {"schedule", "binary-only", "stepwise-only"});
  s.add("early_epochs", SettingKind::Integer, std::to_string(d.early_epochs),
        "epochs with the stepwise reward under the schedule");
  s.add("length_cap", SettingKind::Integer, std::to_string(d.length_cap), "tokens per rollout");
  s.add("eval_samples", SettingKind::Integer, std::to_string(d.eval_samples),
        "samples per prompt for the final evaluation");
  s.add("optimizer", SettingKind::Text, "adam", "gradient ascent rule", {"sgd", "adam"});
  s.add("prior_strength", SettingKind::Real, text::format_double(d.prior_strength),
        "grammar prior of the initial policy");
}

RewardConfig reward_config_from(const Settings& s) {
  RewardConfig c;
  c.alpha = s.real("alpha");
  c.beta = s.real("beta");
  c.gamma = s.real("gamma");
  c.delta = s.real("delta");
  c.f1_threshold = s.real("f1_threshold");
  c.level_weights = {s.real("weight_easy"), s.real("weight_moderate"), s.real("weight_difficult")};
  c.normalize_process_endpoints = s.boolean("normalize_endpoints");
  c.parse.allow_empty_think = s.boolean("allow_empty_think");
  validate(c);
  return c;
}

GrpoConfig grpo_config_from(const Settings& s) {
  const auto count = [&](const char* key) {
    const auto v = s.integer(key);
    if (v < 0) throw std::invalid_argument(std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(v);
  };
  GrpoConfig c;
  c.group_size = count("group_size");
  c.clip_eps = s.real("clip_eps");
  c.kl_coef = s.real("kl_coef");
  c.learning_rate = s.real("lr");
  c.epochs = count("epochs");
  c.iterations_per_epoch = count("iterations");
  c.updates_per_iteration = count("updates");
  c.prompts_per_iteration = count("prompts_per_iteration");
  c.stage_schedule = *stage_schedule_from_string(s.text("stage"));
  c.early_epochs = count("early_epochs");
  c.length_cap = count("length_cap");
  c.eval_samples = count("eval_samples");
  c.optimizer = *optimizer_from_string(s.text("optimizer"));
  c.prior_strength = s.real("prior_strength");
  if (s.has("seed")) c.seed = static_cast<std::uint64_t>(s.integer("seed"));
  if (s.has("workers")) c.workers = count("workers");
  validate(c);
  return c;
}

}  // namespace riskforge
