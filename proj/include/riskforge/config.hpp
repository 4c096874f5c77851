#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "riskforge/grpo.hpp"
#include "riskforge/reward.hpp"

namespace riskforge {

enum class SettingKind { Real, Integer, Boolean, Text };
enum class SettingSource { Default, File, Env, Flag };

std::string_view to_string(SettingSource s);

struct Setting {
  std::string key;  // snake_case; flag --key-with-dashes, env RISKFORGE_KEY
  SettingKind kind = SettingKind::Text;
  std::string value;  // canonical text
  std::string help;
  SettingSource source = SettingSource::Default;
  std::vector<std::string> choices;  // Text only; empty = free text
};

// Ordered registry of named settings. Sources are applied lowest first
// (file, then env, then flags) so later ones win.
class Settings {
 public:
  void add(std::string key, SettingKind kind, std::string default_value, std::string help,
           std::vector<std::string> choices = {});

  bool has(std::string_view key) const;
  const std::vector<Setting>& all() const { return settings_; }

  // Throws std::invalid_argument on an unknown key or a malformed value.
  void set(std::string_view key, std::string_view value, SettingSource source);

  // Flat JSON object; throws SchemaError on unknown keys or wrong types.
  void apply_file(const Json& j);
  // RISKFORGE_<KEY> variables; malformed values throw SchemaError.
  void apply_env(const std::function<const char*(const char*)>& lookup);

  const std::string& text(std::string_view key) const;
  double real(std::string_view key) const;
  std::int64_t integer(std::string_view key) const;
  bool boolean(std::string_view key) const;

  // Typed key/value object in registration order.
  Json resolved() const;

 private:
  const Setting& find(std::string_view key) const;
  std::vector<Setting> settings_;
};

std::string env_name(std::string_view key);
std::string flag_name(std::string_view key);

// FNV-1a over the compact dump of `resolved`, as 16 hex digits.
std::string config_hash(const Json& resolved);

void add_reward_settings(Settings& s);
void add_grpo_settings(Settings& s);
RewardConfig reward_config_from(const Settings& s);
GrpoConfig grpo_config_from(const Settings& s);

}  // namespace riskforge
