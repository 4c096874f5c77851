#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "riskforge/response.hpp"

namespace riskforge {

struct DomElement {
  std::int64_t index = -1;  // interactive ordinal, -1 for non-interactive
  std::string tag;
  std::string text;
  bool interactive = false;
  std::map<std::string, std::string> attrs;

  bool operator==(const DomElement&) const = default;
};

struct DomSnapshot {
  std::string url;
  std::vector<DomElement> elements;
  std::int64_t viewport_start = 0;
  std::vector<std::int64_t> tab_ids;
  std::int64_t history_depth = 0;

  bool operator==(const DomSnapshot&) const = default;
};

// Throws SchemaError if interactive indices are not 0..k-1 in order or the
// viewport start is outside the element list.
void check_snapshot(const DomSnapshot& dom);

enum class Difficulty { Easy, Moderate, Difficult, Ungraded };
enum class TrajectoryKind { SingleStep, MultiStep };
enum class Source { Raw, Curated };

std::string_view to_string(Difficulty d);
std::string_view to_string(TrajectoryKind k);
std::string_view to_string(Source s);
std::optional<Difficulty> difficulty_from_string(std::string_view s);

// A prediction is either a parsed response or raw model text.
using Prediction = std::variant<std::monostate, AgentResponse, std::string>;

struct StepRecord {
  std::string question;
  std::optional<std::string> screenshot_ref;
  DomSnapshot dom;
  // Gold response; nullopt when the raw record lacks a well-formed one.
  std::optional<AgentResponse> gold;
  // Verbatim JSON of a malformed gold response, kept for round-tripping.
  std::optional<Json> gold_malformed;
  Prediction predicted;
  std::int64_t step_index = 1;  // 1-based
  std::int64_t step_count = 1;

  bool operator==(const StepRecord&) const = default;
};

struct Trajectory {
  std::string id;
  TrajectoryKind kind = TrajectoryKind::SingleStep;
  std::vector<StepRecord> steps;
  Difficulty difficulty = Difficulty::Ungraded;
  Source source = Source::Raw;
  std::vector<std::string> provenance;

  bool operator==(const Trajectory&) const = default;
};

// Re-derives step_index/step_count from list order and the kind from the
// step count.
void renumber(Trajectory& t);

// Throws SchemaError on kind/step-count or step numbering violations.
void check_trajectory(const Trajectory& t);

Json snapshot_to_json(const DomSnapshot& d);
DomSnapshot snapshot_from_json(const Json& j, std::size_t line = 0,
                               const std::string& path = "dom");

Json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const Json& j, std::size_t line = 0);

std::vector<Trajectory> parse_trajectories(std::string_view jsonl);
std::string format_trajectories(const std::vector<Trajectory>& ts);

std::vector<Trajectory> read_trajectories(const std::filesystem::path& path);
void write_trajectories(const std::vector<Trajectory>& ts,
                        const std::filesystem::path& path);

// File helpers shared by the readers.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace riskforge
