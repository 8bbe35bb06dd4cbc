#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gatsim/network.hpp"
#include "gatsim/time.hpp"
#include "json.hpp"

namespace gatsim {

struct PlanError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PathSpec {
  enum class Kind { none, shortest, explicit_links };
  Kind kind = Kind::none;
  /// Link ids, or corridor / line names ("Ave_2", "Metro_1") to be expanded.
  std::vector<std::string> items;

  static PathSpec shortest() { return {Kind::shortest, {}}; }
  static PathSpec links(std::vector<std::string> ids) { return {Kind::explicit_links, std::move(ids)}; }
  std::string to_string() const;
  static PathSpec parse(const std::string& s);

  friend bool operator==(const PathSpec&, const PathSpec&) = default;
};

/// One activity: travel to `facility` leaving at `departure`, then stay `duration`
/// minutes. Without a mode the agent is already there.
struct PlanEntry {
  std::string facility;
  std::optional<int> departure;  // minute of day
  std::optional<int> duration;   // minutes
  TravelMode mode = TravelMode::none;
  PathSpec path;
  std::string description;

  friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

struct ActivityPlan {
  std::vector<PlanEntry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  friend bool operator==(const ActivityPlan&, const ActivityPlan&) = default;
};

/// Six-field arrays: [facility, "HH:MM"|"none", minutes|"none", mode, path, description].
nlohmann::json plan_to_json(const ActivityPlan& p);
ActivityPlan plan_from_json(const nlohmann::json& j);
nlohmann::json entry_to_json(const PlanEntry& e);
PlanEntry entry_from_json(const nlohmann::json& j);
/// Python-literal style rendering used in prompts and logs.
std::string plan_to_text(const ActivityPlan& p);

enum class RevisionDecision { continue_plan, path_update, departure_adjust, partial_replace, full_replace };

std::string to_string(RevisionDecision d);
RevisionDecision revision_decision_from_string(const std::string& s);

struct PlanRevision {
  Timestamp at = 0;
  RevisionDecision decision = RevisionDecision::continue_plan;
  /// path_update: {"path": [...]}; departure_adjust: {"index": i, "departure": "HH:MM"};
  /// partial_replace: {"from_index": i, "entries": [...]}; full_replace: {"entries": [...]}.
  nlohmann::json payload = nlohmann::json::object();
  std::string rationale;

  friend bool operator==(const PlanRevision&, const PlanRevision&) = default;
};

/// Throws PlanError when the payload does not match the decision kind.
void check_revision_payload(const PlanRevision& r);
nlohmann::json revision_to_json(const PlanRevision& r);
PlanRevision revision_from_json(const nlohmann::json& j);
std::string revision_to_text(const PlanRevision& r);

}  // namespace gatsim
