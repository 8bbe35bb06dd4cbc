#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gatsim/network.hpp"
#include "json.hpp"

namespace gatsim {

struct PopulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Narrative persona plus the household bookkeeping the simulator needs.
struct AgentProfile {
  std::string id;  // "a01" ...
  std::string name;
  std::string gender;
  int age = 30;
  std::string family_role;  // single, husband, wife, son, daughter
  bool licensed_driver = false;
  std::string home_facility;
  std::string work_facility;  // "none" for children
  std::string occupation;
  std::optional<int> work_start;  // minute of day
  std::optional<int> work_end;
  std::string preferences;
  std::string innate;
  std::string lifestyle;
  std::string household_income;  // low, medium, high
  std::vector<std::string> friends;
  std::string other_description;
  std::string household_id;
  int household_vehicles = 0;

  bool is_child() const { return family_role == "son" || family_role == "daughter"; }
  bool has_work() const { return work_start.has_value() && work_facility != "none"; }
  std::string work_time_text() const;

  friend bool operator==(const AgentProfile&, const AgentProfile&) = default;
};

/// Listing-style field names ("work_time": "8:00-17:00", "friends": [...]).
nlohmann::json profile_to_json(const AgentProfile& p);
AgentProfile profile_from_json(const nlohmann::json& j);
/// Multi-line narrative used for the person-profile prompt slot.
std::string profile_to_text(const AgentProfile& p);

/// Accepts {"profiles": [...]} or a bare array. Ids are assigned in order.
std::vector<AgentProfile> population_from_json(const nlohmann::json& j);
nlohmann::json population_to_json(const std::vector<AgentProfile>& people);
std::vector<AgentProfile> load_population_file(const std::string& path);

/// Count targets; absent keys are not checked. Shape mirrors
/// data/population_constraints.json.
struct PopulationConstraints {
  nlohmann::json targets = nlohmann::json::object();

  std::size_t total() const;
  static PopulationConstraints load(const std::string& path);
};

/// One string per failing count, e.g. "residents[Uptown apartment]: expected 36, got 35".
std::vector<std::string> check_population(const std::vector<AgentProfile>& people,
                                          const PopulationConstraints& c);

/// Referential checks: facilities exist, friends exist, households consistent.
/// Throws PopulationError listing every problem.
void check_profiles(const NetworkGraph& g, const std::vector<AgentProfile>& people);

}  // namespace gatsim
