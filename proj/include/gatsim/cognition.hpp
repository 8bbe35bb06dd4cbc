#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gatsim/gateway.hpp"
#include "gatsim/memory.hpp"
#include "gatsim/network.hpp"
#include "gatsim/plan.hpp"
#include "gatsim/population.hpp"
#include "gatsim/traffic.hpp"

namespace gatsim {

struct CognitionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- validation ------------------------------------------------------------

namespace violation {
inline constexpr const char* vehicle = "VEHICLE_INCONSISTENT";
inline constexpr const char* not_home = "NOT_HOME_FINAL";
inline constexpr const char* path = "PATH_INVALID";
inline constexpr const char* time = "TIME_NONMONOTONE";
inline constexpr const char* unlicensed = "UNLICENSED_DRIVER";
inline constexpr const char* facility = "UNKNOWN_FACILITY";
}  // namespace violation

struct Violation {
  std::string code;
  std::string message;
  std::optional<std::size_t> entry;
};

/// What validate_plan needs to know about the world besides the plan.
struct PlanCheckContext {
  /// Entries before this index are history and are not re-checked.
  std::size_t first_index = 1;
  /// Facility the agent departs from for entry `first_index`; empty means the
  /// facility of entry first_index - 1.
  std::string location;
  /// Minute of day at which the plan is checked; pending departures may not be earlier.
  int now = 0;
  /// Household car the agent may use today, and where it stands. Empty when
  /// the agent has no car (none in the household, or allocated to someone else).
  std::optional<std::string> car_location;
  int household_vehicles = 0;
};

std::vector<Violation> validate_plan(const NetworkGraph& g, const ActivityPlan& plan, const AgentProfile& agent,
                                     const PlanCheckContext& ctx);
/// Commonsense issues (meal times etc.); never block a plan.
std::vector<std::string> plan_warnings(const ActivityPlan& plan);
std::string format_violations(const std::vector<Violation>& v);

/// Road corridor ("Ave_2") or transit line ("Metro_1") a link belongs to.
std::string corridor_of(const Link& l);

/// Turns a PathSpec into concrete links between two nodes. Explicit link ids
/// must chain exactly; corridor names may cover several consecutive links and
/// are used in the listed order. Transit legs may add the boarding/alighting
/// connectors. Throws RoutingError with the reason.
Path resolve_path(const NetworkGraph& g, const PathSpec& spec, TravelMode mode, std::size_t from_node,
                  std::size_t to_node, const TrafficState* traffic = nullptr);

// ---- agent state -----------------------------------------------------------

enum class Trigger { initial, waiting_at_node, periodic, activity_transition };
std::string to_string(Trigger t);

struct ReflectionRecord {
  std::string scale;  // immediate, daily, longterm
  std::string date;
  std::string content;
  std::vector<std::string> node_ids;

  friend bool operator==(const ReflectionRecord&, const ReflectionRecord&) = default;
};

/// Everything cognitive about one agent that survives between ticks.
struct AgentMind {
  AgentProfile profile;
  MemoryStore store;
  ShortTermMemory stm;
  std::string longterm_reflection;
  std::string prev_daily_reflection;
  std::string prev_day_plan;
  std::vector<ReflectionRecord> daily_records;
  int immediate_count = 0;
  /// Facilities dropped (skipped or cancelled) that the next plan must see.
  std::vector<std::string> carry_over;
  /// partner -> topics already discussed today
  std::map<std::string, std::set<std::string>> chats_today;

  AgentMind() = default;
  explicit AgentMind(AgentProfile p) : profile(std::move(p)), store(profile.id) {}

  nlohmann::json to_json() const;
  static AgentMind from_json(const nlohmann::json& j);
  friend bool operator==(const AgentMind&, const AgentMind&) = default;
};

// ---- contexts --------------------------------------------------------------

struct DayContext {
  Timestamp day_start = 0;
  bool car = false;  // holds a household car today
  std::optional<std::string> school_child;
  std::vector<std::string> broadcasts;
  const TrafficState* traffic = nullptr;
};

struct PlanResult {
  ActivityPlan plan;
  std::vector<std::string> concept_ids;
  int attempts = 1;
  std::vector<Violation> violations;  // empty when accepted
  std::vector<std::string> warnings;
  bool fallback = false;
};

struct ReactionContext {
  Timestamp now = 0;
  Trigger trigger = Trigger::periodic;
  const ActivityPlan* plan = nullptr;
  /// Entry the agent is at (at a facility) or travelling to.
  std::size_t entry = 0;
  bool traveling = false;
  bool queued = false;
  int queue_wait = 0;
  /// Node the agent stands at (queued) or will reach next (on a link).
  std::size_t node = 0;
  /// Links of the current leg not yet entered.
  std::vector<std::string> remaining_links;
  TravelMode leg_mode = TravelMode::none;
  Timestamp arrived_at = 0;
  std::optional<std::string> car_location;
  bool car = false;
  std::vector<std::string> broadcasts;
  const TrafficState* traffic = nullptr;
};

struct RevisionOutcome {
  PlanRevision revision;
  ActivityPlan plan;  // plan after the revision (unchanged for continue)
  /// New links for the leg in progress (path_update while travelling).
  std::optional<Path> reroute;
  std::vector<std::string> skipped;
  bool rejected = false;  // revision failed validation and became continue
  std::string node_id;
};

struct TripLog {
  std::string from;
  std::string to;
  std::string purpose;  // work, school, errand, leisure, home
  Timestamp depart = 0;
  std::optional<Timestamp> arrive;
  TravelMode mode = TravelMode::none;
  std::vector<std::string> links;  // links actually entered
  std::map<std::string, int> waits;
  std::optional<int> late;  // work trips: minutes after start (negative = early)
  std::vector<std::string> reduced;  // links met while running below normal capacity

  friend bool operator==(const TripLog&, const TripLog&) = default;
};

struct DayLog {
  std::string date;
  std::vector<TripLog> trips;
  std::optional<int> work_arrival;  // minute of day
  bool workday = false;
  std::vector<std::string> missed;
  bool teleported = false;
  /// Links reported at reduced capacity while the agent was deciding something.
  std::vector<std::string> incidents_seen;

  friend bool operator==(const DayLog&, const DayLog&) = default;
};

struct ChatResult {
  bool suppressed = false;
  std::vector<std::pair<std::string, std::string>> transcript;  // speaker, text
  std::string summary;
  nlohmann::json agreement = nlohmann::json::object();
  std::string node_a;
  std::string node_b;
};

struct InterviewExchange {
  std::string agent;
  std::string question;
  std::string answer;
  nlohmann::json context_digest;
  std::optional<std::string> persisted_node;
};

struct CognitionConfig {
  RetrievalWeights retrieval;
  DecayPolicy decay;
  int max_regenerations = 3;
  int max_chat_turns = 6;
  std::size_t route_options = 4;
  std::string simulation_description =
      "You live in a small simulated city served by roads and two metro lines. Each day you plan "
      "activities, travel between facilities, react to traffic, talk with family and friends, and "
      "reflect on your experience. You must return home by the end of the day.";
};

/// Plans, revises, reflects and chats on behalf of agents through a Gateway.
/// Methods touching distinct AgentMinds may run concurrently.
class Cognition {
 public:
  Cognition(const NetworkGraph& g, Gateway& gw, CognitionConfig cfg = {});

  const NetworkGraph& graph() const { return g_; }
  Gateway& gateway() { return gw_; }
  const CognitionConfig& config() const { return cfg_; }
  const std::string& network_description() const { return network_text_; }

  /// Free-flow minutes between facilities.
  int travel_minutes(TravelMode mode, const std::string& from, const std::string& to) const;

  /// Prompt variables and stub features for the initial plan.
  std::pair<VarBundle, nlohmann::json> plan_inputs(AgentMind& a, const DayContext& ctx);
  PlanResult generate_daily_plan(AgentMind& a, const DayContext& ctx);

  RevisionOutcome revise_plan(AgentMind& a, const ReactionContext& ctx);
  /// The reaction prompt that revise_plan would send.
  std::string reaction_prompt(AgentMind& a, const ReactionContext& ctx);

  ReflectionRecord daily_reflection(AgentMind& a, const DayLog& log, Timestamp now);
  /// Teleport aftermath: a thought node prompting the agent to consider why
  /// it failed; cancelled facilities are carried into the next plan.
  ReflectionRecord failure_reflection(AgentMind& a, const std::vector<std::string>& cancelled, Timestamp now);

  /// Stores an observation (importance scored through the gateway).
  std::string record_event(AgentMind& a, ConceptDraft draft, Timestamp now);

  /// Household information for chats about the car and the school run.
  nlohmann::json household_features(const std::vector<const AgentMind*>& adults, int vehicles,
                                    const std::vector<std::string>& children) const;
  /// Asks the agent whether to open a conversation. Returns the gateway reply.
  nlohmann::json chat_initiation(AgentMind& a, bool new_day, Timestamp now, const nlohmann::json& extra);
  ChatResult coordinate_chat(AgentMind& initiator, AgentMind& partner, const std::string& topic,
                             const std::string& opening, Timestamp now, const nlohmann::json& extra = {});

  InterviewExchange interview(AgentMind& a, const std::string& question, Timestamp now, bool persist,
                              const ActivityPlan* current_plan = nullptr);

  std::vector<std::string> facility_names() const;

 private:
  VarBundle base_vars(const AgentMind& a, Timestamp now) const;
  std::string retrieved_text(AgentMind& a, const std::string& query, Timestamp now,
                             std::set<std::string> spatial = {}, std::vector<Interval> temporal = {});
  std::string traffic_text(const TrafficState* t) const;
  nlohmann::json route_options(const std::string& from, const std::string& to);
  nlohmann::json travel_matrix() const { return travel_json_; }
  std::string add_thought(AgentMind& a, const std::string& text, Timestamp now, std::set<std::string> spatial = {},
                          std::vector<Interval> temporal = {});
  ActivityPlan repair_plan(const ActivityPlan& p, const AgentMind& a, const PlanCheckContext& ctx) const;
  std::string entry_kind(const AgentMind& a, const PlanEntry& e, bool last) const;

  const NetworkGraph& g_;
  Gateway& gw_;
  CognitionConfig cfg_;
  std::string network_text_;
  std::map<std::string, std::map<std::string, int>> ff_drive_, ff_transit_;
  nlohmann::json travel_json_;
  std::mutex route_mu_;
  std::map<std::string, nlohmann::json> route_cache_;
};

}  // namespace gatsim
