#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gatsim/cognition.hpp"
#include "gatsim/gateway.hpp"
#include "gatsim/network.hpp"
#include "gatsim/population.hpp"
#include "gatsim/traffic.hpp"

namespace gatsim {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : SimError {
  using SimError::SimError;
};

// ---- scenario events -------------------------------------------------------

struct ScenarioEvent {
  enum class Kind { broadcast, capacity_change };
  std::string id;
  Kind kind = Kind::broadcast;
  std::string target = "all";  // road link id, or "all" for broadcasts
  std::string text;
  int capacity = 1;
  std::string date;  // YYYY-MM-DD
  int start = 0;     // minute of day, inclusive
  int end = 1440;    // exclusive

  bool active_at(Timestamp t) const;
  Timestamp begin_ts() const;
  Timestamp end_ts() const;
  std::string describe() const;

  friend bool operator==(const ScenarioEvent&, const ScenarioEvent&) = default;
};

nlohmann::json event_to_json(const ScenarioEvent& e);
ScenarioEvent event_from_json(const nlohmann::json& j);
/// Throws SimError naming the problem (unknown link, non-road link, capacity < 1, bad window).
void check_event(const NetworkGraph& g, const ScenarioEvent& e);
std::vector<ScenarioEvent> load_scenario_file(const std::string& path);

// ---- configuration ---------------------------------------------------------

struct SimConfig {
  std::string network_path;
  std::string population_path;
  std::string start_date;  // inclusive
  std::string end_date;    // inclusive
  std::uint64_t seed = 0;
  nlohmann::json gateway = {{"backend", "stub"}};
  std::vector<ScenarioEvent> events;
  std::string out_dir;           // empty: keep logs in memory only
  int periodic_interval = 30;    // minutes between periodic checks
  int periodic_window = 120;     // periodic checks only this close to the next departure
  int checkpoint_every = 60;     // minutes; written only with out_dir
  std::size_t max_agents = 0;    // 0 = whole population
  std::size_t threads = 4;       // concurrent gateway calls
  std::size_t history_window = 1440;  // state views kept for get_state

  /// Relative paths resolve against base_dir, then the working directory,
  /// then the source tree.
  static SimConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static SimConfig load(const std::string& path);
  nlohmann::json to_json() const;
  std::string digest() const;
};

std::string resolve_data_path(const std::string& p, const std::string& base_dir);

// ---- runtime state ---------------------------------------------------------

enum class ActivityStatus { at_facility, queued, on_link };
std::string to_string(ActivityStatus s);

struct AgentRuntime {
  std::string id;
  ActivityStatus status = ActivityStatus::at_facility;
  std::string facility;            // current, or origin of the trip in progress
  bool passive = false;            // children: stay home, reflect only
  std::string plan_date;           // date the plan belongs to; empty = none yet
  ActivityPlan plan;
  std::size_t entry = 0;           // entry the agent is at, or travelling to
  bool traveling = false;
  Timestamp arrived_at = 0;
  Timestamp last_check = -1;       // last periodic check
  bool transition_pending = false;
  std::int64_t queue_episode = -1; // route position whose queue already triggered
  TokenId token = 0;
  std::vector<std::string> leg_links;
  std::size_t leg_pos = 0;         // links entered so far
  TravelMode leg_mode = TravelMode::none;
  Timestamp trip_start = 0;
  std::map<std::string, int> trip_waits;
  std::set<std::string> trip_reduced;
  std::optional<std::string> car_at;  // where this agent's car stands, when it holds one
  bool reflected = false;
  DayLog log;

  friend bool operator==(const AgentRuntime&, const AgentRuntime&) = default;
};

nlohmann::json runtime_to_json(const AgentRuntime& r);
AgentRuntime runtime_from_json(const nlohmann::json& j);

/// One row of the trip log. Partial trips cut by the day boundary have no arrival.
struct TripRecord {
  std::string agent;
  std::string origin;
  std::string destination;
  Timestamp depart = 0;
  std::optional<Timestamp> arrive;
  TravelMode mode = TravelMode::none;
  std::vector<std::string> links;
  int delay = 0;  // minutes queued
  std::string purpose;
  std::optional<int> late;

  friend bool operator==(const TripRecord&, const TripRecord&) = default;
};

nlohmann::json trip_to_json(const TripRecord& t);
TripRecord trip_from_json(const nlohmann::json& j);
std::string trips_csv_header();
std::string trip_to_csv(const TripRecord& t);
std::vector<TripRecord> read_trips_csv(const std::string& path);

/// Per-minute road-link state. Ticks where every link is idle are not stored.
struct LinkHistory {
  struct Sample {
    int occupancy = 0;
    int queue = 0;
    int capacity = 0;
    int wait = 0;
    friend bool operator==(const Sample&, const Sample&) = default;
  };
  std::vector<std::string> links;  // road link ids
  std::vector<int> base_capacity;
  Timestamp first = 0;  // recorded range, inclusive
  Timestamp last = -1;
  std::map<Timestamp, std::vector<Sample>> ticks;

  void init(const NetworkGraph& g);
  void record(Timestamp t, const std::vector<LinkCongestion>& snapshot);
  bool covers(Timestamp t) const { return t >= first && t <= last; }
  /// Samples at t; throws SimError when the tick lies outside the recorded range.
  std::vector<Sample> at(Timestamp t) const;
  void write_csv(const std::string& path) const;
  /// `first`/`last` come from the caller (the run's metadata).
  static LinkHistory read_csv(const std::string& path, const NetworkGraph& g, Timestamp first, Timestamp last);
};

struct AgentView {
  std::string id;
  std::string name;
  ActivityStatus status = ActivityStatus::at_facility;
  std::string facility;
  std::string link;  // link occupied or queued for
  std::string node;
};

struct StateView {
  Timestamp clock = 0;
  std::vector<AgentView> agents;
  std::vector<LinkCongestion> links;
  std::vector<std::string> active_events;
  nlohmann::json to_json() const;
};

struct DaySummary {
  std::string date;
  int trips = 0;
  int teleported = 0;
  int reflections = 0;
};

/// The main loop. Each tick runs: plan updates, activity-state updates,
/// network movement, reflection, then persistence and the clock advance.
class Simulation {
 public:
  explicit Simulation(SimConfig cfg);
  /// Uses an existing gateway (tests, bindings) instead of building one.
  Simulation(SimConfig cfg, std::shared_ptr<Gateway> gateway);
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const SimConfig& config() const { return cfg_; }
  const NetworkGraph& graph() const { return *g_; }
  Gateway& gateway() { return *gw_; }
  Cognition& cognition() { return *cog_; }

  Timestamp clock() const { return clock_; }
  Timestamp start_time() const;
  Timestamp end_time() const;  // midnight after end_date
  bool finished() const { return clock_ >= end_time(); }

  void step();
  /// Steps until the clock reaches t (or the horizon).
  void run_until(Timestamp t);
  void run();

  // state access
  const std::vector<AgentMind>& minds() const { return minds_; }
  const std::vector<AgentRuntime>& runtimes() const { return rt_; }
  const AgentMind& mind(const std::string& id) const;
  const AgentRuntime& runtime(const std::string& id) const;
  const TrafficState& traffic() const { return traffic_; }
  const std::vector<TripRecord>& trips() const { return trips_; }
  const std::vector<nlohmann::json>& event_log() const { return events_log_; }
  const LinkHistory& history() const { return history_; }
  const std::vector<DaySummary>& days() const { return days_; }
  /// Link entries per day, indexed like graph().links().
  const std::map<std::string, std::vector<int>>& flows() const { return flows_; }

  /// household id -> holder agent ids for today.
  const std::map<std::string, std::vector<std::string>>& car_holders() const { return holders_; }

  // events
  const std::vector<ScenarioEvent>& scenario() const { return scenario_; }
  void add_event(ScenarioEvent e);
  std::vector<std::string> active_broadcasts() const;

  StateView state_view() const;
  /// Latest view, or the view at tick `at` if still held.
  StateView get_state(std::optional<Timestamp> at = std::nullopt) const;

  InterviewExchange interview(const std::string& agent_id, const std::string& question, bool persist);

  // persistence
  nlohmann::json checkpoint() const;
  std::string state_hash() const;
  static std::string hash_of(const nlohmann::json& checkpoint);
  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<Simulation> restore(const nlohmann::json& checkpoint,
                                             std::shared_ptr<Gateway> gateway = nullptr);
  static std::unique_ptr<Simulation> restore_file(const std::string& path,
                                                  std::shared_ptr<Gateway> gateway = nullptr);
  /// Writes trips.csv, events.jsonl and link_states.csv under out_dir.
  void write_logs(const std::string& dir) const;

  /// NeedsPlanUpdate: whether the agent should plan or revise now, and why.
  std::optional<Trigger> needs_plan_update(std::size_t agent) const;

 private:
  void init_world();
  std::size_t index_of(const std::string& id) const;
  void begin_day();
  void end_day();
  void apply_capacity_events();
  void broadcast_chats();
  void plan_updates();
  void activity_updates();
  void movement();
  void reflections();
  void persist();

  void depart(std::size_t i);
  void arrive(std::size_t i, Timestamp when, const Arrival& a);
  void finish_trip(std::size_t i, std::optional<Timestamp> arrive);
  std::optional<Timestamp> leave_time(const AgentRuntime& r) const;
  ReactionContext reaction_context(std::size_t i, Trigger t) const;
  void log_event(nlohmann::json e);
  std::string today() const;
  void day_reflect(std::size_t i);

  SimConfig cfg_;
  std::shared_ptr<NetworkGraph> g_;
  std::shared_ptr<Gateway> gw_;
  std::unique_ptr<Cognition> cog_;
  Timestamp clock_ = 0;
  TrafficState traffic_;
  std::vector<AgentMind> minds_;
  std::vector<AgentRuntime> rt_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> by_name_;
  std::map<TokenId, std::size_t> token_owner_;
  TokenId next_token_ = 1;
  std::map<std::string, std::vector<std::string>> holders_;
  // agent id -> children it drops at School today
  std::map<std::string, std::string> school_run_;
  std::vector<ScenarioEvent> scenario_;
  std::vector<int> base_capacity_;
  std::vector<TripRecord> trips_;
  std::vector<nlohmann::json> events_log_;
  std::map<std::string, std::vector<int>> flows_;
  std::vector<DaySummary> days_;
  LinkHistory history_;
  std::deque<StateView> views_;
  std::size_t events_written_ = 0;
};

}  // namespace gatsim
