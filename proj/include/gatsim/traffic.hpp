#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "gatsim/network.hpp"
#include "json.hpp"

namespace gatsim {

using TokenId = std::uint32_t;

struct RouteStep {
  std::size_t link = 0;
  bool capacitated = false;  // driven road link
  int travel_ticks = 1;
};

/// One traveler in the network: queued at the upstream node of route[pos], or on it.
struct Token {
  TokenId id = 0;
  std::vector<RouteStep> route;
  std::size_t pos = 0;
  bool on_link = false;
  std::int64_t entered_at = 0;
  std::int64_t queued_since = 0;
  std::vector<int> waits;  // per route step, minutes spent queued before entry
};

enum class CongestionLevel { free, light, moderate, severe };

std::string to_string(CongestionLevel l);
CongestionLevel congestion_level_from_string(const std::string& s);
/// 0 -> free, 1-4 -> light, 5-9 -> moderate, >=10 -> severe.
CongestionLevel level_for_wait(int wait_minutes);

struct LinkCongestion {
  std::string link_id;
  int occupancy = 0;
  int queue_len = 0;
  int capacity = 0;
  int wait = 0;
  CongestionLevel level = CongestionLevel::free;
};

struct Arrival {
  TokenId token = 0;
  std::int64_t tick = 0;
  std::vector<std::size_t> links;
  std::vector<int> waits;
};

struct LinkEntry {
  TokenId token = 0;
  std::size_t link = 0;
  std::int64_t tick = 0;
  int waited = 0;
};

struct StepReport {
  std::vector<LinkEntry> entries;
  std::vector<Arrival> arrivals;
};

/// Per-link occupants and per-node FIFO entry queues (one queue per target
/// link, held at the link's upstream node). The clock counts one-minute ticks.
class TrafficState {
 public:
  TrafficState() = default;
  explicit TrafficState(const NetworkGraph& g);

  std::int64_t clock() const { return clock_; }
  void set_clock(std::int64_t t) { clock_ = t; }

  /// Converts a path into engine steps (travel time = ceil of traversal cost).
  static std::vector<RouteStep> make_route(const NetworkGraph& g, const Path& path);

  /// Queues a new token at the upstream node of its first step.
  void insert(TokenId id, std::vector<RouteStep> route);
  /// Replaces the not-yet-entered remainder of a token's route. A queued token
  /// moves to the back of the queue for its new first link and its wait restarts.
  void reroute(TokenId id, std::vector<RouteStep> remainder);
  /// Removes a token from wherever it is; returns false if absent.
  bool remove(TokenId id);

  bool contains(TokenId id) const { return tokens_.count(id) > 0; }
  const Token& token(TokenId id) const { return tokens_.at(id); }
  const std::map<TokenId, Token>& tokens() const { return tokens_; }
  std::size_t token_count() const { return tokens_.size(); }

  int capacity(std::size_t link) const { return capacity_.at(link); }
  void set_capacity(std::size_t link, int cap) { capacity_.at(link) = cap; }
  /// Driven vehicles currently on the link.
  int occupancy(std::size_t link) const;
  const std::deque<TokenId>& queue(std::size_t link) const { return queues_.at(link); }
  const std::vector<TokenId>& on_link(std::size_t link) const { return on_link_.at(link); }

  /// Minutes a traveler joining the back of the link's entry queue now would wait.
  int expected_wait(std::size_t link) const;

  StepReport step();

  nlohmann::json to_json(const NetworkGraph& g) const;
  static TrafficState from_json(const NetworkGraph& g, const nlohmann::json& j);

  friend bool operator==(const TrafficState&, const TrafficState&);

 private:
  std::int64_t clock_ = 0;
  std::vector<int> capacity_;            // effective, 0 = unbounded
  std::vector<int> travel_ticks_drive_;  // per link, used by expected_wait
  std::vector<std::deque<TokenId>> queues_;
  std::vector<std::vector<TokenId>> on_link_;
  std::map<TokenId, Token> tokens_;
};

bool operator==(const RouteStep& a, const RouteStep& b);
bool operator==(const Token& a, const Token& b);

/// step_traffic: advances the state by one tick.
inline StepReport step_traffic(TrafficState& state) { return state.step(); }

std::vector<LinkCongestion> congestion_snapshot(const TrafficState& state, const NetworkGraph& g,
                                                bool road_only = true);

}  // namespace gatsim
