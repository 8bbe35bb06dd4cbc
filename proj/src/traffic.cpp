#include "gatsim/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <stdexcept>

namespace gatsim {

using nlohmann::json;

std::string to_string(CongestionLevel l) {
  switch (l) {
    case CongestionLevel::free: return "free";
    case CongestionLevel::light: return "light";
    case CongestionLevel::moderate: return "moderate";
    case CongestionLevel::severe: return "severe";
  }
  return "free";
}

CongestionLevel congestion_level_from_string(const std::string& s) {
  if (s == "free") return CongestionLevel::free;
  if (s == "light") return CongestionLevel::light;
  if (s == "moderate") return CongestionLevel::moderate;
  if (s == "severe") return CongestionLevel::severe;
  throw std::invalid_argument("unknown congestion level '" + s + "'");
}

CongestionLevel level_for_wait(int w) {
  if (w <= 0) return CongestionLevel::free;
  if (w < 5) return CongestionLevel::light;
  if (w < 10) return CongestionLevel::moderate;
  return CongestionLevel::severe;
}

bool operator==(const RouteStep& a, const RouteStep& b) {
  return a.link == b.link && a.capacitated == b.capacitated && a.travel_ticks == b.travel_ticks;
}

bool operator==(const Token& a, const Token& b) {
  return a.id == b.id && a.route == b.route && a.pos == b.pos && a.on_link == b.on_link &&
         a.entered_at == b.entered_at && a.queued_since == b.queued_since && a.waits == b.waits;
}

bool operator==(const TrafficState& a, const TrafficState& b) {
  return a.clock_ == b.clock_ && a.capacity_ == b.capacity_ && a.queues_ == b.queues_ &&
         a.on_link_ == b.on_link_ && a.tokens_ == b.tokens_;
}

TrafficState::TrafficState(const NetworkGraph& g) {
  const auto& links = g.links();
  capacity_.resize(links.size());
  travel_ticks_drive_.resize(links.size());
  queues_.resize(links.size());
  on_link_.resize(links.size());
  for (std::size_t i = 0; i < links.size(); ++i) {
    capacity_[i] = links[i].kind == LinkKind::road ? links[i].capacity : 0;
    travel_ticks_drive_[i] = std::max(1, static_cast<int>(std::ceil(links[i].free_flow_time)));
  }
}

std::vector<RouteStep> TrafficState::make_route(const NetworkGraph& g, const Path& path) {
  std::vector<RouteStep> route;
  route.reserve(path.links.size());
  for (const auto& id : path.links) {
    const std::size_t li = g.link_index(id);
    const Link& l = g.link(li);
    auto cost = traversal_cost(g, l, path.mode, nullptr);
    if (!cost) throw RoutingError("link '" + id + "' not usable by " + to_string(path.mode));
    RouteStep s;
    s.link = li;
    s.capacitated = path.mode == TravelMode::drive && l.kind == LinkKind::road;
    s.travel_ticks = std::max(1, static_cast<int>(std::ceil(*cost - 1e-9)));
    route.push_back(s);
  }
  return route;
}

void TrafficState::insert(TokenId id, std::vector<RouteStep> route) {
  if (route.empty()) throw std::invalid_argument("cannot insert a token with an empty route");
  if (tokens_.count(id)) throw std::invalid_argument("token already in traffic");
  Token t;
  t.id = id;
  t.route = std::move(route);
  t.waits.assign(t.route.size(), 0);
  t.queued_since = clock_;
  queues_.at(t.route.front().link).push_back(id);
  tokens_.emplace(id, std::move(t));
}

void TrafficState::reroute(TokenId id, std::vector<RouteStep> remainder) {
  Token& t = tokens_.at(id);
  if (t.on_link) {
    t.route.resize(t.pos + 1);
    t.route.insert(t.route.end(), remainder.begin(), remainder.end());
    t.waits.resize(t.route.size(), 0);
    return;
  }
  if (remainder.empty()) throw std::invalid_argument("reroute of a queued token needs a link");
  auto& q = queues_.at(t.route[t.pos].link);
  q.erase(std::find(q.begin(), q.end(), id));
  t.route.resize(t.pos);
  t.route.insert(t.route.end(), remainder.begin(), remainder.end());
  t.waits.resize(t.route.size(), 0);
  t.queued_since = clock_;  // time already queued stays with the abandoned link
  queues_.at(t.route[t.pos].link).push_back(id);
}

bool TrafficState::remove(TokenId id) {
  auto it = tokens_.find(id);
  if (it == tokens_.end()) return false;
  const Token& t = it->second;
  const std::size_t li = t.route[t.pos].link;
  if (t.on_link) {
    auto& v = on_link_.at(li);
    v.erase(std::find(v.begin(), v.end(), id));
  } else {
    auto& q = queues_.at(li);
    q.erase(std::find(q.begin(), q.end(), id));
  }
  tokens_.erase(it);
  return true;
}

int TrafficState::occupancy(std::size_t link) const {
  int n = 0;
  for (TokenId id : on_link_.at(link)) {
    const Token& t = tokens_.at(id);
    if (t.route[t.pos].capacitated) ++n;
  }
  return n;
}

int TrafficState::expected_wait(std::size_t link) const {
  const int cap = capacity_.at(link);
  if (cap <= 0) return 0;
  // Replays the FIFO admission of everyone already queued, then the newcomer.
  std::priority_queue<std::int64_t, std::vector<std::int64_t>, std::greater<>> releases;
  for (TokenId id : on_link_.at(link)) {
    const Token& t = tokens_.at(id);
    if (!t.route[t.pos].capacitated) continue;
    releases.push(std::max(clock_, t.entered_at + t.route[t.pos].travel_ticks));
  }
  const int ticks = travel_ticks_drive_.at(link);
  std::int64_t at = clock_;
  auto admit = [&]() {
    while (static_cast<int>(releases.size()) >= cap) {
      at = std::max(at, releases.top());
      releases.pop();
    }
    releases.push(at + ticks);
  };
  for (TokenId id : queues_.at(link)) {
    const Token& t = tokens_.at(id);
    if (t.route[t.pos].capacitated) admit();
  }
  while (static_cast<int>(releases.size()) >= cap) {
    at = std::max(at, releases.top());
    releases.pop();
  }
  return static_cast<int>(at - clock_);
}

StepReport TrafficState::step() {
  StepReport report;
  // Entry: each queue admits in FIFO order while the link has room; walkers
  // and riders are never held by capacity.
  for (std::size_t li = 0; li < queues_.size(); ++li) {
    auto& q = queues_[li];
    if (q.empty()) continue;
    const int cap = capacity_[li];
    int occ = cap > 0 ? occupancy(li) : 0;
    bool blocked = false;
    std::deque<TokenId> remaining;
    for (TokenId id : q) {
      Token& t = tokens_.at(id);
      const bool capped = t.route[t.pos].capacitated && cap > 0;
      if (capped && (blocked || occ >= cap)) {
        blocked = true;
        remaining.push_back(id);
        continue;
      }
      if (capped) ++occ;
      t.on_link = true;
      t.entered_at = clock_;
      t.waits[t.pos] = static_cast<int>(clock_ - t.queued_since);
      on_link_[li].push_back(id);
      report.entries.push_back({id, li, clock_, t.waits[t.pos]});
    }
    q = std::move(remaining);
  }
  // Exit: travel time elapsed by the end of this tick.
  const std::int64_t next = clock_ + 1;
  std::vector<std::pair<std::size_t, TokenId>> exiting;
  for (std::size_t li = 0; li < on_link_.size(); ++li) {
    auto& v = on_link_[li];
    std::vector<TokenId> stay;
    for (TokenId id : v) {
      const Token& t = tokens_.at(id);
      if (next - t.entered_at >= t.route[t.pos].travel_ticks) {
        exiting.emplace_back(li, id);
      } else {
        stay.push_back(id);
      }
    }
    v = std::move(stay);
  }
  for (auto [li, id] : exiting) {
    Token& t = tokens_.at(id);
    t.on_link = false;
    ++t.pos;
    if (t.pos == t.route.size()) {
      Arrival a;
      a.token = id;
      a.tick = next;
      for (const auto& s : t.route) a.links.push_back(s.link);
      a.waits = t.waits;
      report.arrivals.push_back(std::move(a));
      tokens_.erase(id);
    } else {
      t.queued_since = next;
      queues_.at(t.route[t.pos].link).push_back(id);
    }
  }
  clock_ = next;
  return report;
}

json TrafficState::to_json(const NetworkGraph& g) const {
  json j;
  j["clock"] = clock_;
  json caps = json::object();
  for (std::size_t i = 0; i < capacity_.size(); ++i) {
    const Link& l = g.link(i);
    if (l.kind == LinkKind::road && capacity_[i] != l.capacity) caps[l.id] = capacity_[i];
  }
  j["capacity_overrides"] = caps;
  json toks = json::array();
  for (const auto& [id, t] : tokens_) {
    json jt;
    jt["id"] = id;
    json route = json::array();
    for (const auto& s : t.route) {
      route.push_back({g.link(s.link).id, s.capacitated, s.travel_ticks});
    }
    jt["route"] = route;
    jt["pos"] = t.pos;
    jt["on_link"] = t.on_link;
    jt["entered_at"] = t.entered_at;
    jt["queued_since"] = t.queued_since;
    jt["waits"] = t.waits;
    toks.push_back(jt);
  }
  j["tokens"] = toks;
  json queues = json::object();
  json onl = json::object();
  for (std::size_t i = 0; i < queues_.size(); ++i) {
    if (!queues_[i].empty()) queues[g.link(i).id] = std::vector<TokenId>(queues_[i].begin(), queues_[i].end());
    if (!on_link_[i].empty()) onl[g.link(i).id] = on_link_[i];
  }
  j["queues"] = queues;
  j["on_link"] = onl;
  return j;
}

TrafficState TrafficState::from_json(const NetworkGraph& g, const json& j) {
  TrafficState s(g);
  s.clock_ = j.at("clock").get<std::int64_t>();
  for (const auto& [id, cap] : j.at("capacity_overrides").items()) {
    s.capacity_.at(g.link_index(id)) = cap.get<int>();
  }
  for (const auto& jt : j.at("tokens")) {
    Token t;
    t.id = jt.at("id").get<TokenId>();
    for (const auto& js : jt.at("route")) {
      t.route.push_back({g.link_index(js.at(0).get<std::string>()), js.at(1).get<bool>(),
                         js.at(2).get<int>()});
    }
    t.pos = jt.at("pos").get<std::size_t>();
    t.on_link = jt.at("on_link").get<bool>();
    t.entered_at = jt.at("entered_at").get<std::int64_t>();
    t.queued_since = jt.at("queued_since").get<std::int64_t>();
    t.waits = jt.at("waits").get<std::vector<int>>();
    s.tokens_.emplace(t.id, std::move(t));
  }
  for (const auto& [id, ids] : j.at("queues").items()) {
    auto v = ids.get<std::vector<TokenId>>();
    s.queues_.at(g.link_index(id)) = std::deque<TokenId>(v.begin(), v.end());
  }
  for (const auto& [id, ids] : j.at("on_link").items()) {
    s.on_link_.at(g.link_index(id)) = ids.get<std::vector<TokenId>>();
  }
  return s;
}

std::vector<LinkCongestion> congestion_snapshot(const TrafficState& state, const NetworkGraph& g,
                                                bool road_only) {
  std::vector<LinkCongestion> out;
  for (std::size_t i = 0; i < g.links().size(); ++i) {
    const Link& l = g.link(i);
    if (road_only && l.kind != LinkKind::road) continue;
    LinkCongestion c;
    c.link_id = l.id;
    c.occupancy = state.occupancy(i);
    c.capacity = state.capacity(i);
    for (TokenId id : state.queue(i)) {
      const Token& t = state.token(id);
      if (t.route[t.pos].capacitated) ++c.queue_len;
    }
    c.wait = state.expected_wait(i);
    c.level = level_for_wait(c.wait);
    out.push_back(c);
  }
  return out;
}

}  // namespace gatsim
