#include "gatsim/cognition.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <sstream>

#include "gatsim/time.hpp"

namespace gatsim {

using nlohmann::json;

// ---- validation ------------------------------------------------------------

std::string corridor_of(const Link& l) {
  if (!l.line_id.empty()) return l.line_id;
  const auto p = l.id.find("_link_");
  return p == std::string::npos ? l.id : l.id.substr(0, p);
}

namespace {

struct ItemMatcher {
  std::string item;
  bool exact = false;
  bool matches(const Link& l) const {
    if (exact) return l.id == item;
    if (l.kind == LinkKind::boarding || l.kind == LinkKind::alighting) return false;
    return corridor_of(l) == item;
  }
};

bool is_connector(const Link& l) { return l.kind == LinkKind::boarding || l.kind == LinkKind::alighting; }

}  // namespace

Path resolve_path(const NetworkGraph& g, const PathSpec& spec, TravelMode mode, std::size_t from_node,
                  std::size_t to_node, const TrafficState* traffic) {
  switch (spec.kind) {
    case PathSpec::Kind::none:
      if (from_node == to_node) return Path{{}, mode, 0.0};
      throw RoutingError("no path given from '" + g.nodes()[from_node].id + "' to '" + g.nodes()[to_node].id + "'");
    case PathSpec::Kind::shortest:
      if (from_node == to_node) return Path{{}, mode, 0.0};
      return shortest_path_nodes(g, from_node, to_node, mode, traffic);
    case PathSpec::Kind::explicit_links:
      break;
  }
  if (spec.items.empty()) throw RoutingError("empty link list");
  if (from_node == to_node) throw RoutingError("origin and destination coincide");

  std::vector<ItemMatcher> items;
  for (const auto& it : spec.items) {
    if (g.has_link(it)) {
      items.push_back({it, true});
      continue;
    }
    bool known = false;
    for (const auto& l : g.links()) {
      if (!is_connector(l) && corridor_of(l) == it) {
        known = true;
        break;
      }
    }
    if (!known) throw RoutingError("unknown link or corridor '" + it + "'");
    items.push_back({it, false});
  }

  // Dijkstra over (node, last matched item + 1).
  const std::size_t m = items.size();
  const std::size_t width = m + 1;
  const std::size_t n_states = g.nodes().size() * width;
  std::vector<double> dist(n_states, std::numeric_limits<double>::infinity());
  std::vector<std::pair<std::size_t, std::size_t>> prev(n_states, {SIZE_MAX, SIZE_MAX});  // state, link
  using QE = std::pair<double, std::size_t>;
  std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
  const std::size_t start = from_node * width;
  dist[start] = 0.0;
  pq.push({0.0, start});
  const std::size_t goal = to_node * width + m;
  while (!pq.empty()) {
    auto [d, s] = pq.top();
    pq.pop();
    if (d > dist[s]) continue;
    if (s == goal) break;
    const std::size_t node = s / width, k = s % width;
    for (std::size_t li : g.out_links(node)) {
      const Link& l = g.link(li);
      auto c = traversal_cost(g, l, mode, traffic);
      if (!c) continue;
      std::vector<std::size_t> next_k;
      if (k < m && items[k].matches(l)) next_k.push_back(k + 1);
      if (k > 0 && !items[k - 1].exact && items[k - 1].matches(l)) next_k.push_back(k);
      if (next_k.empty() && mode == TravelMode::transit && is_connector(l)) next_k.push_back(k);
      for (std::size_t nk : next_k) {
        const std::size_t t = l.to_index * width + nk;
        const double nd = d + *c;
        if (nd < dist[t] - 1e-9) {
          dist[t] = nd;
          prev[t] = {s, li};
          pq.push({nd, t});
        }
      }
    }
  }
  if (!std::isfinite(dist[goal])) {
    std::string list;
    for (std::size_t i = 0; i < m; ++i) list += (i ? ", " : "") + items[i].item;
    throw RoutingError("links [" + list + "] do not connect '" + g.nodes()[from_node].id + "' to '" +
                       g.nodes()[to_node].id + "' by " + to_string(mode));
  }
  Path p;
  p.mode = mode;
  p.cost = dist[goal];
  for (std::size_t s = goal; s != start; s = prev[s].first) p.links.push_back(g.link(prev[s].second).id);
  std::reverse(p.links.begin(), p.links.end());
  // Corridor items could otherwise be satisfied by doubling back.
  std::set<std::size_t> visited{from_node};
  for (const auto& id : p.links) {
    const std::size_t n = g.link(id).to_index;
    if (!visited.insert(n).second) {
      throw RoutingError("links do not form a simple path from '" + g.nodes()[from_node].id + "' to '" +
                         g.nodes()[to_node].id + "' (revisits " + g.nodes()[n].id + ")");
    }
  }
  return p;
}

std::vector<Violation> validate_plan(const NetworkGraph& g, const ActivityPlan& plan, const AgentProfile& agent,
                                     const PlanCheckContext& ctx) {
  std::vector<Violation> out;
  auto add = [&](const char* code, std::string msg, std::optional<std::size_t> i = std::nullopt) {
    out.push_back({code, std::move(msg), i});
  };
  if (plan.empty()) {
    add(violation::not_home, "plan is empty");
    return out;
  }
  const auto& E = plan.entries;
  for (std::size_t i = 0; i < E.size(); ++i) {
    if (!g.find_facility(E[i].facility)) add(violation::facility, "unknown facility '" + E[i].facility + "'", i);
  }
  if (E.back().facility != agent.home_facility) {
    add(violation::not_home, "plan ends at " + E.back().facility + ", not at " + agent.home_facility,
        E.size() - 1);
  }

  const std::size_t first = std::max<std::size_t>(ctx.first_index, 1);
  std::optional<int> prev_dep;
  for (std::size_t i = first; i < E.size(); ++i) {
    const auto& dep = E[i].departure;
    if (!dep) continue;
    if (*dep < ctx.now) {
      add(violation::time, "entry " + std::to_string(i) + " departs at " + format_hhmm(*dep) + ", before " +
                               format_hhmm(ctx.now), i);
    }
    if (prev_dep && *dep <= *prev_dep) {
      add(violation::time, "entry " + std::to_string(i) + " departs at " + format_hhmm(*dep) +
                               ", not after the previous departure " + format_hhmm(*prev_dep), i);
    }
    prev_dep = dep;
  }

  std::string here = ctx.location;
  if (here.empty()) here = E[std::min(first, E.size()) - 1].facility;
  std::optional<std::string> car = ctx.car_location;
  bool drove = false;
  for (std::size_t i = first; i < E.size(); ++i) {
    const PlanEntry& e = E[i];
    const bool known = g.find_facility(e.facility) && g.find_facility(here);
    if (e.mode == TravelMode::none) {
      if (e.facility != here) add(violation::path, "no travel mode to get from " + here + " to " + e.facility, i);
      here = e.facility;
      continue;
    }
    if (e.mode == TravelMode::drive) {
      if (!agent.licensed_driver) add(violation::unlicensed, agent.name + " has no driving licence", i);
      if (ctx.household_vehicles <= 0) {
        add(violation::vehicle, "household owns no vehicle for the drive to " + e.facility, i);
      } else if (!car) {
        add(violation::vehicle, "the household car is not available to " + agent.name + " today", i);
      } else if (*car != here) {
        add(violation::vehicle, "drive from " + here + " but the car is parked at " + *car, i);
      }
      car = e.facility;
      drove = true;
    }
    if (known) {
      try {
        PathSpec spec = e.path;
        if (spec.kind == PathSpec::Kind::none && e.facility != here) {
          add(violation::path, "no path given from " + here + " to " + e.facility, i);
        } else {
          resolve_path(g, spec, e.mode, g.facility_node(here), g.facility_node(e.facility));
        }
      } catch (const RoutingError& err) {
        add(violation::path, "entry " + std::to_string(i) + ": " + err.what(), i);
      }
    }
    here = e.facility;
  }
  if (drove && car && E.back().facility == agent.home_facility && *car != agent.home_facility) {
    add(violation::vehicle, "the car is left at " + *car + " at the end of the day", E.size() - 1);
  }
  return out;
}

std::vector<std::string> plan_warnings(const ActivityPlan& plan) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < plan.entries.size(); ++i) {
    const auto& e = plan.entries[i];
    if (e.duration && *e.duration > 12 * 60) {
      w.push_back("entry " + std::to_string(i) + " at " + e.facility + " lasts more than 12 hours");
    }
    if (e.departure && *e.departure >= 22 * 60) {
      w.push_back("entry " + std::to_string(i) + " departs at " + format_hhmm(*e.departure) +
                  "; little margin before midnight");
    }
  }
  return w;
}

std::string format_violations(const std::vector<Violation>& v) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += "\n";
    out += x.code + ": " + x.message;
  }
  return out;
}

// ---- agent state -----------------------------------------------------------

std::string to_string(Trigger t) {
  switch (t) {
    case Trigger::initial: return "initial";
    case Trigger::waiting_at_node: return "waiting_at_node";
    case Trigger::periodic: return "periodic";
    case Trigger::activity_transition: return "activity_transition";
  }
  return "periodic";
}

json AgentMind::to_json() const {
  json recs = json::array();
  for (const auto& r : daily_records) {
    recs.push_back({{"scale", r.scale}, {"date", r.date}, {"content", r.content}, {"node_ids", r.node_ids}});
  }
  json chats = json::object();
  for (const auto& [p, topics] : chats_today) chats[p] = topics;
  return json{{"profile", profile_to_json(profile)},
              {"store", store.to_json()},
              {"stm", stm.to_json()},
              {"longterm_reflection", longterm_reflection},
              {"prev_daily_reflection", prev_daily_reflection},
              {"prev_day_plan", prev_day_plan},
              {"daily_records", recs},
              {"immediate_count", immediate_count},
              {"carry_over", carry_over},
              {"chats_today", chats}};
}

AgentMind AgentMind::from_json(const json& j) {
  AgentMind a;
  a.profile = profile_from_json(j.at("profile"));
  a.store = MemoryStore::from_json(j.at("store"));
  a.stm = ShortTermMemory::from_json(j.at("stm"));
  a.longterm_reflection = j.value("longterm_reflection", "");
  a.prev_daily_reflection = j.value("prev_daily_reflection", "");
  a.prev_day_plan = j.value("prev_day_plan", "");
  for (const auto& r : j.value("daily_records", json::array())) {
    a.daily_records.push_back({r.value("scale", ""), r.value("date", ""), r.value("content", ""),
                               r.value("node_ids", std::vector<std::string>{})});
  }
  a.immediate_count = j.value("immediate_count", 0);
  a.carry_over = j.value("carry_over", std::vector<std::string>{});
  const json chats = j.value("chats_today", json::object());
  for (const auto& [p, topics] : chats.items()) {
    a.chats_today[p] = topics.get<std::set<std::string>>();
  }
  return a;
}

// ---- cognition -------------------------------------------------------------

namespace {

std::string strip_trailers(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '[') continue;
    if (!out.empty()) out += "\n";
    out += line;
  }
  return out;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

const std::set<std::string>& leisure_places() {
  static const std::set<std::string> s{"Gym", "Cinema", "Museum", "Amusement park", "Food court"};
  return s;
}

}  // namespace

Cognition::Cognition(const NetworkGraph& g, Gateway& gw, CognitionConfig cfg)
    : g_(g), gw_(gw), cfg_(std::move(cfg)) {
  travel_json_ = {{"drive", json::object()}, {"transit", json::object()}};
  for (const auto& a : g_.facilities()) {
    for (const auto& b : g_.facilities()) {
      for (TravelMode m : {TravelMode::drive, TravelMode::transit}) {
        int mins = 0;
        if (a.name != b.name) {
          try {
            mins = static_cast<int>(std::ceil(shortest_path(g_, a.name, b.name, m).cost - 1e-9));
          } catch (const RoutingError&) {
            continue;
          }
        }
        (m == TravelMode::drive ? ff_drive_ : ff_transit_)[a.name][b.name] = mins;
        travel_json_[to_string(m)][a.name][b.name] = mins;
      }
    }
  }

  std::ostringstream t;
  t << "Facilities:";
  for (const auto& f : g_.facilities()) t << "\n- " << f.name << " at " << f.node_id;
  t << "\nRoads (from -> to, free-flow minutes, vehicles entering per minute):";
  for (const auto& l : g_.links()) {
    if (l.kind != LinkKind::road) continue;
    t << "\n- " << l.id << ": " << l.from << " -> " << l.to << ", " << l.free_flow_time << " min, capacity "
      << l.capacity;
  }
  t << "\nTransit lines:";
  for (const auto& line : g_.transit_lines()) {
    t << "\n- " << line.id << " every " << line.headway << " min:";
    for (const auto& id : line.links) {
      const Link& l = g_.link(id);
      t << " " << l.id << " (" << l.from << " -> " << l.to << ", " << l.free_flow_time << " min)";
    }
  }
  t << "\nWalking takes " << g_.walk_multiplier() << " times the free-flow driving time.";
  network_text_ = t.str();
}

int Cognition::travel_minutes(TravelMode mode, const std::string& from, const std::string& to) const {
  const auto& m = mode == TravelMode::drive ? ff_drive_ : ff_transit_;
  auto a = m.find(from);
  if (a == m.end()) throw CognitionError("unknown facility '" + from + "'");
  auto b = a->second.find(to);
  if (b == a->second.end()) throw CognitionError("no " + to_string(mode) + " route from " + from + " to " + to);
  return b->second;
}

std::vector<std::string> Cognition::facility_names() const {
  std::vector<std::string> out;
  for (const auto& f : g_.facilities()) out.push_back(f.name);
  return out;
}

VarBundle Cognition::base_vars(const AgentMind& a, Timestamp now) const {
  return VarBundle{{"simulation_description", cfg_.simulation_description},
                   {"network_description", network_text_},
                   {"person_profile", profile_to_text(a.profile)},
                   {"current_time", format_label(now)}};
}

std::string Cognition::retrieved_text(AgentMind& a, const std::string& query, Timestamp now,
                                      std::set<std::string> spatial, std::vector<Interval> temporal) {
  auto hits = a.store.retrieve(make_query(query, now, std::move(spatial), std::move(temporal)), cfg_.retrieval);
  if (hits.empty()) return "Nothing relevant comes to mind.";
  std::ostringstream out;
  for (const auto& h : hits) {
    char imp[16];
    std::snprintf(imp, sizeof imp, "%.1f", h.node.importance);
    out << "- [" << to_string(h.node.kind) << ", " << format_label(h.node.created_at) << ", importance " << imp
        << "] " << h.node.content << "\n";
  }
  std::string s = out.str();
  s.pop_back();
  return s;
}

std::string Cognition::traffic_text(const TrafficState* t) const {
  if (!t) return "No live traffic information.";
  std::ostringstream out;
  for (const auto& c : congestion_snapshot(*t, g_, true)) {
    const int normal = g_.link(c.link_id).capacity;
    if (c.level == CongestionLevel::free && c.queue_len == 0 && c.capacity >= normal) continue;
    out << c.link_id << ": " << to_string(c.level) << ", " << c.occupancy << " on link, " << c.queue_len
        << " queued, capacity " << c.capacity;
    if (c.capacity < normal) out << " (incident, normally " << normal << ")";
    out << ", expected wait " << c.wait << " min\n";
  }
  std::string s = out.str();
  if (s.empty()) return "All roads flow freely.";
  s.pop_back();
  return s;
}

json Cognition::route_options(const std::string& from, const std::string& to) {
  const std::string key = from + "|" + to;
  {
    std::lock_guard lk(route_mu_);
    auto it = route_cache_.find(key);
    if (it != route_cache_.end()) return it->second;
  }
  const std::size_t src = g_.facility_node(from), dst = g_.facility_node(to);
  const std::size_t K = cfg_.route_options;
  std::vector<std::pair<double, std::vector<std::string>>> best;  // sorted, at most K
  std::vector<std::string> cur;
  std::vector<bool> seen(g_.nodes().size(), false);
  std::function<void(std::size_t, double)> dfs = [&](std::size_t node, double cost) {
    if (best.size() == K && cost > best.back().first + 1e-9) return;
    if (node == dst) {
      std::pair<double, std::vector<std::string>> cand{cost, cur};
      auto pos = std::upper_bound(best.begin(), best.end(), cand, [](const auto& x, const auto& y) {
        if (std::abs(x.first - y.first) > 1e-9) return x.first < y.first;
        return x.second < y.second;
      });
      best.insert(pos, std::move(cand));
      if (best.size() > K) best.pop_back();
      return;
    }
    seen[node] = true;
    for (std::size_t li : g_.out_links(node)) {
      const Link& l = g_.link(li);
      if (l.kind != LinkKind::road || seen[l.to_index]) continue;
      cur.push_back(l.id);
      dfs(l.to_index, cost + l.free_flow_time);
      cur.pop_back();
    }
    seen[node] = false;
  };
  if (src != dst && K > 0) dfs(src, 0.0);
  json out = json::array();
  for (const auto& [c, links] : best) out.push_back({{"links", links}, {"minutes", c}});
  std::lock_guard lk(route_mu_);
  route_cache_[key] = out;
  return out;
}

std::string Cognition::add_thought(AgentMind& a, const std::string& text, Timestamp now,
                                   std::set<std::string> spatial, std::vector<Interval> temporal) {
  ConceptDraft d;
  d.kind = ConceptKind::thought;
  d.content = text;
  d.spatial = std::move(spatial);
  d.temporal = std::move(temporal);
  d.importance = gw_.score_importance("thought", text, base_vars(a, now));
  return a.store.add(d, now, cfg_.decay);
}

std::string Cognition::record_event(AgentMind& a, ConceptDraft draft, Timestamp now) {
  draft.importance = gw_.score_importance(to_string(draft.kind), draft.content, base_vars(a, now));
  return a.store.add(draft, now, cfg_.decay);
}

std::string Cognition::entry_kind(const AgentMind& a, const PlanEntry& e, bool last) const {
  if (e.facility == a.profile.home_facility) return "home";
  if (e.facility == a.profile.work_facility) return "work";
  if (e.facility == "School" && !last) return "school";
  if (leisure_places().count(e.facility)) return "leisure";
  return "errand";
}

// ---- planning --------------------------------------------------------------

std::pair<VarBundle, json> Cognition::plan_inputs(AgentMind& a, const DayContext& ctx) {
  const AgentProfile& p = a.profile;
  VarBundle v = base_vars(a, ctx.day_start);
  std::string prev = a.prev_day_plan.empty() ? "No previous day in this city." : a.prev_day_plan;
  if (!a.longterm_reflection.empty()) prev += "\nLong-term reflection:\n" + strip_trailers(a.longterm_reflection);
  if (!a.carry_over.empty()) prev += "\nUnfinished yesterday: " + join(a.carry_over, ", ") + ".";
  v["prev_day_plan_and_reflection"] = prev;
  v["prev_day_reflection"] = a.prev_daily_reflection.empty() ? "None." : a.prev_daily_reflection;

  std::string perception;
  for (const auto& b : ctx.broadcasts) perception += "News: " + b + "\n";
  perception += ctx.car ? "You have the household car today." : "You do not have a car today.";
  if (ctx.school_child) perception += "\nYou take " + *ctx.school_child + " to School this morning.";
  v["perception"] = perception;
  std::set<std::string> spatial{p.home_facility};
  if (p.work_facility != "none") spatial.insert(p.work_facility);
  v["retrieved"] = retrieved_text(a, "plan today commute to " + p.work_facility + " traffic delay", ctx.day_start,
                                  spatial);
  v["recent_chats"] = a.stm.chat_summaries.empty() ? "None." : join(a.stm.chat_summaries, "\n");

  json f{{"agent", p.id},
         {"name", p.name},
         {"date", format_date(date_of(ctx.day_start))},
         {"weekend", is_weekend(ctx.day_start)},
         {"home", p.home_facility},
         {"work", p.work_facility},
         {"work_start", p.work_start ? json(*p.work_start) : json()},
         {"work_end", p.work_end ? json(*p.work_end) : json()},
         {"licensed", p.licensed_driver},
         {"car", ctx.car},
         {"preferences", p.preferences},
         {"longterm", a.longterm_reflection},
         {"prev_daily", a.prev_daily_reflection},
         {"carry_over", a.carry_over},
         {"broadcasts", ctx.broadcasts},
         {"facilities", facility_names()},
         {"travel", travel_json_}};
  if (ctx.school_child) f["school_run"] = {{"school", "School"}, {"child", *ctx.school_child}};
  if (ctx.car && p.licensed_driver && p.work_facility != "none") {
    json routes = json::object();
    auto add = [&](const std::string& x, const std::string& y) { routes[x + "|" + y] = route_options(x, y); };
    if (ctx.school_child) {
      add(p.home_facility, "School");
      add("School", p.work_facility);
    } else {
      add(p.home_facility, p.work_facility);
    }
    f["routes"] = routes;
  }
  return {v, f};
}

ActivityPlan Cognition::repair_plan(const ActivityPlan& p, const AgentMind& a, const PlanCheckContext& ctx) const {
  const AgentProfile& prof = a.profile;
  ActivityPlan out;
  for (const auto& e : p.entries) {
    if (g_.find_facility(e.facility)) out.entries.push_back(e);
  }
  if (out.empty() || out.entries.front().facility != prof.home_facility || out.entries.front().mode != TravelMode::none) {
    PlanEntry wake{prof.home_facility, std::nullopt, std::nullopt, TravelMode::none, {}, "Wake up at home."};
    out.entries.insert(out.entries.begin(), wake);
  }
  const bool may_drive = prof.licensed_driver && ctx.car_location.has_value();
  std::optional<int> prev;
  for (std::size_t i = 1; i < out.size(); ++i) {
    auto& e = out.entries[i];
    if (e.mode == TravelMode::none || (e.mode == TravelMode::drive && !may_drive)) e.mode = TravelMode::transit;
    e.path = PathSpec::shortest();
    if (e.departure) {
      if ((prev && *e.departure <= *prev) || *e.departure < ctx.now) {
        e.departure.reset();
      } else {
        prev = e.departure;
      }
    }
  }
  // Drop consecutive visits to the same place.
  for (std::size_t i = 1; i < out.size();) {
    if (out.entries[i].facility == out.entries[i - 1].facility) {
      out.entries.erase(out.entries.begin() + static_cast<long>(i));
    } else {
      ++i;
    }
  }
  if (out.entries.back().facility != prof.home_facility) {
    TravelMode m = out.size() > 1 ? out.entries.back().mode : TravelMode::transit;
    out.entries.push_back({prof.home_facility, std::nullopt, std::nullopt, m, PathSpec::shortest(),
                           "Return home."});
  }
  // A car taken out must come back: if any leg drives, drive every leg.
  const bool any_drive = std::any_of(out.entries.begin() + 1, out.entries.end(),
                                     [](const PlanEntry& e) { return e.mode == TravelMode::drive; });
  if (any_drive) {
    for (std::size_t i = 1; i < out.size(); ++i) out.entries[i].mode = TravelMode::drive;
  }
  return out;
}

PlanResult Cognition::generate_daily_plan(AgentMind& a, const DayContext& ctx) {
  auto [vars, features] = plan_inputs(a, ctx);
  const AgentProfile& p = a.profile;
  PlanCheckContext check;
  check.first_index = 1;
  check.location = p.home_facility;
  check.now = 0;
  if (ctx.car) check.car_location = p.home_facility;
  check.household_vehicles = p.household_vehicles;

  PlanResult res;
  json last_resp;
  ActivityPlan last_plan;
  bool have_plan = false;
  const std::string base_perception = vars["perception"];
  for (int attempt = 1; attempt <= 1 + cfg_.max_regenerations; ++attempt) {
    res.attempts = attempt;
    json resp;
    try {
      resp = gw_.complete(TaskKind::initial_plan, vars, features);
    } catch (const GatewayError& e) {
      res.violations = {{"GATEWAY_ERROR", e.what(), std::nullopt}};
      continue;
    }
    ActivityPlan plan;
    try {
      plan = plan_from_json(resp.at("plan"));
    } catch (const std::exception& e) {
      res.violations = {{violation::path, std::string("unreadable plan: ") + e.what(), std::nullopt}};
      continue;
    }
    last_resp = resp;
    last_plan = plan;
    have_plan = true;
    auto v = validate_plan(g_, plan, p, check);
    res.violations = v;
    if (v.empty()) break;
    vars["perception"] = base_perception + "\nYour previous plan was rejected:\n" + format_violations(v) +
                         "\nPlease produce a corrected plan.";
    features["rejected"] = format_violations(v);
  }

  if (res.violations.empty()) {
    res.plan = last_plan;
  } else {
    res.fallback = true;
    res.plan = repair_plan(have_plan ? last_plan : ActivityPlan{}, a, check);
    auto v = validate_plan(g_, res.plan, p, check);
    if (!v.empty()) {
      res.plan = ActivityPlan{{{p.home_facility, std::nullopt, std::nullopt, TravelMode::none, {},
                                "Stay at home today."}}};
    }
  }
  res.warnings = plan_warnings(res.plan);

  const Timestamp now = ctx.day_start;
  if (last_resp.is_object()) {
    const std::string lt = last_resp.value("longterm_reflection", "");
    if (!lt.empty() && lt != a.longterm_reflection) {
      a.longterm_reflection = lt;
    }
    for (const auto& c : last_resp.value("concepts", json::array())) {
      if (c.is_string()) res.concept_ids.push_back(add_thought(a, c.get<std::string>(), now, {p.home_facility}));
    }
  }
  a.stm.today_initial_plan = res.plan;
  a.carry_over.clear();
  return res;
}

// ---- reaction --------------------------------------------------------------

namespace {

json evaluate_links(const NetworkGraph& g, const std::vector<std::string>& links, TravelMode mode,
                    const TrafficState* traffic, std::size_t index) {
  json out{{"links", links}, {"index", index}, {"max_level", "free"}, {"worst_link", ""}, {"minutes", 0.0}};
  double minutes = 0.0;
  int worst = -1;
  for (const auto& id : links) {
    const Link& l = g.link(id);
    auto c = traversal_cost(g, l, mode, nullptr);
    minutes += c ? *c : l.free_flow_time;
    if (mode == TravelMode::drive && l.kind == LinkKind::road && traffic) {
      const int w = traffic->expected_wait(g.link_index(id));
      minutes += w;
      if (w > worst) {
        worst = w;
        out["worst_link"] = id;
        out["max_level"] = to_string(level_for_wait(w));
      }
    }
  }
  out["minutes"] = minutes;
  return out;
}

PathSpec spec_from_payload(const json& p) {
  if (p.is_string()) {
    const std::string s = p.get<std::string>();
    if (s == "shortest" || s == "fastest") return PathSpec::shortest();
    return PathSpec::parse(s);
  }
  if (p.is_array()) {
    auto items = p.get<std::vector<std::string>>();
    if (items.size() == 1 && (items[0] == "shortest" || items[0] == "fastest")) return PathSpec::shortest();
    return PathSpec::links(items);
  }
  throw PlanError("path must be a string or a list of links");
}

}  // namespace

namespace {

struct ReactionInputs {
  VarBundle vars;
  json features;
};

ReactionInputs reaction_inputs_impl(const NetworkGraph& g, AgentMind& a, const ReactionContext& ctx, VarBundle v,
                                    const std::string& traffic_txt,
                                    const std::function<std::string(std::set<std::string>, const std::string&)>& retrieve,
                                    const std::function<std::string(const PlanEntry&, bool)>& kind_of) {
  const ActivityPlan& plan = *ctx.plan;
  const auto& E = plan.entries;
  const int now = minute_of_day(ctx.now);
  json f{{"trigger", to_string(ctx.trigger)},
         {"now", now},
         {"agent", a.profile.id},
         {"name", a.profile.name},
         {"plan", plan_to_json(plan)},
         {"current_index", ctx.entry},
         {"traveling", ctx.traveling},
         {"broadcasts", ctx.broadcasts}};

  std::set<std::string> spatial{E[ctx.entry].facility};
  std::string progress;
  if (ctx.traveling) {
    const PlanEntry& e = E[ctx.entry];
    f["path_eval"] = evaluate_links(g, ctx.remaining_links, ctx.leg_mode, ctx.traffic, ctx.entry);
    if (ctx.leg_mode == TravelMode::drive) {
      try {
        Path alt = shortest_path_nodes(g, ctx.node, g.facility_node(e.facility), ctx.leg_mode, ctx.traffic);
        f["alternative"] = {{"links", alt.links}, {"minutes", alt.cost}};
      } catch (const RoutingError&) {
      }
    }
    f["next"] = {{"index", ctx.entry},
                 {"facility", e.facility},
                 {"kind", kind_of(e, ctx.entry + 1 == E.size())},
                 {"departure", e.departure ? json(*e.departure) : json()},
                 {"following_departure",
                  ctx.entry + 1 < E.size() && E[ctx.entry + 1].departure ? json(*E[ctx.entry + 1].departure) : json()}};
    f["minutes_to_departure"] = nullptr;
    progress = "Travelling by " + to_string(ctx.leg_mode) + " to " + e.facility + " (entry " +
               std::to_string(ctx.entry) + ")";
    if (ctx.queued) progress += "; waiting at " + g.nodes()[ctx.node].id + " for " + std::to_string(ctx.queue_wait) + " minutes";
    progress += ". Links still ahead: " + (ctx.remaining_links.empty() ? std::string("none") : join(ctx.remaining_links, ", ")) + ".";
    for (const auto& l : ctx.remaining_links) spatial.insert(l);
  } else {
    const PlanEntry& here = E[ctx.entry];
    const int arrived = minute_of_day(ctx.arrived_at);
    const int ready = arrived + here.duration.value_or(0);
    f["ready_at"] = ready;
    progress = "At " + here.facility + " since " + format_hhmm(arrived) + " (entry " + std::to_string(ctx.entry) + ")";
    if (here.duration) progress += ", planned stay " + std::to_string(*here.duration) + " minutes";
    if (ctx.entry + 1 < E.size()) {
      const std::size_t ni = ctx.entry + 1;
      const PlanEntry& nx = E[ni];
      const int leave = nx.departure ? std::max(*nx.departure, ready) : ready;
      f["minutes_to_departure"] = leave - now;
      f["overstay"] = nx.departure ? std::max(0, ready - *nx.departure) : 0;
      f["next"] = {{"index", ni},
                   {"facility", nx.facility},
                   {"kind", kind_of(nx, ni + 1 == E.size())},
                   {"departure", nx.departure ? json(*nx.departure) : json()},
                   {"following_departure", ni + 1 < E.size() && E[ni + 1].departure ? json(*E[ni + 1].departure) : json()}};
      progress += ". Next: " + nx.facility + " leaving at " + format_hhmm(leave) + ".";
      if (nx.mode != TravelMode::none && nx.facility != here.facility) {
        try {
          Path cur = resolve_path(g, nx.path, nx.mode, g.facility_node(here.facility), g.facility_node(nx.facility),
                                  ctx.traffic);
          f["path_eval"] = evaluate_links(g, cur.links, nx.mode, ctx.traffic, ni);
          for (const auto& l : cur.links) spatial.insert(l);
          if (nx.mode == TravelMode::drive) {
            Path alt = shortest_path_nodes(g, g.facility_node(here.facility), g.facility_node(nx.facility), nx.mode,
                                           ctx.traffic);
            f["alternative"] = {{"links", alt.links}, {"minutes", alt.cost}};
          }
        } catch (const RoutingError&) {
        }
      }
    } else {
      f["minutes_to_departure"] = nullptr;
      progress += ". No further trips today.";
    }
  }

  std::string perception;
  for (const auto& b : ctx.broadcasts) perception += "News: " + b + "\n";
  if (f.contains("path_eval")) {
    const json& pe = f["path_eval"];
    perception += "Your route ahead is " + pe["max_level"].get<std::string>();
    if (!pe["worst_link"].get<std::string>().empty()) perception += " (worst at " + pe["worst_link"].get<std::string>() + ")";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", pe["minutes"].get<double>());
    perception += " and should take about " + std::string(buf) + " minutes.";
  }
  if (ctx.traffic) {
    // Links touching the node the agent stands at (or reaches next).
    std::string near;
    for (std::size_t li = 0; li < g.links().size(); ++li) {
      const Link& l = g.link(li);
      if (l.kind != LinkKind::road || (l.from_index != ctx.node && l.to_index != ctx.node)) continue;
      const int w = ctx.traffic->expected_wait(li);
      const bool reduced = ctx.traffic->capacity(li) < l.capacity;
      if (w <= 0 && !reduced) continue;
      near += (near.empty() ? "" : ", ") + l.id + " " + to_string(level_for_wait(w));
      if (reduced) near += " (capacity cut to " + std::to_string(ctx.traffic->capacity(li)) + ")";
    }
    if (!near.empty()) perception += std::string(perception.empty() ? "" : "\n") + "Nearby: " + near + ".";
  }
  if (perception.empty()) perception = "Nothing unusual around you.";
  v["today_initial_plan"] = plan_to_text(a.stm.today_initial_plan);
  std::string hist;
  for (const auto& r : a.stm.revision_history) hist += (hist.empty() ? "" : "\n") + revision_to_text(r);
  v["today_reaction_history"] = hist.empty() ? "None yet." : hist;
  v["current_activity_progress"] = progress;
  v["perception"] = perception;
  v["retrieved"] = retrieve(spatial, progress);
  v["realtime_traffic_state"] = traffic_txt;
  v["recent_chats"] = a.stm.chat_summaries.empty() ? "None." : join(a.stm.chat_summaries, "\n");
  return {v, f};
}

}  // namespace

std::string Cognition::reaction_prompt(AgentMind& a, const ReactionContext& ctx) {
  if (!ctx.plan) throw CognitionError("reaction context lacks a plan");
  auto in = reaction_inputs_impl(
      g_, a, ctx, base_vars(a, ctx.now), traffic_text(ctx.traffic),
      [&](std::set<std::string> sp, const std::string& q) { return retrieved_text(a, q, ctx.now, sp); },
      [&](const PlanEntry& e, bool last) { return entry_kind(a, e, last); });
  return gw_.render(TaskKind::reaction, in.vars);
}

RevisionOutcome Cognition::revise_plan(AgentMind& a, const ReactionContext& ctx) {
  if (!ctx.plan) throw CognitionError("reaction context lacks a plan");
  const ActivityPlan& plan = *ctx.plan;
  if (ctx.entry >= plan.size()) throw CognitionError("reaction entry index out of range");
  auto in = reaction_inputs_impl(
      g_, a, ctx, base_vars(a, ctx.now), traffic_text(ctx.traffic),
      [&](std::set<std::string> sp, const std::string& q) { return retrieved_text(a, q, ctx.now, sp); },
      [&](const PlanEntry& e, bool last) { return entry_kind(a, e, last); });

  RevisionOutcome out;
  out.plan = plan;
  PlanRevision rev;
  rev.at = ctx.now;
  std::string reflection;
  try {
    json resp = gw_.complete(TaskKind::reaction, in.vars, in.features);
    rev.decision = revision_decision_from_string(resp.at("decision").get<std::string>());
    rev.payload = resp.value("payload", json::object());
    rev.rationale = resp.value("rationale", "");
    reflection = resp.value("reflection", "");
  } catch (const std::exception& e) {
    rev.decision = RevisionDecision::continue_plan;
    rev.payload = json::object();
    rev.rationale = std::string("Keeping the plan; no usable reaction (") + e.what() + ").";
  }

  auto reject = [&](const std::string& why) {
    out.rejected = true;
    out.plan = plan;
    out.reroute.reset();
    out.skipped.clear();
    rev.rationale += " [rejected: " + why + "]";
    rev.decision = RevisionDecision::continue_plan;
    rev.payload = json::object();
  };

  const int now = minute_of_day(ctx.now);
  const std::size_t pos = ctx.entry;  // entries after pos are still open
  if (rev.decision != RevisionDecision::continue_plan) {
    try {
      ActivityPlan np = plan;
      const json& P = rev.payload;
      switch (rev.decision) {
        case RevisionDecision::path_update: {
          const std::size_t idx = P.value("index", ctx.traveling ? pos : pos + 1);
          if (idx >= np.size() || idx < pos || (idx == pos && !ctx.traveling)) throw PlanError("path_update index out of range");
          PathSpec spec = spec_from_payload(P.at("path"));
          if (ctx.traveling && idx == pos) {
            Path p = resolve_path(g_, spec, ctx.leg_mode, ctx.node, g_.facility_node(np.entries[pos].facility),
                                  ctx.traffic);
            p.mode = ctx.leg_mode;
            out.reroute = p;
          }
          np.entries[idx].path = spec;
          break;
        }
        case RevisionDecision::departure_adjust: {
          const std::size_t idx = P.at("index").get<std::size_t>();
          if (idx <= pos || idx >= np.size()) throw PlanError("departure_adjust index out of range");
          np.entries[idx].departure = parse_hhmm(P.at("departure").get<std::string>());
          break;
        }
        case RevisionDecision::partial_replace:
        case RevisionDecision::full_replace: {
          const std::size_t from =
              rev.decision == RevisionDecision::partial_replace ? P.at("from_index").get<std::size_t>() : pos + 1;
          if (from <= pos || from > np.size()) throw PlanError("replacement would rewrite the past");
          np.entries.resize(from);
          for (const auto& e : P.at("entries")) np.entries.push_back(entry_from_json(e));
          std::set<std::string> kept;
          for (std::size_t i = from; i < np.size(); ++i) kept.insert(np.entries[i].facility);
          for (std::size_t i = from; i < plan.size(); ++i) {
            const auto& f = plan.entries[i].facility;
            if (f != a.profile.home_facility && !kept.count(f)) out.skipped.push_back(f);
          }
          break;
        }
        case RevisionDecision::continue_plan: break;
      }
      PlanCheckContext chk;
      chk.first_index = pos + 1;
      chk.location = plan.entries[pos].facility;
      int earliest = now;
      for (std::size_t i = pos + 1; i < plan.size(); ++i) {
        if (plan.entries[i].departure) {
          earliest = std::min(earliest, *plan.entries[i].departure);
          break;
        }
      }
      chk.now = earliest;
      chk.car_location = ctx.car_location;
      chk.household_vehicles = a.profile.household_vehicles;
      auto v = validate_plan(g_, np, a.profile, chk);
      if (!v.empty()) {
        reject(format_violations(v));
      } else {
        out.plan = np;
      }
    } catch (const std::exception& e) {
      reject(e.what());
    }
  }

  out.revision = rev;
  a.stm.record(rev);

  std::set<std::string> spatial;
  for (const auto& l : ctx.remaining_links) spatial.insert(l);
  if (in.features.contains("path_eval")) {
    const std::string w = in.features["path_eval"].value("worst_link", "");
    if (!w.empty()) spatial.insert(w);
  }
  spatial.insert(plan.entries[pos].facility);
  const std::string text = reflection.empty() ? rev.rationale : reflection;
  out.node_id = add_thought(a, text, ctx.now, spatial, {{ctx.now - ctx.queue_wait, ctx.now + 1}});
  ++a.immediate_count;
  return out;
}

// ---- reflection ------------------------------------------------------------

ReflectionRecord Cognition::daily_reflection(AgentMind& a, const DayLog& log, Timestamp now) {
  const AgentProfile& p = a.profile;
  json trips = json::array();
  std::set<std::string> spatial;
  std::ostringstream summary;
  Timestamp first = now, last = now;
  bool any = false;
  for (const auto& t : log.trips) {
    json waits = json::object();
    for (const auto& [l, w] : t.waits) {
      waits[l] = w;
      if (w > 0) spatial.insert(l);
    }
    trips.push_back({{"from", t.from},
                     {"to", t.to},
                     {"purpose", t.purpose},
                     {"depart", minute_of_day(t.depart)},
                     {"arrive", t.arrive ? json(minute_of_day(*t.arrive)) : json()},
                     {"mode", to_string(t.mode)},
                     {"late", t.late ? json(*t.late) : json()},
                     {"waits", waits},
                     {"reduced", t.reduced}});
    spatial.insert(t.to);
    spatial.insert(t.reduced.begin(), t.reduced.end());
    if (!any || t.depart < first) first = t.depart;
    if (t.arrive && (!any || *t.arrive > last)) last = *t.arrive;
    any = true;
    summary << "- " << format_hhmm(minute_of_day(t.depart)) << " " << t.from << " -> " << t.to << " by "
            << to_string(t.mode);
    if (t.arrive) summary << ", arrived " << format_hhmm(minute_of_day(*t.arrive));
    summary << "\n";
  }
  spatial.insert(log.incidents_seen.begin(), log.incidents_seen.end());
  json f{{"agent", p.id},
         {"name", p.name},
         {"date", log.date},
         {"workday", log.workday},
         {"work", p.work_facility},
         {"work_start", p.work_start ? json(*p.work_start) : json()},
         {"work_arrival", log.work_arrival ? json(*log.work_arrival) : json()},
         {"trips", trips},
         {"missed", log.missed},
         {"teleported", log.teleported},
         {"incidents_seen", log.incidents_seen},
         {"longterm", a.longterm_reflection}};
  VarBundle v = base_vars(a, now);
  v["today_initial_plan"] = plan_to_text(a.stm.today_initial_plan);
  std::string hist;
  for (const auto& r : a.stm.revision_history) hist += revision_to_text(r) + "\n";
  v["today_reaction_history"] = hist + "Trips made:\n" + (log.trips.empty() ? "none\n" : summary.str());

  std::string text, longterm;
  try {
    json r = gw_.complete(TaskKind::daily_reflection, v, f);
    text = r.value("reflection", "");
    longterm = r.value("longterm_reflection", "");
  } catch (const GatewayError&) {
    text = "On " + log.date + " I made " + std::to_string(log.trips.size()) + " trips.";
    for (const auto& m : log.missed) text += " I missed " + m + ".";
  }

  ReflectionRecord rec{"daily", log.date, text, {}};
  rec.node_ids.push_back(add_thought(a, strip_trailers(text), now, spatial, {{first, std::max(last, first + 1)}}));
  a.daily_records.push_back(rec);
  if (!longterm.empty() && longterm != a.longterm_reflection) {
    a.longterm_reflection = longterm;
    ReflectionRecord lt{"longterm", log.date, longterm, {}};
    lt.node_ids.push_back(add_thought(a, strip_trailers(longterm), now, spatial));
    a.daily_records.push_back(lt);
  }
  a.prev_daily_reflection = text;
  std::string prev = "Plan for " + log.date + ":\n" + plan_to_text(a.stm.today_initial_plan);
  if (!a.stm.revision_history.empty()) prev += "\nRevisions:\n" + hist;
  a.prev_day_plan = prev;
  for (const auto& m : log.missed) {
    if (std::find(a.carry_over.begin(), a.carry_over.end(), m) == a.carry_over.end()) a.carry_over.push_back(m);
  }
  return rec;
}

ReflectionRecord Cognition::failure_reflection(AgentMind& a, const std::vector<std::string>& cancelled, Timestamp now) {
  const std::string date = format_date(date_of(now - 1));
  std::string text = "I failed to get home before the end of " + date + " and was teleported home.";
  if (!cancelled.empty()) text += " Cancelled: " + join(cancelled, ", ") + ".";
  text += " I need to consider why I failed and leave more slack tomorrow.";
  std::set<std::string> spatial(cancelled.begin(), cancelled.end());
  spatial.insert(a.profile.home_facility);
  ReflectionRecord rec{"immediate", date, text, {add_thought(a, text, now, spatial)}};
  ++a.immediate_count;
  for (const auto& c : cancelled) {
    if (c != a.profile.home_facility && std::find(a.carry_over.begin(), a.carry_over.end(), c) == a.carry_over.end()) {
      a.carry_over.push_back(c);
    }
  }
  return rec;
}

// ---- chat ------------------------------------------------------------------

json Cognition::household_features(const std::vector<const AgentMind*>& adults, int vehicles,
                                   const std::vector<std::string>& children) const {
  json hh = json::array();
  for (const AgentMind* m : adults) {
    const AgentProfile& p = m->profile;
    json e{{"id", p.id}, {"name", p.name}, {"licensed", p.licensed_driver},
           {"work", p.work_facility}, {"work_start", p.work_start.value_or(0)}};
    int drive = 0, transit = 0;
    if (p.work_facility != "none") {
      try {
        drive = travel_minutes(TravelMode::drive, p.home_facility, p.work_facility);
        transit = travel_minutes(TravelMode::transit, p.home_facility, p.work_facility);
      } catch (const CognitionError&) {
      }
    }
    e["drive_minutes"] = drive;
    e["transit_minutes"] = transit;
    hh.push_back(e);
  }
  return json{{"household", hh}, {"vehicles", vehicles}, {"children", children}};
}

json Cognition::chat_initiation(AgentMind& a, bool new_day, Timestamp now, const json& extra) {
  VarBundle v = base_vars(a, now);
  const auto broadcasts = extra.value("broadcasts", std::vector<std::string>{});
  std::string perception;
  for (const auto& b : broadcasts) perception += "News: " + b + "\n";
  perception += new_day ? "A new day starts; your household is at home." : "You have a moment to talk.";
  v["perception"] = perception;
  v["retrieved"] = retrieved_text(a, new_day ? "car school run household today" : "news traffic " + join(broadcasts, " "), now);
  v["realtime_traffic_state"] = extra.value("traffic_text", "No live traffic information.");
  json f = extra.is_object() ? extra : json::object();
  f.erase("traffic_text");
  f["agent"] = a.profile.id;
  f["name"] = a.profile.name;
  f["friends"] = a.profile.friends;
  f["chatted_today"] = !a.chats_today.empty();
  f["broadcasts"] = broadcasts;
  return gw_.complete(new_day ? TaskKind::chat_initiate_new_day : TaskKind::chat_initiate_during_day, v, f);
}

ChatResult Cognition::coordinate_chat(AgentMind& initiator, AgentMind& partner, const std::string& topic,
                                      const std::string& opening, Timestamp now, const json& extra) {
  const AgentProfile& A = initiator.profile;
  const AgentProfile& B = partner.profile;
  if (&initiator == &partner || A.id == B.id) throw CognitionError("an agent cannot chat with itself");
  const bool family = !A.household_id.empty() && A.household_id == B.household_id;
  const bool friends = std::find(A.friends.begin(), A.friends.end(), B.name) != A.friends.end() ||
                       std::find(B.friends.begin(), B.friends.end(), A.name) != B.friends.end();
  if (!family && !friends) throw CognitionError(A.name + " and " + B.name + " are neither family nor friends");

  ChatResult res;
  auto seen = [&](const AgentMind& x, const std::string& other) {
    auto it = x.chats_today.find(other);
    return it != x.chats_today.end() && it->second.count(topic);
  };
  if (seen(initiator, B.name) || seen(partner, A.name)) {
    res.suppressed = true;
    return res;
  }

  const std::string traffic = extra.value("traffic_text", "No live traffic information.");
  json base = extra.is_object() ? extra : json::object();
  base.erase("traffic_text");
  auto transcript_text = [&] {
    std::string s;
    for (const auto& [who, what] : res.transcript) s += who + ": " + what + "\n";
    return s;
  };
  res.transcript.emplace_back(A.name, opening);
  AgentMind* speakers[2] = {&partner, &initiator};
  for (int turn = 1; turn < cfg_.max_chat_turns; ++turn) {
    AgentMind& who = *speakers[(turn - 1) % 2];
    VarBundle v = base_vars(who, now);
    v["perception"] = "You are talking with " + (&who == &partner ? A.name : B.name) + " about " + topic + ".";
    v["retrieved"] = retrieved_text(who, topic, now);
    v["realtime_traffic_state"] = traffic;
    v["ongoing_chat"] = transcript_text();
    json f = base;
    f["mode"] = "chat";
    f["turn"] = turn;
    f["topic"] = topic;
    f["name"] = who.profile.name;
    json r = gw_.complete(TaskKind::chat_response, v, f);
    res.transcript.emplace_back(who.profile.name, r.value("utterance", ""));
    if (r.value("end", false)) break;
  }

  VarBundle v = base_vars(initiator, now);
  v["ongoing_chat"] = transcript_text();
  json f = base;
  f["participants"] = {A.name, B.name};
  f["topic"] = topic;
  json s = gw_.complete(TaskKind::chat_summary, v, f);
  res.summary = s.value("summary", "");
  res.agreement = s.value("agreement", json::object());

  const std::string content = "Chat between " + A.name + " and " + B.name + " about " + topic + ": " + res.summary;
  auto store = [&](AgentMind& m) {
    ConceptDraft d;
    d.kind = ConceptKind::chat;
    d.content = content;
    d.temporal = {{now, now + 1}};
    m.stm.chat_summaries.push_back(content);
    return record_event(m, d, now);
  };
  res.node_a = store(initiator);
  res.node_b = store(partner);
  initiator.chats_today[B.name].insert(topic);
  partner.chats_today[A.name].insert(topic);
  return res;
}

InterviewExchange Cognition::interview(AgentMind& a, const std::string& question, Timestamp now, bool persist,
                                       const ActivityPlan* current_plan) {
  InterviewExchange ex;
  ex.agent = a.profile.id;
  ex.question = question;
  auto hits = a.store.rank(make_query(question, now), cfg_.retrieval);
  json mem = json::array();
  json ids = json::array();
  std::string retrieved;
  for (const auto& h : hits) {
    mem.push_back({{"id", h.node.id}, {"content", h.node.content}, {"kind", to_string(h.node.kind)},
                   {"importance", h.node.importance}});
    ids.push_back(h.node.id);
    retrieved += "- " + h.node.content + "\n";
  }
  VarBundle v = base_vars(a, now);
  const ActivityPlan& plan = current_plan ? *current_plan : a.stm.today_initial_plan;
  v["perception"] = "An interviewer asks you about your travel. Your plan today:\n" + plan_to_text(plan);
  v["retrieved"] = retrieved.empty() ? "Nothing relevant comes to mind." : retrieved;
  v["realtime_traffic_state"] = "";
  v["ongoing_chat"] = "Interviewer: " + question + "\n";
  json f{{"mode", "interview"}, {"question", question}, {"name", a.profile.name}, {"retrieved", mem}};
  json r = gw_.complete(TaskKind::chat_response, v, f);
  ex.answer = r.value("utterance", "");
  ex.context_digest = {{"retrieved", ids},
                       {"longterm_reflection", strip_trailers(a.longterm_reflection)},
                       {"plan", plan_to_json(plan)}};
  if (persist) {
    ConceptDraft d;
    d.kind = ConceptKind::chat;
    d.content = "Interviewed: asked \"" + question + "\", I answered: " + ex.answer;
    d.temporal = {{now, now + 1}};
    ex.persisted_node = record_event(a, d, now);
  }
  return ex;
}

}  // namespace gatsim
