#include "gatsim/simulation.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "gatsim/hash.hpp"
#include "gatsim/time.hpp"

namespace gatsim {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- scenario events -------------------------------------------------------

Timestamp ScenarioEvent::begin_ts() const { return make_timestamp(parse_date(date), start); }
Timestamp ScenarioEvent::end_ts() const { return make_timestamp(parse_date(date), end); }
bool ScenarioEvent::active_at(Timestamp t) const { return t >= begin_ts() && t < end_ts(); }

std::string ScenarioEvent::describe() const {
  const std::string window = date + " " + format_hhmm(start) + "-" + format_hhmm(end % 1440 == 0 && end ? 1440 - 1 : end);
  if (kind == Kind::capacity_change) {
    return "capacity of " + target + " set to " + std::to_string(capacity) + " on " + window;
  }
  return "broadcast '" + text + "' on " + window;
}

json event_to_json(const ScenarioEvent& e) {
  json j{{"id", e.id},
         {"kind", e.kind == ScenarioEvent::Kind::broadcast ? "broadcast" : "capacity_change"},
         {"target", e.target},
         {"date", e.date},
         {"start", format_hhmm(e.start)},
         {"end", e.end >= 1440 ? "24:00" : format_hhmm(e.end)}};
  if (e.kind == ScenarioEvent::Kind::broadcast) {
    j["text"] = e.text;
  } else {
    j["capacity"] = e.capacity;
  }
  return j;
}

ScenarioEvent event_from_json(const json& j) {
  ScenarioEvent e;
  try {
    e.id = j.value("id", "");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "broadcast") {
      e.kind = ScenarioEvent::Kind::broadcast;
    } else if (kind == "capacity_change") {
      e.kind = ScenarioEvent::Kind::capacity_change;
    } else {
      throw SimError("unknown event kind '" + kind + "'");
    }
    e.target = j.value("target", "all");
    e.text = j.value("text", "");
    e.capacity = j.value("capacity", 1);
    e.date = j.at("date").get<std::string>();
    parse_date(e.date);
    auto minute = [](const json& v, int dflt) {
      if (v.is_null()) return dflt;
      if (v.is_number_integer()) return v.get<int>();
      const std::string s = v.get<std::string>();
      return s == "24:00" ? 1440 : parse_hhmm(s);
    };
    e.start = minute(j.value("start", json()), 0);
    e.end = minute(j.value("end", json()), 1440);
  } catch (const SimError&) {
    throw;
  } catch (const std::exception& ex) {
    throw SimError(std::string("bad scenario event: ") + ex.what());
  }
  return e;
}

void check_event(const NetworkGraph& g, const ScenarioEvent& e) {
  if (e.start < 0 || e.end > 1440 || e.start >= e.end) {
    throw SimError("event window " + format_hhmm(e.start) + "-" + std::to_string(e.end) + " is empty or out of range");
  }
  if (e.kind == ScenarioEvent::Kind::broadcast) {
    if (e.text.empty()) throw SimError("broadcast event without text");
    return;
  }
  if (!g.has_link(e.target)) {
    std::string valid;
    for (const auto& id : g.road_link_ids()) valid += (valid.empty() ? "" : ", ") + id;
    throw SimError("unknown link '" + e.target + "'; valid road links: " + valid);
  }
  if (g.link(e.target).kind != LinkKind::road) {
    throw SimError("capacity changes apply to road links only; '" + e.target + "' is " +
                   to_string(g.link(e.target).kind));
  }
  if (e.capacity < 1) throw SimError("new capacity must be at least 1");
}

std::vector<ScenarioEvent> load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("scenario file is not valid JSON: " + path);
  const json& arr = j.is_array() ? j : j.value("events", json::array());
  std::vector<ScenarioEvent> out;
  for (const auto& e : arr) out.push_back(event_from_json(e));
  return out;
}

// ---- configuration ---------------------------------------------------------

std::string resolve_data_path(const std::string& p, const std::string& base_dir) {
  if (p.empty()) return p;
  const fs::path path(p);
  if (path.is_absolute()) return p;
  for (const fs::path& root : {fs::path(base_dir), fs::current_path(), fs::path(GATSIM_DATA_DIR).parent_path()}) {
    const fs::path c = root / path;
    if (fs::exists(c)) return fs::weakly_canonical(c).string();
  }
  return (fs::path(base_dir) / path).string();
}

SimConfig SimConfig::from_json(const json& j, const std::string& base_dir) {
  SimConfig c;
  try {
    c.network_path = resolve_data_path(j.value("network", std::string("data/nguyen_dupuis.json")), base_dir);
    c.population_path = resolve_data_path(j.value("population", std::string("data/population70.json")), base_dir);
    c.start_date = j.at("start_date").get<std::string>();
    c.end_date = j.value("end_date", c.start_date);
    c.seed = j.value("seed", std::uint64_t{0});
    c.gateway = j.value("gateway", json{{"backend", "stub"}});
    if (j.contains("scenario") && j["scenario"].is_string()) {
      c.events = load_scenario_file(resolve_data_path(j["scenario"].get<std::string>(), base_dir));
    }
    for (const auto& e : j.value("events", json::array())) c.events.push_back(event_from_json(e));
    c.out_dir = j.value("out_dir", "");
    c.periodic_interval = j.value("periodic_interval", 30);
    c.periodic_window = j.value("periodic_window", 120);
    c.checkpoint_every = j.value("checkpoint_every", 60);
    c.max_agents = j.value("max_agents", std::size_t{0});
    c.threads = j.value("threads", std::size_t{4});
    c.history_window = j.value("history_window", std::size_t{1440});
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad run configuration: ") + e.what());
  }
  const auto d0 = days_from_civil(parse_date(c.start_date));
  const auto d1 = days_from_civil(parse_date(c.end_date));
  if (d1 < d0) throw ConfigError("end_date " + c.end_date + " precedes start_date " + c.start_date);
  if (c.periodic_interval < 1) throw ConfigError("periodic_interval must be positive");
  for (std::size_t i = 0; i < c.events.size(); ++i) {
    if (c.events[i].id.empty()) c.events[i].id = "ev" + std::to_string(i + 1);
  }
  return c;
}

SimConfig SimConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run configuration " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("run configuration is not valid JSON: " + path);
  return from_json(j, fs::absolute(path).parent_path().string());
}

json SimConfig::to_json() const {
  json ev = json::array();
  for (const auto& e : events) ev.push_back(event_to_json(e));
  return json{{"network", network_path},
              {"population", population_path},
              {"start_date", start_date},
              {"end_date", end_date},
              {"seed", seed},
              {"gateway", gateway},
              {"events", ev},
              {"out_dir", out_dir},
              {"periodic_interval", periodic_interval},
              {"periodic_window", periodic_window},
              {"checkpoint_every", checkpoint_every},
              {"max_agents", max_agents},
              {"threads", threads},
              {"history_window", history_window}};
}

std::string SimConfig::digest() const {
  json j = to_json();
  // Where files land and how many threads run does not change the outcome.
  j.erase("out_dir");
  j.erase("threads");
  j.erase("history_window");
  return hex64(fnv1a64(j.dump()));
}

// ---- runtime json ----------------------------------------------------------

std::string to_string(ActivityStatus s) {
  switch (s) {
    case ActivityStatus::at_facility: return "at_facility";
    case ActivityStatus::queued: return "queued";
    case ActivityStatus::on_link: return "on_link";
  }
  return "at_facility";
}

namespace {

ActivityStatus status_from_string(const std::string& s) {
  if (s == "queued") return ActivityStatus::queued;
  if (s == "on_link") return ActivityStatus::on_link;
  return ActivityStatus::at_facility;
}

json opt_json(const std::optional<Timestamp>& t) { return t ? json(*t) : json(); }
json opt_json(const std::optional<int>& t) { return t ? json(*t) : json(); }

template <class T>
std::optional<T> opt_get(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

json triplog_to_json(const TripLog& t) {
  return json{{"from", t.from},   {"to", t.to},         {"purpose", t.purpose},
              {"depart", t.depart}, {"arrive", opt_json(t.arrive)}, {"mode", to_string(t.mode)},
              {"links", t.links}, {"waits", t.waits},   {"late", opt_json(t.late)},
              {"reduced", t.reduced}};
}

TripLog triplog_from_json(const json& j) {
  TripLog t;
  t.from = j.at("from");
  t.to = j.at("to");
  t.purpose = j.at("purpose");
  t.depart = j.at("depart");
  t.arrive = opt_get<Timestamp>(j, "arrive");
  t.mode = travel_mode_from_string(j.at("mode").get<std::string>());
  t.links = j.at("links").get<std::vector<std::string>>();
  t.waits = j.at("waits").get<std::map<std::string, int>>();
  t.late = opt_get<int>(j, "late");
  t.reduced = j.value("reduced", std::vector<std::string>{});
  return t;
}

json daylog_to_json(const DayLog& d) {
  json trips = json::array();
  for (const auto& t : d.trips) trips.push_back(triplog_to_json(t));
  return json{{"date", d.date},       {"trips", trips},      {"work_arrival", opt_json(d.work_arrival)},
              {"workday", d.workday}, {"missed", d.missed}, {"teleported", d.teleported},
              {"incidents_seen", d.incidents_seen}};
}

DayLog daylog_from_json(const json& j) {
  DayLog d;
  d.date = j.at("date");
  for (const auto& t : j.at("trips")) d.trips.push_back(triplog_from_json(t));
  d.work_arrival = opt_get<int>(j, "work_arrival");
  d.workday = j.at("workday");
  d.missed = j.at("missed").get<std::vector<std::string>>();
  d.teleported = j.at("teleported");
  d.incidents_seen = j.value("incidents_seen", std::vector<std::string>{});
  return d;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

json runtime_to_json(const AgentRuntime& r) {
  return json{{"id", r.id},
              {"status", to_string(r.status)},
              {"facility", r.facility},
              {"passive", r.passive},
              {"plan_date", r.plan_date},
              {"plan", plan_to_json(r.plan)},
              {"entry", r.entry},
              {"traveling", r.traveling},
              {"arrived_at", r.arrived_at},
              {"last_check", r.last_check},
              {"transition_pending", r.transition_pending},
              {"queue_episode", r.queue_episode},
              {"token", r.token},
              {"leg_links", r.leg_links},
              {"leg_pos", r.leg_pos},
              {"leg_mode", to_string(r.leg_mode)},
              {"trip_start", r.trip_start},
              {"trip_waits", r.trip_waits},
              {"trip_reduced", r.trip_reduced},
              {"car_at", r.car_at ? json(*r.car_at) : json()},
              {"reflected", r.reflected},
              {"log", daylog_to_json(r.log)}};
}

AgentRuntime runtime_from_json(const json& j) {
  AgentRuntime r;
  r.id = j.at("id");
  r.status = status_from_string(j.at("status"));
  r.facility = j.at("facility");
  r.passive = j.at("passive");
  r.plan_date = j.at("plan_date");
  r.plan = plan_from_json(j.at("plan"));
  r.entry = j.at("entry");
  r.traveling = j.at("traveling");
  r.arrived_at = j.at("arrived_at");
  r.last_check = j.at("last_check");
  r.transition_pending = j.at("transition_pending");
  r.queue_episode = j.at("queue_episode");
  r.token = j.at("token");
  r.leg_links = j.at("leg_links").get<std::vector<std::string>>();
  r.leg_pos = j.at("leg_pos");
  r.leg_mode = travel_mode_from_string(j.at("leg_mode").get<std::string>());
  r.trip_start = j.at("trip_start");
  r.trip_waits = j.at("trip_waits").get<std::map<std::string, int>>();
  r.trip_reduced = j.at("trip_reduced").get<std::set<std::string>>();
  r.car_at = opt_get<std::string>(j, "car_at");
  r.reflected = j.at("reflected");
  r.log = daylog_from_json(j.at("log"));
  return r;
}

// ---- trips -----------------------------------------------------------------

json trip_to_json(const TripRecord& t) {
  return json{{"agent", t.agent},     {"origin", t.origin},   {"destination", t.destination},
              {"depart", t.depart},   {"arrive", opt_json(t.arrive)}, {"mode", to_string(t.mode)},
              {"links", t.links},     {"delay", t.delay},     {"purpose", t.purpose},
              {"late", opt_json(t.late)}};
}

TripRecord trip_from_json(const json& j) {
  TripRecord t;
  t.agent = j.at("agent");
  t.origin = j.at("origin");
  t.destination = j.at("destination");
  t.depart = j.at("depart");
  t.arrive = opt_get<Timestamp>(j, "arrive");
  t.mode = travel_mode_from_string(j.at("mode").get<std::string>());
  t.links = j.at("links").get<std::vector<std::string>>();
  t.delay = j.at("delay");
  t.purpose = j.at("purpose");
  t.late = opt_get<int>(j, "late");
  return t;
}

std::string trips_csv_header() { return "agent,origin,destination,depart,arrive,mode,path,delay,purpose,late"; }

std::string trip_to_csv(const TripRecord& t) {
  std::ostringstream o;
  o << t.agent << "," << t.origin << "," << t.destination << "," << to_iso(t.depart) << ","
    << (t.arrive ? to_iso(*t.arrive) : "") << "," << to_string(t.mode) << "," << join(t.links, ";") << ","
    << t.delay << "," << t.purpose << "," << (t.late ? std::to_string(*t.late) : "");
  return o.str();
}

std::vector<TripRecord> read_trips_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SimError("cannot open trip log " + path);
  std::string line;
  std::getline(in, line);
  if (line != trips_csv_header()) throw SimError("unexpected trip log header in " + path);
  std::vector<TripRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 10) throw SimError("malformed trip log row: " + line);
    TripRecord t;
    t.agent = f[0];
    t.origin = f[1];
    t.destination = f[2];
    t.depart = parse_iso(f[3]);
    if (!f[4].empty()) t.arrive = parse_iso(f[4]);
    t.mode = travel_mode_from_string(f[5]);
    if (!f[6].empty()) t.links = split(f[6], ';');
    t.delay = std::stoi(f[7]);
    t.purpose = f[8];
    if (!f[9].empty()) t.late = std::stoi(f[9]);
    out.push_back(std::move(t));
  }
  return out;
}

// ---- link history ----------------------------------------------------------

void LinkHistory::init(const NetworkGraph& g) {
  links.clear();
  base_capacity.clear();
  for (const auto& l : g.links()) {
    if (l.kind != LinkKind::road) continue;
    links.push_back(l.id);
    base_capacity.push_back(l.capacity);
  }
  ticks.clear();
  first = 0;
  last = -1;
}

void LinkHistory::record(Timestamp t, const std::vector<LinkCongestion>& snap) {
  if (last < first) first = t;
  last = t;
  bool idle = true;
  std::vector<Sample> row(snap.size());
  for (std::size_t i = 0; i < snap.size(); ++i) {
    row[i] = {snap[i].occupancy, snap[i].queue_len, snap[i].capacity, snap[i].wait};
    if (row[i].occupancy || row[i].queue || row[i].wait || row[i].capacity != base_capacity[i]) idle = false;
  }
  if (!idle) ticks[t] = std::move(row);
}

std::vector<LinkHistory::Sample> LinkHistory::at(Timestamp t) const {
  if (!covers(t)) throw SimError("no link state recorded for " + to_iso(t));
  auto it = ticks.find(t);
  if (it != ticks.end()) return it->second;
  std::vector<Sample> row(links.size());
  for (std::size_t i = 0; i < links.size(); ++i) row[i].capacity = base_capacity[i];
  return row;
}

void LinkHistory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw SimError("cannot write " + path);
  out << "time,link,occupancy,queue,capacity,wait,level\n";
  for (const auto& [t, row] : ticks) {
    const std::string ts = to_iso(t);
    for (std::size_t i = 0; i < row.size(); ++i) {
      const auto& s = row[i];
      if (!s.occupancy && !s.queue && !s.wait && s.capacity == base_capacity[i]) continue;
      out << ts << "," << links[i] << "," << s.occupancy << "," << s.queue << "," << s.capacity << "," << s.wait
          << "," << to_string(level_for_wait(s.wait)) << "\n";
    }
  }
}

LinkHistory LinkHistory::read_csv(const std::string& path, const NetworkGraph& g, Timestamp first, Timestamp last) {
  LinkHistory h;
  h.init(g);
  h.first = first;
  h.last = last;
  std::map<std::string, std::size_t> ix;
  for (std::size_t i = 0; i < h.links.size(); ++i) ix[h.links[i]] = i;
  std::ifstream in(path);
  if (!in) throw SimError("cannot open link state log " + path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 7) throw SimError("malformed link state row: " + line);
    const Timestamp t = parse_iso(f[0]);
    auto it = ix.find(f[1]);
    if (it == ix.end()) throw SimError("link state log names unknown link " + f[1]);
    auto& row = h.ticks[t];
    if (row.empty()) {
      row.resize(h.links.size());
      for (std::size_t i = 0; i < h.links.size(); ++i) row[i].capacity = h.base_capacity[i];
    }
    row[it->second] = {std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4]), std::stoi(f[5])};
  }
  return h;
}

json StateView::to_json() const {
  json ag = json::array();
  for (const auto& a : agents) {
    ag.push_back({{"id", a.id}, {"name", a.name}, {"status", to_string(a.status)}, {"facility", a.facility},
                  {"link", a.link}, {"node", a.node}});
  }
  json ln = json::array();
  for (const auto& c : links) {
    ln.push_back({{"id", c.link_id}, {"occupancy", c.occupancy}, {"queue", c.queue_len},
                  {"capacity", c.capacity}, {"wait", c.wait}, {"level", to_string(c.level)}});
  }
  return json{{"clock", to_iso(clock)}, {"agents", ag}, {"links", ln}, {"active_events", active_events}};
}

// ---- simulation ------------------------------------------------------------

namespace {

std::shared_ptr<Gateway> gateway_for(const SimConfig& cfg) {
  json gj = cfg.gateway;
  if (!gj.contains("seed")) gj["seed"] = cfg.seed;
  auto gw = std::make_shared<Gateway>(Gateway::from_config(GatewayConfig::from_json(gj)));
  gw->set_max_in_flight(cfg.threads);
  return gw;
}

}  // namespace

Simulation::Simulation(SimConfig cfg) : Simulation(cfg, gateway_for(cfg)) {}

Simulation::Simulation(SimConfig cfg, std::shared_ptr<Gateway> gateway) : cfg_(std::move(cfg)), gw_(std::move(gateway)) {
  if (!gw_) gw_ = gateway_for(cfg_);
  try {
    g_ = std::make_shared<NetworkGraph>(load_network_file(cfg_.network_path));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  cog_ = std::make_unique<Cognition>(*g_, *gw_);
  init_world();
}

Timestamp Simulation::start_time() const { return make_timestamp(parse_date(cfg_.start_date)); }
Timestamp Simulation::end_time() const { return make_timestamp(parse_date(cfg_.end_date)) + 1440; }
std::string Simulation::today() const { return format_date(date_of(clock_)); }

void Simulation::init_world() {
  std::vector<AgentProfile> people;
  try {
    people = load_population_file(cfg_.population_path);
    check_profiles(*g_, people);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("population: ") + e.what());
  }
  if (cfg_.max_agents > 0 && people.size() > cfg_.max_agents) people.resize(cfg_.max_agents);
  minds_.clear();
  rt_.clear();
  for (const auto& p : people) {
    by_id_[p.id] = minds_.size();
    by_name_[p.name] = minds_.size();
    minds_.emplace_back(p);
    AgentRuntime r;
    r.id = p.id;
    r.facility = p.home_facility;
    r.passive = p.is_child();
    rt_.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < cfg_.events.size(); ++i) {
    if (cfg_.events[i].id.empty()) cfg_.events[i].id = "ev" + std::to_string(i + 1);
    check_event(*g_, cfg_.events[i]);
  }
  scenario_ = cfg_.events;
  clock_ = start_time();
  traffic_ = TrafficState(*g_);
  traffic_.set_clock(clock_);
  base_capacity_.clear();
  for (std::size_t i = 0; i < g_->links().size(); ++i) base_capacity_.push_back(traffic_.capacity(i));
  history_.init(*g_);
  views_.clear();
  if (cfg_.history_window > 0) views_.push_back(state_view());
}

std::size_t Simulation::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw SimError("unknown agent '" + id + "'");
  return it->second;
}

const AgentMind& Simulation::mind(const std::string& id) const { return minds_[index_of(id)]; }
const AgentRuntime& Simulation::runtime(const std::string& id) const { return rt_[index_of(id)]; }

void Simulation::log_event(json e) {
  e["t"] = to_iso(clock_);
  events_log_.push_back(std::move(e));
}

void Simulation::add_event(ScenarioEvent e) {
  check_event(*g_, e);
  if (e.id.empty()) e.id = "ev" + std::to_string(scenario_.size() + 1);
  for (const auto& x : scenario_) {
    if (x.id == e.id) throw SimError("duplicate event id '" + e.id + "'");
  }
  log_event({{"type", "event_added"}, {"event", event_to_json(e)}});
  scenario_.push_back(std::move(e));
}

std::vector<std::string> Simulation::active_broadcasts() const {
  std::vector<std::string> out;
  for (const auto& e : scenario_) {
    if (e.kind == ScenarioEvent::Kind::broadcast && e.active_at(clock_)) out.push_back(e.text);
  }
  return out;
}

// ---- tick ------------------------------------------------------------------

void Simulation::step() {
  if (finished()) throw SimError("simulation horizon reached at " + to_iso(clock_));
  if (minute_of_day(clock_) == 0 && (days_.empty() || days_.back().date != today())) begin_day();
  apply_capacity_events();
  broadcast_chats();
  plan_updates();      // 1
  activity_updates();  // 2
  movement();          // 3
  reflections();       // 4
  // 5
  ++clock_;
  if (traffic_.clock() != clock_) throw SimError("traffic clock out of step");
  if (minute_of_day(clock_) == 0) end_day();
  persist();
}

void Simulation::run_until(Timestamp t) {
  while (!finished() && clock_ < t) step();
}

void Simulation::run() {
  run_until(end_time());
  if (!cfg_.out_dir.empty()) {
    write_logs(cfg_.out_dir);
    save_checkpoint((fs::path(cfg_.out_dir) / "checkpoint.json").string());
  }
}

void Simulation::begin_day() {
  const std::string date = today();
  days_.push_back({date, 0, 0, 0});
  flows_[date] = std::vector<int>(g_->links().size(), 0);
  const bool weekend = is_weekend(clock_);
  for (std::size_t i = 0; i < rt_.size(); ++i) {
    auto& r = rt_[i];
    auto& m = minds_[i];
    r.log = DayLog{};
    r.log.date = date;
    r.log.workday = !r.passive && m.profile.has_work() && !weekend;
    r.reflected = false;
    r.plan_date.clear();
    r.plan = ActivityPlan{};
    r.entry = 0;
    r.arrived_at = clock_;
    r.last_check = -1;
    r.transition_pending = false;
    r.car_at.reset();
    m.stm.clear();
    m.chats_today.clear();
    if (r.passive) {
      r.plan = ActivityPlan{{{m.profile.home_facility, std::nullopt, std::nullopt, TravelMode::none, {}, "Stay home."}}};
      r.plan_date = date;
    }
  }

  // Household coordination: who takes the car(s), who does the school run.
  holders_.clear();
  school_run_.clear();
  std::map<std::string, std::vector<std::size_t>> households;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < minds_.size(); ++i) {
    const auto& hh = minds_[i].profile.household_id;
    if (!households.count(hh)) order.push_back(hh);
    households[hh].push_back(i);
  }
  const auto broadcasts = active_broadcasts();
  for (const auto& hh : order) {
    const auto& members = households[hh];
    std::vector<std::size_t> adults;
    std::vector<std::string> children;
    for (std::size_t i : members) {
      if (rt_[i].passive) {
        children.push_back(minds_[i].profile.name);
      } else {
        adults.push_back(i);
      }
    }
    if (adults.empty()) continue;
    const int vehicles = minds_[adults.front()].profile.household_vehicles;
    json agreement;
    if (adults.size() >= 2) {
      std::vector<const AgentMind*> ad;
      for (std::size_t i : adults) ad.push_back(&minds_[i]);
      json extra = cog_->household_features(ad, vehicles, children);
      extra["broadcasts"] = broadcasts;
      for (std::size_t i : adults) {
        json r = cog_->chat_initiation(minds_[i], true, clock_, extra);
        if (!r.value("initiate", false)) continue;
        const std::string partner = r.value("partner", "");
        auto it = std::find_if(adults.begin(), adults.end(),
                               [&](std::size_t k) { return minds_[k].profile.name == partner && k != i; });
        if (it == adults.end()) break;
        ChatResult c = cog_->coordinate_chat(minds_[i], minds_[*it], r.value("topic", ""), r.value("utterance", ""),
                                             clock_, extra);
        agreement = c.agreement;
        log_event({{"type", "chat"}, {"agents", {minds_[i].profile.id, minds_[*it].profile.id}},
                   {"summary", c.summary}, {"agreement", c.agreement}});
        break;
      }
    }
    std::vector<std::string> holders;
    auto licensed = [&](std::size_t i) { return minds_[i].profile.licensed_driver; };
    if (agreement.is_object() && agreement.contains("car_holders")) {
      for (const auto& n : agreement["car_holders"]) {
        for (std::size_t i : adults) {
          if (minds_[i].profile.name == n.get<std::string>() && licensed(i) &&
              static_cast<int>(holders.size()) < vehicles &&
              std::find(holders.begin(), holders.end(), rt_[i].id) == holders.end()) {
            holders.push_back(rt_[i].id);
          }
        }
      }
    } else {
      for (std::size_t i : adults) {
        if (licensed(i) && static_cast<int>(holders.size()) < vehicles) holders.push_back(rt_[i].id);
      }
    }
    for (const auto& id : holders) rt_[index_of(id)].car_at = minds_[index_of(id)].profile.home_facility;
    holders_[hh] = holders;
    if (!children.empty()) {
      std::size_t pick = adults.front();
      if (agreement.is_object() && agreement.contains("school_run")) {
        for (std::size_t i : adults) {
          if (minds_[i].profile.name == agreement["school_run"].get<std::string>()) pick = i;
        }
      } else if (!holders.empty()) {
        pick = index_of(holders.front());
      }
      if (!weekend) {
        std::string names;
        for (std::size_t k = 0; k < children.size(); ++k) names += (k ? " and " : "") + children[k];
        school_run_[rt_[pick].id] = names;
      }
    }
  }
  log_event({{"type", "day_start"}, {"date", date}});
}

void Simulation::apply_capacity_events() {
  std::map<std::size_t, int> want;
  for (const auto& e : scenario_) {
    if (e.kind != ScenarioEvent::Kind::capacity_change) continue;
    const std::size_t li = g_->link_index(e.target);
    if (!want.count(li)) want[li] = base_capacity_[li];
    if (e.active_at(clock_)) want[li] = e.capacity;
  }
  for (auto [li, cap] : want) {
    if (traffic_.capacity(li) != cap) {
      traffic_.set_capacity(li, cap);
      log_event({{"type", "capacity"}, {"link", g_->link(li).id}, {"capacity", cap}});
    }
  }
}

void Simulation::broadcast_chats() {
  bool starting = false;
  for (const auto& e : scenario_) {
    if (e.kind == ScenarioEvent::Kind::broadcast && e.begin_ts() == clock_) starting = true;
  }
  if (!starting) return;
  const auto broadcasts = active_broadcasts();
  log_event({{"type", "broadcast"}, {"texts", broadcasts}});
  json extra{{"broadcasts", broadcasts}};
  for (std::size_t i = 0; i < minds_.size(); ++i) {
    if (rt_[i].passive) continue;
    json r = cog_->chat_initiation(minds_[i], false, clock_, extra);
    if (!r.value("initiate", false)) continue;
    auto it = by_name_.find(r.value("partner", ""));
    if (it == by_name_.end() || it->second == i) continue;
    try {
      ChatResult c = cog_->coordinate_chat(minds_[i], minds_[it->second], r.value("topic", ""),
                                           r.value("utterance", ""), clock_, extra);
      if (!c.suppressed) {
        log_event({{"type", "chat"}, {"agents", {rt_[i].id, rt_[it->second].id}}, {"summary", c.summary}});
      }
    } catch (const CognitionError& e) {
      log_event({{"type", "chat_refused"}, {"agent", rt_[i].id}, {"reason", e.what()}});
    }
  }
}

std::optional<Timestamp> Simulation::leave_time(const AgentRuntime& r) const {
  if (r.traveling || r.entry + 1 >= r.plan.size()) return std::nullopt;
  const PlanEntry& here = r.plan.entries[r.entry];
  const PlanEntry& next = r.plan.entries[r.entry + 1];
  const Timestamp ready = r.arrived_at + here.duration.value_or(0);
  if (!next.departure) return ready;
  const Timestamp day0 = make_timestamp(parse_date(r.plan_date));
  return std::max(day0 + *next.departure, ready);
}

std::optional<Trigger> Simulation::needs_plan_update(std::size_t i) const {
  const AgentRuntime& r = rt_.at(i);
  if (r.passive) return std::nullopt;
  if (r.plan_date != today()) return Trigger::initial;
  if (r.traveling) {
    if (r.status != ActivityStatus::queued || !traffic_.contains(r.token)) return std::nullopt;
    const Token& t = traffic_.token(r.token);
    const std::int64_t episode = (r.trip_start << 8) | static_cast<std::int64_t>(t.pos);
    if (clock_ - t.queued_since >= 1 && r.queue_episode != episode) return Trigger::waiting_at_node;
    return std::nullopt;
  }
  if (r.transition_pending) return Trigger::activity_transition;
  auto leave = leave_time(r);
  if (leave && *leave - clock_ <= cfg_.periodic_window && *leave > clock_ &&
      (r.last_check < 0 || clock_ - r.last_check >= cfg_.periodic_interval)) {
    return Trigger::periodic;
  }
  return std::nullopt;
}

ReactionContext Simulation::reaction_context(std::size_t i, Trigger t) const {
  const AgentRuntime& r = rt_[i];
  ReactionContext c;
  c.now = clock_;
  c.trigger = t;
  c.plan = &r.plan;
  c.entry = r.entry;
  c.traveling = r.traveling;
  c.arrived_at = r.arrived_at;
  c.car_location = r.car_at;
  c.car = r.car_at.has_value();
  c.broadcasts = active_broadcasts();
  c.traffic = &traffic_;
  if (r.traveling) {
    c.leg_mode = r.leg_mode;
    c.remaining_links.assign(r.leg_links.begin() + static_cast<long>(r.leg_pos), r.leg_links.end());
    const Token& tok = traffic_.token(r.token);
    c.queued = !tok.on_link;
    c.queue_wait = c.queued ? static_cast<int>(clock_ - tok.queued_since) : 0;
    const Link& cur = g_->link(tok.route[tok.pos].link);
    c.node = tok.on_link ? cur.to_index : cur.from_index;
    if (tok.on_link && !c.remaining_links.empty()) {
      // Still on a link: replanning starts where it ends.
    }
  } else {
    c.node = g_->facility_node(r.facility);
  }
  return c;
}

namespace {

struct UpdateResult {
  std::optional<PlanResult> plan;
  std::optional<RevisionOutcome> revision;
  std::string error;
};

}  // namespace

void Simulation::plan_updates() {
  std::vector<std::pair<std::size_t, Trigger>> todo;
  for (std::size_t i = 0; i < rt_.size(); ++i) {
    if (auto t = needs_plan_update(i)) todo.emplace_back(i, *t);
  }
  if (todo.empty()) return;

  std::vector<DayContext> dctx(todo.size());
  std::vector<ReactionContext> rctx(todo.size());
  for (std::size_t k = 0; k < todo.size(); ++k) {
    const auto [i, t] = todo[k];
    if (t == Trigger::initial) {
      DayContext& d = dctx[k];
      d.day_start = make_timestamp(date_of(clock_));
      d.car = rt_[i].car_at.has_value();
      auto sr = school_run_.find(rt_[i].id);
      if (sr != school_run_.end()) d.school_child = sr->second;
      d.broadcasts = active_broadcasts();
      d.traffic = &traffic_;
    } else {
      rctx[k] = reaction_context(i, t);
    }
  }
  std::vector<std::string> reduced;
  for (const auto& id : history_.links) {
    const std::size_t li = g_->link_index(id);
    if (traffic_.capacity(li) < base_capacity_[li]) reduced.push_back(id);
  }
  auto results = gw_->map_ordered<UpdateResult>(todo.size(), [&](std::size_t k) {
    UpdateResult res;
    const auto [i, t] = todo[k];
    try {
      if (t == Trigger::initial) {
        res.plan = cog_->generate_daily_plan(minds_[i], dctx[k]);
      } else {
        res.revision = cog_->revise_plan(minds_[i], rctx[k]);
      }
    } catch (const std::exception& e) {
      res.error = e.what();
    }
    return res;
  });

  for (std::size_t k = 0; k < todo.size(); ++k) {
    const auto [i, t] = todo[k];
    AgentRuntime& r = rt_[i];
    UpdateResult& res = results[k];
    if (!res.error.empty()) {
      log_event({{"type", "cognition_error"}, {"agent", r.id}, {"trigger", to_string(t)}, {"error", res.error}});
      if (t == Trigger::initial) {
        r.plan = ActivityPlan{{{minds_[i].profile.home_facility, std::nullopt, std::nullopt, TravelMode::none, {},
                                "Stay at home."}}};
        r.plan_date = today();
        r.entry = 0;
      }
    } else if (res.plan) {
      r.plan = res.plan->plan;
      r.plan_date = today();
      r.entry = 0;
      r.arrived_at = make_timestamp(date_of(clock_));
      json j{{"type", "plan"}, {"agent", r.id}, {"plan", plan_to_json(r.plan)}, {"attempts", res.plan->attempts}};
      if (res.plan->fallback) j["fallback"] = format_violations(res.plan->violations);
      log_event(std::move(j));
    } else if (res.revision) {
      RevisionOutcome& o = *res.revision;
      const bool changed = !(o.plan == r.plan);
      r.plan = o.plan;
      if (o.reroute && r.traveling && traffic_.contains(r.token)) {
        const Token& tok = traffic_.token(r.token);
        const std::size_t entered = tok.on_link ? tok.pos + 1 : tok.pos;
        if (!o.reroute->links.empty() && entered == r.leg_pos) {
          if (!tok.on_link && clock_ > tok.queued_since) {
            r.trip_waits[g_->link(tok.route[tok.pos].link).id] += static_cast<int>(clock_ - tok.queued_since);
          }
          traffic_.reroute(r.token, TrafficState::make_route(*g_, *o.reroute));
          r.leg_links.resize(r.leg_pos);
          r.leg_links.insert(r.leg_links.end(), o.reroute->links.begin(), o.reroute->links.end());
        }
      }
      for (const auto& f : o.skipped) {
        if (std::find(r.log.missed.begin(), r.log.missed.end(), f) == r.log.missed.end()) r.log.missed.push_back(f);
      }
      if (o.revision.decision != RevisionDecision::continue_plan || o.rejected || changed) {
        log_event({{"type", "revision"}, {"agent", r.id}, {"trigger", to_string(t)},
                   {"revision", revision_to_json(o.revision)}, {"rejected", o.rejected}});
      }
    }
    if (t == Trigger::waiting_at_node && traffic_.contains(r.token)) {
      r.queue_episode = (r.trip_start << 8) | static_cast<std::int64_t>(traffic_.token(r.token).pos);
    }
    if (t != Trigger::initial) {
      for (const auto& l : reduced) {
        auto& seen = r.log.incidents_seen;
        if (std::find(seen.begin(), seen.end(), l) == seen.end()) seen.push_back(l);
      }
    }
    if (t == Trigger::activity_transition) r.transition_pending = false;
    if (t != Trigger::waiting_at_node) r.last_check = clock_;
  }
}

namespace {

std::string purpose_of(const AgentProfile& p, const ActivityPlan& plan, std::size_t entry) {
  const std::string& f = plan.entries[entry].facility;
  if (f == p.home_facility) return "home";
  if (f == p.work_facility) return "work";
  if (f == "School" && entry + 1 < plan.size()) return "school";
  static const std::set<std::string> leisure{"Gym", "Cinema", "Museum", "Amusement park", "Food court"};
  return leisure.count(f) ? "leisure" : "errand";
}

}  // namespace

void Simulation::activity_updates() {
  for (std::size_t i = 0; i < rt_.size(); ++i) {
    AgentRuntime& r = rt_[i];
    if (r.passive || r.traveling || r.plan_date != today()) continue;
    // Zero-length legs chain within the same tick.
    for (int guard = 0; guard < 8; ++guard) {
      auto leave = leave_time(r);
      if (!leave || *leave > clock_) break;
      depart(i);
      if (r.traveling) break;
    }
  }
}

void Simulation::depart(std::size_t i) {
  AgentRuntime& r = rt_[i];
  const AgentProfile& p = minds_[i].profile;
  const std::size_t next = r.entry + 1;
  const PlanEntry& e = r.plan.entries[next];
  const std::string from = r.facility;
  if (e.facility == from || e.mode == TravelMode::none) {
    r.entry = next;
    r.arrived_at = clock_;
    r.facility = e.facility;
    return;
  }
  TravelMode mode = e.mode;
  if (mode == TravelMode::drive && (!p.licensed_driver || r.car_at != from)) {
    log_event({{"type", "mode_fallback"}, {"agent", r.id}, {"reason", "no car at " + from}});
    mode = TravelMode::transit;
  }
  Path path;
  try {
    path = resolve_path(*g_, e.path, mode, g_->facility_node(from), g_->facility_node(e.facility), &traffic_);
  } catch (const RoutingError&) {
    try {
      path = shortest_path_nodes(*g_, g_->facility_node(from), g_->facility_node(e.facility), mode, &traffic_);
    } catch (const RoutingError& err) {
      log_event({{"type", "unreachable"}, {"agent", r.id}, {"to", e.facility}, {"reason", err.what()}});
      r.log.missed.push_back(e.facility);
      r.plan.entries.erase(r.plan.entries.begin() + static_cast<long>(next));
      return;
    }
  }
  path.mode = mode;
  if (path.links.empty()) {
    r.entry = next;
    r.arrived_at = clock_;
    r.facility = e.facility;
    return;
  }
  r.token = next_token_++;
  traffic_.insert(r.token, TrafficState::make_route(*g_, path));
  token_owner_[r.token] = i;
  r.traveling = true;
  r.status = ActivityStatus::queued;
  r.entry = next;
  r.leg_links = path.links;
  r.leg_pos = 0;
  r.leg_mode = mode;
  r.trip_start = clock_;
  r.trip_waits.clear();
  r.trip_reduced.clear();
  r.queue_episode = -1;
  if (mode == TravelMode::drive) r.car_at = e.facility;
  log_event({{"type", "depart"}, {"agent", r.id}, {"from", from}, {"to", e.facility}, {"mode", to_string(mode)},
             {"links", path.links}});
}

void Simulation::movement() {
  StepReport rep = traffic_.step();
  auto& flow = flows_[today()];
  for (const auto& en : rep.entries) {
    auto it = token_owner_.find(en.token);
    ++flow[en.link];
    if (it == token_owner_.end()) continue;
    AgentRuntime& r = rt_[it->second];
    ++r.leg_pos;
    if (en.waited > 0) r.trip_waits[g_->link(en.link).id] += en.waited;
  }
  for (const auto& a : rep.arrivals) {
    auto it = token_owner_.find(a.token);
    if (it == token_owner_.end()) continue;
    const std::size_t i = it->second;
    token_owner_.erase(it);
    arrive(i, a.tick, a);
  }
  for (auto& r : rt_) {
    if (!r.traveling || !traffic_.contains(r.token)) continue;
    const Token& t = traffic_.token(r.token);
    r.status = t.on_link ? ActivityStatus::on_link : ActivityStatus::queued;
    // Held up at a link running below its normal capacity.
    const std::size_t li = t.route[t.pos].link;
    if (!t.on_link && t.route[t.pos].capacitated && traffic_.capacity(li) < base_capacity_[li]) {
      r.trip_reduced.insert(g_->link(li).id);
    }
  }
  auto snap = congestion_snapshot(traffic_, *g_, true);
  history_.record(clock_, snap);
}

void Simulation::finish_trip(std::size_t i, std::optional<Timestamp> arrive) {
  AgentRuntime& r = rt_[i];
  const AgentProfile& p = minds_[i].profile;
  TripRecord t;
  t.agent = r.id;
  t.origin = r.facility;
  t.destination = r.plan.entries[r.entry].facility;
  t.depart = r.trip_start;
  t.arrive = arrive;
  t.mode = r.leg_mode;
  t.links.assign(r.leg_links.begin(), r.leg_links.begin() + static_cast<long>(std::min(r.leg_pos, r.leg_links.size())));
  for (const auto& [l, w] : r.trip_waits) t.delay += w;
  t.purpose = purpose_of(p, r.plan, r.entry);
  if (t.purpose == "work" && arrive && p.work_start) t.late = minute_of_day(*arrive) - *p.work_start;
  trips_.push_back(t);

  TripLog tl;
  tl.from = t.origin;
  tl.to = t.destination;
  tl.purpose = t.purpose;
  tl.depart = t.depart;
  tl.arrive = t.arrive;
  tl.mode = t.mode;
  tl.links = t.links;
  tl.waits = r.trip_waits;
  tl.late = t.late;
  tl.reduced.assign(r.trip_reduced.begin(), r.trip_reduced.end());
  r.log.trips.push_back(tl);
  if (t.purpose == "work" && arrive && !r.log.work_arrival) r.log.work_arrival = minute_of_day(*arrive);
  ++days_.back().trips;
  log_event({{"type", arrive ? "arrive" : "cut"}, {"agent", r.id}, {"to", t.destination}, {"delay", t.delay},
             {"late", opt_json(t.late)}});
}

void Simulation::arrive(std::size_t i, Timestamp when, const Arrival&) {
  AgentRuntime& r = rt_[i];
  finish_trip(i, when);
  const TripRecord& t = trips_.back();
  r.traveling = false;
  r.status = ActivityStatus::at_facility;
  r.facility = t.destination;
  r.arrived_at = when;
  r.transition_pending = true;
  r.leg_links.clear();
  r.leg_pos = 0;

  // Experience worth remembering.
  ConceptDraft d;
  d.kind = ConceptKind::event;
  d.temporal = {{r.trip_start, when}};
  d.spatial.insert(t.destination);
  std::vector<std::string> waited;
  for (const auto& [l, w] : r.trip_waits) {
    d.spatial.insert(l);
    if (w > 0) waited.push_back(std::to_string(w) + " minutes on " + l);
  }
  if (t.purpose == "work" && t.delay < 5 && t.late && *t.late <= 0) {
    d.content = "routine commute";
  } else {
    d.content = "Travelled by " + to_string(t.mode) + " from " + t.origin + " to " + t.destination + ", arriving at " +
                format_hhmm(minute_of_day(when)) + ".";
    if (!waited.empty()) d.content += " Waited in the queue " + join(waited, ", ") + ".";
    if (t.late && *t.late > 0) d.content += " I was " + std::to_string(*t.late) + " minutes late for work.";
  }
  cog_->record_event(minds_[i], d, when);
}

void Simulation::reflections() {
  for (std::size_t i = 0; i < rt_.size(); ++i) {
    const AgentRuntime& r = rt_[i];
    if (r.passive || r.reflected || r.traveling || r.plan_date != today()) continue;
    if (r.plan.size() > 1 && r.entry + 1 == r.plan.size() && r.facility == minds_[i].profile.home_facility &&
        !r.transition_pending) {
      day_reflect(i);
    }
  }
}

void Simulation::day_reflect(std::size_t i) {
  AgentRuntime& r = rt_[i];
  ReflectionRecord rec = cog_->daily_reflection(minds_[i], r.log, clock_);
  r.reflected = true;
  ++days_.back().reflections;
  log_event({{"type", "reflection"}, {"agent", r.id}, {"content", rec.content}});
}

void Simulation::end_day() {
  // clock_ is the midnight that closes the day.
  const std::string date = days_.back().date;
  for (std::size_t i = 0; i < rt_.size(); ++i) {
    AgentRuntime& r = rt_[i];
    const AgentProfile& p = minds_[i].profile;
    std::vector<std::string> cancelled;
    bool teleport = false;
    if (r.traveling) {
      traffic_.remove(r.token);
      token_owner_.erase(r.token);
      finish_trip(i, std::nullopt);
      for (std::size_t k = r.entry; k < r.plan.size(); ++k) {
        if (r.plan.entries[k].facility != p.home_facility) cancelled.push_back(r.plan.entries[k].facility);
      }
      teleport = true;
    } else {
      for (std::size_t k = r.entry + 1; k < r.plan.size(); ++k) {
        if (r.plan.entries[k].facility != p.home_facility) cancelled.push_back(r.plan.entries[k].facility);
      }
      teleport = r.facility != p.home_facility;
    }
    for (const auto& c : cancelled) {
      if (std::find(r.log.missed.begin(), r.log.missed.end(), c) == r.log.missed.end()) r.log.missed.push_back(c);
    }
    if (teleport) {
      r.log.teleported = true;
      ++days_.back().teleported;
      cog_->failure_reflection(minds_[i], cancelled, clock_);
      log_event({{"type", "teleport"}, {"agent", r.id}, {"from", r.traveling ? "network" : r.facility},
                 {"cancelled", cancelled}});
    }
    r.traveling = false;
    r.status = ActivityStatus::at_facility;
    r.facility = p.home_facility;
    r.leg_links.clear();
    r.leg_pos = 0;
    r.transition_pending = false;
    if (r.car_at) r.car_at = p.home_facility;
    if (!r.reflected) day_reflect(i);
  }
  for (auto& m : minds_) m.store.sweep_expired(clock_);
  log_event({{"type", "day_end"}, {"date", date}});
  if (!cfg_.out_dir.empty()) {
    write_logs(cfg_.out_dir);
    save_checkpoint((fs::path(cfg_.out_dir) / ("checkpoint_" + date + ".json")).string());
  }
}

void Simulation::persist() {
  if (cfg_.history_window > 0) {
    views_.push_back(state_view());
    while (views_.size() > cfg_.history_window) views_.pop_front();
  }
  if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0 && minute_of_day(clock_) % cfg_.checkpoint_every == 0) {
    save_checkpoint((fs::path(cfg_.out_dir) / "checkpoint.json").string());
  }
}

// ---- views -----------------------------------------------------------------

StateView Simulation::state_view() const {
  StateView v;
  v.clock = clock_;
  for (std::size_t i = 0; i < rt_.size(); ++i) {
    const AgentRuntime& r = rt_[i];
    AgentView a;
    a.id = r.id;
    a.name = minds_[i].profile.name;
    a.status = r.status;
    a.facility = r.facility;
    if (r.traveling && traffic_.contains(r.token)) {
      const Token& t = traffic_.token(r.token);
      const Link& l = g_->link(t.route[t.pos].link);
      a.link = l.id;
      a.node = t.on_link ? "" : l.from;
    } else {
      a.node = g_->facility_by_name(r.facility).node_id;
    }
    v.agents.push_back(std::move(a));
  }
  v.links = congestion_snapshot(traffic_, *g_, true);
  for (const auto& e : scenario_) {
    if (e.active_at(clock_)) v.active_events.push_back(e.id);
  }
  return v;
}

StateView Simulation::get_state(std::optional<Timestamp> at) const {
  if (!at || *at == clock_) return state_view();
  if (*at > clock_) throw SimError("unknown tick " + to_iso(*at) + ": latest is " + to_iso(clock_));
  for (const auto& v : views_) {
    if (v.clock == *at) return v;
  }
  throw SimError("unknown tick " + to_iso(*at) + ": no longer held");
}

InterviewExchange Simulation::interview(const std::string& agent_id, const std::string& question, bool persist) {
  const std::size_t i = index_of(agent_id);
  if (question.empty()) throw SimError("empty interview question");
  auto ex = cog_->interview(minds_[i], question, clock_, persist, &rt_[i].plan);
  log_event({{"type", "interview"}, {"agent", agent_id}, {"question", question}, {"persisted", ex.persisted_node.has_value()}});
  return ex;
}

// ---- persistence -----------------------------------------------------------

json Simulation::checkpoint() const {
  json minds = json::array();
  for (const auto& m : minds_) minds.push_back(m.to_json());
  json rts = json::array();
  for (const auto& r : rt_) rts.push_back(runtime_to_json(r));
  json scen = json::array();
  for (const auto& e : scenario_) scen.push_back(event_to_json(e));
  json trips = json::array();
  for (const auto& t : trips_) trips.push_back(trip_to_json(t));
  json days = json::array();
  for (const auto& d : days_) {
    days.push_back({{"date", d.date}, {"trips", d.trips}, {"teleported", d.teleported}, {"reflections", d.reflections}});
  }
  json flows = json::object();
  for (const auto& [d, v] : flows_) {
    json per = json::object();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i]) per[g_->link(i).id] = v[i];
    }
    flows[d] = per;
  }
  return json{{"format", "gatsim-checkpoint/1"},
              {"config", cfg_.to_json()},
              {"config_digest", cfg_.digest()},
              {"clock", to_iso(clock_)},
              {"traffic", traffic_.to_json(*g_)},
              {"next_token", next_token_},
              {"minds", minds},
              {"runtimes", rts},
              {"holders", holders_},
              {"school_run", school_run_},
              {"scenario", scen},
              {"trips", trips},
              {"events_log", events_log_},
              {"flows", flows},
              {"days", days}};
}

std::string Simulation::hash_of(const json& cp) {
  json j = cp;
  // Output location is not part of the simulated state.
  if (j.contains("config")) {
    j["config"].erase("out_dir");
    j["config"].erase("threads");
    j["config"].erase("history_window");
  }
  return hex64(fnv1a64(j.dump()));
}

std::string Simulation::state_hash() const { return hash_of(checkpoint()); }

void Simulation::save_checkpoint(const std::string& path) const {
  json cp = checkpoint();
  cp["hash"] = hash_of(cp);
  fs::create_directories(fs::path(path).parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw SimError("cannot write checkpoint " + path);
    out << cp.dump();
  }
  fs::rename(tmp, path);
}

std::unique_ptr<Simulation> Simulation::restore(const json& cp, std::shared_ptr<Gateway> gateway) {
  if (cp.value("format", "") != "gatsim-checkpoint/1") throw SimError("not a checkpoint");
  if (cp.contains("hash")) {
    json body = cp;
    body.erase("hash");
    if (hash_of(body) != cp["hash"].get<std::string>()) throw SimError("checkpoint hash mismatch");
  }
  SimConfig cfg = SimConfig::from_json(cp.at("config"), ".");
  if (cfg.digest() != cp.value("config_digest", "")) throw SimError("checkpoint configuration digest mismatch");
  auto sim = std::make_unique<Simulation>(cfg, std::move(gateway));
  Simulation& s = *sim;
  s.clock_ = parse_iso(cp.at("clock").get<std::string>());
  s.traffic_ = TrafficState::from_json(*s.g_, cp.at("traffic"));
  s.next_token_ = cp.at("next_token");
  const auto& minds = cp.at("minds");
  const auto& rts = cp.at("runtimes");
  if (minds.size() != s.minds_.size() || rts.size() != s.rt_.size()) throw SimError("checkpoint population size differs");
  for (std::size_t i = 0; i < minds.size(); ++i) {
    s.minds_[i] = AgentMind::from_json(minds[i]);
    s.rt_[i] = runtime_from_json(rts[i]);
    if (s.rt_[i].traveling) s.token_owner_[s.rt_[i].token] = i;
  }
  s.holders_ = cp.at("holders").get<std::map<std::string, std::vector<std::string>>>();
  s.school_run_ = cp.at("school_run").get<std::map<std::string, std::string>>();
  s.scenario_.clear();
  for (const auto& e : cp.at("scenario")) s.scenario_.push_back(event_from_json(e));
  s.trips_.clear();
  for (const auto& t : cp.at("trips")) s.trips_.push_back(trip_from_json(t));
  s.events_log_ = cp.at("events_log").get<std::vector<json>>();
  s.flows_.clear();
  for (const auto& [d, per] : cp.at("flows").items()) {
    std::vector<int> v(s.g_->links().size(), 0);
    for (const auto& [l, n] : per.items()) v[s.g_->link_index(l)] = n.get<int>();
    s.flows_[d] = v;
  }
  s.days_.clear();
  for (const auto& d : cp.at("days")) {
    s.days_.push_back({d.at("date"), d.at("trips"), d.at("teleported"), d.at("reflections")});
  }
  s.history_.init(*s.g_);
  s.views_.clear();
  if (s.cfg_.history_window > 0) s.views_.push_back(s.state_view());
  return sim;
}

std::unique_ptr<Simulation> Simulation::restore_file(const std::string& path, std::shared_ptr<Gateway> gateway) {
  std::ifstream in(path);
  if (!in) throw SimError("cannot open checkpoint " + path);
  json cp = json::parse(in, nullptr, false);
  if (cp.is_discarded()) throw SimError("checkpoint is not valid JSON: " + path);
  return restore(cp, std::move(gateway));
}

void Simulation::write_logs(const std::string& dir) const {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "trips.csv");
    out << trips_csv_header() << "\n";
    for (const auto& t : trips_) out << trip_to_csv(t) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "events.jsonl");
    for (const auto& e : events_log_) out << e.dump() << "\n";
  }
  history_.write_csv((fs::path(dir) / "link_states.csv").string());
  {
    json meta{{"start", to_iso(history_.first)},
              {"end", to_iso(history_.last)},
              {"network", cfg_.network_path},
              {"config", cfg_.to_json()},
              {"road_links", history_.links}};
    std::ofstream out(fs::path(dir) / "run.json");
    out << meta.dump(2) << "\n";
  }
}

}  // namespace gatsim
