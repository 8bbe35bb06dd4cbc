#include <filesystem>
#include <fstream>
#include <mutex>

#include "doctest.h"
#include "gatsim/simulation.hpp"
#include "oracles.hpp"

using namespace gatsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json base_config(const std::string& start = "2025-03-10", const std::string& end = "") {
  json j{{"network", oracle::fixture_path("nguyen_dupuis.json")},
         {"population", oracle::fixture_path("population70.json")},
         {"start_date", start},
         {"seed", 7}};
  if (!end.empty()) j["end_date"] = end;
  return j;
}

SimConfig config(const std::string& start = "2025-03-10", const std::string& end = "") {
  return SimConfig::from_json(base_config(start, end));
}

ScenarioEvent incident(const std::string& date = "2025-03-10") {
  return event_from_json(json{{"kind", "capacity_change"}, {"target", "Ave_2_link_2"}, {"capacity", 1},
                              {"date", date}, {"start", "07:30"}, {"end", "08:30"}});
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gatsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Stub backend that also keeps every prompt it was shown, per task.
class Recording final : public CognitionBackend {
 public:
  explicit Recording(std::optional<json> plan = std::nullopt)
      : stub_(StubPolicy::load_default()), plan_(std::move(plan)) {}
  std::string name() const override { return "recording"; }
  json complete(const CompletionRequest& req) override {
    {
      std::lock_guard lk(mu_);
      prompts[req.task].push_back(req.prompt);
    }
    if (plan_ && req.task == TaskKind::initial_plan) return *plan_;
    return stub_.complete(req);
  }
  std::vector<std::string> of(TaskKind t) {
    std::lock_guard lk(mu_);
    return prompts[t];
  }
  std::map<TaskKind, std::vector<std::string>> prompts;

 private:
  std::mutex mu_;
  StubBackend stub_;
  std::optional<json> plan_;
};

std::shared_ptr<Gateway> gateway_with(std::shared_ptr<CognitionBackend> b) {
  return std::make_shared<Gateway>(b, TemplateLibrary::load(TemplateLibrary::default_dir()));
}

// One adult living alone at the Uptown apartment.
std::string single_person_population(const fs::path& dir, const std::string& work = "none") {
  AgentProfile p;
  p.name = "Robin Hale";
  p.gender = "female";
  p.age = 67;
  p.family_role = "single";
  p.licensed_driver = false;
  p.home_facility = "Uptown apartment";
  p.work_facility = work;
  if (work != "none") {
    p.work_start = 8 * 60;
    p.work_end = 17 * 60;
  }
  p.occupation = work == "none" ? "retired" : "clerk";
  p.preferences = "relies on public transit";
  p.household_id = "H99";
  p.household_vehicles = 0;
  const fs::path f = dir / "population.json";
  std::ofstream(f) << population_to_json({p}).dump(2);
  return f.string();
}

int mod(Timestamp t) { return minute_of_day(t); }

}  // namespace

TEST_CASE("a lone stay-home agent makes no trips") {
  const auto dir = scratch("stay_home");
  json j = base_config();
  j["population"] = single_person_population(dir);
  Simulation s(SimConfig::from_json(j));
  s.run();
  CHECK(s.trips().empty());
  const auto& r = s.runtimes().at(0);
  CHECK(r.facility == "Uptown apartment");
  CHECK(r.status == ActivityStatus::at_facility);
  CHECK_FALSE(r.log.teleported);
  CHECK(s.clock() == make_timestamp(parse_date("2025-03-11")));
  const auto& recs = s.minds()[0].daily_records;
  CHECK(std::count_if(recs.begin(), recs.end(), [](const auto& r) { return r.scale == "daily"; }) == 1);
  CHECK(recs.front().date == "2025-03-10");
}

TEST_CASE("population Monday ends with everyone home and reflected") {
  Simulation s(config());
  s.run();
  CHECK(s.trips().size() > 60);
  CHECK(s.traffic().token_count() == 0);
  for (std::size_t i = 0; i < s.runtimes().size(); ++i) {
    const auto& r = s.runtimes()[i];
    const auto& m = s.minds()[i];
    INFO(r.id);
    CHECK(r.facility == m.profile.home_facility);
    CHECK_FALSE(r.traveling);
    if (r.car_at) CHECK(*r.car_at == m.profile.home_facility);
    REQUIRE_FALSE(m.daily_records.empty());
    CHECK(m.daily_records.front().date == "2025-03-10");
  }
  // Each trip ends where the next one for that agent starts.
  std::map<std::string, std::string> where;
  for (std::size_t i = 0; i < s.runtimes().size(); ++i) where[s.runtimes()[i].id] = s.minds()[i].profile.home_facility;
  for (const auto& t : s.trips()) {
    CHECK(where[t.agent] == t.origin);
    where[t.agent] = t.destination;
  }
  const auto& d = s.days().at(0);
  CHECK(d.trips == static_cast<int>(s.trips().size()));
  CHECK(d.reflections == 70);
}

TEST_CASE("the same configuration reproduces the same run") {
  auto run = [](std::size_t threads) {
    SimConfig c = config();
    c.threads = threads;
    Simulation s(c);
    s.run_until(make_timestamp(parse_date("2025-03-10"), 12 * 60));
    return s.state_hash();
  };
  const std::string a = run(4);
  CHECK(a == run(4));
  CHECK(a == run(1));
}

TEST_CASE("restoring a checkpoint continues the run identically") {
  const Timestamp mid = make_timestamp(parse_date("2025-03-10"), 7 * 60 + 25);
  Simulation a(config("2025-03-10", "2025-03-11"));
  a.run_until(mid);
  const json cp = a.checkpoint();
  auto b = Simulation::restore(cp);
  CHECK(b->state_hash() == a.state_hash());
  CHECK(b->clock() == mid);
  CHECK(b->traffic() == a.traffic());
  CHECK(b->runtimes() == a.runtimes());

  a.run();
  b->run();
  CHECK(a.state_hash() == b->state_hash());
  CHECK(a.trips() == b->trips());

  SUBCASE("a tampered checkpoint is refused") {
    json bad = cp;
    bad["hash"] = Simulation::hash_of(cp);
    bad["clock"] = "2025-03-10T09:00:00";
    CHECK_THROWS_AS(Simulation::restore(bad), SimError);
  }
}

TEST_CASE("checkpoints and logs land in the output directory") {
  const auto dir = scratch("persist");
  SimConfig c = config();
  c.out_dir = dir.string();
  c.max_agents = 12;
  Simulation s(c);
  s.run();
  CHECK(fs::exists(dir / "checkpoint.json"));
  CHECK(fs::exists(dir / "checkpoint_2025-03-10.json"));
  const auto trips = read_trips_csv((dir / "trips.csv").string());
  CHECK(trips == s.trips());
  std::ifstream ev(dir / "events.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(ev, l);) {
    CHECK_FALSE(json::parse(l).is_discarded());
    ++lines;
  }
  CHECK(lines == s.event_log().size());
  auto restored = Simulation::restore_file((dir / "checkpoint.json").string());
  CHECK(restored->state_hash() == s.state_hash());
  const auto h = LinkHistory::read_csv((dir / "link_states.csv").string(), s.graph(), s.history().first,
                                       s.history().last);
  CHECK(h.ticks == s.history().ticks);
}

TEST_CASE("a capacity event holds only inside its window") {
  SimConfig c = config();
  c.events.push_back(incident());
  Simulation s(c);
  s.run();
  const auto& h = s.history();
  const std::size_t k = std::find(h.links.begin(), h.links.end(), "Ave_2_link_2") - h.links.begin();
  const Timestamp day = make_timestamp(parse_date("2025-03-10"));
  int prev_occ = 0;
  for (Timestamp t = day; t < day + 1440; ++t) {
    const auto row = h.at(t);
    const bool inside = mod(t) >= 7 * 60 + 30 && mod(t) < 8 * 60 + 30;
    INFO(to_iso(t));
    CHECK(row[k].capacity == (inside ? 1 : 2));
    // Nobody is admitted while the link already holds its reduced capacity.
    if (inside) CHECK(row[k].occupancy <= std::max(1, prev_occ));
    CHECK(row[k].occupancy <= 2);
    prev_occ = row[k].occupancy;
  }
  int changes = 0;
  for (const auto& e : s.event_log()) changes += e["type"] == "capacity";
  CHECK(changes == 2);
  CHECK(s.traffic().capacity(s.graph().link_index("Ave_2_link_2")) == 2);
}

TEST_CASE("incident view and perception") {
  SimConfig c = config();
  c.events.push_back(incident());
  Simulation s(c);
  s.run_until(make_timestamp(parse_date("2025-03-10"), 7 * 60 + 45));
  const StateView v = s.get_state();
  auto it = std::find_if(v.links.begin(), v.links.end(), [](const auto& l) { return l.link_id == "Ave_2_link_2"; });
  REQUIRE(it != v.links.end());
  CHECK(it->capacity == 1);
  CHECK(v.active_events == std::vector<std::string>{"ev1"});
  CHECK(v.to_json()["links"].size() == s.graph().road_link_ids().size());
}

TEST_CASE("broadcasts reach every agent's perception") {
  auto rec = std::make_shared<Recording>();
  SimConfig c = config();
  c.max_agents = 10;
  c.events.push_back(event_from_json(json{{"kind", "broadcast"}, {"text", "A museum exhibition opens today"},
                                          {"date", "2025-03-10"}, {"start", "00:00"}, {"end", "24:00"}}));
  Simulation s(c, gateway_with(rec));
  s.run_until(make_timestamp(parse_date("2025-03-10"), 60));
  std::size_t adults = 0;
  for (const auto& r : s.runtimes()) adults += !r.passive;
  const auto plans = rec->of(TaskKind::initial_plan);
  CHECK(plans.size() == adults);
  for (const auto& p : plans) CHECK(p.find("A museum exhibition opens today") != std::string::npos);
  s.run_until(make_timestamp(parse_date("2025-03-10"), 10 * 60));
  const auto reactions = rec->of(TaskKind::reaction);
  REQUIRE_FALSE(reactions.empty());
  for (const auto& p : reactions) CHECK(p.find("A museum exhibition opens today") != std::string::npos);
}

TEST_CASE("scenario events are checked before they are accepted") {
  Simulation s(config());
  ScenarioEvent metro = incident();
  metro.target = "Metro_1_link_1";
  CHECK_THROWS_WITH_AS(s.add_event(metro), doctest::Contains("road links only"), SimError);
  ScenarioEvent nowhere = incident();
  nowhere.target = "Ave_9_link_1";
  CHECK_THROWS_WITH_AS(s.add_event(nowhere), doctest::Contains("Ave_2_link_2"), SimError);
  ScenarioEvent zero = incident();
  zero.capacity = 0;
  CHECK_THROWS_AS(s.add_event(zero), SimError);
  ScenarioEvent backwards = incident();
  backwards.start = 9 * 60;
  backwards.end = 8 * 60;
  CHECK_THROWS_AS(s.add_event(backwards), SimError);
  CHECK(s.scenario().empty());

  json j = base_config();
  j["events"] = json::array({event_to_json(metro)});
  CHECK_THROWS_AS(Simulation{SimConfig::from_json(j)}, SimError);
}

TEST_CASE("plan-update triggers") {
  Simulation s(config());
  std::size_t adult = 0, child = 0;
  for (std::size_t i = 0; i < s.runtimes().size(); ++i) {
    if (s.runtimes()[i].passive) {
      child = i;
    } else {
      adult = i;
    }
  }
  SUBCASE("day start without a plan") {
    s.step();  // begins the day; plans are generated in this tick
    Simulation fresh(config());
    CHECK(fresh.needs_plan_update(adult) == Trigger::initial);
    CHECK_FALSE(fresh.needs_plan_update(child).has_value());
    CHECK_FALSE(s.needs_plan_update(adult).has_value());
  }
  SUBCASE("travelling on a link") {
    s.run_until(make_timestamp(parse_date("2025-03-10"), 7 * 60 + 30));
    bool seen = false;
    for (std::size_t i = 0; i < s.runtimes().size(); ++i) {
      if (s.runtimes()[i].status == ActivityStatus::on_link) {
        CHECK_FALSE(s.needs_plan_update(i).has_value());
        seen = true;
      }
    }
    CHECK(seen);
  }
  SUBCASE("queued at a node") {
    // Find someone held in a queue for three ticks, then forget that the
    // wait already triggered a reaction.
    const Timestamp day = make_timestamp(parse_date("2025-03-10"));
    std::optional<std::size_t> who;
    while (!who && s.clock() < day + 10 * 60) {
      s.step();
      for (std::size_t i = 0; i < s.runtimes().size(); ++i) {
        const auto& r = s.runtimes()[i];
        if (r.status == ActivityStatus::queued && s.clock() - s.traffic().token(r.token).queued_since >= 3) who = i;
      }
    }
    REQUIRE(who);
    CHECK_FALSE(s.needs_plan_update(*who).has_value());  // already reacted to this queue
    json cp = s.checkpoint();
    cp["runtimes"][*who]["queue_episode"] = -1;
    auto t = Simulation::restore(cp);
    CHECK(t->needs_plan_update(*who) == Trigger::waiting_at_node);
  }
  SUBCASE("activity transition and periodic checks") {
    std::map<std::string, int> counts;
    const Timestamp end = make_timestamp(parse_date("2025-03-10"), 20 * 60);
    while (s.clock() < end) {
      for (std::size_t i = 0; i < s.runtimes().size(); ++i) {
        if (auto t = s.needs_plan_update(i)) ++counts[to_string(*t)];
      }
      s.step();
    }
    CHECK(counts["initial"] == 60);
    CHECK(counts["activity_transition"] > 100);
    CHECK(counts["periodic"] > 0);
    CHECK(counts["waiting_at_node"] > 0);
  }
}

TEST_CASE("travellers and tokens stay in step") {
  SimConfig c = config();
  c.events.push_back(incident());
  Simulation s(c);
  const Timestamp end = s.end_time();
  std::size_t departed = 0;
  while (s.clock() < end) {
    s.step();
    std::size_t traveling = 0;
    for (const auto& r : s.runtimes()) {
      if (!r.traveling) continue;
      ++traveling;
      CHECK(s.traffic().contains(r.token));
      CHECK(r.leg_pos <= r.leg_links.size());
    }
    CHECK(traveling == s.traffic().token_count());
  }
  for (const auto& e : s.event_log()) departed += e["type"] == "depart";
  // Every departure is logged once as a trip, arrived or cut at midnight.
  CHECK(departed == s.trips().size());
  for (const auto& t : s.trips()) {
    if (!t.arrive) continue;
    CHECK(*t.arrive > t.depart);
    int delay = 0;
    const double ff = path_cost(s.graph(), t.links, t.mode);
    delay = static_cast<int>(*t.arrive - t.depart) - t.delay;
    // Travel time net of queueing is the free-flow time of the links used
    // (each link rounded up to whole minutes).
    int ticks = 0;
    for (const auto& l : t.links) {
      ticks += std::max(1, static_cast<int>(std::ceil(*traversal_cost(s.graph(), s.graph().link(l), t.mode) - 1e-9)));
    }
    INFO(t.agent, " ", to_iso(t.depart));
    CHECK(delay == ticks);
    CHECK(ff <= ticks + 1e-9);
  }
}

TEST_CASE("an agent still travelling at midnight is brought home") {
  auto rec = std::make_shared<Recording>(json{
      {"plan", json::parse(R"([
        ["Uptown apartment", "none", "none", "none", "none", "Evening at home."],
        ["Factory", "23:50", 30, "transit", "shortest", "Night shift check."],
        ["Uptown apartment", "none", "none", "transit", "shortest", "Back home."]
      ])")},
      {"longterm_reflection", "I am Robin."},
      {"concepts", json::array()}});
  const auto dir = scratch("teleport");
  json j = base_config("2025-03-10", "2025-03-11");
  j["population"] = single_person_population(dir);
  Simulation s(SimConfig::from_json(j), gateway_with(rec));
  s.run_until(make_timestamp(parse_date("2025-03-11")));
  const auto& r = s.runtimes()[0];
  CHECK(r.facility == "Uptown apartment");
  CHECK_FALSE(r.traveling);
  CHECK(s.traffic().token_count() == 0);
  CHECK(s.days()[0].teleported == 1);
  REQUIRE(s.trips().size() == 1);
  CHECK_FALSE(s.trips()[0].arrive.has_value());
  const auto& store = s.minds()[0].store;
  const bool failure = std::any_of(store.nodes().begin(), store.nodes().end(), [](const ConceptNode& n) {
    return n.content.find("teleported home") != std::string::npos;
  });
  CHECK(failure);
  // The next morning's plan prompt brings the failure back.
  s.step();
  const auto plans = rec->of(TaskKind::initial_plan);
  REQUIRE(plans.size() == 2);
  CHECK(plans[1].find("teleported home") != std::string::npos);
}

TEST_CASE("get_state serves held ticks only") {
  SimConfig c = config();
  c.history_window = 30;
  Simulation s(c);
  const StateView v0 = s.get_state();
  REQUIRE(v0.agents.size() == 70);
  for (std::size_t i = 0; i < v0.agents.size(); ++i) {
    CHECK(v0.agents[i].status == ActivityStatus::at_facility);
    CHECK(v0.agents[i].facility == s.minds()[i].profile.home_facility);
  }
  CHECK_THROWS_WITH_AS(s.get_state(s.clock() + 1), doctest::Contains("unknown tick"), SimError);
  s.run_until(s.clock() + 45);
  CHECK(s.get_state(s.clock() - 10).clock == s.clock() - 10);
  CHECK_THROWS_AS(s.get_state(s.start_time()), SimError);
}

TEST_CASE("reading state leaves the hash alone; interviews persist on request") {
  Simulation s(config());
  s.run_until(make_timestamp(parse_date("2025-03-10"), 9 * 60));
  const std::string h = s.state_hash();
  (void)s.get_state();
  (void)s.checkpoint();
  CHECK(s.state_hash() == h);
  CHECK_THROWS_AS(s.interview("zz9", "hello?", false), SimError);
  const std::string id = s.runtimes()[0].id;
  const std::size_t before = s.mind(id).store.nodes().size();
  auto ex = s.interview(id, "Why did you leave when you did?", false);
  CHECK_FALSE(ex.answer.empty());
  CHECK(s.mind(id).store.nodes().size() == before);
  ex = s.interview(id, "Please remember that the museum is free on Friday.", true);
  CHECK(s.mind(id).store.nodes().size() == before + 1);
  CHECK(s.mind(id).store.nodes().back().kind == ConceptKind::chat);
}

TEST_CASE("run configuration errors surface before the run") {
  json j = base_config();
  j["end_date"] = "2025-03-01";
  CHECK_THROWS_AS(SimConfig::from_json(j), ConfigError);
  j = base_config();
  j.erase("start_date");
  CHECK_THROWS_AS(SimConfig::from_json(j), ConfigError);
  j = base_config();
  j["network"] = "/nonexistent/net.json";
  CHECK_THROWS_AS(Simulation{SimConfig::from_json(j)}, ConfigError);
  j = base_config();
  j["gateway"] = {{"backend", "oracle"}};
  CHECK_THROWS(Simulation{SimConfig::from_json(j)});
  CHECK(SimConfig::from_json(base_config()).digest() == SimConfig::from_json(base_config()).digest());
  json k = base_config();
  k["seed"] = 8;
  CHECK(SimConfig::from_json(k).digest() != SimConfig::from_json(base_config()).digest());
}

TEST_CASE("trip log rows round-trip through CSV") {
  TripRecord t{"a03", "Uptown apartment", "Office", make_timestamp(parse_date("2025-03-10"), 7 * 60 + 2),
               make_timestamp(parse_date("2025-03-10"), 7 * 60 + 40), TravelMode::drive,
               {"St_2_link_1", "Ave_2_link_2", "Ave_2_link_3", "St_4_link_1"}, 6, "work", -20};
  CHECK(trip_to_csv(t) ==
        "a03,Uptown apartment,Office,2025-03-10T07:02:00,2025-03-10T07:40:00,drive,"
        "St_2_link_1;Ave_2_link_2;Ave_2_link_3;St_4_link_1,6,work,-20");
  const auto dir = scratch("csv");
  TripRecord cut = t;
  cut.arrive.reset();
  cut.late.reset();
  cut.links.clear();
  {
    std::ofstream out(dir / "t.csv");
    out << trips_csv_header() << "\n" << trip_to_csv(t) << "\n" << trip_to_csv(cut) << "\n";
  }
  const auto back = read_trips_csv((dir / "t.csv").string());
  REQUIRE(back.size() == 2);
  CHECK(back[0] == t);
  CHECK(back[1] == cut);
}
