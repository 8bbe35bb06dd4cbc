// Scripted cognition. Reads only CompletionRequest::features; the field
// names it expects are assembled by cognition.cpp.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "gatsim/gateway.hpp"
#include "gatsim/hash.hpp"
#include "gatsim/memory.hpp"
#include "gatsim/time.hpp"

namespace gatsim {

using nlohmann::json;

// ---- learned state ---------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  std::string s = buf;
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.resize(s.size() - 2);
  return s;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

LearnedState parse_learned_state(const std::string& text) {
  LearnedState st;
  const auto pos = text.rfind("[state]");
  if (pos == std::string::npos) return st;
  const auto eol = text.find('\n', pos);
  const std::string line = text.substr(pos + 7, eol == std::string::npos ? std::string::npos : eol - pos - 7);
  for (const auto& field : split(line, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(field.substr(0, eq)), val = trim(field.substr(eq + 1));
    if (key == "offset") {
      st.offset = val.empty() ? 0 : std::stoi(val);
    } else if (key == "avoid") {
      for (const auto& kv : split(val, ',')) {
        const auto c = kv.rfind(':');
        if (c == std::string::npos) continue;
        st.avoid[kv.substr(0, c)] = std::stod(kv.substr(c + 1));
      }
    } else if (key == "pending") {
      for (const auto& f : split(val, '|')) st.pending.push_back(f);
    }
  }
  return st;
}

std::string format_learned_state(const LearnedState& s) {
  std::string out = "[state] offset=" + std::to_string(s.offset) + "; avoid=";
  bool first = true;
  for (const auto& [l, v] : s.avoid) {
    out += (first ? "" : ",") + l + ":" + fmt1(v);
    first = false;
  }
  out += "; pending=";
  for (std::size_t i = 0; i < s.pending.size(); ++i) out += (i ? "|" : "") + s.pending[i];
  return out;
}

// ---- policy ----------------------------------------------------------------

const std::string& StubPolicy::default_path() {
  static const std::string p = std::string(GATSIM_DATA_DIR) + "/stub_policy.json";
  return p;
}

StubPolicy StubPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GatewayError("cannot open stub policy " + path);
  StubPolicy p;
  p.doc = json::parse(in, nullptr, false);
  if (p.doc.is_discarded()) throw GatewayError("stub policy is not valid JSON: " + path);
  for (const char* k : {"planning", "learning", "reaction_rules", "importance", "chat"}) {
    if (!p.doc.contains(k)) throw GatewayError(std::string("stub policy lacks '") + k + "'");
  }
  return p;
}

StubPolicy StubPolicy::load_default() { return load(default_path()); }

StubBackend::StubBackend(StubPolicy policy) : policy_(std::move(policy)) {}

json StubBackend::complete(const CompletionRequest& req) {
  const json& f = req.features;
  switch (req.task) {
    case TaskKind::initial_plan: return initial_plan(f);
    case TaskKind::reaction: return reaction(f);
    case TaskKind::extract_path_info: return extract_path(f);
    case TaskKind::daily_reflection: return daily_reflection(f);
    case TaskKind::chat_initiate_new_day: return chat_initiate(f, true);
    case TaskKind::chat_initiate_during_day: return chat_initiate(f, false);
    case TaskKind::chat_response: return chat_response(f);
    case TaskKind::chat_summary: return chat_summary(f);
    case TaskKind::importance_score:
      return json{{"score", importance(f.value("concept_type", "event"), f.value("text", ""))}};
  }
  throw GatewayError("stub: unhandled task");
}

// ---- importance ------------------------------------------------------------

double StubBackend::importance(const std::string& concept_type, const std::string& text) const {
  const json& imp = policy_.doc["importance"];
  const std::string norm = lower(trim(text));
  double score;
  if (imp["exact"].contains(norm)) {
    score = imp["exact"][norm].get<double>();
  } else {
    auto toks = tokenize(norm);
    std::set<std::string> words(toks.begin(), toks.end());
    double best = -1.0;
    for (const auto& kw : imp["keywords"]) {
      if (words.count(kw[0].get<std::string>())) best = std::max(best, kw[1].get<double>());
    }
    score = best < 0 ? imp["default"].get<double>() : best;
  }
  score = std::max(score, imp["type_floor"].value(concept_type, 0.0));
  return std::clamp(std::round(score * 10.0) / 10.0, 0.0, 1.0);
}

// ---- planning --------------------------------------------------------------

namespace {

struct Leg {
  std::vector<std::string> links;  // empty = 'shortest'
  int minutes = 0;
};

int ff_minutes(const json& f, const std::string& mode, const std::string& from, const std::string& to) {
  const json& t = f["travel"];
  if (t.contains(mode) && t[mode].contains(from) && t[mode][from].contains(to)) {
    return t[mode][from][to].get<int>();
  }
  return 30;
}

// Cheapest drive option after learned avoidance penalties.
Leg choose_route(const json& f, const LearnedState& st, const std::string& from, const std::string& to) {
  Leg best;
  best.minutes = ff_minutes(f, "drive", from, to);
  const std::string key = from + "|" + to;
  if (!f.contains("routes") || !f["routes"].contains(key)) return best;
  double best_cost = 1e18;
  for (const auto& opt : f["routes"][key]) {
    double cost = opt["minutes"].get<double>();
    for (const auto& l : opt["links"]) {
      auto it = st.avoid.find(l.get<std::string>());
      if (it != st.avoid.end()) cost += it->second;
    }
    if (cost < best_cost - 1e-9) {
      best_cost = cost;
      best.links = opt["links"].get<std::vector<std::string>>();
      best.minutes = static_cast<int>(std::ceil(opt["minutes"].get<double>() - 1e-9));
    }
  }
  return best;
}

json entry(const std::string& fac, std::optional<int> dep, std::optional<int> dur, const std::string& mode,
           const json& path, const std::string& desc) {
  return json::array({fac, dep ? json(format_hhmm(*dep)) : json("none"), dur ? json(*dur) : json("none"), mode,
                      path, desc});
}

json path_json(const Leg& leg) {
  if (leg.links.empty()) return "shortest";
  return leg.links;
}

bool contains_ci(const std::string& hay, const std::string& needle) {
  return lower(hay).find(lower(needle)) != std::string::npos;
}

}  // namespace

json StubBackend::initial_plan(const json& f) const {
  const json& P = policy_.doc["planning"];
  LearnedState st = parse_learned_state(f.value("longterm", ""));
  const std::string agent = f.value("agent", "");
  const std::string name = f.value("name", agent);
  const std::string home = f.at("home").get<std::string>();
  const std::string work = f.value("work", "none");
  const bool weekend = f.value("weekend", false);

  // Deferred errands: long-term pending list plus "missed X" in yesterday's reflection.
  std::vector<std::string> pending = st.pending;
  const std::string prev = f.value("prev_daily", "");
  for (const auto& fac : f.value("facilities", std::vector<std::string>{})) {
    if (contains_ci(prev, "missed " + fac) &&
        std::find(pending.begin(), pending.end(), fac) == pending.end()) {
      pending.push_back(fac);
    }
  }
  pending.erase(std::remove_if(pending.begin(), pending.end(),
                               [&](const std::string& p) { return p == home || p == work; }),
                pending.end());

  bool drive = f.value("car", false) && f.value("licensed", false);
  const std::string prefs = f.value("preferences", "");
  for (const auto& kw : P["transit_preference_keywords"]) {
    if (contains_ci(prefs, kw.get<std::string>())) drive = false;
  }
  const std::string mode = drive ? "drive" : "transit";

  json plan = json::array();
  json concepts = json::array();
  plan.push_back(entry(home, std::nullopt, std::nullopt, "none", "none", "Wake up at home and get ready for the day."));

  auto leg_minutes = [&](const std::string& a, const std::string& b) -> Leg {
    if (drive) return choose_route(f, st, a, b);
    return Leg{{}, ff_minutes(f, "transit", a, b)};
  };

  int clock = 0;  // minute the agent is next free
  std::string here = home;
  if (!weekend && work != "none" && f.contains("work_start") && !f["work_start"].is_null()) {
    const int start = f["work_start"].get<int>();
    const int end = f["work_end"].get<int>();
    const int jitter = static_cast<int>(unit_hash(policy_.seed, "jitter|" + agent) *
                                        P["jitter_minutes"].get<double>());
    const int buffer = P["buffer_minutes"].get<int>();
    std::vector<std::pair<std::string, Leg>> legs;
    std::string child;
    if (f.contains("school_run") && f["school_run"].is_object()) {
      const std::string school = f["school_run"].value("school", "School");
      child = f["school_run"].value("child", "my child");
      legs.emplace_back(school, leg_minutes(home, school));
      legs.emplace_back(work, leg_minutes(school, work));
    } else {
      legs.emplace_back(work, leg_minutes(home, work));
    }
    const int stop = P["school_stop_minutes"].get<int>();
    int total = 0;
    for (std::size_t i = 0; i < legs.size(); ++i) total += legs[i].second.minutes + (i + 1 < legs.size() ? stop : 0);
    int dep = std::max(1, start - total - buffer - st.offset - jitter);
    const int leave = dep;
    for (std::size_t i = 0; i < legs.size(); ++i) {
      const bool last = i + 1 == legs.size();
      const auto& [fac, leg] = legs[i];
      const std::string desc = last ? "Head to " + work + " to start work at " + format_hhmm(start) + "."
                                    : "Drop off " + child + " at " + fac + " on the way to work.";
      plan.push_back(entry(fac, dep, last ? end - start : stop, mode, path_json(leg), desc));
      if (!last) dep += leg.minutes + stop;
    }
    concepts.push_back("Leave home at " + format_hhmm(leave) + " by " + mode + " to reach " + work + " by " + format_hhmm(start) + ".");
    clock = end;
    here = work;
  }

  const int errand_minutes = P["errand_minutes"].get<int>();
  if (weekend) clock = parse_hhmm(P["weekend_errand_departure"].get<std::string>());
  for (const auto& fac : pending) {
    plan.push_back(entry(fac, clock, errand_minutes, mode, "shortest",
                         "Go to " + fac + " to make up for the trip I missed."));
    concepts.push_back("Reschedule the missed trip to " + fac + ".");
    clock += ff_minutes(f, mode, here, fac) + errand_minutes;
    here = fac;
  }
  if (weekend && pending.empty()) {
    const auto& leisure = P["leisure_facilities"];
    const std::string date = f.value("date", "");
    if (!leisure.empty() &&
        unit_hash(policy_.seed, "leisure|" + agent + "|" + date) < P["weekend_leisure_probability"].get<double>()) {
      const auto k = static_cast<std::size_t>(unit_hash(policy_.seed, "pick|" + agent + "|" + date) *
                                              static_cast<double>(leisure.size()));
      const std::string fac = leisure[std::min(k, leisure.size() - 1)].get<std::string>();
      clock = parse_hhmm(P["weekend_leisure_departure"].get<std::string>());
      const int stay = P["weekend_leisure_minutes"].get<int>();
      plan.push_back(entry(fac, clock, stay, mode, "shortest", "Spend the afternoon at the " + fac + "."));
      clock += ff_minutes(f, mode, home, fac) + stay;
      here = fac;
    }
  }
  if (here != home) {
    plan.push_back(entry(home, clock, std::nullopt, mode, "shortest", "Return home for the evening."));
  }

  std::string longterm = f.value("longterm", "");
  if (longterm.empty()) {
    longterm = "I am " + name + ". I have no travel experience in this city yet.\n" + format_learned_state(st);
  }
  return json{{"longterm_reflection", longterm}, {"plan", plan}, {"concepts", concepts}};
}

// ---- reaction --------------------------------------------------------------

namespace {

int level_rank(const std::string& s) {
  if (s == "light") return 1;
  if (s == "moderate") return 2;
  if (s == "severe") return 3;
  return 0;
}

bool listed(const json& arr, const std::string& v) {
  for (const auto& x : arr) {
    if (x.get<std::string>() == v) return true;
  }
  return false;
}

}  // namespace

json StubBackend::reaction(const json& f) const {
  const std::string trigger = f.value("trigger", "");
  const json path = f.value("path_eval", json::object());
  const json alt = f.value("alternative", json());
  const json next = f.value("next", json());
  const int now = f.value("now", 0);

  for (const auto& rule : policy_.doc["reaction_rules"]) {
    if (!listed(rule["trigger"], trigger)) continue;
    if (rule.contains("min_level") && level_rank(path.value("max_level", "free")) < level_rank(rule["min_level"])) {
      continue;
    }
    if (rule.contains("departure_within")) {
      if (!f.contains("minutes_to_departure") || f["minutes_to_departure"].is_null()) continue;
      const int m = f["minutes_to_departure"].get<int>();
      if (m < 0 || m > rule["departure_within"].get<int>()) continue;
    }
    if (rule.contains("next_kind") && (next.is_null() || !listed(rule["next_kind"], next.value("kind", "")))) {
      continue;
    }
    if (rule.contains("min_overstay") && f.value("overstay", 0) < rule["min_overstay"].get<int>()) continue;

    const std::string action = rule["action"];
    if (action == "path_update") {
      if (!alt.is_object() || !alt.contains("links") || alt["links"].empty()) continue;
      const double saving = path.value("minutes", 0.0) - alt.value("minutes", 0.0);
      if (saving < rule.value("min_saving", 0.0)) continue;
      if (alt["links"] == path.value("links", json::array())) continue;
      const std::string worst = path.value("worst_link", "");
      std::string alt_text;
      for (std::size_t i = 0; i < alt["links"].size(); ++i) alt_text += (i ? ", " : "") + alt["links"][i].get<std::string>();
      return json{{"decision", "path_update"},
                  {"payload", {{"path", alt["links"]}, {"index", path.value("index", 0)}}},
                  {"rationale", "Traffic on " + worst + " is " + path.value("max_level", "heavy") +
                                    "; switching to " + alt_text + " saves about " +
                                    std::to_string(static_cast<int>(std::lround(saving))) + " minutes."},
                  {"reflection", "Queues build up on " + worst + " around " + format_hhmm(now) +
                                     "; an alternative route was faster."}};
    }
    if (action == "partial_replace") {
      const json plan = f.value("plan", json::array());
      const int idx = next.value("index", -1);
      if (idx < 0 || static_cast<std::size_t>(idx) + 1 >= plan.size()) continue;
      json rest = json::array();
      for (std::size_t i = static_cast<std::size_t>(idx) + 1; i < plan.size(); ++i) rest.push_back(plan[i]);
      const int ready = f.value("ready_at", now);
      const int planned = next.value("departure", ready);
      rest[0][1] = format_hhmm(std::max(ready, planned));
      const std::string skipped = next.value("facility", "");
      return json{{"decision", "partial_replace"},
                  {"payload", {{"from_index", idx}, {"entries", rest}}},
                  {"rationale", "I am running " + std::to_string(f.value("overstay", 0)) +
                                    " minutes behind schedule, so I will skip " + skipped + " today and go on."},
                  {"reflection", "Skipped " + skipped + " because of delays; need to reschedule this trip."}};
    }
    if (action == "departure_adjust") {
      if (next.is_null() || !next.contains("departure")) continue;
      const int shifted = next["departure"].get<int>() + rule.value("shift", 15);
      if (next.contains("following_departure") && !next["following_departure"].is_null() &&
          shifted >= next["following_departure"].get<int>()) {
        continue;
      }
      return json{{"decision", "departure_adjust"},
                  {"payload", {{"index", next.value("index", 0)}, {"departure", format_hhmm(shifted)}}},
                  {"rationale", "The roads toward " + next.value("facility", "") +
                                    " are jammed right now; leaving at " + format_hhmm(shifted) + " instead."},
                  {"reflection", "Evening traffic peaks around " + format_hhmm(now) + "; a short wait avoids it."}};
    }
  }
  return json{{"decision", "continue"},
              {"payload", json::object()},
              {"rationale", "Everything is on schedule; no change needed."},
              {"reflection", ""}};
}

// ---- reflection ------------------------------------------------------------

json StubBackend::daily_reflection(const json& f) const {
  const json& L = policy_.doc["learning"];
  LearnedState st = parse_learned_state(f.value("longterm", ""));
  const std::string name = f.value("name", "");
  const std::string date = f.value("date", "");
  const json trips = f.value("trips", json::array());
  const std::vector<std::string> missed = f.value("missed", std::vector<std::string>{});
  const bool teleported = f.value("teleported", false);
  const bool workday = f.value("workday", false);
  const std::vector<std::string> seen = f.value("incidents_seen", std::vector<std::string>{});

  std::ostringstream text;
  int late = 0, early = 0;
  std::map<std::string, int> waits;  // commute waits worth remembering
  std::set<std::string> incidents;   // commute links found running below capacity
  std::set<std::string> visited;
  for (const auto& t : trips) {
    visited.insert(t.value("to", ""));
    const std::string purpose = t.value("purpose", "");
    if (purpose != "work" && purpose != "school") continue;
    const json tw = t.value("waits", json::object());
    for (const auto& [l, w] : tw.items()) {
      if (w.get<int>() >= L["avoid_min_wait"].get<int>()) waits[l] += w.get<int>();
    }
    for (const auto& l : t.value("reduced", std::vector<std::string>{})) incidents.insert(l);
  }

  if (trips.empty() && !teleported && missed.empty()) {
    text << "An uneventful day at home on " << date << ".";
  } else {
    text << "On " << date << " I made " << trips.size() << " trip" << (trips.size() == 1 ? "" : "s") << ".";
    if (f.contains("work_arrival") && !f["work_arrival"].is_null()) {
      const int arr = f["work_arrival"].get<int>(), start = f["work_start"].get<int>();
      if (arr > start) {
        late = arr - start;
        text << " I arrived at " << f.value("work", "work") << " " << late << " minutes late.";
      } else {
        early = start - arr;
        text << " I reached " << f.value("work", "work") << " " << early << " minutes before my start.";
      }
    } else if (workday) {
      text << " I never made it to " << f.value("work", "work") << ".";
    }
    for (const auto& [l, w] : waits) text << " I waited " << w << " minutes in the queue on " << l << ".";
    for (const auto& l : incidents) text << " An incident had cut the capacity of " << l << ".";
    for (const auto& l : seen) {
      if (!incidents.count(l)) text << " I heard of an incident on " << l << ".";
    }
    for (const auto& m : missed) text << " I missed " << m << "; need to reschedule this trip.";
    if (teleported) {
      text << " I failed to get home before midnight and was brought home; I must plan more conservatively.";
    }
  }

  // learning
  if (late > 0) {
    st.offset += static_cast<int>(std::ceil(late * L["late_gain"].get<double>()));
  } else if (early > L["early_slack"].get<int>()) {
    st.offset -= static_cast<int>(std::floor((early - L["early_slack"].get<int>()) * L["relax_gain"].get<double>()));
  } else if (workday && (!f.contains("work_arrival") || f["work_arrival"].is_null())) {
    st.offset += L["missed_work_offset"].get<int>();
  }
  st.offset = std::clamp(st.offset, 0, L["max_offset"].get<int>());
  std::map<std::string, double> avoid;
  for (const auto& [l, v] : st.avoid) avoid[l] = v * L["avoid_decay"].get<double>();
  for (const auto& [l, w] : waits) avoid[l] += w * L["avoid_gain"].get<double>();
  for (const auto& l : seen) incidents.insert(l);
  for (const auto& l : incidents) avoid[l] += L["incident_penalty"].get<double>();
  st.avoid.clear();
  for (const auto& [l, v] : avoid) {
    const double r = std::round(v * 10.0) / 10.0;
    if (r >= L["avoid_floor"].get<double>()) st.avoid[l] = r;
  }
  std::vector<std::string> pending;
  for (const auto& p : st.pending) {
    if (!visited.count(p)) pending.push_back(p);
  }
  for (const auto& m : missed) {
    if (std::find(pending.begin(), pending.end(), m) == pending.end()) pending.push_back(m);
  }
  st.pending = pending;

  text << "\n[day] late=" << late << "; early=" << early << "; waits=";
  bool first = true;
  for (const auto& [l, w] : waits) {
    text << (first ? "" : ",") << l << ":" << w;
    first = false;
  }
  text << "; missed=";
  for (std::size_t i = 0; i < missed.size(); ++i) text << (i ? "|" : "") << missed[i];

  std::ostringstream lt;
  lt << "I am " << name << ".";
  if (st.offset > 0) lt << " I leave about " << st.offset << " minutes earlier than the bare travel time suggests.";
  for (const auto& [l, v] : st.avoid) {
    if (v >= 2.0) lt << " Morning queues on " << l << " cost me time; I prefer routes around it.";
  }
  if (!st.pending.empty()) {
    lt << " Still to do:";
    for (const auto& p : st.pending) lt << " " << p;
    lt << ".";
  }
  lt << "\n" << format_learned_state(st);
  return json{{"reflection", text.str()}, {"longterm_reflection", lt.str()}};
}

// ---- paths -----------------------------------------------------------------

json StubBackend::extract_path(const json& f) const {
  const std::string s = f.value("path_string", "");
  const std::string low = lower(s);
  if (low.find("shortest") != std::string::npos || low.find("fastest") != std::string::npos) {
    return json{{"items", json::array({"shortest"})}};
  }
  static const std::regex ident(R"(([A-Za-z]+_[A-Za-z0-9_]+))");
  json items = json::array();
  for (auto it = std::sregex_iterator(s.begin(), s.end(), ident); it != std::sregex_iterator(); ++it) {
    items.push_back((*it)[1].str());
  }
  return json{{"items", items}};
}

// ---- chat ------------------------------------------------------------------

namespace {

struct Member {
  std::string name;
  bool licensed = false;
  int work_start = 0;
  int saving = 0;  // transit minus drive minutes for the commute
};

std::vector<Member> adults_of(const json& f) {
  std::vector<Member> out;
  for (const auto& m : f.value("household", json::array())) {
    out.push_back({m.value("name", ""), m.value("licensed", false), m.value("work_start", 0),
                   m.value("transit_minutes", 0) - m.value("drive_minutes", 0)});
  }
  return out;
}

bool needs_coordination(const json& f) {
  auto adults = adults_of(f);
  if (adults.size() < 2) return false;
  const int vehicles = f.value("vehicles", 0);
  const long licensed = std::count_if(adults.begin(), adults.end(), [](const Member& m) { return m.licensed; });
  return (vehicles > 0 && licensed > vehicles) || !f.value("children", json::array()).empty();
}

}  // namespace

json StubBackend::chat_initiate(const json& f, bool new_day) const {
  const std::string me = f.value("name", "");
  if (new_day) {
    auto adults = adults_of(f);
    if (needs_coordination(f) && adults.front().name == me) {
      return json{{"initiate", true},
                  {"partner", adults[1].name},
                  {"topic", "car use and school run today"},
                  {"utterance", "Morning! Shall we sort out who takes the car and who handles the school run today?"}};
    }
    return json{{"initiate", false}, {"partner", ""}, {"topic", ""}, {"utterance", ""}};
  }
  const auto broadcasts = f.value("broadcasts", std::vector<std::string>{});
  const auto friends = f.value("friends", std::vector<std::string>{});
  if (!broadcasts.empty() && !friends.empty() && !f.value("chatted_today", false)) {
    return json{{"initiate", true},
                {"partner", friends.front()},
                {"topic", "news: " + broadcasts.front()},
                {"utterance", "Did you hear? " + broadcasts.front()}};
  }
  return json{{"initiate", false}, {"partner", ""}, {"topic", ""}, {"utterance", ""}};
}

json StubBackend::chat_response(const json& f) const {
  if (f.value("mode", "chat") == "interview") {
    const json mem = f.value("retrieved", json::array());
    if (mem.empty()) {
      return json{{"utterance", "Nothing in particular comes to mind; I simply followed my usual routine."},
                  {"end", true}};
    }
    return json{{"utterance", "Thinking back: " + mem[0].value("content", "") +
                                  " That experience is what shaped my decision."},
                {"end", true}};
  }
  const int turn = f.value("turn", 1);
  const int close = policy_.doc["chat"].value("close_after_turn", 2);
  if (turn >= close) return json{{"utterance", "Agreed, see you tonight."}, {"end", true}};
  const std::string topic = f.value("topic", "");
  if (topic.rfind("news:", 0) == 0) {
    return json{{"utterance", "Interesting, thanks for letting me know."}, {"end", false}};
  }
  return json{{"utterance", "Let's go with whatever gets both of us to work on time."}, {"end", false}};
}

json StubBackend::chat_summary(const json& f) const {
  const auto parts = f.value("participants", std::vector<std::string>{});
  const std::string topic = f.value("topic", "");
  std::string who;
  for (std::size_t i = 0; i < parts.size(); ++i) who += (i ? " and " : "") + parts[i];
  if (topic.rfind("news:", 0) == 0) {
    return json{{"summary", who + " talked about " + topic.substr(5) + "."}, {"agreement", json::object()}};
  }
  auto adults = adults_of(f);
  const int vehicles = f.value("vehicles", 0);
  std::vector<Member> lic;
  for (const auto& m : adults) {
    if (m.licensed) lic.push_back(m);
  }
  json holders = json::array();
  if (vehicles > 0) {
    std::stable_sort(lic.begin(), lic.end(), [](const Member& a, const Member& b) {
      if (a.saving != b.saving) return a.saving > b.saving;
      return a.name < b.name;
    });
    for (std::size_t i = 0; i < lic.size() && i < static_cast<std::size_t>(vehicles); ++i) holders.push_back(lic[i].name);
  }
  json agreement{{"car_holders", holders}};
  std::string text = who + " agreed that ";
  if (holders.empty()) {
    text += "both take transit";
  } else {
    for (std::size_t i = 0; i < holders.size(); ++i) text += (i ? " and " : "") + holders[i].get<std::string>();
    text += holders.size() == 1 ? " takes the car" : " each take a car";
  }
  const auto children = f.value("children", std::vector<std::string>{});
  if (!children.empty() && !adults.empty()) {
    // The parent with the latest start has the most slack; drivers first.
    const Member* pick = nullptr;
    for (const auto& m : adults) {
      const bool drives = std::find(holders.begin(), holders.end(), m.name) != holders.end();
      const bool pick_drives = pick && std::find(holders.begin(), holders.end(), pick->name) != holders.end();
      if (!pick || (drives && !pick_drives) ||
          (drives == pick_drives && (m.work_start > pick->work_start ||
                                     (m.work_start == pick->work_start && m.name < pick->name)))) {
        pick = &m;
      }
    }
    agreement["school_run"] = pick->name;
    text += " and " + pick->name + " drops off ";
    for (std::size_t i = 0; i < children.size(); ++i) text += (i ? " and " : "") + children[i];
    text += " at School";
  }
  return json{{"summary", text + " today."}, {"agreement", agreement}};
}

}  // namespace gatsim
