#include "gatsim/population.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gatsim/time.hpp"

namespace gatsim {

using nlohmann::json;

std::string AgentProfile::work_time_text() const {
  if (!work_start || !work_end) return "none";
  auto hm = [](int m) {
    std::string s = format_hhmm(m);
    return s[0] == '0' ? s.substr(1) : s;
  };
  return hm(*work_start) + "-" + hm(*work_end);
}

json profile_to_json(const AgentProfile& p) {
  return json{{"id", p.id},
              {"name", p.name},
              {"gender", p.gender},
              {"age", p.age},
              {"family_role", p.family_role},
              {"licensed_driver", p.licensed_driver},
              {"work_facility", p.work_facility},
              {"occupation", p.occupation},
              {"work_time", p.work_time_text()},
              {"preferences_in_transportation", p.preferences},
              {"innate", p.innate},
              {"lifestyle", p.lifestyle},
              {"home_facility", p.home_facility},
              {"household_income", p.household_income},
              {"friends", p.friends},
              {"other_description", p.other_description},
              {"household_id", p.household_id},
              {"household_vehicles", p.household_vehicles}};
}

AgentProfile profile_from_json(const json& j) {
  AgentProfile p;
  try {
    p.id = j.value("id", "");
    p.name = j.at("name").get<std::string>();
    p.gender = j.value("gender", "");
    p.age = j.value("age", 30);
    p.family_role = j.value("family_role", "single");
    p.licensed_driver = j.value("licensed_driver", false);
    p.work_facility = j.value("work_facility", "none");
    p.occupation = j.value("occupation", "");
    const std::string wt = j.value("work_time", "none");
    if (wt != "none" && !wt.empty()) {
      const auto dash = wt.find('-');
      if (dash == std::string::npos) throw PopulationError("bad work_time '" + wt + "'");
      p.work_start = parse_hhmm(wt.substr(0, dash));
      p.work_end = parse_hhmm(wt.substr(dash + 1));
    }
    p.preferences = j.value("preferences_in_transportation", "");
    p.innate = j.value("innate", "");
    p.lifestyle = j.value("lifestyle", "");
    p.home_facility = j.at("home_facility").get<std::string>();
    p.household_income = j.value("household_income", "medium");
    p.friends = j.value("friends", std::vector<std::string>{});
    p.other_description = j.value("other_description", "");
    p.household_id = j.value("household_id", "");
    p.household_vehicles = j.value("household_vehicles", 0);
  } catch (const json::exception& e) {
    throw PopulationError(std::string("malformed profile: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw PopulationError(std::string("malformed profile: ") + e.what());
  }
  return p;
}

std::string profile_to_text(const AgentProfile& p) {
  std::ostringstream o;
  o << "Name: " << p.name << "\n"
    << "Gender: " << p.gender << ", age " << p.age << ", " << p.family_role << "\n"
    << "Licensed driver: " << (p.licensed_driver ? "yes" : "no")
    << "; household vehicles: " << p.household_vehicles << "\n"
    << "Home: " << p.home_facility << "\n";
  if (p.has_work()) {
    o << "Work: " << p.occupation << " at " << p.work_facility << ", " << p.work_time_text() << "\n";
  } else {
    o << "Occupation: " << p.occupation << "\n";
  }
  o << "Transportation preferences: " << p.preferences << "\n"
    << "Innate: " << p.innate << "\n"
    << "Lifestyle: " << p.lifestyle << "\n"
    << "Household income: " << p.household_income << "\n";
  o << "Friends: ";
  for (std::size_t i = 0; i < p.friends.size(); ++i) o << (i ? ", " : "") << p.friends[i];
  o << "\n" << p.other_description;
  return o.str();
}

std::vector<AgentProfile> population_from_json(const json& j) {
  const json& arr = j.is_array() ? j : j.at("profiles");
  std::vector<AgentProfile> out;
  out.reserve(arr.size());
  for (const auto& e : arr) {
    AgentProfile p = profile_from_json(e);
    if (p.id.empty()) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "a%02zu", out.size() + 1);
      p.id = buf;
    }
    out.push_back(std::move(p));
  }
  return out;
}

json population_to_json(const std::vector<AgentProfile>& people) {
  json arr = json::array();
  for (const auto& p : people) arr.push_back(profile_to_json(p));
  return json{{"profiles", arr}};
}

std::vector<AgentProfile> load_population_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PopulationError("cannot open population file " + path);
  try {
    return population_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw PopulationError(path + ": " + e.what());
  }
}

std::size_t PopulationConstraints::total() const { return targets.value("total", std::size_t{0}); }

PopulationConstraints PopulationConstraints::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PopulationError("cannot open constraints file " + path);
  return {json::parse(in)};
}

namespace {

using Counts = std::map<std::string, long>;

void compare(const std::string& label, const json& want, const Counts& got, std::vector<std::string>& out) {
  for (const auto& [k, v] : want.items()) {
    auto it = got.find(k);
    const long g = it == got.end() ? 0 : it->second;
    if (g != v.get<long>()) {
      out.push_back(label + "[" + k + "]: expected " + std::to_string(v.get<long>()) + ", got " +
                    std::to_string(g));
    }
  }
}

void compare_scalar(const std::string& label, long want, long got, std::vector<std::string>& out) {
  if (want != got) {
    out.push_back(label + ": expected " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

}  // namespace

std::vector<std::string> check_population(const std::vector<AgentProfile>& people,
                                          const PopulationConstraints& c) {
  const json& t = c.targets;
  std::vector<std::string> out;
  Counts gender, age_group, role, income, workers, residents;
  std::map<std::string, std::vector<const AgentProfile*>> households;
  long licensed = 0;
  for (const auto& p : people) {
    ++gender[p.gender];
    ++age_group[p.is_child() ? "children" : "young"];
    ++role[p.family_role];
    ++income[p.household_income];
    if (p.work_facility != "none") ++workers[p.work_facility];
    ++residents[p.home_facility];
    if (p.licensed_driver) ++licensed;
    households[p.household_id.empty() ? p.id : p.household_id].push_back(&p);
  }
  Counts sizes, vehicles;
  for (const auto& [id, members] : households) {
    ++sizes[std::to_string(members.size())];
    ++vehicles[std::to_string(members.front()->household_vehicles)];
  }
  if (t.contains("total")) compare_scalar("total", t["total"].get<long>(), static_cast<long>(people.size()), out);
  if (t.contains("gender")) compare("gender", t["gender"], gender, out);
  if (t.contains("age_group")) compare("age_group", t["age_group"], age_group, out);
  if (t.contains("family_role")) compare("family_role", t["family_role"], role, out);
  if (t.contains("families")) {
    compare_scalar("families", t["families"].get<long>(), static_cast<long>(households.size()), out);
  }
  if (t.contains("family_size")) compare("family_size", t["family_size"], sizes, out);
  if (t.contains("household_income")) compare("household_income", t["household_income"], income, out);
  if (t.contains("licensed_drivers")) compare_scalar("licensed_drivers", t["licensed_drivers"].get<long>(), licensed, out);
  if (t.contains("vehicles_per_family")) compare("vehicles_per_family", t["vehicles_per_family"], vehicles, out);
  if (t.contains("workers")) compare("workers", t["workers"], workers, out);
  if (t.contains("residents")) compare("residents", t["residents"], residents, out);
  return out;
}

void check_profiles(const NetworkGraph& g, const std::vector<AgentProfile>& people) {
  std::vector<std::string> problems;
  std::set<std::string> names, ids;
  for (const auto& p : people) {
    if (!names.insert(p.name).second) problems.push_back("duplicate name " + p.name);
    if (!ids.insert(p.id).second) problems.push_back("duplicate id " + p.id);
  }
  std::map<std::string, const AgentProfile*> first_in_household;
  for (const auto& p : people) {
    if (!g.find_facility(p.home_facility)) problems.push_back(p.name + ": unknown home " + p.home_facility);
    if (p.work_facility != "none" && !g.find_facility(p.work_facility)) {
      problems.push_back(p.name + ": unknown work facility " + p.work_facility);
    }
    if (p.work_facility != "none" && !p.work_start) problems.push_back(p.name + ": work facility without hours");
    for (const auto& f : p.friends) {
      if (!names.count(f)) problems.push_back(p.name + ": unknown friend " + f);
    }
    if (p.is_child() && p.licensed_driver) problems.push_back(p.name + ": licensed child");
    auto [it, fresh] = first_in_household.emplace(p.household_id, &p);
    if (!fresh && !p.household_id.empty()) {
      if (it->second->home_facility != p.home_facility) problems.push_back(p.name + ": household home differs");
      if (it->second->household_vehicles != p.household_vehicles) {
        problems.push_back(p.name + ": household vehicle count differs");
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "population invalid:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw PopulationError(msg);
  }
}

}  // namespace gatsim
