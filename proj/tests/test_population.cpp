#include <map>

#include "doctest.h"
#include "gatsim/gateway.hpp"
#include "oracles.hpp"

using namespace gatsim;

namespace {

// Expected population totals, written out here rather than read from the constraints file.
std::map<std::string, long> tally(const std::vector<AgentProfile>& people, const std::string& what) {
  std::map<std::string, long> t;
  std::map<std::string, std::vector<const AgentProfile*>> hh;
  for (const auto& p : people) hh[p.household_id].push_back(&p);
  if (what == "family_size") {
    for (const auto& [id, m] : hh) ++t[std::to_string(m.size())];
  } else if (what == "vehicles") {
    for (const auto& [id, m] : hh) ++t[std::to_string(m.front()->household_vehicles)];
  } else {
    for (const auto& p : people) {
      if (what == "gender") ++t[p.gender];
      if (what == "role") ++t[p.family_role];
      if (what == "income") ++t[p.household_income];
      if (what == "work" && p.work_facility != "none") ++t[p.work_facility];
      if (what == "home") ++t[p.home_facility];
      if (what == "licensed" && p.licensed_driver) ++t["yes"];
      if (what == "age") ++t[p.is_child() ? "children" : "young"];
    }
  }
  return t;
}

}  // namespace

TEST_CASE("bundled population matches the demographic table") {
  auto people = load_population_file(default_population_path());
  REQUIRE(people.size() == 70);
  CHECK(tally(people, "gender") == std::map<std::string, long>{{"female", 36}, {"male", 34}});
  CHECK(tally(people, "age") == std::map<std::string, long>{{"children", 10}, {"young", 60}});
  CHECK(tally(people, "role") ==
        std::map<std::string, long>{{"daughter", 5}, {"husband", 17}, {"single", 26}, {"son", 5}, {"wife", 17}});
  CHECK(tally(people, "family_size") == std::map<std::string, long>{{"1", 26}, {"2", 8}, {"3", 8}, {"4", 1}});
  CHECK(tally(people, "income") == std::map<std::string, long>{{"high", 17}, {"low", 10}, {"medium", 43}});
  CHECK(tally(people, "licensed")["yes"] == 50);
  CHECK(tally(people, "vehicles") == std::map<std::string, long>{{"0", 4}, {"1", 25}, {"2", 14}});
  CHECK(tally(people, "home") == std::map<std::string, long>{{"Midtown apartment", 34}, {"Uptown apartment", 36}});
  auto work = tally(people, "work");
  CHECK(work["Factory"] == 20);
  CHECK(work["Office"] == 17);
  CHECK(work["Coffee shop"] == 3);
  CHECK(work["Hospital"] == 3);
  CHECK(work["Gym"] == 3);
  CHECK(work["Food court"] == 3);
  CHECK(work["Amusement park"] == 2);
  CHECK(work["Museum"] == 2);
  CHECK(work["Cinema"] == 2);
  CHECK(work["Supermarket"] == 3);
  CHECK(work["School"] == 2);

  const auto g = load_network_file(oracle::fixture_path("nguyen_dupuis.json"));
  CHECK_NOTHROW(check_profiles(g, people));
}

TEST_CASE("synthesize_population with the stub") {
  auto gw = Gateway::make_stub();
  auto c = PopulationConstraints::load(default_constraints_path());
  SUBCASE("bundled fixture validates") {
    auto people = synthesize_population(c, gw);
    CHECK(people.size() == 70);
    CHECK(people.front().id == "a01");
    CHECK(check_population(people, c).empty());
  }
  SUBCASE("a moved household breaks the residents count") {
    auto people = load_population_file(default_population_path());
    for (auto& p : people) {
      if (p.family_role == "single" && p.home_facility == "Uptown apartment") {
        p.home_facility = "Midtown apartment";
        break;
      }
    }
    auto bad = check_population(people, c);
    REQUIRE(bad.size() == 2);
    CHECK(bad[0].find("residents[Midtown apartment]") != std::string::npos);
    CHECK(bad[1] == "residents[Uptown apartment]: expected 36, got 35");
  }
  SUBCASE("zero agents requested") {
    PopulationConstraints zero;
    zero.targets = {{"total", 0}};
    CHECK(synthesize_population(zero, gw).empty());
  }
}

TEST_CASE("profile json round trip and narrative") {
  auto people = load_population_file(default_population_path());
  for (const auto& p : people) CHECK(profile_from_json(profile_to_json(p)) == p);
  const auto& a = people.front();
  const std::string text = profile_to_text(a);
  CHECK(text.find(a.name) != std::string::npos);
  CHECK(text.find(a.home_facility) != std::string::npos);
}

TEST_CASE("profile checks catch dangling references") {
  const auto g = load_network_file(oracle::fixture_path("nguyen_dupuis.json"));
  auto people = load_population_file(default_population_path());
  people[3].friends.push_back("Nobody Known");
  people[5].work_facility = "Castle";
  try {
    check_profiles(g, people);
    FAIL("expected PopulationError");
  } catch (const PopulationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("Nobody Known") != std::string::npos);
    CHECK(msg.find("Castle") != std::string::npos);
  }
}
