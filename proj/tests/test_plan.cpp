#include "doctest.h"
#include "gatsim/plan.hpp"

using namespace gatsim;
using nlohmann::json;

TEST_CASE("six-field entries parse in their listing form") {
  json j = json::parse(R"([["Office", "14:10", 120, "drive", "Ave_2_link_3, St_4_link_1", "Meet Gloria."],
    ["Gym", "17:45", 60, "transit", "Metro_1", "Workout."],
    ["Uptown apartment", "19:30", "none", "transit", "shortest", "Home."],
    ["Midtown apartment", "06:00", "20", "none", "none", "Wake up."]])");
  ActivityPlan p = plan_from_json(j);
  REQUIRE(p.size() == 4);
  CHECK(p.entries[0].departure == 14 * 60 + 10);
  CHECK(p.entries[0].path.items == std::vector<std::string>{"Ave_2_link_3", "St_4_link_1"});
  CHECK(p.entries[1].path.items == std::vector<std::string>{"Metro_1"});
  CHECK(p.entries[2].path.kind == PathSpec::Kind::shortest);
  CHECK_FALSE(p.entries[2].duration.has_value());
  CHECK(p.entries[3].duration == 20);
  CHECK(p.entries[3].mode == TravelMode::none);
  CHECK(plan_from_json(plan_to_json(p)) == p);
}

TEST_CASE("text rendering is python-literal style") {
  ActivityPlan p;
  p.entries.push_back({"Gym", 17 * 60, 60, TravelMode::drive, PathSpec::shortest(), "Nina's class"});
  CHECK(plan_to_text(p) == "[['Gym', '17:00', 60, 'drive', 'shortest', \"Nina's class\"]]");
}

TEST_CASE("bracketed path strings") {
  auto s = PathSpec::parse("['St_2_link_1', 'Ave_2_link_2']");
  CHECK(s.items == std::vector<std::string>{"St_2_link_1", "Ave_2_link_2"});
  CHECK(PathSpec::parse("real-time shortest").kind == PathSpec::Kind::shortest);
}

TEST_CASE("malformed entries are rejected") {
  CHECK_THROWS_AS(entry_from_json(json::array({"Gym", "17:00"})), PlanError);
  CHECK_THROWS_AS(entry_from_json(json::parse(R"(["Gym", "27:00", 1, "drive", "none", ""])")), PlanError);
  CHECK_THROWS_AS(entry_from_json(json::parse(R"(["Gym", "17:00", 1, "bike", "none", ""])")), PlanError);
}

TEST_CASE("revision payload shapes") {
  PlanRevision r;
  r.decision = RevisionDecision::path_update;
  CHECK_THROWS_AS(check_revision_payload(r), PlanError);
  r.payload = {{"path", {"Ave_2_link_1"}}};
  CHECK_NOTHROW(check_revision_payload(r));
  r.decision = RevisionDecision::departure_adjust;
  r.payload = {{"index", 1}, {"departure", "07:10"}};
  CHECK_NOTHROW(check_revision_payload(r));
  r.payload = {{"index", 1}};
  CHECK_THROWS_AS(check_revision_payload(r), PlanError);
  CHECK(revision_from_json(revision_to_json(r)) == r);
}
