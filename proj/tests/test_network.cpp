#include <random>

#include "doctest.h"
#include "gatsim/network.hpp"
#include "gatsim/traffic.hpp"
#include "oracles.hpp"

using namespace gatsim;
using nlohmann::json;

namespace {

const NetworkGraph& fixture() {
  static NetworkGraph g = load_network_file(oracle::fixture_path("nguyen_dupuis.json"));
  return g;
}

json tiny_doc() {
  return json::parse(R"({
    "nodes": [{"id": "A"}, {"id": "B"}, {"id": "C"}],
    "links": [
      {"id": "ab", "from": "A", "to": "B", "free_flow_time": 2, "capacity": 1},
      {"id": "ba", "from": "B", "to": "A", "free_flow_time": 2, "capacity": 1},
      {"id": "bc", "from": "B", "to": "C", "free_flow_time": 3, "capacity": 1},
      {"id": "cb", "from": "C", "to": "B", "free_flow_time": 3, "capacity": 1}
    ],
    "facilities": [{"id": "f1", "name": "Home", "node": "A"}, {"id": "f2", "name": "Work", "node": "C"}]
  })");
}

bool has_kind(const NetworkGraph& g, const Path& p, LinkKind k, const std::string& line = "") {
  for (const auto& id : p.links) {
    const Link& l = g.link(id);
    if (l.kind == k && (line.empty() || l.line_id == line)) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("fixture network loads") {
  const auto& g = fixture();
  CHECK(g.facilities().size() == 13);
  int road_nodes = 0;
  for (const auto& n : g.nodes()) road_nodes += n.line_id.empty();
  CHECK(road_nodes == 13);
  CHECK(g.road_link_ids().size() == 38);
  CHECK(g.transit_lines().size() == 2);
  CHECK(g.facility_by_name("Coffee shop").node_id == "Node_5");
  CHECK(g.link("Metro_1_board_Node_1").kind == LinkKind::boarding);
  CHECK(g.link("Metro_1_board_Node_1").free_flow_time == doctest::Approx(5.0));
  CHECK(g.link("Metro_2_r_alight_Node_4").kind == LinkKind::alighting);
  // canonical ordering
  for (std::size_t i = 1; i < g.links().size(); ++i) CHECK(g.link(i - 1).id < g.link(i).id);
}

TEST_CASE("load_network rejects malformed documents") {
  SUBCASE("no nodes") {
    json d = tiny_doc();
    d["nodes"] = json::array();
    CHECK_THROWS_WITH_AS(load_network(d), "no nodes", NetworkError);
  }
  SUBCASE("duplicate id") {
    json d = tiny_doc();
    d["links"].push_back(d["links"][0]);
    CHECK_THROWS_AS(load_network(d), NetworkError);
  }
  SUBCASE("dangling reference") {
    json d = tiny_doc();
    d["links"][0]["to"] = "Z";
    CHECK_THROWS_AS(load_network(d), NetworkError);
  }
  SUBCASE("facility without node") {
    json d = tiny_doc();
    d["facilities"][0].erase("node");
    CHECK_THROWS_WITH_AS(load_network(d), "facility 'f1' has no node", NetworkError);
  }
  SUBCASE("discontiguous transit line") {
    json d = tiny_doc();
    d["nodes"].push_back({{"id", "D"}});
    d["links"].push_back({{"id", "cd"}, {"from", "C"}, {"to", "D"}, {"free_flow_time", 1}, {"capacity", 1}});
    d["links"].push_back({{"id", "dc"}, {"from", "D"}, {"to", "C"}, {"free_flow_time", 1}, {"capacity", 1}});
    d["links"].push_back({{"id", "t1"}, {"kind", "transit"}, {"from", "A"}, {"to", "B"}, {"free_flow_time", 1}});
    d["links"].push_back({{"id", "t2"}, {"kind", "transit"}, {"from", "C"}, {"to", "D"}, {"free_flow_time", 1}});
    d["transit_lines"] = json::array({{{"id", "L"}, {"links", {"t1", "t2"}}}});
    CHECK_THROWS_WITH_AS(load_network(d), "discontiguous transit line 'L'", NetworkError);
  }
  SUBCASE("not strongly connected") {
    json d = tiny_doc();
    d["links"].erase(3);
    CHECK_THROWS_AS(load_network(d), NetworkError);
  }
  SUBCASE("road capacity") {
    json d = tiny_doc();
    d["links"][0]["capacity"] = 0;
    CHECK_THROWS_AS(load_network(d), NetworkError);
  }
}

TEST_CASE("shortest_path identity and unreachable") {
  const auto& g = fixture();
  Path p = shortest_path(g, "Factory", "Factory", TravelMode::drive);
  CHECK(p.links.empty());
  CHECK(p.cost == 0.0);
  CHECK_THROWS_AS(shortest_path(g, "Factory", "Office", TravelMode::none), RoutingError);
}

TEST_CASE("drive path between the apartments matches exhaustive enumeration") {
  const auto& g = fixture();
  Path p = shortest_path(g, "Uptown apartment", "Midtown apartment", TravelMode::drive);
  auto best = oracle::enumerate_best(g, g.facility_node("Uptown apartment"),
                                     g.facility_node("Midtown apartment"), TravelMode::drive);
  REQUIRE(best.found);
  CHECK(p.cost == best.cost);
  CHECK(p.links == best.links);
  CHECK(check_path(g, p.links, TravelMode::drive, g.facility_node("Uptown apartment"),
                   g.facility_node("Midtown apartment")) == "");
}

TEST_CASE("transit between the two lines boards, rides both, alights") {
  const auto& g = fixture();
  Path p = shortest_path(g, "Uptown apartment", "Gym", TravelMode::transit);
  auto best = oracle::enumerate_best(g, g.facility_node("Uptown apartment"), g.facility_node("Gym"),
                                     TravelMode::transit);
  CHECK(p.links == best.links);
  CHECK(has_kind(g, p, LinkKind::boarding));
  CHECK(has_kind(g, p, LinkKind::transit, "Metro_1"));
  CHECK(has_kind(g, p, LinkKind::transit, "Metro_2"));
  CHECK(has_kind(g, p, LinkKind::alighting));
}

TEST_CASE("random routing queries match enumeration") {
  const auto& g = fixture();
  std::mt19937 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, g.facilities().size() - 1);
  for (int i = 0; i < 25; ++i) {
    const auto& a = g.facilities()[pick(rng)];
    const auto& b = g.facilities()[pick(rng)];
    TravelMode m = (i % 2) ? TravelMode::drive : TravelMode::transit;
    Path p = shortest_path(g, a.name, b.name, m);
    auto best = oracle::enumerate_best(g, g.node_index(a.node_id), g.node_index(b.node_id), m);
    CHECK(p.cost == best.cost);
    CHECK(p.links == best.links);
  }
}

TEST_CASE("penalties and traffic steer routing") {
  const auto& g = fixture();
  Path base = shortest_path(g, "Midtown apartment", "Factory", TravelMode::drive);
  REQUIRE(!base.links.empty());
  RouteOptions opts;
  opts.penalties[base.links.front()] = 1000.0;
  Path alt = shortest_path(g, "Midtown apartment", "Factory", TravelMode::drive, nullptr, opts);
  CHECK(alt.links.front() != base.links.front());
}

TEST_CASE("check_path reports the defect") {
  const auto& g = fixture();
  const auto from = g.facility_node("Gym");
  const auto to = g.facility_node("Factory");
  CHECK(check_path(g, {"Ave_4_link_1"}, TravelMode::drive, from, to) == "");
  CHECK(check_path(g, {"Ave_4_link_1", "St_4_link_2"}, TravelMode::drive, from, to) != "");
  CHECK(check_path(g, {"Metro_2_link_3"}, TravelMode::drive, from, to) != "");
  CHECK(check_path(g, {"Nope"}, TravelMode::drive, from, to) != "");
}
