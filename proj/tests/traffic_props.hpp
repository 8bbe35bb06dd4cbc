#pragma once
// Randomized point-queue property harness shared by the unit and acceptance tests.

#include <map>
#include <random>
#include <sstream>
#include <string>

#include "gatsim/traffic.hpp"

namespace props {

struct TrialResult {
  std::string failure;
  bool ok() const { return failure.empty(); }
};

inline nlohmann::json random_network(std::mt19937_64& rng, int n, bool roomy, int tokens) {
  using nlohmann::json;
  std::uniform_int_distribution<int> ff(1, 5);
  std::uniform_int_distribution<int> cap(1, 3);
  json nodes = json::array();
  for (int i = 0; i < n; ++i) nodes.push_back({{"id", "n" + std::to_string(i)}});
  json links = json::array();
  int next = 0;
  auto add = [&](int a, int b) {
    links.push_back({{"id", "l" + std::to_string(next++)},
                     {"from", "n" + std::to_string(a)},
                     {"to", "n" + std::to_string(b)},
                     {"free_flow_time", ff(rng)},
                     {"capacity", roomy ? tokens : cap(rng)}});
  };
  for (int i = 0; i < n; ++i) {
    add(i, (i + 1) % n);
    add((i + 1) % n, i);
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  const int extra = std::uniform_int_distribution<int>(0, n)(rng);
  for (int k = 0; k < extra; ++k) {
    int a = pick(rng), b = pick(rng);
    if (a != b) add(a, b);
  }
  return {{"nodes", nodes}, {"links", links}};
}

// One trial: random graph (2..10 nodes), up to 20 tokens released over the
// first 60 ticks, 200 ticks simulated. With `roomy`, capacities are at least
// the token count, so every trip should run at free flow.
inline TrialResult run_random_trial(std::mt19937_64& rng, bool roomy) {
  using namespace gatsim;
  TrialResult res;
  const int n = std::uniform_int_distribution<int>(2, 10)(rng);
  const int tokens = std::uniform_int_distribution<int>(1, 20)(rng);
  NetworkGraph g = load_network(random_network(rng, n, roomy, tokens));
  TrafficState s(g);

  struct Plan {
    std::int64_t release = 0;
    std::vector<RouteStep> route;
    int expect_ticks = 0;
  };
  std::map<TokenId, Plan> plans;
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::uniform_int_distribution<int> when(0, 60);
  std::uniform_int_distribution<int> walk(0, 4);
  for (int t = 0; t < tokens; ++t) {
    int a = pick(rng), b = pick(rng);
    while (b == a) b = pick(rng);
    TravelMode m = walk(rng) == 0 ? TravelMode::walk : TravelMode::drive;
    Path p = shortest_path_nodes(g, g.node_index("n" + std::to_string(a)),
                                 g.node_index("n" + std::to_string(b)), m);
    Plan pl;
    pl.release = when(rng);
    pl.route = TrafficState::make_route(g, p);
    for (const auto& id : p.links) {
      const Link& l = g.link(id);
      pl.expect_ticks += static_cast<int>(l.free_flow_time * (m == TravelMode::walk ? g.walk_multiplier() : 1.0));
    }
    plans[static_cast<TokenId>(t + 1)] = pl;
  }

  std::size_t inserted = 0, arrived = 0;
  std::ostringstream why;
  for (std::int64_t tick = 0; tick < 200 && res.ok(); ++tick) {
    for (auto& [id, pl] : plans) {
      if (pl.release == tick) {
        s.insert(id, pl.route);
        ++inserted;
      }
    }
    auto report = s.step();
    arrived += report.arrivals.size();

    if (s.token_count() + arrived != inserted) {
      why << "conservation broken at tick " << tick;
      res.failure = why.str();
      break;
    }
    std::map<TokenId, int> seen;
    for (std::size_t li = 0; li < g.links().size(); ++li) {
      for (TokenId id : s.queue(li)) ++seen[id];
      for (TokenId id : s.on_link(li)) ++seen[id];
      int occ = 0;
      for (TokenId id : s.on_link(li)) occ += s.token(id).route[s.token(id).pos].capacitated;
      if (occ > g.link(li).capacity) {
        why << "capacity exceeded on " << g.link(li).id << " at tick " << tick;
        res.failure = why.str();
      }
    }
    if (seen.size() != s.token_count()) res.failure = "token missing from every place";
    for (auto [id, c] : seen) {
      if (c != 1) res.failure = "token " + std::to_string(id) + " in more than one place";
    }
    for (const auto& e : report.entries) {
      const std::int64_t joined = e.tick - e.waited;
      for (TokenId other : s.queue(e.link)) {
        const Token& o = s.token(other);
        if (!o.route[o.pos].capacitated) continue;
        if (o.queued_since < joined) {
          why << "FIFO violated on " << g.link(e.link).id << " at tick " << tick;
          res.failure = why.str();
        }
      }
    }
    for (const auto& a : report.arrivals) {
      const Plan& pl = plans.at(a.token);
      const int took = static_cast<int>(a.tick - pl.release);
      if (took < pl.expect_ticks) res.failure = "trip faster than free flow";
      if (roomy && took != pl.expect_ticks) {
        why << "free-flow trip took " << took << " instead of " << pl.expect_ticks;
        res.failure = why.str();
      }
    }
  }
  return res;
}

}  // namespace props
