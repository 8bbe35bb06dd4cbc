#pragma once
// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gatsim/network.hpp"

namespace oracle {

inline std::string fixture_path(const std::string& name) {
  return std::string(GATSIM_DATA_DIR) + "/" + name;
}

// Per-mode link cost from raw link fields.
inline std::optional<double> raw_cost(const gatsim::Link& l, gatsim::TravelMode m, double walk_mult) {
  using gatsim::LinkKind;
  using gatsim::TravelMode;
  if (m == TravelMode::drive) {
    if (l.kind == LinkKind::road) return l.free_flow_time;
    return std::nullopt;
  }
  if (l.kind == LinkKind::road) return l.free_flow_time * walk_mult;
  if (l.kind == LinkKind::walk) return l.free_flow_time;
  if (m == TravelMode::transit) return l.free_flow_time;
  return std::nullopt;
}

struct BestPath {
  bool found = false;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::string> links;
};

// Exhaustive enumeration of every simple path; keeps the cheapest, then the
// lexicographically smallest link-id sequence.
inline BestPath enumerate_best(const gatsim::NetworkGraph& g, std::size_t from, std::size_t to,
                               gatsim::TravelMode mode) {
  BestPath best;
  if (from == to) {
    best.found = true;
    best.cost = 0.0;
    return best;
  }
  const auto& links = g.links();
  std::vector<std::vector<std::size_t>> out(g.nodes().size());
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (raw_cost(links[i], mode, g.walk_multiplier())) out[g.node_index(links[i].from)].push_back(i);
  }
  std::vector<char> on_path(g.nodes().size(), 0);
  std::vector<std::string> seq;
  auto dfs = [&](auto&& self, std::size_t u, double cost) -> void {
    if (cost > best.cost) return;
    if (u == to) {
      if (!best.found || cost < best.cost || (cost == best.cost && seq < best.links)) {
        best.found = true;
        best.cost = cost;
        best.links = seq;
      }
      return;
    }
    on_path[u] = 1;
    for (std::size_t li : out[u]) {
      std::size_t v = g.node_index(links[li].to);
      if (on_path[v]) continue;
      seq.push_back(links[li].id);
      self(self, v, cost + *raw_cost(links[li], mode, g.walk_multiplier()));
      seq.pop_back();
    }
    on_path[u] = 0;
  };
  dfs(dfs, from, 0.0);
  return best;
}

// Exact binomial upper tail P(X >= k), X ~ Bin(n, p), by Pascal-style dynamic
// programming over the pmf.
inline double binomial_tail(int n, int k, double p) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
  pmf[0] = 1.0;
  for (int trial = 0; trial < n; ++trial) {
    for (int j = trial + 1; j >= 1; --j) {
      pmf[j] = pmf[j] * (1.0 - p) + pmf[j - 1] * p;
    }
    pmf[0] *= (1.0 - p);
  }
  double s = 0.0;
  for (int j = std::max(k, 0); j <= n; ++j) s += pmf[j];
  return s;
}

// P(theta >= x) for theta ~ Beta(a, b) via composite Simpson quadrature.
inline double beta_upper(double a, double b, double x, int panels = 20000) {
  auto f = [&](double t) { return std::pow(t, a - 1.0) * std::pow(1.0 - t, b - 1.0); };
  auto simpson = [&](double lo, double hi) {
    const double h = (hi - lo) / panels;
    double s = f(lo) + f(hi);
    for (int i = 1; i < panels; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
  };
  return simpson(x, 1.0) / simpson(0.0, 1.0);
}

}  // namespace oracle
