#include "gatsim/network.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>

#include "gatsim/traffic.hpp"

namespace gatsim {

using nlohmann::json;

std::string to_string(LinkKind k) {
  switch (k) {
    case LinkKind::road: return "road";
    case LinkKind::walk: return "walk";
    case LinkKind::transit: return "transit";
    case LinkKind::boarding: return "boarding";
    case LinkKind::alighting: return "alighting";
  }
  return "road";
}

LinkKind link_kind_from_string(std::string_view s) {
  if (s == "road") return LinkKind::road;
  if (s == "walk") return LinkKind::walk;
  if (s == "transit") return LinkKind::transit;
  if (s == "boarding") return LinkKind::boarding;
  if (s == "alighting") return LinkKind::alighting;
  throw NetworkError("unknown link kind '" + std::string(s) + "'");
}

std::string to_string(TravelMode m) {
  switch (m) {
    case TravelMode::drive: return "drive";
    case TravelMode::transit: return "transit";
    case TravelMode::walk: return "walk";
    case TravelMode::none: return "none";
  }
  return "none";
}

TravelMode travel_mode_from_string(std::string_view s) {
  if (s == "drive") return TravelMode::drive;
  if (s == "transit") return TravelMode::transit;
  if (s == "walk") return TravelMode::walk;
  if (s == "none") return TravelMode::none;
  throw std::invalid_argument("unknown travel mode '" + std::string(s) + "'");
}

std::size_t NetworkGraph::node_index(std::string_view id) const {
  auto it = node_ix_.find(std::string(id));
  if (it == node_ix_.end()) throw NetworkError("unknown node '" + std::string(id) + "'");
  return it->second;
}

std::size_t NetworkGraph::link_index(std::string_view id) const {
  auto it = link_ix_.find(std::string(id));
  if (it == link_ix_.end()) throw NetworkError("unknown link '" + std::string(id) + "'");
  return it->second;
}

bool NetworkGraph::has_node(std::string_view id) const {
  return node_ix_.count(std::string(id)) > 0;
}

bool NetworkGraph::has_link(std::string_view id) const {
  return link_ix_.count(std::string(id)) > 0;
}

const Facility* NetworkGraph::find_facility(std::string_view name) const {
  auto it = facility_by_name_.find(std::string(name));
  return it == facility_by_name_.end() ? nullptr : &facilities_[it->second];
}

const Facility& NetworkGraph::facility_by_name(std::string_view name) const {
  if (const Facility* f = find_facility(name)) return *f;
  throw NetworkError("unknown facility '" + std::string(name) + "'");
}

const Facility& NetworkGraph::facility_at_node(std::string_view node_id) const {
  auto it = facility_by_node_.find(std::string(node_id));
  if (it == facility_by_node_.end()) {
    throw NetworkError("no facility at node '" + std::string(node_id) + "'");
  }
  return facilities_[it->second];
}

std::vector<std::string> NetworkGraph::road_link_ids() const {
  std::vector<std::string> out;
  for (const auto& l : links_) {
    if (l.kind == LinkKind::road) out.push_back(l.id);
  }
  return out;
}

namespace {

void expand_direction(const TransitLine& line, const std::vector<std::string>& seq,
                      const std::string& dir_tag, std::vector<Link>& links,
                      std::vector<Node>& nodes, std::map<std::string, Link*>& by_id,
                      const std::map<std::string, const Node*>& road_nodes, double alight_time) {
  if (seq.empty()) return;
  const std::string line_tag = line.id + dir_tag;
  std::vector<std::string> stations;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto it = by_id.find(seq[i]);
    if (it == by_id.end()) {
      throw NetworkError("transit line '" + line.id + "' references unknown link '" + seq[i] + "'");
    }
    Link& l = *it->second;
    if (l.kind != LinkKind::transit) {
      throw NetworkError("transit line '" + line.id + "' lists non-transit link '" + l.id + "'");
    }
    if (!l.line_id.empty()) {
      throw NetworkError("transit link '" + l.id + "' belongs to more than one line");
    }
    if (i == 0) stations.push_back(l.from);
    if (stations.back() != l.from) {
      throw NetworkError("discontiguous transit line '" + line.id + "'");
    }
    stations.push_back(l.to);
  }
  auto platform = [&](const std::string& station) { return line_tag + ":" + station; };
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const Node* road = road_nodes.at(stations[i]);
    Node p;
    p.id = platform(stations[i]);
    p.x = road->x;
    p.y = road->y;
    p.line_id = line.id;
    nodes.push_back(p);
    if (i + 1 < stations.size()) {
      Link b;
      b.id = line_tag + "_board_" + stations[i];
      b.kind = LinkKind::boarding;
      b.from = stations[i];
      b.to = p.id;
      b.free_flow_time = line.headway / 2.0;
      b.line_id = line.id;
      links.push_back(b);
    }
    if (i > 0) {
      Link a;
      a.id = line_tag + "_alight_" + stations[i];
      a.kind = LinkKind::alighting;
      a.from = p.id;
      a.to = stations[i];
      a.free_flow_time = alight_time;
      a.line_id = line.id;
      links.push_back(a);
    }
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    Link& l = *by_id.at(seq[i]);
    l.from = platform(stations[i]);
    l.to = platform(stations[i + 1]);
    l.line_id = line.id;
  }
}

}  // namespace

NetworkGraph load_network(const json& doc) {
  NetworkGraph g;
  g.document_ = doc;
  if (!doc.is_object()) throw NetworkError("network document must be a JSON object");
  g.walk_multiplier_ = doc.value("walk_multiplier", 4.0);
  g.alight_time_ = doc.value("alight_time", 1.0);
  const double default_headway = doc.value("default_headway", 10.0);
  if (g.walk_multiplier_ <= 0.0) throw NetworkError("walk_multiplier must be > 0");

  const json& jnodes = doc.value("nodes", json::array());
  if (!jnodes.is_array() || jnodes.empty()) throw NetworkError("no nodes");

  std::vector<Node> nodes;
  std::map<std::string, const Node*> road_nodes;
  std::set<std::string> seen;
  for (const auto& jn : jnodes) {
    Node n;
    n.id = jn.at("id").get<std::string>();
    n.x = jn.value("x", 0.0);
    n.y = jn.value("y", 0.0);
    if (!seen.insert(n.id).second) throw NetworkError("duplicate node id '" + n.id + "'");
    nodes.push_back(n);
  }
  for (const auto& n : nodes) road_nodes[n.id] = &n;

  std::vector<Link> links;
  std::set<std::string> link_ids;
  for (const auto& jl : doc.value("links", json::array())) {
    Link l;
    l.id = jl.at("id").get<std::string>();
    l.kind = link_kind_from_string(jl.value("kind", std::string("road")));
    l.from = jl.at("from").get<std::string>();
    l.to = jl.at("to").get<std::string>();
    l.free_flow_time = jl.at("free_flow_time").get<double>();
    l.capacity = jl.value("capacity", 0);
    if (!link_ids.insert(l.id).second) throw NetworkError("duplicate link id '" + l.id + "'");
    if (!road_nodes.count(l.from)) {
      throw NetworkError("link '" + l.id + "' references unknown node '" + l.from + "'");
    }
    if (!road_nodes.count(l.to)) {
      throw NetworkError("link '" + l.id + "' references unknown node '" + l.to + "'");
    }
    if (l.from == l.to) throw NetworkError("link '" + l.id + "' is a self-loop");
    if (!(l.free_flow_time > 0.0)) {
      throw NetworkError("link '" + l.id + "' must have free_flow_time > 0");
    }
    if (l.kind == LinkKind::boarding || l.kind == LinkKind::alighting) {
      throw NetworkError("link '" + l.id + "': boarding/alighting links are generated from transit_lines");
    }
    if (l.kind == LinkKind::road) {
      if (l.capacity < 1) throw NetworkError("road link '" + l.id + "' must have capacity >= 1");
    } else {
      l.capacity = 0;
    }
    links.push_back(l);
  }

  // Transit expansion works on a stable id -> link map.
  std::map<std::string, Link*> by_id;
  for (auto& l : links) by_id[l.id] = &l;
  std::vector<Link> generated;
  std::vector<Node> platforms;
  std::set<std::string> line_ids;
  for (const auto& jt : doc.value("transit_lines", json::array())) {
    TransitLine line;
    line.id = jt.at("id").get<std::string>();
    line.headway = jt.value("headway", default_headway);
    line.links = jt.at("links").get<std::vector<std::string>>();
    line.return_links = jt.value("return_links", std::vector<std::string>{});
    if (!line_ids.insert(line.id).second) {
      throw NetworkError("duplicate transit line id '" + line.id + "'");
    }
    if (line.links.empty()) throw NetworkError("transit line '" + line.id + "' has no links");
    if (!(line.headway > 0.0)) throw NetworkError("transit line '" + line.id + "' needs headway > 0");
    expand_direction(line, line.links, "", generated, platforms, by_id, road_nodes, g.alight_time_);
    expand_direction(line, line.return_links, "_r", generated, platforms, by_id, road_nodes,
                     g.alight_time_);
    g.lines_.push_back(line);
  }
  for (const auto& l : links) {
    if (l.kind == LinkKind::transit && l.line_id.empty()) {
      throw NetworkError("transit link '" + l.id + "' is not part of any transit line");
    }
  }
  for (auto& l : generated) {
    if (!link_ids.insert(l.id).second) throw NetworkError("duplicate link id '" + l.id + "'");
    links.push_back(std::move(l));
  }
  for (auto& p : platforms) {
    if (!seen.insert(p.id).second) throw NetworkError("duplicate node id '" + p.id + "'");
    nodes.push_back(std::move(p));
  }

  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
  std::sort(links.begin(), links.end(), [](const Link& a, const Link& b) { return a.id < b.id; });
  std::sort(g.lines_.begin(), g.lines_.end(),
            [](const TransitLine& a, const TransitLine& b) { return a.id < b.id; });
  g.nodes_ = std::move(nodes);
  g.links_ = std::move(links);
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) g.node_ix_[g.nodes_[i].id] = i;
  g.out_.assign(g.nodes_.size(), {});
  for (std::size_t i = 0; i < g.links_.size(); ++i) {
    Link& l = g.links_[i];
    l.from_index = g.node_ix_.at(l.from);
    l.to_index = g.node_ix_.at(l.to);
    g.link_ix_[l.id] = i;
    g.out_[l.from_index].push_back(i);  // links_ sorted by id, so each list is too
  }

  std::set<std::string> names;
  for (const auto& jf : doc.value("facilities", json::array())) {
    Facility f;
    f.id = jf.at("id").get<std::string>();
    f.name = jf.at("name").get<std::string>();
    if (!jf.contains("node") || jf.at("node").is_null()) {
      throw NetworkError("facility '" + f.id + "' has no node");
    }
    f.node_id = jf.at("node").get<std::string>();
    if (jf.contains("capacity") && !jf.at("capacity").is_null()) {
      f.capacity = jf.at("capacity").get<int>();
      if (*f.capacity < 1) throw NetworkError("facility '" + f.id + "' capacity must be >= 1");
    }
    if (!road_nodes.count(f.node_id)) {
      throw NetworkError("facility '" + f.id + "' references unknown node '" + f.node_id + "'");
    }
    if (!names.insert(f.name).second) throw NetworkError("duplicate facility name '" + f.name + "'");
    for (const auto& other : g.facilities_) {
      if (other.id == f.id) throw NetworkError("duplicate facility id '" + f.id + "'");
      if (other.node_id == f.node_id) {
        throw NetworkError("node '" + f.node_id + "' hosts more than one facility");
      }
    }
    g.facilities_.push_back(f);
  }
  std::sort(g.facilities_.begin(), g.facilities_.end(),
            [](const Facility& a, const Facility& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < g.facilities_.size(); ++i) {
    const Facility& f = g.facilities_[i];
    g.facility_by_name_[f.name] = i;
    g.facility_by_node_[f.node_id] = i;
    g.nodes_[g.node_ix_.at(f.node_id)].facility_id = f.id;
  }

  // Strong connectivity over road + walk links among the road nodes.
  std::vector<std::size_t> road_idx;
  for (std::size_t i = 0; i < g.nodes_.size(); ++i) {
    if (g.nodes_[i].line_id.empty()) road_idx.push_back(i);
  }
  auto reach = [&](bool reverse) {
    std::vector<char> seen_n(g.nodes_.size(), 0);
    std::vector<std::size_t> stack{road_idx.front()};
    seen_n[road_idx.front()] = 1;
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      for (const auto& l : g.links_) {
        if (l.kind != LinkKind::road && l.kind != LinkKind::walk) continue;
        std::size_t a = reverse ? l.to_index : l.from_index;
        std::size_t b = reverse ? l.from_index : l.to_index;
        if (a == u && !seen_n[b]) {
          seen_n[b] = 1;
          stack.push_back(b);
        }
      }
    }
    return std::all_of(road_idx.begin(), road_idx.end(),
                       [&](std::size_t i) { return seen_n[i] != 0; });
  };
  if (!reach(false) || !reach(true)) {
    throw NetworkError("network is not strongly connected over road and walk links");
  }
  return g;
}

NetworkGraph load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open network document '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw NetworkError("network document '" + path + "' does not parse: " + e.what());
  }
  return load_network(doc);
}

std::optional<double> traversal_cost(const NetworkGraph& g, const Link& link, TravelMode mode,
                                     const TrafficState* traffic) {
  switch (mode) {
    case TravelMode::drive:
      if (link.kind != LinkKind::road) return std::nullopt;
      return link.free_flow_time +
             (traffic ? static_cast<double>(traffic->expected_wait(g.link_index(link.id))) : 0.0);
    case TravelMode::walk:
    case TravelMode::transit:
      if (link.kind == LinkKind::road) return link.free_flow_time * g.walk_multiplier();
      if (link.kind == LinkKind::walk) return link.free_flow_time;
      if (mode == TravelMode::transit) return link.free_flow_time;
      return std::nullopt;
    case TravelMode::none:
      return std::nullopt;
  }
  return std::nullopt;
}

namespace {

struct Label {
  double cost = 0.0;
  std::vector<std::string> seq;
  bool set = false;
};

bool better(double c1, const std::vector<std::string>& s1, const Label& l2) {
  if (!l2.set) return true;
  if (c1 != l2.cost) return c1 < l2.cost;
  return s1 < l2.seq;
}

}  // namespace

Path shortest_path_nodes(const NetworkGraph& g, std::size_t from, std::size_t to,
                         TravelMode mode, const TrafficState* traffic, const RouteOptions& opts) {
  Path p;
  p.mode = mode;
  if (from == to) return p;
  if (mode == TravelMode::none) {
    throw RoutingError("unreachable destination: mode 'none' cannot travel");
  }
  const auto& nodes = g.nodes();
  std::vector<Label> best(nodes.size());
  std::vector<char> done(nodes.size(), 0);
  best[from].set = true;
  // Label-setting search ordered by (cost, link-id sequence).
  while (true) {
    std::size_t u = nodes.size();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (done[i] || !best[i].set) continue;
      if (u == nodes.size() || best[i].cost < best[u].cost ||
          (best[i].cost == best[u].cost && best[i].seq < best[u].seq)) {
        u = i;
      }
    }
    if (u == nodes.size()) break;
    done[u] = 1;
    if (u == to) break;
    for (std::size_t li : g.out_links(u)) {
      const Link& l = g.link(li);
      auto c = traversal_cost(g, l, mode, traffic);
      if (!c) continue;
      double cost = *c;
      if (auto it = opts.penalties.find(l.id); it != opts.penalties.end()) cost += it->second;
      const std::size_t v = l.to_index;
      if (done[v]) continue;
      double nc = best[u].cost + cost;
      std::vector<std::string> ns = best[u].seq;
      ns.push_back(l.id);
      if (better(nc, ns, best[v])) {
        best[v].cost = nc;
        best[v].seq = std::move(ns);
        best[v].set = true;
      }
    }
  }
  if (!best[to].set) {
    throw RoutingError("unreachable destination '" + nodes[to].id + "' from '" + nodes[from].id +
                       "' by " + to_string(mode));
  }
  p.links = best[to].seq;
  p.cost = best[to].cost;
  return p;
}

Path shortest_path(const NetworkGraph& g, std::string_view origin_facility,
                   std::string_view dest_facility, TravelMode mode, const TrafficState* traffic,
                   const RouteOptions& opts) {
  std::size_t from = g.facility_node(origin_facility);
  std::size_t to = g.facility_node(dest_facility);
  return shortest_path_nodes(g, from, to, mode, traffic, opts);
}

std::string check_path(const NetworkGraph& g, const std::vector<std::string>& links,
                       TravelMode mode, std::size_t from_node, std::size_t to_node) {
  if (links.empty()) {
    return from_node == to_node ? std::string{} : std::string("empty path between distinct nodes");
  }
  std::size_t at = from_node;
  for (const auto& id : links) {
    if (!g.has_link(id)) return "unknown link '" + id + "'";
    const Link& l = g.link(id);
    if (!traversal_cost(g, l, mode, nullptr)) {
      return "link '" + id + "' not usable by " + to_string(mode);
    }
    if (l.from_index != at) return "link '" + id + "' is not adjacent to the previous link";
    at = l.to_index;
  }
  if (at != to_node) return "path ends at '" + g.nodes()[at].id + "', not at the destination";
  return {};
}

double path_cost(const NetworkGraph& g, const std::vector<std::string>& links, TravelMode mode,
                 const TrafficState* traffic) {
  double c = 0.0;
  for (const auto& id : links) {
    auto v = traversal_cost(g, g.link(id), mode, traffic);
    if (!v) throw RoutingError("link '" + id + "' not usable by " + to_string(mode));
    c += *v;
  }
  return c;
}

}  // namespace gatsim
