#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace gatsim {

class TrafficState;

struct NetworkError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RoutingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LinkKind { road, walk, transit, boarding, alighting };
enum class TravelMode { drive, transit, walk, none };

std::string to_string(LinkKind k);
LinkKind link_kind_from_string(std::string_view s);
std::string to_string(TravelMode m);
TravelMode travel_mode_from_string(std::string_view s);

struct Node {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  std::optional<std::string> facility_id;
  /// Set on generated transit-line platform nodes.
  std::string line_id;
};

struct Link {
  std::string id;
  LinkKind kind = LinkKind::road;
  std::string from;
  std::string to;
  double free_flow_time = 1.0;  // minutes
  int capacity = 0;             // 0 = unbounded; road links carry >= 1
  std::string line_id;
  std::size_t from_index = 0;
  std::size_t to_index = 0;
};

struct Facility {
  std::string id;
  std::string name;
  std::string node_id;
  std::optional<int> capacity;
};

struct TransitLine {
  std::string id;
  double headway = 10.0;
  std::vector<std::string> links;
  std::vector<std::string> return_links;
};

/// Multimodal graph. Transit lines are expanded on load: each served station
/// gets a platform node per direction, joined to the road node by generated
/// boarding and alighting links.
class NetworkGraph {
 public:
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Facility>& facilities() const { return facilities_; }
  const std::vector<TransitLine>& transit_lines() const { return lines_; }

  std::size_t node_index(std::string_view id) const;
  std::size_t link_index(std::string_view id) const;
  bool has_node(std::string_view id) const;
  bool has_link(std::string_view id) const;
  const Node& node(std::string_view id) const { return nodes_[node_index(id)]; }
  const Link& link(std::string_view id) const { return links_[link_index(id)]; }
  const Link& link(std::size_t i) const { return links_.at(i); }

  const Facility& facility_by_name(std::string_view name) const;
  const Facility* find_facility(std::string_view name) const;
  const Facility& facility_at_node(std::string_view node_id) const;
  std::size_t facility_node(std::string_view name) const {
    return node_index(facility_by_name(name).node_id);
  }

  /// Outgoing link indices of a node, sorted by link id.
  const std::vector<std::size_t>& out_links(std::size_t node) const { return out_.at(node); }

  std::vector<std::string> road_link_ids() const;
  double walk_multiplier() const { return walk_multiplier_; }
  double alight_time() const { return alight_time_; }

  /// The original document (pre-expansion), kept for export and checkpoints.
  const nlohmann::json& document() const { return document_; }

  friend NetworkGraph load_network(const nlohmann::json& doc);

 private:
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<Facility> facilities_;
  std::vector<TransitLine> lines_;
  std::vector<std::vector<std::size_t>> out_;
  std::unordered_map<std::string, std::size_t> node_ix_;
  std::unordered_map<std::string, std::size_t> link_ix_;
  std::unordered_map<std::string, std::size_t> facility_by_name_;
  std::unordered_map<std::string, std::size_t> facility_by_node_;
  double walk_multiplier_ = 4.0;
  double alight_time_ = 1.0;
  nlohmann::json document_;
};

NetworkGraph load_network(const nlohmann::json& doc);
NetworkGraph load_network_file(const std::string& path);

struct Path {
  std::vector<std::string> links;
  TravelMode mode = TravelMode::none;
  double cost = 0.0;

  friend bool operator==(const Path&, const Path&) = default;
};

/// Cost of traversing `link` under `mode`, or nullopt when the mode may not use it.
/// Drive uses road links only; transit and walk use road links on foot at the
/// walk multiplier; transit additionally rides boarding/transit/alighting links.
std::optional<double> traversal_cost(const NetworkGraph& g, const Link& link, TravelMode mode,
                                     const TrafficState* traffic = nullptr);

struct RouteOptions {
  /// Extra minutes added to a link's cost (e.g. learned avoidance).
  std::map<std::string, double> penalties;
};

/// Minimum-cost path between two facilities. Ties are broken by the
/// lexicographically smallest link-id sequence.
Path shortest_path(const NetworkGraph& g, std::string_view origin_facility,
                   std::string_view dest_facility, TravelMode mode,
                   const TrafficState* traffic = nullptr, const RouteOptions& opts = {});

Path shortest_path_nodes(const NetworkGraph& g, std::size_t from_node, std::size_t to_node,
                         TravelMode mode, const TrafficState* traffic = nullptr,
                         const RouteOptions& opts = {});

/// Checks adjacency, endpoints and per-mode link eligibility. Returns an empty
/// string when valid, otherwise the reason.
std::string check_path(const NetworkGraph& g, const std::vector<std::string>& links,
                       TravelMode mode, std::size_t from_node, std::size_t to_node);

double path_cost(const NetworkGraph& g, const std::vector<std::string>& links, TravelMode mode,
                 const TrafficState* traffic = nullptr);

}  // namespace gatsim
