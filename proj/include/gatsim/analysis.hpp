#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gatsim/network.hpp"
#include "gatsim/simulation.hpp"

namespace gatsim {

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A finished (or checkpointed) run as the reports see it: trip log, link
/// states and the calendar it covers.
struct RunData {
  std::shared_ptr<const NetworkGraph> graph;
  std::vector<TripRecord> trips;
  LinkHistory history;
  std::vector<std::string> dates;

  /// Reads trips.csv, link_states.csv and run.json from an output directory.
  static RunData load(const std::string& dir);
  static RunData from_simulation(const Simulation& sim);
};

// ---- snapshots -------------------------------------------------------------

enum class SnapshotForm { csv, png };

struct SnapshotRequest {
  std::vector<std::string> dates;  // empty: every day of the run
  std::vector<std::string> times;  // "HH:MM"
  SnapshotForm form = SnapshotForm::csv;
  std::string out_dir;
};

struct LinkState {
  std::string link;
  CongestionLevel level = CongestionLevel::free;
  int occupancy = 0;
  int queue = 0;
  int capacity = 0;
  int wait = 0;
};

/// Every road link at one tick.
std::vector<LinkState> link_states_at(const RunData& run, Timestamp t);
/// One file per (date, time); returns the paths written.
std::vector<std::string> snapshot_export(const RunData& run, const SnapshotRequest& req);

/// RGB raster of the network with links coloured by level.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;
};
Image render_levels(const NetworkGraph& g, const std::vector<LinkState>& states, int width = 720, int height = 540);
std::vector<unsigned char> encode_png(const Image& img);

// ---- flows -----------------------------------------------------------------

struct FlowReport {
  std::string link;
  std::string date;
  int entries = 0;  // travellers entering the link, any mode
  int volume = 0;   // vehicles entering the link
};

FlowReport link_flow_report(const RunData& run, const std::string& link_id, const std::string& date);

// ---- day-to-day comparison -------------------------------------------------

struct DayMetric {
  std::string date;
  std::optional<double> value;  // empty: undefined that day (no work trips, no peak)
};

/// mean_arrival_delay: mean minutes late over each commuter's first work
/// arrival (early counts as 0). punctual_count: first work arrivals at or
/// before the start time. peak_onset: first minute with at least
/// `peak_share` of road links non-free.
std::vector<DayMetric> compare_days(const RunData& run, const std::string& metric, double peak_share = 0.25);

// ---- evaluation statistics -------------------------------------------------

struct EvalCounts {
  int wins_a = 0;
  int wins_b = 0;
  int ties = 0;
  int total() const { return wins_a + wins_b + ties; }
};

enum class TieHandling { drop, favor_a, split };

struct EvalOptions {
  double prior_a = 1.0;
  double prior_b = 1.0;
  TieHandling ties = TieHandling::drop;
  double decisive_rate = 2.0 / 3.0;
};

struct EvalStats {
  double sign_test_p = 1.0;          // P(X >= wins_a | wins_a + wins_b, 1/2)
  double decisive_binomial_p = 1.0;  // P(X >= wins_a + wins_b | total, decisive_rate)
  double all_trials_binomial_p = 1.0;  // P(X >= wins_a | total, 1/3)
  double posterior_prob_at_least_half = 0.0;
  double posterior_alpha = 0.0;
  double posterior_beta = 0.0;
};

/// P(X >= k) for X ~ Binomial(n, p).
double binomial_upper_tail(int k, int n, double p);
EvalStats eval_stats(const EvalCounts& c, const EvalOptions& opts = {});
TieHandling tie_handling_from_string(const std::string& s);

}  // namespace gatsim
