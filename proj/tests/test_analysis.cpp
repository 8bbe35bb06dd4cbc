#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "gatsim/analysis.hpp"
#include "oracles.hpp"

using namespace gatsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Exact tail by summing the pmf term by term.
double brute_tail(int k, int n, double p) {
  long double sum = 0;
  for (int i = std::max(0, k); i <= n; ++i) {
    long double c = 1;
    for (int j = 1; j <= i; ++j) c = c * (n - i + j) / j;
    sum += c * std::pow(static_cast<long double>(p), i) * std::pow(1.0L - p, n - i);
  }
  return static_cast<double>(sum);
}

SimConfig monday(int max_agents = 0) {
  json j{{"network", oracle::fixture_path("nguyen_dupuis.json")},
         {"population", oracle::fixture_path("population70.json")},
         {"start_date", "2025-03-10"},
         {"seed", 7}};
  if (max_agents > 0) j["max_agents"] = max_agents;
  return SimConfig::from_json(j);
}

// Shared across cases: one simulated Monday of the full population.
const Simulation& monday_run() {
  static std::unique_ptr<Simulation> sim = [] {
    auto s = std::make_unique<Simulation>(monday());
    s->run();
    return s;
  }();
  return *sim;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gatsim_analysis_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

}  // namespace

TEST_CASE("binomial tail agrees with exact summation") {
  for (int n : {1, 2, 7, 20, 43, 50, 120, 200}) {
    for (double p : {0.5, 1.0 / 3.0, 2.0 / 3.0, 0.05}) {
      for (int k = 0; k <= n; k += std::max(1, n / 13)) {
        CHECK(std::abs(binomial_upper_tail(k, n, p) - brute_tail(k, n, p)) < 1e-9);
      }
    }
  }
  CHECK(binomial_upper_tail(0, 10, 0.3) == 1.0);
  CHECK(binomial_upper_tail(11, 10, 0.3) == 0.0);
  CHECK_THROWS_AS(binomial_upper_tail(1, 10, 1.5), AnalysisError);
}

TEST_CASE("evaluation statistics on known counts") {
  SUBCASE("23 wins, 20 losses, 7 ties") {
    const auto s = eval_stats({23, 20, 7});
    CHECK(s.sign_test_p == doctest::Approx(0.380).epsilon(0.002));
    CHECK(std::abs(s.sign_test_p - brute_tail(23, 43, 0.5)) < 1e-12);
    CHECK(std::abs(s.decisive_binomial_p - brute_tail(43, 50, 2.0 / 3.0)) < 1e-12);
    CHECK(s.decisive_binomial_p < 0.01);
    CHECK(std::abs(s.all_trials_binomial_p - brute_tail(23, 50, 1.0 / 3.0)) < 1e-12);
    CHECK(s.posterior_alpha == 24);
    CHECK(s.posterior_beta == 21);
  }
  SUBCASE("a clean sweep") {
    const auto s = eval_stats({43, 0, 0});
    CHECK(s.sign_test_p == doctest::Approx(std::ldexp(1.0, -43)).epsilon(1e-9));
  }
  SUBCASE("tie handling moves the posterior") {
    EvalOptions o;
    o.ties = TieHandling::favor_a;
    const auto fav = eval_stats({23, 20, 7}, o);
    CHECK(fav.posterior_alpha == 31);
    CHECK(fav.posterior_beta == 21);
    CHECK(fav.posterior_prob_at_least_half == doctest::Approx(0.92).epsilon(0.01));
    o.ties = TieHandling::split;
    const auto split = eval_stats({23, 20, 7}, o);
    CHECK(split.posterior_alpha == 27.5);
    CHECK(split.posterior_beta == 24.5);
    const auto drop = eval_stats({23, 20, 7});
    CHECK(drop.posterior_prob_at_least_half < fav.posterior_prob_at_least_half);
    // Beta(a, a) puts exactly half its mass above one half.
    CHECK(eval_stats({5, 5, 0}).posterior_prob_at_least_half == doctest::Approx(0.5));
  }
  SUBCASE("rejections") {
    CHECK_THROWS_WITH_AS(eval_stats({0, 0, 4}), "no decisive outcomes", AnalysisError);
    CHECK_THROWS_AS(eval_stats({0, 0, 0}), AnalysisError);
    CHECK_THROWS_AS(eval_stats({-1, 3, 0}), AnalysisError);
    CHECK_THROWS_AS(tie_handling_from_string("coin"), AnalysisError);
    CHECK(tie_handling_from_string("favor_a") == TieHandling::favor_a);
  }
}

TEST_CASE("a lone traveller never waits") {
  auto cfg = monday(1);
  Simulation sim(cfg);
  sim.run();
  const auto run = RunData::from_simulation(sim);
  for (const auto& t : run.trips) CHECK(t.delay == 0);
  for (const auto& [ts, row] : run.history.ticks) {
    for (const auto& s : row) CHECK(s.wait == 0);
  }
  const auto onset = compare_days(run, "peak_onset");
  REQUIRE(onset.size() == 1);
  CHECK_FALSE(onset[0].value.has_value());
}

TEST_CASE("the Monday rush shows up in link states") {
  const auto run = RunData::from_simulation(monday_run());
  const auto states = link_states_at(run, make_timestamp(parse_date("2025-03-10"), 7 * 60 + 30));
  CHECK(states.size() == run.graph->road_link_ids().size());
  const bool congested = std::any_of(states.begin(), states.end(), [](const LinkState& s) {
    return s.level != CongestionLevel::free;
  });
  CHECK(congested);
  for (const auto& s : states) CHECK(s.level == level_for_wait(s.wait));
  const auto early = link_states_at(run, make_timestamp(parse_date("2025-03-10"), 3 * 60));
  for (const auto& s : early) CHECK(s.level == CongestionLevel::free);
  CHECK_THROWS_AS(link_states_at(run, make_timestamp(parse_date("2025-03-12"), 0)), AnalysisError);
}

TEST_CASE("link flows are conserved") {
  const auto& sim = monday_run();
  const auto run = RunData::from_simulation(sim);
  const auto& flows = sim.flows().at("2025-03-10");
  int total_entries = 0, total_volume = 0;
  for (const auto& id : run.graph->road_link_ids()) {
    const auto r = link_flow_report(run, id, "2025-03-10");
    CHECK(r.entries == flows[run.graph->link_index(id)]);
    CHECK(r.volume <= r.entries);
    total_entries += r.entries;
    total_volume += r.volume;
  }
  int road_steps = 0, driven_steps = 0;
  for (const auto& t : run.trips) {
    for (const auto& l : t.links) {
      if (run.graph->link(run.graph->link_index(l)).kind != LinkKind::road) continue;
      ++road_steps;
      driven_steps += t.mode == TravelMode::drive;
    }
  }
  CHECK(total_entries == road_steps);
  CHECK(total_volume == driven_steps);
  CHECK(total_volume > 0);
  CHECK_THROWS_WITH_AS(link_flow_report(run, "Nowhere_link", "2025-03-10"),
                       doctest::Contains("valid road links"), AnalysisError);
}

TEST_CASE("day metrics follow their definitions") {
  const auto run = RunData::from_simulation(monday_run());
  // Recompute from the raw trip log.
  std::map<std::string, int> first;
  for (const auto& t : run.trips) {
    if (t.purpose == "work" && t.late && t.arrive) first.try_emplace(t.agent, *t.late);
  }
  REQUIRE_FALSE(first.empty());
  double sum = 0;
  int punctual = 0;
  for (const auto& [a, late] : first) {
    sum += std::max(0, late);
    punctual += late <= 0;
  }
  const auto delay = compare_days(run, "mean_arrival_delay");
  REQUIRE(delay.size() == 1);
  CHECK(*delay[0].value == doctest::Approx(sum / first.size()));
  CHECK(*compare_days(run, "punctual_count")[0].value == punctual);
  const auto onset = compare_days(run, "peak_onset");
  REQUIRE(onset[0].value.has_value());
  const int m = static_cast<int>(*onset[0].value);
  const Timestamp day = make_timestamp(parse_date("2025-03-10"));
  auto busy_share = [&](int minute) {
    const auto row = run.history.at(day + minute);
    const auto n = std::count_if(row.begin(), row.end(), [](const auto& s) { return s.wait > 0; });
    return static_cast<double>(n) / static_cast<double>(row.size());
  };
  CHECK(busy_share(m) >= 0.25);
  for (int k = 0; k < m; ++k) CHECK(busy_share(k) < 0.25);
  CHECK_THROWS_AS(compare_days(run, "happiness"), AnalysisError);
  CHECK_THROWS_AS(compare_days(run, "peak_onset", 0.0), AnalysisError);
}

TEST_CASE("snapshots on disk") {
  const auto& sim = monday_run();
  const auto dir = scratch("snap");
  sim.write_logs((dir / "run").string());
  const auto loaded = RunData::load((dir / "run").string());
  const auto live = RunData::from_simulation(sim);
  CHECK(loaded.trips == live.trips);
  CHECK(loaded.dates == live.dates);
  CHECK(loaded.history.ticks == live.history.ticks);

  SnapshotRequest req;
  req.times = {"07:30", "12:00"};
  req.out_dir = (dir / "csv").string();
  const auto files = snapshot_export(loaded, req);
  REQUIRE(files.size() == 2);
  {
    std::ifstream in(files[0]);
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "link,level,occupancy,queue,capacity,wait");
    int rows = 0;
    while (std::getline(in, row)) rows += !row.empty();
    CHECK(rows == static_cast<int>(loaded.graph->road_link_ids().size()));
  }

  req.form = SnapshotForm::png;
  req.times = {"07:30"};
  req.out_dir = (dir / "png").string();
  const auto pngs = snapshot_export(loaded, req);
  REQUIRE(pngs.size() == 1);
  std::ifstream in(pngs[0], std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(b.size() > 33);
  CHECK(std::equal(b.begin(), b.begin() + 8, std::vector<unsigned char>{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'}.begin()));
  CHECK(be32(b, 16) == 720);
  CHECK(be32(b, 20) == 540);
  // Walk the chunks, check every CRC and inflate the image data.
  std::size_t at = 8;
  std::vector<unsigned char> idat;
  bool ended = false;
  while (at + 12 <= b.size()) {
    const auto len = be32(b, at);
    const std::string type(b.begin() + at + 4, b.begin() + at + 8);
    const auto crc = crc32(0L, &b[at + 4], len + 4);
    CHECK(crc == be32(b, at + 8 + len));
    if (type == "IDAT") idat.insert(idat.end(), b.begin() + at + 8, b.begin() + at + 8 + len);
    if (type == "IEND") ended = true;
    at += 12 + len;
  }
  CHECK(ended);
  uLongf raw_len = 540 * (720 * 3 + 1);
  std::vector<unsigned char> raw(raw_len);
  REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) == Z_OK);
  CHECK(raw_len == 540 * (720 * 3 + 1));

  req.times = {"25:00"};
  CHECK_THROWS_AS(snapshot_export(loaded, req), AnalysisError);
  req.times = {"07:30"};
  req.dates = {"2025-04-01"};
  CHECK_THROWS_AS(snapshot_export(loaded, req), AnalysisError);
  CHECK_THROWS_AS(RunData::load((dir / "missing").string()), AnalysisError);
}

TEST_CASE("rendering colours links by level") {
  const auto run = RunData::from_simulation(monday_run());
  auto states = link_states_at(run, make_timestamp(parse_date("2025-03-10"), 3 * 60));
  const Image calm = render_levels(*run.graph, states, 200, 150);
  CHECK(calm.rgb.size() == 200u * 150u * 3u);
  auto count_red = [](const Image& img) {
    int n = 0;
    for (std::size_t i = 0; i < img.rgb.size(); i += 3) n += img.rgb[i] == 215 && img.rgb[i + 1] == 40;
    return n;
  };
  CHECK(count_red(calm) == 0);
  for (auto& s : states) s.level = CongestionLevel::severe;
  CHECK(count_red(render_levels(*run.graph, states, 200, 150)) > 0);
}
