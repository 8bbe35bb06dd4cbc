#include "gatsim/analysis.hpp"

#include <zlib.h>

#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gatsim/time.hpp"

namespace gatsim {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- run data --------------------------------------------------------------

RunData RunData::load(const std::string& dir) {
  const fs::path d(dir);
  if (!fs::exists(d / "run.json")) throw AnalysisError("missing run: no run.json in " + dir);
  std::ifstream in(d / "run.json");
  json meta = json::parse(in, nullptr, false);
  if (meta.is_discarded()) throw AnalysisError("run.json is not valid JSON in " + dir);
  RunData r;
  try {
    r.graph = std::make_shared<NetworkGraph>(load_network_file(meta.at("network").get<std::string>()));
    const SimConfig cfg = SimConfig::from_json(meta.at("config"));
    r.trips = read_trips_csv((d / "trips.csv").string());
    r.history = LinkHistory::read_csv((d / "link_states.csv").string(), *r.graph, parse_iso(meta.at("start").get<std::string>()),
                                      parse_iso(meta.at("end").get<std::string>()));
    for (auto day = days_from_civil(parse_date(cfg.start_date)); day <= days_from_civil(parse_date(cfg.end_date)); ++day) {
      r.dates.push_back(format_date(civil_from_days(day)));
    }
  } catch (const AnalysisError&) {
    throw;
  } catch (const std::exception& e) {
    throw AnalysisError("cannot read run in " + dir + ": " + e.what());
  }
  return r;
}

RunData RunData::from_simulation(const Simulation& sim) {
  RunData r;
  r.graph = std::make_shared<NetworkGraph>(sim.graph());
  r.trips = sim.trips();
  r.history = sim.history();
  const auto& cfg = sim.config();
  for (auto day = days_from_civil(parse_date(cfg.start_date)); day <= days_from_civil(parse_date(cfg.end_date)); ++day) {
    r.dates.push_back(format_date(civil_from_days(day)));
  }
  return r;
}

// ---- snapshots -------------------------------------------------------------

std::vector<LinkState> link_states_at(const RunData& run, Timestamp t) {
  if (!run.history.covers(t)) throw AnalysisError("no link states recorded for " + to_iso(t));
  const auto row = run.history.at(t);
  std::vector<LinkState> out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const auto& s = row[i];
    out.push_back({run.history.links[i], level_for_wait(s.wait), s.occupancy, s.queue, s.capacity, s.wait});
  }
  return out;
}

namespace {

struct Rgb {
  unsigned char r, g, b;
};

Rgb level_color(CongestionLevel l) {
  switch (l) {
    case CongestionLevel::free: return {46, 160, 67};
    case CongestionLevel::light: return {235, 200, 30};
    case CongestionLevel::moderate: return {245, 130, 30};
    case CongestionLevel::severe: return {215, 40, 40};
  }
  return {0, 0, 0};
}

void put(Image& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  auto* p = &img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3];
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

void line(Image& img, double x0, double y0, double x1, double y1, int thick, Rgb c) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(len * 2));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const int cx = static_cast<int>(std::lround(x0 + (x1 - x0) * t));
    const int cy = static_cast<int>(std::lround(y0 + (y1 - y0) * t));
    for (int dy = -thick / 2; dy <= thick / 2; ++dy) {
      for (int dx = -thick / 2; dx <= thick / 2; ++dx) put(img, cx + dx, cy + dy, c);
    }
  }
}

void be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& data) {
  be32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  be32(out, static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size()))));
}

}  // namespace

Image render_levels(const NetworkGraph& g, const std::vector<LinkState>& states, int width, int height) {
  Image img{width, height, std::vector<unsigned char>(static_cast<std::size_t>(width) * height * 3, 255)};
  double minx = 1e18, maxx = -1e18, miny = 1e18, maxy = -1e18;
  for (const auto& l : g.links()) {
    if (l.kind != LinkKind::road) continue;
    for (const Node* n : {&g.nodes()[l.from_index], &g.nodes()[l.to_index]}) {
      minx = std::min(minx, n->x);
      maxx = std::max(maxx, n->x);
      miny = std::min(miny, n->y);
      maxy = std::max(maxy, n->y);
    }
  }
  const double margin = 40;
  const double sx = (width - 2 * margin) / std::max(1e-9, maxx - minx);
  const double sy = (height - 2 * margin) / std::max(1e-9, maxy - miny);
  const double s = std::min(sx, sy);
  auto px = [&](const Node& n) { return margin + (n.x - minx) * s; };
  auto py = [&](const Node& n) { return height - margin - (n.y - miny) * s; };
  std::map<std::string, CongestionLevel> level;
  for (const auto& st : states) level[st.link] = st.level;
  for (const auto& l : g.links()) {
    if (l.kind != LinkKind::road) continue;
    const Node& a = g.nodes()[l.from_index];
    const Node& b = g.nodes()[l.to_index];
    double x0 = px(a), y0 = py(a), x1 = px(b), y1 = py(b);
    // Opposite directions sit side by side, each shifted to its right.
    const double len = std::max(1e-9, std::hypot(x1 - x0, y1 - y0));
    const double ox = -(y1 - y0) / len * 4, oy = (x1 - x0) / len * 4;
    auto it = level.find(l.id);
    const Rgb c = it == level.end() ? Rgb{160, 160, 160} : level_color(it->second);
    line(img, x0 - ox, y0 - oy, x1 - ox, y1 - oy, 5, c);
  }
  for (const auto& n : g.nodes()) {
    if (!n.line_id.empty()) continue;
    line(img, px(n), py(n), px(n), py(n), 11, Rgb{40, 40, 40});
  }
  return img;
}

std::vector<unsigned char> encode_png(const Image& img) {
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (img.width * 3 + 1));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const auto* row = &img.rgb[static_cast<std::size_t>(y) * img.width * 3];
    raw.insert(raw.end(), row, row + img.width * 3);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(len);
  if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw AnalysisError("png compression failed");
  }
  z.resize(len);
  std::vector<unsigned char> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  be32(ihdr, static_cast<std::uint32_t>(img.width));
  be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

std::vector<std::string> snapshot_export(const RunData& run, const SnapshotRequest& req) {
  if (req.times.empty()) throw AnalysisError("no snapshot times requested");
  std::vector<int> minutes;
  for (const auto& t : req.times) {
    int m = 0;
    try {
      m = parse_hhmm(t);
    } catch (const std::exception&) {
      throw AnalysisError("bad time '" + t + "' (expected HH:MM)");
    }
    if (m < 0 || m >= 1440) throw AnalysisError("time " + t + " is outside the day (00:00-23:59)");
    minutes.push_back(m);
  }
  const auto dates = req.dates.empty() ? run.dates : req.dates;
  for (const auto& d : dates) {
    if (std::find(run.dates.begin(), run.dates.end(), d) == run.dates.end()) {
      throw AnalysisError("date " + d + " is not part of the run");
    }
  }
  fs::create_directories(req.out_dir.empty() ? "." : req.out_dir);
  std::vector<std::string> written;
  for (const auto& d : dates) {
    for (std::size_t k = 0; k < minutes.size(); ++k) {
      const Timestamp t = make_timestamp(parse_date(d), minutes[k]);
      const auto states = link_states_at(run, t);
      std::string hhmm = format_hhmm(minutes[k]);
      hhmm.erase(std::remove(hhmm.begin(), hhmm.end(), ':'), hhmm.end());
      const fs::path base = fs::path(req.out_dir.empty() ? "." : req.out_dir) / ("snapshot_" + d + "_" + hhmm);
      if (req.form == SnapshotForm::csv) {
        const std::string path = base.string() + ".csv";
        std::ofstream out(path);
        if (!out) throw AnalysisError("cannot write " + path);
        out << "link,level,occupancy,queue,capacity,wait\n";
        for (const auto& s : states) {
          out << s.link << "," << to_string(s.level) << "," << s.occupancy << "," << s.queue << "," << s.capacity
              << "," << s.wait << "\n";
        }
        written.push_back(path);
      } else {
        const std::string path = base.string() + ".png";
        const auto png = encode_png(render_levels(*run.graph, states));
        std::ofstream out(path, std::ios::binary);
        if (!out) throw AnalysisError("cannot write " + path);
        out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
        written.push_back(path);
      }
    }
  }
  return written;
}

// ---- flows -----------------------------------------------------------------

FlowReport link_flow_report(const RunData& run, const std::string& link_id, const std::string& date) {
  if (!run.graph->has_link(link_id)) {
    std::string valid;
    for (const auto& id : run.graph->road_link_ids()) valid += (valid.empty() ? "" : ", ") + id;
    throw AnalysisError("unknown link '" + link_id + "'; valid road links: " + valid);
  }
  FlowReport r{link_id, date, 0, 0};
  for (const auto& t : run.trips) {
    if (format_date(date_of(t.depart)) != date) continue;
    const auto n = static_cast<int>(std::count(t.links.begin(), t.links.end(), link_id));
    r.entries += n;
    if (t.mode == TravelMode::drive) r.volume += n;
  }
  return r;
}

// ---- comparison ------------------------------------------------------------

std::vector<DayMetric> compare_days(const RunData& run, const std::string& metric, double peak_share) {
  std::vector<DayMetric> out;
  if (metric == "mean_arrival_delay" || metric == "punctual_count") {
    // First work arrival per agent and day.
    std::map<std::string, std::map<std::string, int>> first;
    for (const auto& t : run.trips) {
      if (t.purpose != "work" || !t.late || !t.arrive) continue;
      const std::string d = format_date(date_of(t.depart));
      first[d].try_emplace(t.agent, *t.late);
    }
    for (const auto& d : run.dates) {
      DayMetric m{d, std::nullopt};
      auto it = first.find(d);
      if (metric == "punctual_count") {
        int n = 0;
        if (it != first.end()) {
          for (const auto& [a, late] : it->second) n += late <= 0;
        }
        m.value = n;
      } else if (it != first.end() && !it->second.empty()) {
        double sum = 0;
        for (const auto& [a, late] : it->second) sum += std::max(0, late);
        m.value = sum / static_cast<double>(it->second.size());
      }
      out.push_back(m);
    }
    return out;
  }
  if (metric == "peak_onset") {
    if (peak_share <= 0 || peak_share > 1) throw AnalysisError("peak share must lie in (0, 1]");
    const double need = peak_share * static_cast<double>(run.history.links.size());
    for (const auto& d : run.dates) {
      DayMetric m{d, std::nullopt};
      const Timestamp day = make_timestamp(parse_date(d));
      for (auto it = run.history.ticks.lower_bound(day); it != run.history.ticks.end() && it->first < day + 1440; ++it) {
        int busy = 0;
        for (const auto& s : it->second) busy += s.wait > 0;
        if (busy >= need - 1e-9) {
          m.value = minute_of_day(it->first);
          break;
        }
      }
      out.push_back(m);
    }
    return out;
  }
  throw AnalysisError("unknown metric '" + metric + "' (mean_arrival_delay, punctual_count, peak_onset)");
}

// ---- statistics ------------------------------------------------------------

double binomial_upper_tail(int k, int n, double p) {
  if (n < 0 || p < 0 || p > 1) throw AnalysisError("bad binomial parameters");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  boost::math::binomial_distribution<double> dist(n, p);
  return boost::math::cdf(boost::math::complement(dist, k - 1));
}

TieHandling tie_handling_from_string(const std::string& s) {
  if (s == "drop") return TieHandling::drop;
  if (s == "favor_a") return TieHandling::favor_a;
  if (s == "split") return TieHandling::split;
  throw AnalysisError("unknown tie handling '" + s + "' (drop, favor_a, split)");
}

EvalStats eval_stats(const EvalCounts& c, const EvalOptions& o) {
  if (c.wins_a < 0 || c.wins_b < 0 || c.ties < 0) throw AnalysisError("counts must be nonnegative");
  if (c.total() == 0) throw AnalysisError("no outcomes");
  const int decisive = c.wins_a + c.wins_b;
  if (decisive == 0) throw AnalysisError("no decisive outcomes");
  if (o.prior_a <= 0 || o.prior_b <= 0) throw AnalysisError("beta prior parameters must be positive");
  EvalStats s;
  s.sign_test_p = binomial_upper_tail(c.wins_a, decisive, 0.5);
  s.decisive_binomial_p = binomial_upper_tail(decisive, c.total(), o.decisive_rate);
  s.all_trials_binomial_p = binomial_upper_tail(c.wins_a, c.total(), 1.0 / 3.0);
  double a = o.prior_a + c.wins_a, b = o.prior_b + c.wins_b;
  if (o.ties == TieHandling::favor_a) a += c.ties;
  if (o.ties == TieHandling::split) {
    a += c.ties / 2.0;
    b += c.ties / 2.0;
  }
  s.posterior_alpha = a;
  s.posterior_beta = b;
  s.posterior_prob_at_least_half = boost::math::ibetac(a, b, 0.5);
  return s;
}

}  // namespace gatsim
