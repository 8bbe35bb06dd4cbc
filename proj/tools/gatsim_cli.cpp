// gatsim: run, resume and serve simulations; export snapshots and reports.
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "gatsim/analysis.hpp"
#include "gatsim/control.hpp"
#include "gatsim/simulation.hpp"
#include "gatsim/time.hpp"

using namespace gatsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string out_dir;
};

SimConfig build_config(const Globals& g) {
  if (g.config.empty()) throw std::runtime_error("--config is required");
  std::ifstream in(g.config);
  if (!in) throw std::runtime_error("cannot open config " + g.config);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("config " + g.config + " is not valid JSON");
  if (g.seed) j["seed"] = *g.seed;
  if (!g.backend.empty()) j["gateway"]["backend"] = g.backend;
  if (!g.out_dir.empty()) j["out_dir"] = fs::absolute(g.out_dir).string();
  return SimConfig::from_json(j, fs::absolute(g.config).parent_path().string());
}

void summary(const Simulation& sim) {
  std::cout << "clock " << to_iso(sim.clock()) << "  hash " << sim.state_hash() << "\n";
  for (const auto& d : sim.days()) {
    std::cout << d.date << "  trips " << d.trips << "  teleported " << d.teleported << "  reflections "
              << d.reflections << "\n";
  }
}

void print_metric(const std::vector<DayMetric>& series, const std::string& metric) {
  std::cout << "date," << metric << "\n";
  for (const auto& m : series) {
    std::cout << m.date << ",";
    if (!m.value) {
      // undefined that day: empty cell
    } else if (metric == "peak_onset") {
      std::cout << format_hhmm(static_cast<int>(*m.value));
    } else {
      std::cout << std::setprecision(6) << *m.value;
    }
    std::cout << "\n";
  }
}

ControlServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gatsim: generative-agent traffic simulation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--backend", g.backend, "Cognition backend")->check(CLI::IsMember({"stub", "remote"}));
  app.add_option("--out-dir", g.out_dir, "Where logs, checkpoints and exports go");

  auto* run = app.add_subcommand("run", "Simulate the configured days");

  auto* resume = app.add_subcommand("resume", "Continue from a checkpoint");
  std::string checkpoint;
  resume->add_option("checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Start the control service (paused)");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string serve_from;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--checkpoint", serve_from, "Serve a restored run instead of a fresh one")
      ->check(CLI::ExistingFile);

  auto* snapshot = app.add_subcommand("snapshot", "Export link states at given times");
  std::string run_dir;
  std::vector<std::string> times, dates;
  std::string form = "csv";
  snapshot->add_option("--run", run_dir, "Run output directory")->required();
  snapshot->add_option("--times", times, "HH:MM, one or more")->required();
  snapshot->add_option("--dates", dates, "YYYY-MM-DD (default: every day)");
  snapshot->add_option("--form", form)->check(CLI::IsMember({"csv", "png"}));

  auto* flows = app.add_subcommand("flows", "Entries and driven volume on a link per day");
  std::string link;
  flows->add_option("--run", run_dir, "Run output directory")->required();
  flows->add_option("--link", link)->required();
  flows->add_option("--dates", dates, "YYYY-MM-DD (default: every day)");

  auto* stats = app.add_subcommand("stats", "Significance figures for pairwise evaluation counts");
  EvalCounts counts;
  EvalOptions eopts;
  std::string ties_mode = "drop";
  bool as_json = false;
  stats->add_option("--wins-a", counts.wins_a)->required();
  stats->add_option("--wins-b", counts.wins_b)->required();
  stats->add_option("--ties", counts.ties);
  stats->add_option("--prior-a", eopts.prior_a);
  stats->add_option("--prior-b", eopts.prior_b);
  stats->add_option("--tie-handling", ties_mode)->check(CLI::IsMember({"drop", "favor_a", "split"}));
  stats->add_option("--decisive-rate", eopts.decisive_rate);
  stats->add_flag("--json", as_json);

  auto* compare = app.add_subcommand("compare", "A day-by-day metric series");
  std::string metric;
  double peak_share = 0.25;
  compare->add_option("--run", run_dir, "Run output directory")->required();
  compare->add_option("--metric", metric)
      ->required()
      ->check(CLI::IsMember({"mean_arrival_delay", "punctual_count", "peak_onset"}));
  compare->add_option("--peak-share", peak_share);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      Simulation sim(build_config(g));
      sim.run();
      if (!g.out_dir.empty()) sim.write_logs(g.out_dir);
      summary(sim);
    } else if (*resume) {
      auto sim = Simulation::restore_file(checkpoint);
      sim->run();
      const std::string dir = g.out_dir.empty() ? fs::path(checkpoint).parent_path().string() : g.out_dir;
      sim->write_logs(dir.empty() ? "." : dir);
      sim->save_checkpoint((fs::path(dir.empty() ? "." : dir) / "checkpoint.json").string());
      summary(*sim);
    } else if (*serve) {
      auto sim = serve_from.empty() ? std::make_unique<Simulation>(build_config(g)) : Simulation::restore_file(serve_from);
      ControlSession session(std::move(sim));
      ControlServer server(session);
      const int bound = server.bind(host, port);
      std::cout << "listening on http://" << host << ":" << bound << " (paused; POST /command {\"kind\":\"start\"})"
                << std::endl;
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      server.listen();
      g_server = nullptr;
    } else if (*snapshot) {
      SnapshotRequest req;
      req.times = times;
      req.dates = dates;
      req.form = form == "png" ? SnapshotForm::png : SnapshotForm::csv;
      req.out_dir = g.out_dir.empty() ? run_dir : g.out_dir;
      for (const auto& f : snapshot_export(RunData::load(run_dir), req)) std::cout << f << "\n";
    } else if (*flows) {
      const auto data = RunData::load(run_dir);
      std::cout << "date,link,entries,volume\n";
      for (const auto& d : dates.empty() ? data.dates : dates) {
        const auto r = link_flow_report(data, link, d);
        std::cout << r.date << "," << r.link << "," << r.entries << "," << r.volume << "\n";
      }
    } else if (*stats) {
      eopts.ties = tie_handling_from_string(ties_mode);
      const auto s = eval_stats(counts, eopts);
      if (as_json) {
        std::cout << json{{"sign_test_p", s.sign_test_p},
                          {"decisive_binomial_p", s.decisive_binomial_p},
                          {"all_trials_binomial_p", s.all_trials_binomial_p},
                          {"posterior_prob_at_least_half", s.posterior_prob_at_least_half},
                          {"posterior", {s.posterior_alpha, s.posterior_beta}}}
                         .dump(2)
                  << "\n";
      } else {
        std::cout << std::fixed << std::setprecision(4);
        std::cout << "sign test p (wins vs losses, 1/2):        " << s.sign_test_p << "\n";
        std::cout << "decisive outcomes p (vs " << eopts.decisive_rate << "):       " << s.decisive_binomial_p << "\n";
        std::cout << "wins over all trials p (vs 1/3):          " << s.all_trials_binomial_p << "\n";
        std::cout << "P(win rate >= 1/2), Beta(" << s.posterior_alpha << ", " << s.posterior_beta
                  << "): " << s.posterior_prob_at_least_half << "\n";
      }
    } else if (*compare) {
      print_metric(compare_days(RunData::load(run_dir), metric, peak_share), metric);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
