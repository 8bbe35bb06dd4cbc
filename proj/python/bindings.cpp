// Python module: thin wrappers; structured values cross as JSON text.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gatsim/analysis.hpp"
#include "gatsim/memory.hpp"
#include "gatsim/network.hpp"
#include "gatsim/simulation.hpp"
#include "gatsim/time.hpp"

namespace py = pybind11;
using namespace gatsim;
using nlohmann::json;

namespace {

std::unique_ptr<Simulation> make_sim(const std::string& config_json, const std::string& base_dir) {
  return std::make_unique<Simulation>(SimConfig::from_json(json::parse(config_json), base_dir));
}

std::string trips_json(const Simulation& s) {
  json out = json::array();
  for (const auto& t : s.trips()) out.push_back(trip_to_json(t));
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "gatsim core";
  m.attr("DATA_DIR") = GATSIM_DATA_DIR;

  py::register_exception<SimError>(m, "SimError", PyExc_ValueError);
  py::register_exception<AnalysisError>(m, "AnalysisError", PyExc_ValueError);
  py::register_exception<RoutingError>(m, "RoutingError", PyExc_ValueError);
  py::register_exception<NetworkError>(m, "NetworkError", PyExc_ValueError);

  py::class_<Simulation>(m, "Simulation")
      .def(py::init(&make_sim), py::arg("config_json"), py::arg("base_dir") = ".")
      .def_static(
          "restore", [](const std::string& cp) { return Simulation::restore(json::parse(cp)); }, py::arg("checkpoint_json"))
      .def(
          "step",
          [](Simulation& s, int n) {
            py::gil_scoped_release nogil;
            for (int i = 0; i < n && !s.finished(); ++i) s.step();
          },
          py::arg("n") = 1)
      .def("run",
           [](Simulation& s) {
             py::gil_scoped_release nogil;
             s.run();
           })
      .def("run_until",
           [](Simulation& s, const std::string& iso) {
             const Timestamp t = parse_iso(iso);
             py::gil_scoped_release nogil;
             s.run_until(t);
           })
      .def_property_readonly("clock", [](const Simulation& s) { return to_iso(s.clock()); })
      .def_property_readonly("finished", &Simulation::finished)
      .def("state_json", [](const Simulation& s) { return s.state_view().to_json().dump(); })
      .def("state_hash", &Simulation::state_hash)
      .def("checkpoint_json", [](const Simulation& s) { return s.checkpoint().dump(); })
      .def("trips_json", &trips_json)
      .def("write_logs", &Simulation::write_logs, py::arg("dir"))
      .def("add_event_json", [](Simulation& s, const std::string& e) { s.add_event(event_from_json(json::parse(e))); })
      .def("interview_json", [](Simulation& s, const std::string& agent, const std::string& q, bool persist) {
        const auto ex = s.interview(agent, q, persist);
        json j{{"agent", ex.agent}, {"question", ex.question}, {"answer", ex.answer}, {"context", ex.context_digest}};
        j["persisted_node"] = ex.persisted_node ? json(*ex.persisted_node) : json(nullptr);
        return j.dump();
      });

  m.def("binomial_upper_tail", &binomial_upper_tail, py::arg("k"), py::arg("n"), py::arg("p"));
  m.def(
      "eval_stats_json",
      [](int a, int b, int t, double prior_a, double prior_b, const std::string& ties, double decisive_rate) {
        EvalOptions o;
        o.prior_a = prior_a;
        o.prior_b = prior_b;
        o.ties = tie_handling_from_string(ties);
        o.decisive_rate = decisive_rate;
        const auto s = eval_stats({a, b, t}, o);
        return json{{"sign_test_p", s.sign_test_p},
                    {"decisive_binomial_p", s.decisive_binomial_p},
                    {"all_trials_binomial_p", s.all_trials_binomial_p},
                    {"posterior_prob_at_least_half", s.posterior_prob_at_least_half},
                    {"posterior_alpha", s.posterior_alpha},
                    {"posterior_beta", s.posterior_beta}}
            .dump();
      },
      py::arg("wins_a"), py::arg("wins_b"), py::arg("ties"), py::arg("prior_a") = 1.0, py::arg("prior_b") = 1.0,
      py::arg("tie_handling") = "drop", py::arg("decisive_rate") = 2.0 / 3.0);

  m.def("compare_days", [](const std::string& run_dir, const std::string& metric, double share) {
    std::vector<std::pair<std::string, std::optional<double>>> out;
    for (const auto& d : compare_days(RunData::load(run_dir), metric, share)) out.emplace_back(d.date, d.value);
    return out;
  }, py::arg("run_dir"), py::arg("metric"), py::arg("peak_share") = 0.25);
  m.def("link_flow", [](const std::string& run_dir, const std::string& link, const std::string& date) {
    const auto r = link_flow_report(RunData::load(run_dir), link, date);
    return std::make_pair(r.entries, r.volume);
  }, py::arg("run_dir"), py::arg("link"), py::arg("date"));
  m.def("snapshot_export", [](const std::string& run_dir, const std::vector<std::string>& times,
                              const std::vector<std::string>& dates, const std::string& form, const std::string& out_dir) {
    SnapshotRequest req;
    req.times = times;
    req.dates = dates;
    if (form != "csv" && form != "png") throw AnalysisError("form must be csv or png");
    req.form = form == "png" ? SnapshotForm::png : SnapshotForm::csv;
    req.out_dir = out_dir;
    return snapshot_export(RunData::load(run_dir), req);
  }, py::arg("run_dir"), py::arg("times"), py::arg("dates") = std::vector<std::string>{}, py::arg("form") = "csv",
        py::arg("out_dir") = "");

  m.def("score_keyword", &score_keyword, py::arg("query"), py::arg("memory"));
  m.def("score_semantic", &score_semantic, py::arg("query"), py::arg("memory"));
  m.def("recency", [](double days, double lambda) {
    ConceptNode n;
    return recency(static_cast<Timestamp>(std::llround(days * 1440)), n, lambda);
  }, py::arg("days"), py::arg("decay"));
  m.def("assign_lifespan", [](const std::string& kind, double importance) {
    return assign_lifespan(concept_kind_from_string(kind), importance);
  }, py::arg("kind"), py::arg("importance"));

  m.def("shortest_path", [](const std::string& network, const std::string& from, const std::string& to,
                            const std::string& mode) {
    const NetworkGraph g = load_network_file(network);
    const Path p = shortest_path(g, from, to, travel_mode_from_string(mode));
    return std::make_pair(p.links, p.cost);
  }, py::arg("network"), py::arg("origin"), py::arg("destination"), py::arg("mode"));
}
