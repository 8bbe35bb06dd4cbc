#include "gatsim/plan.hpp"

#include <sstream>

namespace gatsim {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n'\"[]");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\n'\"[]");
  return s.substr(b, e - b + 1);
}

// Python repr of a str: single quotes unless the text holds one.
std::string py_repr(const std::string& s) {
  const char q = (s.find('\'') != std::string::npos && s.find('"') == std::string::npos) ? '"' : '\'';
  std::string out(1, q);
  for (char c : s) {
    if (c == q || c == '\\') out += '\\';
    out += c;
  }
  out += q;
  return out;
}

}  // namespace

std::string PathSpec::to_string() const {
  switch (kind) {
    case Kind::none: return "none";
    case Kind::shortest: return "shortest";
    case Kind::explicit_links: {
      std::string s;
      for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
      return s;
    }
  }
  return "none";
}

PathSpec PathSpec::parse(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty() || s == "none") return {};
  if (s == "shortest" || s == "real-time shortest") return shortest();
  PathSpec p;
  p.kind = Kind::explicit_links;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) p.items.push_back(item);
  }
  if (p.items.empty()) return {};
  return p;
}

json entry_to_json(const PlanEntry& e) {
  return json::array({e.facility, e.departure ? json(format_hhmm(*e.departure)) : json("none"),
                      e.duration ? json(*e.duration) : json("none"), to_string(e.mode),
                      e.path.to_string(), e.description});
}

PlanEntry entry_from_json(const json& j) {
  if (!j.is_array() || j.size() != 6) throw PlanError("plan entry must have six fields: " + j.dump());
  PlanEntry e;
  try {
    e.facility = j.at(0).get<std::string>();
    const json& dep = j.at(1);
    if (dep.is_string() && dep.get<std::string>() != "none") e.departure = parse_hhmm(dep.get<std::string>());
    const json& dur = j.at(2);
    if (dur.is_number()) {
      e.duration = dur.get<int>();
    } else if (dur.is_string() && dur.get<std::string>() != "none") {
      e.duration = std::stoi(dur.get<std::string>());
    }
    e.mode = travel_mode_from_string(j.at(3).get<std::string>());
    if (j.at(4).is_array()) {
      std::vector<std::string> ids = j.at(4).get<std::vector<std::string>>();
      e.path = ids.empty() ? PathSpec{} : PathSpec::links(ids);
    } else {
      e.path = PathSpec::parse(j.at(4).get<std::string>());
    }
    e.description = j.at(5).is_string() ? j.at(5).get<std::string>() : j.at(5).dump();
  } catch (const PlanError&) {
    throw;
  } catch (const std::exception& ex) {
    throw PlanError("malformed plan entry " + j.dump() + ": " + ex.what());
  }
  if (e.duration && *e.duration < 0) throw PlanError("negative duration in " + j.dump());
  return e;
}

json plan_to_json(const ActivityPlan& p) {
  json a = json::array();
  for (const auto& e : p.entries) a.push_back(entry_to_json(e));
  return a;
}

ActivityPlan plan_from_json(const json& j) {
  if (!j.is_array()) throw PlanError("plan must be an array of entries");
  ActivityPlan p;
  for (const auto& e : j) p.entries.push_back(entry_from_json(e));
  return p;
}

std::string plan_to_text(const ActivityPlan& p) {
  std::string s = "[";
  for (std::size_t i = 0; i < p.entries.size(); ++i) {
    const auto& e = p.entries[i];
    if (i) s += ", ";
    s += "[" + py_repr(e.facility) + ", " + py_repr(e.departure ? format_hhmm(*e.departure) : "none") +
         ", " + (e.duration ? std::to_string(*e.duration) : py_repr("none")) + ", " +
         py_repr(to_string(e.mode)) + ", " + py_repr(e.path.to_string()) + ", " +
         py_repr(e.description) + "]";
  }
  return s + "]";
}

std::string to_string(RevisionDecision d) {
  switch (d) {
    case RevisionDecision::continue_plan: return "continue";
    case RevisionDecision::path_update: return "path_update";
    case RevisionDecision::departure_adjust: return "departure_adjust";
    case RevisionDecision::partial_replace: return "partial_replace";
    case RevisionDecision::full_replace: return "full_replace";
  }
  return "continue";
}

RevisionDecision revision_decision_from_string(const std::string& s) {
  if (s == "continue") return RevisionDecision::continue_plan;
  if (s == "path_update") return RevisionDecision::path_update;
  if (s == "departure_adjust") return RevisionDecision::departure_adjust;
  if (s == "partial_replace") return RevisionDecision::partial_replace;
  if (s == "full_replace") return RevisionDecision::full_replace;
  throw PlanError("unknown revision decision '" + s + "'");
}

void check_revision_payload(const PlanRevision& r) {
  const json& p = r.payload;
  auto need = [&](bool ok, const char* what) {
    if (!ok) throw PlanError(to_string(r.decision) + " payload needs " + what + ": " + p.dump());
  };
  switch (r.decision) {
    case RevisionDecision::continue_plan:
      break;
    case RevisionDecision::path_update:
      need(p.contains("path") && (p["path"].is_array() || p["path"].is_string()), "a path");
      break;
    case RevisionDecision::departure_adjust:
      need(p.contains("index") && p["index"].is_number_integer(), "an entry index");
      need(p.contains("departure") && p["departure"].is_string(), "a departure time");
      parse_hhmm(p["departure"].get<std::string>());
      break;
    case RevisionDecision::partial_replace:
      need(p.contains("from_index") && p["from_index"].is_number_integer(), "from_index");
      need(p.contains("entries") && p["entries"].is_array(), "entries");
      plan_from_json(p["entries"]);
      break;
    case RevisionDecision::full_replace:
      need(p.contains("entries") && p["entries"].is_array(), "entries");
      plan_from_json(p["entries"]);
      break;
  }
}

json revision_to_json(const PlanRevision& r) {
  return {{"at", to_iso(r.at)}, {"decision", to_string(r.decision)}, {"payload", r.payload},
          {"rationale", r.rationale}};
}

PlanRevision revision_from_json(const json& j) {
  PlanRevision r;
  r.at = parse_iso(j.at("at").get<std::string>());
  r.decision = revision_decision_from_string(j.at("decision").get<std::string>());
  r.payload = j.value("payload", json::object());
  r.rationale = j.value("rationale", std::string{});
  return r;
}

std::string revision_to_text(const PlanRevision& r) {
  std::string s = format_label(r.at) + " " + to_string(r.decision);
  if (!r.payload.empty()) s += " " + r.payload.dump();
  if (!r.rationale.empty()) s += " | " + r.rationale;
  return s;
}

}  // namespace gatsim
