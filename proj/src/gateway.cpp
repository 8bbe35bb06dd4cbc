#include "gatsim/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gatsim/plan.hpp"

namespace gatsim {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 9> kTaskNames{
    "initial_plan",          "reaction",     "extract_path_info", "daily_reflection", "chat_initiate_new_day",
    "chat_initiate_during_day", "chat_response", "chat_summary",      "importance_score"};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PromptError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

std::string to_string(TaskKind t) { return kTaskNames.at(static_cast<std::size_t>(t)); }

TaskKind task_kind_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (s == kTaskNames[i]) return static_cast<TaskKind>(i);
  }
  throw GatewayError("unknown task kind '" + s + "'");
}

std::string to_string(ModelTier t) {
  switch (t) {
    case ModelTier::L: return "L";
    case ModelTier::M: return "M";
    case ModelTier::S: return "S";
  }
  return "?";
}

const std::vector<TaskKind>& all_task_kinds() {
  static const std::vector<TaskKind> all = [] {
    std::vector<TaskKind> v;
    for (std::size_t i = 0; i < kTaskNames.size(); ++i) v.push_back(static_cast<TaskKind>(i));
    return v;
  }();
  return all;
}

ModelTier route(TaskKind task) {
  switch (task) {
    case TaskKind::initial_plan: return ModelTier::L;
    case TaskKind::reaction:
    case TaskKind::daily_reflection: return ModelTier::M;
    case TaskKind::extract_path_info:
    case TaskKind::chat_initiate_new_day:
    case TaskKind::chat_initiate_during_day:
    case TaskKind::chat_response:
    case TaskKind::chat_summary:
    case TaskKind::importance_score: return ModelTier::S;
  }
  throw GatewayError("unroutable task");
}

const std::array<PromptVar, 17>& prompt_vars() {
  static const std::array<PromptVar, 17> vars{{
      {1, "simulation_description"},
      {2, "network_description"},
      {3, "person_profile"},
      {4, "current_time"},
      {5, "prev_day_plan_and_reflection"},
      {6, "prev_day_reflection"},
      {7, "today_initial_plan"},
      {8, "today_reaction_history"},
      {9, "current_activity_progress"},
      {10, "perception"},
      {11, "retrieved"},
      {12, "realtime_traffic_state"},
      {13, "ongoing_chat"},
      {14, "recent_chats"},
      {15, "concept_type"},
      {16, "concept_description"},
      {17, "path_string"},
  }};
  return vars;
}

const PromptVar& prompt_var(const std::string& slot) {
  for (const auto& v : prompt_vars()) {
    if (slot == v.slot) return v;
  }
  throw PromptError("unknown prompt variable '" + slot + "'");
}

const PromptVar& prompt_var(int index) {
  if (index < 1 || index > 17) throw PromptError("prompt variable index out of range");
  return prompt_vars()[static_cast<std::size_t>(index - 1)];
}

const std::vector<int>& required_vars(TaskKind task) {
  static const std::map<TaskKind, std::vector<int>> req{
      {TaskKind::initial_plan, {1, 2, 3, 4, 5, 6, 10, 11, 14}},
      {TaskKind::reaction, {1, 2, 3, 4, 7, 8, 9, 10, 11, 12, 14}},
      {TaskKind::extract_path_info, {17}},
      {TaskKind::daily_reflection, {1, 2, 3, 4, 7, 8}},
      {TaskKind::chat_initiate_new_day, {1, 2, 3, 4, 10, 11}},
      {TaskKind::chat_initiate_during_day, {1, 2, 3, 4, 10, 11, 12}},
      {TaskKind::chat_response, {1, 2, 3, 4, 10, 11, 12, 13}},
      {TaskKind::chat_summary, {1, 2, 3, 13}},
      {TaskKind::importance_score, {1, 2, 15, 16}},
  };
  return req.at(task);
}

// ---- templates -------------------------------------------------------------

namespace {

// Calls fn(slot_name, begin, end) for each {{slot}} marker.
template <class F>
void scan_slots(const std::string& body, F fn) {
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string::npos) {
    const std::size_t close = body.find("}}", pos + 2);
    if (close == std::string::npos) throw PromptError("unterminated slot marker");
    fn(body.substr(pos + 2, close - pos - 2), pos, close + 2);
    pos = close + 2;
  }
}

}  // namespace

PromptTemplate::PromptTemplate(TaskKind task, std::string body) : task_(task), body_(std::move(body)) {
  scan_slots(body_, [&](const std::string& name, std::size_t, std::size_t) {
    prompt_var(name);
    slots_.insert(name);
  });
  for (int i : required_vars(task_)) {
    const auto& v = prompt_var(i);
    if (!slots_.count(v.slot)) {
      throw PromptError(to_string(task_) + " template lacks required var " + std::to_string(i) + " (" +
                        v.slot + ")");
    }
  }
}

std::string PromptTemplate::render(const VarBundle& vars) const {
  for (int i : required_vars(task_)) {
    const auto& v = prompt_var(i);
    if (!vars.count(v.slot)) {
      throw PromptError("missing required var " + std::to_string(i) + " (" + v.slot + ") for " +
                        to_string(task_));
    }
  }
  std::string out;
  out.reserve(body_.size() * 2);
  std::size_t last = 0;
  scan_slots(body_, [&](const std::string& name, std::size_t b, std::size_t e) {
    out.append(body_, last, b - last);
    auto it = vars.find(name);
    if (it != vars.end()) out += it->second;
    last = e;
  });
  out.append(body_, last, std::string::npos);
  return out;
}

TemplateLibrary TemplateLibrary::load(const std::string& dir) {
  TemplateLibrary lib;
  for (TaskKind t : all_task_kinds()) {
    lib.templates_.emplace(t, PromptTemplate(t, read_file(dir + "/" + to_string(t) + ".txt")));
  }
  return lib;
}

const std::string& TemplateLibrary::default_dir() {
  static const std::string d = [] {
    const char* env = std::getenv("GATSIM_TEMPLATE_DIR");
    return std::string(env ? env : GATSIM_TEMPLATE_DIR);
  }();
  return d;
}

const PromptTemplate& TemplateLibrary::get(TaskKind t) const {
  auto it = templates_.find(t);
  if (it == templates_.end()) throw PromptError("no template for " + to_string(t));
  return it->second;
}

// ---- responses -------------------------------------------------------------

namespace {

[[noreturn]] void schema_fail(TaskKind t, const std::string& what) {
  throw SchemaError(to_string(t) + " response: " + what);
}

void need_string(TaskKind t, json& r, const char* key, bool optional = false) {
  if (!r.contains(key)) {
    if (optional) {
      r[key] = "";
      return;
    }
    schema_fail(t, std::string("missing '") + key + "'");
  }
  if (!r[key].is_string()) schema_fail(t, std::string("'") + key + "' must be a string");
}

void need_plan(TaskKind t, const json& arr, const char* what) {
  if (!arr.is_array()) schema_fail(t, std::string(what) + " must be an array");
  try {
    plan_from_json(arr);
  } catch (const std::exception& e) {
    schema_fail(t, std::string(what) + ": " + e.what());
  }
}

}  // namespace

void validate_response(TaskKind task, json& r) {
  if (!r.is_object()) schema_fail(task, "expected a JSON object");
  switch (task) {
    case TaskKind::initial_plan:
      need_string(task, r, "longterm_reflection", true);
      if (!r.contains("plan")) schema_fail(task, "missing 'plan'");
      need_plan(task, r["plan"], "plan");
      if (!r.contains("concepts")) r["concepts"] = json::array();
      if (!r["concepts"].is_array()) schema_fail(task, "'concepts' must be an array");
      break;
    case TaskKind::reaction: {
      need_string(task, r, "decision");
      need_string(task, r, "rationale", true);
      need_string(task, r, "reflection", true);
      if (!r.contains("payload") || r["payload"].is_null()) r["payload"] = json::object();
      PlanRevision rev;
      try {
        rev.decision = revision_decision_from_string(r["decision"].get<std::string>());
        rev.payload = r["payload"];
        check_revision_payload(rev);
      } catch (const std::exception& e) {
        schema_fail(task, e.what());
      }
      break;
    }
    case TaskKind::extract_path_info:
      if (!r.contains("items") || !r["items"].is_array()) schema_fail(task, "missing 'items' array");
      for (const auto& x : r["items"]) {
        if (!x.is_string()) schema_fail(task, "items must be strings");
      }
      break;
    case TaskKind::daily_reflection:
      need_string(task, r, "reflection");
      need_string(task, r, "longterm_reflection", true);
      break;
    case TaskKind::chat_initiate_new_day:
    case TaskKind::chat_initiate_during_day:
      if (!r.contains("initiate") || !r["initiate"].is_boolean()) schema_fail(task, "missing boolean 'initiate'");
      need_string(task, r, "partner", true);
      need_string(task, r, "topic", true);
      need_string(task, r, "utterance", true);
      break;
    case TaskKind::chat_response:
      need_string(task, r, "utterance");
      if (!r.contains("end")) r["end"] = false;
      if (!r["end"].is_boolean()) schema_fail(task, "'end' must be boolean");
      break;
    case TaskKind::chat_summary:
      need_string(task, r, "summary");
      if (!r.contains("agreement") || r["agreement"].is_null()) r["agreement"] = json::object();
      if (!r["agreement"].is_object()) schema_fail(task, "'agreement' must be an object");
      break;
    case TaskKind::importance_score: {
      if (!r.contains("score")) schema_fail(task, "missing 'score'");
      auto& s = r["score"];
      if (s.is_string()) {
        try {
          s = std::stod(s.get<std::string>());
        } catch (const std::exception&) {
          schema_fail(task, "score is not numeric");
        }
      }
      if (!s.is_number()) schema_fail(task, "score is not numeric");
      const double v = s.get<double>();
      if (!(v >= 0.0 && v <= 1.0)) schema_fail(task, "score outside [0, 1]");
      break;
    }
  }
}

json extract_json(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' && text[i] != '[') continue;
    const char open = text[i], close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_str = false;
    for (std::size_t k = i; k < text.size(); ++k) {
      const char c = text[k];
      if (in_str) {
        if (c == '\\') ++k;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == open) ++depth;
      else if (c == close && --depth == 0) {
        json j = json::parse(text.begin() + static_cast<std::ptrdiff_t>(i),
                             text.begin() + static_cast<std::ptrdiff_t>(k) + 1, nullptr, false);
        if (!j.is_discarded()) return j;
        break;
      }
    }
  }
  return nullptr;
}

// ---- gateway ---------------------------------------------------------------

GatewayConfig GatewayConfig::from_json(const json& j) {
  GatewayConfig c;
  c.backend = j.value("backend", "stub");
  c.template_dir = j.value("templates", "");
  c.policy_path = j.value("stub_policy", "");
  c.seed = j.value("seed", std::uint64_t{0});
  c.max_in_flight = j.value("max_in_flight", std::size_t{4});
  c.population_file = j.value("population", "");
  c.remote.timeout_seconds = j.value("timeout_seconds", 60.0);
  if (j.contains("tiers")) {
    for (const auto& [k, v] : j["tiers"].items()) {
      ModelTier t = k == "L" ? ModelTier::L : k == "M" ? ModelTier::M : k == "S" ? ModelTier::S
                                                                              : throw GatewayError("unknown tier " + k);
      c.remote.tiers[t] = {v.value("url", ""), v.value("model", "")};
    }
  }
  const std::string env = j.value("api_key_env", "GATSIM_API_KEY");
  if (const char* key = std::getenv(env.c_str())) c.remote.api_key = key;
  return c;
}

Gateway::Gateway(std::shared_ptr<CognitionBackend> backend, TemplateLibrary templates)
    : backend_(std::move(backend)), templates_(std::move(templates)) {
  if (!backend_) throw GatewayError("null backend");
}

Gateway Gateway::from_config(const GatewayConfig& cfg) {
  TemplateLibrary lib =
      TemplateLibrary::load(cfg.template_dir.empty() ? TemplateLibrary::default_dir() : cfg.template_dir);
  std::shared_ptr<CognitionBackend> be;
  if (cfg.backend == "stub") {
    StubPolicy p = cfg.policy_path.empty() ? StubPolicy::load_default() : StubPolicy::load(cfg.policy_path);
    p.seed = cfg.seed;
    be = std::make_shared<StubBackend>(std::move(p));
  } else if (cfg.backend == "remote") {
    be = std::make_shared<RemoteBackend>(cfg.remote);
  } else {
    throw GatewayError("unknown backend '" + cfg.backend + "'");
  }
  Gateway g(std::move(be), std::move(lib));
  g.set_max_in_flight(cfg.max_in_flight);
  return g;
}

Gateway Gateway::make_stub(std::uint64_t seed) {
  GatewayConfig c;
  c.seed = seed;
  return from_config(c);
}

json Gateway::complete(TaskKind task, const VarBundle& vars, const json& features) {
  CompletionRequest req;
  req.task = task;
  req.tier = route(task);
  req.system = "You are a resident of a simulated city. Answer only with the requested JSON.";
  req.prompt = templates_.render(task, vars);
  req.features = features;
  {
    std::lock_guard lk(*mu_);
    ++calls_[task];
  }
  json r = backend_->complete(req);
  validate_response(task, r);
  return r;
}

double Gateway::score_importance(const std::string& concept_type, const std::string& description,
                                 const VarBundle& context) {
  VarBundle v = context;
  v.emplace("simulation_description", "");
  v.emplace("network_description", "");
  v["concept_type"] = concept_type;
  v["concept_description"] = description;
  json r = complete(TaskKind::importance_score, v, {{"concept_type", concept_type}, {"text", description}});
  return r["score"].get<double>();
}

std::map<TaskKind, long> Gateway::call_counts() const {
  std::lock_guard lk(*mu_);
  return calls_;
}

// ---- population ------------------------------------------------------------

const std::string& default_population_path() {
  static const std::string p = std::string(GATSIM_DATA_DIR) + "/population70.json";
  return p;
}

const std::string& default_constraints_path() {
  static const std::string p = std::string(GATSIM_DATA_DIR) + "/population_constraints.json";
  return p;
}

std::vector<AgentProfile> synthesize_population(const PopulationConstraints& c, Gateway& gw,
                                                const std::string& fixture_path) {
  if (c.targets.contains("total") && c.total() == 0) return {};
  std::vector<AgentProfile> people;
  if (gw.backend().name() == "stub") {
    people = load_population_file(fixture_path.empty() ? default_population_path() : fixture_path);
  } else {
    // The population prompt is free-form; the L tier is asked directly.
    CompletionRequest req;
    req.task = TaskKind::initial_plan;
    req.tier = ModelTier::L;
    req.system = "You generate synthetic populations. Answer only with JSON.";
    req.prompt = "Generate " + std::to_string(c.total()) +
                 " resident profiles as {\"profiles\": [...]} with fields name, gender, age, family_role, "
                 "licensed_driver, work_facility, occupation, work_time, preferences_in_transportation, "
                 "innate, lifestyle, home_facility, household_income, friends, other_description, "
                 "household_id, household_vehicles. The totals must match exactly: " +
                 c.targets.dump();
    req.features = {{"raw", true}};
    json r = gw.backend().complete(req);
    people = population_from_json(r);
  }
  auto bad = check_population(people, c);
  if (!bad.empty()) {
    std::string msg = "population does not match constraints:";
    for (const auto& s : bad) msg += "\n  " + s;
    throw PopulationError(msg);
  }
  return people;
}

}  // namespace gatsim
