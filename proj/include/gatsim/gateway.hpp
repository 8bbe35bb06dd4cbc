#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gatsim/population.hpp"
#include "json.hpp"

namespace gatsim {

enum class TaskKind {
  initial_plan,
  reaction,
  extract_path_info,
  daily_reflection,
  chat_initiate_new_day,
  chat_initiate_during_day,
  chat_response,
  chat_summary,
  importance_score,
};

enum class ModelTier { L, M, S };

std::string to_string(TaskKind t);
TaskKind task_kind_from_string(const std::string& s);
std::string to_string(ModelTier t);
const std::vector<TaskKind>& all_task_kinds();

ModelTier route(TaskKind task);

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Missing slot, unknown slot, unreadable template.
struct PromptError : GatewayError {
  using GatewayError::GatewayError;
};
struct TransportError : GatewayError {
  using GatewayError::GatewayError;
};
struct SchemaError : GatewayError {
  using GatewayError::GatewayError;
};

// ---- prompt variables ------------------------------------------------------

struct PromptVar {
  int index;  // 1-based
  const char* slot;
};

/// The 17 prompt variables in index order.
const std::array<PromptVar, 17>& prompt_vars();
const PromptVar& prompt_var(const std::string& slot);
const PromptVar& prompt_var(int index);
/// Variable indices each task's prompt must carry.
const std::vector<int>& required_vars(TaskKind task);

using VarBundle = std::map<std::string, std::string>;

class PromptTemplate {
 public:
  /// Rejects unknown slot names and bodies lacking a required slot.
  PromptTemplate(TaskKind task, std::string body);

  TaskKind task() const { return task_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& slots() const { return slots_; }

  /// Throws PromptError naming the first missing required variable.
  std::string render(const VarBundle& vars) const;

 private:
  TaskKind task_;
  std::string body_;
  std::set<std::string> slots_;
};

/// One template per task, read from <dir>/<task>.txt.
class TemplateLibrary {
 public:
  TemplateLibrary() = default;
  static TemplateLibrary load(const std::string& dir);
  static const std::string& default_dir();

  const PromptTemplate& get(TaskKind t) const;
  std::string render(TaskKind t, const VarBundle& vars) const { return get(t).render(vars); }

 private:
  std::map<TaskKind, PromptTemplate> templates_;
};

// ---- backends --------------------------------------------------------------

struct CompletionRequest {
  TaskKind task = TaskKind::importance_score;
  ModelTier tier = ModelTier::S;
  std::string system;
  std::string prompt;
  /// Structured view of the same context; the scripted backend reads this
  /// instead of the text.
  nlohmann::json features = nlohmann::json::object();
};

class CognitionBackend {
 public:
  virtual ~CognitionBackend() = default;
  virtual std::string name() const = 0;
  virtual nlohmann::json complete(const CompletionRequest& req) = 0;
};

/// Checks (and lightly normalizes) a response against the task's output
/// schema. Throws SchemaError.
void validate_response(TaskKind task, nlohmann::json& response);

/// Pulls the first JSON object or array out of free text (code fences,
/// leading prose). Returns null when none parses.
nlohmann::json extract_json(const std::string& text);

/// What the scripted backend carries from day to day. It lives as a one-line
/// trailer in the long-term reflection text:
///   [state] offset=12; avoid=Ave_2_link_2:6.5,St_1_link_2:2; pending=Supermarket
struct LearnedState {
  int offset = 0;  // minutes of extra departure margin
  std::map<std::string, double> avoid;
  std::vector<std::string> pending;

  friend bool operator==(const LearnedState&, const LearnedState&) = default;
};

LearnedState parse_learned_state(const std::string& text);
std::string format_learned_state(const LearnedState& s);

struct StubPolicy {
  nlohmann::json doc;
  std::uint64_t seed = 0;

  static StubPolicy load(const std::string& path);
  static StubPolicy load_default();
  static const std::string& default_path();
};

/// Deterministic rule-based cognition. Everything it decides is a pure
/// function of (policy, seed, request features).
class StubBackend final : public CognitionBackend {
 public:
  explicit StubBackend(StubPolicy policy);
  std::string name() const override { return "stub"; }
  nlohmann::json complete(const CompletionRequest& req) override;

  const StubPolicy& policy() const { return policy_; }
  double importance(const std::string& concept_type, const std::string& text) const;

 private:
  nlohmann::json initial_plan(const nlohmann::json& f) const;
  nlohmann::json reaction(const nlohmann::json& f) const;
  nlohmann::json daily_reflection(const nlohmann::json& f) const;
  nlohmann::json extract_path(const nlohmann::json& f) const;
  nlohmann::json chat_initiate(const nlohmann::json& f, bool new_day) const;
  nlohmann::json chat_response(const nlohmann::json& f) const;
  nlohmann::json chat_summary(const nlohmann::json& f) const;

  StubPolicy policy_;
};

struct TierEndpoint {
  std::string base_url;  // "http://host:port"
  std::string model;
};

struct RemoteConfig {
  std::map<ModelTier, TierEndpoint> tiers;
  std::string api_key;  // from the environment, never from the file
  double timeout_seconds = 60.0;
  std::string path = "/v1/chat/completions";
};

/// Chat-completion style HTTP backend: one system+user pair per task.
class RemoteBackend final : public CognitionBackend {
 public:
  explicit RemoteBackend(RemoteConfig cfg);
  std::string name() const override { return "remote"; }
  nlohmann::json complete(const CompletionRequest& req) override;

 private:
  std::string post(const CompletionRequest& req, const std::string& user_text);
  RemoteConfig cfg_;
};

// ---- gateway ---------------------------------------------------------------

struct GatewayConfig {
  std::string backend = "stub";  // stub | remote
  std::string template_dir;
  std::string policy_path;
  std::uint64_t seed = 0;
  RemoteConfig remote;
  std::size_t max_in_flight = 4;
  std::string population_file;

  /// {"backend": "stub", "templates": "...", "stub_policy": "...",
  ///  "tiers": {"L": {"url": ..., "model": ...}}, "api_key_env": "GATSIM_API_KEY", ...}
  static GatewayConfig from_json(const nlohmann::json& j);
};

class Gateway {
 public:
  Gateway(std::shared_ptr<CognitionBackend> backend, TemplateLibrary templates);
  static Gateway from_config(const GatewayConfig& cfg);
  /// Stub backend, bundled templates and policy.
  static Gateway make_stub(std::uint64_t seed = 0);

  /// Renders the task's template, routes it, calls the backend and validates.
  nlohmann::json complete(TaskKind task, const VarBundle& vars, const nlohmann::json& features);
  std::string render(TaskKind task, const VarBundle& vars) const { return templates_.render(task, vars); }

  /// importance_score task: returns a score in [0, 1].
  double score_importance(const std::string& concept_type, const std::string& description,
                          const VarBundle& context = {});

  /// Runs fn(i) for i in [0, n) with at most max_in_flight concurrent calls.
  /// Results are returned in index order.
  template <class R>
  std::vector<R> map_ordered(std::size_t n, const std::function<R(std::size_t)>& fn) const;
  void set_max_in_flight(std::size_t n) { max_in_flight_ = n == 0 ? 1 : n; }

  CognitionBackend& backend() { return *backend_; }
  const TemplateLibrary& templates() const { return templates_; }
  std::map<TaskKind, long> call_counts() const;

 private:
  std::shared_ptr<CognitionBackend> backend_;
  TemplateLibrary templates_;
  std::size_t max_in_flight_ = 1;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  std::map<TaskKind, long> calls_;
};

/// With the stub backend, loads and validates the bundled fixture; with the
/// remote backend, asks the L tier for profiles. Throws PopulationError
/// listing every failing count.
std::vector<AgentProfile> synthesize_population(const PopulationConstraints& c, Gateway& gw,
                                                const std::string& fixture_path = {});
const std::string& default_population_path();
const std::string& default_constraints_path();

template <class R>
std::vector<R> Gateway::map_ordered(std::size_t n, const std::function<R(std::size_t)>& fn) const {
  std::vector<R> out(n);
  if (max_in_flight_ <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < std::min(max_in_flight_, n); ++k) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace gatsim
