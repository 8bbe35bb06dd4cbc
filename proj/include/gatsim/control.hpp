#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "gatsim/simulation.hpp"

namespace gatsim {

struct ControlError : std::runtime_error {
  int status;
  ControlError(int status_code, const std::string& msg) : std::runtime_error(msg), status(status_code) {}
};

/// Turns an operator sentence into an event, relative to the current date.
///   close <link> H:MM-H:MM [on] <weekday|today|tomorrow|YYYY-MM-DD>
///   reduce <link> to <N> H:MM-H:MM [on] <day>
///   announce <text> [on <day>]
/// "close" leaves a single lane (capacity 1); events never drop a road to 0.
ScenarioEvent parse_event_command(const std::string& text, const NetworkGraph& g, const std::string& today);

struct SessionCommand {
  enum class Kind { start, pause, resume, set_speed, step_n, inject_event, interview };
  Kind kind = Kind::pause;
  nlohmann::json arguments = nlohmann::json::object();
};

SessionCommand command_from_json(const nlohmann::json& j);

/// One state change pushed to stream subscribers.
struct StateDelta {
  std::uint64_t seq = 0;
  nlohmann::json body;
};

/// Owns a simulation and serialises every write through one worker thread.
/// Reads take a shared lock and never touch simulation state.
class ControlSession {
 public:
  explicit ControlSession(std::unique_ptr<Simulation> sim);
  ~ControlSession();
  ControlSession(const ControlSession&) = delete;
  ControlSession& operator=(const ControlSession&) = delete;

  // Reads.
  nlohmann::json network() const;
  nlohmann::json state(std::optional<Timestamp> at = std::nullopt) const;
  nlohmann::json agent(const std::string& id) const;
  std::string state_hash() const;
  bool running() const;
  double speed() const;

  /// Queues a command and waits until the worker applied it; returns its result.
  nlohmann::json submit(SessionCommand cmd);

  /// Two-phase injection: a proposal is held here until confirmed.
  nlohmann::json propose(const nlohmann::json& body);
  nlohmann::json confirm(const std::string& proposal_id);
  nlohmann::json proposals() const;

  /// Deltas with seq > after; blocks up to `wait` for new ones.
  std::vector<StateDelta> deltas_after(std::uint64_t after, std::chrono::milliseconds wait) const;
  std::uint64_t latest_seq() const;

  void shutdown();

 private:
  struct Pending {
    SessionCommand cmd;
    std::promise<nlohmann::json> done;
  };

  void worker();
  nlohmann::json apply(const SessionCommand& cmd);
  void step_once();  // caller holds the write lock
  void push_delta(const StateView& before, const StateView& after);

  std::unique_ptr<Simulation> sim_;
  mutable std::shared_mutex sim_mu_;

  mutable std::mutex q_mu_;
  std::condition_variable q_cv_;
  std::deque<Pending> queue_;
  bool running_ = false;
  std::atomic<bool> stop_{false};
  double speed_ = 1.0;  // simulated minutes per wall-clock second

  mutable std::mutex p_mu_;
  std::map<std::string, ScenarioEvent> proposals_;
  int next_proposal_ = 1;

  mutable std::mutex d_mu_;
  mutable std::condition_variable d_cv_;
  std::deque<StateDelta> deltas_;
  std::uint64_t seq_ = 0;

  std::thread worker_;
};

/// Transport-free request handling, shared by the HTTP server and the tests.
struct HttpReply {
  int status = 200;
  nlohmann::json body;
};
HttpReply handle_request(ControlSession& s, const std::string& method, const std::string& path,
                         const std::string& body, const std::map<std::string, std::string>& query = {});

/// Serves the session over HTTP until stop() is called. Port 0 picks a free port.
class ControlServer {
 public:
  explicit ControlServer(ControlSession& s);
  ~ControlServer();
  int bind(const std::string& host, int port);
  void listen();  // blocks
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gatsim
