#include "gatsim/control.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <regex>

#include "gatsim/gateway.hpp"
#include "gatsim/time.hpp"
#include "httplib.h"

namespace gatsim {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// ---- event grammar ---------------------------------------------------------

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string resolve_day(const std::string& word, const std::string& today) {
  const std::string w = lower(word);
  const auto base = days_from_civil(parse_date(today));
  if (w == "today") return today;
  if (w == "tomorrow") return format_date(civil_from_days(base + 1));
  static const std::vector<std::string> names{"monday", "tuesday", "wednesday", "thursday",
                                              "friday", "saturday", "sunday"};
  for (int wd = 0; wd < 7; ++wd) {
    if (w == names[wd] || w == names[wd].substr(0, 3)) {
      const int now = weekday(make_timestamp(parse_date(today)));
      return format_date(civil_from_days(base + (wd - now + 7) % 7));
    }
  }
  try {
    return format_date(parse_date(word));
  } catch (const std::exception&) {
    throw ControlError(400, "cannot read day '" + word + "' (weekday name, today, tomorrow or YYYY-MM-DD)");
  }
}

std::string resolve_link(const std::string& word, const NetworkGraph& g) {
  for (const auto& l : g.links()) {
    if (lower(l.id) == lower(word)) return l.id;
  }
  return word;  // left for check_event to reject with the list of valid ids
}

int minute(const std::string& hhmm) {
  try {
    return parse_hhmm(hhmm);
  } catch (const std::exception&) {
    throw ControlError(400, "bad time '" + hhmm + "'");
  }
}

}  // namespace

ScenarioEvent parse_event_command(const std::string& text, const NetworkGraph& g, const std::string& today) {
  static const std::regex close_re(
      R"(^\s*(?:close|shut|block)\s+(\S+)\s+(\d{1,2}:\d{2})\s*-\s*(\d{1,2}:\d{2})(?:\s+on)?\s+(\S+)\s*$)",
      std::regex::icase);
  static const std::regex reduce_re(
      R"(^\s*(?:reduce|cut|limit)\s+(\S+)\s+to\s+(\d+)\s+(\d{1,2}:\d{2})\s*-\s*(\d{1,2}:\d{2})(?:\s+on)?\s+(\S+)\s*$)",
      std::regex::icase);
  static const std::regex announce_re(R"(^\s*(?:announce|broadcast)\s+(.+?)(?:\s+on\s+(\S+))?\s*$)",
                                      std::regex::icase);
  std::smatch m;
  ScenarioEvent e;
  if (std::regex_match(text, m, close_re)) {
    e.kind = ScenarioEvent::Kind::capacity_change;
    e.target = resolve_link(m[1], g);
    e.capacity = 1;
    e.start = minute(m[2]);
    e.end = minute(m[3]);
    e.date = resolve_day(m[4], today);
  } else if (std::regex_match(text, m, reduce_re)) {
    e.kind = ScenarioEvent::Kind::capacity_change;
    e.target = resolve_link(m[1], g);
    e.capacity = std::stoi(m[2]);
    e.start = minute(m[3]);
    e.end = minute(m[4]);
    e.date = resolve_day(m[5], today);
  } else if (std::regex_match(text, m, announce_re)) {
    e.kind = ScenarioEvent::Kind::broadcast;
    e.target = "all";
    e.text = m[1];
    e.date = m[2].matched ? resolve_day(m[2], today) : today;
  } else {
    throw ControlError(400, "cannot parse '" + text +
                                "'; try 'close <link> H:MM-H:MM <day>', 'reduce <link> to <N> H:MM-H:MM <day>' "
                                "or 'announce <text> [on <day>]'");
  }
  if (e.kind == ScenarioEvent::Kind::capacity_change) e.text = text;
  try {
    check_event(g, e);
  } catch (const SimError& err) {
    throw ControlError(422, err.what());
  }
  return e;
}

SessionCommand command_from_json(const json& j) {
  static const std::map<std::string, SessionCommand::Kind> kinds{
      {"start", SessionCommand::Kind::start},         {"pause", SessionCommand::Kind::pause},
      {"resume", SessionCommand::Kind::resume},       {"set_speed", SessionCommand::Kind::set_speed},
      {"step_n", SessionCommand::Kind::step_n},       {"inject_event", SessionCommand::Kind::inject_event},
      {"interview", SessionCommand::Kind::interview}};
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw ControlError(400, "command needs a string 'kind'");
  }
  auto it = kinds.find(j["kind"].get<std::string>());
  if (it == kinds.end()) {
    throw ControlError(400, "unknown command '" + j["kind"].get<std::string>() +
                                "' (start, pause, resume, set_speed, step_n, inject_event, interview)");
  }
  SessionCommand c;
  c.kind = it->second;
  c.arguments = j.value("arguments", json::object());
  if (!c.arguments.is_object()) throw ControlError(400, "'arguments' must be an object");
  return c;
}

// ---- session ---------------------------------------------------------------

namespace {

json agent_delta(const AgentView& a) {
  return {{"id", a.id}, {"status", to_string(a.status)}, {"facility", a.facility}, {"link", a.link}, {"node", a.node}};
}

json link_delta(const LinkCongestion& c) {
  return {{"id", c.link_id},   {"occupancy", c.occupancy}, {"queue", c.queue_len},
          {"capacity", c.capacity}, {"wait", c.wait},     {"level", to_string(c.level)}};
}

ControlError translate(const SimError& e) {
  const std::string msg = e.what();
  if (msg.rfind("unknown agent", 0) == 0 || msg.rfind("unknown tick", 0) == 0) return ControlError(404, msg);
  return ControlError(422, msg);
}

json exchange_json(const InterviewExchange& ex) {
  json j{{"agent", ex.agent}, {"question", ex.question}, {"answer", ex.answer}, {"context", ex.context_digest}};
  j["persisted_node"] = ex.persisted_node ? json(*ex.persisted_node) : json(nullptr);
  return j;
}

constexpr std::size_t kDeltaBacklog = 4096;

}  // namespace

ControlSession::ControlSession(std::unique_ptr<Simulation> sim) : sim_(std::move(sim)) {
  if (!sim_) throw std::invalid_argument("control session needs a simulation");
  worker_ = std::thread([this] { worker(); });
}

ControlSession::~ControlSession() { shutdown(); }

void ControlSession::shutdown() {
  {
    std::lock_guard lk(q_mu_);
    if (stop_) return;
    stop_ = true;
  }
  q_cv_.notify_all();
  d_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
  std::lock_guard lk(q_mu_);
  for (auto& p : queue_) p.done.set_exception(std::make_exception_ptr(ControlError(503, "session stopped")));
  queue_.clear();
}

json ControlSession::network() const {
  std::shared_lock lk(sim_mu_);
  const auto& g = sim_->graph();
  json nodes = json::array(), links = json::array(), facilities = json::array();
  for (const auto& n : g.nodes()) {
    json jn{{"id", n.id}, {"x", n.x}, {"y", n.y}};
    if (n.facility_id) jn["facility"] = *n.facility_id;
    if (!n.line_id.empty()) jn["line"] = n.line_id;
    nodes.push_back(jn);
  }
  for (const auto& l : g.links()) {
    json jl{{"id", l.id}, {"kind", to_string(l.kind)}, {"from", l.from}, {"to", l.to},
            {"free_flow_time", l.free_flow_time}, {"capacity", l.capacity}};
    if (!l.line_id.empty()) jl["line"] = l.line_id;
    links.push_back(jl);
  }
  for (const auto& f : g.facilities()) facilities.push_back({{"id", f.id}, {"name", f.name}, {"node", f.node_id}});
  return {{"nodes", nodes}, {"links", links}, {"facilities", facilities}, {"road_links", g.road_link_ids()}};
}

json ControlSession::state(std::optional<Timestamp> at) const {
  std::shared_lock lk(sim_mu_);
  try {
    json j = sim_->get_state(at).to_json();
    j["running"] = running();
    j["speed"] = speed();
    j["finished"] = sim_->finished();
    j["seq"] = latest_seq();
    return j;
  } catch (const SimError& e) {
    throw translate(e);
  }
}

json ControlSession::agent(const std::string& id) const {
  std::shared_lock lk(sim_mu_);
  try {
    const auto& m = sim_->mind(id);
    const auto& r = sim_->runtime(id);
    return {{"id", id},
            {"profile", profile_to_json(m.profile)},
            {"runtime", runtime_to_json(r)},
            {"memories", m.store.to_json()},
            {"daily_reflection", m.prev_daily_reflection},
            {"longterm_reflection", m.longterm_reflection}};
  } catch (const SimError& e) {
    throw translate(e);
  }
}

std::string ControlSession::state_hash() const {
  std::shared_lock lk(sim_mu_);
  return sim_->state_hash();
}

bool ControlSession::running() const {
  std::lock_guard lk(q_mu_);
  return running_;
}

double ControlSession::speed() const {
  std::lock_guard lk(q_mu_);
  return speed_;
}

json ControlSession::submit(SessionCommand cmd) {
  std::future<json> f;
  {
    std::lock_guard lk(q_mu_);
    if (stop_) throw ControlError(503, "session stopped");
    queue_.push_back({std::move(cmd), {}});
    f = queue_.back().done.get_future();
  }
  q_cv_.notify_all();
  return f.get();
}

json ControlSession::propose(const json& body) {
  ScenarioEvent e;
  {
    std::shared_lock lk(sim_mu_);
    const std::string today = format_date(date_of(sim_->clock()));
    if (body.contains("text")) {
      if (!body["text"].is_string()) throw ControlError(400, "'text' must be a string");
      e = parse_event_command(body["text"].get<std::string>(), sim_->graph(), today);
    } else {
      try {
        e = event_from_json(body.contains("event") ? body["event"] : body);
        check_event(sim_->graph(), e);
      } catch (const SimError& err) {
        throw ControlError(422, err.what());
      } catch (const json::exception& err) {
        throw ControlError(400, std::string("bad event: ") + err.what());
      }
    }
    if (e.end_ts() <= sim_->clock()) {
      throw ControlError(422, "event window " + e.describe() + " has already passed");
    }
  }
  std::lock_guard lk(p_mu_);
  const std::string id = "p" + std::to_string(next_proposal_++);
  proposals_[id] = e;
  return {{"proposal", id}, {"event", event_to_json(e)}, {"description", e.describe()}, {"status", "proposed"}};
}

json ControlSession::confirm(const std::string& proposal_id) {
  ScenarioEvent e;
  {
    std::lock_guard lk(p_mu_);
    auto it = proposals_.find(proposal_id);
    if (it == proposals_.end()) throw ControlError(404, "no pending proposal '" + proposal_id + "'");
    e = it->second;
    proposals_.erase(it);
  }
  SessionCommand c;
  c.kind = SessionCommand::Kind::inject_event;
  c.arguments = {{"event", event_to_json(e)}, {"confirmed", true}};
  json out = submit(std::move(c));
  out["proposal"] = proposal_id;
  return out;
}

json ControlSession::proposals() const {
  std::lock_guard lk(p_mu_);
  json out = json::array();
  for (const auto& [id, e] : proposals_) {
    out.push_back({{"proposal", id}, {"event", event_to_json(e)}, {"description", e.describe()}});
  }
  return out;
}

std::vector<StateDelta> ControlSession::deltas_after(std::uint64_t after, std::chrono::milliseconds wait) const {
  std::unique_lock lk(d_mu_);
  d_cv_.wait_for(lk, wait, [&] { return seq_ > after || stop_.load(); });
  std::vector<StateDelta> out;
  for (const auto& d : deltas_) {
    if (d.seq > after) out.push_back(d);
  }
  return out;
}

std::uint64_t ControlSession::latest_seq() const {
  std::lock_guard lk(d_mu_);
  return seq_;
}

void ControlSession::worker() {
  auto next = Clock::now();
  std::unique_lock lk(q_mu_);
  for (;;) {
    if (running_) {
      q_cv_.wait_until(lk, next, [&] { return stop_ || !queue_.empty() || !running_; });
    } else {
      q_cv_.wait(lk, [&] { return stop_ || !queue_.empty() || running_; });
      next = Clock::now();
    }
    if (stop_) return;
    if (!queue_.empty()) {
      Pending p = std::move(queue_.front());
      queue_.pop_front();
      lk.unlock();
      try {
        p.done.set_value(apply(p.cmd));
      } catch (...) {
        p.done.set_exception(std::current_exception());
      }
      lk.lock();
      continue;
    }
    if (running_ && Clock::now() >= next) {
      const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / speed_));
      lk.unlock();
      bool finished = false;
      {
        std::unique_lock w(sim_mu_);
        step_once();
        finished = sim_->finished();
      }
      lk.lock();
      if (finished) running_ = false;
      // Never let a slow step turn into a burst of catch-up ticks.
      next = std::max(next + period, Clock::now() - period);
    }
  }
}

void ControlSession::step_once() {
  const StateView before = sim_->state_view();
  sim_->step();
  push_delta(before, sim_->state_view());
}

void ControlSession::push_delta(const StateView& before, const StateView& after) {
  json agents = json::array(), links = json::array();
  for (std::size_t i = 0; i < after.agents.size(); ++i) {
    const auto& a = after.agents[i];
    const bool same = i < before.agents.size() && before.agents[i].status == a.status &&
                      before.agents[i].facility == a.facility && before.agents[i].link == a.link &&
                      before.agents[i].node == a.node;
    if (!same) agents.push_back(agent_delta(a));
  }
  for (std::size_t i = 0; i < after.links.size(); ++i) {
    const auto& c = after.links[i];
    const bool same = i < before.links.size() && before.links[i].occupancy == c.occupancy &&
                      before.links[i].queue_len == c.queue_len && before.links[i].capacity == c.capacity &&
                      before.links[i].wait == c.wait;
    if (!same) links.push_back(link_delta(c));
  }
  json body{{"type", "delta"}, {"clock", to_iso(after.clock)}, {"agents", agents}, {"links", links}};
  if (before.active_events != after.active_events) body["active_events"] = after.active_events;
  if (sim_->finished()) body["finished"] = true;
  {
    std::lock_guard lk(d_mu_);
    body["seq"] = ++seq_;
    deltas_.push_back({seq_, std::move(body)});
    while (deltas_.size() > kDeltaBacklog) deltas_.pop_front();
  }
  d_cv_.notify_all();
}

json ControlSession::apply(const SessionCommand& cmd) {
  const json& a = cmd.arguments;
  using K = SessionCommand::Kind;
  switch (cmd.kind) {
    case K::start:
    case K::resume: {
      std::shared_lock r(sim_mu_);
      if (sim_->finished()) throw ControlError(409, "the run has finished");
      std::lock_guard lk(q_mu_);
      running_ = true;
      return {{"running", true}, {"clock", to_iso(sim_->clock())}};
    }
    case K::pause: {
      std::shared_lock r(sim_mu_);
      std::lock_guard lk(q_mu_);
      running_ = false;
      return {{"running", false}, {"clock", to_iso(sim_->clock())}};
    }
    case K::set_speed: {
      if (!a.contains("speed") || !a["speed"].is_number()) throw ControlError(400, "set_speed needs a numeric 'speed'");
      const double s = a["speed"].get<double>();
      if (!(s > 0)) throw ControlError(400, "speed must be positive");
      std::lock_guard lk(q_mu_);
      speed_ = s;
      return {{"speed", s}};
    }
    case K::step_n: {
      const json n_j = a.value("n", json(1));
      if (!n_j.is_number_integer() || n_j.get<long long>() < 1) throw ControlError(400, "step_n needs n >= 1");
      const long long n = n_j.get<long long>();
      std::unique_lock w(sim_mu_);
      if (sim_->finished()) throw ControlError(409, "the run has finished");
      long long done = 0;
      while (done < n && !sim_->finished()) {
        step_once();
        ++done;
      }
      return {{"stepped", done}, {"clock", to_iso(sim_->clock())}, {"finished", sim_->finished()}};
    }
    case K::inject_event: {
      // Unconfirmed payloads become proposals; only confirm() activates.
      if (!a.value("confirmed", false)) return propose(a);
      std::unique_lock w(sim_mu_);
      ScenarioEvent e = event_from_json(a.at("event"));
      try {
        sim_->add_event(e);
      } catch (const SimError& err) {
        throw ControlError(422, err.what());
      }
      const auto& added = sim_->scenario().back();
      return {{"event", event_to_json(added)}, {"status", "confirmed"}, {"description", added.describe()}};
    }
    case K::interview: {
      if (!a.contains("agent") || !a["agent"].is_string()) throw ControlError(400, "interview needs 'agent'");
      if (!a.contains("question") || !a["question"].is_string()) throw ControlError(400, "interview needs 'question'");
      std::unique_lock w(sim_mu_);
      try {
        return exchange_json(sim_->interview(a["agent"].get<std::string>(), a["question"].get<std::string>(),
                                             a.value("persist", false)));
      } catch (const SimError& e) {
        throw translate(e);
      } catch (const GatewayError& e) {
        throw ControlError(502, e.what());
      }
    }
  }
  throw ControlError(400, "unhandled command");
}

// ---- request routing -------------------------------------------------------

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path.substr(0, path.find('?'))) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw ControlError(400, "request body is not valid JSON");
  return j;
}

std::optional<Timestamp> parse_at(const std::map<std::string, std::string>& query) {
  auto it = query.find("at");
  if (it == query.end() || it->second.empty()) return std::nullopt;
  try {
    return parse_iso(it->second);
  } catch (const std::exception&) {
    throw ControlError(400, "bad 'at' (expected YYYY-MM-DDTHH:MM:SS)");
  }
}

}  // namespace

HttpReply handle_request(ControlSession& s, const std::string& method, const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& query) {
  const auto p = split_path(path);
  auto expect = [&](const char* m) {
    if (method != m) throw ControlError(405, "method " + method + " not allowed on " + path);
  };
  try {
    if (p.size() == 1 && p[0] == "network") {
      expect("GET");
      return {200, s.network()};
    }
    if (p.size() == 1 && p[0] == "state") {
      expect("GET");
      return {200, s.state(parse_at(query))};
    }
    if (p.size() == 1 && p[0] == "hash") {
      expect("GET");
      return {200, {{"hash", s.state_hash()}}};
    }
    if (p.size() == 2 && p[0] == "agents") {
      expect("GET");
      return {200, s.agent(p[1])};
    }
    if (p.size() == 3 && p[0] == "agents" && p[2] == "interview") {
      expect("POST");
      json b = parse_body(body);
      SessionCommand c;
      c.kind = SessionCommand::Kind::interview;
      c.arguments = {{"agent", p[1]}, {"question", b.value("question", json(nullptr))},
                     {"persist", b.value("persist", false)}};
      return {200, s.submit(std::move(c))};
    }
    if (p.size() == 1 && p[0] == "command") {
      expect("POST");
      return {200, s.submit(command_from_json(parse_body(body)))};
    }
    if (p.size() == 1 && p[0] == "events") {
      expect("GET");
      return {200, {{"proposals", s.proposals()}}};
    }
    if (p.size() == 2 && p[0] == "events" && p[1] == "propose") {
      expect("POST");
      return {200, s.propose(parse_body(body))};
    }
    if (p.size() == 3 && p[0] == "events" && p[2] == "confirm") {
      expect("POST");
      return {200, s.confirm(p[1])};
    }
    throw ControlError(404, "no route " + method + " " + path);
  } catch (const ControlError& e) {
    return {e.status, {{"error", e.what()}}};
  } catch (const std::exception& e) {
    return {500, {{"error", e.what()}}};
  }
}

// ---- HTTP transport --------------------------------------------------------

struct ControlServer::Impl {
  ControlSession& session;
  httplib::Server server;
  explicit Impl(ControlSession& s) : session(s) {}
};

ControlServer::ControlServer(ControlSession& s) : impl_(std::make_unique<Impl>(s)) {
  auto& srv = impl_->server;
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query(req.params.begin(), req.params.end());
    const HttpReply r = handle_request(impl_->session, req.method, req.path, req.body, query);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  };
  srv.Get("/stream", [this](const httplib::Request& req, httplib::Response& res) {
    const bool ndjson = req.get_param_value("format") == "ndjson";
    std::uint64_t after = impl_->session.latest_seq();
    const bool resume = req.has_param("after");
    if (resume) after = std::stoull(req.get_param_value("after"));
    auto first = std::make_shared<bool>(!resume);
    auto last = std::make_shared<std::uint64_t>(after);
    auto frame = [ndjson](const json& j) {
      return ndjson ? j.dump() + "\n" : "data: " + j.dump() + "\n\n";
    };
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(ndjson ? "application/x-ndjson" : "text/event-stream",
                                     [this, first, last, frame](std::size_t, httplib::DataSink& sink) {
                                       if (*first) {
                                         *first = false;
                                         json snap = impl_->session.state();
                                         snap["type"] = "snapshot";
                                         const std::string f = frame(snap);
                                         return sink.write(f.data(), f.size());
                                       }
                                       const auto ds = impl_->session.deltas_after(*last, std::chrono::seconds(1));
                                       if (ds.empty()) {
                                         // Keeps the connection alive and lets a closed client be noticed.
                                         const std::string ping = "\n";
                                         return sink.write(ping.data(), ping.size());
                                       }
                                       for (const auto& d : ds) {
                                         const std::string f = frame(d.body);
                                         if (!sink.write(f.data(), f.size())) return false;
                                         *last = d.seq;
                                       }
                                       return true;
                                     });
  });
  srv.Get(R"(/.*)", route);
  srv.Post(R"(/.*)", route);
  srv.Put(R"(/.*)", route);
  srv.Delete(R"(/.*)", route);
}

ControlServer::~ControlServer() { stop(); }

int ControlServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw ControlError(500, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ControlServer::listen() { impl_->server.listen_after_bind(); }

void ControlServer::stop() { impl_->server.stop(); }

}  // namespace gatsim
