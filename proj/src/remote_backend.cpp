#include <regex>

#include "gatsim/gateway.hpp"
#include "httplib.h"

namespace gatsim {

using nlohmann::json;

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

std::string RemoteBackend::post(const CompletionRequest& req, const std::string& user_text) {
  auto it = cfg_.tiers.find(req.tier);
  if (it == cfg_.tiers.end() || it->second.base_url.empty()) {
    throw TransportError(to_string(req.task) + ": no endpoint configured for tier " + to_string(req.tier));
  }
  httplib::Client cli(it->second.base_url);
  const auto sec = static_cast<time_t>(cfg_.timeout_seconds);
  const auto usec = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(sec)) * 1e6);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
  json body{{"model", it->second.model},
            {"temperature", 0},
            {"messages", json::array({{{"role", "system"}, {"content", req.system}},
                                      {{"role", "user"}, {"content", user_text}}})}};
  auto res = cli.Post(cfg_.path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError(to_string(req.task) + ": request failed (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw TransportError(to_string(req.task) + ": HTTP " + std::to_string(res->status));
  }
  json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw TransportError(to_string(req.task) + ": reply is not JSON");
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw TransportError(to_string(req.task) + ": reply lacks choices[0].message.content");
  }
}

namespace {

// Last-chance reshaping of near-miss replies.
json repair(TaskKind task, const std::string& text) {
  json j = extract_json(text);
  if (task == TaskKind::importance_score && !j.is_object()) {
    std::smatch m;
    static const std::regex num(R"((0(\.\d+)?|1(\.0+)?))");
    if (std::regex_search(text, m, num)) return json{{"score", std::stod(m[1].str())}};
  }
  if (j.is_array()) {
    if (task == TaskKind::initial_plan) return json{{"plan", j}};
    if (task == TaskKind::extract_path_info) return json{{"items", j}};
  }
  if (task == TaskKind::chat_response && j.is_null() && !text.empty()) return json{{"utterance", text}};
  return j;
}

}  // namespace

json RemoteBackend::complete(const CompletionRequest& req) {
  const bool raw = req.features.value("raw", false);
  std::string text = post(req, req.prompt);
  std::string why;
  for (int attempt = 0; attempt < 2; ++attempt) {
    json j = extract_json(text);
    if (raw && !j.is_null()) return j;
    if (!j.is_null()) {
      try {
        validate_response(req.task, j);
        return j;
      } catch (const SchemaError& e) {
        why = e.what();
      }
    } else {
      why = "no JSON found";
    }
    if (attempt == 0) {
      text = post(req, req.prompt + "\n\nYour previous reply could not be used (" + why +
                           "). Reply again with only the JSON object.");
    }
  }
  json fixed = repair(req.task, text);
  if (raw && !fixed.is_null()) return fixed;
  try {
    validate_response(req.task, fixed);
  } catch (const SchemaError& e) {
    throw SchemaError(std::string(e.what()) + " (after re-ask)");
  }
  return fixed;
}

}  // namespace gatsim
