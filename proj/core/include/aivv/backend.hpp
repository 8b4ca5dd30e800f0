#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aivv/agent_types.hpp"
#include "aivv/event_log.hpp"

namespace aivv {

// Connection settings for an OpenAI-compatible chat-completions endpoint.
// The API key is read from the environment variable named by api_key_env at
// call time; it is never stored in configuration or logs.
struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::string chat_path = "/v1/chat/completions";
  std::map<AgentRole, std::string> models;  // filled from default_role_models()
  std::string api_key_env = "AIVV_API_KEY";
  double temperature = 0.0;
  int max_tokens = 1024;
  int max_retries = 2;      // connection/server-error retries per request
  int backoff_ms = 200;     // doubled after each retry
  int timeout_sec = 30;

  HttpBackendConfig();
  const std::string& model_for(AgentRole role) const;
};

std::map<AgentRole, std::string> default_role_models();

void to_json(nlohmann::json& j, const HttpBackendConfig& c);
void from_json(const nlohmann::json& j, HttpBackendConfig& c);

// Recovers a JSON object from a chat completion that may wrap it in markdown
// fences or prose. Throws std::runtime_error when no parseable object exists.
nlohmann::json extract_json_object(const std::string& text);

// Per-role prompt rendering. The system prompt carries the role charter and
// the shared formatting rules; the user prompt carries the context payload.
std::string render_system_prompt(AgentRole role);
std::string render_user_prompt(AgentRole role, const AgentContext& ctx,
                               const AgentVote* re_vote, const AgentVote* fm_vote);
std::string render_inspector_user_prompt(const AgentContext& ctx,
                                         const std::array<AgentVote, 3>& votes);
std::string render_tuner_user_prompt(
    double error, const std::vector<std::pair<double, double>>& alpha_grid);

// One chat call per agent invocation, with retries on transport errors, one
// format-reminder re-prompt on malformed content, and full request/response
// logging (the Authorization header is redacted).
class HttpAgentBackend {
 public:
  explicit HttpAgentBackend(HttpBackendConfig cfg, EventLog* traffic_log = nullptr);

  // Returns the parsed JSON object from the completion, or std::nullopt after
  // retries and the re-prompt are exhausted (error_out explains why).
  std::optional<nlohmann::json> complete_json(AgentRole role, int sample_id,
                                              const std::string& system_prompt,
                                              const std::string& user_prompt,
                                              std::string* error_out = nullptr);

  const HttpBackendConfig& config() const { return cfg_; }
  int requests_sent() const { return requests_sent_; }

 private:
  std::optional<std::string> post_chat(AgentRole role, int sample_id,
                                       const nlohmann::json& body,
                                       std::string* error_out);
  void log_event(AgentRole role, int sample_id, bool outbound,
                 nlohmann::json payload);

  HttpBackendConfig cfg_;
  EventLog* traffic_log_ = nullptr;
  int requests_sent_ = 0;
};

}  // namespace aivv
