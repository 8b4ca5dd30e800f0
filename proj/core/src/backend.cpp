#include "aivv/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include <httplib.h>

namespace aivv {

namespace {

constexpr const char* kFormattingBlock =
    "Formatting requirements:\n"
    "- Respond ONLY with a single valid, raw JSON object. Do NOT include "
    "introductory text, concluding remarks, or markdown code blocks (no ```json "
    "fences).\n"
    "- Do not output reasoning outside the JSON structure.\n"
    "- The confidence and alpha fields must be numeric decimals (floats).\n";

constexpr const char* kReprompt =
    "Your previous reply was not a single valid JSON object. Respond again with "
    "ONLY the JSON object for the same request - no prose, no markdown fences.";

}  // namespace

HttpBackendConfig::HttpBackendConfig() : models(default_role_models()) {}

const std::string& HttpBackendConfig::model_for(AgentRole role) const {
  const auto it = models.find(role);
  if (it == models.end()) {
    throw std::invalid_argument("HttpBackendConfig: no model configured for role " +
                                to_string(role));
  }
  return it->second;
}

std::map<AgentRole, std::string> default_role_models() {
  return {{AgentRole::ReqEng, "meta-llama/llama-4-scout-17b-16e-instruct"},
          {AgentRole::FailMgr, "openai/gpt-oss-120b"},
          {AgentRole::SysEng, "llama-3.3-70b-versatile"},
          {AgentRole::Inspector, "qwen/qwen3-32b"},
          {AgentRole::Tuner, "openai/gpt-oss-20b"}};
}

void to_json(nlohmann::json& j, const HttpBackendConfig& c) {
  nlohmann::json models = nlohmann::json::object();
  for (const auto& [role, model] : c.models) models[to_string(role)] = model;
  j = nlohmann::json{{"base_url", c.base_url},
                     {"chat_path", c.chat_path},
                     {"models", models},
                     {"api_key_env", c.api_key_env},
                     {"temperature", c.temperature},
                     {"max_tokens", c.max_tokens},
                     {"max_retries", c.max_retries},
                     {"backoff_ms", c.backoff_ms},
                     {"timeout_sec", c.timeout_sec}};
}

void from_json(const nlohmann::json& j, HttpBackendConfig& c) {
  c = HttpBackendConfig{};
  c.base_url = j.value("base_url", c.base_url);
  c.chat_path = j.value("chat_path", c.chat_path);
  if (j.contains("models")) {
    for (const auto& [key, value] : j.at("models").items()) {
      c.models[agent_role_from_string(key)] = value.get<std::string>();
    }
  }
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  c.timeout_sec = j.value("timeout_sec", c.timeout_sec);
}

nlohmann::json extract_json_object(const std::string& text) {
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char ch = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (ch == '\\') {
          escaped = true;
        } else if (ch == '"') {
          in_string = false;
        }
        continue;
      }
      if (ch == '"') {
        in_string = true;
      } else if (ch == '{') {
        ++depth;
      } else if (ch == '}') {
        if (--depth == 0) {
          try {
            return nlohmann::json::parse(text.substr(start, i - start + 1));
          } catch (const nlohmann::json::parse_error&) {
            break;  // try the next candidate start
          }
        }
      }
    }
  }
  throw std::runtime_error("extract_json_object: no JSON object found in completion");
}

std::string render_system_prompt(AgentRole role) {
  std::string s;
  switch (role) {
    case AgentRole::ReqEng:
      s = "You are the Requirements Engineer agent on a verification and validation "
          "council for an autonomous underwater vehicle heading controller. Role: "
          "system validation in NORMAL MODE. Core question: even assuming a "
          "potential fault exists, does the system's current behavior violate any "
          "operational requirement?\n"
          "Responsibilities:\n"
          "1. Normal operation: verify the yaw value stays within [-180, 180] "
          "degrees and the per-step change stays within [-10, 10] degrees.\n"
          "2. Operational limits: ensure behavior stays within the training "
          "envelope given in training_bounds.\n"
          "3. Masking risk: vote FAIL whenever bound_multiplier > 2.0.\n"
          "Voting logic:\n"
          "- FAIL is the default when requirements are violated or predicted "
          "values shift more than noise levels.\n"
          "- PASS when the predicted value is in the per-step range despite the "
          "true value being outside bounds.\n"
          "JSON schema: {\"vote\": \"PASS\"|\"FAIL\", \"confidence\": float, "
          "\"requirement_section\": string, \"reasoning\": string, "
          "\"veto_reason\": string|null}\n";
      break;
    case AgentRole::FailMgr:
      s = "You are the Failure Manager agent on a verification and validation "
          "council for an autonomous underwater vehicle heading controller. Role: "
          "system validation in FAILURE MODE. Core question: given that a fault "
          "may be present, is the system's response within failure management "
          "requirements?\n"
          "Responsibilities:\n"
          "1. Failure effect: does the maximum deviation exceed "
          "max_failure_effect?\n"
          "2. Recovery/damping: is frame_values converging or diverging?\n"
          "3. Baseline context: compare the current deviation against "
          "frame_baseline_summary.\n"
          "Voting logic:\n"
          "- FAIL: true data is outside bounds with a significant gradient change, "
          "OR predicted data is significantly outside training bounds.\n"
          "- PASS: true data is outside bounds but predicted data is different; "
          "the failure is contained and the system is recovering.\n"
          "JSON schema: {\"vote\": \"PASS\"|\"FAIL\", \"risk_level\": "
          "\"LOW\"|\"MEDIUM\"|\"HIGH\", \"confidence\": float, "
          "\"failure_management_assessment\": string, \"reasoning\": string}\n";
      break;
    case AgentRole::SysEng:
      s = "You are the System Engineer agent, an autopilot gain-tuning expert with "
          "domain knowledge of the vehicle's first-order heading dynamics, its PID "
          "controller, and the monitoring layer (Monte Carlo dropout uncertainty "
          "and conformal bounds).\n"
          "Voting logic: use the failure manager findings as the primary signal. "
          "FAIL on high uncertainty combined with a large error, or on a poor "
          "model prediction. PASS when a sudden maneuver causes drifting "
          "uncertainty.\n"
          "Gain-tuning protocol: propose adjusted parameters ONLY if the failure "
          "manager or the requirements engineer voted FAIL.\n"
          "- Stale response / high uncertainty: increase Kp and Td.\n"
          "- Low-frequency oscillation: decrease Kp, increase Ti.\n"
          "- Divergence: decrease Td, increase Ti.\n"
          "JSON schema: {\"vote\": \"PASS\"|\"FAIL\", \"risk_level\": "
          "\"LOW\"|\"MEDIUM\"|\"HIGH\", \"confidence\": float, "
          "\"technical_assessment\": string, \"reasoning\": string, "
          "\"tuning_proposal\": {\"Kp\": float, \"Ti\": float, \"Td\": float, "
          "\"Reference_Max_Velocity\": float}|null, \"tuning_reasoning\": string}\n";
      break;
    case AgentRole::Inspector:
      s = "You are the Inspector agent: you translate the council's verdicts into "
          "one discrete adaptation action for the monitoring model.\n"
          "Actions:\n"
          "1. RECALIBRATE: for transient noise (set new_alpha).\n"
          "2. FINE_TUNE: for persistent drift (set epochs and learning_rate).\n"
          "3. TRY_BOTH: for mixed evidence (set all three).\n"
          "Constraints: new_alpha in [0.01, 0.10], epochs in [50, 200], "
          "learning_rate in [1e-5, 1e-3].\n"
          "JSON schema: {\"majority_decision\": \"PASS\"|\"FAIL\", \"pass_votes\": "
          "int, \"fail_votes\": int, \"action\": "
          "\"RECALIBRATE\"|\"FINE_TUNE\"|\"TRY_BOTH\", \"new_alpha\": float|null, "
          "\"epochs\": int|null, \"learning_rate\": float|null, \"reasoning\": "
          "string}\n";
      break;
    case AgentRole::Tuner:
      s = "You are the Tuner agent: a conformal prediction analyst. Given the "
          "candidate model's error and the conformal bound at each significance "
          "level on the 0.01..0.10 grid, recommend the operating alpha based on "
          "whether the new error passes the bounds at the 90-99% confidence "
          "levels. Prefer the largest alpha whose bound still covers the error.\n"
          "JSON schema: {\"recommended_alpha\": float, \"reasoning\": string, "
          "\"would_pass_at_recommended\": bool, \"confidence\": float}\n";
      break;
  }
  s += '\n';
  s += kFormattingBlock;
  return s;
}

std::string render_user_prompt(AgentRole role, const AgentContext& ctx,
                               const AgentVote* re_vote, const AgentVote* fm_vote) {
  nlohmann::json j;
  j["context"] = ctx;
  if (role == AgentRole::SysEng) {
    nlohmann::json peers = nlohmann::json::object();
    if (re_vote) peers["requirements_engineer"] = *re_vote;
    if (fm_vote) peers["failure_manager_findings"] = *fm_vote;
    j["peer_findings"] = peers;
  }
  return "Evaluate the flagged sample described below and vote.\n" + j.dump(2);
}

std::string render_inspector_user_prompt(const AgentContext& ctx,
                                         const std::array<AgentVote, 3>& votes) {
  nlohmann::json j;
  j["context"] = ctx;
  nlohmann::json arr = nlohmann::json::array();
  for (const AgentVote& v : votes) arr.push_back(v);
  j["council_votes"] = arr;
  return "Choose the adaptation action for this flagged sample.\n" + j.dump(2);
}

std::string render_tuner_user_prompt(
    double error, const std::vector<std::pair<double, double>>& alpha_grid) {
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& [alpha, bound] : alpha_grid) {
    grid.push_back({{"alpha", alpha}, {"bound", bound}});
  }
  nlohmann::json j{{"new_error", error}, {"alpha_grid", grid}};
  return "Recommend the operating alpha for the candidate model.\n" + j.dump(2);
}

HttpAgentBackend::HttpAgentBackend(HttpBackendConfig cfg, EventLog* traffic_log)
    : cfg_(std::move(cfg)), traffic_log_(traffic_log) {}

void HttpAgentBackend::log_event(AgentRole role, int sample_id, bool outbound,
                                 nlohmann::json payload) {
  if (!traffic_log_) return;
  Envelope env;
  env.sample_id = sample_id;
  env.from_agent = outbound ? to_string(role) : "llm";
  env.to_agent = outbound ? "llm" : to_string(role);
  env.payload = std::move(payload);
  traffic_log_->append(std::move(env));
}

std::optional<std::string> HttpAgentBackend::post_chat(AgentRole role, int sample_id,
                                                       const nlohmann::json& body,
                                                       std::string* error_out) {
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  httplib::Headers headers;
  if (key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  std::string last_error = "no attempts made";
  int backoff = cfg_.backoff_ms;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    httplib::Client client(cfg_.base_url);
    client.set_connection_timeout(cfg_.timeout_sec, 0);
    client.set_read_timeout(cfg_.timeout_sec, 0);
    ++requests_sent_;
    log_event(role, sample_id, true,
              {{"request", body},
               {"attempt", attempt},
               {"authorization", key != nullptr ? "Bearer ***redacted***" : "none"}});
    auto res = client.Post(cfg_.chat_path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      log_event(role, sample_id, false, {{"error", last_error}, {"attempt", attempt}});
      continue;
    }
    log_event(role, sample_id, false,
              {{"status", res->status}, {"body", res->body}, {"attempt", attempt}});
    if (res->status == 200) {
      try {
        const nlohmann::json reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const std::exception& ex) {
        last_error = std::string("unparseable completion envelope: ") + ex.what();
        continue;
      }
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "server error: HTTP " + std::to_string(res->status);
      continue;
    }
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
    break;  // other 4xx will not improve with retries
  }
  if (error_out) *error_out = last_error;
  return std::nullopt;
}

std::optional<nlohmann::json> HttpAgentBackend::complete_json(
    AgentRole role, int sample_id, const std::string& system_prompt,
    const std::string& user_prompt, std::string* error_out) {
  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "system"}, {"content", system_prompt}});
  messages.push_back({{"role", "user"}, {"content", user_prompt}});
  for (int pass = 0; pass < 2; ++pass) {
    const nlohmann::json body{{"model", cfg_.model_for(role)},
                              {"temperature", cfg_.temperature},
                              {"max_tokens", cfg_.max_tokens},
                              {"messages", messages}};
    const auto content = post_chat(role, sample_id, body, error_out);
    if (!content) return std::nullopt;
    try {
      return extract_json_object(*content);
    } catch (const std::exception& ex) {
      if (pass == 0) {
        // One format-reminder re-prompt before giving up on this call.
        messages.push_back({{"role", "assistant"}, {"content", *content}});
        messages.push_back({{"role", "user"}, {"content", kReprompt}});
        continue;
      }
      if (error_out) *error_out = ex.what();
    }
  }
  return std::nullopt;
}

}  // namespace aivv
