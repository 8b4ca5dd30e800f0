#include <doctest.h>

// agents.hpp transitively includes Eigen, which must be seen before httplib.h
// (via scripted_server.hpp): httplib pulls in <resolv.h>, whose _res macro
// mangles Eigen declarations.
#include "aivv/agents.hpp"
#include "aivv/backend.hpp"
#include "aivv/event_log.hpp"

#include "scripted_server.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <regex>
#include <string>
#include <vector>

using namespace aivv;
using aivv_test::completion;
using aivv_test::fast_config;
using aivv_test::Scripted;
using aivv_test::TestServer;

namespace {

AgentContext council_ctx() {
  AgentContext c;
  c.sample_id = 42;
  c.residual = 0.8;
  c.bound = 1.0;
  c.uncertainty = 0.1;
  c.tau = 0.3;
  c.prediction = 0.2;
  c.true_value = 0.1;
  c.frame_values = {0.1, -0.2, 0.3, 0.0, 0.1, -0.1, 0.2, 0.1, 0.0, 0.1};
  c.setpoint_frame = std::vector<double>(10, 0.0);
  c.input_window = c.frame_values;
  c.frame_baseline_summary = {2.0, 4.0, 12};
  c.max_failure_effect = 8.0;
  c.alpha = 0.05;
  c.recent_breach_count = 1;
  return c;
}

AgentVote peer_vote(AgentRole role, Vote vote, RiskLevel risk) {
  AgentVote v;
  v.agent = role;
  v.vote = vote;
  v.confidence = 0.9;
  v.reasoning = "peer";
  v.risk_level = risk;
  if (role == AgentRole::ReqEng) v.requirement_section = "Normal Operation";
  if (role == AgentRole::FailMgr) v.failure_management_assessment = "peer";
  return v;
}

const char* kReqEngContent =
    R"({"vote": "PASS", "confidence": 0.92, "reasoning": "all within limits",)"
    R"( "requirement_section": "Normal Operation"})";

}  // namespace

TEST_CASE("extract_json_object recovers objects from completion text") {
  SUBCASE("raw object") {
    const auto j = extract_json_object(R"({"vote": "PASS", "confidence": 0.9})");
    CHECK(j.at("vote") == "PASS");
  }
  SUBCASE("markdown fences") {
    const auto j = extract_json_object("```json\n{\"a\": 1}\n```");
    CHECK(j.at("a") == 1);
  }
  SUBCASE("leading prose") {
    const auto j = extract_json_object("Sure! Here is my verdict: {\"a\": [1, 2, 3]} Done.");
    CHECK(j.at("a").size() == 3);
  }
  SUBCASE("braces inside string values") {
    const auto j =
        extract_json_object(R"({"reasoning": "use { and } freely", "x": {"y": 2}})");
    CHECK(j.at("reasoning") == "use { and } freely");
    CHECK(j.at("x").at("y") == 2);
  }
  SUBCASE("false start before a real object") {
    const auto j = extract_json_object("{oops {\"a\": 1}");
    CHECK(j.at("a") == 1);
  }
  SUBCASE("first parseable object wins") {
    const auto j = extract_json_object(R"(noise {"first": 1} and {"second": 2})");
    CHECK(j.contains("first"));
  }
  SUBCASE("no object at all throws") {
    CHECK_THROWS_AS((void)extract_json_object("PASS"), std::runtime_error);
  }
  SUBCASE("unbalanced braces throw") {
    CHECK_THROWS_AS((void)extract_json_object("{\"a\": 1"), std::runtime_error);
  }
}

TEST_CASE("default role models cover every agent") {
  const auto models = default_role_models();
  for (AgentRole r : {AgentRole::ReqEng, AgentRole::FailMgr, AgentRole::SysEng,
                      AgentRole::Inspector, AgentRole::Tuner}) {
    REQUIRE(models.count(r) == 1);
    CHECK_FALSE(models.at(r).empty());
  }
}

TEST_CASE("backend config round-trips without any key material") {
  HttpBackendConfig cfg;
  cfg.base_url = "http://example.invalid:9999";
  cfg.api_key_env = "SOME_KEY_NAME";
  cfg.max_retries = 5;
  const nlohmann::json j = cfg;
  CHECK(j.dump().find("SOME_KEY_NAME") != std::string::npos);  // env var NAME only
  const auto back = j.get<HttpBackendConfig>();
  CHECK(back.base_url == cfg.base_url);
  CHECK(back.api_key_env == cfg.api_key_env);
  CHECK(back.max_retries == 5);
  CHECK(back.model_for(AgentRole::Tuner) == cfg.model_for(AgentRole::Tuner));
}

TEST_CASE("http backend parses a clean completion") {
  TestServer server;
  server.script({completion(kReqEngContent)});
  HttpAgentBackend backend(fast_config(server.base_url()));
  const auto payload = backend.complete_json(AgentRole::ReqEng, 7, "sys", "user");
  REQUIRE(payload.has_value());
  CHECK(payload->at("vote") == "PASS");
  CHECK(backend.requests_sent() == 1);

  const nlohmann::json body = server.request(0);
  CHECK(body.at("model") == default_role_models().at(AgentRole::ReqEng));
  CHECK(body.at("temperature") == 0.0);
  REQUIRE(body.at("messages").size() == 2);
  CHECK(body.at("messages")[0].at("role") == "system");
  CHECK(body.at("messages")[1].at("content") == "user");
}

TEST_CASE("http backend recovers a fenced completion without a re-prompt") {
  TestServer server;
  server.script({completion("```json\n{\"vote\": \"FAIL\"}\n```")});
  HttpAgentBackend backend(fast_config(server.base_url()));
  const auto payload = backend.complete_json(AgentRole::FailMgr, 1, "sys", "user");
  REQUIRE(payload.has_value());
  CHECK(payload->at("vote") == "FAIL");
  CHECK(server.request_count() == 1);
}

TEST_CASE("http backend re-prompts once when the reply is prose") {
  TestServer server;
  server.script({completion("I believe the system should PASS."),
                 completion(R"({"vote": "PASS"})")});
  HttpAgentBackend backend(fast_config(server.base_url()));
  const auto payload = backend.complete_json(AgentRole::ReqEng, 1, "sys", "user");
  REQUIRE(payload.has_value());
  REQUIRE(server.request_count() == 2);

  const auto messages = server.request(1).at("messages");
  REQUIRE(messages.size() == 4);
  CHECK(messages[2].at("role") == "assistant");
  CHECK(messages[2].at("content") == "I believe the system should PASS.");
  CHECK(messages[3].at("role") == "user");
  CHECK(messages[3].at("content") ==
        "Your previous reply was not a single valid JSON object. Respond again with "
        "ONLY the JSON object for the same request - no prose, no markdown fences.");
}

TEST_CASE("http backend gives up after a second prose reply") {
  TestServer server;
  server.script({completion("PASS"), completion("definitely PASS")});
  HttpAgentBackend backend(fast_config(server.base_url()));
  std::string err;
  const auto payload = backend.complete_json(AgentRole::ReqEng, 1, "sys", "user", &err);
  CHECK_FALSE(payload.has_value());
  CHECK_FALSE(err.empty());
  CHECK(server.request_count() == 2);
}

TEST_CASE("http backend retries server errors with backoff") {
  TestServer server;
  server.script({{500, "overloaded"}, {503, "overloaded"}, completion(R"({"a": 1})")});
  HttpAgentBackend backend(fast_config(server.base_url()));
  const auto payload = backend.complete_json(AgentRole::SysEng, 1, "sys", "user");
  REQUIRE(payload.has_value());
  CHECK(payload->at("a") == 1);
  CHECK(server.request_count() == 3);
}

TEST_CASE("http backend does not retry a hard client error") {
  TestServer server;
  server.script({{400, "bad request"}});
  HttpAgentBackend backend(fast_config(server.base_url()));
  std::string err;
  const auto payload = backend.complete_json(AgentRole::SysEng, 1, "sys", "user", &err);
  CHECK_FALSE(payload.has_value());
  CHECK(err.find("HTTP 400") != std::string::npos);
  CHECK(server.request_count() == 1);
}

TEST_CASE("agent system falls back to the stub when the endpoint is unreachable") {
  auto cfg = fast_config("http://127.0.0.1:9");  // discard port: nothing listens
  cfg.max_retries = 0;
  AgentSystemConfig sys_cfg;
  sys_cfg.backend = BackendKind::Http;
  sys_cfg.http = std::make_shared<HttpAgentBackend>(cfg);
  AgentSystem agents(sys_cfg);

  const AgentContext ctx = council_ctx();
  const AgentVote v = agents.req_eng(ctx);
  const AgentVote expected = stub_req_eng_vote(ctx);
  CHECK(v.vote == expected.vote);
  CHECK(v.reasoning == expected.reasoning);
  CHECK(agents.degraded());
  CHECK(agents.degraded_calls() == 1);
}

TEST_CASE("agent system falls back to the stub on schema-invalid payloads") {
  TestServer server;
  // Missing requirement_section: parses as JSON but fails vote validation.
  server.script({completion(R"({"vote": "PASS", "confidence": 0.9, "reasoning": "x"})")});
  AgentSystemConfig sys_cfg;
  sys_cfg.backend = BackendKind::Http;
  sys_cfg.http = std::make_shared<HttpAgentBackend>(fast_config(server.base_url()));
  AgentSystem agents(sys_cfg);

  const AgentContext ctx = council_ctx();
  const AgentVote v = agents.req_eng(ctx);
  CHECK(v.requirement_section == stub_req_eng_vote(ctx).requirement_section);
  CHECK(agents.degraded());
}

TEST_CASE("authorization header reaches the server but never the traffic log") {
  REQUIRE(setenv("AIVV_TEST_API_KEY", "secret-key-123", 1) == 0);
  TestServer server;
  server.script({completion(kReqEngContent)});
  auto cfg = fast_config(server.base_url());
  cfg.api_key_env = "AIVV_TEST_API_KEY";
  EventLog traffic;
  HttpAgentBackend backend(cfg, &traffic);
  const auto payload = backend.complete_json(AgentRole::ReqEng, 3, "sys", "user");
  REQUIRE(payload.has_value());

  CHECK(server.auth(0) == "Bearer secret-key-123");
  REQUIRE(traffic.size() >= 2);
  bool saw_redacted = false;
  for (const Envelope& env : traffic.events()) {
    CHECK(nlohmann::json(env).dump().find("secret-key-123") == std::string::npos);
    if (env.to_agent == "llm" && env.payload.value("authorization", "") ==
                                     "Bearer ***redacted***") {
      saw_redacted = true;
      CHECK(env.from_agent == "req_eng");
      CHECK(env.sample_id == 3);
    }
  }
  CHECK(saw_redacted);
  REQUIRE(unsetenv("AIVV_TEST_API_KEY") == 0);
}

TEST_CASE("http inspector output is clamped and re-tallied") {
  TestServer server;
  server.script({completion(R"({"action": "FINE_TUNE", "majority_decision": "FAIL",)"
                            R"( "pass_votes": 0, "fail_votes": 3, "epochs": 1000,)"
                            R"( "learning_rate": 0.01, "reasoning": "drift"})")});
  AgentSystemConfig sys_cfg;
  sys_cfg.backend = BackendKind::Http;
  sys_cfg.http = std::make_shared<HttpAgentBackend>(fast_config(server.base_url()));
  AgentSystem agents(sys_cfg);

  const std::array<AgentVote, 3> votes{
      peer_vote(AgentRole::ReqEng, Vote::PASS, RiskLevel::None),
      peer_vote(AgentRole::FailMgr, Vote::PASS, RiskLevel::Low),
      peer_vote(AgentRole::SysEng, Vote::FAIL, RiskLevel::Medium)};
  const TuningAction a = agents.inspector(council_ctx(), votes);
  CHECK(a.action == TuningActionKind::FineTune);
  CHECK(*a.epochs == 200);
  CHECK(*a.learning_rate == doctest::Approx(1e-3));
  CHECK(a.clamped);
  // The tally reflects the actual council votes, not the model's claim.
  CHECK(a.pass_votes == 2);
  CHECK(a.fail_votes == 1);
  CHECK(a.majority_decision == Vote::PASS);
  CHECK_FALSE(agents.degraded());
}

TEST_CASE("http sys_eng proposal follows the peer-failure rule") {
  const char* vote_without_proposal =
      R"({"vote": "FAIL", "confidence": 0.8, "reasoning": "x", "risk_level": "MEDIUM",)"
      R"( "technical_assessment": "x"})";
  const char* vote_with_proposal =
      R"({"vote": "PASS", "confidence": 0.8, "reasoning": "x", "risk_level": "LOW",)"
      R"( "technical_assessment": "x", "tuning_proposal":)"
      R"( {"Kp": 1.0, "Ti": 2.0, "Td": 3.0, "Reference_Max_Velocity": 4.0}})";

  TestServer server;
  AgentSystemConfig sys_cfg;
  sys_cfg.backend = BackendKind::Http;
  sys_cfg.http = std::make_shared<HttpAgentBackend>(fast_config(server.base_url()));
  AgentSystem agents(sys_cfg);
  const AgentContext ctx = council_ctx();

  SUBCASE("proposal synthesized when a peer failed but the payload lacks one") {
    server.script({completion(vote_without_proposal)});
    const AgentVote v =
        agents.sys_eng(ctx, peer_vote(AgentRole::ReqEng, Vote::PASS, RiskLevel::None),
                       peer_vote(AgentRole::FailMgr, Vote::FAIL, RiskLevel::Medium));
    REQUIRE(v.tuning_proposal.has_value());
    CHECK(v.tuning_proposal->sample_id == ctx.sample_id);
    REQUIRE(v.tuning_proposal->triggered_by.size() == 1);
    CHECK(v.tuning_proposal->triggered_by[0] == AgentRole::FailMgr);
  }
  SUBCASE("unsolicited proposal dropped when no peer failed") {
    server.script({completion(vote_with_proposal)});
    const AgentVote v =
        agents.sys_eng(ctx, peer_vote(AgentRole::ReqEng, Vote::PASS, RiskLevel::None),
                       peer_vote(AgentRole::FailMgr, Vote::PASS, RiskLevel::Low));
    CHECK(v.vote == Vote::PASS);
    CHECK_FALSE(v.tuning_proposal.has_value());
  }
}

TEST_CASE("prompt renderers carry the role context") {
  const AgentContext ctx = council_ctx();
  for (AgentRole role : {AgentRole::ReqEng, AgentRole::FailMgr, AgentRole::SysEng,
                         AgentRole::Inspector, AgentRole::Tuner}) {
    const std::string sys = render_system_prompt(role);
    CHECK(sys.find("JSON") != std::string::npos);
  }
  const AgentVote re = peer_vote(AgentRole::ReqEng, Vote::PASS, RiskLevel::None);
  const AgentVote fm = peer_vote(AgentRole::FailMgr, Vote::FAIL, RiskLevel::Medium);
  const std::string se_user = render_user_prompt(AgentRole::SysEng, ctx, &re, &fm);
  CHECK(se_user.find("requirements_engineer") != std::string::npos);
  CHECK(se_user.find("failure_manager_findings") != std::string::npos);

  const std::string insp =
      render_inspector_user_prompt(ctx, {re, fm, peer_vote(AgentRole::SysEng, Vote::PASS,
                                                           RiskLevel::Low)});
  CHECK(insp.find("council_votes") != std::string::npos);

  const std::string tuner = render_tuner_user_prompt(1.5, {{0.01, 2.0}, {0.02, 1.9}});
  CHECK(tuner.find("alpha_grid") != std::string::npos);
  CHECK(tuner.find("new_error") != std::string::npos);
}

TEST_CASE("event log appends, stamps, and round-trips through JSONL") {
  const auto path = std::filesystem::temp_directory_path() / "aivv_test_events.jsonl";
  {
    EventLog log(path);
    Envelope e1;
    e1.sample_id = 221;
    e1.from_agent = "sentry";
    e1.to_agent = "req_eng";
    e1.payload = {{"residual", 1.68}};
    log.append(e1);
    Envelope e2;
    e2.timestamp = "2026-03-19T16:31:08.005585";
    e2.sample_id = 225;
    e2.from_agent = "inspector";
    e2.to_agent = "tuner";
    e2.payload = {{"action", "RECALIBRATE"}};
    log.append(e2);
    CHECK(log.size() == 2);
    // Auto-stamped timestamp: ISO-8601 with microseconds.
    const std::regex iso(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{6})");
    CHECK(std::regex_match(log.events()[0].timestamp, iso));
    CHECK(log.events()[1].timestamp == "2026-03-19T16:31:08.005585");
  }
  const EventLogReadResult r = read_event_log(path);
  CHECK(r.skipped_lines == 0);
  REQUIRE(r.events.size() == 2);
  CHECK(r.events[0].sample_id == 221);
  CHECK(r.events[0].from_agent == "sentry");
  CHECK(r.events[1].payload.at("action") == "RECALIBRATE");
  std::filesystem::remove(path);
}

TEST_CASE("event log reader tolerates malformed lines") {
  const auto path = std::filesystem::temp_directory_path() / "aivv_test_partial.jsonl";
  {
    std::ofstream out(path);
    out << R"({"timestamp": "t", "sample_id": 1, "from_agent": "a", "to_agent": "b", "payload": {}})"
        << "\n";
    out << "\n";                      // blank: ignored silently
    out << "{not json at all\n";      // malformed: counted
    out << R"({"timestamp": "t"})" << "\n";  // missing fields: counted
    out << R"({"timestamp": "t", "sample_id": 2, "from_agent": "c", "to_agent": "d", "payload": {"k": 1}})"
        << "\n";
  }
  const EventLogReadResult r = read_event_log(path);
  CHECK(r.events.size() == 2);
  CHECK(r.skipped_lines == 2);
  CHECK(r.events[1].sample_id == 2);
  std::filesystem::remove(path);
}
