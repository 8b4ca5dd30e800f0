#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace aivv {

// One agent-to-agent message. Every inter-agent payload in a run is persisted
// in this shape, one JSON object per line.
struct Envelope {
  std::string timestamp;  // ISO-8601 with microseconds, UTC
  int sample_id = 0;
  std::string from_agent;
  std::string to_agent;
  nlohmann::json payload;
};

void to_json(nlohmann::json& j, const Envelope& e);
void from_json(const nlohmann::json& j, Envelope& e);

// "2026-03-19T16:31:08.005585" for the current UTC time.
std::string make_timestamp();

// Append-only message log: always kept in memory, optionally mirrored to a
// JSONL file (truncated on open).
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::filesystem::path& jsonl_path);

  // Stamps the envelope with the current time when its timestamp is empty.
  void append(Envelope env);

  const std::vector<Envelope>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  std::vector<Envelope> events_;
  std::optional<std::filesystem::path> path_;
  std::ofstream file_;
};

struct EventLogReadResult {
  std::vector<Envelope> events;
  int skipped_lines = 0;  // malformed lines tolerated, counted for warnings
};

EventLogReadResult read_event_log(const std::filesystem::path& jsonl_path);

}  // namespace aivv
