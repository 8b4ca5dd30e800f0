#include "aivv/event_log.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <stdexcept>

namespace aivv {

void to_json(nlohmann::json& j, const Envelope& e) {
  j = nlohmann::json{{"timestamp", e.timestamp},
                     {"sample_id", e.sample_id},
                     {"from_agent", e.from_agent},
                     {"to_agent", e.to_agent},
                     {"payload", e.payload}};
}

void from_json(const nlohmann::json& j, Envelope& e) {
  j.at("timestamp").get_to(e.timestamp);
  j.at("sample_id").get_to(e.sample_id);
  j.at("from_agent").get_to(e.from_agent);
  j.at("to_agent").get_to(e.to_agent);
  e.payload = j.at("payload");
}

std::string make_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto secs = time_point_cast<seconds>(now);
  const auto micros = duration_cast<microseconds>(now - secs).count();
  const std::time_t t = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%06lld",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, static_cast<long long>(micros));
  return buf;
}

EventLog::EventLog(const std::filesystem::path& jsonl_path) : path_(jsonl_path) {
  if (jsonl_path.has_parent_path()) {
    std::filesystem::create_directories(jsonl_path.parent_path());
  }
  file_.open(jsonl_path, std::ios::trunc);
  if (!file_) {
    throw std::runtime_error("EventLog: cannot open " + jsonl_path.string());
  }
}

void EventLog::append(Envelope env) {
  if (env.timestamp.empty()) env.timestamp = make_timestamp();
  if (file_.is_open()) {
    file_ << nlohmann::json(env).dump() << '\n';
    file_.flush();
  }
  events_.push_back(std::move(env));
}

EventLogReadResult read_event_log(const std::filesystem::path& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) {
    throw std::runtime_error("read_event_log: cannot open " + jsonl_path.string());
  }
  EventLogReadResult out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Envelope env = nlohmann::json::parse(line).get<Envelope>();
      out.events.push_back(std::move(env));
    } catch (const std::exception&) {
      ++out.skipped_lines;
    }
  }
  return out;
}

}  // namespace aivv
