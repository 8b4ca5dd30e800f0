#include "aivv/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aivv {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const PidGains& g) {
  j = {{"kp", g.kp}, {"ti", g.ti}, {"td", g.td}};
}

void from_json(const nlohmann::json& j, PidGains& g) {
  j.at("kp").get_to(g.kp);
  j.at("ti").get_to(g.ti);
  j.at("td").get_to(g.td);
}

void to_json(nlohmann::json& j, const RefFilter& f) {
  j = {{"max_velocity", f.max_velocity},
       {"damping_ratio", f.damping_ratio},
       {"natural_frequency", f.natural_frequency}};
}

void from_json(const nlohmann::json& j, RefFilter& f) {
  j.at("max_velocity").get_to(f.max_velocity);
  j.at("damping_ratio").get_to(f.damping_ratio);
  j.at("natural_frequency").get_to(f.natural_frequency);
}

void to_json(nlohmann::json& j, const SimConfig& c) {
  j = {{"dt", c.dt},
       {"n_steps", c.n_steps},
       {"nomoto_gain", c.nomoto_gain},
       {"nomoto_time_constant", c.nomoto_time_constant},
       {"pid", c.pid},
       {"ref_filter", c.ref_filter},
       {"scenario", to_string(c.scenario)},
       {"seed", c.seed},
       {"rudder_limit", c.rudder_limit}};
}

void from_json(const nlohmann::json& j, SimConfig& c) {
  j.at("dt").get_to(c.dt);
  j.at("n_steps").get_to(c.n_steps);
  j.at("nomoto_gain").get_to(c.nomoto_gain);
  j.at("nomoto_time_constant").get_to(c.nomoto_time_constant);
  j.at("pid").get_to(c.pid);
  j.at("ref_filter").get_to(c.ref_filter);
  c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
  j.at("seed").get_to(c.seed);
  if (j.contains("rudder_limit")) j.at("rudder_limit").get_to(c.rudder_limit);
}

void to_json(nlohmann::json& j, const NoiseSpec& n) {
  j = {{"family", to_string(n.family)},
       {"scale", n.scale},
       {"drift_rate", n.drift_rate},
       {"drift_start", n.drift_start}};
}

void from_json(const nlohmann::json& j, NoiseSpec& n) {
  n.family = noise_family_from_string(j.at("family").get<std::string>());
  j.at("scale").get_to(n.scale);
  j.at("drift_rate").get_to(n.drift_rate);
  j.at("drift_start").get_to(n.drift_start);
}

void to_json(nlohmann::json& j, const FaultSpec& f) {
  j = {{"kind", to_string(f.kind)},
       {"onset", f.onset},
       {"magnitude", f.magnitude},
       {"duration", f.duration}};
}

void from_json(const nlohmann::json& j, FaultSpec& f) {
  f.kind = fault_kind_from_string(j.at("kind").get<std::string>());
  j.at("onset").get_to(f.onset);
  j.at("magnitude").get_to(f.magnitude);
  j.at("duration").get_to(f.duration);
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_dataset(const TelemetryDataset& dataset, const std::filesystem::path& csv_path) {
  const std::size_t n = dataset.yaw.size();
  if (dataset.setpoint.size() != n || dataset.fault_mask.size() != n)
    throw std::invalid_argument("write_dataset: column length mismatch");

  std::ostringstream os;
  os << "step,yaw,setpoint,fault\n";
  for (std::size_t t = 0; t < n; ++t) {
    os << t << ',' << fmt_double(dataset.yaw[t]) << ',' << fmt_double(dataset.setpoint[t])
       << ',' << static_cast<int>(dataset.fault_mask[t]) << '\n';
  }
  write_text_file(csv_path, os.str());

  nlohmann::json side = {{"config", dataset.config},
                         {"noise", dataset.noise},
                         {"scenario", to_string(dataset.scenario)},
                         {"seed", dataset.seed}};
  side["fault"] = dataset.fault ? nlohmann::json(*dataset.fault) : nlohmann::json(nullptr);
  write_json_file(sidecar_path(csv_path), side);
}

TelemetryDataset read_dataset(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("read_dataset: cannot open " + csv_path.string());

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset: empty file");
  if (line == "step,yaw,setpoint,fault\r") line.pop_back();
  if (line != "step,yaw,setpoint,fault")
    throw std::runtime_error("read_dataset: unexpected header '" + line + "'");

  TelemetryDataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    long step = 0;
    double yaw = 0.0, sp = 0.0;
    int fault = 0;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%d", &step, &yaw, &sp, &fault) != 4)
      throw std::runtime_error("read_dataset: malformed row at line " +
                               std::to_string(line_no));
    ds.yaw.push_back(yaw);
    ds.setpoint.push_back(sp);
    ds.fault_mask.push_back(fault ? 1 : 0);
  }

  const auto side_path = sidecar_path(csv_path);
  if (!std::filesystem::exists(side_path))
    throw std::runtime_error("read_dataset: missing sidecar " + side_path.string());
  const auto side = read_json_file(side_path);
  ds.config = side.at("config").get<SimConfig>();
  ds.noise = side.at("noise").get<NoiseSpec>();
  ds.scenario = scenario_from_string(side.at("scenario").get<std::string>());
  ds.seed = side.at("seed").get<std::uint64_t>();
  if (side.contains("fault") && !side.at("fault").is_null())
    ds.fault = side.at("fault").get<FaultSpec>();
  return ds;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  return nlohmann::json::parse(read_text_file(path));
}

}  // namespace aivv
