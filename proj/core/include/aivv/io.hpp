#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "aivv/sim.hpp"

namespace aivv {

// JSON converters for the simulation config types (enums as strings).
void to_json(nlohmann::json& j, const PidGains& g);
void from_json(const nlohmann::json& j, PidGains& g);
void to_json(nlohmann::json& j, const RefFilter& f);
void from_json(const nlohmann::json& j, RefFilter& f);
void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);
void to_json(nlohmann::json& j, const NoiseSpec& n);
void from_json(const nlohmann::json& j, NoiseSpec& n);
void to_json(nlohmann::json& j, const FaultSpec& f);
void from_json(const nlohmann::json& j, FaultSpec& f);

// Sidecar lives next to the CSV with the extension swapped for .json.
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

// Writes columns step,yaw,setpoint,fault plus a JSON sidecar carrying the full
// generation config and seed, so the dataset round-trips bit-exactly.
void write_dataset(const TelemetryDataset& dataset, const std::filesystem::path& csv_path);

TelemetryDataset read_dataset(const std::filesystem::path& csv_path);

// Shared helpers for small text artifacts.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace aivv
