#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "hrc/experiment.hpp"

namespace hrc {

struct AppConfig {
  ExperimentSetup setup;
  ExperimentPlan plan;
};

// Missing sections and keys keep their defaults; unknown keys are rejected.
AppConfig parse_config(std::string_view json_text);
AppConfig load_config(const std::filesystem::path& path);

nlohmann::ordered_json setup_to_json(const ExperimentSetup& setup);
std::string config_to_json(const AppConfig& cfg);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace hrc
