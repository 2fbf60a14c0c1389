#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phenoeval/model_client.hpp"

namespace phenoeval::cli {

inline constexpr const char* kEndpointEnv = "PHENOEVAL_ENDPOINT";

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Contents of the file passed with --config. Relative paths are resolved
/// against the config file's directory.
struct GlobalConfig {
  std::vector<ModelConfig> models;
  std::optional<std::filesystem::path> therapy_template;
  std::optional<std::filesystem::path> medication_template;
  std::filesystem::path run_dir = "runs";
  std::optional<std::uint64_t> seed;
};

// Throws ConfigError: at least one model is required.
GlobalConfig global_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
GlobalConfig load_global_config(const std::filesystem::path& path);

// Runs one command line (without the program name).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace phenoeval::cli
