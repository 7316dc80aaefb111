#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iclc/corpus.hpp"
#include "iclc/factorial.hpp"
#include "iclc/model_client.hpp"
#include "iclc/sampler.hpp"

namespace iclc {

enum class RunMode { Factorial, Probe };

struct DatasetPaths {
  std::filesystem::path validation;
  std::filesystem::path train;
  std::optional<std::filesystem::path> qqp_train;  // needed for cross_task
};

struct RunConfig {
  Task task = Task::ANLI;
  DatasetPaths datasets;
  std::optional<std::filesystem::path> template_dir;  // nullopt: bundled set
  ExclusionRule exclusion_rule = ExclusionRule::NestedInstructions;
  std::vector<Factor> custom_factors;
  std::size_t n_eval = 600;
  std::uint64_t seed = 0;
  std::string backend = "mock:oracle";
  // Annotation factor name -> backend URI per level (index 0 absent, 1 present).
  std::map<std::string, std::vector<std::string>> factor_backends;
  std::string model;
  double timeout_s = 30.0;
  bool logprobs_mode = true;
  std::string api_key;  // resolved; never written back out
  std::size_t parallelism = 8;
  bool calibration = false;
  std::vector<std::string> cf_inputs = kDefaultContentFreeInputs;
  std::filesystem::path output_dir;
  RunMode mode = RunMode::Factorial;
  std::optional<SetupId> probe_setup;
  TargetTemplateNames hp_templates;

  std::string source_text;  // config file bytes, copied verbatim to the output
  std::string config_hash;  // hex digest of source_text
};

inline constexpr std::string_view kApiKeyEnv = "HARNESS_API_KEY";

// Parses and validates a JSON config. Relative paths resolve against
// `base_dir`. Throws ConfigError on any problem.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Replaces ${NAME} with the environment value. Unset names become "".
std::string interpolate_env(std::string_view text);

FactorSet build_factor_set(const RunConfig& config);

std::string_view to_string(RunMode mode);

}  // namespace iclc
