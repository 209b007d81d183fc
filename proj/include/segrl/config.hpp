#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "segrl/optimize.hpp"
#include "segrl/synthenv.hpp"
#include "segrl/toy_policy.hpp"

namespace segrl {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat "section.key" -> value map. Files use [section] headers with
// "key = value" lines; '#' and ';' start comments.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(std::string_view text);
ConfigMap parse_config_file(const std::filesystem::path& path);

// SEGRL_TRAIN_LEARNING_RATE=... overrides train.learning_rate, and so on for
// every key. Dots map to underscores, everything uppercased.
void apply_env_overrides(ConfigMap& config, const char* prefix = "SEGRL_");

// Everything a command needs; assembled from defaults, then file, then env,
// then command-line flags (highest precedence).
struct EngineConfig {
    TrainConfig train;
    EnvConfig env;
    ToyGridConfig policy;
    int steps = 500;
    int checkpoint_interval = 100;
    int task_count = 1000;
    int eval_rollouts = 1;

    void validate() const;
};

EngineConfig engine_config_from(const ConfigMap& values);
nlohmann::json config_echo(const EngineConfig& config);

// Flattens an echo back into "section.key" form so overlays (environment,
// flags) can be applied on top with the usual precedence.
ConfigMap config_map_from_echo(const nlohmann::json& echo);
EngineConfig engine_config_from_echo(const nlohmann::json& echo);

}  // namespace segrl
