#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "segrl/optimize.hpp"
#include "segrl/toy_policy.hpp"

namespace segrl {

// Raised when a checkpoint file is unreadable, truncated, or fails
// validation. Commands map this to their documented exit codes.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    int step = 0;
    nlohmann::json config_echo;  // effective config of the producing run
    std::unique_ptr<ToyGridPolicy> policy;
    nlohmann::json optimizer_state;  // empty when absent
};

nlohmann::json policy_to_json(const ToyGridPolicy& policy);
std::unique_ptr<ToyGridPolicy> policy_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, int step,
                     const nlohmann::json& config_echo, const ToyGridPolicy& policy,
                     const Optimizer& optimizer);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Highest-step "step_*.json" checkpoint in the directory, empty when none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& dir);

}  // namespace segrl
