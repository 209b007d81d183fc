#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segrl/policy.hpp"
#include "segrl/rollout.hpp"
#include "segrl/synthenv.hpp"

namespace segrl {

struct EvalOptions {
    RolloutOptions rollout;
    RewardWeights weights;
    std::uint64_t seed = 0;
    int rollouts_per_task = 1;
    bool full_series = false;   // reasoner-only mode: skip selection entirely
    bool keep_trajectories = false;  // retain per-rollout audit records
    int workers = 1;
};

struct EvalRecord {
    std::string task_id;
    int rollout_index = 0;
    std::string answer;
    int correct = 0;
    double coverage = 0.0;
    Termination terminated_by = Termination::kAccept;
    double controller_format = 0.0;
    std::size_t rounds = 0;

    nlohmann::json to_json() const;
};

// Usage histogram over 10 coverage bins [0,10%) .. [90,100%]; the last bin
// is closed so full coverage lands in it.
struct EvalSummary {
    double accuracy = 0.0;
    std::size_t rollout_count = 0;
    std::vector<std::size_t> bin_count = std::vector<std::size_t>(10, 0);
    std::vector<double> bin_fraction = std::vector<double>(10, 0.0);
    std::vector<double> bin_accuracy = std::vector<double>(10, 0.0);
    double critical_rate = 0.0;    // trajectories aborted by a critical violation
    double violation_rate = 0.0;   // trajectories whose format score is -1
    std::vector<EvalRecord> records;
    std::vector<nlohmann::json> trajectories;  // audit records when requested

    std::size_t modal_bin() const;
    nlohmann::json to_json() const;
};

std::size_t coverage_bin(double coverage);

EvalSummary evaluate(const Policy& controller, const Policy& reasoner,
                     std::span<const PlantedTask> tasks, const EvalOptions& options);

}  // namespace segrl
