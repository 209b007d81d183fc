#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "segrl/policy.hpp"
#include "segrl/rewards.hpp"
#include "segrl/rollout.hpp"

namespace segrl {

// Engine configuration modes mirroring the ablations the trainer supports.
struct AblationSwitches {
    bool reasoner_only = false;          // no segment selection; full series as one segment
    bool controller_only = false;        // reasoner parameters frozen
    bool no_reliability = false;         // controller reward uses single-rollout correctness
    bool myopic_controller = false;      // credit only the final interaction round
    bool uniform_group_sampling = false; // replace variance-proportional group pick

    bool any() const {
        return reasoner_only || controller_only || no_reliability || myopic_controller ||
               uniform_group_sampling;
    }
};

std::string ablation_name(const AblationSwitches& switches);
AblationSwitches ablation_from_name(std::string_view name);

enum class OptimizerKind { kSgd, kAdamW };
enum class KlMode { kExact, kEstimator };

struct TrainConfig {
    int group_size = 6;      // G trajectories per question
    int resample_count = 6;  // N final-round reasoner rollouts
    int batch_size = 64;     // B questions per step
    int max_rounds = 4;
    double learning_rate = 1e-6;
    double kl_coeff = 0.002;  // beta, reasoner objective only
    double controller_temperature = 1.0;
    double reasoner_temperature = 0.7;
    double nucleus_mass = 0.95;
    RewardWeights weights;
    double advantage_epsilon = 1e-6;
    AblationSwitches ablation;
    OptimizerKind optimizer = OptimizerKind::kSgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double weight_decay = 0.0;
    KlMode kl_mode = KlMode::kExact;
    std::uint64_t seed = 1;
    int workers = 1;

    void validate() const;
    RolloutOptions rollout_options() const {
        return RolloutOptions{max_rounds, controller_temperature, reasoner_temperature,
                              nucleus_mass};
    }
};

// Group-relative advantages per trajectory (controller) and per resample
// (reasoner, for the picked group).
struct AdvantageSet {
    std::vector<double> controller;
    std::vector<double> reasoner;
    double epsilon = 1e-6;
};

// (r - mean) / (std + epsilon) with population std; all zeros when the std
// falls below epsilon. Throws on fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double epsilon);

// Both role advantage vectors for one question: controller over the G
// trajectory rewards, reasoner over the picked group's N resample rewards.
AdvantageSet compute_advantages(std::span<const double> controller_rewards,
                                std::span<const double> reasoner_rewards, double epsilon);

// Group index drawn with probability proportional to its variance; uniform
// when every variance is zero. Throws on negative variances.
std::size_t variance_guided_pick(std::span<const double> variances, Rng& rng);

// grad += scale * d J_ctl(question) / d params, where J_ctl(question) is
//   (1/G) sum_g (1/L_g) sum_i (1/T_gi) sum_t A_g log pi(o_t)
// with advantages held constant. Under `myopic` only the final round of each
// trajectory receives advantage weight.
void accumulate_controller_objective(const Policy& policy, const Question& question,
                                     const TimeSeries& series,
                                     std::span<const RolloutTrajectory> trajectories,
                                     std::span<const double> advantages, bool myopic,
                                     double scale, std::span<double> grad);

// grad += scale * d J_rsn(question) / d params for the picked group:
//   (1/N) sum_n (1/T_n) sum_t A_n log pi(o_t)  -  kl_coeff * KL(pi || ref)
// evaluated at the final-segment reasoner state.
void accumulate_reasoner_objective(const Policy& policy, const Policy& reference,
                                   const Question& question, const TimeSeries& series,
                                   const SegmentList& final_segments,
                                   std::span<const ReasonerResample> resamples,
                                   std::span<const double> advantages, double kl_coeff,
                                   KlMode kl_mode, double scale, std::span<double> grad);

// Dense-vector conveniences over the accumulators (scale 1).
std::vector<double> controller_objective_grad(const Policy& policy, const Question& question,
                                              const TimeSeries& series,
                                              std::span<const RolloutTrajectory> trajectories,
                                              std::span<const double> advantages, bool myopic);
std::vector<double> reasoner_objective_grad(const Policy& policy, const Policy& reference,
                                            const Question& question, const TimeSeries& series,
                                            const SegmentList& final_segments,
                                            std::span<const ReasonerResample> resamples,
                                            std::span<const double> advantages, double kl_coeff,
                                            KlMode kl_mode);

class Optimizer {
public:
    explicit Optimizer(const TrainConfig& config);

    // Ascent step along `grad`.
    void step(Policy& policy, std::span<const double> grad);

    long step_count() const { return steps_; }
    nlohmann::json to_json() const;
    void restore(const nlohmann::json& state);

private:
    OptimizerKind kind_;
    double lr_, beta1_, beta2_, epsilon_, weight_decay_;
    std::vector<double> m_, v_;
    long steps_ = 0;
};

struct TrainItem {
    const Question* question = nullptr;
    const TimeSeries* series = nullptr;
};

struct StepMetrics {
    int step = 0;
    double controller_reward = 0.0;  // mean R_ctl over the batch's trajectories
    double reasoner_reward = 0.0;    // mean R_rsn over the picked groups' resamples
    double reliability = 0.0;        // mean r_mu
    double coverage = 0.0;           // mean final coverage fraction
    double violation_rate = 0.0;     // fraction of trajectories with F_ctl = -1
    double accuracy = 0.0;           // mean correctness of trajectory final answers
    double kl = 0.0;                 // mean reasoner KL to the reference
    double grad_norm = 0.0;

    nlohmann::json to_json() const;
};

// One joint update over a batch of questions: nested rollouts, rewards,
// group-relative advantages, variance-guided group pick, gradient ascent on
// J_ctl + J_rsn. Deterministic given (seed, step_index), independent of the
// worker count.
//
// `reasoner_override`, when set, plays the reasoner role during rollouts and
// resampling while only the controller side of `policy` trains (the reasoner
// objective is skipped, as its samples do not come from `policy`).
StepMetrics train_step(Policy& policy, const Policy& reference,
                       std::span<const TrainItem> batch, const TrainConfig& config,
                       Optimizer& optimizer, int step_index,
                       const Policy* reasoner_override = nullptr);

}  // namespace segrl
