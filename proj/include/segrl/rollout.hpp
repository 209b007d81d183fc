#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "segrl/core.hpp"
#include "segrl/policy.hpp"
#include "segrl/protocol.hpp"
#include "segrl/rewards.hpp"

namespace segrl {

// Token-level record of one sampled message, kept alongside the parsed step
// so objectives can recompute log-probabilities and gradients.
struct MessageSample {
    std::vector<Token> tokens;
    std::vector<double> logprobs;
};

struct RolloutRound {
    ControllerStep controller;
    FormatReport controller_report;
    MessageSample controller_sample;
    std::optional<ReasonerStep> reasoner;
    FormatReport reasoner_report;    // meaningful iff reasoner is present
    MessageSample reasoner_sample;   // meaningful iff reasoner is present
};

struct RolloutTrajectory {
    std::vector<RolloutRound> rounds;
    SegmentList final_segments;
    std::string final_answer;
    Termination terminated_by = Termination::kAccept;
    std::uint64_t seed = 0;

    InteractionTrajectory to_core() const;
    std::vector<ControllerStep> controller_steps() const;
    std::size_t round_count() const { return rounds.size(); }
};

struct ReasonerResample {
    ReasonerStep step;
    FormatReport report;
    MessageSample sample;
};

struct RolloutOptions {
    int max_rounds = 4;
    double controller_temperature = 1.0;
    double reasoner_temperature = 0.7;
    double nucleus_mass = 0.95;
};

// One controller-reasoner episode. The loop alternates roles: a CONTINUE
// appends the proposed segment and invokes the reasoner on the updated list;
// ACCEPT ends the episode with the previous reasoner answer; a critical
// controller violation aborts it with an empty answer. Hitting max_rounds
// keeps the last reasoner answer and records kRoundCap.
RolloutTrajectory run_trajectory(const Policy& controller, const Policy& reasoner,
                                 const Question& question, const TimeSeries& series,
                                 const RolloutOptions& options, Rng& rng);

// N independent reasoner draws conditioned on the same final segment list.
std::vector<ReasonerResample> resample_final_reasoner(const Policy& reasoner,
                                                      const Question& question,
                                                      const TimeSeries& series,
                                                      const SegmentList& final_segments,
                                                      int count, const RolloutOptions& options,
                                                      Rng& rng);

// G trajectories, each paired with N final-round resamples plus group
// statistics: group_mean is the reliability of the trajectory's final
// segments, group_variance the population variance of resample correctness.
struct GroupRollout {
    std::vector<RolloutTrajectory> trajectories;           // G
    std::vector<std::vector<ReasonerResample>> resamples;  // G x N
    std::vector<std::vector<int>> resample_correct;        // G x N
    std::vector<double> group_mean;                        // r_mu
    std::vector<double> group_variance;                    // r_sigma
};

GroupRollout run_group(const Policy& controller, const Policy& reasoner,
                       const Question& question, const TimeSeries& series, int group_size,
                       int resample_count, const RolloutOptions& options, Rng& rng);

std::string_view termination_name(Termination t);

// Line-delimited audit record: raw messages, parsed fields, scores, seed.
nlohmann::json trajectory_to_json(const RolloutTrajectory& trajectory);

}  // namespace segrl
