#pragma once

#include <span>

#include "segrl/core.hpp"

namespace segrl {

// Reward mixing weights. Defaults keep each role reward in [-1, 1] with
// correctness/reliability dominant; both pairs sum to 1 under the default
// normalization but other nonnegative values are accepted.
struct RewardWeights {
    double reliability = 0.9;       // w_D, controller
    double controller_format = 0.1; // w_f, controller
    double correctness = 0.9;       // w_c, reasoner
    double reasoner_format = 0.1;   // w_e, reasoner

    void validate() const;
};

// Per-trajectory reward decomposition, carried in logs and dumps.
struct RewardBundle {
    int correctness = 0;             // c of the trajectory's own final answer
    double reliability = 0.0;        // D, mean correctness of the resamples
    double controller_format = 0.0;  // trajectory-level F_ctl
    double reasoner_format = 0.0;    // F_rsn of the final reasoner step
    double controller_reward = 0.0;  // R_ctl
    double reasoner_reward = 0.0;    // R_rsn of the final answer
    double group_mean = 0.0;         // r_mu
    double group_variance = 0.0;     // r_sigma
};

// 1 iff the normalized prediction equals the gold letter; empty answers score 0.
int correctness(const Question& question, std::string_view predicted);

// Mean of the correctness indicators. Throws on an empty span.
double reliability(std::span<const int> indicators);

// -1 whenever the trajectory format score is negative, otherwise
// w_D * D + w_f * F_ctl.
double controller_reward(double controller_format, double reliability_value,
                         const RewardWeights& weights);

// w_c * c + w_e * F_rsn. Hard format failures arrive here already mapped to
// F_rsn = -1 by the protocol layer.
double reasoner_reward(int correct, double reasoner_format, const RewardWeights& weights);

// Population variance (divide by N).
double population_variance(std::span<const int> indicators);
double population_variance_real(std::span<const double> values);

}  // namespace segrl
