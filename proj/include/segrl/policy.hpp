#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segrl/core.hpp"
#include "segrl/rng.hpp"

namespace segrl {

enum class Role { kController, kReasoner };

using Token = std::int32_t;

// Sliced view of one selected segment, what the reasoner conditions on.
struct SegmentView {
    Segment segment;
    std::vector<double> values;
};

// Input to one policy invocation. Controller states carry the full series
// plus the accumulated list; reasoner states carry only the question and the
// sliced segments (series stays null), never the full signal.
struct PolicyState {
    Role role = Role::kController;
    const Question* question = nullptr;
    const TimeSeries* series = nullptr;
    SegmentList segments;
    std::vector<SegmentView> views;
    std::string prior_answer;
    std::string prior_trace;
    int round_index = 1;
};

PolicyState make_controller_state(const Question& question, const TimeSeries& series,
                                  const SegmentList& segments, std::string prior_answer,
                                  std::string prior_trace, int round_index);
PolicyState make_reasoner_state(const Question& question, const TimeSeries& series,
                                const SegmentList& segments, int round_index);

// One sampled message. Tokens are the structured action components (decision,
// window choice, answer letter); logprobs are per-token log-probabilities
// under the base distribution (temperature 1, no nucleus truncation), so
// token_log_probs(sample(...)) reproduces them exactly.
struct Sampled {
    std::string raw;
    std::vector<Token> tokens;
    std::vector<double> logprobs;
};

// Behavioral contract every policy implements. sample/token_log_probs are
// const and safe to call concurrently; apply_update and set_parameters are
// single-writer.
class Policy {
public:
    virtual ~Policy() = default;

    virtual Sampled sample(const PolicyState& state, double temperature, double nucleus_mass,
                           Rng& rng) const = 0;

    virtual std::vector<double> token_log_probs(const PolicyState& state,
                                                std::span<const Token> tokens) const = 0;

    // Flat parameter vector; empty for non-parametric policies.
    virtual std::size_t param_count() const { return 0; }
    virtual std::vector<double> parameters() const { return {}; }
    virtual void set_parameters(std::span<const double> params) { (void)params; }

    // grad += coef * d(sum of token log-probs)/d(params). Touches only the
    // entries the message depends on.
    virtual void accumulate_score_gradient(const PolicyState& state,
                                           std::span<const Token> tokens, double coef,
                                           std::span<double> grad) const {
        (void)state, (void)tokens, (void)coef, (void)grad;
    }

    // Plain ascent step: params += learning_rate * grad.
    virtual void apply_update(std::span<const double> grad, double learning_rate);

    // Independent frozen copy, usable as a reference policy.
    virtual std::unique_ptr<Policy> snapshot() const = 0;

    // Exact next-token distribution when the action space is enumerable;
    // nullopt directs KL computation to the sampled estimator.
    virtual std::optional<std::vector<double>> next_token_distribution(
        const PolicyState& state, std::span<const Token> prefix) const {
        (void)state, (void)prefix;
        return std::nullopt;
    }
};

// d(sum of token log-probs)/d(params) as a dense vector.
std::vector<double> score_gradient(const Policy& policy, const PolicyState& state,
                                   std::span<const Token> tokens);

// Role-checked sampling helpers.
Sampled sample_controller(const Policy& policy, const PolicyState& state, double temperature,
                          double nucleus_mass, Rng& rng);
Sampled sample_reasoner(const Policy& policy, const PolicyState& state, double temperature,
                        double nucleus_mass, Rng& rng);

// KL(policy || reference) at `state` for the given sampled tokens, averaged
// per token. Uses the exact closed form when both policies expose enumerable
// distributions, otherwise the nonnegative estimator r - 1 - log r with
// r = p_ref(token) / p_policy(token). Reference-probability ratios are
// clamped below at `ratio_floor`.
double kl_divergence_estimate(const Policy& policy, const Policy& reference,
                              const PolicyState& state, std::span<const Token> tokens,
                              double ratio_floor = 1e-12);

// Fixed controller action, for scripted policies.
struct ScriptedAction {
    bool accept = false;
    std::size_t window = 0;  // index into the script policy's window grid
};

// Deterministic controller that replays a per-question script; used by tests
// and oracle-driven evaluation. Windows are an explicit segment grid.
class ScriptedControllerPolicy : public Policy {
public:
    using Script = std::function<std::vector<ScriptedAction>(const Question&)>;

    ScriptedControllerPolicy(std::vector<Segment> windows, Script script);

    Sampled sample(const PolicyState& state, double temperature, double nucleus_mass,
                   Rng& rng) const override;
    std::vector<double> token_log_probs(const PolicyState& state,
                                        std::span<const Token> tokens) const override;
    std::unique_ptr<Policy> snapshot() const override;

private:
    std::vector<ScriptedAction> actions_for(const Question& question) const;

    std::vector<Segment> windows_;
    Script script_;
};

}  // namespace segrl
