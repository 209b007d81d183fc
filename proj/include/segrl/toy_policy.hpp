#pragma once

#include <span>
#include <vector>

#include "segrl/policy.hpp"

namespace segrl {

// Configuration of the tabular two-role policy. The controller acts on a grid
// of W equal windows over [0, H); its logit table is indexed by (round index,
// coverage bucket, question tag) and spans W windows plus ACCEPT. The
// reasoner's table is indexed by (question tag, covered-value profile) and
// spans the answer options.
struct ToyGridConfig {
    std::size_t series_length = 128;  // H; must be divisible by window_count
    std::size_t window_count = 8;     // W
    std::size_t option_count = 4;     // answer letters supported
    int round_features = 4;           // round index clamp for the feature table
    std::size_t coverage_buckets = 4;
    std::size_t question_tags = 128;  // question-tag feature size

    // covered-value profile: a point is an event point when |value| exceeds
    // `event_threshold`; a run of at least `sustained_run` event points counts
    // as sustained rather than transient.
    double event_threshold = 3.5;
    std::size_t sustained_run = 6;

    // probability of emitting a deliberately malformed message, for
    // format-reward exercises; zero in normal training
    double corrupt_controller = 0.0;
    double corrupt_reasoner = 0.0;

    void validate() const;
    std::size_t controller_rows() const;
    std::size_t reasoner_rows() const;
    std::size_t controller_actions() const { return window_count + 1; }
};

class ToyGridPolicy : public Policy {
public:
    explicit ToyGridPolicy(ToyGridConfig config);

    Sampled sample(const PolicyState& state, double temperature, double nucleus_mass,
                   Rng& rng) const override;
    std::vector<double> token_log_probs(const PolicyState& state,
                                        std::span<const Token> tokens) const override;
    std::size_t param_count() const override;
    std::vector<double> parameters() const override;
    void set_parameters(std::span<const double> params) override;
    void accumulate_score_gradient(const PolicyState& state, std::span<const Token> tokens,
                                   double coef, std::span<double> grad) const override;
    std::unique_ptr<Policy> snapshot() const override;
    std::optional<std::vector<double>> next_token_distribution(
        const PolicyState& state, std::span<const Token> prefix) const override;

    const ToyGridConfig& config() const { return config_; }
    const std::vector<Segment>& windows() const { return windows_; }

    // Feature extraction, exposed for inspection and tests.
    std::size_t controller_feature(const PolicyState& state) const;
    std::size_t reasoner_feature(const PolicyState& state) const;
    std::size_t question_tag(const Question& question) const;

    // Base (temperature-1) action distribution at a state: controller over
    // W windows + ACCEPT, reasoner over the question's options.
    std::vector<double> action_probs(const PolicyState& state) const;

    std::span<const double> controller_logits() const { return ctl_logits_; }
    std::span<const double> reasoner_logits() const { return rsn_logits_; }

private:
    std::vector<double> softmax_row(std::span<const double> logits, double temperature) const;
    std::size_t sample_nucleus(std::span<const double> probs, double nucleus_mass,
                               Rng& rng) const;
    std::string corrupt_controller_message(std::size_t action, Rng& rng) const;
    std::string corrupt_reasoner_message(std::string_view answer, Rng& rng) const;

    ToyGridConfig config_;
    std::vector<Segment> windows_;
    std::vector<double> ctl_logits_;  // controller_rows x (W + 1), row-major
    std::vector<double> rsn_logits_;  // reasoner_rows x option_count, row-major
};

}  // namespace segrl
