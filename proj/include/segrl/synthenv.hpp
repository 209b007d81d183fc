#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "segrl/core.hpp"
#include "segrl/policy.hpp"
#include "segrl/rng.hpp"

namespace segrl {

enum class PatternKind { kSpike, kDip, kLevelShift, kNone };

std::string_view pattern_name(PatternKind kind);
PatternKind pattern_from_name(std::string_view name);

// Generator configuration. Planted intervals are aligned to the W-window
// grid so coverage of a region is all-or-nothing for grid policies.
struct EnvConfig {
    std::size_t series_length = 128;  // H
    std::size_t window_count = 8;     // W; plant regions are grid windows
    std::size_t option_count = 4;     // answer options (this generator emits 4)
    bool two_interval = false;
    double noise_sigma = 1.0;
    double amplitude = 6.0;        // interval-mean uplift of a planted pattern
    std::size_t spike_width = 3;   // points carrying a transient spike/dip
    int min_region_gap = 2;        // two-interval: region index distance >= gap
    double coverage_threshold = 0.8;  // oracle theta
    double oracle_accuracy = 0.95;    // oracle p_hi

    void validate() const;
    std::size_t region_length() const { return series_length / window_count; }
};

// One synthetic QA task. The gold answer is a deterministic function of the
// planted pattern kinds; patterns are statistically invisible outside their
// intervals.
struct PlantedTask {
    std::string id;
    TimeSeries series;
    std::vector<Segment> intervals;       // one or two planted regions
    std::vector<PatternKind> kinds;       // parallel to intervals
    Question question;
    double noise_sigma = 1.0;
    bool two_interval = false;
};

// Reasoner ground truth: correct with probability `covered_accuracy` iff the
// selected segments cover at least `coverage_threshold` of every planted
// interval, otherwise uniform over the options.
struct OracleReasonerSpec {
    double coverage_threshold = 0.8;
    double covered_accuracy = 0.95;
};

// Deterministic for a given (config, seed, index).
PlantedTask generate_task(const EnvConfig& config, std::uint64_t seed, std::uint64_t index);
std::vector<PlantedTask> generate_tasks(const EnvConfig& config, std::uint64_t seed,
                                        std::size_t count);

// Smallest covered fraction over the task's planted intervals.
double interval_coverage(const PlantedTask& task, const SegmentList& segments);
bool oracle_covered(const OracleReasonerSpec& spec, const PlantedTask& task,
                    const SegmentList& segments);

std::string oracle_answer(const OracleReasonerSpec& spec, const PlantedTask& task,
                          const SegmentList& segments, Rng& rng);

// Policy wrapper around the oracle, for tests and reference evaluation.
class OracleReasonerPolicy : public Policy {
public:
    OracleReasonerPolicy(OracleReasonerSpec spec, std::span<const PlantedTask> tasks);

    Sampled sample(const PolicyState& state, double temperature, double nucleus_mass,
                   Rng& rng) const override;
    std::vector<double> token_log_probs(const PolicyState& state,
                                        std::span<const Token> tokens) const override;
    std::unique_ptr<Policy> snapshot() const override;
    std::optional<std::vector<double>> next_token_distribution(
        const PolicyState& state, std::span<const Token> prefix) const override;

private:
    const PlantedTask& task_for(const Question& question) const;
    std::vector<double> answer_distribution(const PolicyState& state) const;

    OracleReasonerSpec spec_;
    std::unordered_map<std::string, const PlantedTask*> tasks_;
};

// Reasoner that answers the gold letter with a fixed probability, uniform
// over the remaining options otherwise. Test instrument.
class MockReasonerPolicy : public Policy {
public:
    explicit MockReasonerPolicy(double accuracy);

    Sampled sample(const PolicyState& state, double temperature, double nucleus_mass,
                   Rng& rng) const override;
    std::vector<double> token_log_probs(const PolicyState& state,
                                        std::span<const Token> tokens) const override;
    std::unique_ptr<Policy> snapshot() const override;
    std::optional<std::vector<double>> next_token_distribution(
        const PolicyState& state, std::span<const Token> prefix) const override;

private:
    std::vector<double> answer_distribution(const Question& question) const;

    double accuracy_;
};

// Script that proposes one window per planted interval, then accepts.
ScriptedControllerPolicy::Script covering_script(std::span<const PlantedTask> tasks,
                                                 const EnvConfig& config);

}  // namespace segrl
