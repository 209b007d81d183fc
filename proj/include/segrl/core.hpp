#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace segrl {

// A univariate signal of length H. Values are immutable after construction.
struct TimeSeries {
    std::string id;
    std::vector<double> values;

    std::size_t length() const { return values.size(); }
};

// Half-open index range [start, end) into a series. The wire protocol uses
// inclusive bounds; conversion happens at the protocol layer.
struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start; }
    bool valid_for(std::size_t series_length) const {
        return start < end && end <= series_length;
    }
    bool operator==(const Segment&) const = default;
};

// Ordered, append-only list of segments accumulated during a rollout.
struct SegmentList {
    std::vector<Segment> segments;

    void append(Segment s) { segments.push_back(s); }
    std::size_t size() const { return segments.size(); }
    bool empty() const { return segments.empty(); }
    bool operator==(const SegmentList&) const = default;
};

// Multiple-choice question. `gold` is consulted only by reward computation
// and the synthetic oracle; trained policies must not read it.
struct Question {
    std::string id;
    std::string prompt;
    std::vector<std::string> options;  // single capital letters, ordered
    std::string gold;
};

enum class DecisionKind { kContinue, kAccept };

enum class Termination { kAccept, kRoundCap, kCriticalViolation };

// One controller message, parsed.
struct ControllerStep {
    std::string think;
    DecisionKind decision = DecisionKind::kContinue;
    std::optional<Segment> proposed_segment;  // present iff decision == kContinue
    std::string raw_message;
    double format_score = 1.0;  // per-step f_i in [-1, 1]
    bool violation = false;     // critical violation flag
};

// One reasoner message, parsed. `answer` is empty only when the message
// failed answer-block parsing (a critical violation).
struct ReasonerStep {
    std::string think;
    std::string answer;
    std::string raw_message;
    double format_score = 1.0;
};

// One controller-reasoner round. The reasoner entry is absent when the
// controller accepted or the round ended in a critical violation.
struct TrajectoryRound {
    ControllerStep controller;
    std::optional<ReasonerStep> reasoner;
};

// A full interaction episode. final_segments is the in-order union of all
// CONTINUE proposals; accepting never adds a segment.
struct InteractionTrajectory {
    std::vector<TrajectoryRound> rounds;
    SegmentList final_segments;
    std::string final_answer;  // empty when no answer was produced
    Termination terminated_by = Termination::kAccept;

    std::size_t round_count() const { return rounds.size(); }
};

void validate_series(const TimeSeries& series);
void validate_question(const Question& question);

// values[start .. end). Throws std::out_of_range on an invalid segment.
std::vector<double> slice(const TimeSeries& series, Segment seg);

// Fraction of the H timesteps covered by the union of the segments;
// overlaps count once. Throws std::invalid_argument on out-of-bounds input.
double coverage_fraction(const SegmentList& segments, std::size_t series_length);

// Strip whitespace, keep the first line, uppercase. Applied to every answer
// before comparison so "a\nextra" matches gold "A".
std::string normalize_answer(std::string_view text);

}  // namespace segrl
