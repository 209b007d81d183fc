#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segrl/core.hpp"

namespace segrl {

// Block tags of the message grammar. The tool-call payload is a JSON record
// naming "timeseries_selection_tool" with an inclusive [start, end] pair under
// "ts_seg"; internal segments are half-open, so wire [a, b] maps to [a, b+1).
namespace grammar {
inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";
inline constexpr std::string_view kToolCallOpen = "<tool_call>";
inline constexpr std::string_view kToolCallClose = "</tool_call>";
inline constexpr std::string_view kTraceToolOpen = "<timeseries_selection_tool>";
inline constexpr std::string_view kTraceToolClose = "</timeseries_selection_tool>";
inline constexpr std::string_view kToolName = "timeseries_selection_tool";
inline constexpr std::string_view kAcceptKeyword = "ACCEPT";
}  // namespace grammar

enum class Violation {
    // non-critical: each distinct class deducts 0.25 from the format score
    kMissingThink,
    kMultipleThink,
    kStrayText,
    kMultipleAnswer,
    kAnswerInsideThink,
    kUnknownToolKey,
    // critical: format score is forced to -1
    kMissingAnswer,
    kNoDecision,
    kDualDecision,
    kInvalidToolCall,
    kSegmentOutOfBounds,
    kSegmentDegenerate,
    kInvalidAccept,
    kAcceptWithoutPriorAnswer,
};

std::string_view violation_name(Violation v);
bool violation_is_critical(Violation v);

struct FormatReport {
    double score = 1.0;  // in {-1} ∪ [0, 1]
    bool critical = false;
    std::vector<Violation> violations;

    bool has(Violation v) const;
};

// Context a controller message is parsed against. `accept_allowed` is false
// on the first round, when no reasoner answer exists to accept.
struct ControllerParseContext {
    std::size_t series_length = 0;
    bool accept_allowed = true;
};

struct ReasonerParse {
    ReasonerStep step;
    FormatReport report;
};

struct ControllerParse {
    ControllerStep step;
    FormatReport report;
};

// Total over arbitrary text: malformations land in the report, never throw.
ReasonerParse parse_reasoner(std::string_view raw);
ControllerParse parse_controller(std::string_view raw, const ControllerParseContext& ctx);

// Trajectory-level controller format score:
//   (1 - I_viol) * mean(f_i) - I_viol
// where I_viol fires on any critical step, on a non-final step that is not a
// segment selection, or on a final step that is not ACCEPT.
// Throws std::invalid_argument on an empty step sequence.
double score_controller_trajectory(std::span<const ControllerStep> steps);

// Render helpers used by policies so every emitted message goes through the
// same grammar the parser checks.
std::string render_think(std::string_view think);
std::string render_reasoner_message(std::string_view think, std::string_view answer);
std::string render_controller_continue(std::string_view think, Segment seg);
std::string render_controller_accept(std::string_view think);

// Wire bounds are inclusive: [a, b] <-> internal [a, b+1).
Segment segment_from_wire(long long wire_start, long long wire_end);
std::pair<long long, long long> segment_to_wire(Segment seg);

}  // namespace segrl
