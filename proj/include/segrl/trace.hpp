#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "segrl/core.hpp"

namespace segrl {

// Interleaved reasoning-trace file format: think blocks alternating with
// segment-selection blocks, closed by a final think and one answer block.
//
//   <think> ... </think>
//   <timeseries_selection_tool> [a, b] </timeseries_selection_tool>
//   ...
//   <think> ... </think>
//   <answer>A</answer>
//
// Bounds inside the tool blocks are inclusive wire bounds.

struct TraceStep {
    std::string think;
    std::optional<Segment> segment;  // present for selection steps, absent for the answer step
};

struct TraceParse {
    bool ok = false;
    std::string error;           // set when !ok
    std::size_t error_pos = 0;   // byte offset of the problem
    std::vector<TraceStep> steps;
    std::string answer;
    std::vector<std::string> lint;  // template-constraint findings, never fatal
};

// Serializes the trajectory's CONTINUE rounds plus its final answer.
// Throws std::invalid_argument if the trajectory has no answer or a think
// text embeds grammar tags (the format cannot escape them).
std::string serialize_trace(const InteractionTrajectory& trajectory);

// `series_length` enables the bounds lint; pass 0 when unknown.
TraceParse parse_trace(std::string_view raw, std::size_t series_length = 0);

}  // namespace segrl
