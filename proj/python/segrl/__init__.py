"""Self-play segment-selection trainer for time-series question answering."""

from _segrl import (
    Engine,
    controller_reward,
    controller_trajectory_score,
    correctness,
    coverage_fraction,
    generate_tasks,
    group_advantages,
    normalize_answer,
    parse_controller,
    parse_reasoner,
    parse_trace,
    reasoner_reward,
    reliability,
    slice_series,
    variance_guided_pick,
)

__all__ = [
    "Engine",
    "controller_reward",
    "controller_trajectory_score",
    "correctness",
    "coverage_fraction",
    "generate_tasks",
    "group_advantages",
    "normalize_answer",
    "parse_controller",
    "parse_reasoner",
    "parse_trace",
    "reasoner_reward",
    "reliability",
    "slice_series",
    "variance_guided_pick",
]
