#include "segrl/rollout.hpp"

#include <stdexcept>

namespace segrl {

InteractionTrajectory RolloutTrajectory::to_core() const {
    InteractionTrajectory out;
    out.rounds.reserve(rounds.size());
    for (const RolloutRound& round : rounds)
        out.rounds.push_back(TrajectoryRound{round.controller, round.reasoner});
    out.final_segments = final_segments;
    out.final_answer = final_answer;
    out.terminated_by = terminated_by;
    return out;
}

std::vector<ControllerStep> RolloutTrajectory::controller_steps() const {
    std::vector<ControllerStep> steps;
    steps.reserve(rounds.size());
    for (const RolloutRound& round : rounds) steps.push_back(round.controller);
    return steps;
}

RolloutTrajectory run_trajectory(const Policy& controller, const Policy& reasoner,
                                 const Question& question, const TimeSeries& series,
                                 const RolloutOptions& options, Rng& rng) {
    if (options.max_rounds < 1) throw std::invalid_argument("run_trajectory: max_rounds >= 1");

    RolloutTrajectory out;
    SegmentList segments;
    std::string prior_answer;
    std::string prior_trace;

    for (int round_index = 1; round_index <= options.max_rounds; ++round_index) {
        const PolicyState ctl_state = make_controller_state(question, series, segments,
                                                            prior_answer, prior_trace,
                                                            round_index);
        const Sampled sampled = sample_controller(controller, ctl_state,
                                                  options.controller_temperature,
                                                  options.nucleus_mass, rng);
        ControllerParse parsed = parse_controller(
            sampled.raw,
            ControllerParseContext{series.length(), /*accept_allowed=*/!prior_answer.empty()});

        RolloutRound round;
        round.controller = std::move(parsed.step);
        round.controller_report = std::move(parsed.report);
        round.controller_sample = MessageSample{sampled.tokens, sampled.logprobs};

        if (round.controller_report.critical) {
            out.rounds.push_back(std::move(round));
            out.terminated_by = Termination::kCriticalViolation;
            out.final_answer.clear();
            out.final_segments = segments;
            return out;
        }
        if (round.controller.decision == DecisionKind::kAccept) {
            out.rounds.push_back(std::move(round));
            out.terminated_by = Termination::kAccept;
            out.final_answer = prior_answer;
            out.final_segments = segments;
            return out;
        }

        if (!round.controller.proposed_segment)
            throw std::logic_error("non-critical CONTINUE step without a segment");
        segments.append(*round.controller.proposed_segment);

        const PolicyState rsn_state =
            make_reasoner_state(question, series, segments, round_index);
        const Sampled rsampled = sample_reasoner(reasoner, rsn_state,
                                                 options.reasoner_temperature,
                                                 options.nucleus_mass, rng);
        ReasonerParse rparsed = parse_reasoner(rsampled.raw);
        prior_answer = rparsed.step.answer;
        prior_trace = rparsed.step.think;
        round.reasoner = std::move(rparsed.step);
        round.reasoner_report = std::move(rparsed.report);
        round.reasoner_sample = MessageSample{rsampled.tokens, rsampled.logprobs};
        out.rounds.push_back(std::move(round));
    }

    // round cap: the last reasoner answer stands, and the missing terminal
    // ACCEPT later fires the trajectory-level violation indicator
    out.terminated_by = Termination::kRoundCap;
    out.final_answer = prior_answer;
    out.final_segments = segments;
    return out;
}

std::vector<ReasonerResample> resample_final_reasoner(const Policy& reasoner,
                                                      const Question& question,
                                                      const TimeSeries& series,
                                                      const SegmentList& final_segments,
                                                      int count, const RolloutOptions& options,
                                                      Rng& rng) {
    if (count < 1) throw std::invalid_argument("resample_final_reasoner: count >= 1");
    const int round_index = std::max<int>(1, static_cast<int>(final_segments.size()));
    const PolicyState state =
        make_reasoner_state(question, series, final_segments, round_index);

    std::vector<ReasonerResample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        const Sampled sampled = sample_reasoner(reasoner, state, options.reasoner_temperature,
                                                options.nucleus_mass, rng);
        ReasonerParse parsed = parse_reasoner(sampled.raw);
        out.push_back(ReasonerResample{std::move(parsed.step), std::move(parsed.report),
                                       MessageSample{sampled.tokens, sampled.logprobs}});
    }
    return out;
}

GroupRollout run_group(const Policy& controller, const Policy& reasoner,
                       const Question& question, const TimeSeries& series, int group_size,
                       int resample_count, const RolloutOptions& options, Rng& rng) {
    if (group_size < 2) throw std::invalid_argument("run_group: group size >= 2");
    if (resample_count < 1) throw std::invalid_argument("run_group: resample count >= 1");

    GroupRollout out;
    const std::uint64_t base = rng.next_u64();
    for (int g = 0; g < group_size; ++g) {
        Rng traj_rng = derive_rng(base, {static_cast<std::uint64_t>(g), 0x11ull});
        RolloutTrajectory trajectory =
            run_trajectory(controller, reasoner, question, series, options, traj_rng);
        trajectory.seed = base;

        Rng resample_rng = derive_rng(base, {static_cast<std::uint64_t>(g), 0x22ull});
        std::vector<ReasonerResample> resamples =
            resample_final_reasoner(reasoner, question, series, trajectory.final_segments,
                                    resample_count, options, resample_rng);

        std::vector<int> correct;
        correct.reserve(resamples.size());
        for (const ReasonerResample& r : resamples)
            correct.push_back(correctness(question, r.step.answer));

        out.group_mean.push_back(reliability(correct));
        out.group_variance.push_back(population_variance(correct));
        out.trajectories.push_back(std::move(trajectory));
        out.resamples.push_back(std::move(resamples));
        out.resample_correct.push_back(std::move(correct));
    }
    return out;
}

std::string_view termination_name(Termination t) {
    switch (t) {
        case Termination::kAccept: return "accept";
        case Termination::kRoundCap: return "round_cap";
        case Termination::kCriticalViolation: return "critical_violation";
    }
    return "unknown";
}

nlohmann::json trajectory_to_json(const RolloutTrajectory& trajectory) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const RolloutRound& round : trajectory.rounds) {
        nlohmann::json ctl = {
            {"raw", round.controller.raw_message},
            {"think", round.controller.think},
            {"decision",
             round.controller.decision == DecisionKind::kAccept ? "accept" : "continue"},
            {"format_score", round.controller.format_score},
            {"critical", round.controller.violation},
        };
        if (round.controller.proposed_segment)
            ctl["segment"] = {round.controller.proposed_segment->start,
                              round.controller.proposed_segment->end};
        nlohmann::json violations = nlohmann::json::array();
        for (Violation v : round.controller_report.violations)
            violations.push_back(std::string(violation_name(v)));
        ctl["violations"] = violations;

        nlohmann::json entry = {{"controller", ctl}};
        if (round.reasoner) {
            entry["reasoner"] = {
                {"raw", round.reasoner->raw_message},
                {"think", round.reasoner->think},
                {"answer", round.reasoner->answer},
                {"format_score", round.reasoner->format_score},
            };
        }
        rounds.push_back(entry);
    }
    nlohmann::json segments = nlohmann::json::array();
    for (const Segment& s : trajectory.final_segments.segments)
        segments.push_back({s.start, s.end});
    return {
        {"rounds", rounds},
        {"final_segments", segments},
        {"final_answer", trajectory.final_answer},
        {"terminated_by", std::string(termination_name(trajectory.terminated_by))},
        {"seed", trajectory.seed},
    };
}

}  // namespace segrl
