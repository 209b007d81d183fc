#include <doctest.h>

#include "segrl/rollout.hpp"
#include "segrl/synthenv.hpp"
#include "segrl/toy_policy.hpp"

using namespace segrl;

namespace {

struct Fixture {
    EnvConfig env;
    std::vector<PlantedTask> tasks;
    RolloutOptions options;

    Fixture() {
        env.series_length = 64;
        env.window_count = 4;
        tasks = generate_tasks(env, 555, 8);
        options.max_rounds = 4;
    }
    const PlantedTask& task() const { return tasks.front(); }
    std::vector<Segment> windows() const {
        std::vector<Segment> w;
        const std::size_t len = env.region_length();
        for (std::size_t i = 0; i < env.window_count; ++i)
            w.push_back(Segment{i * len, (i + 1) * len});
        return w;
    }
};

ScriptedControllerPolicy script_of(const Fixture& fx, std::vector<ScriptedAction> actions) {
    return ScriptedControllerPolicy(fx.windows(),
                                    [actions](const Question&) { return actions; });
}

// controller that always emits a raw ACCEPT regardless of round
struct AlwaysAccept : Policy {
    Sampled sample(const PolicyState&, double, double, Rng&) const override {
        Sampled s;
        s.raw = render_controller_accept("stop");
        s.tokens = {1};
        s.logprobs = {0.0};
        return s;
    }
    std::vector<double> token_log_probs(const PolicyState&,
                                        std::span<const Token> t) const override {
        return std::vector<double>(t.size(), 0.0);
    }
    std::unique_ptr<Policy> snapshot() const override { return std::make_unique<AlwaysAccept>(); }
};

// controller that never accepts
struct NeverAccept : Policy {
    Segment window;
    explicit NeverAccept(Segment w) : window(w) {}
    Sampled sample(const PolicyState&, double, double, Rng&) const override {
        Sampled s;
        s.raw = render_controller_continue("more", window);
        s.tokens = {0, 0};
        s.logprobs = {0.0, 0.0};
        return s;
    }
    std::vector<double> token_log_probs(const PolicyState&,
                                        std::span<const Token> t) const override {
        return std::vector<double>(t.size(), 0.0);
    }
    std::unique_ptr<Policy> snapshot() const override {
        return std::make_unique<NeverAccept>(window);
    }
};

// reasoner probe asserting it only ever sees the selected slices
struct ProbeReasoner : Policy {
    mutable std::vector<std::size_t> seen_counts;
    Sampled sample(const PolicyState& state, double, double, Rng&) const override {
        REQUIRE(state.role == Role::kReasoner);
        REQUIRE(state.series == nullptr);
        REQUIRE(state.views.size() == state.segments.size());
        for (std::size_t i = 0; i < state.views.size(); ++i) {
            CHECK(state.views[i].segment == state.segments.segments[i]);
            CHECK(state.views[i].values.size() == state.segments.segments[i].length());
        }
        seen_counts.push_back(state.segments.size());
        Sampled s;
        s.raw = render_reasoner_message("probe", "A");
        s.tokens = {0};
        s.logprobs = {0.0};
        return s;
    }
    std::vector<double> token_log_probs(const PolicyState&,
                                        std::span<const Token> t) const override {
        return std::vector<double>(t.size(), 0.0);
    }
    std::unique_ptr<Policy> snapshot() const override {
        return std::make_unique<ProbeReasoner>();
    }
};

}  // namespace

TEST_CASE("scripted continue-then-accept trajectory") {
    const Fixture fx;
    const auto controller = script_of(fx, {{false, 0}, {true, 0}});
    OracleReasonerPolicy oracle({0.8, 1.0}, fx.tasks);
    Rng rng(8);

    const RolloutTrajectory t = run_trajectory(controller, oracle, fx.task().question,
                                               fx.task().series, fx.options, rng);
    CHECK(t.round_count() == 2);
    CHECK(t.terminated_by == Termination::kAccept);
    REQUIRE(t.final_segments.size() == 1);
    CHECK(t.final_segments.segments[0] == fx.windows()[0]);
    REQUIRE(t.rounds[0].reasoner.has_value());
    CHECK(t.final_answer == t.rounds[0].reasoner->answer);
    // accepting never adds a segment
    CHECK_FALSE(t.rounds[1].controller.proposed_segment.has_value());
}

TEST_CASE("accept on the first round is a critical violation with an empty answer") {
    const Fixture fx;
    const AlwaysAccept controller;
    OracleReasonerPolicy oracle({0.8, 1.0}, fx.tasks);
    Rng rng(9);

    const RolloutTrajectory t = run_trajectory(controller, oracle, fx.task().question,
                                               fx.task().series, fx.options, rng);
    CHECK(t.terminated_by == Termination::kCriticalViolation);
    CHECK(t.final_answer.empty());
    CHECK(t.round_count() == 1);
    // downstream: the trajectory format score hard-fails
    CHECK(score_controller_trajectory(t.controller_steps()) == -1.0);
    CHECK(correctness(fx.task().question, t.final_answer) == 0);
}

TEST_CASE("round cap keeps the last reasoner answer and counts as non-accepting") {
    const Fixture fx;
    const NeverAccept controller(fx.windows()[1]);
    OracleReasonerPolicy oracle({0.8, 1.0}, fx.tasks);
    Rng rng(10);

    const RolloutTrajectory t = run_trajectory(controller, oracle, fx.task().question,
                                               fx.task().series, fx.options, rng);
    CHECK(t.round_count() == 4);
    CHECK(t.terminated_by == Termination::kRoundCap);
    REQUIRE(t.rounds.back().reasoner.has_value());
    CHECK(t.final_answer == t.rounds.back().reasoner->answer);
    CHECK(score_controller_trajectory(t.controller_steps()) == -1.0);
}

TEST_CASE("reasoner conditions on exactly the accumulated segments") {
    const Fixture fx;
    const auto controller = script_of(fx, {{false, 0}, {false, 2}, {true, 0}});
    ProbeReasoner probe;
    Rng rng(11);
    run_trajectory(controller, probe, fx.task().question, fx.task().series, fx.options, rng);
    CHECK(probe.seen_counts == std::vector<std::size_t>{1, 2});
}

TEST_CASE("resampling a deterministic reasoner repeats the answer") {
    const Fixture fx;
    OracleReasonerPolicy oracle({0.8, 1.0}, fx.tasks);
    SegmentList full;
    full.append(Segment{0, fx.env.series_length});
    Rng rng(12);
    const auto resamples = resample_final_reasoner(oracle, fx.task().question, fx.task().series,
                                                   full, 6, fx.options, rng);
    REQUIRE(resamples.size() == 6);
    for (const auto& r : resamples) CHECK(r.step.answer == fx.task().question.gold);
}

TEST_CASE("mock reasoner resample counts follow the binomial rate") {
    const Fixture fx;
    MockReasonerPolicy mock(0.7);
    Rng rng(13);
    const auto resamples = resample_final_reasoner(mock, fx.task().question, fx.task().series,
                                                   {}, 10000, fx.options, rng);
    int correct = 0;
    for (const auto& r : resamples)
        correct += correctness(fx.task().question, r.step.answer);
    CHECK(std::abs(correct - 7000) <= 200);
}

TEST_CASE("run_group shapes and group statistics") {
    const Fixture fx;
    const auto controller = script_of(fx, {{false, 0}, {true, 0}});
    MockReasonerPolicy mock(0.7);
    Rng rng(14);

    const GroupRollout group = run_group(controller, mock, fx.task().question, fx.task().series,
                                         6, 6, fx.options, rng);
    CHECK(group.trajectories.size() == 6);
    for (int g = 0; g < 6; ++g) {
        CHECK(group.resamples[g].size() == 6);
        // r_mu equals the reliability of the same indicator set, exactly
        CHECK(group.group_mean[g] == reliability(group.resample_correct[g]));
        CHECK(group.group_variance[g] == population_variance(group.resample_correct[g]));
    }
}

TEST_CASE("degenerate and hand-computed group statistics") {
    CHECK(reliability(std::vector<int>{1, 1, 1, 1, 1, 1}) == 1.0);
    CHECK(population_variance(std::vector<int>{1, 1, 1, 1, 1, 1}) == 0.0);
    CHECK(reliability(std::vector<int>{1, 1, 0, 0, 0, 0}) == doctest::Approx(1.0 / 3.0));
    CHECK(population_variance(std::vector<int>{1, 1, 0, 0, 0, 0}) == doctest::Approx(2.0 / 9.0));
}

TEST_CASE("run_group is bit-reproducible under a fixed seed") {
    const Fixture fx;
    ToyGridConfig pc;
    pc.series_length = fx.env.series_length;
    pc.window_count = fx.env.window_count;
    const ToyGridPolicy policy(pc);

    auto run_once = [&](std::uint64_t seed) {
        Rng rng(seed);
        return run_group(policy, policy, fx.task().question, fx.task().series, 4, 4, fx.options,
                         rng);
    };
    const GroupRollout a = run_once(777);
    const GroupRollout b = run_once(777);
    REQUIRE(a.trajectories.size() == b.trajectories.size());
    for (std::size_t g = 0; g < a.trajectories.size(); ++g) {
        CHECK(a.trajectories[g].final_answer == b.trajectories[g].final_answer);
        CHECK(a.trajectories[g].final_segments == b.trajectories[g].final_segments);
        CHECK(a.group_mean[g] == b.group_mean[g]);
        CHECK(a.group_variance[g] == b.group_variance[g]);
        for (std::size_t r = 0;  r < a.resamples[g].size(); ++r)
            CHECK(a.resamples[g][r].step.raw_message == b.resamples[g][r].step.raw_message);
    }
    const GroupRollout c = run_once(778);
    bool any_different = false;
    for (std::size_t g = 0; g < a.trajectories.size(); ++g)
        any_different = any_different ||
                        a.trajectories[g].to_core().rounds.size() != c.trajectories[g].rounds.size() ||
                        a.resamples[g][0].step.raw_message != c.resamples[g][0].step.raw_message;
    CHECK(any_different);
}

TEST_CASE("trajectory audit record carries the essentials") {
    const Fixture fx;
    const auto controller = script_of(fx, {{false, 1}, {true, 0}});
    OracleReasonerPolicy oracle({0.8, 1.0}, fx.tasks);
    Rng rng(15);
    const RolloutTrajectory t = run_trajectory(controller, oracle, fx.task().question,
                                               fx.task().series, fx.options, rng);
    const nlohmann::json doc = trajectory_to_json(t);
    CHECK(doc["terminated_by"] == "accept");
    CHECK(doc["rounds"].size() == 2);
    CHECK(doc["rounds"][0]["controller"]["decision"] == "continue");
    CHECK(doc["rounds"][0]["reasoner"]["answer"] == t.rounds[0].reasoner->answer);
    CHECK(doc["final_segments"].size() == 1);
}

TEST_CASE("rollout invariants hold under corrupted stochastic policies") {
    const Fixture fx;
    ToyGridConfig pc;
    pc.series_length = fx.env.series_length;
    pc.window_count = fx.env.window_count;
    pc.corrupt_controller = 0.3;
    pc.corrupt_reasoner = 0.3;
    const ToyGridPolicy policy(pc);

    Rng rng(4242);
    for (int trial = 0; trial < 300; ++trial) {
        const PlantedTask& task = fx.tasks[trial % fx.tasks.size()];
        const RolloutTrajectory t =
            run_trajectory(policy, policy, task.question, task.series, fx.options, rng);

        REQUIRE(t.round_count() >= 1);
        CHECK(t.round_count() <= static_cast<std::size_t>(fx.options.max_rounds));

        // final segments are exactly the in-order CONTINUE proposals
        SegmentList expected;
        for (const RolloutRound& round : t.rounds)
            if (round.controller.proposed_segment)
                expected.append(*round.controller.proposed_segment);
        CHECK(t.final_segments == expected);

        const RolloutRound& last = t.rounds.back();
        switch (t.terminated_by) {
            case Termination::kAccept:
                CHECK(last.controller.decision == DecisionKind::kAccept);
                CHECK_FALSE(last.controller.violation);
                CHECK_FALSE(last.reasoner.has_value());
                CHECK_FALSE(t.final_answer.empty());
                break;
            case Termination::kCriticalViolation:
                CHECK(last.controller.violation);
                CHECK(t.final_answer.empty());
                break;
            case Termination::kRoundCap:
                CHECK(t.round_count() == static_cast<std::size_t>(fx.options.max_rounds));
                CHECK(last.controller.decision == DecisionKind::kContinue);
                break;
        }
        // every non-final round with a segment also carries a reasoner step
        for (std::size_t i = 0; i < t.rounds.size(); ++i) {
            const RolloutRound& round = t.rounds[i];
            CHECK(round.controller.proposed_segment.has_value() ==
                  round.reasoner.has_value());
            if (round.controller.proposed_segment)
                CHECK(round.controller.proposed_segment->valid_for(task.series.length()));
        }
        // trajectory-level score stays in the contract range
        const double score = score_controller_trajectory(t.controller_steps());
        CHECK((score == -1.0 || (score >= 0.0 && score <= 1.0)));
    }
}

TEST_CASE("trajectory score equals the step mean exactly when nothing fires") {
    Rng rng(909);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t rounds = 1 + rng.uniform_index(5);
        std::vector<ControllerStep> steps;
        double sum = 0.0;
        for (std::size_t i = 0; i < rounds; ++i) {
            ControllerStep s;
            s.format_score = 0.25 * static_cast<double>(rng.uniform_index(5));  // {0,...,1}
            s.violation = false;
            const bool is_final = i + 1 == rounds;
            s.decision = is_final ? DecisionKind::kAccept : DecisionKind::kContinue;
            if (!is_final) s.proposed_segment = Segment{0, 8};
            sum += s.format_score;
            steps.push_back(s);
        }
        CHECK(score_controller_trajectory(steps) ==
              sum / static_cast<double>(steps.size()));
    }
}
