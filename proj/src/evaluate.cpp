#include "segrl/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <future>

#include "segrl/rewards.hpp"

namespace segrl {

std::size_t coverage_bin(double coverage) {
    const double clamped = std::clamp(coverage, 0.0, 1.0);
    return std::min<std::size_t>(static_cast<std::size_t>(clamped * 10.0), 9);
}

nlohmann::json EvalRecord::to_json() const {
    return {
        {"task", task_id},
        {"rollout", rollout_index},
        {"answer", answer},
        {"correct", correct},
        {"coverage", coverage},
        {"terminated_by", std::string(termination_name(terminated_by))},
        {"controller_format", controller_format},
        {"rounds", rounds},
    };
}

std::size_t EvalSummary::modal_bin() const {
    return static_cast<std::size_t>(
        std::max_element(bin_count.begin(), bin_count.end()) - bin_count.begin());
}

nlohmann::json EvalSummary::to_json() const {
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t b = 0; b < bin_count.size(); ++b) {
        bins.push_back({{"lo", b * 10},
                        {"hi", (b + 1) * 10},
                        {"count", bin_count[b]},
                        {"fraction", bin_fraction[b]},
                        {"accuracy", bin_accuracy[b]}});
    }
    return {
        {"accuracy", accuracy},
        {"rollouts", rollout_count},
        {"usage_histogram", bins},
        {"critical_rate", critical_rate},
        {"violation_rate", violation_rate},
    };
}

EvalSummary evaluate(const Policy& controller, const Policy& reasoner,
                     std::span<const PlantedTask> tasks, const EvalOptions& options) {
    if (options.rollouts_per_task < 1)
        throw std::invalid_argument("evaluate: rollouts per task must be >= 1");

    const std::size_t total =
        tasks.size() * static_cast<std::size_t>(options.rollouts_per_task);
    std::vector<EvalRecord> records(total);
    std::vector<nlohmann::json> trajectory_records(options.keep_trajectories ? total : 0);

    auto run_one = [&](std::size_t index) {
        const std::size_t task_index = index / options.rollouts_per_task;
        const int rollout_index = static_cast<int>(index % options.rollouts_per_task);
        const PlantedTask& task = tasks[task_index];
        Rng rng = derive_rng(options.seed, {static_cast<std::uint64_t>(task_index),
                                            static_cast<std::uint64_t>(rollout_index), 0xe7a1ull});

        EvalRecord record;
        record.task_id = task.id;
        record.rollout_index = rollout_index;

        if (options.full_series) {
            SegmentList full;
            full.append(Segment{0, task.series.length()});
            const PolicyState state = make_reasoner_state(task.question, task.series, full, 1);
            const Sampled sampled =
                sample_reasoner(reasoner, state, options.rollout.reasoner_temperature,
                                options.rollout.nucleus_mass, rng);
            const ReasonerParse parsed = parse_reasoner(sampled.raw);
            record.answer = parsed.step.answer;
            record.correct = correctness(task.question, parsed.step.answer);
            record.coverage = 1.0;
            record.terminated_by = Termination::kAccept;
            record.controller_format = 1.0;
            record.rounds = 1;
        } else {
            const RolloutTrajectory trajectory =
                run_trajectory(controller, reasoner, task.question, task.series,
                               options.rollout, rng);
            record.answer = trajectory.final_answer;
            record.correct = correctness(task.question, trajectory.final_answer);
            record.coverage = coverage_fraction(trajectory.final_segments, task.series.length());
            record.terminated_by = trajectory.terminated_by;
            record.controller_format =
                score_controller_trajectory(trajectory.controller_steps());
            record.rounds = trajectory.round_count();
            if (options.keep_trajectories) {
                nlohmann::json doc = trajectory_to_json(trajectory);
                doc["task"] = task.id;
                trajectory_records[index] = std::move(doc);
            }
        }
        records[index] = std::move(record);
    };

    const int workers = std::max(1, options.workers);
    if (workers <= 1 || total < 2) {
        for (std::size_t i = 0; i < total; ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> futures;
        for (int w = 0; w < std::min<int>(workers, static_cast<int>(total)); ++w)
            futures.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1))
                    run_one(i);
            }));
        for (auto& f : futures) f.get();
    }

    EvalSummary summary;
    summary.rollout_count = total;
    std::vector<std::size_t> bin_correct(10, 0);
    std::size_t correct_total = 0, critical = 0, violated = 0;
    for (const EvalRecord& record : records) {
        const std::size_t bin = coverage_bin(record.coverage);
        ++summary.bin_count[bin];
        bin_correct[bin] += static_cast<std::size_t>(record.correct);
        correct_total += static_cast<std::size_t>(record.correct);
        if (record.terminated_by == Termination::kCriticalViolation) ++critical;
        if (record.controller_format < 0.0) ++violated;
    }
    summary.accuracy = total == 0 ? 0.0 : static_cast<double>(correct_total) / total;
    summary.critical_rate = total == 0 ? 0.0 : static_cast<double>(critical) / total;
    summary.violation_rate = total == 0 ? 0.0 : static_cast<double>(violated) / total;
    for (std::size_t b = 0; b < 10; ++b) {
        summary.bin_fraction[b] =
            total == 0 ? 0.0 : static_cast<double>(summary.bin_count[b]) / total;
        summary.bin_accuracy[b] = summary.bin_count[b] == 0
                                      ? 0.0
                                      : static_cast<double>(bin_correct[b]) /
                                            static_cast<double>(summary.bin_count[b]);
    }
    summary.records = std::move(records);
    summary.trajectories = std::move(trajectory_records);
    return summary;
}

}  // namespace segrl
