#include "segrl/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "segrl/checkpoint.hpp"
#include "segrl/config.hpp"
#include "segrl/corpus.hpp"
#include "segrl/evaluate.hpp"
#include "segrl/optimize.hpp"
#include "segrl/trace.hpp"

namespace segrl::cli {

namespace {

namespace fs = std::filesystem;

void apply_flag_overrides(ConfigMap& values, const CommonArgs& args) {
    if (args.seed) values["train.seed"] = std::to_string(*args.seed);
    if (args.workers) values["train.workers"] = std::to_string(*args.workers);
    if (args.ablation) values["train.ablation"] = *args.ablation;
    if (args.steps) values["train.steps"] = std::to_string(*args.steps);
}

EngineConfig resolve_config(const CommonArgs& args) {
    ConfigMap values;
    if (!args.config_path.empty()) values = parse_config_file(args.config_path);
    apply_env_overrides(values);
    apply_flag_overrides(values, args);
    return engine_config_from(values);
}

// Checkpoint-derived config with the usual env/flag overlays on top; the
// checkpoint echo plays the config-file role in the precedence chain.
EngineConfig resolve_from_checkpoint(const nlohmann::json& echo, const CommonArgs& args) {
    ConfigMap values = config_map_from_echo(echo);
    apply_env_overrides(values);
    apply_flag_overrides(values, args);
    return engine_config_from(values);
}

void check_corpus_compatible(const EngineConfig& config, const Corpus& corpus) {
    for (const PlantedTask& task : corpus.tasks) {
        if (task.series.length() != config.env.series_length)
            throw ConfigError("corpus series length does not match the configured grid");
        if (task.question.options.size() != config.env.option_count)
            throw ConfigError("corpus option count does not match the configuration");
    }
}

std::vector<TrainItem> batch_for_step(const std::vector<PlantedTask>& tasks, int step,
                                      int batch_size) {
    std::vector<TrainItem> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    const std::size_t base =
        static_cast<std::size_t>(step - 1) * static_cast<std::size_t>(batch_size);
    for (int j = 0; j < batch_size; ++j) {
        const PlantedTask& task = tasks[(base + static_cast<std::size_t>(j)) % tasks.size()];
        batch.push_back(TrainItem{&task.question, &task.series});
    }
    return batch;
}

// Drop metrics lines past the checkpoint step so a resumed run reproduces
// the uninterrupted file byte for byte.
void truncate_metrics(const fs::path& path, int keep_through_step) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> kept;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded()) break;
        if (doc.contains("step") && doc["step"].is_number_integer() &&
            doc["step"].get<int>() > keep_through_step)
            continue;
        kept.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const std::string& keep : kept) out << keep << '\n';
}

std::string checkpoint_name(int step) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "step_%06d.json", step);
    return buffer;
}

}  // namespace

int run_gen(const GenArgs& args) {
    try {
        const EngineConfig config = resolve_config(args.common);
        const fs::path out(args.out_path);
        if (out.has_parent_path() && !fs::is_directory(out.parent_path()))
            throw ConfigError("output directory does not exist: " +
                              out.parent_path().string());

        const std::vector<PlantedTask> tasks =
            generate_tasks(config.env, config.train.seed,
                           static_cast<std::size_t>(config.task_count));
        nlohmann::json header = {{"config", config_echo(config)}, {"seed", config.train.seed}};
        write_corpus(out, header, tasks);
        std::cout << "wrote " << tasks.size() << " tasks to " << out.string() << "\n";
        return kExitOk;
    } catch (const std::exception& err) {
        std::cerr << "gen: " << err.what() << "\n";
        return kExitConfig;
    }
}

int run_train(const TrainArgs& args) {
    EngineConfig config;
    Corpus corpus;
    try {
        config = resolve_config(args.common);
        corpus = read_corpus(args.corpus_path);
        check_corpus_compatible(config, corpus);
        if (corpus.tasks.empty()) throw ConfigError("corpus has no tasks");
    } catch (const std::exception& err) {
        std::cerr << "train: " << err.what() << "\n";
        return kExitConfig;
    }

    const fs::path out_dir(args.out_dir);
    const fs::path metrics_path = out_dir / "metrics.jsonl";
    int start_step = 0;
    std::unique_ptr<ToyGridPolicy> policy;
    std::optional<nlohmann::json> optimizer_state;

    try {
        fs::create_directories(out_dir);
        const fs::path resume_from = latest_checkpoint(out_dir);
        if (!resume_from.empty()) {
            Checkpoint loaded = load_checkpoint(resume_from);
            // the checkpoint's effective config governs the resumed run so the
            // continuation is bit-identical to an uninterrupted one; env and
            // flag overlays still win when explicitly set
            EngineConfig resumed = resolve_from_checkpoint(loaded.config_echo, args.common);
            resumed.steps = config.steps;
            resumed.train.workers = config.train.workers;
            check_corpus_compatible(resumed, corpus);
            config = resumed;
            policy = std::move(loaded.policy);
            if (!loaded.optimizer_state.is_null()) optimizer_state = loaded.optimizer_state;
            start_step = loaded.step;
            std::cout << "resuming from " << resume_from.string() << " at step " << start_step
                      << "\n";
            truncate_metrics(metrics_path, start_step);
        }
    } catch (const CheckpointError& err) {
        std::cerr << "train: " << err.what() << "\n";
        return kExitCheckpoint;
    } catch (const std::exception& err) {
        std::cerr << "train: " << err.what() << "\n";
        return kExitConfig;
    }

    try {
        if (!policy) policy = std::make_unique<ToyGridPolicy>(config.policy);
        // the reference policy is the (uniform) initial policy
        const std::unique_ptr<Policy> reference =
            std::make_unique<ToyGridPolicy>(config.policy);
        Optimizer optimizer(config.train);
        if (optimizer_state) optimizer.restore(*optimizer_state);

        std::ofstream metrics(metrics_path, std::ios::app);
        if (!metrics) throw ConfigError("cannot write metrics file " + metrics_path.string());
        if (start_step == 0) {
            nlohmann::json header = {{"type", "header"},
                                     {"ablation", ablation_name(config.train.ablation)},
                                     {"config", config_echo(config)}};
            metrics << header.dump() << '\n';
        }

        for (int step = start_step + 1; step <= config.steps; ++step) {
            const std::vector<TrainItem> batch =
                batch_for_step(corpus.tasks, step, config.train.batch_size);
            StepMetrics m =
                train_step(*policy, *reference, batch, config.train, optimizer, step);
            m.step = step;
            metrics << m.to_json().dump() << '\n';
            metrics.flush();
            if (step % config.checkpoint_interval == 0 || step == config.steps)
                save_checkpoint(out_dir / checkpoint_name(step), step, config_echo(config),
                                *policy, optimizer);
            if (step % 50 == 0 || step == config.steps)
                std::cout << "step " << step << "/" << config.steps << " accuracy "
                          << m.accuracy << " reward_ctl " << m.controller_reward << "\n";
        }
        if (config.steps == 0 || start_step >= config.steps)
            save_checkpoint(out_dir / checkpoint_name(std::max(start_step, 0)),
                            std::max(start_step, 0), config_echo(config), *policy, optimizer);
        std::cout << "done; checkpoints in " << out_dir.string() << "\n";
        return kExitOk;
    } catch (const CheckpointError& err) {
        std::cerr << "train: " << err.what() << "\n";
        return kExitCheckpoint;
    } catch (const std::exception& err) {
        std::cerr << "train: " << err.what() << "\n";
        return kExitConfig;
    }
}

int run_eval(const EvalArgs& args) {
    Checkpoint checkpoint;
    try {
        checkpoint = load_checkpoint(args.checkpoint_path);
    } catch (const std::exception& err) {
        std::cerr << "eval: " << err.what() << "\n";
        return kExitIncompatible;
    }

    Corpus corpus;
    EngineConfig config;
    try {
        config = resolve_from_checkpoint(checkpoint.config_echo, args.common);
        corpus = read_corpus(args.corpus_path);
        if (corpus.tasks.empty()) throw ConfigError("corpus has no tasks");
    } catch (const std::exception& err) {
        std::cerr << "eval: " << err.what() << "\n";
        return kExitConfig;
    }

    try {
        check_corpus_compatible(config, corpus);
        if (checkpoint.policy->config().series_length != config.env.series_length)
            throw CheckpointError("checkpoint grid does not match the corpus");
    } catch (const std::exception& err) {
        std::cerr << "eval: " << err.what() << "\n";
        return kExitIncompatible;
    }

    try {
        std::span<const PlantedTask> tasks(corpus.tasks);
        if (args.limit > 0 && static_cast<std::size_t>(args.limit) < tasks.size())
            tasks = tasks.subspan(0, static_cast<std::size_t>(args.limit));

        EvalOptions options;
        options.rollout = config.train.rollout_options();
        options.weights = config.train.weights;
        options.seed = config.train.seed;
        options.rollouts_per_task = config.eval_rollouts;
        options.full_series = config.train.ablation.reasoner_only;
        options.keep_trajectories = args.dump_trajectories;
        options.workers = config.train.workers;

        const EvalSummary summary =
            evaluate(*checkpoint.policy, *checkpoint.policy, tasks, options);

        const fs::path out_dir(args.out_dir);
        fs::create_directories(out_dir);
        {
            nlohmann::json doc = summary.to_json();
            doc["config"] = config_echo(config);
            doc["checkpoint_step"] = checkpoint.step;
            std::ofstream out(out_dir / "summary.json");
            out << doc.dump(2) << '\n';
        }
        {
            std::ofstream out(out_dir / "results.jsonl");
            for (const EvalRecord& record : summary.records)
                out << record.to_json().dump() << '\n';
        }
        if (args.dump_trajectories) {
            std::ofstream out(out_dir / "trajectories.jsonl");
            for (const nlohmann::json& doc : summary.trajectories) out << doc.dump() << '\n';
        }

        std::printf("tasks evaluated: %zu rollouts, accuracy %.4f\n", summary.rollout_count,
                    summary.accuracy);
        std::printf("critical violation rate %.4f, format violation rate %.4f\n",
                    summary.critical_rate, summary.violation_rate);
        std::printf("usage histogram (coverage -> share of questions, accuracy):\n");
        for (std::size_t b = 0; b < summary.bin_count.size(); ++b) {
            std::printf("  %3zu-%3zu%%  %6.2f%%  acc %.4f  (n=%zu)\n", b * 10, (b + 1) * 10,
                        100.0 * summary.bin_fraction[b], summary.bin_accuracy[b],
                        summary.bin_count[b]);
        }
        return kExitOk;
    } catch (const std::exception& err) {
        std::cerr << "eval: " << err.what() << "\n";
        return kExitConfig;
    }
}

int run_trace(const TraceArgs& args) {
    Checkpoint checkpoint;
    try {
        checkpoint = load_checkpoint(args.checkpoint_path);
    } catch (const std::exception& err) {
        std::cerr << "trace: " << err.what() << "\n";
        return kExitIncompatible;
    }

    Corpus corpus;
    EngineConfig config;
    try {
        config = resolve_from_checkpoint(checkpoint.config_echo, args.common);
        corpus = read_corpus(args.corpus_path);
    } catch (const std::exception& err) {
        std::cerr << "trace: " << err.what() << "\n";
        return kExitConfig;
    }

    const auto task_it =
        std::find_if(corpus.tasks.begin(), corpus.tasks.end(),
                     [&](const PlantedTask& t) { return t.id == args.task_id; });
    if (task_it == corpus.tasks.end()) {
        std::cerr << "trace: unknown task id '" << args.task_id << "'\n";
        return kExitUnknownTask;
    }
    const PlantedTask& task = *task_it;

    try {
        const RolloutOptions options = config.train.rollout_options();
        Rng rng = derive_rng(config.train.seed, {fnv1a64(task.id), 0x7ace});
        const RolloutTrajectory trajectory = run_trajectory(
            *checkpoint.policy, *checkpoint.policy, task.question, task.series, options, rng);
        const std::vector<ReasonerResample> resamples = resample_final_reasoner(
            *checkpoint.policy, task.question, task.series, trajectory.final_segments,
            config.train.resample_count, options, rng);

        std::vector<int> correct;
        for (const ReasonerResample& r : resamples)
            correct.push_back(correctness(task.question, r.step.answer));

        RewardBundle bundle;
        bundle.correctness = correctness(task.question, trajectory.final_answer);
        bundle.reliability = reliability(correct);
        bundle.controller_format = score_controller_trajectory(trajectory.controller_steps());
        bundle.reasoner_format = -1.0;
        for (const RolloutRound& round : trajectory.rounds)
            if (round.reasoner) bundle.reasoner_format = round.reasoner->format_score;
        bundle.controller_reward =
            controller_reward(bundle.controller_format, bundle.reliability, config.train.weights);
        bundle.reasoner_reward = reasoner_reward(bundle.correctness, bundle.reasoner_format,
                                                 config.train.weights);
        bundle.group_mean = bundle.reliability;
        bundle.group_variance = population_variance(correct);

        std::printf("task %s\nquestion: %s\ngold: %s\n\n", task.id.c_str(),
                    task.question.prompt.c_str(), task.question.gold.c_str());
        for (std::size_t i = 0; i < trajectory.rounds.size(); ++i) {
            const RolloutRound& round = trajectory.rounds[i];
            std::printf("round %zu [controller] decision=%s f=%.6f%s\n", i + 1,
                        round.controller.decision == DecisionKind::kAccept ? "ACCEPT"
                                                                           : "CONTINUE",
                        round.controller.format_score,
                        round.controller.violation ? "  ** critical violation **" : "");
            std::printf("  think: %s\n", round.controller.think.c_str());
            if (round.controller.proposed_segment) {
                const auto [a, b] = segment_to_wire(*round.controller.proposed_segment);
                std::printf("  segment: [%lld, %lld] (internal [%zu, %zu))\n", a, b,
                            round.controller.proposed_segment->start,
                            round.controller.proposed_segment->end);
            }
            for (Violation v : round.controller_report.violations)
                std::printf("  violation: %s\n", std::string(violation_name(v)).c_str());
            if (round.reasoner) {
                std::printf("  [reasoner] answer=%s score=%.6f\n",
                            round.reasoner->answer.c_str(), round.reasoner->format_score);
                std::printf("  think: %s\n", round.reasoner->think.c_str());
            }
        }
        std::printf("\nterminated_by: %s\nfinal answer: %s\ncoverage: %.4f\n",
                    std::string(termination_name(trajectory.terminated_by)).c_str(),
                    trajectory.final_answer.c_str(),
                    coverage_fraction(trajectory.final_segments, task.series.length()));
        std::printf("reward decomposition:\n");
        std::printf("  F_ctl = %.6f\n  D = %.6f (over %zu resamples, variance %.6f)\n",
                    bundle.controller_format, bundle.reliability, resamples.size(),
                    bundle.group_variance);
        if (bundle.controller_format < 0.0)
            std::printf("  R_ctl = %.6f (hard format failure)\n", bundle.controller_reward);
        else
            std::printf("  R_ctl = %.6f * D + %.6f * F_ctl = %.6f\n",
                        config.train.weights.reliability,
                        config.train.weights.controller_format, bundle.controller_reward);
        std::printf("  c = %d, F_rsn = %.6f\n", bundle.correctness, bundle.reasoner_format);
        std::printf("  R_rsn = %.6f * c + %.6f * F_rsn = %.6f\n",
                    config.train.weights.correctness, config.train.weights.reasoner_format,
                    bundle.reasoner_reward);

        if (!args.out_path.empty()) {
            if (trajectory.final_answer.empty()) {
                std::printf("\ntrace export skipped: trajectory has no final answer\n");
            } else {
                std::ofstream out(args.out_path);
                out << serialize_trace(trajectory.to_core());
                std::printf("\ntrace written to %s\n", args.out_path.c_str());
            }
        }
        return kExitOk;
    } catch (const std::exception& err) {
        std::cerr << "trace: " << err.what() << "\n";
        return kExitConfig;
    }
}

int main(int argc, char** argv) {
    CLI::App app{"self-play segment-selection trainer for time-series QA"};
    app.require_subcommand(1);

    auto add_common = [](CLI::App* cmd, CommonArgs& common) {
        cmd->add_option("--config", common.config_path, "config file (key = value sections)");
        auto* seed = cmd->add_option("--seed", "override train.seed");
        seed->each([&common](const std::string& v) { common.seed = std::stoll(v); });
        auto* workers = cmd->add_option("--workers", "override train.workers");
        workers->each([&common](const std::string& v) { common.workers = std::stoi(v); });
        auto* ablation = cmd->add_option("--ablation", "ablation switches (name or a+b)");
        ablation->each([&common](const std::string& v) { common.ablation = v; });
        auto* steps = cmd->add_option("--steps", "override train.steps");
        steps->each([&common](const std::string& v) { common.steps = std::stoi(v); });
    };

    GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic task corpus");
    add_common(gen_cmd, gen.common);
    gen_cmd->add_option("--out", gen.out_path, "corpus output path")->required();

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "train the two-role policy");
    add_common(train_cmd, train.common);
    train_cmd->add_option("--corpus", train.corpus_path, "task corpus")->required();
    train_cmd->add_option("--out", train.out_dir, "checkpoint/metrics directory")->required();

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    add_common(eval_cmd, eval.common);
    eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--corpus", eval.corpus_path, "task corpus")->required();
    eval_cmd->add_option("--out", eval.out_dir, "output directory")->required();
    eval_cmd->add_option("--limit", eval.limit, "evaluate only the first N tasks");
    eval_cmd->add_flag("--trajectories", eval.dump_trajectories,
                       "also write per-rollout trajectory records (trajectories.jsonl)");

    TraceArgs trace;
    CLI::App* trace_cmd =
        app.add_subcommand("trace", "dump one trajectory and export its reasoning trace");
    add_common(trace_cmd, trace.common);
    trace_cmd->add_option("--checkpoint", trace.checkpoint_path, "checkpoint file")->required();
    trace_cmd->add_option("--corpus", trace.corpus_path, "task corpus")->required();
    trace_cmd->add_option("--task", trace.task_id, "task id")->required();
    trace_cmd->add_option("--out", trace.out_path, "trace export path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    if (gen_cmd->parsed()) return run_gen(gen);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (trace_cmd->parsed()) return run_trace(trace);
    return kExitUsage;
}

}  // namespace segrl::cli
