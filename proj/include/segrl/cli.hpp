#pragma once

#include <optional>
#include <string>

namespace segrl::cli {

// Exit codes shared by the subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;       // config / input errors
inline constexpr int kExitCheckpoint = 3;   // checkpoint corruption during training
inline constexpr int kExitIncompatible = 4; // incompatible or unreadable checkpoint in eval/trace
inline constexpr int kExitUnknownTask = 5;  // trace: task id not in the corpus

// Flag overrides shared by all commands; precedence is
// flag > environment (SEGRL_*) > config file > built-in default.
struct CommonArgs {
    std::string config_path;
    std::optional<long long> seed;
    std::optional<int> workers;
    std::optional<std::string> ablation;
    std::optional<int> steps;
};

struct GenArgs {
    CommonArgs common;
    std::string out_path;
};

struct TrainArgs {
    CommonArgs common;
    std::string corpus_path;
    std::string out_dir;
};

struct EvalArgs {
    CommonArgs common;
    std::string checkpoint_path;
    std::string corpus_path;
    std::string out_dir;
    int limit = 0;              // 0: all tasks
    bool dump_trajectories = false;  // also write trajectories.jsonl
};

struct TraceArgs {
    CommonArgs common;
    std::string checkpoint_path;
    std::string corpus_path;
    std::string task_id;
    std::string out_path;  // optional trace export
};

int run_gen(const GenArgs& args);
int run_train(const TrainArgs& args);
int run_eval(const EvalArgs& args);
int run_trace(const TraceArgs& args);

int main(int argc, char** argv);

}  // namespace segrl::cli
