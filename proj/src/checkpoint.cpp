#include "segrl/checkpoint.hpp"

#include <fstream>

namespace segrl {

namespace {
constexpr const char* kFormat = "segrl-checkpoint";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json policy_to_json(const ToyGridPolicy& policy) {
    const ToyGridConfig& c = policy.config();
    return {
        {"kind", "toy_grid"},
        {"config",
         {{"series_length", c.series_length},
          {"window_count", c.window_count},
          {"option_count", c.option_count},
          {"round_features", c.round_features},
          {"coverage_buckets", c.coverage_buckets},
          {"question_tags", c.question_tags},
          {"event_threshold", c.event_threshold},
          {"sustained_run", c.sustained_run},
          {"corrupt_controller", c.corrupt_controller},
          {"corrupt_reasoner", c.corrupt_reasoner}}},
        {"parameters", policy.parameters()},
    };
}

std::unique_ptr<ToyGridPolicy> policy_from_json(const nlohmann::json& doc) {
    if (doc.at("kind").get<std::string>() != "toy_grid")
        throw CheckpointError("unsupported policy kind");
    const nlohmann::json& c = doc.at("config");
    ToyGridConfig config;
    config.series_length = c.at("series_length").get<std::size_t>();
    config.window_count = c.at("window_count").get<std::size_t>();
    config.option_count = c.at("option_count").get<std::size_t>();
    config.round_features = c.at("round_features").get<int>();
    config.coverage_buckets = c.at("coverage_buckets").get<std::size_t>();
    config.question_tags = c.at("question_tags").get<std::size_t>();
    config.event_threshold = c.at("event_threshold").get<double>();
    config.sustained_run = c.at("sustained_run").get<std::size_t>();
    config.corrupt_controller = c.at("corrupt_controller").get<double>();
    config.corrupt_reasoner = c.at("corrupt_reasoner").get<double>();

    auto policy = std::make_unique<ToyGridPolicy>(config);
    const auto params = doc.at("parameters").get<std::vector<double>>();
    if (params.size() != policy->param_count())
        throw CheckpointError("checkpoint parameter count mismatch");
    policy->set_parameters(params);
    return policy;
}

void save_checkpoint(const std::filesystem::path& path, int step,
                     const nlohmann::json& config_echo, const ToyGridPolicy& policy,
                     const Optimizer& optimizer) {
    nlohmann::json doc = {
        {"format", kFormat},
        {"version", kVersion},
        {"step", step},
        {"config", config_echo},
        {"policy", policy_to_json(policy)},
        {"optimizer", optimizer.to_json()},
    };
    std::filesystem::create_directories(path.parent_path());
    // write-then-rename so a crash never leaves a truncated checkpoint behind
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
        out << doc.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw CheckpointError("corrupt checkpoint " + path.string());
    try {
        if (doc.at("format").get<std::string>() != kFormat ||
            doc.at("version").get<int>() != kVersion)
            throw CheckpointError("unrecognized checkpoint format in " + path.string());
        Checkpoint out;
        out.step = doc.at("step").get<int>();
        out.config_echo = doc.at("config");
        out.policy = policy_from_json(doc.at("policy"));
        out.optimizer_state = doc.value("optimizer", nlohmann::json());
        return out;
    } catch (const nlohmann::json::exception& err) {
        throw CheckpointError("corrupt checkpoint " + path.string() + ": " + err.what());
    }
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& dir) {
    std::filesystem::path best;
    long best_step = -1;
    if (!std::filesystem::is_directory(dir)) return best;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("step_", 0) != 0 || entry.path().extension() != ".json") continue;
        try {
            const long step = std::stol(name.substr(5, name.size() - 10));
            if (step > best_step) {
                best_step = step;
                best = entry.path();
            }
        } catch (...) {
            continue;
        }
    }
    return best;
}

}  // namespace segrl
