#include "segrl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace segrl {

namespace {

std::string trim(std::string_view text) {
    std::size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    return std::string(text.substr(b, e - b));
}

const char* const kKnownKeys[] = {
    "train.group_size", "train.resample_count", "train.batch_size", "train.max_rounds",
    "train.learning_rate", "train.kl_coeff", "train.controller_temperature",
    "train.reasoner_temperature", "train.nucleus_mass", "train.advantage_epsilon",
    "train.optimizer", "train.adam_beta1", "train.adam_beta2", "train.adam_epsilon",
    "train.weight_decay", "train.kl_mode", "train.seed", "train.workers", "train.steps",
    "train.checkpoint_interval", "train.ablation",
    "rewards.reliability_weight", "rewards.controller_format_weight",
    "rewards.correctness_weight", "rewards.reasoner_format_weight",
    "env.series_length", "env.window_count", "env.option_count", "env.two_interval",
    "env.noise_sigma", "env.amplitude", "env.spike_width", "env.min_region_gap",
    "env.coverage_threshold", "env.oracle_accuracy", "env.task_count",
    "policy.question_tags", "policy.coverage_buckets", "policy.round_features",
    "policy.event_threshold", "policy.sustained_run", "policy.corrupt_controller",
    "policy.corrupt_reasoner",
    "eval.rollouts",
};

bool known_key(const std::string& key) {
    return std::find_if(std::begin(kKnownKeys), std::end(kKnownKeys),
                        [&](const char* k) { return key == k; }) != std::end(kKnownKeys);
}

struct Reader {
    const ConfigMap& values;

    std::string get(const std::string& key, std::string fallback) const {
        const auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
    long long get_int(const std::string& key, long long fallback) const {
        const auto it = values.find(key);
        if (it == values.end()) return fallback;
        try {
            std::size_t used = 0;
            const long long v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing text");
            return v;
        } catch (...) {
            throw ConfigError("config: bad integer for " + key + ": '" + it->second + "'");
        }
    }
    double get_double(const std::string& key, double fallback) const {
        const auto it = values.find(key);
        if (it == values.end()) return fallback;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing text");
            return v;
        } catch (...) {
            throw ConfigError("config: bad number for " + key + ": '" + it->second + "'");
        }
    }
    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values.find(key);
        if (it == values.end()) return fallback;
        std::string v = it->second;
        std::transform(v.begin(), v.end(), v.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("config: bad boolean for " + key + ": '" + it->second + "'");
    }
};

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
    ConfigMap out;
    std::string section;
    std::istringstream stream{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        const std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        const std::string body = trim(line);
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unterminated section header");
            section = trim(body.substr(1, body.size() - 2));
            continue;
        }
        const std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        if (!known_key(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                              key + "'");
        out[key] = value;
    }
    return out;
}

ConfigMap parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

void apply_env_overrides(ConfigMap& config, const char* prefix) {
    const std::string pre(prefix);
    for (char** env = environ; env != nullptr && *env != nullptr; ++env) {
        const std::string entry(*env);
        if (entry.rfind(pre, 0) != 0) continue;
        const std::size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(pre.size(), eq - pre.size());
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        // SECTION_KEY -> section.key (first underscore splits the section)
        const std::size_t underscore = name.find('_');
        if (underscore == std::string::npos) continue;
        const std::string key = name.substr(0, underscore) + "." + name.substr(underscore + 1);
        if (!known_key(key)) throw ConfigError("environment override for unknown key '" + key + "'");
        config[key] = entry.substr(eq + 1);
    }
}

void EngineConfig::validate() const {
    train.validate();
    env.validate();
    policy.validate();
    if (steps < 0) throw ConfigError("config: steps must be >= 0");
    if (checkpoint_interval < 1) throw ConfigError("config: checkpoint interval must be >= 1");
    if (task_count < 1) throw ConfigError("config: task count must be >= 1");
    if (eval_rollouts < 1) throw ConfigError("config: eval rollouts must be >= 1");
    if (policy.series_length != env.series_length || policy.window_count != env.window_count)
        throw ConfigError("config: policy grid must match the environment grid");
}

EngineConfig engine_config_from(const ConfigMap& values) {
    for (const auto& [key, value] : values)
        if (!known_key(key)) throw ConfigError("config: unknown key '" + key + "'");
    const Reader read{values};
    EngineConfig out;

    out.train.group_size = static_cast<int>(read.get_int("train.group_size", 6));
    out.train.resample_count = static_cast<int>(read.get_int("train.resample_count", 6));
    out.train.batch_size = static_cast<int>(read.get_int("train.batch_size", 64));
    out.train.max_rounds = static_cast<int>(read.get_int("train.max_rounds", 4));
    out.train.learning_rate = read.get_double("train.learning_rate", 1e-6);
    out.train.kl_coeff = read.get_double("train.kl_coeff", 0.002);
    out.train.controller_temperature = read.get_double("train.controller_temperature", 1.0);
    out.train.reasoner_temperature = read.get_double("train.reasoner_temperature", 0.7);
    out.train.nucleus_mass = read.get_double("train.nucleus_mass", 0.95);
    out.train.advantage_epsilon = read.get_double("train.advantage_epsilon", 1e-6);
    const std::string optimizer = read.get("train.optimizer", "sgd");
    if (optimizer == "sgd")
        out.train.optimizer = OptimizerKind::kSgd;
    else if (optimizer == "adamw")
        out.train.optimizer = OptimizerKind::kAdamW;
    else
        throw ConfigError("config: unknown optimizer '" + optimizer + "'");
    out.train.adam_beta1 = read.get_double("train.adam_beta1", 0.9);
    out.train.adam_beta2 = read.get_double("train.adam_beta2", 0.999);
    out.train.adam_epsilon = read.get_double("train.adam_epsilon", 1e-8);
    out.train.weight_decay = read.get_double("train.weight_decay", 0.0);
    const std::string kl_mode = read.get("train.kl_mode", "exact");
    if (kl_mode == "exact")
        out.train.kl_mode = KlMode::kExact;
    else if (kl_mode == "estimator")
        out.train.kl_mode = KlMode::kEstimator;
    else
        throw ConfigError("config: unknown kl mode '" + kl_mode + "'");
    out.train.seed = static_cast<std::uint64_t>(read.get_int("train.seed", 1));
    out.train.workers = static_cast<int>(read.get_int("train.workers", 1));
    try {
        out.train.ablation = ablation_from_name(read.get("train.ablation", "none"));
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("config: ") + err.what());
    }

    out.train.weights.reliability = read.get_double("rewards.reliability_weight", 0.9);
    out.train.weights.controller_format =
        read.get_double("rewards.controller_format_weight", 0.1);
    out.train.weights.correctness = read.get_double("rewards.correctness_weight", 0.9);
    out.train.weights.reasoner_format = read.get_double("rewards.reasoner_format_weight", 0.1);

    out.env.series_length = static_cast<std::size_t>(read.get_int("env.series_length", 128));
    out.env.window_count = static_cast<std::size_t>(read.get_int("env.window_count", 8));
    out.env.option_count = static_cast<std::size_t>(read.get_int("env.option_count", 4));
    out.env.two_interval = read.get_bool("env.two_interval", false);
    out.env.noise_sigma = read.get_double("env.noise_sigma", 1.0);
    out.env.amplitude = read.get_double("env.amplitude", 6.0);
    out.env.spike_width = static_cast<std::size_t>(read.get_int("env.spike_width", 3));
    out.env.min_region_gap = static_cast<int>(read.get_int("env.min_region_gap", 2));
    out.env.coverage_threshold = read.get_double("env.coverage_threshold", 0.8);
    out.env.oracle_accuracy = read.get_double("env.oracle_accuracy", 0.95);
    out.task_count = static_cast<int>(read.get_int("env.task_count", 1000));

    out.policy.series_length = out.env.series_length;
    out.policy.window_count = out.env.window_count;
    out.policy.option_count = out.env.option_count;
    out.policy.question_tags =
        static_cast<std::size_t>(read.get_int("policy.question_tags", 128));
    out.policy.coverage_buckets =
        static_cast<std::size_t>(read.get_int("policy.coverage_buckets", 4));
    out.policy.round_features = static_cast<int>(
        read.get_int("policy.round_features", out.train.max_rounds));
    out.policy.event_threshold = read.get_double("policy.event_threshold", 3.5);
    out.policy.sustained_run = static_cast<std::size_t>(read.get_int("policy.sustained_run", 6));
    out.policy.corrupt_controller = read.get_double("policy.corrupt_controller", 0.0);
    out.policy.corrupt_reasoner = read.get_double("policy.corrupt_reasoner", 0.0);

    out.steps = static_cast<int>(read.get_int("train.steps", 500));
    out.checkpoint_interval =
        static_cast<int>(read.get_int("train.checkpoint_interval", 100));
    out.eval_rollouts = static_cast<int>(read.get_int("eval.rollouts", 1));

    try {
        out.validate();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("config: ") + err.what());
    }
    return out;
}

nlohmann::json config_echo(const EngineConfig& c) {
    return {
        {"train",
         {{"group_size", c.train.group_size},
          {"resample_count", c.train.resample_count},
          {"batch_size", c.train.batch_size},
          {"max_rounds", c.train.max_rounds},
          {"learning_rate", c.train.learning_rate},
          {"kl_coeff", c.train.kl_coeff},
          {"controller_temperature", c.train.controller_temperature},
          {"reasoner_temperature", c.train.reasoner_temperature},
          {"nucleus_mass", c.train.nucleus_mass},
          {"advantage_epsilon", c.train.advantage_epsilon},
          {"optimizer", c.train.optimizer == OptimizerKind::kSgd ? "sgd" : "adamw"},
          {"adam_beta1", c.train.adam_beta1},
          {"adam_beta2", c.train.adam_beta2},
          {"adam_epsilon", c.train.adam_epsilon},
          {"weight_decay", c.train.weight_decay},
          {"kl_mode", c.train.kl_mode == KlMode::kExact ? "exact" : "estimator"},
          {"seed", c.train.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"ablation", ablation_name(c.train.ablation)}}},
        {"rewards",
         {{"reliability_weight", c.train.weights.reliability},
          {"controller_format_weight", c.train.weights.controller_format},
          {"correctness_weight", c.train.weights.correctness},
          {"reasoner_format_weight", c.train.weights.reasoner_format}}},
        {"env",
         {{"series_length", c.env.series_length},
          {"window_count", c.env.window_count},
          {"option_count", c.env.option_count},
          {"two_interval", c.env.two_interval},
          {"noise_sigma", c.env.noise_sigma},
          {"amplitude", c.env.amplitude},
          {"spike_width", c.env.spike_width},
          {"min_region_gap", c.env.min_region_gap},
          {"coverage_threshold", c.env.coverage_threshold},
          {"oracle_accuracy", c.env.oracle_accuracy},
          {"task_count", c.task_count}}},
        {"policy",
         {{"question_tags", c.policy.question_tags},
          {"coverage_buckets", c.policy.coverage_buckets},
          {"round_features", c.policy.round_features},
          {"event_threshold", c.policy.event_threshold},
          {"sustained_run", c.policy.sustained_run},
          {"corrupt_controller", c.policy.corrupt_controller},
          {"corrupt_reasoner", c.policy.corrupt_reasoner}}},
        {"eval", {{"rollouts", c.eval_rollouts}}},
    };
}

ConfigMap config_map_from_echo(const nlohmann::json& echo) {
    ConfigMap values;
    for (const auto& [section, body] : echo.items()) {
        for (const auto& [key, value] : body.items()) {
            std::string text;
            if (value.is_string())
                text = value.get<std::string>();
            else
                text = value.dump();
            values[section + "." + key] = text;
        }
    }
    return values;
}

EngineConfig engine_config_from_echo(const nlohmann::json& echo) {
    return engine_config_from(config_map_from_echo(echo));
}

}  // namespace segrl
