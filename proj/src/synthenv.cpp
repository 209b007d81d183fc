#include "segrl/synthenv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "segrl/protocol.hpp"

namespace segrl {

namespace {

const std::vector<std::string> kFourOptions = {"A", "B", "C", "D"};
const std::vector<std::string> kTwoOptions = {"A", "B"};

std::string single_prompt(std::size_t region) {
    return "An event was reported in region " + std::to_string(region) +
           ". Classify the pattern within that region. Options: A=short upward spike, "
           "B=short downward dip, C=sustained level shift, D=no event.";
}

std::string pair_prompt(std::size_t a, std::size_t b) {
    return "Events were reported in regions " + std::to_string(a) + " and " +
           std::to_string(b) +
           ". Compare the patterns in those regions. Options: A=both spikes, B=both dips, "
           "C=one spike and one dip, D=no event in at least one region.";
}

std::string same_diff_prompt(std::size_t a, std::size_t b) {
    return "Events were reported in regions " + std::to_string(a) + " and " +
           std::to_string(b) +
           ". Decide whether the two regions show the same kind of pattern. "
           "Options: A=same pattern kind, B=different pattern kinds.";
}

void plant(std::vector<double>& values, Segment interval, PatternKind kind,
           const EnvConfig& config) {
    const std::size_t len = interval.length();
    switch (kind) {
        case PatternKind::kSpike:
        case PatternKind::kDip: {
            // transient pulse whose interval-mean uplift equals `amplitude`
            const std::size_t width = std::min(config.spike_width, len);
            const double peak = config.amplitude * static_cast<double>(len) /
                                static_cast<double>(width);
            const std::size_t from = interval.start + (len - width) / 2;
            const double sign = kind == PatternKind::kSpike ? 1.0 : -1.0;
            for (std::size_t i = 0; i < width; ++i) values[from + i] += sign * peak;
            break;
        }
        case PatternKind::kLevelShift:
            for (std::size_t i = interval.start; i < interval.end; ++i)
                values[i] += config.amplitude;
            break;
        case PatternKind::kNone: break;
    }
}

}  // namespace

std::string_view pattern_name(PatternKind kind) {
    switch (kind) {
        case PatternKind::kSpike: return "spike";
        case PatternKind::kDip: return "dip";
        case PatternKind::kLevelShift: return "level_shift";
        case PatternKind::kNone: return "none";
    }
    return "none";
}

PatternKind pattern_from_name(std::string_view name) {
    if (name == "spike") return PatternKind::kSpike;
    if (name == "dip") return PatternKind::kDip;
    if (name == "level_shift") return PatternKind::kLevelShift;
    if (name == "none") return PatternKind::kNone;
    throw std::invalid_argument("unknown pattern kind: " + std::string(name));
}

void EnvConfig::validate() const {
    if (series_length < 32) throw std::invalid_argument("env: series length must be >= 32");
    if (window_count < 2 || series_length % window_count != 0)
        throw std::invalid_argument("env: window count must be >= 2 and divide series length");
    if (option_count == 2) {
        if (!two_interval)
            throw std::invalid_argument(
                "env: the binary same/different family needs two_interval = true");
    } else if (option_count != 4) {
        throw std::invalid_argument("env: this generator emits 4 options, or 2 for the "
                                    "two-interval same/different family");
    }
    if (!(noise_sigma > 0.0)) throw std::invalid_argument("env: noise sigma must be positive");
    if (!(amplitude > 0.0)) throw std::invalid_argument("env: amplitude must be positive");
    if (spike_width == 0 || spike_width > region_length())
        throw std::invalid_argument("env: spike width must fit in a region");
    if (coverage_threshold <= 0.0 || coverage_threshold > 1.0)
        throw std::invalid_argument("env: coverage threshold must be in (0, 1]");
    if (oracle_accuracy <= 0.0 || oracle_accuracy > 1.0)
        throw std::invalid_argument("env: oracle accuracy must be in (0, 1]");
    if (two_interval) {
        if (min_region_gap < 1) throw std::invalid_argument("env: region gap must be >= 1");
        if (window_count < static_cast<std::size_t>(min_region_gap) + 1)
            throw std::invalid_argument("env: not enough windows for two gapped regions");
    }
}

PlantedTask generate_task(const EnvConfig& config, std::uint64_t seed, std::uint64_t index) {
    config.validate();
    Rng rng = derive_rng(seed, {0x7a51ull, index});

    PlantedTask task;
    task.id = "t" + std::to_string(index);
    task.noise_sigma = config.noise_sigma;
    task.two_interval = config.two_interval;

    std::vector<double> values(config.series_length);
    for (double& v : values) v = rng.normal(0.0, config.noise_sigma);

    const std::size_t region_len = config.region_length();
    const std::size_t gold_category = rng.uniform_index(config.option_count == 2 ? 2 : 4);

    if (config.option_count == 2) {
        // binary family: do the two regions carry the same pattern kind?
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t a = 0; a < config.window_count; ++a)
            for (std::size_t b = a + static_cast<std::size_t>(config.min_region_gap);
                 b < config.window_count; ++b)
                pairs.emplace_back(a, b);
        const auto [ra, rb] = pairs[rng.uniform_index(pairs.size())];

        const PatternKind base =
            rng.uniform() < 0.5 ? PatternKind::kSpike : PatternKind::kDip;
        PatternKind first = base;
        PatternKind second = base;
        if (gold_category == 1)  // different kinds
            second = base == PatternKind::kSpike ? PatternKind::kDip : PatternKind::kSpike;

        const Segment ia{ra * region_len, (ra + 1) * region_len};
        const Segment ib{rb * region_len, (rb + 1) * region_len};
        plant(values, ia, first, config);
        plant(values, ib, second, config);
        task.intervals = {ia, ib};
        task.kinds = {first, second};
        task.question.prompt = same_diff_prompt(ra, rb);
        task.series = TimeSeries{task.id, std::move(values)};
        task.question.id = task.id;
        task.question.options = kTwoOptions;
        task.question.gold = kTwoOptions[gold_category];
        validate_series(task.series);
        validate_question(task.question);
        return task;
    }

    if (!config.two_interval) {
        const std::size_t region = rng.uniform_index(config.window_count);
        const Segment interval{region * region_len, (region + 1) * region_len};
        static const PatternKind kByCategory[] = {PatternKind::kSpike, PatternKind::kDip,
                                                  PatternKind::kLevelShift, PatternKind::kNone};
        const PatternKind kind = kByCategory[gold_category];
        plant(values, interval, kind, config);
        task.intervals = {interval};
        task.kinds = {kind};
        task.question.prompt = single_prompt(region);
    } else {
        // two grid regions at least min_region_gap apart
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t a = 0; a < config.window_count; ++a)
            for (std::size_t b = a + static_cast<std::size_t>(config.min_region_gap);
                 b < config.window_count; ++b)
                pairs.emplace_back(a, b);
        const auto [ra, rb] = pairs[rng.uniform_index(pairs.size())];

        PatternKind first = PatternKind::kNone;
        PatternKind second = PatternKind::kNone;
        switch (gold_category) {
            case 0: first = second = PatternKind::kSpike; break;
            case 1: first = second = PatternKind::kDip; break;
            case 2:
                first = rng.uniform() < 0.5 ? PatternKind::kSpike : PatternKind::kDip;
                second = first == PatternKind::kSpike ? PatternKind::kDip : PatternKind::kSpike;
                break;
            default: {
                // at least one region without an event
                static const std::pair<PatternKind, PatternKind> kNoneCombos[] = {
                    {PatternKind::kNone, PatternKind::kSpike},
                    {PatternKind::kSpike, PatternKind::kNone},
                    {PatternKind::kNone, PatternKind::kDip},
                    {PatternKind::kDip, PatternKind::kNone},
                    {PatternKind::kNone, PatternKind::kNone},
                };
                const auto combo = kNoneCombos[rng.uniform_index(5)];
                first = combo.first;
                second = combo.second;
                break;
            }
        }
        const Segment ia{ra * region_len, (ra + 1) * region_len};
        const Segment ib{rb * region_len, (rb + 1) * region_len};
        plant(values, ia, first, config);
        plant(values, ib, second, config);
        task.intervals = {ia, ib};
        task.kinds = {first, second};
        task.question.prompt = pair_prompt(ra, rb);
    }

    task.series = TimeSeries{task.id, std::move(values)};
    task.question.id = task.id;
    task.question.options = kFourOptions;
    task.question.gold = kFourOptions[gold_category];
    validate_series(task.series);
    validate_question(task.question);
    return task;
}

std::vector<PlantedTask> generate_tasks(const EnvConfig& config, std::uint64_t seed,
                                        std::size_t count) {
    std::vector<PlantedTask> tasks;
    tasks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) tasks.push_back(generate_task(config, seed, i));
    return tasks;
}

double interval_coverage(const PlantedTask& task, const SegmentList& segments) {
    if (task.intervals.empty()) return 1.0;
    double worst = 1.0;
    for (const Segment& interval : task.intervals) {
        std::size_t covered = 0;
        for (std::size_t i = interval.start; i < interval.end; ++i) {
            for (const Segment& s : segments.segments) {
                if (i >= s.start && i < s.end) {
                    ++covered;
                    break;
                }
            }
        }
        worst = std::min(worst, static_cast<double>(covered) /
                                    static_cast<double>(interval.length()));
    }
    return worst;
}

bool oracle_covered(const OracleReasonerSpec& spec, const PlantedTask& task,
                    const SegmentList& segments) {
    return interval_coverage(task, segments) >= spec.coverage_threshold;
}

std::string oracle_answer(const OracleReasonerSpec& spec, const PlantedTask& task,
                          const SegmentList& segments, Rng& rng) {
    const std::vector<std::string>& options = task.question.options;
    if (oracle_covered(spec, task, segments)) {
        if (rng.uniform() < spec.covered_accuracy) return task.question.gold;
        // uniform over the non-gold options so P(gold) is exactly covered_accuracy
        std::vector<std::string> rest;
        for (const auto& opt : options)
            if (opt != task.question.gold) rest.push_back(opt);
        return rest[rng.uniform_index(rest.size())];
    }
    return options[rng.uniform_index(options.size())];
}

OracleReasonerPolicy::OracleReasonerPolicy(OracleReasonerSpec spec,
                                           std::span<const PlantedTask> tasks)
    : spec_(spec) {
    for (const PlantedTask& task : tasks) tasks_[task.question.id] = &task;
}

const PlantedTask& OracleReasonerPolicy::task_for(const Question& question) const {
    const auto it = tasks_.find(question.id);
    if (it == tasks_.end())
        throw std::invalid_argument("oracle: unknown question id " + question.id);
    return *it->second;
}

std::vector<double> OracleReasonerPolicy::answer_distribution(const PolicyState& state) const {
    const PlantedTask& task = task_for(*state.question);
    const std::size_t k = state.question->options.size();
    std::vector<double> dist(k, 1.0 / static_cast<double>(k));
    if (oracle_covered(spec_, task, state.segments)) {
        for (std::size_t i = 0; i < k; ++i) {
            dist[i] = state.question->options[i] == task.question.gold
                          ? spec_.covered_accuracy
                          : (1.0 - spec_.covered_accuracy) / static_cast<double>(k - 1);
        }
    }
    return dist;
}

Sampled OracleReasonerPolicy::sample(const PolicyState& state, double, double, Rng& rng) const {
    if (state.role != Role::kReasoner)
        throw std::invalid_argument("oracle reasoner sampled in controller role");
    const std::vector<double> dist = answer_distribution(state);
    const std::size_t choice = rng.categorical(dist);
    Sampled out;
    out.tokens = {static_cast<Token>(choice)};
    out.logprobs = {std::log(dist[choice])};
    out.raw = render_reasoner_message("oracle: answering from covered evidence",
                                      state.question->options[choice]);
    return out;
}

std::vector<double> OracleReasonerPolicy::token_log_probs(const PolicyState& state,
                                                          std::span<const Token> tokens) const {
    const std::vector<double> dist = answer_distribution(state);
    std::vector<double> out;
    for (Token t : tokens) out.push_back(std::log(dist.at(static_cast<std::size_t>(t))));
    return out;
}

std::unique_ptr<Policy> OracleReasonerPolicy::snapshot() const {
    return std::make_unique<OracleReasonerPolicy>(*this);
}

std::optional<std::vector<double>> OracleReasonerPolicy::next_token_distribution(
    const PolicyState& state, std::span<const Token> prefix) const {
    if (!prefix.empty()) return std::nullopt;
    return answer_distribution(state);
}

MockReasonerPolicy::MockReasonerPolicy(double accuracy) : accuracy_(accuracy) {
    if (accuracy <= 0.0 || accuracy > 1.0)
        throw std::invalid_argument("mock reasoner accuracy must be in (0, 1]");
}

std::vector<double> MockReasonerPolicy::answer_distribution(const Question& question) const {
    const std::size_t k = question.options.size();
    std::vector<double> dist(k);
    for (std::size_t i = 0; i < k; ++i)
        dist[i] = question.options[i] == question.gold
                      ? accuracy_
                      : (1.0 - accuracy_) / static_cast<double>(k - 1);
    return dist;
}

Sampled MockReasonerPolicy::sample(const PolicyState& state, double, double, Rng& rng) const {
    const std::vector<double> dist = answer_distribution(*state.question);
    const std::size_t choice = rng.categorical(dist);
    Sampled out;
    out.tokens = {static_cast<Token>(choice)};
    out.logprobs = {std::log(dist[choice])};
    out.raw = render_reasoner_message("mock: fixed-accuracy answer",
                                      state.question->options[choice]);
    return out;
}

std::vector<double> MockReasonerPolicy::token_log_probs(const PolicyState& state,
                                                        std::span<const Token> tokens) const {
    const std::vector<double> dist = answer_distribution(*state.question);
    std::vector<double> out;
    for (Token t : tokens) out.push_back(std::log(dist.at(static_cast<std::size_t>(t))));
    return out;
}

std::unique_ptr<Policy> MockReasonerPolicy::snapshot() const {
    return std::make_unique<MockReasonerPolicy>(*this);
}

std::optional<std::vector<double>> MockReasonerPolicy::next_token_distribution(
    const PolicyState& state, std::span<const Token> prefix) const {
    if (!prefix.empty()) return std::nullopt;
    return answer_distribution(*state.question);
}

ScriptedControllerPolicy::Script covering_script(std::span<const PlantedTask> tasks,
                                                 const EnvConfig& config) {
    auto lookup = std::make_shared<std::unordered_map<std::string, std::vector<ScriptedAction>>>();
    const std::size_t region_len = config.region_length();
    for (const PlantedTask& task : tasks) {
        std::vector<ScriptedAction> actions;
        for (const Segment& interval : task.intervals)
            actions.push_back(ScriptedAction{false, interval.start / region_len});
        actions.push_back(ScriptedAction{true, 0});
        (*lookup)[task.question.id] = std::move(actions);
    }
    return [lookup](const Question& question) {
        const auto it = lookup->find(question.id);
        if (it == lookup->end())
            throw std::invalid_argument("covering script: unknown question " + question.id);
        return it->second;
    };
}

}  // namespace segrl
