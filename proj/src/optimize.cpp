#include "segrl/optimize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <stdexcept>

namespace segrl {

namespace {

// grad += coef * d log pi(token at `index` | prefix) / d params, expressed
// through prefix-sum score gradients so it works for any Policy.
void accumulate_token_gradient(const Policy& policy, const PolicyState& state,
                               std::span<const Token> tokens, std::size_t index, double coef,
                               std::span<double> grad) {
    policy.accumulate_score_gradient(state, tokens.subspan(0, index + 1), coef, grad);
    if (index > 0) policy.accumulate_score_gradient(state, tokens.subspan(0, index), -coef, grad);
}

double kl_at_state(const Policy& policy, const Policy& reference, const PolicyState& state,
                   std::span<const Token> tokens) {
    return kl_divergence_estimate(policy, reference, state, tokens);
}

}  // namespace

std::string ablation_name(const AblationSwitches& s) {
    std::string name;
    auto add = [&name](const char* part) {
        if (!name.empty()) name += "+";
        name += part;
    };
    if (s.reasoner_only) add("reasoner_only");
    if (s.controller_only) add("controller_only");
    if (s.no_reliability) add("no_reliability");
    if (s.myopic_controller) add("myopic_controller");
    if (s.uniform_group_sampling) add("uniform_group_sampling");
    return name.empty() ? "none" : name;
}

AblationSwitches ablation_from_name(std::string_view name) {
    AblationSwitches s;
    if (name.empty() || name == "none") return s;
    std::size_t pos = 0;
    while (pos <= name.size()) {
        const std::size_t next = name.find('+', pos);
        const std::string_view part =
            name.substr(pos, next == std::string_view::npos ? name.size() - pos : next - pos);
        if (part == "reasoner_only")
            s.reasoner_only = true;
        else if (part == "controller_only")
            s.controller_only = true;
        else if (part == "no_reliability")
            s.no_reliability = true;
        else if (part == "myopic_controller")
            s.myopic_controller = true;
        else if (part == "uniform_group_sampling")
            s.uniform_group_sampling = true;
        else
            throw std::invalid_argument("unknown ablation: " + std::string(part));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    if (s.reasoner_only && s.controller_only)
        throw std::invalid_argument("reasoner_only and controller_only are mutually exclusive");
    return s;
}

void TrainConfig::validate() const {
    if (group_size < 2) throw std::invalid_argument("config: group size must be >= 2");
    if (resample_count < 2) throw std::invalid_argument("config: resample count must be >= 2");
    if (batch_size < 1) throw std::invalid_argument("config: batch size must be >= 1");
    if (max_rounds < 1) throw std::invalid_argument("config: max rounds must be >= 1");
    if (learning_rate < 0.0) throw std::invalid_argument("config: learning rate must be >= 0");
    if (kl_coeff < 0.0) throw std::invalid_argument("config: kl coefficient must be >= 0");
    if (!(controller_temperature > 0.0) || !(reasoner_temperature > 0.0))
        throw std::invalid_argument("config: temperatures must be positive");
    if (!(nucleus_mass > 0.0) || nucleus_mass > 1.0)
        throw std::invalid_argument("config: nucleus mass must be in (0, 1]");
    if (!(advantage_epsilon > 0.0))
        throw std::invalid_argument("config: advantage epsilon must be positive");
    if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
    if (ablation.reasoner_only && ablation.controller_only)
        throw std::invalid_argument("config: reasoner_only and controller_only conflict");
    weights.validate();
}

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
    if (rewards.size() < 2)
        throw std::invalid_argument("group_advantages: need at least two rewards");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size());
    const double sd = std::sqrt(var);

    std::vector<double> out(rewards.size(), 0.0);
    if (sd < epsilon) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + epsilon);
    return out;
}

AdvantageSet compute_advantages(std::span<const double> controller_rewards,
                                std::span<const double> reasoner_rewards, double epsilon) {
    AdvantageSet out;
    out.epsilon = epsilon;
    out.controller = group_advantages(controller_rewards, epsilon);
    out.reasoner = group_advantages(reasoner_rewards, epsilon);
    return out;
}

std::size_t variance_guided_pick(std::span<const double> variances, Rng& rng) {
    if (variances.empty()) throw std::invalid_argument("variance_guided_pick: empty group");
    double total = 0.0;
    for (double v : variances) {
        if (v < 0.0) throw std::invalid_argument("variance_guided_pick: negative variance");
        total += v;
    }
    if (total <= 0.0) return rng.uniform_index(variances.size());
    return rng.categorical(variances);
}

void accumulate_controller_objective(const Policy& policy, const Question& question,
                                     const TimeSeries& series,
                                     std::span<const RolloutTrajectory> trajectories,
                                     std::span<const double> advantages, bool myopic,
                                     double scale, std::span<double> grad) {
    if (trajectories.size() != advantages.size())
        throw std::invalid_argument("controller objective: advantage count mismatch");
    if (trajectories.empty()) return;

    const double group_scale = scale / static_cast<double>(trajectories.size());
    for (std::size_t g = 0; g < trajectories.size(); ++g) {
        const RolloutTrajectory& trajectory = trajectories[g];
        const double advantage = advantages[g];
        if (advantage == 0.0 || trajectory.rounds.empty()) continue;
        const double round_scale =
            group_scale / static_cast<double>(trajectory.rounds.size());

        // replay the rollout to rebuild each round's controller state
        SegmentList segments;
        std::string prior_answer;
        std::string prior_trace;
        for (std::size_t i = 0; i < trajectory.rounds.size(); ++i) {
            const RolloutRound& round = trajectory.rounds[i];
            const bool credited = !myopic || i + 1 == trajectory.rounds.size();
            if (credited && !round.controller_sample.tokens.empty()) {
                const PolicyState state =
                    make_controller_state(question, series, segments, prior_answer, prior_trace,
                                          static_cast<int>(i) + 1);
                const double coef =
                    advantage * round_scale /
                    static_cast<double>(round.controller_sample.tokens.size());
                policy.accumulate_score_gradient(state, round.controller_sample.tokens, coef,
                                                 grad);
            }
            if (round.controller.proposed_segment)
                segments.append(*round.controller.proposed_segment);
            if (round.reasoner) {
                prior_answer = round.reasoner->answer;
                prior_trace = round.reasoner->think;
            }
        }
    }
}

void accumulate_reasoner_objective(const Policy& policy, const Policy& reference,
                                   const Question& question, const TimeSeries& series,
                                   const SegmentList& final_segments,
                                   std::span<const ReasonerResample> resamples,
                                   std::span<const double> advantages, double kl_coeff,
                                   KlMode kl_mode, double scale, std::span<double> grad) {
    if (resamples.size() != advantages.size())
        throw std::invalid_argument("reasoner objective: advantage count mismatch");
    if (resamples.empty()) return;

    const int round_index = std::max<int>(1, static_cast<int>(final_segments.size()));
    const PolicyState state =
        make_reasoner_state(question, series, final_segments, round_index);

    const double sample_scale = scale / static_cast<double>(resamples.size());
    for (std::size_t n = 0; n < resamples.size(); ++n) {
        const MessageSample& sample = resamples[n].sample;
        if (advantages[n] == 0.0 || sample.tokens.empty()) continue;
        const double coef =
            advantages[n] * sample_scale / static_cast<double>(sample.tokens.size());
        policy.accumulate_score_gradient(state, sample.tokens, coef, grad);
    }

    if (kl_coeff <= 0.0) return;

    bool exact = kl_mode == KlMode::kExact;
    if (exact) {
        const auto p = policy.next_token_distribution(state, {});
        const auto q = reference.next_token_distribution(state, {});
        if (p && q && p->size() == q->size()) {
            // d KL(p || q) / d theta = sum_a p_a log(p_a / q_a) d log p_a / d theta
            for (std::size_t a = 0; a < p->size(); ++a) {
                const double pa = (*p)[a];
                if (pa <= 0.0) continue;
                const double qa = std::max((*q)[a], 1e-300);
                const double coef = -kl_coeff * scale * pa * std::log(pa / qa);
                const Token token = static_cast<Token>(a);
                policy.accumulate_score_gradient(state, std::span<const Token>(&token, 1), coef,
                                                 grad);
            }
            return;
        }
        exact = false;  // distributions unavailable, fall back to the estimator
    }
    if (!exact) {
        // d/dtheta of the sampled estimator mean of k(t) = r - 1 - log r is
        // (1 - r_t) d log pi(t): accumulate per token across the resamples
        for (const ReasonerResample& resample : resamples) {
            const MessageSample& sample = resample.sample;
            if (sample.tokens.empty()) continue;
            const std::vector<double> lp = policy.token_log_probs(state, sample.tokens);
            const std::vector<double> lq = reference.token_log_probs(state, sample.tokens);
            const double token_scale = -kl_coeff * scale /
                                       (static_cast<double>(resamples.size()) *
                                        static_cast<double>(sample.tokens.size()));
            for (std::size_t t = 0; t < sample.tokens.size(); ++t) {
                const double ratio = std::max(std::exp(lq[t] - lp[t]), 1e-12);
                accumulate_token_gradient(policy, state, sample.tokens, t,
                                          token_scale * (1.0 - ratio), grad);
            }
        }
    }
}

std::vector<double> controller_objective_grad(const Policy& policy, const Question& question,
                                              const TimeSeries& series,
                                              std::span<const RolloutTrajectory> trajectories,
                                              std::span<const double> advantages, bool myopic) {
    std::vector<double> grad(policy.param_count(), 0.0);
    accumulate_controller_objective(policy, question, series, trajectories, advantages, myopic,
                                    1.0, grad);
    return grad;
}

std::vector<double> reasoner_objective_grad(const Policy& policy, const Policy& reference,
                                            const Question& question, const TimeSeries& series,
                                            const SegmentList& final_segments,
                                            std::span<const ReasonerResample> resamples,
                                            std::span<const double> advantages, double kl_coeff,
                                            KlMode kl_mode) {
    std::vector<double> grad(policy.param_count(), 0.0);
    accumulate_reasoner_objective(policy, reference, question, series, final_segments, resamples,
                                  advantages, kl_coeff, kl_mode, 1.0, grad);
    return grad;
}

Optimizer::Optimizer(const TrainConfig& config)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      epsilon_(config.adam_epsilon),
      weight_decay_(config.weight_decay) {}

void Optimizer::step(Policy& policy, std::span<const double> grad) {
    ++steps_;
    if (kind_ == OptimizerKind::kSgd) {
        policy.apply_update(grad, lr_);
        return;
    }
    // adaptive moments with decoupled weight decay, ascent direction
    std::vector<double> params = policy.parameters();
    if (params.size() != grad.size())
        throw std::invalid_argument("optimizer: gradient size mismatch");
    if (m_.size() != params.size()) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] += lr_ * mhat / (std::sqrt(vhat) + epsilon_) - lr_ * weight_decay_ * params[i];
    }
    policy.set_parameters(params);
}

nlohmann::json Optimizer::to_json() const {
    return {{"kind", kind_ == OptimizerKind::kSgd ? "sgd" : "adamw"},
            {"steps", steps_},
            {"m", m_},
            {"v", v_}};
}

void Optimizer::restore(const nlohmann::json& state) {
    const std::string kind = state.at("kind").get<std::string>();
    if ((kind == "sgd") != (kind_ == OptimizerKind::kSgd))
        throw std::invalid_argument("optimizer: checkpoint kind mismatch");
    steps_ = state.at("steps").get<long>();
    m_ = state.at("m").get<std::vector<double>>();
    v_ = state.at("v").get<std::vector<double>>();
}

nlohmann::json StepMetrics::to_json() const {
    return {
        {"step", step},
        {"controller_reward", controller_reward},
        {"reasoner_reward", reasoner_reward},
        {"reliability", reliability},
        {"coverage", coverage},
        {"violation_rate", violation_rate},
        {"accuracy", accuracy},
        {"kl", kl},
        {"grad_norm", grad_norm},
    };
}

namespace {

// All per-question work: rollouts, rewards, advantages, gradient.
struct QuestionResult {
    std::vector<double> grad;
    double controller_reward_sum = 0.0;
    std::size_t trajectory_count = 0;
    double reasoner_reward_sum = 0.0;
    std::size_t resample_count = 0;
    double reliability_sum = 0.0;
    double coverage_sum = 0.0;
    std::size_t violation_count = 0;
    std::size_t correct_count = 0;
    double kl_value = 0.0;
};

QuestionResult process_question(const Policy& policy, const Policy& reference,
                                const TrainItem& item, const TrainConfig& config,
                                std::uint64_t question_seed,
                                const Policy* reasoner_override) {
    const Policy& acting_reasoner = reasoner_override ? *reasoner_override : policy;
    const bool train_reasoner = reasoner_override == nullptr && !config.ablation.controller_only;
    QuestionResult result;
    result.grad.assign(policy.param_count(), 0.0);
    const Question& question = *item.question;
    const TimeSeries& series = *item.series;
    const RolloutOptions options = config.rollout_options();
    Rng rng = derive_rng(question_seed, {0x9a3ull});
    const double batch_scale = 1.0 / static_cast<double>(config.batch_size);

    if (config.ablation.reasoner_only) {
        // no segment selection: the full series is the single segment
        SegmentList full;
        full.append(Segment{0, series.length()});
        std::vector<ReasonerResample> resamples = resample_final_reasoner(
            acting_reasoner, question, series, full, config.resample_count, options, rng);

        std::vector<int> correct;
        std::vector<double> rewards;
        for (const ReasonerResample& r : resamples) {
            correct.push_back(correctness(question, r.step.answer));
            rewards.push_back(
                reasoner_reward(correct.back(), r.step.format_score, config.weights));
        }
        if (train_reasoner) {
            const std::vector<double> advantages =
                group_advantages(rewards, config.advantage_epsilon);
            accumulate_reasoner_objective(policy, reference, question, series, full, resamples,
                                          advantages, config.kl_coeff, config.kl_mode,
                                          batch_scale, result.grad);
        }

        for (std::size_t n = 0; n < resamples.size(); ++n) {
            result.reasoner_reward_sum += rewards[n];
            result.correct_count += static_cast<std::size_t>(correct[n]);
        }
        result.resample_count = resamples.size();
        result.trajectory_count = resamples.size();  // accuracy over the resamples
        result.reliability_sum = reliability(correct);
        result.coverage_sum = 1.0;
        if (train_reasoner && !resamples.empty() && !resamples.front().sample.tokens.empty()) {
            const PolicyState state = make_reasoner_state(question, series, full, 1);
            result.kl_value =
                kl_at_state(policy, reference, state, resamples.front().sample.tokens);
        }
        return result;
    }

    GroupRollout group = run_group(policy, acting_reasoner, question, series,
                                   config.group_size, config.resample_count, options, rng);

    // controller rewards and advantages over the G trajectories
    std::vector<double> controller_rewards;
    controller_rewards.reserve(group.trajectories.size());
    for (std::size_t g = 0; g < group.trajectories.size(); ++g) {
        const RolloutTrajectory& trajectory = group.trajectories[g];
        const std::vector<ControllerStep> steps = trajectory.controller_steps();
        const double format = score_controller_trajectory(steps);
        const double reliability_value =
            config.ablation.no_reliability
                ? static_cast<double>(correctness(question, trajectory.final_answer))
                : group.group_mean[g];
        controller_rewards.push_back(
            controller_reward(format, reliability_value, config.weights));

        result.controller_reward_sum += controller_rewards.back();
        result.coverage_sum += coverage_fraction(trajectory.final_segments, series.length());
        result.reliability_sum += group.group_mean[g];
        if (format < 0.0) ++result.violation_count;
        result.correct_count +=
            static_cast<std::size_t>(correctness(question, trajectory.final_answer));
    }
    result.trajectory_count = group.trajectories.size();

    // reasoner rewards come from a single picked group
    Rng pick_rng = derive_rng(question_seed, {0x77bull});
    const std::size_t picked =
        config.ablation.uniform_group_sampling
            ? pick_rng.uniform_index(group.trajectories.size())
            : variance_guided_pick(group.group_variance, pick_rng);

    const std::vector<ReasonerResample>& resamples = group.resamples[picked];
    std::vector<double> reasoner_rewards;
    reasoner_rewards.reserve(resamples.size());
    for (std::size_t n = 0; n < resamples.size(); ++n) {
        reasoner_rewards.push_back(reasoner_reward(group.resample_correct[picked][n],
                                                   resamples[n].step.format_score,
                                                   config.weights));
        result.reasoner_reward_sum += reasoner_rewards.back();
    }
    result.resample_count = resamples.size();

    const AdvantageSet advantages =
        compute_advantages(controller_rewards, reasoner_rewards, config.advantage_epsilon);
    accumulate_controller_objective(policy, question, series, group.trajectories,
                                    advantages.controller, config.ablation.myopic_controller,
                                    batch_scale, result.grad);
    if (train_reasoner) {
        accumulate_reasoner_objective(policy, reference, question, series,
                                      group.trajectories[picked].final_segments, resamples,
                                      advantages.reasoner, config.kl_coeff, config.kl_mode,
                                      batch_scale, result.grad);
    }

    if (train_reasoner && !resamples.empty() && !resamples.front().sample.tokens.empty()) {
        const SegmentList& segs = group.trajectories[picked].final_segments;
        const PolicyState state = make_reasoner_state(
            question, series, segs, std::max<int>(1, static_cast<int>(segs.size())));
        result.kl_value = kl_at_state(policy, reference, state, resamples.front().sample.tokens);
    }
    return result;
}

}  // namespace

StepMetrics train_step(Policy& policy, const Policy& reference,
                       std::span<const TrainItem> batch, const TrainConfig& config,
                       Optimizer& optimizer, int step_index,
                       const Policy* reasoner_override) {
    config.validate();
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    if (static_cast<int>(batch.size()) != config.batch_size)
        throw std::invalid_argument("train_step: batch size does not match the config");

    std::vector<QuestionResult> results(batch.size());
    auto worker = [&](std::size_t b) {
        const std::uint64_t question_seed =
            hash_combine(config.seed, hash_combine(static_cast<std::uint64_t>(step_index),
                                                   static_cast<std::uint64_t>(b)));
        results[b] = process_question(policy, reference, batch[b], config, question_seed,
                                      reasoner_override);
    };

    const int workers = std::min<int>(config.workers, static_cast<int>(batch.size()));
    if (workers <= 1) {
        for (std::size_t b = 0; b < batch.size(); ++b) worker(b);
    } else {
        std::vector<std::future<void>> futures;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w)
            futures.push_back(std::async(std::launch::async, [&] {
                for (std::size_t b = next.fetch_add(1); b < batch.size();
                     b = next.fetch_add(1))
                    worker(b);
            }));
        for (auto& f : futures) f.get();
    }

    // deterministic merge in question order
    std::vector<double> grad(policy.param_count(), 0.0);
    StepMetrics metrics;
    metrics.step = step_index;
    std::size_t trajectories = 0, resamples = 0, questions = batch.size();
    for (const QuestionResult& r : results) {
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
        metrics.controller_reward += r.controller_reward_sum;
        metrics.reasoner_reward += r.reasoner_reward_sum;
        metrics.reliability += r.reliability_sum;
        metrics.coverage += r.coverage_sum;
        metrics.violation_rate += static_cast<double>(r.violation_count);
        metrics.accuracy += static_cast<double>(r.correct_count);
        metrics.kl += r.kl_value;
        trajectories += r.trajectory_count;
        resamples += r.resample_count;
    }
    if (config.ablation.reasoner_only) {
        metrics.controller_reward = 0.0;
        metrics.violation_rate = 0.0;
        metrics.reliability /= static_cast<double>(questions);
        metrics.coverage /= static_cast<double>(questions);
    } else {
        metrics.controller_reward /= static_cast<double>(trajectories);
        metrics.violation_rate /= static_cast<double>(trajectories);
        metrics.reliability /= static_cast<double>(trajectories);
        metrics.coverage /= static_cast<double>(trajectories);
    }
    metrics.reasoner_reward /= static_cast<double>(std::max<std::size_t>(resamples, 1));
    metrics.accuracy /= static_cast<double>(std::max<std::size_t>(trajectories, 1));
    metrics.kl /= static_cast<double>(questions);

    double norm = 0.0;
    for (double g : grad) norm += g * g;
    metrics.grad_norm = std::sqrt(norm);

    optimizer.step(policy, grad);
    return metrics;
}

}  // namespace segrl
