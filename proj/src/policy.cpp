#include "segrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "segrl/protocol.hpp"

namespace segrl {

PolicyState make_controller_state(const Question& question, const TimeSeries& series,
                                  const SegmentList& segments, std::string prior_answer,
                                  std::string prior_trace, int round_index) {
    PolicyState state;
    state.role = Role::kController;
    state.question = &question;
    state.series = &series;
    state.segments = segments;
    state.prior_answer = std::move(prior_answer);
    state.prior_trace = std::move(prior_trace);
    state.round_index = round_index;
    return state;
}

PolicyState make_reasoner_state(const Question& question, const TimeSeries& series,
                                const SegmentList& segments, int round_index) {
    PolicyState state;
    state.role = Role::kReasoner;
    state.question = &question;
    state.series = nullptr;  // the reasoner sees only the selected slices
    state.segments = segments;
    state.round_index = round_index;
    state.views.reserve(segments.size());
    for (const Segment& seg : segments.segments)
        state.views.push_back(SegmentView{seg, slice(series, seg)});
    return state;
}

void Policy::apply_update(std::span<const double> grad, double learning_rate) {
    std::vector<double> params = parameters();
    if (params.empty()) return;
    if (grad.size() != params.size())
        throw std::invalid_argument("apply_update: gradient size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += learning_rate * grad[i];
    set_parameters(params);
}

std::vector<double> score_gradient(const Policy& policy, const PolicyState& state,
                                   std::span<const Token> tokens) {
    std::vector<double> grad(policy.param_count(), 0.0);
    policy.accumulate_score_gradient(state, tokens, 1.0, grad);
    return grad;
}

Sampled sample_controller(const Policy& policy, const PolicyState& state, double temperature,
                          double nucleus_mass, Rng& rng) {
    if (state.role != Role::kController)
        throw std::invalid_argument("sample_controller: state role mismatch");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (!(nucleus_mass > 0.0) || nucleus_mass > 1.0)
        throw std::invalid_argument("nucleus mass must be in (0, 1]");
    return policy.sample(state, temperature, nucleus_mass, rng);
}

Sampled sample_reasoner(const Policy& policy, const PolicyState& state, double temperature,
                        double nucleus_mass, Rng& rng) {
    if (state.role != Role::kReasoner)
        throw std::invalid_argument("sample_reasoner: state role mismatch");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (!(nucleus_mass > 0.0) || nucleus_mass > 1.0)
        throw std::invalid_argument("nucleus mass must be in (0, 1]");
    return policy.sample(state, temperature, nucleus_mass, rng);
}

double kl_divergence_estimate(const Policy& policy, const Policy& reference,
                              const PolicyState& state, std::span<const Token> tokens,
                              double ratio_floor) {
    if (tokens.empty()) return 0.0;

    double total = 0.0;
    std::size_t exact_terms = 0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::span<const Token> prefix = tokens.subspan(0, t);
        const auto p = policy.next_token_distribution(state, prefix);
        const auto q = reference.next_token_distribution(state, prefix);
        if (p && q && p->size() == q->size()) {
            double kl = 0.0;
            for (std::size_t a = 0; a < p->size(); ++a) {
                const double pa = (*p)[a];
                if (pa <= 0.0) continue;
                const double qa = std::max((*q)[a], pa * ratio_floor);
                kl += pa * std::log(pa / qa);
            }
            total += std::max(kl, 0.0);
            ++exact_terms;
        }
    }
    if (exact_terms == tokens.size()) return total / static_cast<double>(tokens.size());

    // sampled estimator: k(t) = r - 1 - log r, r = p_ref(t) / p_policy(t)
    const std::vector<double> lp = policy.token_log_probs(state, tokens);
    const std::vector<double> lq = reference.token_log_probs(state, tokens);
    if (lp.size() != tokens.size() || lq.size() != tokens.size())
        throw std::invalid_argument("kl_divergence_estimate: log-prob length mismatch");
    total = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        double r = std::exp(lq[t] - lp[t]);
        r = std::max(r, ratio_floor);
        total += r - 1.0 - std::log(r);
    }
    return total / static_cast<double>(tokens.size());
}

ScriptedControllerPolicy::ScriptedControllerPolicy(std::vector<Segment> windows, Script script)
    : windows_(std::move(windows)), script_(std::move(script)) {
    if (windows_.empty()) throw std::invalid_argument("scripted policy needs a window grid");
}

std::vector<ScriptedAction> ScriptedControllerPolicy::actions_for(
    const Question& question) const {
    return script_(question);
}

Sampled ScriptedControllerPolicy::sample(const PolicyState& state, double, double, Rng&) const {
    if (state.role != Role::kController)
        throw std::invalid_argument("scripted controller sampled in reasoner role");
    const std::vector<ScriptedAction> actions = actions_for(*state.question);
    const std::size_t i = static_cast<std::size_t>(state.round_index - 1);
    // fall back to ACCEPT when the script runs out
    const ScriptedAction action =
        i < actions.size() ? actions[i] : ScriptedAction{/*accept=*/true, 0};

    Sampled out;
    if (action.accept) {
        out.raw = render_controller_accept("scripted: accept");
        out.tokens = {1};
    } else {
        if (action.window >= windows_.size())
            throw std::invalid_argument("scripted window index out of range");
        out.raw = render_controller_continue("scripted: inspect window", windows_[action.window]);
        out.tokens = {0, static_cast<Token>(action.window)};
    }
    out.logprobs.assign(out.tokens.size(), 0.0);  // deterministic
    return out;
}

std::vector<double> ScriptedControllerPolicy::token_log_probs(const PolicyState&,
                                                              std::span<const Token> tokens) const {
    return std::vector<double>(tokens.size(), 0.0);
}

std::unique_ptr<Policy> ScriptedControllerPolicy::snapshot() const {
    return std::make_unique<ScriptedControllerPolicy>(windows_, script_);
}

}  // namespace segrl
