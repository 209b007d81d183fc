#include "segrl/toy_policy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "segrl/protocol.hpp"

namespace segrl {

namespace {

constexpr Token kTokContinue = 0;
constexpr Token kTokAccept = 1;

// First one or two nonnegative integers appearing in the text.
std::vector<long long> leading_integers(std::string_view text, std::size_t limit = 2) {
    std::vector<long long> out;
    std::size_t i = 0;
    while (i < text.size() && out.size() < limit) {
        if (std::isdigit(static_cast<unsigned char>(text[i]))) {
            long long value = 0;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
                value = value * 10 + (text[i] - '0');
                ++i;
            }
            out.push_back(value);
        } else {
            ++i;
        }
    }
    return out;
}

// Union of covered (index, value) pairs, sorted by index.
std::vector<std::pair<std::size_t, double>> covered_points(const PolicyState& state) {
    std::vector<std::pair<std::size_t, double>> points;
    for (const SegmentView& view : state.views)
        for (std::size_t i = 0; i < view.values.size(); ++i)
            points.emplace_back(view.segment.start + i, view.values[i]);
    std::sort(points.begin(), points.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    points.erase(std::unique(points.begin(), points.end(),
                             [](const auto& a, const auto& b) { return a.first == b.first; }),
                 points.end());
    return points;
}

// 0 = none, 1 = one transient run, 2 = several transient runs, 3 = sustained
int run_code(const std::vector<std::size_t>& run_lengths, std::size_t sustained_run) {
    if (run_lengths.empty()) return 0;
    for (std::size_t len : run_lengths)
        if (len >= sustained_run) return 3;
    return run_lengths.size() == 1 ? 1 : 2;
}

}  // namespace

void ToyGridConfig::validate() const {
    if (series_length == 0 || window_count == 0)
        throw std::invalid_argument("toy policy: series length and window count must be positive");
    if (series_length % window_count != 0)
        throw std::invalid_argument("toy policy: window count must divide the series length");
    if (option_count < 2 || option_count > 26)
        throw std::invalid_argument("toy policy: option count must be in [2, 26]");
    if (round_features < 1 || coverage_buckets == 0 || question_tags == 0)
        throw std::invalid_argument("toy policy: feature dimensions must be positive");
    if (corrupt_controller < 0.0 || corrupt_controller > 1.0 || corrupt_reasoner < 0.0 ||
        corrupt_reasoner > 1.0)
        throw std::invalid_argument("toy policy: corruption rates must be in [0, 1]");
}

std::size_t ToyGridConfig::controller_rows() const {
    return static_cast<std::size_t>(round_features) * coverage_buckets * question_tags;
}

std::size_t ToyGridConfig::reasoner_rows() const {
    return question_tags * 16;  // 4 positive-event codes x 4 negative-event codes
}

ToyGridPolicy::ToyGridPolicy(ToyGridConfig config) : config_(config) {
    config_.validate();
    const std::size_t len = config_.series_length / config_.window_count;
    for (std::size_t w = 0; w < config_.window_count; ++w)
        windows_.push_back(Segment{w * len, (w + 1) * len});
    ctl_logits_.assign(config_.controller_rows() * config_.controller_actions(), 0.0);
    rsn_logits_.assign(config_.reasoner_rows() * config_.option_count, 0.0);
}

std::size_t ToyGridPolicy::question_tag(const Question& question) const {
    const std::vector<long long> ints = leading_integers(question.prompt);
    const std::size_t w = config_.window_count;
    std::size_t tag = 0;
    if (ints.size() == 1) {
        tag = 1 + std::min<std::size_t>(static_cast<std::size_t>(std::max(ints[0], 0ll)), w - 1);
    } else if (ints.size() >= 2) {
        const std::size_t a =
            std::min<std::size_t>(static_cast<std::size_t>(std::max(ints[0], 0ll)), w - 1);
        const std::size_t b =
            std::min<std::size_t>(static_cast<std::size_t>(std::max(ints[1], 0ll)), w - 1);
        tag = 1 + w + a * w + b;
    }
    return tag % config_.question_tags;
}

std::size_t ToyGridPolicy::controller_feature(const PolicyState& state) const {
    if (state.role != Role::kController || state.question == nullptr || state.series == nullptr)
        throw std::invalid_argument("controller_feature: not a controller state");
    const int round =
        std::clamp(state.round_index, 1, config_.round_features) - 1;
    const double coverage = coverage_fraction(state.segments, state.series->length());
    std::size_t bucket = 0;
    if (coverage > 0.0) {
        bucket = 1 + std::min<std::size_t>(
                         static_cast<std::size_t>(coverage * (config_.coverage_buckets - 1)),
                         config_.coverage_buckets - 2);
    }
    return (static_cast<std::size_t>(round) * config_.coverage_buckets + bucket) *
               config_.question_tags +
           question_tag(*state.question);
}

std::size_t ToyGridPolicy::reasoner_feature(const PolicyState& state) const {
    if (state.role != Role::kReasoner || state.question == nullptr)
        throw std::invalid_argument("reasoner_feature: not a reasoner state");

    const auto points = covered_points(state);
    std::vector<std::size_t> pos_runs, neg_runs;
    std::size_t pos_len = 0, neg_len = 0;
    std::size_t prev_index = 0;
    bool first = true;
    auto flush = [&](std::vector<std::size_t>& runs, std::size_t& len) {
        if (len > 0) runs.push_back(len);
        len = 0;
    };
    for (const auto& [index, value] : points) {
        const bool contiguous = !first && index == prev_index + 1;
        if (!contiguous) {
            flush(pos_runs, pos_len);
            flush(neg_runs, neg_len);
        }
        if (value > config_.event_threshold) {
            ++pos_len;
            flush(neg_runs, neg_len);
        } else if (value < -config_.event_threshold) {
            ++neg_len;
            flush(pos_runs, pos_len);
        } else {
            flush(pos_runs, pos_len);
            flush(neg_runs, neg_len);
        }
        prev_index = index;
        first = false;
    }
    flush(pos_runs, pos_len);
    flush(neg_runs, neg_len);

    const int pos = run_code(pos_runs, config_.sustained_run);
    const int neg = run_code(neg_runs, config_.sustained_run);
    const std::size_t profile = static_cast<std::size_t>(pos) * 4 + static_cast<std::size_t>(neg);
    return question_tag(*state.question) * 16 + profile;
}

std::vector<double> ToyGridPolicy::softmax_row(std::span<const double> logits,
                                               double temperature) const {
    std::vector<double> probs(logits.size());
    const double t = std::max(temperature, 1e-12);
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp((logits[i] - zmax) / t);
        total += probs[i];
    }
    for (double& p : probs) p /= total;
    return probs;
}

std::vector<double> ToyGridPolicy::action_probs(const PolicyState& state) const {
    if (state.role == Role::kController) {
        const std::size_t row = controller_feature(state);
        const std::size_t n = config_.controller_actions();
        return softmax_row({ctl_logits_.data() + row * n, n}, 1.0);
    }
    const std::size_t row = reasoner_feature(state);
    const std::size_t k = state.question->options.size();
    if (k > config_.option_count)
        throw std::invalid_argument("toy policy: question has more options than the table");
    return softmax_row({rsn_logits_.data() + row * config_.option_count, k}, 1.0);
}

std::size_t ToyGridPolicy::sample_nucleus(std::span<const double> probs, double nucleus_mass,
                                          Rng& rng) const {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    double cum = 0.0;
    std::size_t keep = 0;
    for (; keep < order.size(); ++keep) {
        cum += probs[order[keep]];
        if (cum >= nucleus_mass) {
            ++keep;
            break;
        }
    }
    keep = std::max<std::size_t>(keep, 1);
    std::vector<double> weights(keep);
    for (std::size_t i = 0; i < keep; ++i) weights[i] = probs[order[i]];
    return order[rng.categorical(weights)];
}

Sampled ToyGridPolicy::sample(const PolicyState& state, double temperature, double nucleus_mass,
                              Rng& rng) const {
    Sampled out;
    if (state.role == Role::kController) {
        const std::size_t row = controller_feature(state);
        const std::size_t n = config_.controller_actions();
        const std::span<const double> logits{ctl_logits_.data() + row * n, n};
        const std::vector<double> sampling = softmax_row(logits, temperature);
        const std::size_t action = sample_nucleus(sampling, nucleus_mass, rng);

        const std::vector<double> base = softmax_row(logits, 1.0);
        const std::size_t accept_index = config_.window_count;
        if (action == accept_index) {
            out.tokens = {kTokAccept};
            out.logprobs = {std::log(base[accept_index])};
            out.raw = render_controller_accept(
                "round " + std::to_string(state.round_index) + ": accepting the current answer");
        } else {
            const double p_continue = 1.0 - base[accept_index];
            out.tokens = {kTokContinue, static_cast<Token>(action)};
            out.logprobs = {std::log(p_continue), std::log(base[action] / p_continue)};
            const Segment seg = windows_[action];
            const auto [a, b] = segment_to_wire(seg);
            out.raw = render_controller_continue(
                "round " + std::to_string(state.round_index) + ": inspect window " +
                    std::to_string(action) + " covering [" + std::to_string(a) + ", " +
                    std::to_string(b) + "]",
                seg);
        }
        if (config_.corrupt_controller > 0.0 && rng.uniform() < config_.corrupt_controller)
            out.raw = corrupt_controller_message(action, rng);
    } else {
        const std::size_t row = reasoner_feature(state);
        const std::size_t k = state.question->options.size();
        if (k > config_.option_count)
            throw std::invalid_argument("toy policy: question has more options than the table");
        const std::span<const double> logits{rsn_logits_.data() + row * config_.option_count, k};
        const std::vector<double> sampling = softmax_row(logits, temperature);
        const std::size_t choice = sample_nucleus(sampling, nucleus_mass, rng);
        const std::vector<double> base = softmax_row(logits, 1.0);

        out.tokens = {static_cast<Token>(choice)};
        out.logprobs = {std::log(base[choice])};
        const std::string& letter = state.question->options[choice];
        std::size_t covered = 0;
        for (const SegmentView& view : state.views) covered += view.values.size();
        out.raw = render_reasoner_message(
            "profile " + std::to_string(row % 16) + " over " + std::to_string(covered) +
                " covered points in " + std::to_string(state.views.size()) + " segments",
            letter);
        if (config_.corrupt_reasoner > 0.0 && rng.uniform() < config_.corrupt_reasoner)
            out.raw = corrupt_reasoner_message(letter, rng);
    }
    return out;
}

std::string ToyGridPolicy::corrupt_controller_message(std::size_t action, Rng& rng) const {
    const Segment seg = windows_[action % windows_.size()];
    switch (rng.uniform_index(4)) {
        case 0:  // no decision at all
            return render_think("corrupted: no decision");
        case 1:  // both decisions in one message
            return render_controller_continue("corrupted: dual decision", seg) + "\n" +
                   "<answer>ACCEPT</answer>";
        case 2:  // segment beyond the series
            return "<think>corrupted: bad bounds</think>\n<tool_call>\n{\"name\": "
                   "\"timeseries_selection_tool\", \"arguments\": {\"ts_seg\": [0, " +
                   std::to_string(config_.series_length * 2) + "]}}\n</tool_call>";
        default:  // stray text outside the blocks
            return render_controller_accept("corrupted: stray text") + "\ntrailing noise";
    }
}

std::string ToyGridPolicy::corrupt_reasoner_message(std::string_view answer, Rng& rng) const {
    switch (rng.uniform_index(4)) {
        case 0:  // missing answer block
            return render_think("corrupted: no answer");
        case 1:  // two answer blocks
            return render_reasoner_message("corrupted: double answer", answer) + "\n<answer>" +
                   std::string(answer) + "</answer>";
        case 2:  // answer nested inside the think block
            return "<think>corrupted <answer>" + std::string(answer) +
                   "</answer> nested</think>";
        default:  // stray text outside the blocks
            return render_reasoner_message("corrupted: stray text", answer) + "\nnoise";
    }
}

std::vector<double> ToyGridPolicy::token_log_probs(const PolicyState& state,
                                                   std::span<const Token> tokens) const {
    std::vector<double> out;
    out.reserve(tokens.size());
    if (state.role == Role::kController) {
        if (tokens.empty()) return out;
        const std::size_t row = controller_feature(state);
        const std::size_t n = config_.controller_actions();
        const std::vector<double> base = softmax_row({ctl_logits_.data() + row * n, n}, 1.0);
        const std::size_t accept_index = config_.window_count;
        if (tokens[0] == kTokAccept) {
            out.push_back(std::log(base[accept_index]));
        } else if (tokens[0] == kTokContinue) {
            const double p_continue = 1.0 - base[accept_index];
            out.push_back(std::log(p_continue));
            if (tokens.size() > 1) {
                const auto w = static_cast<std::size_t>(tokens[1]);
                if (w >= config_.window_count)
                    throw std::invalid_argument("token_log_probs: window token out of range");
                out.push_back(std::log(base[w] / p_continue));
            }
        } else {
            throw std::invalid_argument("token_log_probs: bad controller decision token");
        }
        if (tokens.size() > out.size())
            throw std::invalid_argument("token_log_probs: too many controller tokens");
        return out;
    }
    const std::vector<double> base = action_probs(state);
    for (Token t : tokens) {
        const auto idx = static_cast<std::size_t>(t);
        if (idx >= base.size())
            throw std::invalid_argument("token_log_probs: answer token out of range");
        out.push_back(std::log(base[idx]));
    }
    return out;
}

std::size_t ToyGridPolicy::param_count() const { return ctl_logits_.size() + rsn_logits_.size(); }

std::vector<double> ToyGridPolicy::parameters() const {
    std::vector<double> params;
    params.reserve(param_count());
    params.insert(params.end(), ctl_logits_.begin(), ctl_logits_.end());
    params.insert(params.end(), rsn_logits_.begin(), rsn_logits_.end());
    return params;
}

void ToyGridPolicy::set_parameters(std::span<const double> params) {
    if (params.size() != param_count())
        throw std::invalid_argument("set_parameters: size mismatch");
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(ctl_logits_.size()),
              ctl_logits_.begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(ctl_logits_.size()), params.end(),
              rsn_logits_.begin());
}

void ToyGridPolicy::accumulate_score_gradient(const PolicyState& state,
                                              std::span<const Token> tokens, double coef,
                                              std::span<double> grad) const {
    if (grad.size() != param_count())
        throw std::invalid_argument("accumulate_score_gradient: gradient size mismatch");
    if (tokens.empty()) return;

    if (state.role == Role::kController) {
        const std::size_t row = controller_feature(state);
        const std::size_t n = config_.controller_actions();
        const std::vector<double> base = softmax_row({ctl_logits_.data() + row * n, n}, 1.0);
        const std::size_t accept_index = config_.window_count;
        double* row_grad = grad.data() + row * n;
        if (tokens[0] == kTokAccept) {
            // d log p(accept) / d z_a = [a == accept] - p_a
            for (std::size_t a = 0; a < n; ++a)
                row_grad[a] += coef * ((a == accept_index ? 1.0 : 0.0) - base[a]);
        } else {
            if (tokens.size() < 2)
                throw std::invalid_argument("accumulate_score_gradient: missing window token");
            const auto w = static_cast<std::size_t>(tokens[1]);
            // log p(continue) + log p(w | continue) = log p_w of the joint
            for (std::size_t a = 0; a < n; ++a)
                row_grad[a] += coef * ((a == w ? 1.0 : 0.0) - base[a]);
        }
        return;
    }

    const std::size_t row = reasoner_feature(state);
    const std::size_t k = state.question->options.size();
    const std::vector<double> base = softmax_row({rsn_logits_.data() + row * config_.option_count, k}, 1.0);
    double* row_grad = grad.data() + ctl_logits_.size() + row * config_.option_count;
    for (Token t : tokens) {
        const auto choice = static_cast<std::size_t>(t);
        for (std::size_t a = 0; a < k; ++a)
            row_grad[a] += coef * ((a == choice ? 1.0 : 0.0) - base[a]);
    }
}

std::unique_ptr<Policy> ToyGridPolicy::snapshot() const {
    return std::make_unique<ToyGridPolicy>(*this);
}

std::optional<std::vector<double>> ToyGridPolicy::next_token_distribution(
    const PolicyState& state, std::span<const Token> prefix) const {
    if (state.role == Role::kReasoner) {
        if (!prefix.empty()) return std::nullopt;  // single-token messages
        return action_probs(state);
    }
    const std::size_t row = controller_feature(state);
    const std::size_t n = config_.controller_actions();
    const std::vector<double> base = softmax_row({ctl_logits_.data() + row * n, n}, 1.0);
    const std::size_t accept_index = config_.window_count;
    if (prefix.empty()) {
        const double p_accept = base[accept_index];
        return std::vector<double>{1.0 - p_accept, p_accept};  // {continue, accept}
    }
    if (prefix.size() == 1 && prefix[0] == kTokContinue) {
        const double p_continue = 1.0 - base[accept_index];
        std::vector<double> dist(config_.window_count);
        for (std::size_t w = 0; w < config_.window_count; ++w) dist[w] = base[w] / p_continue;
        return dist;
    }
    return std::nullopt;
}

}  // namespace segrl
