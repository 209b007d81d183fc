#include "segrl/trace.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

#include "segrl/protocol.hpp"

namespace segrl {

namespace {

constexpr std::size_t kMaxSegments = 3;
constexpr std::size_t kMinSegmentSteps = 8;

void check_tag_free(std::string_view text) {
    for (std::string_view tag :
         {grammar::kThinkOpen, grammar::kThinkClose, grammar::kAnswerOpen, grammar::kAnswerClose,
          grammar::kTraceToolOpen, grammar::kTraceToolClose, grammar::kToolCallOpen,
          grammar::kToolCallClose}) {
        if (text.find(tag) != std::string_view::npos)
            throw std::invalid_argument("trace think text embeds a grammar tag");
    }
}

bool is_blank(std::string_view text) {
    for (unsigned char c : text)
        if (!std::isspace(c)) return false;
    return true;
}

// "[a, b]" with optional whitespace; inclusive integer bounds.
bool parse_bounds(std::string_view text, long long& a, long long& b) {
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    auto read_int = [&](long long& out) {
        skip_ws();
        std::size_t from = i;
        if (i < text.size() && (text[i] == '-' || text[i] == '+')) ++i;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        if (i == from) return false;
        auto [ptr, ec] = std::from_chars(text.data() + from, text.data() + i, out);
        return ec == std::errc() && ptr == text.data() + i;
    };
    skip_ws();
    if (i >= text.size() || text[i] != '[') return false;
    ++i;
    if (!read_int(a)) return false;
    skip_ws();
    if (i >= text.size() || text[i] != ',') return false;
    ++i;
    if (!read_int(b)) return false;
    skip_ws();
    if (i >= text.size() || text[i] != ']') return false;
    ++i;
    skip_ws();
    return i == text.size();
}

}  // namespace

std::string serialize_trace(const InteractionTrajectory& trajectory) {
    if (trajectory.final_answer.empty())
        throw std::invalid_argument("serialize_trace: trajectory has no final answer");

    std::string out;
    std::string final_think;
    for (const TrajectoryRound& round : trajectory.rounds) {
        if (round.controller.decision == DecisionKind::kContinue &&
            round.controller.proposed_segment) {
            check_tag_free(round.controller.think);
            const auto [a, b] = segment_to_wire(*round.controller.proposed_segment);
            out.append(grammar::kThinkOpen);
            out.append(round.controller.think);
            out.append(grammar::kThinkClose);
            out.push_back('\n');
            out.append(grammar::kTraceToolOpen);
            out.append(" [" + std::to_string(a) + ", " + std::to_string(b) + "] ");
            out.append(grammar::kTraceToolClose);
            out.push_back('\n');
        }
        if (round.reasoner) final_think = round.reasoner->think;
    }
    check_tag_free(final_think);
    out.append(grammar::kThinkOpen);
    out.append(final_think);
    out.append(grammar::kThinkClose);
    out.push_back('\n');
    out.append(grammar::kAnswerOpen);
    out.append(trajectory.final_answer);
    out.append(grammar::kAnswerClose);
    out.push_back('\n');
    return out;
}

TraceParse parse_trace(std::string_view raw, std::size_t series_length) {
    TraceParse out;
    std::size_t pos = 0;
    std::string pending_think;
    bool have_think = false;
    std::size_t segment_count = 0;

    auto fail = [&](std::string message, std::size_t at) {
        out.ok = false;
        out.error = std::move(message);
        out.error_pos = at;
        return out;
    };

    while (pos < raw.size()) {
        std::size_t best = std::string_view::npos;
        std::string_view open, close;
        for (auto [o, c] : {std::pair{grammar::kThinkOpen, grammar::kThinkClose},
                            std::pair{grammar::kTraceToolOpen, grammar::kTraceToolClose},
                            std::pair{grammar::kAnswerOpen, grammar::kAnswerClose}}) {
            const std::size_t at = raw.find(o, pos);
            if (at < best) {
                best = at;
                open = o;
                close = c;
            }
        }
        if (best == std::string_view::npos) {
            if (!is_blank(raw.substr(pos))) out.lint.push_back("text outside blocks");
            break;
        }
        if (!is_blank(raw.substr(pos, best - pos))) out.lint.push_back("text outside blocks");

        const std::size_t content_from = best + open.size();
        const std::size_t close_at = raw.find(close, content_from);
        if (close_at == std::string_view::npos)
            return fail("unbalanced " + std::string(open) + " tag", best);
        const std::string_view content = raw.substr(content_from, close_at - content_from);

        if (open == grammar::kThinkOpen) {
            if (have_think) out.lint.push_back("consecutive think blocks");
            pending_think = std::string(content);
            have_think = true;
        } else if (open == grammar::kTraceToolOpen) {
            if (!have_think) out.lint.push_back("selection without preceding think");
            long long a = 0, b = 0;
            if (!parse_bounds(content, a, b))
                return fail("malformed segment bounds", content_from);
            if (a > b) {
                out.lint.push_back("segment bounds reversed");
            } else {
                if (static_cast<std::size_t>(b - a + 1) < kMinSegmentSteps)
                    out.lint.push_back("segment length " + std::to_string(b - a + 1) +
                                       " below minimum " + std::to_string(kMinSegmentSteps));
                if (a < 0 ||
                    (series_length > 0 && b >= static_cast<long long>(series_length)))
                    out.lint.push_back("segment bounds outside series range");
                Segment seg{static_cast<std::size_t>(std::max(a, 0ll)),
                            static_cast<std::size_t>(b) + 1};
                out.steps.push_back(TraceStep{pending_think, seg});
            }
            ++segment_count;
            pending_think.clear();
            have_think = false;
        } else {  // answer block
            if (!have_think) out.lint.push_back("answer without preceding think");
            if (!out.answer.empty()) {
                out.lint.push_back("multiple answer blocks");
            } else {
                out.answer = normalize_answer(content);
                out.steps.push_back(TraceStep{pending_think, std::nullopt});
            }
            pending_think.clear();
            have_think = false;
        }
        pos = close_at + close.size();
    }

    if (segment_count > kMaxSegments)
        out.lint.push_back("more than " + std::to_string(kMaxSegments) + " segments");
    if (out.answer.empty()) out.lint.push_back("missing answer block");
    if (have_think) out.lint.push_back("trailing think block");

    out.ok = true;
    return out;
}

}  // namespace segrl
