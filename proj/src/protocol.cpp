#include "segrl/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace segrl {

namespace {

using json = nlohmann::json;

struct Block {
    std::string_view tag;      // opening tag, e.g. "<think>"
    std::string_view content;  // text between the tags
    std::size_t begin = 0;     // offset of the opening tag
    std::size_t end = 0;       // offset one past the closing tag
};

struct Scan {
    std::vector<Block> blocks;
    bool stray_text = false;
};

std::string_view close_tag_for(std::string_view open) {
    if (open == grammar::kThinkOpen) return grammar::kThinkClose;
    if (open == grammar::kAnswerOpen) return grammar::kAnswerClose;
    if (open == grammar::kToolCallOpen) return grammar::kToolCallClose;
    if (open == grammar::kTraceToolOpen) return grammar::kTraceToolClose;
    throw std::logic_error("unknown tag");
}

bool is_blank(std::string_view text) {
    return std::all_of(text.begin(), text.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

// Left-to-right scan for well-formed <tag>...</tag> spans drawn from `tags`.
// An opening tag without a matching close is left in place and counts as
// stray text, as does any non-blank text between blocks.
Scan scan_blocks(std::string_view raw, std::span<const std::string_view> tags) {
    Scan scan;
    std::size_t pos = 0;
    std::size_t stray_from = 0;
    while (pos < raw.size()) {
        std::size_t best = std::string_view::npos;
        std::string_view best_tag;
        for (std::string_view tag : tags) {
            const std::size_t at = raw.find(tag, pos);
            if (at < best) {
                best = at;
                best_tag = tag;
            }
        }
        if (best == std::string_view::npos) break;

        const std::string_view close = close_tag_for(best_tag);
        const std::size_t content_from = best + best_tag.size();
        const std::size_t close_at = raw.find(close, content_from);
        if (close_at == std::string_view::npos) {
            // orphan opening tag: skip it, keep scanning the remainder
            pos = content_from;
            continue;
        }
        if (!is_blank(raw.substr(stray_from, best - stray_from))) scan.stray_text = true;
        scan.blocks.push_back(Block{best_tag, raw.substr(content_from, close_at - content_from),
                                    best, close_at + close.size()});
        pos = close_at + close.size();
        stray_from = pos;
    }
    if (!is_blank(raw.substr(stray_from))) scan.stray_text = true;
    return scan;
}

void add_violation(FormatReport& report, Violation v) {
    if (!report.has(v)) report.violations.push_back(v);
}

void finalize_report(FormatReport& report) {
    double score = 1.0;
    bool critical = false;
    for (Violation v : report.violations) {
        if (violation_is_critical(v))
            critical = true;
        else
            score -= 0.25;
    }
    report.critical = critical;
    report.score = critical ? -1.0 : std::max(score, 0.0);
}

// Tool-call payloads must be the exact record shape; unknown extra keys are a
// non-critical violation, anything else malformed is critical.
struct ToolCall {
    bool valid = false;
    bool unknown_keys = false;
    long long wire_start = 0;
    long long wire_end = 0;
};

ToolCall parse_tool_call(std::string_view content) {
    ToolCall out;
    json doc = json::parse(content, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return out;
    if (!doc.contains("name") || !doc["name"].is_string() ||
        doc["name"].get<std::string>() != grammar::kToolName)
        return out;
    if (!doc.contains("arguments") || !doc["arguments"].is_object()) return out;
    const json& args = doc["arguments"];
    if (!args.contains("ts_seg") || !args["ts_seg"].is_array() || args["ts_seg"].size() != 2)
        return out;
    const json& seg = args["ts_seg"];
    if (!seg[0].is_number_integer() || !seg[1].is_number_integer()) return out;
    out.valid = true;
    out.wire_start = seg[0].get<long long>();
    out.wire_end = seg[1].get<long long>();
    for (const auto& item : doc.items())
        if (item.key() != "name" && item.key() != "arguments") out.unknown_keys = true;
    for (const auto& item : args.items())
        if (item.key() != "ts_seg") out.unknown_keys = true;
    return out;
}

}  // namespace

std::string_view violation_name(Violation v) {
    switch (v) {
        case Violation::kMissingThink: return "missing_think";
        case Violation::kMultipleThink: return "multiple_think";
        case Violation::kStrayText: return "stray_text";
        case Violation::kMultipleAnswer: return "multiple_answer";
        case Violation::kAnswerInsideThink: return "answer_inside_think";
        case Violation::kUnknownToolKey: return "unknown_tool_key";
        case Violation::kMissingAnswer: return "missing_answer";
        case Violation::kNoDecision: return "no_decision";
        case Violation::kDualDecision: return "dual_decision";
        case Violation::kInvalidToolCall: return "invalid_tool_call";
        case Violation::kSegmentOutOfBounds: return "segment_out_of_bounds";
        case Violation::kSegmentDegenerate: return "segment_degenerate";
        case Violation::kInvalidAccept: return "invalid_accept";
        case Violation::kAcceptWithoutPriorAnswer: return "accept_without_prior_answer";
    }
    return "unknown";
}

bool violation_is_critical(Violation v) {
    switch (v) {
        case Violation::kMissingThink:
        case Violation::kMultipleThink:
        case Violation::kStrayText:
        case Violation::kMultipleAnswer:
        case Violation::kAnswerInsideThink:
        case Violation::kUnknownToolKey: return false;
        default: return true;
    }
}

bool FormatReport::has(Violation v) const {
    return std::find(violations.begin(), violations.end(), v) != violations.end();
}

ReasonerParse parse_reasoner(std::string_view raw) {
    ReasonerParse out;
    out.step.raw_message = std::string(raw);

    static constexpr std::string_view kTags[] = {grammar::kThinkOpen, grammar::kAnswerOpen};
    const Scan scan = scan_blocks(raw, kTags);

    std::size_t think_count = 0;
    std::vector<std::string_view> answers;  // in order of appearance
    bool nested_answer = false;
    for (const Block& block : scan.blocks) {
        if (block.tag == grammar::kThinkOpen) {
            if (think_count == 0) out.step.think = std::string(block.content);
            ++think_count;
            // an <answer> inside the think block is a detectable violation
            static constexpr std::string_view kAnswerOnly[] = {grammar::kAnswerOpen};
            const Scan inner = scan_blocks(block.content, kAnswerOnly);
            for (const Block& nested : inner.blocks) {
                nested_answer = true;
                answers.push_back(nested.content);
            }
        } else {
            answers.push_back(block.content);
        }
    }

    if (scan.stray_text) add_violation(out.report, Violation::kStrayText);
    if (think_count == 0) add_violation(out.report, Violation::kMissingThink);
    if (think_count > 1) add_violation(out.report, Violation::kMultipleThink);
    if (answers.size() > 1) add_violation(out.report, Violation::kMultipleAnswer);
    if (nested_answer) add_violation(out.report, Violation::kAnswerInsideThink);

    std::string answer = answers.empty() ? std::string() : normalize_answer(answers.front());
    if (answer.empty()) {
        add_violation(out.report, Violation::kMissingAnswer);
        out.step.answer.clear();
    } else {
        out.step.answer = answer;
    }

    finalize_report(out.report);
    out.step.format_score = out.report.score;
    return out;
}

ControllerParse parse_controller(std::string_view raw, const ControllerParseContext& ctx) {
    ControllerParse out;
    out.step.raw_message = std::string(raw);

    static constexpr std::string_view kTags[] = {grammar::kThinkOpen, grammar::kAnswerOpen,
                                                 grammar::kToolCallOpen};
    const Scan scan = scan_blocks(raw, kTags);

    std::size_t think_count = 0;
    std::vector<ToolCall> tool_calls;
    std::vector<std::string> accepts;  // normalized answer-block payloads
    for (const Block& block : scan.blocks) {
        if (block.tag == grammar::kThinkOpen) {
            if (think_count == 0) out.step.think = std::string(block.content);
            ++think_count;
        } else if (block.tag == grammar::kToolCallOpen) {
            tool_calls.push_back(parse_tool_call(block.content));
        } else {
            accepts.push_back(normalize_answer(block.content));
        }
    }

    if (scan.stray_text) add_violation(out.report, Violation::kStrayText);
    if (think_count == 0) add_violation(out.report, Violation::kMissingThink);
    if (think_count > 1) add_violation(out.report, Violation::kMultipleThink);

    const std::size_t decision_count = tool_calls.size() + accepts.size();
    if (decision_count == 0) {
        add_violation(out.report, Violation::kNoDecision);
    } else if (decision_count > 1) {
        add_violation(out.report, Violation::kDualDecision);
    } else if (!tool_calls.empty()) {
        const ToolCall& call = tool_calls.front();
        out.step.decision = DecisionKind::kContinue;
        if (!call.valid) {
            add_violation(out.report, Violation::kInvalidToolCall);
        } else {
            if (call.unknown_keys) add_violation(out.report, Violation::kUnknownToolKey);
            if (call.wire_start > call.wire_end) {
                add_violation(out.report, Violation::kSegmentDegenerate);
            } else if (call.wire_start < 0 ||
                       call.wire_end >= static_cast<long long>(ctx.series_length)) {
                add_violation(out.report, Violation::kSegmentOutOfBounds);
            } else {
                out.step.proposed_segment = segment_from_wire(call.wire_start, call.wire_end);
            }
        }
    } else {
        out.step.decision = DecisionKind::kAccept;
        if (accepts.front() != grammar::kAcceptKeyword) {
            add_violation(out.report, Violation::kInvalidAccept);
        } else if (!ctx.accept_allowed) {
            add_violation(out.report, Violation::kAcceptWithoutPriorAnswer);
        }
    }

    finalize_report(out.report);
    out.step.format_score = out.report.score;
    out.step.violation = out.report.critical;
    if (out.report.critical) out.step.proposed_segment.reset();
    return out;
}

double score_controller_trajectory(std::span<const ControllerStep> steps) {
    if (steps.empty())
        throw std::invalid_argument("score_controller_trajectory: empty step sequence");

    bool violated = false;
    double sum = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const ControllerStep& step = steps[i];
        if (step.violation) violated = true;
        const bool is_final = (i + 1 == steps.size());
        if (!is_final && step.decision != DecisionKind::kContinue) violated = true;
        if (is_final && step.decision != DecisionKind::kAccept) violated = true;
        sum += step.format_score;
    }
    if (violated) return -1.0;
    return sum / static_cast<double>(steps.size());
}

std::string render_think(std::string_view think) {
    std::string out;
    out.reserve(think.size() + 16);
    out.append(grammar::kThinkOpen);
    out.append(think);
    out.append(grammar::kThinkClose);
    return out;
}

std::string render_reasoner_message(std::string_view think, std::string_view answer) {
    std::string out = render_think(think);
    out.push_back('\n');
    out.append(grammar::kAnswerOpen);
    out.append(answer);
    out.append(grammar::kAnswerClose);
    return out;
}

std::string render_controller_continue(std::string_view think, Segment seg) {
    const auto [a, b] = segment_to_wire(seg);
    json call = {{"name", std::string(grammar::kToolName)},
                 {"arguments", {{"ts_seg", {a, b}}}}};
    std::string out = render_think(think);
    out.push_back('\n');
    out.append(grammar::kToolCallOpen);
    out.push_back('\n');
    out.append(call.dump());
    out.push_back('\n');
    out.append(grammar::kToolCallClose);
    return out;
}

std::string render_controller_accept(std::string_view think) {
    std::string out = render_think(think);
    out.push_back('\n');
    out.append(grammar::kAnswerOpen);
    out.append(grammar::kAcceptKeyword);
    out.append(grammar::kAnswerClose);
    return out;
}

Segment segment_from_wire(long long wire_start, long long wire_end) {
    if (wire_start < 0 || wire_end < wire_start)
        throw std::invalid_argument("segment_from_wire: bad inclusive bounds");
    return Segment{static_cast<std::size_t>(wire_start), static_cast<std::size_t>(wire_end) + 1};
}

std::pair<long long, long long> segment_to_wire(Segment seg) {
    if (seg.end <= seg.start) throw std::invalid_argument("segment_to_wire: degenerate segment");
    return {static_cast<long long>(seg.start), static_cast<long long>(seg.end) - 1};
}

}  // namespace segrl
