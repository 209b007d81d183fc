#include "segrl/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace segrl {

void validate_series(const TimeSeries& series) {
    if (series.values.empty())
        throw std::invalid_argument("time series must have length >= 1");
    for (double v : series.values)
        if (!std::isfinite(v))
            throw std::invalid_argument("time series values must be finite");
}

void validate_question(const Question& question) {
    if (question.options.size() < 2 || question.options.size() > 26)
        throw std::invalid_argument("question needs between 2 and 26 options");
    for (const auto& opt : question.options)
        if (opt.size() != 1 || opt[0] < 'A' || opt[0] > 'Z')
            throw std::invalid_argument("option labels must be single capital letters");
    if (std::find(question.options.begin(), question.options.end(), question.gold) ==
        question.options.end())
        throw std::invalid_argument("gold answer must be one of the options");
}

std::vector<double> slice(const TimeSeries& series, Segment seg) {
    if (!seg.valid_for(series.length()))
        throw std::out_of_range("segment [" + std::to_string(seg.start) + ", " +
                                std::to_string(seg.end) + ") out of bounds for length " +
                                std::to_string(series.length()));
    return {series.values.begin() + static_cast<std::ptrdiff_t>(seg.start),
            series.values.begin() + static_cast<std::ptrdiff_t>(seg.end)};
}

double coverage_fraction(const SegmentList& segments, std::size_t series_length) {
    if (series_length == 0) throw std::invalid_argument("coverage_fraction: empty series");
    if (segments.empty()) return 0.0;

    std::vector<Segment> sorted = segments.segments;
    for (const Segment& s : sorted)
        if (!s.valid_for(series_length))
            throw std::invalid_argument("coverage_fraction: segment out of bounds");
    std::sort(sorted.begin(), sorted.end(),
              [](const Segment& a, const Segment& b) { return a.start < b.start; });

    // merge-and-sum over the sorted intervals
    std::size_t covered = 0;
    std::size_t cur_start = sorted.front().start;
    std::size_t cur_end = sorted.front().end;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].start <= cur_end) {
            cur_end = std::max(cur_end, sorted[i].end);
        } else {
            covered += cur_end - cur_start;
            cur_start = sorted[i].start;
            cur_end = sorted[i].end;
        }
    }
    covered += cur_end - cur_start;
    return static_cast<double>(covered) / static_cast<double>(series_length);
}

std::string normalize_answer(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    std::string_view trimmed = text.substr(begin, end - begin);
    const std::size_t newline = trimmed.find('\n');
    if (newline != std::string_view::npos) trimmed = trimmed.substr(0, newline);
    std::string out;
    out.reserve(trimmed.size());
    for (char c : trimmed) {
        if (c == '\r') continue;
        out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
    return out;
}

}  // namespace segrl
