#include "segrl/rewards.hpp"

#include <stdexcept>

namespace segrl {

void RewardWeights::validate() const {
    if (reliability < 0.0 || controller_format < 0.0 || correctness < 0.0 ||
        reasoner_format < 0.0)
        throw std::invalid_argument("reward weights must be nonnegative");
}

int correctness(const Question& question, std::string_view predicted) {
    if (predicted.empty()) return 0;
    return normalize_answer(predicted) == question.gold ? 1 : 0;
}

double reliability(std::span<const int> indicators) {
    if (indicators.empty()) throw std::invalid_argument("reliability: empty indicator set");
    double sum = 0.0;
    for (int c : indicators) sum += c;
    return sum / static_cast<double>(indicators.size());
}

double controller_reward(double controller_format, double reliability_value,
                         const RewardWeights& weights) {
    if (controller_format < 0.0) return -1.0;
    return weights.reliability * reliability_value + weights.controller_format * controller_format;
}

double reasoner_reward(int correct, double reasoner_format, const RewardWeights& weights) {
    return weights.correctness * correct + weights.reasoner_format * reasoner_format;
}

double population_variance(std::span<const int> indicators) {
    if (indicators.empty()) throw std::invalid_argument("population_variance: empty set");
    double mean = 0.0;
    for (int c : indicators) mean += c;
    mean /= static_cast<double>(indicators.size());
    double var = 0.0;
    for (int c : indicators) var += (c - mean) * (c - mean);
    return var / static_cast<double>(indicators.size());
}

double population_variance_real(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("population_variance: empty set");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return var / static_cast<double>(values.size());
}

}  // namespace segrl
