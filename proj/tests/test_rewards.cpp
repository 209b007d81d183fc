#include <doctest.h>

#include "segrl/rewards.hpp"
#include "segrl/rng.hpp"

using namespace segrl;

namespace {
const Question kQuestion{"q", "p", {"A", "B", "C", "D"}, "A"};
const RewardWeights kDefaults{};
}  // namespace

TEST_CASE("correctness indicator") {
    CHECK(correctness(kQuestion, "A") == 1);
    CHECK(correctness(kQuestion, "B") == 0);
    CHECK(correctness(kQuestion, " a\nextra") == 1);
    CHECK(correctness(kQuestion, "") == 0);
}

TEST_CASE("reliability is the mean of the indicators") {
    CHECK(reliability(std::vector<int>{1, 1, 1, 1, 1, 1}) == 1.0);
    CHECK(reliability(std::vector<int>{1, 0, 1, 0, 1, 0}) == 0.5);
    CHECK_THROWS_AS(reliability({}), std::invalid_argument);

    // reliability equals mean correctness over the same indicator set exactly
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> flags;
        double sum = 0.0;
        for (int i = 0; i < 12; ++i) {
            flags.push_back(rng.uniform() < 0.4 ? 1 : 0);
            sum += flags.back();
        }
        CHECK(reliability(flags) == sum / flags.size());
    }
}

TEST_CASE("mock reasoner reliability converges at the monte carlo rate") {
    Rng rng(17);
    std::vector<int> flags;
    for (int i = 0; i < 10000; ++i) flags.push_back(rng.uniform() < 0.7 ? 1 : 0);
    CHECK(std::abs(reliability(flags) - 0.7) <= 0.02);
}

TEST_CASE("controller reward") {
    CHECK(controller_reward(-1.0, 1.0, kDefaults) == -1.0);
    CHECK(controller_reward(-0.25, 0.9, kDefaults) == -1.0);
    CHECK(controller_reward(1.0, 1.0, kDefaults) == doctest::Approx(1.0));
    CHECK(controller_reward(0.5, 0.0, kDefaults) == doctest::Approx(0.05));

    // monotone nondecreasing in both arguments on the non-failure branch
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const double f = rng.uniform(0.0, 1.0);
        const double d = rng.uniform(0.0, 1.0);
        const double bump = rng.uniform(0.0, 0.3);
        CHECK(controller_reward(f, d + bump > 1 ? 1.0 : d + bump, kDefaults) >=
              controller_reward(f, d, kDefaults));
        CHECK(controller_reward(f + bump > 1 ? 1.0 : f + bump, d, kDefaults) >=
              controller_reward(f, d, kDefaults));
        const double r = controller_reward(f, d, kDefaults);
        CHECK(r >= -1.0);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("reasoner reward applies the literal linear form") {
    CHECK(reasoner_reward(1, 1.0, kDefaults) == doctest::Approx(1.0));
    CHECK(reasoner_reward(0, 1.0, kDefaults) == doctest::Approx(0.1));
    // a hard format failure does not zero out a correct answer
    CHECK(reasoner_reward(1, -1.0, kDefaults) == doctest::Approx(0.8));
    // range under normalized default weights
    CHECK(reasoner_reward(0, -1.0, kDefaults) == doctest::Approx(-0.1));
}

TEST_CASE("population variance convention") {
    CHECK(population_variance(std::vector<int>{1, 1, 0, 0, 0, 0}) == doctest::Approx(2.0 / 9.0));
    CHECK(population_variance(std::vector<int>{1, 1, 1}) == 0.0);
    CHECK(population_variance_real(std::vector<double>{1.0, 0.0}) == doctest::Approx(0.25));
}

TEST_CASE("weights validate nonnegativity") {
    RewardWeights bad;
    bad.reliability = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_NOTHROW(kDefaults.validate());
}
