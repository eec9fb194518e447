#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "tbdf/estimator.hpp"

using namespace tbdf;

namespace {

NodeEstimate counts_estimate(std::vector<std::int64_t> counts) {
    std::vector<OrdinalScore> scores;
    const int L = static_cast<int>(counts.size());
    for (int j = 0; j < L; ++j) {
        for (std::int64_t k = 0; k < counts[static_cast<std::size_t>(j)]; ++k) {
            scores.push_back(OrdinalScore::from_level(j, L));
        }
    }
    return make_estimate(0, scores, L, false);
}

}  // namespace

TEST_CASE("closed forms agree with the high-precision oracle") {
    const auto ref = tbdf::testing::reference_values();
    CHECK(hoeffding_halfwidth(100, 0.05) == doctest::Approx(ref["hoeffding_100_0.05"].get<double>()).epsilon(1e-13));
    CHECK(delta_schedule(1, 0.05) == doctest::Approx(ref["delta_schedule_1_0.05"].get<double>()).epsilon(1e-13));
    CHECK(final_bound_width(4, 0.05, 100) ==
          doctest::Approx(ref["final_bound_width_4_0.05_100"].get<double>()).epsilon(1e-13));
    CHECK(hoeffding_halfwidth(100, delta_schedule(8, 0.05)) ==
          doctest::Approx(ref["hoeffding_100_schedule_8_0.05"].get<double>()).epsilon(1e-13));
    // The published rounding of the first and last constants.
    CHECK(std::abs(delta_schedule(1, 0.05) - 0.0303964) < 1e-6);
    CHECK(std::abs(final_bound_width(4, 0.05, 100) - 0.215509) < 1e-5);
}

TEST_CASE("hoeffding_halfwidth") {
    CHECK(hoeffding_halfwidth(400, 0.05) / hoeffding_halfwidth(100, 0.05) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK_THROWS(hoeffding_halfwidth(100, 2.0));
    CHECK_THROWS(hoeffding_halfwidth(100, 0.0));
    CHECK_THROWS(hoeffding_halfwidth(0, 0.1));
}

TEST_CASE("delta_schedule") {
    CHECK(delta_schedule(2, 0.05) == doctest::Approx(delta_schedule(1, 0.05) / 4).epsilon(1e-15));
    for (double delta : {0.5, 0.05, 0.001}) {
        double partial = 0.0;
        for (std::int64_t i = 1; i <= 1'000'000; ++i) {
            partial += delta_schedule(i, delta);
            if (i % 100000 == 0 || i < 10) REQUIRE(partial <= delta);
        }
        CHECK(partial < delta);
        CHECK(partial > delta * (1 - 1e-5));
    }
    CHECK_THROWS(delta_schedule(0, 0.05));
}

TEST_CASE("final_bound_width") {
    const double w = final_bound_width(4, 0.05, 100);
    CHECK(hoeffding_halfwidth(100, delta_schedule(8, 0.05)) < w);
    CHECK(final_bound_width(4, 0.05, 400) < w);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 2000; ++t) {
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng() % 5000);
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng() % 100000);
        const double delta = std::uniform_real_distribution<double>(1e-6, 0.1)(rng);  // the dominance needs delta < ~0.128
        if (1.3 * static_cast<double>(k) / delta <= 1.0) continue;
        CHECK(hoeffding_halfwidth(n, delta_schedule(2 * k, delta)) < final_bound_width(k, delta, n));
    }
    CHECK_THROWS(final_bound_width(0, 0.5, 10));
    CHECK_THROWS(final_bound_width(1, 0.05, 0));
}

TEST_CASE("Hoeffding coverage on Bernoulli data") {
    std::mt19937_64 rng(2024);
    for (std::int64_t n : {20, 100}) {
        for (double dp : {0.1, 0.01}) {
            for (double mu : {0.1, 0.5, 0.9}) {
                const double w = hoeffding_halfwidth(n, dp);
                std::binomial_distribution<std::int64_t> draw(n, mu);
                const int trials = 10000;
                int covered = 0;
                for (int t = 0; t < trials; ++t) {
                    const double est = static_cast<double>(draw(rng)) / static_cast<double>(n);
                    covered += std::abs(est - mu) <= w;
                }
                CHECK(static_cast<double>(covered) / trials >= 1.0 - dp);
            }
        }
    }
}

TEST_CASE("make_estimate") {
    std::vector<OrdinalScore> s{OrdinalScore::from_level(5, 6), OrdinalScore::from_level(0, 6),
                                OrdinalScore::failure(), OrdinalScore::from_level(2, 6)};
    const auto e = make_estimate(7, s, 6, false);
    CHECK(e.n_samples == 4);
    CHECK(e.failures == 1);
    CHECK(e.level_counts == std::vector<std::int64_t>{1, 0, 1, 0, 0, 1});
    CHECK(e.mean == doctest::Approx((1.0 + 0.4) / 4));
    // Real-valued labels keep their exact values in the mean.
    std::vector<OrdinalScore> r{OrdinalScore::from_value(0.93, 6), OrdinalScore::from_value(0.11, 6)};
    CHECK(make_estimate(0, r, 6, true).mean == doctest::Approx(0.52));
}

TEST_CASE("credible_interval") {
    IntervalConfig cfg;
    cfg.seed = 99;
    const auto ref = tbdf::testing::reference_values();

    SUBCASE("uniform prior with no data centers near one half") {
        const auto [lo, hi] = credible_interval(counts_estimate({0, 0, 0, 0, 0, 0}), cfg);
        CHECK(lo < 0.5);
        CHECK(hi > 0.5);
        CHECK((lo + hi) / 2 == doctest::Approx(ref["posterior_mean_mc_0_0_0_0_0_0"].get<double>()).epsilon(0.1));
    }
    SUBCASE("concentrates at one with many top-level counts") {
        const auto [lo, hi] = credible_interval(counts_estimate({0, 0, 0, 0, 0, 5000}), cfg);
        CHECK(lo > 0.995);
        CHECK(hi <= 1.0);
    }
    SUBCASE("contains the posterior mean and narrows with data") {
        const double mean = ref["posterior_mean_mc_10_0_0_0_0_10"].get<double>();
        CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
        const auto [lo, hi] = credible_interval(counts_estimate({10, 0, 0, 0, 0, 10}), cfg);
        const auto [lo2, hi2] = credible_interval(counts_estimate({1, 0, 0, 0, 0, 1}), cfg);
        CHECK(lo <= mean);
        CHECK(mean <= hi);
        CHECK(hi - lo < hi2 - lo2);
    }
    SUBCASE("deterministic per seed") {
        const auto e = counts_estimate({3, 1, 4, 1, 5, 9});
        CHECK(credible_interval(e, cfg) == credible_interval(e, cfg));
        IntervalConfig other = cfg;
        other.seed = 100;
        CHECK(credible_interval(e, cfg) != credible_interval(e, other));
    }
    SUBCASE("failures count as level zero") {
        std::vector<OrdinalScore> s(10, OrdinalScore::failure());
        const auto with_failures = make_estimate(0, s, 6, false);
        CHECK(credible_interval(with_failures, cfg) == credible_interval(counts_estimate({10, 0, 0, 0, 0, 0}), cfg));
    }
    SUBCASE("analytic posterior mean lies inside for most seeds") {
        const std::vector<std::int64_t> counts{4, 2, 7, 1, 0, 6};
        const auto e = counts_estimate(counts);
        double analytic = 0;
        for (int j = 0; j < 6; ++j) analytic += (1.0 + static_cast<double>(counts[j])) / (20.0 + 6.0) * j / 5.0;
        int inside = 0;
        const int seeds = 2000;
        for (int s = 0; s < seeds; ++s) {
            IntervalConfig c = cfg;
            c.seed = static_cast<std::uint64_t>(s);
            const auto [lo, hi] = credible_interval(e, c);
            inside += lo <= analytic && analytic <= hi;
        }
        CHECK(static_cast<double>(inside) / seeds >= 0.99);
    }
    SUBCASE("validation") {
        IntervalConfig bad = cfg;
        bad.prior = {1, 1, 0, 1, 1, 1};
        CHECK_THROWS_AS(credible_interval(counts_estimate({1, 1, 1, 1, 1, 1}), bad), ConfigError);
        bad.prior = {1, 1};
        CHECK_THROWS_AS(credible_interval(counts_estimate({1, 1, 1, 1, 1, 1}), bad), ConfigError);
        bad = cfg;
        bad.credible_mass = 1.0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("feedback_entropy") {
    const auto ref = tbdf::testing::reference_values();
    const std::vector<std::int64_t> uniform{3, 3, 3, 3, 3, 3}, point{0, 0, 7, 0, 0, 0}, coin{50, 50, 0, 0, 0, 0};
    CHECK(feedback_entropy(uniform) == doctest::Approx(ref["log2_6"].get<double>()).epsilon(1e-14));
    CHECK(feedback_entropy(point) == 0.0);
    CHECK(feedback_entropy(coin) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS(feedback_entropy(std::vector<std::int64_t>{0, 0, 0}));

    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::int64_t> c(6);
        for (auto& x : c) x = static_cast<std::int64_t>(rng() % 20);
        if (std::all_of(c.begin(), c.end(), [](auto x) { return x == 0; })) continue;
        const double h = feedback_entropy(c);
        auto p = c;
        std::shuffle(p.begin(), p.end(), rng);
        CHECK(feedback_entropy(p) == doctest::Approx(h).epsilon(1e-12));
        CHECK(h <= feedback_entropy(uniform) + 1e-12);
    }
}

TEST_CASE("mix_seed spreads nearby inputs") {
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(0, 0) != mix_seed(0, 1));
    CHECK(mix_seed(5, 6) == mix_seed(5, 6));
}
