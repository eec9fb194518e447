#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "tbdf/synthbench.hpp"

using namespace tbdf;
using namespace tbdf::synth;

namespace {

double subtree_mean(const PlantedTree& p, NodeId id) {
    double s = 0;
    const auto leaves = p.tree.leaves_under(id);
    for (const auto& c : leaves) s += p.labels.at(c);
    return s / static_cast<double>(leaves.size());
}

}  // namespace

TEST_CASE("plant_tree shape") {
    PlantedSpec spec;
    spec.depth = 3;
    spec.k_prime = 4;
    const auto p = plant_tree(spec);
    CHECK(p.tree.size() == 15);
    CHECK(p.tree.corpus_size() == 8);
    CHECK(p.cut.size() == 4);
    CHECK(validate_cut(p.tree, Cut{p.cut}));
    check_structure(p.tree);

    spec.k_prime = 9;
    CHECK_THROWS_WITH(plant_tree(spec), doctest::Contains("k_prime unreachable"));
    spec.branching = 3;
    spec.k_prime = 4;
    CHECK_THROWS_WITH(plant_tree(spec), doctest::Contains("k_prime unreachable"));
    spec.k_prime = 5;
    CHECK(plant_tree(spec).cut.size() == 5);
}

TEST_CASE("pure planted subtrees") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        PlantedSpec spec;
        spec.depth = 8;
        spec.k_prime = 6;
        spec.seed = seed;
        const auto p = plant_tree(spec);
        REQUIRE(validate_cut(p.tree, Cut{p.cut}));
        for (std::size_t i = 0; i < p.cut.size(); ++i) CHECK(subtree_mean(p, p.cut[i]) == (p.good[i] ? 1.0 : 0.0));
    }
}

TEST_CASE("planted means concentrate") {
    PlantedSpec spec;
    spec.depth = 13;
    spec.k_prime = 8;
    spec.alpha_prime = 0.1;
    spec.beta_prime = 0.1;
    for (auto kind : {LabelKind::binary, LabelKind::unit_interval}) {
        spec.label_kind = kind;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            spec.seed = seed;
            const auto p = plant_tree(spec);
            for (std::size_t i = 0; i < p.cut.size(); ++i) {
                const auto m = static_cast<double>(p.tree.node(p.cut[i]).leaf_count);
                const double target = p.good[i] ? 0.9 : 0.1;
                CHECK(std::abs(subtree_mean(p, p.cut[i]) - target) <= 4 * std::sqrt(0.09 / m));
                if (m >= 1024) CHECK(std::abs(subtree_mean(p, p.cut[i]) - target) <= 0.03);
            }
        }
    }
}

TEST_CASE("unit-interval labels stay in range with the planted mean") {
    PlantedSpec spec;
    spec.depth = 14;
    spec.k_prime = 2;
    spec.alpha_prime = 0.3;
    spec.beta_prime = 0.2;
    spec.label_kind = LabelKind::unit_interval;
    const auto p = plant_tree(spec);
    for (const auto& [_, v] : p.labels) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(subtree_mean(p, p.cut[i]) == doctest::Approx(p.good[i] ? 0.8 : 0.3).epsilon(0.03));
    }
}

TEST_CASE("run_trial") {
    PlantedSpec spec;
    spec.depth = 8;
    spec.k_prime = 5;
    spec.seed = 12;
    FilterConfig cfg;
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    cfg.n_max = 1024;
    SUBCASE("exhaustive with thresholds at the planted levels") {
        const auto r = run_trial(spec, cfg);
        CHECK(r.prop1_ok);
        CHECK(r.prop2_ok);
        CHECK(r.realized_K <= spec.k_prime);
        CHECK(r.complexity_ok);
        CHECK(r.evaluations_ok);
        CHECK(r.total_calls == 256);
    }
    SUBCASE("margins") {
        spec.alpha_prime = 0.05;
        spec.beta_prime = 0.05;
        cfg.n_max = 100;
        const double w = final_bound_width(spec.k_prime, cfg.delta, cfg.n_max);
        cfg.alpha = spec.alpha_prime + w;
        cfg.beta = spec.beta_prime + w;
        CHECK(prop2_margins_hold(spec, cfg));
        cfg.beta = std::nextafter(cfg.beta, 0.0);
        CHECK_FALSE(prop2_margins_hold(spec, cfg));
        const auto r = run_trial(spec, cfg);
        CHECK_FALSE(r.prop2_applicable);
        CHECK(r.prop2_ok);
    }
}

TEST_CASE("binomial helpers") {
    CHECK(binomial_cdf(0, 3, 0.5) == doctest::Approx(0.125));
    CHECK(binomial_cdf(2, 3, 0.5) == doctest::Approx(0.875));
    CHECK(binomial_cdf(3, 3, 0.5) == 1.0);
    CHECK(binomial_cdf(-1, 3, 0.5) == 0.0);
    CHECK(rate_test_passes(190, 200, 0.95));
    CHECK(rate_test_passes(184, 200, 0.95));
    CHECK_FALSE(rate_test_passes(170, 200, 0.95));
}

TEST_CASE("sweep") {
    PlantedSpec spec;
    spec.depth = 9;
    spec.k_prime = 4;
    FilterConfig cfg;
    cfg.alpha = 0.1;
    cfg.beta = 0.1;

    const auto one = sweep({spec}, {cfg}, 1, 3);
    REQUIRE(one.size() == 1);
    CHECK(one[0].trials == 1);

    auto csv = [&](unsigned threads) {
        std::ostringstream out;
        write_csv(out, sweep({spec}, {cfg, FilterConfig::from_json({{"alpha", 0.2}, {"beta", 0.2}})}, 20, 9, threads));
        return out.str();
    };
    const auto a = csv(1);
    CHECK(a == csv(4));
    CHECK(std::count(a.begin(), a.end(), '\n') == 3);

    CHECK_THROWS_AS(sweep({}, {cfg}, 1, 0), ConfigError);
    CHECK_THROWS_AS(sweep({spec}, {cfg}, 0, 0), ConfigError);
}

TEST_CASE("spec json") {
    PlantedSpec s;
    s.alpha_prime = 0.1;
    s.label_kind = LabelKind::unit_interval;
    CHECK(PlantedSpec::from_json(s.to_json()).to_json() == s.to_json());
    CHECK_THROWS_AS(PlantedSpec::from_json({{"alpha_prime", 0.6}, {"beta_prime", 0.5}}), ConfigError);
    CHECK_THROWS_AS(PlantedSpec::from_json({{"branching", 1}}), ConfigError);
}
