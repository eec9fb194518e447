#include "tbdf/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace tbdf {

NodeEstimate make_estimate(NodeId node_id, std::span<const OrdinalScore> scores, int levels, bool exhaustive) {
    if (levels < 2) throw ConfigError("ordinal scale needs at least 2 levels");
    NodeEstimate est;
    est.node_id = node_id;
    est.exhaustive = exhaustive;
    est.level_counts.assign(static_cast<std::size_t>(levels), 0);
    // Purely ordinal scores use the integer level sum, so the mean is one
    // rounding of an exact ratio and independent of summation order.
    std::int64_t level_sum = 0;
    double value_sum = 0.0;
    bool ordinal = true;
    for (const auto& s : scores) {
        if (s.failed()) {
            ++est.failures;
            continue;
        }
        const int level = std::clamp(s.level, 0, levels - 1);
        ++est.level_counts[static_cast<std::size_t>(level)];
        level_sum += level;
        value_sum += s.normalized;
        if (s.normalized != static_cast<double>(level) / static_cast<double>(levels - 1)) ordinal = false;
    }
    est.n_samples = static_cast<std::int64_t>(scores.size());
    if (est.n_samples > 0) {
        const auto n = static_cast<double>(est.n_samples);
        est.mean = ordinal ? static_cast<double>(level_sum) / (static_cast<double>(levels - 1) * n) : value_sum / n;
    }
    return est;
}

void IntervalConfig::validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (!(credible_mass > 0.0 && credible_mass < 1.0)) throw ConfigError("credible_mass must lie in (0,1)");
    if (posterior_samples < 1) throw ConfigError("posterior_samples must be positive");
    for (double a : prior) {
        if (!(a > 0.0)) throw ConfigError("prior entries must be positive");
    }
}

double hoeffding_halfwidth(std::int64_t n, double delta_prime) {
    if (n < 1) throw Error("hoeffding_halfwidth: n must be >= 1");
    if (!(delta_prime > 0.0 && delta_prime < 1.0)) throw Error("hoeffding_halfwidth: delta' must lie in (0,1)");
    return std::sqrt(std::log(2.0 / delta_prime) / (2.0 * static_cast<double>(n)));
}

double delta_schedule(std::int64_t i, double delta) {
    if (i < 1) throw Error("delta_schedule: i must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw Error("delta_schedule: delta must lie in (0,1)");
    const double ii = static_cast<double>(i);
    return 6.0 * delta / (ii * ii * std::numbers::pi * std::numbers::pi);
}

double final_bound_width(std::int64_t k, double delta, std::int64_t n_max) {
    if (k < 1 || n_max < 1) throw Error("final_bound_width: K and n_max must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw Error("final_bound_width: delta must lie in (0,1)");
    const double arg = 1.3 * static_cast<double>(k) / delta;
    if (!(arg > 1.0)) throw Error("final_bound_width: 1.3K/delta must exceed 1");
    return std::sqrt(std::log(arg) / static_cast<double>(n_max));
}

std::pair<double, double> credible_interval(const NodeEstimate& est, const IntervalConfig& cfg) {
    cfg.validate();
    const int levels = est.levels();
    if (levels < 2) throw Error("credible_interval: estimate has fewer than 2 levels");
    std::vector<double> alpha = cfg.prior.empty() ? std::vector<double>(static_cast<std::size_t>(levels), 1.0)
                                                  : cfg.prior;
    if (static_cast<int>(alpha.size()) != levels) throw ConfigError("prior length must equal the number of levels");
    for (int j = 0; j < levels; ++j) alpha[static_cast<std::size_t>(j)] += static_cast<double>(est.level_counts[static_cast<std::size_t>(j)]);
    alpha[0] += static_cast<double>(est.failures);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::gamma_distribution<double>> gammas;
    gammas.reserve(alpha.size());
    for (double a : alpha) gammas.emplace_back(a, 1.0);

    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(cfg.posterior_samples));
    const double scale = 1.0 / static_cast<double>(levels - 1);
    for (int s = 0; s < cfg.posterior_samples; ++s) {
        double total = 0.0, weighted = 0.0;
        for (int j = 0; j < levels; ++j) {
            const double g = gammas[static_cast<std::size_t>(j)](rng);
            total += g;
            weighted += g * j * scale;
        }
        means.push_back(total > 0.0 ? weighted / total : 0.0);
    }
    std::sort(means.begin(), means.end());

    // Order statistics at ranks rounded outward from (S+1)p, so the interval
    // holds at least `credible_mass` of the posterior in expectation.
    const double tail = (1.0 - cfg.credible_mass) / 2.0;
    const auto count = static_cast<double>(means.size());
    auto lo_rank = static_cast<std::int64_t>(std::floor((count + 1.0) * tail));
    auto hi_rank = static_cast<std::int64_t>(std::ceil((count + 1.0) * (1.0 - tail)));
    lo_rank = std::clamp<std::int64_t>(lo_rank, 1, static_cast<std::int64_t>(means.size()));
    hi_rank = std::clamp<std::int64_t>(hi_rank, 1, static_cast<std::int64_t>(means.size()));
    return {means[static_cast<std::size_t>(lo_rank - 1)], means[static_cast<std::size_t>(hi_rank - 1)]};
}

double feedback_entropy(std::span<const std::int64_t> level_counts) {
    std::int64_t total = 0;
    for (auto c : level_counts) {
        if (c < 0) throw Error("feedback_entropy: negative count");
        total += c;
    }
    if (total == 0) throw Error("feedback_entropy: no observations");
    double h = 0.0;
    for (auto c : level_counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finaliser over a combined word
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace tbdf
