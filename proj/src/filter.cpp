#include "tbdf/filter.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <random>
#include <unordered_set>

#include "tbdf/log.hpp"

namespace tbdf {

using nlohmann::json;

const char* to_string(DecisionMode m) {
    switch (m) {
        case DecisionMode::point: return "point";
        case DecisionMode::hoeffding: return "hoeffding";
        case DecisionMode::credible: return "credible";
    }
    return "?";
}

const char* to_string(LeafPolicy p) { return p == LeafPolicy::midpoint ? "midpoint" : "discard"; }

const char* to_string(Decision d) {
    switch (d) {
        case Decision::keep: return "keep";
        case Decision::discard: return "discard";
        case Decision::split: return "split";
    }
    return "?";
}

DecisionMode parse_mode(const std::string& s) {
    if (s == "point") return DecisionMode::point;
    if (s == "hoeffding") return DecisionMode::hoeffding;
    if (s == "credible") return DecisionMode::credible;
    throw ConfigError("unknown decision mode: " + s);
}

LeafPolicy parse_leaf_policy(const std::string& s) {
    if (s == "midpoint") return LeafPolicy::midpoint;
    if (s == "discard") return LeafPolicy::discard;
    throw ConfigError("unknown leaf policy: " + s);
}

void FilterConfig::validate() const {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0,1)");
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must lie in [0,1)");
    if (!(alpha < 1.0 - beta)) throw ConfigError("alpha must be below 1 - beta");
    if (n_max < 1) throw ConfigError("n_max must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (mode == DecisionMode::credible) interval.validate();
}

json FilterConfig::to_json() const {
    return {{"alpha", alpha},
            {"beta", beta},
            {"n_max", n_max},
            {"delta", delta},
            {"mode", to_string(mode)},
            {"leaf_policy", to_string(leaf_policy)},
            {"credible_mass", interval.credible_mass},
            {"posterior_samples", interval.posterior_samples},
            {"prior", interval.prior},
            {"seed", seed}};
}

FilterConfig FilterConfig::from_json(const json& j) {
    FilterConfig c;
    try {
        c.alpha = j.value("alpha", c.alpha);
        c.beta = j.value("beta", c.beta);
        c.n_max = j.value("n_max", c.n_max);
        c.delta = j.value("delta", c.delta);
        c.mode = parse_mode(j.value("mode", std::string("point")));
        c.leaf_policy = parse_leaf_policy(j.value("leaf_policy", std::string("midpoint")));
        c.interval.credible_mass = j.value("credible_mass", c.interval.credible_mass);
        c.interval.posterior_samples = j.value("posterior_samples", c.interval.posterior_samples);
        if (j.contains("prior")) c.interval.prior = j["prior"].get<std::vector<double>>();
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("filter config: ") + e.what());
    }
    c.interval.delta = c.delta;
    c.validate();
    return c;
}

namespace {

// Floyd's algorithm: k distinct indices from [0, n), returned sorted.
std::vector<std::size_t> choose_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(k * 2);
    for (std::size_t j = n - k; j < n; ++j) {
        std::uniform_int_distribution<std::size_t> pick(0, j);
        const std::size_t t = pick(rng);
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::vector<std::size_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t sampling_seed(std::uint64_t seed, NodeId node) { return mix_seed(seed, 2 * static_cast<std::uint64_t>(node)); }
std::uint64_t posterior_seed(std::uint64_t seed, NodeId node) {
    return mix_seed(seed, 2 * static_cast<std::uint64_t>(node) + 1);
}

Decision point_rule(double mean, const FilterConfig& cfg) {
    if (mean >= 1.0 - cfg.beta) return Decision::keep;
    if (mean <= cfg.alpha) return Decision::discard;
    return Decision::split;
}

}  // namespace

LeafSample sample_leaves(const ClusterTree& tree, NodeId node, std::int64_t n_max, std::uint64_t seed) {
    if (n_max < 1) throw Error("sample_leaves: n_max must be positive");
    auto leaves = tree.leaves_under(node);
    if (static_cast<std::int64_t>(leaves.size()) <= n_max) return {std::move(leaves), true};

    std::mt19937_64 rng(sampling_seed(seed, node));
    LeafSample out;
    for (std::size_t i : choose_indices(leaves.size(), static_cast<std::size_t>(n_max), rng)) {
        out.chunk_ids.push_back(std::move(leaves[i]));
    }
    return out;
}

Decision decide(const NodeEstimate& est, const FilterConfig& cfg, std::int64_t eval_index) {
    if (est.exhaustive) return point_rule(est.mean, cfg);
    switch (cfg.mode) {
        case DecisionMode::point:
            return point_rule(est.mean, cfg);
        case DecisionMode::hoeffding: {
            if (est.n_samples < 1) return Decision::split;
            const double w = hoeffding_halfwidth(est.n_samples, delta_schedule(eval_index, cfg.delta));
            if (est.mean - w >= 1.0 - cfg.beta) return Decision::keep;
            if (est.mean + w <= cfg.alpha) return Decision::discard;
            return Decision::split;
        }
        case DecisionMode::credible: {
            IntervalConfig ic = cfg.interval;
            ic.delta = cfg.delta;
            ic.seed = posterior_seed(cfg.seed, est.node_id);
            const auto [lo, hi] = credible_interval(est, ic);
            if (lo >= 1.0 - cfg.beta) return Decision::keep;
            if (hi <= cfg.alpha) return Decision::discard;
            return Decision::split;
        }
    }
    return Decision::split;
}

Cut FilterOutcome::as_cut() const {
    Cut c;
    for (const auto& e : cut) c.node_ids.push_back(e.node_id);
    return c;
}

FilterOutcome run_filter(const ClusterTree& tree, OracleSession& oracle, const FilterConfig& cfg) {
    cfg.validate();
    FilterOutcome out;
    std::deque<NodeId> active{tree.root_id};
    std::int64_t eval_index = 0;

    while (!active.empty()) {
        const NodeId id = active.front();
        active.pop_front();
        const Node& node = tree.node(id);
        ++eval_index;
        out.evaluation_order.push_back(id);

        const auto sample = sample_leaves(tree, id, cfg.n_max, cfg.seed);
        const auto items = oracle.evaluate_batch(sample.chunk_ids, id);
        std::vector<OrdinalScore> scores;
        scores.reserve(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i].error) {
                throw FilterAborted("oracle failure at node " + std::to_string(id) + ": " + *items[i].error,
                                    oracle.ledger());
            }
            scores.push_back(items[i].score);
        }
        auto est = make_estimate(id, scores, oracle.levels(), sample.exhaustive);
        Decision d = decide(est, cfg, eval_index);

        if (d == Decision::split && node.is_leaf()) {
            const double mid = (cfg.alpha + 1.0 - cfg.beta) / 2.0;
            d = cfg.leaf_policy == LeafPolicy::midpoint && est.mean >= mid ? Decision::keep : Decision::discard;
        }
        log::debug("node_decision", {{"node_id", id},
                                     {"eval_index", eval_index},
                                     {"n_samples", est.n_samples},
                                     {"mean", est.mean},
                                     {"exhaustive", est.exhaustive},
                                     {"decision", to_string(d)}});

        if (d == Decision::split) {
            std::vector<NodeId> children = node.child_ids;
            std::sort(children.begin(), children.end());
            active.insert(active.end(), children.begin(), children.end());
            continue;
        }
        auto& target = d == Decision::keep ? out.keep_chunks : out.discard_chunks;
        for (auto& c : tree.leaves_under(id)) {
            out.chunk_scores[c] = est.mean;
            out.chunk_node[c] = id;
            target.insert(std::move(c));
        }
        out.cut.push_back({id, d, std::move(est)});
    }
    out.K = static_cast<std::int64_t>(out.cut.size());
    out.ledger = oracle.ledger();
    return out;
}

DocumentScores aggregate_documents(const FilterOutcome& outcome, const std::vector<Document>& documents) {
    DocumentScores out;
    for (const auto& doc : documents) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& c : doc.chunk_ids) {
            auto it = outcome.chunk_scores.find(c);
            if (it == outcome.chunk_scores.end()) continue;
            sum += it->second;
            ++n;
        }
        if (n == 0) {
            out.skipped.push_back(doc.doc_id);
        } else {
            out.scores[doc.doc_id] = sum / static_cast<double>(n);
        }
    }
    return out;
}

std::vector<std::string> select_top_k(const std::map<std::string, double>& doc_scores,
                                      const std::map<std::string, std::int64_t>& token_counts,
                                      std::int64_t token_budget) {
    if (token_budget <= 0) throw ConfigError("token budget must be positive");
    std::vector<std::pair<std::string, double>> ranked(doc_scores.begin(), doc_scores.end());
    // Map order is ascending doc id, so a stable sort on score keeps ties in id order.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> out;
    std::int64_t used = 0;
    for (const auto& [doc, _] : ranked) {
        auto it = token_counts.find(doc);
        if (it == token_counts.end()) throw Error("no token count for document " + doc);
        if (used + it->second > token_budget) break;
        used += it->second;
        out.push_back(doc);
    }
    return out;
}

double LevelEntropy::mean() const {
    if (entropies.empty()) return 0.0;
    return std::accumulate(entropies.begin(), entropies.end(), 0.0) / static_cast<double>(entropies.size());
}

std::vector<LevelEntropy> entropy_probe(const ClusterTree& tree, OracleSession& oracle,
                                        std::int64_t per_level_clusters, std::int64_t per_cluster_samples,
                                        std::uint64_t seed) {
    if (per_level_clusters < 1 || per_cluster_samples < 1) throw ConfigError("probe sizes must be positive");
    std::vector<LevelEntropy> out;
    const auto levels = tree.levels();
    for (std::size_t depth = 0; depth < levels.size(); ++depth) {
        const auto& ids = levels[depth];
        LevelEntropy le;
        le.depth = static_cast<std::int64_t>(depth);
        std::mt19937_64 rng(mix_seed(seed, depth));
        const auto take = std::min<std::size_t>(ids.size(), static_cast<std::size_t>(per_level_clusters));
        for (std::size_t idx : choose_indices(ids.size(), take, rng)) {
            const NodeId id = ids[idx];
            const auto sample = sample_leaves(tree, id, per_cluster_samples, seed);
            const auto items = oracle.evaluate_batch(sample.chunk_ids, id);
            std::vector<OrdinalScore> scores;
            for (const auto& it : items) {
                if (it.error) throw Error("entropy probe: " + *it.error);
                scores.push_back(it.score);
            }
            auto est = make_estimate(id, scores, oracle.levels(), sample.exhaustive);
            est.level_counts[0] += est.failures;
            le.nodes.push_back(id);
            le.entropies.push_back(feedback_entropy(est.level_counts));
            le.sample_sizes.push_back(est.n_samples);
        }
        out.push_back(std::move(le));
    }
    return out;
}

}  // namespace tbdf
