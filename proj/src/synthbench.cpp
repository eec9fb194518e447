#include "tbdf/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>

#include "parallel.hpp"
#include "tbdf/estimator.hpp"

namespace tbdf::synth {

using nlohmann::json;

namespace {

constexpr std::int64_t kMaxNodes = std::int64_t{1} << 24;

const char* kind_name(LabelKind k) { return k == LabelKind::binary ? "binary" : "unit_interval"; }

LabelKind parse_kind(const std::string& s) {
    if (s == "binary") return LabelKind::binary;
    if (s == "unit_interval") return LabelKind::unit_interval;
    throw ConfigError("unknown label kind: " + s);
}

}  // namespace

void PlantedSpec::validate() const {
    if (branching < 2) throw ConfigError("branching must be >= 2");
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (k_prime < 1) throw ConfigError("k_prime must be >= 1");
    if (alpha_prime < 0.0 || beta_prime < 0.0 || !(alpha_prime + beta_prime < 1.0)) {
        throw ConfigError("need alpha', beta' >= 0 and alpha' + beta' < 1");
    }
    if (!(good_fraction > 0.0 && good_fraction < 1.0)) throw ConfigError("good_fraction must lie in (0,1)");
}

json PlantedSpec::to_json() const {
    return {{"branching", branching},     {"depth", depth},           {"k_prime", k_prime},
            {"alpha_prime", alpha_prime}, {"beta_prime", beta_prime}, {"good_fraction", good_fraction},
            {"label_kind", kind_name(label_kind)}, {"seed", seed}};
}

PlantedSpec PlantedSpec::from_json(const json& j) {
    PlantedSpec s;
    try {
        s.branching = j.value("branching", s.branching);
        s.depth = j.value("depth", s.depth);
        s.k_prime = j.value("k_prime", s.k_prime);
        s.alpha_prime = j.value("alpha_prime", s.alpha_prime);
        s.beta_prime = j.value("beta_prime", s.beta_prime);
        s.good_fraction = j.value("good_fraction", s.good_fraction);
        s.label_kind = parse_kind(j.value("label_kind", std::string("binary")));
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("planted spec: ") + e.what());
    }
    s.validate();
    return s;
}

PlantedTree plant_tree(const PlantedSpec& spec) {
    spec.validate();
    const std::int64_t b = spec.branching;
    std::int64_t leaves = 1;
    std::int64_t total = 1;
    for (int d = 0; d < spec.depth; ++d) {
        leaves *= b;
        total += leaves;
        if (total > kMaxNodes) throw ConfigError("planted tree too large");
    }
    if (spec.k_prime > leaves || (spec.k_prime - 1) % (b - 1) != 0) {
        throw Error("k_prime unreachable at this depth and branching");
    }

    PlantedTree out;
    auto& nodes = out.tree.nodes;
    nodes.resize(static_cast<std::size_t>(total));
    const std::int64_t first_leaf = total - leaves;
    for (std::int64_t i = 0; i < total; ++i) {
        Node& n = nodes[static_cast<std::size_t>(i)];
        n.node_id = i;
        n.parent_id = i == 0 ? kNoParent : (i - 1) / b;
        n.depth = i == 0 ? 0 : nodes[static_cast<std::size_t>(n.parent_id)].depth + 1;
        if (i >= first_leaf) {
            n.leaf_chunk_ids = {"c" + std::to_string(i - first_leaf)};
        } else {
            for (std::int64_t c = 1; c <= b; ++c) n.child_ids.push_back(b * i + c);
        }
    }
    for (std::int64_t i = total - 1; i >= 0; --i) {
        Node& n = nodes[static_cast<std::size_t>(i)];
        n.leaf_count = n.is_leaf() ? 1 : 0;
        for (NodeId c : n.child_ids) n.leaf_count += nodes[static_cast<std::size_t>(c)].leaf_count;
    }
    out.tree.root_id = 0;

    std::mt19937_64 rng(mix_seed(spec.seed, 0x706c616e74ULL));
    std::vector<NodeId> cut{0};
    while (static_cast<std::int64_t>(cut.size()) < spec.k_prime) {
        std::vector<std::size_t> expandable;
        for (std::size_t i = 0; i < cut.size(); ++i) {
            if (!out.tree.node(cut[i]).is_leaf()) expandable.push_back(i);
        }
        std::uniform_int_distribution<std::size_t> pick(0, expandable.size() - 1);
        const std::size_t at = expandable[pick(rng)];
        const NodeId expanded = cut[at];
        cut.erase(cut.begin() + static_cast<std::ptrdiff_t>(at));
        for (NodeId c : out.tree.node(expanded).child_ids) cut.push_back(c);
    }
    std::sort(cut.begin(), cut.end());
    out.cut = cut;

    std::bernoulli_distribution is_good(spec.good_fraction);
    std::uniform_real_distribution<double> unit(0.0, 2.0);
    for (NodeId c : cut) {
        const bool good = is_good(rng);
        out.good.push_back(good);
        const double rate = good ? 1.0 - spec.beta_prime : spec.alpha_prime;
        std::bernoulli_distribution coin(rate);
        for (const auto& leaf : out.tree.leaves_under(c)) {
            double label = 0.0;
            if (spec.label_kind == LabelKind::binary) {
                label = coin(rng) ? 1.0 : 0.0;
            } else {
                const double u = unit(rng);
                label = good ? std::clamp(1.0 - spec.beta_prime * u, 0.0, 1.0)
                             : std::clamp(spec.alpha_prime * u, 0.0, 1.0);
            }
            out.labels.emplace(leaf, label);
        }
    }
    return out;
}

bool prop2_margins_hold(const PlantedSpec& spec, const FilterConfig& cfg) {
    const double w = final_bound_width(spec.k_prime, cfg.delta, cfg.n_max);
    return cfg.alpha >= spec.alpha_prime + w && cfg.beta >= spec.beta_prime + w;
}

RunReport run_trial(const PlantedSpec& spec, const FilterConfig& cfg) {
    const auto planted = plant_tree(spec);
    GroundTruthOracle oracle(planted.labels, spec.levels());
    OracleSession session(oracle);
    const auto outcome = run_filter(planted.tree, session, cfg);

    auto exact_mean = [&](const std::set<std::string>& ids) -> std::optional<double> {
        if (ids.empty()) return std::nullopt;
        double s = 0.0;
        for (const auto& id : ids) s += planted.labels.at(id);
        return s / static_cast<double>(ids.size());
    };

    RunReport r;
    r.seed = spec.seed;
    r.realized_K = outcome.K;
    r.total_calls = outcome.ledger.total_calls;
    r.node_evaluations = static_cast<std::int64_t>(outcome.evaluation_order.size());
    r.keep_mean = exact_mean(outcome.keep_chunks);
    r.discard_mean = exact_mean(outcome.discard_chunks);
    r.bound_width = final_bound_width(outcome.K, cfg.delta, cfg.n_max);
    const bool discard_ok = !r.discard_mean || *r.discard_mean <= cfg.alpha + r.bound_width;
    const bool keep_ok = !r.keep_mean || *r.keep_mean >= 1.0 - cfg.beta - r.bound_width;
    r.prop1_ok = discard_ok && keep_ok;
    r.prop2_applicable = prop2_margins_hold(spec, cfg);
    r.prop2_ok = !r.prop2_applicable || r.realized_K <= spec.k_prime;
    r.complexity_ok = r.total_calls <= 2 * r.realized_K * cfg.n_max;
    r.evaluations_ok = r.node_evaluations <= 2 * r.realized_K;
    return r;
}

double binomial_cdf(std::int64_t k, std::int64_t n, double p) {
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return 0.0;
    double total = 0.0;
    const double lp = std::log(p), lq = std::log1p(-p);
    for (std::int64_t i = 0; i <= k; ++i) {
        const double lc = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                          std::lgamma(static_cast<double>(n - i) + 1);
        total += std::exp(lc + static_cast<double>(i) * lp + static_cast<double>(n - i) * lq);
    }
    return std::min(total, 1.0);
}

bool rate_test_passes(std::int64_t successes, std::int64_t trials, double rate, double significance) {
    return binomial_cdf(successes, trials, rate) >= significance;
}

std::vector<SweepRow> sweep(const std::vector<PlantedSpec>& specs, const std::vector<FilterConfig>& cfgs,
                            std::int64_t trials, std::uint64_t base_seed, unsigned threads) {
    if (specs.empty() || cfgs.empty()) throw ConfigError("sweep grids must be nonempty");
    if (trials < 1) throw ConfigError("trials must be positive");
    const std::size_t cells = specs.size() * cfgs.size();
    const auto per_cell = static_cast<std::size_t>(trials);
    std::vector<RunReport> reports(cells * per_cell);
    std::vector<std::exception_ptr> errors(reports.size());

    detail::parallel_for(reports.size(), threads, [&](std::size_t job) {
        const std::size_t cell = job / per_cell;
        const std::size_t trial = job % per_cell;
        PlantedSpec spec = specs[cell / cfgs.size()];
        FilterConfig cfg = cfgs[cell % cfgs.size()];
        const std::uint64_t cell_seed = mix_seed(base_seed, cell);
        spec.seed = mix_seed(cell_seed, 2 * trial);
        cfg.seed = mix_seed(cell_seed, 2 * trial + 1);
        try {
            reports[job] = run_trial(spec, cfg);
        } catch (...) {
            errors[job] = std::current_exception();
        }
    });
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::vector<SweepRow> rows;
    for (std::size_t cell = 0; cell < cells; ++cell) {
        SweepRow row;
        row.spec_index = cell / cfgs.size();
        row.cfg_index = cell % cfgs.size();
        row.spec = specs[row.spec_index];
        row.cfg = cfgs[row.cfg_index];
        row.trials = trials;
        std::int64_t keep_n = 0, discard_n = 0;
        for (std::size_t t = 0; t < per_cell; ++t) {
            const auto& r = reports[cell * per_cell + t];
            row.prop1_passes += r.prop1_ok;
            row.prop2_passes += r.prop2_ok;
            row.complexity_passes += r.complexity_ok && r.evaluations_ok;
            row.mean_K += static_cast<double>(r.realized_K);
            row.mean_calls += static_cast<double>(r.total_calls);
            if (r.keep_mean) {
                row.mean_keep += *r.keep_mean;
                ++keep_n;
            }
            if (r.discard_mean) {
                row.mean_discard += *r.discard_mean;
                row.mean_discard_excess += std::max(0.0, *r.discard_mean - row.cfg.alpha);
                ++discard_n;
            }
        }
        const auto n = static_cast<double>(trials);
        row.mean_K /= n;
        row.mean_calls /= n;
        row.mean_keep = keep_n ? row.mean_keep / static_cast<double>(keep_n) : 0.0;
        row.mean_discard = discard_n ? row.mean_discard / static_cast<double>(discard_n) : 0.0;
        row.mean_discard_excess /= n;
        row.prop1_rate_ok = rate_test_passes(row.prop1_passes, trials, 1.0 - row.cfg.delta);
        row.prop2_rate_ok = rate_test_passes(row.prop2_passes, trials, 1.0 - row.cfg.delta);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "spec_index,cfg_index,branching,depth,k_prime,alpha_prime,beta_prime,good_fraction,label_kind,"
           "alpha,beta,n_max,delta,mode,trials,prop1_rate,prop2_rate,complexity_rate,mean_K,mean_calls,"
           "mean_keep,mean_discard,mean_discard_excess,prop1_rate_ok,prop2_rate_ok\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        const double n = static_cast<double>(r.trials);
        out << r.spec_index << ',' << r.cfg_index << ',' << r.spec.branching << ',' << r.spec.depth << ','
            << r.spec.k_prime << ',' << num(r.spec.alpha_prime) << ',' << num(r.spec.beta_prime) << ','
            << num(r.spec.good_fraction) << ',' << kind_name(r.spec.label_kind) << ',' << num(r.cfg.alpha) << ','
            << num(r.cfg.beta) << ',' << r.cfg.n_max << ',' << num(r.cfg.delta) << ',' << to_string(r.cfg.mode)
            << ',' << r.trials << ',' << num(static_cast<double>(r.prop1_passes) / n) << ','
            << num(static_cast<double>(r.prop2_passes) / n) << ','
            << num(static_cast<double>(r.complexity_passes) / n) << ',' << num(r.mean_K) << ','
            << num(r.mean_calls) << ',' << num(r.mean_keep) << ',' << num(r.mean_discard) << ','
            << num(r.mean_discard_excess) << ',' << (r.prop1_rate_ok ? "true" : "false") << ','
            << (r.prop2_rate_ok ? "true" : "false") << '\n';
    }
}

}  // namespace tbdf::synth
