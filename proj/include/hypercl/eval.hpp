#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "hypercl/encoder.hpp"
#include "hypercl/error.hpp"
#include "hypercl/hypernet.hpp"
#include "hypercl/losses.hpp"
#include "hypercl/model.hpp"
#include "hypercl/random.hpp"

namespace hypercl {

// ---------------------------------------------------------------------------
// Correlation

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    detail::require_same_dim(xs.size(), ys.size(), "pearson");
    if (xs.size() < 2) throw DomainError("pearson: need at least 2 points");
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson: constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> fractional_ranks(std::span<const double> xs) {
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double spearman(std::span<const double> xs, std::span<const double> ys) {
    detail::require_same_dim(xs.size(), ys.size(), "spearman");
    if (xs.size() < 2) throw DomainError("spearman: need at least 2 points");
    const auto rx = fractional_ranks(xs);
    const auto ry = fractional_ranks(ys);
    return pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Link-prediction ranking

struct RankingResult {
    std::string query;
    std::size_t rank = 0;  // 1-based, after filtering
    std::size_t candidates = 0;
};

/// Rank of `gold` among scored candidates after removing `filter` members other than gold.
/// Rank = 1 + #(strictly greater) + #(equal score and lexicographically smaller name).
inline RankingResult rank_gold(std::span<const std::pair<std::string, double>> scored, const std::string& gold,
                               const std::unordered_set<std::string>& filter, std::string query = {}) {
    const auto it = std::find_if(scored.begin(), scored.end(), [&](const auto& p) { return p.first == gold; });
    if (it == scored.end()) throw DomainError("rank: gold \"" + gold + "\" not among candidates");
    const double gold_score = it->second;
    RankingResult r;
    r.query = std::move(query);
    r.rank = 1;
    for (const auto& [name, score] : scored) {
        if (name == gold) {
            ++r.candidates;
            continue;
        }
        if (filter.count(name)) continue;
        ++r.candidates;
        if (score > gold_score || (score == gold_score && name < gold)) ++r.rank;
    }
    return r;
}

/// Tail prediction for (head, relation, ?): candidates scored by phi(g(h_r, h_head), h_candidate).
inline RankingResult rank_entities(const HyperNetParams& params, const EncoderProvider& encoder,
                                   const std::string& head, const std::string& relation, const std::string& gold_tail,
                                   std::span<const std::string> candidates,
                                   const std::unordered_set<std::string>& filter_set) {
    if (std::find(candidates.begin(), candidates.end(), gold_tail) == candidates.end()) {
        throw DomainError("rank_entities: gold tail \"" + gold_tail + "\" missing from candidates");
    }
    const Vector h_hr = compose(params, encoder.embed(relation), encoder.embed(head));
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(candidates.size());
    for (const auto& c : candidates) scored.emplace_back(c, cosine_similarity(h_hr, encoder.embed(c)));
    return rank_gold(scored, gold_tail, filter_set, head + " | " + relation);
}

/// MRR and Hits@k.
struct RankingMetrics {
    double mrr = 0.0;
    std::map<std::size_t, double> hits;
    std::size_t count = 0;
};

inline RankingMetrics mrr_hits(std::span<const RankingResult> results, std::span<const std::size_t> ks) {
    if (results.empty()) throw DomainError("mrr_hits: no results");
    RankingMetrics m;
    m.count = results.size();
    for (auto k : ks) m.hits[k] = 0.0;
    for (const auto& r : results) {
        if (r.rank == 0) throw DomainError("mrr_hits: rank must be >= 1");
        m.mrr += 1.0 / static_cast<double>(r.rank);
        for (auto k : ks) {
            if (r.rank <= k) m.hits[k] += 1.0;
        }
    }
    const double n = static_cast<double>(results.size());
    m.mrr /= n;
    for (auto& [k, v] : m.hits) v /= n;
    return m;
}

struct KgcEvaluation {
    RankingMetrics tail;      // (h, r, ?)
    RankingMetrics head;      // (?, r, t)
    RankingMetrics combined;  // both directions pooled
    std::vector<RankingResult> tail_results;
    std::vector<RankingResult> head_results;
};

/// Filtered evaluation in both directions over every entity. `known` holds every true triple used
/// for filtering (train + valid + test).
inline KgcEvaluation evaluate_kgc(const HyperNetParams& params, const EncoderProvider& encoder,
                                  std::span<const KgTriple> queries, std::span<const std::string> entities,
                                  std::span<const KgTriple> known, std::span<const std::size_t> ks = {}) {
    static const std::vector<std::size_t> default_ks = {1, 3, 10};
    if (ks.empty()) ks = default_ks;
    if (queries.empty()) throw DomainError("evaluate_kgc: no queries");

    std::map<std::pair<std::string, std::string>, std::unordered_set<std::string>> true_tails, true_heads;
    for (const auto& t : known) {
        true_tails[{t.head, t.relation}].insert(t.tail);
        true_heads[{t.relation, t.tail}].insert(t.head);
    }

    std::map<std::string, Vector> raw;
    for (const auto& e : entities) raw.emplace(e, encoder.embed(e));
    std::map<std::string, ConditionOperator> ops;
    std::map<std::string, Vector> rel_emb;
    auto conditioned = [&](const std::string& relation, const std::string& entity) {
        auto re = rel_emb.find(relation);
        if (re == rel_emb.end()) re = rel_emb.emplace(relation, encoder.embed(relation)).first;
        if (params.mode == HyperMode::full || params.mode == HyperMode::lowrank) {
            auto op = ops.find(relation);
            if (op == ops.end()) op = ops.emplace(relation, generate_condition_matrix(params, re->second)).first;
            return project(op->second, raw.at(entity));
        }
        return compose(params, re->second, raw.at(entity));
    };

    // conditioned head embeddings per relation, reused by head prediction
    std::map<std::string, std::map<std::string, Vector>> conditioned_cache;
    auto conditioned_cached = [&](const std::string& relation, const std::string& entity) -> const Vector& {
        auto& per_rel = conditioned_cache[relation];
        auto it = per_rel.find(entity);
        if (it == per_rel.end()) it = per_rel.emplace(entity, conditioned(relation, entity)).first;
        return it->second;
    };

    KgcEvaluation out;
    std::vector<std::pair<std::string, double>> scored;
    for (const auto& q : queries) {
        if (!raw.count(q.head) || !raw.count(q.tail)) {
            throw DomainError("evaluate_kgc: query entity not in candidate list");
        }
        const Vector& h_hr = conditioned_cached(q.relation, q.head);
        scored.clear();
        for (const auto& e : entities) scored.emplace_back(e, cosine_similarity(h_hr, raw.at(e)));
        out.tail_results.push_back(rank_gold(scored, q.tail, true_tails[{q.head, q.relation}],
                                             q.head + " | " + q.relation + " | ?"));

        scored.clear();
        const Vector& h_t = raw.at(q.tail);
        for (const auto& e : entities) scored.emplace_back(e, cosine_similarity(conditioned_cached(q.relation, e), h_t));
        out.head_results.push_back(rank_gold(scored, q.head, true_heads[{q.relation, q.tail}],
                                             "? | " + q.relation + " | " + q.tail));
    }
    out.tail = mrr_hits(out.tail_results, ks);
    out.head = mrr_hits(out.head_results, ks);
    std::vector<RankingResult> both = out.tail_results;
    both.insert(both.end(), out.head_results.begin(), out.head_results.end());
    out.combined = mrr_hits(both, ks);
    return out;
}

// ---------------------------------------------------------------------------
// C-STS

/// Predicted similarity per quadruplet on the native label scale.
inline std::vector<double> predict_csts(const HyperNetParams& params, const EncoderProvider& encoder,
                                        std::span<const CstsQuadruplet> items, const LossConfig& cfg = {}) {
    std::map<std::string, ConditionOperator> ops;
    std::vector<double> out;
    out.reserve(items.size());
    for (const auto& q : items) {
        const Vector h_c = encoder.embed(q.condition);
        const Vector a = encoder.embed(q.sentence1);
        const Vector b = encoder.embed(q.sentence2);
        double phi = 0.0;
        if (params.mode == HyperMode::full || params.mode == HyperMode::lowrank) {
            auto it = ops.find(q.condition);
            if (it == ops.end()) it = ops.emplace(q.condition, generate_condition_matrix(params, h_c)).first;
            phi = cosine_similarity(project(it->second, a), project(it->second, b));
        } else {
            phi = cosine_similarity(compose(params, h_c, a), compose(params, h_c, b));
        }
        out.push_back(cfg.to_native(phi));
    }
    return out;
}

struct CorrelationMetrics {
    double spearman = 0.0;
    double pearson = 0.0;
    std::size_t count = 0;
};

inline CorrelationMetrics evaluate_csts(const HyperNetParams& params, const EncoderProvider& encoder,
                                        std::span<const CstsQuadruplet> items, const LossConfig& cfg = {}) {
    const auto pred = predict_csts(params, encoder, items, cfg);
    std::vector<double> gold;
    gold.reserve(items.size());
    for (const auto& q : items) gold.push_back(q.label);
    return {spearman(pred, gold), pearson(pred, gold), items.size()};
}

// ---------------------------------------------------------------------------
// Seen / unseen

template <class Item, class ConditionOf>
std::pair<std::vector<Item>, std::vector<Item>> split_seen_unseen(const std::set<std::string>& train_conditions,
                                                                  std::span<const Item> items, ConditionOf&& condition_of) {
    std::pair<std::vector<Item>, std::vector<Item>> out;
    for (const auto& it : items) (train_conditions.count(condition_of(it)) ? out.first : out.second).push_back(it);
    return out;
}

inline std::pair<std::vector<CstsQuadruplet>, std::vector<CstsQuadruplet>> split_seen_unseen(
    const std::set<std::string>& train_conditions, std::span<const CstsQuadruplet> items) {
    return split_seen_unseen<CstsQuadruplet>(train_conditions, items,
                                             [](const CstsQuadruplet& q) -> const std::string& { return q.condition; });
}

inline std::pair<std::vector<KgTriple>, std::vector<KgTriple>> split_seen_unseen(
    const std::set<std::string>& train_relations, std::span<const KgTriple> items) {
    return split_seen_unseen<KgTriple>(train_relations, items,
                                       [](const KgTriple& t) -> const std::string& { return t.relation; });
}

// ---------------------------------------------------------------------------
// Clustering

struct KMeansResult {
    std::vector<std::size_t> assignments;
    std::vector<Vector> centroids;
    double inertia = 0.0;
    std::size_t iterations = 0;
};

namespace detail {
inline double squared_distance(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
}
}  // namespace detail

/// k-means++ seeding, then Lloyd iterations until the assignment stops changing or max_iters.
inline KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::uint64_t seed,
                           std::size_t max_iters = 100) {
    if (k == 0) throw DomainError("kmeans: k must be positive");
    if (k > points.size()) {
        throw DomainError("kmeans: k (" + std::to_string(k) + ") exceeds point count (" +
                          std::to_string(points.size()) + ")");
    }
    const std::size_t n = points.size();
    const std::size_t dim = points[0].dim();
    for (const auto& p : points) detail::require_same_dim(dim, p.dim(), "kmeans");

    Rng rng = make_rng(seed);
    KMeansResult res;
    std::vector<bool> chosen(n, false);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::size_t c0 = first(rng);
    chosen[c0] = true;
    res.centroids.push_back(points[c0]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(points[i], points[c0]);
    while (res.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
        std::size_t next = n;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                target -= d2[i];
                if (target <= 0.0) {
                    next = i;
                    break;
                }
            }
            if (next == n) {
                for (std::size_t i = n; i-- > 0;) {
                    if (!chosen[i] && d2[i] > 0.0) {
                        next = i;
                        break;
                    }
                }
            }
        } else {
            // every remaining point coincides with a centroid: take the first unchosen one
            for (std::size_t i = 0; i < n && next == n; ++i) {
                if (!chosen[i]) next = i;
            }
        }
        chosen[next] = true;
        res.centroids.push_back(points[next]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], detail::squared_distance(points[i], points[next]));
    }

    res.assignments.assign(n, k);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = detail::squared_distance(points[i], res.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (res.assignments[i] != best) {
                res.assignments[i] = best;
                changed = true;
            }
        }
        res.iterations = iter + 1;
        if (!changed) break;
        std::vector<Vector> sums(k, Vector(dim));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[res.assignments[i]];
            for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
            ++counts[res.assignments[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centroid
            res.centroids[c] = scaled(sums[c], 1.0 / static_cast<double>(counts[c]));
        }
    }
    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        res.inertia += detail::squared_distance(points[i], res.centroids[res.assignments[i]]);
    }
    return res;
}

/// Condition-group-weighted entropy of the cluster assignment (natural log).
template <class Label>
double impurity(std::span<const std::size_t> assignments, std::span<const Label> labels) {
    detail::require_same_dim(assignments.size(), labels.size(), "impurity");
    if (assignments.empty()) throw DomainError("impurity: no points");
    std::map<Label, std::map<std::size_t, std::size_t>> counts;
    std::map<Label, std::size_t> group_size;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++counts[labels[i]][assignments[i]];
        ++group_size[labels[i]];
    }
    const double total = static_cast<double>(labels.size());
    double result = 0.0;
    for (const auto& [label, clusters] : counts) {
        const double ci = static_cast<double>(group_size[label]);
        double entropy = 0.0;
        for (const auto& [cluster, lij] : clusters) {
            const double p = static_cast<double>(lij) / ci;
            entropy -= p * std::log(p);
        }
        result += (ci / total) * entropy;
    }
    return result;
}

inline double impurity(std::span<const std::size_t> assignments, std::span<const std::string> labels) {
    return impurity<std::string>(assignments, labels);
}

struct ClusterReport {
    std::vector<std::size_t> assignments;
    double impurity = 0.0;
    std::size_t k = 0;
};

/// Up to `per_condition` distinct sentences for each condition, in seeded random order.
/// Returns (sentence, condition) pairs grouped by condition in first-seen order.
inline std::vector<std::pair<std::string, std::string>> sample_condition_groups(std::span<const CstsQuadruplet> items,
                                                                              std::size_t per_condition,
                                                                              std::uint64_t seed) {
    std::vector<std::string> conditions;
    std::map<std::string, std::vector<std::string>> pool;
    for (const auto& q : items) {
        auto [it, inserted] = pool.try_emplace(q.condition);
        if (inserted) conditions.push_back(q.condition);
        for (const auto* s : {&q.sentence1, &q.sentence2}) {
            if (std::find(it->second.begin(), it->second.end(), *s) == it->second.end()) it->second.push_back(*s);
        }
    }
    Rng rng = make_rng(seed);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& c : conditions) {
        auto& sentences = pool[c];
        std::shuffle(sentences.begin(), sentences.end(), rng);
        const std::size_t n = std::min(per_condition, sentences.size());
        for (std::size_t i = 0; i < n; ++i) out.emplace_back(sentences[i], c);
    }
    return out;
}

inline constexpr std::size_t kDefaultKMeansRestarts = 10;

/// k-means with `restarts` seedings derived from `seed`; keeps the lowest-inertia run.
inline ClusterReport cluster_report(std::span<const Vector> points, std::span<const std::string> labels, std::size_t k,
                                    std::uint64_t seed, std::size_t restarts = kDefaultKMeansRestarts,
                                    std::size_t max_iters = 100) {
    if (restarts == 0) throw DomainError("cluster_report: restarts must be positive");
    detail::require_same_dim(points.size(), labels.size(), "cluster_report");
    ClusterReport r;
    r.k = k;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < restarts; ++i) {
        KMeansResult run = kmeans(points, k, i == 0 ? seed : splitmix64(seed + i), max_iters);
        if (run.inertia < best) {
            best = run.inertia;
            r.assignments = std::move(run.assignments);
        }
    }
    r.impurity = impurity(std::span<const std::size_t>(r.assignments), labels);
    return r;
}

// ---------------------------------------------------------------------------
// Frobenius-norm spread of the generated operators

/// |W1 W2^T|_F without forming the nh x nh product: sqrt(trace((W1^T W1)(W2^T W2))).
inline double factored_frobenius_norm(const Matrix& w1, const Matrix& w2) {
    const Matrix g1 = matmul_transposed_lhs(w1, w1);
    const Matrix g2 = matmul_transposed_lhs(w2, w2);
    double tr = 0.0;
    for (std::size_t i = 0; i < g1.rows(); ++i) {
        for (std::size_t j = 0; j < g1.cols(); ++j) tr += g1(i, j) * g2(j, i);
    }
    return std::sqrt(std::max(0.0, tr));
}

/// Normalized Frobenius norm of an operator: nh^2 valid elements for dense, 2*nh*nk for factored,
/// nh for diagonal.
inline double operator_norm_normalized(const ConditionOperator& op) {
    switch (op.form) {
        case OperatorForm::dense: return frobenius_norm_normalized(op.W, op.W.size());
        case OperatorForm::factored:
            return factored_frobenius_norm(op.W1, op.W2) / std::sqrt(static_cast<double>(op.W1.size() + op.W2.size()));
        case OperatorForm::diagonal: return norm(op.d) / std::sqrt(static_cast<double>(op.d.dim()));
    }
    return 0.0;
}

struct FrobeniusVarianceReport {
    double var_hyper = 0.0;
    double var_diag = 0.0;
    std::vector<double> hyper_norms;
    std::vector<double> diag_norms;
};

inline FrobeniusVarianceReport frobenius_variance_report(const HyperNetParams& params, const EncoderProvider& encoder,
                                                         std::span<const std::string> conditions) {
    if (conditions.empty()) throw DomainError("frobenius_variance_report: no conditions");
    FrobeniusVarianceReport r;
    for (const auto& c : conditions) {
        const Vector h_c = encoder.embed(c);
        r.hyper_norms.push_back(operator_norm_normalized(generate_condition_matrix(params, h_c)));
        r.diag_norms.push_back(operator_norm_normalized(ConditionOperator::diagonal(h_c)));
    }
    r.var_hyper = variance(r.hyper_norms);
    r.var_diag = variance(r.diag_norms);
    return r;
}

}  // namespace hypercl
