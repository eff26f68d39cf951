#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hypercl/encoder.hpp"
#include "hypercl/error.hpp"
#include "hypercl/losses.hpp"
#include "hypercl/random.hpp"

namespace hypercl {

namespace detail {

/// Round through float so in-memory vectors equal what the JSONL round trip produces.
inline Vector round_to_float(const Vector& v) {
    Vector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = static_cast<double>(static_cast<float>(v[i]));
    return out;
}

inline double block_cosine(const Vector& a, const Vector& b, std::size_t block, std::size_t width) {
    const auto sa = a.values().subspan(block * width, width);
    const auto sb = b.values().subspan(block * width, width);
    return dot(sa, sb) / (norm(sa) * norm(sb));
}

}  // namespace detail

inline constexpr std::size_t kSyntheticAspectValues = 8;
inline constexpr double kSyntheticMeanWeight = 1.0;
inline constexpr double kSyntheticNoise = 0.5;

struct SyntheticCsts {
    std::vector<CstsQuadruplet> items;  // twins adjacent: high first, then low
    EmbeddingStore store;
    std::vector<std::string> conditions;  // condition k owns block k
    std::size_t block_width = 0;
};

/// Desk-scale conditional-similarity data.
///
/// Condition k owns coordinates [k*w, (k+1)*w) of the sentence space, w = nh / n_conditions. Sentence
/// embeddings are unit vectors scattered around a shared mean direction (encoders are anisotropic);
/// condition embeddings are isotropic random unit vectors. The gold label of (s1, s2, c_k) is the
/// cosine of block k mapped onto [1, 5]; each pair's twins are the conditions with the largest and
/// smallest block cosine.
inline SyntheticCsts make_synthetic_csts(std::size_t n_pairs, std::size_t n_conditions, std::size_t nh,
                                         std::uint64_t seed) {
    if (n_conditions < 2) throw DomainError("make_synthetic_csts: need at least 2 conditions");
    if (nh == 0 || nh % n_conditions != 0) {
        throw DomainError("make_synthetic_csts: nh (" + std::to_string(nh) + ") must be divisible by n_conditions (" +
                          std::to_string(n_conditions) + ")");
    }
    if (n_pairs == 0) throw DomainError("make_synthetic_csts: n_pairs must be positive");

    SyntheticCsts out;
    out.block_width = nh / n_conditions;
    out.store = EmbeddingStore(nh);
    Rng rng = make_rng(seed);

    for (std::size_t k = 0; k < n_conditions; ++k) {
        out.conditions.push_back("condition " + std::to_string(k));
        out.store.insert(out.conditions.back(), detail::round_to_float(random_unit(nh, rng)));
    }

    // per block: a few prototype "aspect values"; a sentence picks one per block
    const std::size_t w = out.block_width;
    std::vector<std::vector<Vector>> prototypes(n_conditions);
    for (std::size_t k = 0; k < n_conditions; ++k) {
        for (std::size_t j = 0; j < kSyntheticAspectValues; ++j) prototypes[k].push_back(random_unit(w, rng));
    }
    const Vector mean_direction = random_unit(nh, rng);
    const double noise = kSyntheticNoise / std::sqrt(static_cast<double>(nh));
    std::uniform_int_distribution<std::size_t> pick(0, kSyntheticAspectValues - 1);
    auto sentence = [&](const std::string& text) {
        Vector v = random_gaussian(nh, rng, noise);
        for (std::size_t i = 0; i < nh; ++i) v[i] += kSyntheticMeanWeight * mean_direction[i];
        for (std::size_t k = 0; k < n_conditions; ++k) {
            const Vector& proto = prototypes[k][pick(rng)];
            for (std::size_t i = 0; i < w; ++i) v[k * w + i] += proto[i];
        }
        v = detail::round_to_float(normalized(v));
        out.store.insert(text, v);
        return v;
    };

    for (std::size_t p = 0; p < n_pairs; ++p) {
        const std::string t1 = "sentence " + std::to_string(2 * p);
        const std::string t2 = "sentence " + std::to_string(2 * p + 1);
        const Vector a = sentence(t1);
        const Vector b = sentence(t2);
        std::size_t hi = 0, lo = 0;
        std::vector<double> cos(n_conditions);
        for (std::size_t k = 0; k < n_conditions; ++k) {
            cos[k] = detail::block_cosine(a, b, k, out.block_width);
            if (cos[k] > cos[hi]) hi = k;
            if (cos[k] < cos[lo]) lo = k;
        }
        if (hi == lo) lo = (hi + 1) % n_conditions;
        const auto pid = static_cast<std::int64_t>(p);
        out.items.push_back({t1, t2, out.conditions[hi], 3.0 + 2.0 * cos[hi], pid});
        out.items.push_back({t1, t2, out.conditions[lo], 3.0 + 2.0 * cos[lo], pid});
    }
    return out;
}

/// Split by pair_id so twins never straddle the split. Returns (train, test).
inline std::pair<std::vector<CstsQuadruplet>, std::vector<CstsQuadruplet>> split_csts_by_pair(
    std::span<const CstsQuadruplet> items, double test_fraction, std::uint64_t seed) {
    std::vector<std::int64_t> ids;
    for (const auto& q : items) {
        if (ids.empty() || std::find(ids.begin(), ids.end(), q.pair_id) == ids.end()) ids.push_back(q.pair_id);
    }
    Rng rng = make_rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
    const std::set<std::int64_t> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::pair<std::vector<CstsQuadruplet>, std::vector<CstsQuadruplet>> out;
    for (const auto& q : items) (test_ids.count(q.pair_id) ? out.second : out.first).push_back(q);
    return out;
}

struct SyntheticKg {
    std::vector<KgTriple> train, valid, test;
    EmbeddingStore store;
    std::vector<std::string> entities;
    std::vector<std::string> relations;
    std::vector<Matrix> relation_maps;  // generating orthogonal map per relation (latent space)

    std::vector<KgTriple> all() const {
        std::vector<KgTriple> out = train;
        out.insert(out.end(), valid.begin(), valid.end());
        out.insert(out.end(), test.begin(), test.end());
        return out;
    }
};

inline constexpr double kSyntheticKgThreshold = 0.9;

/// Desk-scale link-prediction graph.
///
/// Entities live in a latent space of dimension max(2, nh / 4), embedded isometrically into the
/// nh-dim encoder space. Each relation r is a random orthogonal map Q_r on the latent space. A
/// quarter of the entities are free random unit latents; each remaining entity is grown from a
/// random existing head under a random relation as a small perturbation of Q_r z_h. Every
/// (h, r, t) with cos(Q_r z_h, z_t) > 0.9 is a triple. Triples are shuffled and split 8:1:1.
inline SyntheticKg make_synthetic_kg(std::size_t n_entities, std::size_t n_relations, std::size_t nh,
                                     std::uint64_t seed) {
    if (n_entities < 4) throw DomainError("make_synthetic_kg: need at least 4 entities");
    if (n_relations < 2) throw DomainError("make_synthetic_kg: need at least 2 relations");
    if (nh < 2) throw DomainError("make_synthetic_kg: nh must be >= 2");

    SyntheticKg kg;
    kg.store = EmbeddingStore(nh);
    Rng rng = make_rng(seed);
    const std::size_t d = std::max<std::size_t>(2, nh / 4);
    for (std::size_t r = 0; r < n_relations; ++r) {
        kg.relations.push_back("relation " + std::to_string(r));
        kg.relation_maps.push_back(random_orthogonal(d, rng));
        kg.store.insert(kg.relations.back(), detail::round_to_float(random_unit(nh, rng)));
    }
    // first d columns of a random orthogonal matrix: the latent-to-encoder isometry
    const Matrix basis = random_orthogonal(nh, rng);
    auto embed = [&](const Vector& latent) {
        Vector v(nh);
        for (std::size_t i = 0; i < nh; ++i) {
            for (std::size_t j = 0; j < d; ++j) v[i] += basis(i, j) * latent[j];
        }
        return detail::round_to_float(v);
    };

    const std::size_t n_free = std::max<std::size_t>(2, n_entities / 4);
    const double noise = 0.25 / std::sqrt(static_cast<double>(d));
    std::vector<Vector> z;
    std::uniform_int_distribution<std::size_t> pick_rel(0, n_relations - 1);
    for (std::size_t e = 0; e < n_entities; ++e) {
        Vector v;
        if (e < n_free) {
            v = random_unit(d, rng);
        } else {
            std::uniform_int_distribution<std::size_t> pick_head(0, e - 1);
            const std::size_t h = pick_head(rng);
            const std::size_t r = pick_rel(rng);
            v = normalized(add(matvec(kg.relation_maps[r], z[h]), random_gaussian(d, rng, noise)));
        }
        z.push_back(v);
        kg.entities.push_back("entity " + std::to_string(e));
        kg.store.insert(kg.entities.back(), embed(v));
    }

    std::vector<KgTriple> triples;
    for (std::size_t r = 0; r < n_relations; ++r) {
        for (std::size_t h = 0; h < n_entities; ++h) {
            const Vector mapped = matvec(kg.relation_maps[r], z[h]);
            for (std::size_t t = 0; t < n_entities; ++t) {
                if (t == h) continue;
                if (cosine_similarity(mapped, z[t]) > kSyntheticKgThreshold) {
                    triples.push_back({kg.entities[h], kg.relations[r], kg.entities[t]});
                }
            }
        }
    }
    std::shuffle(triples.begin(), triples.end(), rng);
    const std::size_t n_valid = triples.size() / 10;
    const std::size_t n_test = triples.size() / 10;
    const std::size_t n_train = triples.size() - n_valid - n_test;
    kg.train.assign(triples.begin(), triples.begin() + static_cast<std::ptrdiff_t>(n_train));
    kg.valid.assign(triples.begin() + static_cast<std::ptrdiff_t>(n_train),
                    triples.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    kg.test.assign(triples.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), triples.end());
    if (kg.train.empty() || kg.valid.empty() || kg.test.empty()) {
        throw DomainError("make_synthetic_kg: degenerate graph (" + std::to_string(triples.size()) +
                          " triples; a split is empty)");
    }
    std::set<std::string> seen_relations;
    for (const auto& t : triples) seen_relations.insert(t.relation);
    if (seen_relations.size() != n_relations) {
        throw DomainError("make_synthetic_kg: some relation has no triple");
    }
    return kg;
}

}  // namespace hypercl
