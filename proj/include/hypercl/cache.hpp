#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hypercl/encoder.hpp"
#include "hypercl/error.hpp"
#include "hypercl/hypernet.hpp"
#include "hypercl/model.hpp"

namespace hypercl {

struct CacheStats {
    std::uint64_t lookups = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t resident_bytes = 0;     // payload reals at 8 bytes each
    std::uint64_t bookkeeping_bytes = 0;  // key strings
    std::uint64_t heavy_ops = 0;          // encoder invocations
    std::uint64_t light_ops = 0;          // composition / projection invocations
    std::uint64_t generation_ops = 0;     // hypernetwork invocations

    double hit_rate() const noexcept {
        return lookups == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(lookups);
    }

    CacheStats& operator+=(const CacheStats& o) {
        lookups += o.lookups;
        hits += o.hits;
        misses += o.misses;
        resident_bytes += o.resident_bytes;
        bookkeeping_bytes += o.bookkeeping_bytes;
        heavy_ops += o.heavy_ops;
        light_ops += o.light_ops;
        generation_ops += o.generation_ops;
        return *this;
    }

    friend bool operator==(const CacheStats&, const CacheStats&) = default;
};

namespace detail {
inline std::uint64_t payload_bytes(const Vector& v) { return v.dim() * sizeof(double); }
inline std::uint64_t payload_bytes(const ConditionOperator& op) { return op.stored_values() * sizeof(double); }
}  // namespace detail

/// Unbounded, never-evicting content-addressed cache. Readers share, inserters are exclusive;
/// counters are atomic.
template <class Value>
class ContentCache {
public:
    ContentCache() = default;
    ContentCache(const ContentCache&) = delete;
    ContentCache& operator=(const ContentCache&) = delete;

    /// Returns the cached value, or computes it with `make` and inserts it. `make` is charged by
    /// the caller via the returned miss flag.
    template <class Make>
    std::pair<Value, bool> get_or_insert(const std::string& key, Make&& make) {
        lookups_.fetch_add(1, std::memory_order_relaxed);
        {
            std::shared_lock lock(mutex_);
            auto it = entries_.find(key);
            if (it != entries_.end()) {
                hits_.fetch_add(1, std::memory_order_relaxed);
                return {it->second, false};
            }
        }
        Value v = make();
        std::unique_lock lock(mutex_);
        auto [it, inserted] = entries_.emplace(key, std::move(v));
        if (inserted) {
            misses_.fetch_add(1, std::memory_order_relaxed);
            resident_.fetch_add(detail::payload_bytes(it->second), std::memory_order_relaxed);
            bookkeeping_.fetch_add(key.size(), std::memory_order_relaxed);
            return {it->second, true};
        }
        // another writer got there first; count as a hit on the stored value
        hits_.fetch_add(1, std::memory_order_relaxed);
        return {it->second, false};
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

    CacheStats stats() const {
        CacheStats s;
        s.lookups = lookups_.load();
        s.hits = hits_.load();
        s.misses = misses_.load();
        s.resident_bytes = resident_.load();
        s.bookkeeping_bytes = bookkeeping_.load();
        return s;
    }

private:
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, Value> entries_;
    std::atomic<std::uint64_t> lookups_{0}, hits_{0}, misses_{0}, resident_{0}, bookkeeping_{0};
};

/// Embedding cache that also counts encoder (heavy) invocations.
class EmbeddingCache {
public:
    CacheStats stats() const {
        CacheStats s = cache_.stats();
        s.heavy_ops = heavy_.load();
        return s;
    }
    std::size_t size() const { return cache_.size(); }

    template <class Encode>
    Vector get(const std::string& text, Encode&& encode) {
        auto [v, miss] = cache_.get_or_insert(text, [&] { return encode(text); });
        if (miss) heavy_.fetch_add(1, std::memory_order_relaxed);
        return v;
    }

private:
    ContentCache<Vector> cache_;
    std::atomic<std::uint64_t> heavy_{0};
};

inline Vector cached_embed(EmbeddingCache& cache, const EncoderProvider& encoder, const std::string& text) {
    return cache.get(text, [&](const std::string& t) { return encoder.embed(t); });
}

/// Cache of generated condition operators, keyed by condition text. The condition embedding is
/// not kept; the operator replaces it.
class OperatorCache {
public:
    CacheStats stats() const {
        CacheStats s = cache_.stats();
        s.heavy_ops = heavy_.load();
        s.generation_ops = generations_.load();
        return s;
    }
    std::size_t size() const { return cache_.size(); }

    template <class Encode>
    ConditionOperator get(const HyperNetParams& params, const std::string& condition, Encode&& encode) {
        if (params.mode != HyperMode::full && params.mode != HyperMode::lowrank) {
            throw DomainError("cached_operator: params have no hypernetwork");
        }
        auto [op, miss] = cache_.get_or_insert(condition, [&] {
            return generate_condition_matrix(params, encode(condition));
        });
        if (miss) {
            heavy_.fetch_add(1, std::memory_order_relaxed);
            generations_.fetch_add(1, std::memory_order_relaxed);
        }
        return op;
    }

private:
    ContentCache<ConditionOperator> cache_;
    std::atomic<std::uint64_t> heavy_{0}, generations_{0};
};

inline ConditionOperator cached_operator(OperatorCache& cache, const HyperNetParams& params,
                                         const EncoderProvider& encoder, const std::string& condition) {
    return cache.get(params, condition, [&](const std::string& t) { return encoder.embed(t); });
}

// ---------------------------------------------------------------------------
// Workloads

enum class Architecture { bi, tri, hyper };

inline std::string_view to_string(Architecture a) {
    switch (a) {
        case Architecture::bi: return "bi";
        case Architecture::tri: return "tri";
        case Architecture::hyper: return "hyper";
    }
    return "?";
}

struct Request {
    std::string sentence;
    std::string condition;
};

struct WorkloadSpec {
    Architecture architecture = Architecture::tri;
    std::vector<Request> requests;
};

namespace detail {
inline std::string joint_key(const Request& r) { return r.sentence + '\x1f' + r.condition; }
}  // namespace detail

/// Pure counting model of a cached request stream. For hyper, nk == 0 means a dense operator
/// (nh*nh reals per condition), otherwise factored (2*nh*nk).
inline CacheStats simulate_workload(const WorkloadSpec& spec, std::size_t nh, std::size_t nk = 0) {
    CacheStats s;
    const std::uint64_t vec_bytes = nh * sizeof(double);
    const std::uint64_t op_bytes = (nk == 0 ? nh * nh : 2 * nh * nk) * sizeof(double);
    std::unordered_set<std::string> sentences, conditions, joint;
    auto lookup = [&](std::unordered_set<std::string>& set, const std::string& key, std::uint64_t bytes) {
        ++s.lookups;
        if (set.insert(key).second) {
            ++s.misses;
            ++s.heavy_ops;
            s.resident_bytes += bytes;
            s.bookkeeping_bytes += key.size();
            return true;
        }
        ++s.hits;
        return false;
    };
    for (const auto& r : spec.requests) {
        switch (spec.architecture) {
            case Architecture::bi:
                lookup(joint, detail::joint_key(r), vec_bytes);
                break;
            case Architecture::tri:
                lookup(sentences, r.sentence, vec_bytes);
                lookup(conditions, r.condition, vec_bytes);
                ++s.light_ops;
                break;
            case Architecture::hyper:
                lookup(sentences, r.sentence, vec_bytes);
                if (lookup(conditions, r.condition, op_bytes)) ++s.generation_ops;
                ++s.light_ops;
                break;
        }
    }
    return s;
}

/// Every (sentence, condition) combination once, sentence-major.
inline std::vector<Request> full_cross_stream(std::size_t n_sentences, std::size_t n_conditions) {
    std::vector<Request> out;
    for (std::size_t s = 0; s < n_sentences; ++s) {
        for (std::size_t c = 0; c < n_conditions; ++c) {
            out.push_back({"sentence " + std::to_string(s), "condition " + std::to_string(c)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark

/// Stand-in for a transformer's cost: the provider's vector pushed through `depth` frozen
/// tanh(W x) layers. Deterministic given the seed.
class SimulatedEncoder {
public:
    SimulatedEncoder(const EncoderProvider& base, std::size_t depth, std::uint64_t seed) : base_(base) {
        Rng rng = make_rng(seed);
        const double stddev = 1.0 / std::sqrt(static_cast<double>(base.dim()));
        for (std::size_t l = 0; l < depth; ++l) {
            layers_.emplace_back(base.dim(), base.dim());
            fill_gaussian(layers_.back().values(), rng, stddev);
        }
    }

    std::size_t dim() const noexcept { return base_.dim(); }

    Vector embed(const std::string& text) const {
        Vector h = base_.embed(text);
        for (const auto& w : layers_) {
            h = matvec(w, h);
            for (double& x : h) x = std::tanh(x);
        }
        return h;
    }

private:
    const EncoderProvider& base_;
    std::vector<Matrix> layers_;
};

struct BenchRow {
    std::string architecture;
    std::size_t requests = 0;
    CacheStats stats;
    double wall_ms = 0.0;
};

struct BenchOptions {
    std::size_t repetitions = 1;
    std::size_t encoder_depth = 12;
    std::uint64_t seed = 0;
};

namespace detail {

/// Sum of the outputs so the optimizer cannot drop the work.
inline double checksum(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

}  // namespace detail

/// Time cached execution of the request stream, one request at a time, for bi, tri and each
/// supplied hypernetwork. Each repetition starts from empty caches; counters come from one run and
/// wall time is the total over all repetitions.
inline std::vector<BenchRow> bench_report(std::span<const Request> requests,
                                          std::span<const std::pair<std::string, const HyperNetParams*>> hypernets,
                                          const EncoderProvider& encoder, BenchOptions opts = {}) {
    if (opts.repetitions == 0) throw DomainError("bench: repetitions must be >= 1");
    if (requests.empty()) throw DomainError("bench: empty workload");
    const SimulatedEncoder f(encoder, opts.encoder_depth, opts.seed);
    auto encode = [&](const std::string& t) { return f.embed(t); };
    volatile double sink = 0.0;

    using Clock = std::chrono::steady_clock;
    auto run = [&](const std::string& name, auto&& body) {
        BenchRow row;
        row.architecture = name;
        row.requests = requests.size();
        double total_ms = 0.0;
        for (std::size_t rep = 0; rep < opts.repetitions; ++rep) {
            const auto start = Clock::now();
            CacheStats stats = body();
            total_ms += std::chrono::duration<double, std::milli>(Clock::now() - start).count();
            if (rep == 0) row.stats = stats;
        }
        row.wall_ms = total_ms;
        return row;
    };

    std::vector<BenchRow> rows;
    rows.push_back(run("bi", [&] {
        EmbeddingCache joint;
        double acc = 0.0;
        for (const auto& r : requests) {
            acc += detail::checksum(joint.get(detail::joint_key(r), [&](const std::string&) {
                return f.embed(r.sentence + " [SEP] " + r.condition);
            }));
        }
        sink = sink + acc;
        return joint.stats();
    }));

    rows.push_back(run("tri", [&] {
        EmbeddingCache sentences, conditions;
        double acc = 0.0;
        std::uint64_t light = 0;
        for (const auto& r : requests) {
            const Vector h_s = sentences.get(r.sentence, encode);
            const Vector h_c = conditions.get(r.condition, encode);
            acc += detail::checksum(hadamard_compose(h_c, h_s));
            ++light;
        }
        sink = sink + acc;
        CacheStats s = sentences.stats();
        s += conditions.stats();
        s.light_ops = light;
        return s;
    }));

    for (const auto& [name, params] : hypernets) {
        rows.push_back(run(name, [&, params = params] {
            EmbeddingCache sentences;
            OperatorCache operators;
            double acc = 0.0;
            std::uint64_t light = 0;
            for (const auto& r : requests) {
                const Vector h_s = sentences.get(r.sentence, encode);
                const ConditionOperator op = operators.get(*params, r.condition, encode);
                acc += detail::checksum(project(op, h_s));
                ++light;
            }
            sink = sink + acc;
            CacheStats s = sentences.stats();
            s += operators.stats();
            s.light_ops = light;
            return s;
        }));
    }
    return rows;
}

inline void write_bench_tsv(std::span<const BenchRow> rows, std::ostream& os) {
    os << "architecture\trequests\theavy_ops\tlight_ops\thits\tmisses\thit_rate\tresident_bytes\twall_ms\n";
    for (const auto& r : rows) {
        std::ostringstream rate, ms;
        rate << std::setprecision(6) << r.stats.hit_rate();
        ms << std::fixed << std::setprecision(3) << r.wall_ms;
        os << r.architecture << '\t' << r.requests << '\t' << r.stats.heavy_ops << '\t' << r.stats.light_ops << '\t'
           << r.stats.hits << '\t' << r.stats.misses << '\t' << rate.str() << '\t' << r.stats.resident_bytes << '\t'
           << ms.str() << '\n';
    }
}

}  // namespace hypercl
