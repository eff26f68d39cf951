#include <catch_amalgamated.hpp>

#include <atomic>
#include <set>
#include <sstream>
#include <thread>

#include "support.hpp"

using namespace hypercl;
using Catch::Approx;

namespace {

std::vector<Request> twice(std::vector<Request> r) {
    const auto copy = r;
    r.insert(r.end(), copy.begin(), copy.end());
    return r;
}

std::vector<Request> random_stream(std::size_t n, std::size_t sentences, std::size_t conditions, Rng& rng) {
    std::uniform_int_distribution<std::size_t> ps(0, sentences - 1), pc(0, conditions - 1);
    std::vector<Request> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"s" + std::to_string(ps(rng)), "c" + std::to_string(pc(rng))});
    }
    return out;
}

}  // namespace

TEST_CASE("content cache miss then hit") {
    ContentCache<Vector> cache;
    int calls = 0;
    auto make = [&] {
        ++calls;
        return Vector{1, 2, 3};
    };
    auto [a, miss_a] = cache.get_or_insert("k", make);
    auto [b, miss_b] = cache.get_or_insert("k", make);
    CHECK(miss_a);
    CHECK_FALSE(miss_b);
    CHECK(a == b);
    CHECK(calls == 1);
    const auto s = cache.stats();
    CHECK(s.lookups == 2);
    CHECK(s.hits == 1);
    CHECK(s.misses == 1);
    CHECK(s.resident_bytes == 3 * sizeof(double));
    CHECK(s.bookkeeping_bytes == 1);
    CHECK(s.hit_rate() == 0.5);
    CHECK(CacheStats{}.hit_rate() == 0.0);
}

TEST_CASE("operator cache stores the operator, not the embedding") {
    auto full = init_params(HyperMode::full, 8, 0, 1);
    auto lr = init_params(HyperMode::lowrank, 8, 2, 1);
    const auto enc = EncoderProvider::hashing(8, 0);
    OperatorCache fc, lc;
    const auto op1 = cached_operator(fc, full, enc, "colour");
    const auto op2 = cached_operator(fc, full, enc, "colour");
    CHECK(op1 == op2);
    CHECK(op1 == generate_condition_matrix(full, enc.embed("colour")));
    cached_operator(lc, lr, enc, "colour");
    cached_operator(lc, lr, enc, "size");
    CHECK(fc.stats().resident_bytes == 64 * sizeof(double));
    CHECK(lc.stats().resident_bytes == 2 * 32 * sizeof(double));
    CHECK(fc.stats().generation_ops == 1);
    CHECK(fc.stats().heavy_ops == 1);
    CHECK(lc.size() == 2);
    OperatorCache bad;
    CHECK_THROWS_AS(cached_operator(bad, init_params(HyperMode::hadamard, 8, 0, 0), enc, "x"), DomainError);
}

TEST_CASE("simulated workload on a full cross") {
    const std::size_t S = 10, C = 5, nh = 16;
    const WorkloadSpec bi{Architecture::bi, full_cross_stream(S, C)};
    const WorkloadSpec tri{Architecture::tri, full_cross_stream(S, C)};
    const WorkloadSpec hyper{Architecture::hyper, full_cross_stream(S, C)};
    const auto b = simulate_workload(bi, nh), t = simulate_workload(tri, nh);
    CHECK(b.heavy_ops == 50);
    CHECK(t.heavy_ops == 15);
    CHECK(b.hit_rate() == 0.0);
    CHECK(t.hit_rate() == Approx(0.85).margin(1e-15));
    CHECK(b.resident_bytes == 50 * nh * 8);
    CHECK(t.resident_bytes == 15 * nh * 8);
    CHECK(t.light_ops == 50);

    const auto h = simulate_workload(hyper, nh);
    const auto hl = simulate_workload(hyper, nh, 2);
    CHECK(h.resident_bytes == (S * nh + C * nh * nh) * 8);
    CHECK(hl.resident_bytes == (S * nh + C * 2 * nh * 2) * 8);
    CHECK(h.generation_ops == C);
    CHECK(h.heavy_ops == S + C);
}

TEST_CASE("replaying a stream") {
    for (std::size_t S : {2u, 3u, 7u}) {
        for (std::size_t C : {2u, 4u}) {
            const auto stream = twice(full_cross_stream(S, C));
            const auto b = simulate_workload({Architecture::bi, stream}, 8);
            const auto t = simulate_workload({Architecture::tri, stream}, 8);
            CHECK(b.hit_rate() == Approx(0.5).margin(1e-15));
            CHECK(t.hit_rate() ==
                  Approx(1.0 - static_cast<double>(S + C) / static_cast<double>(4 * S * C)).margin(1e-15));
            CHECK(t.heavy_ops <= b.heavy_ops);
        }
    }
    const std::vector<Request> one = {{"a", "b"}};
    CHECK(simulate_workload({Architecture::bi, one}, 4).heavy_ops == 1);
    CHECK(simulate_workload({Architecture::tri, one}, 4).heavy_ops == 2);
    CHECK(simulate_workload({Architecture::tri, one}, 4).hits == 0);
}

TEST_CASE("simulation counts distinct keys and ignores their spelling") {
    Rng rng = make_rng(3);
    for (int t = 0; t < 30; ++t) {
        const auto stream = random_stream(60, 12, 5, rng);
        std::set<std::string> s, c;
        std::set<std::pair<std::string, std::string>> j;
        for (const auto& r : stream) {
            s.insert(r.sentence);
            c.insert(r.condition);
            j.insert({r.sentence, r.condition});
        }
        const auto tri = simulate_workload({Architecture::tri, stream}, 8);
        const auto bi = simulate_workload({Architecture::bi, stream}, 8);
        CHECK(tri.misses == s.size() + c.size());
        CHECK(bi.misses == j.size());
        CHECK(tri.lookups == 2 * stream.size());
        CHECK(tri.hits + tri.misses == tri.lookups);

        // a consistent relabelling leaves the counters (bar key bytes) unchanged
        auto relabelled = stream;
        for (auto& r : relabelled) {
            r.sentence = "sentence-number-" + r.sentence;
            r.condition = "X" + r.condition;
        }
        auto a = simulate_workload({Architecture::hyper, stream}, 8, 2);
        auto b = simulate_workload({Architecture::hyper, relabelled}, 8, 2);
        a.bookkeeping_bytes = b.bookkeeping_bytes = 0;
        CHECK(a == b);
    }
}

TEST_CASE("real caches replay the simulation") {
    Rng rng = make_rng(4);
    const std::size_t nh = 8;
    const auto base = EncoderProvider::hashing(nh, 1);
    const auto full = init_params(HyperMode::full, nh, 0, 2);
    const auto lr = init_params(HyperMode::lowrank, nh, 2, 2);
    for (int t = 0; t < 10; ++t) {
        const auto stream = random_stream(40, 9, 4, rng);
        std::size_t encodes = 0;
        auto encode = [&](const std::string& s) {
            ++encodes;
            return base.embed(s);
        };
        EmbeddingCache s_cache, c_cache;
        for (const auto& r : stream) {
            s_cache.get(r.sentence, encode);
            c_cache.get(r.condition, encode);
        }
        CacheStats tri = s_cache.stats();
        tri += c_cache.stats();
        tri.light_ops = stream.size();
        CHECK(tri == simulate_workload({Architecture::tri, stream}, nh));
        CHECK(encodes == tri.heavy_ops);

        for (const HyperNetParams* p : {&full, &lr}) {
            EmbeddingCache sent;
            OperatorCache ops;
            for (const auto& r : stream) {
                sent.get(r.sentence, encode);
                ops.get(*p, r.condition, encode);
            }
            CacheStats h = sent.stats();
            h += ops.stats();
            h.light_ops = stream.size();
            CHECK(h == simulate_workload({Architecture::hyper, stream}, nh, p->nk));
        }
    }
}

TEST_CASE("bench report") {
    const auto enc = EncoderProvider::hashing(16, 0);
    const auto full = init_params(HyperMode::full, 16, 0, 1);
    const auto lr = init_params(HyperMode::lowrank, 16, 4, 1);
    const std::vector<std::pair<std::string, const HyperNetParams*>> nets = {{"hyper-full", &full},
                                                                            {"hyper-lowrank", &lr}};
    const auto stream = full_cross_stream(10, 5);
    BenchOptions opts;
    opts.repetitions = 2;
    opts.encoder_depth = 2;
    const auto rows = bench_report(stream, nets, enc, opts);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].architecture == "bi");
    CHECK(rows[0].stats.heavy_ops == 50);
    CHECK(rows[1].stats.heavy_ops == 15);
    CHECK(rows[1].stats.hit_rate() == Approx(0.85));
    CHECK(rows[2].stats.resident_bytes == (10 * 16 + 5 * 256) * 8);
    CHECK(rows[3].stats.resident_bytes == (10 * 16 + 5 * 128) * 8);
    for (const auto& r : rows) {
        CHECK(r.requests == 50);
        CHECK(r.wall_ms > 0.0);
    }

    std::ostringstream os;
    write_bench_tsv(rows, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "architecture\trequests\theavy_ops\tlight_ops\thits\tmisses\thit_rate\tresident_bytes\twall_ms");
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        CHECK(std::count(line.begin(), line.end(), '\t') == 8);
    }
    CHECK(n == 4);

    CHECK_THROWS_AS(bench_report(std::vector<Request>{}, nets, enc), DomainError);
    opts.repetitions = 0;
    CHECK_THROWS_AS(bench_report(stream, nets, enc, opts), DomainError);
}

TEST_CASE("simulated encoder is deterministic") {
    const auto base = EncoderProvider::hashing(8, 0);
    const SimulatedEncoder a(base, 3, 5), b(base, 3, 5), c(base, 3, 6);
    CHECK(a.embed("hello") == b.embed("hello"));
    CHECK(a.embed("hello") != c.embed("hello"));
    CHECK(SimulatedEncoder(base, 0, 5).embed("hello") == base.embed("hello"));
}

TEST_CASE("caches stay consistent under concurrent use") {
    EmbeddingCache cache;
    const auto enc = EncoderProvider::hashing(8, 0);
    std::atomic<int> computed{0};
    std::vector<std::thread> workers;
    for (int w = 0; w < 8; ++w) {
        workers.emplace_back([&, w] {
            for (int i = 0; i < 500; ++i) {
                const std::string key = "k" + std::to_string((i * 7 + w) % 50);
                const Vector v = cache.get(key, [&](const std::string& t) {
                    ++computed;
                    return enc.embed(t);
                });
                if (v != enc.embed(key)) std::abort();
            }
        });
    }
    for (auto& t : workers) t.join();
    const auto s = cache.stats();
    CHECK(s.lookups == 4000);
    CHECK(s.misses == 50);
    CHECK(s.hits + s.misses == s.lookups);
    CHECK(s.heavy_ops == 50);
    CHECK(cache.size() == 50);
    CHECK(computed >= 50);
    CHECK(s.resident_bytes == 50 * 8 * sizeof(double));
}
