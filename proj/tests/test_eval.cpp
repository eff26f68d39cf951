#include <catch_amalgamated.hpp>

#include <set>

#include "support.hpp"

using namespace hypercl;
using Catch::Approx;
using testing::gaussian;

namespace {

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// average rank by counting, O(n^2)
std::vector<double> ranks_oracle(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0, equal = 0;
        for (double v : x) {
            if (v < x[i]) ++less;
            if (v == x[i]) ++equal;
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

std::size_t rank_oracle(std::vector<std::pair<std::string, double>> scored, const std::string& gold,
                        const std::unordered_set<std::string>& filter) {
    std::erase_if(scored, [&](const auto& p) { return p.first != gold && filter.count(p.first); });
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    for (std::size_t i = 0; i < scored.size(); ++i) {
        if (scored[i].first == gold) return i + 1;
    }
    return 0;
}

std::vector<std::string> labels_of(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST_CASE("correlation examples") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    const std::vector<double> up = {2, 4, 6, 8, 10};
    const std::vector<double> down = {5, 4, 3, 2, 1};
    const std::vector<double> mono = {1, 8, 27, 64, 125};
    CHECK(pearson(x, up) == Approx(1.0).margin(1e-15));
    CHECK(pearson(x, down) == Approx(-1.0).margin(1e-15));
    CHECK(spearman(x, mono) == Approx(1.0).margin(1e-15));
    CHECK(pearson(x, mono) < 1.0);
    CHECK(spearman(x, down) == Approx(-1.0).margin(1e-15));
    CHECK(fractional_ranks(std::vector<double>{10, 20, 20, 30}) == std::vector<double>{1, 2.5, 2.5, 4});
    CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), DomainError);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("correlations match brute-force oracles") {
    Rng rng = make_rng(1);
    std::uniform_int_distribution<int> small(0, 9);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> x(50), y(50);
        for (std::size_t i = 0; i < 50; ++i) {
            // ties on purpose in half the lists
            x[i] = t % 2 ? small(rng) : gaussian(1, rng)[0];
            y[i] = 0.5 * x[i] + small(rng);
        }
        CHECK(pearson(x, y) == Approx(pearson_oracle(x, y)).margin(1e-12));
        CHECK(spearman(x, y) == Approx(pearson_oracle(ranks_oracle(x), ranks_oracle(y))).margin(1e-12));
    }
}

TEST_CASE("rank ties break by name") {
    const std::vector<std::pair<std::string, double>> scored = {{"b", 0.5}, {"a", 0.5}, {"c", 0.9}, {"d", 0.1}};
    CHECK(rank_gold(scored, "b", {}).rank == 3);
    CHECK(rank_gold(scored, "a", {}).rank == 2);
    CHECK(rank_gold(scored, "c", {}).rank == 1);
    CHECK(rank_gold(scored, "b", {"a", "c"}).rank == 1);
    CHECK(rank_gold(scored, "b", {"b"}).rank == 3);  // gold is never filtered
    CHECK(rank_gold(scored, "b", {"a"}).candidates == 3);
    CHECK_THROWS_AS(rank_gold(scored, "z", {}), DomainError);
}

TEST_CASE("ranking matches an exhaustive sort") {
    Rng rng = make_rng(2);
    std::uniform_int_distribution<int> score(0, 5);
    std::bernoulli_distribution coin(0.3);
    for (int t = 0; t < 300; ++t) {
        std::vector<std::pair<std::string, double>> scored;
        std::unordered_set<std::string> filter;
        for (int i = 0; i < 12; ++i) {
            const std::string name = "e" + std::to_string((i * 7 + t) % 12);
            scored.emplace_back(name, score(rng) / 5.0);
            if (coin(rng)) filter.insert(name);
        }
        const std::string gold = scored[static_cast<std::size_t>(t) % 12].first;
        CHECK(rank_gold(scored, gold, filter).rank == rank_oracle(scored, gold, filter));
    }
}

TEST_CASE("MRR and Hits") {
    const std::vector<RankingResult> rs = {{"q1", 1, 10}, {"q2", 2, 10}, {"q3", 4, 10}};
    const std::vector<std::size_t> ks = {1, 3, 10};
    const auto m = mrr_hits(rs, ks);
    CHECK(m.mrr == Approx((1.0 + 0.5 + 0.25) / 3.0).margin(1e-15));
    CHECK(m.hits.at(1) == Approx(1.0 / 3.0));
    CHECK(m.hits.at(3) == Approx(2.0 / 3.0));
    CHECK(m.hits.at(10) == 1.0);
    CHECK(m.count == 3);
    CHECK_THROWS_AS(mrr_hits(std::vector<RankingResult>{}, ks), DomainError);
    CHECK_THROWS_AS(mrr_hits(std::vector<RankingResult>{{"q", 0, 1}}, ks), DomainError);
}

TEST_CASE("KGC evaluation averages head and tail") {
    // Hadamard with a constant-one relation: conditioned head equals the raw head
    EmbeddingStore store(2);
    store.insert("r", Vector{1, 1});
    store.insert("a", Vector{1, 0});
    store.insert("b", Vector{0.8, 0.6});
    store.insert("c", Vector{0, 1});
    const auto enc = EncoderProvider::from_store(store);
    const auto params = init_params(HyperMode::hadamard, 2, 0, 0);
    const std::vector<std::string> entities = {"a", "b", "c"};
    const std::vector<KgTriple> queries = {{"a", "r", "c"}};
    const auto ev = evaluate_kgc(params, enc, queries, entities, queries);
    // tail: scores a 1, b 0.8, c 0 -> c is 3rd; head for (?, r, c): c 1, b 0.6, a 0 -> a is 3rd
    CHECK(ev.tail_results[0].rank == 3);
    CHECK(ev.head_results[0].rank == 3);
    CHECK(ev.combined.mrr == Approx(1.0 / 3.0));
    // filtering a known tail moves the gold up
    const std::vector<KgTriple> known = {{"a", "r", "c"}, {"a", "r", "a"}};
    const auto filtered = evaluate_kgc(params, enc, queries, entities, known);
    CHECK(filtered.tail_results[0].rank == 2);
    CHECK(filtered.combined.mrr == Approx((0.5 + 1.0 / 3.0) / 2.0));
    CHECK_THROWS_AS(evaluate_kgc(params, enc, std::vector<KgTriple>{}, entities, known), DomainError);
    const std::vector<KgTriple> stray = {{"a", "r", "zz"}};
    CHECK_THROWS_AS(evaluate_kgc(params, enc, stray, entities, known), DomainError);
}

TEST_CASE("seen and unseen splits partition the data") {
    const std::vector<CstsQuadruplet> items = {
        {"a", "b", "c1", 1, 0}, {"a", "b", "c2", 2, 0}, {"x", "y", "c3", 3, 1}, {"x", "y", "c1", 4, 1}};
    const auto [seen, unseen] = split_seen_unseen(std::set<std::string>{"c1", "c2"}, items);
    CHECK(seen.size() == 3);
    CHECK(unseen.size() == 1);
    CHECK(unseen[0].condition == "c3");
    const std::vector<KgTriple> triples = {{"h", "r1", "t"}, {"h", "r2", "t"}};
    const auto [ks, ku] = split_seen_unseen(std::set<std::string>{"r2"}, triples);
    CHECK(ks.size() == 1);
    CHECK(ku.size() == 1);
    CHECK(ks[0].relation == "r2");
}

TEST_CASE("C-STS evaluation agrees with the predictions") {
    const auto d = make_synthetic_csts(30, 2, 8, 5);
    const auto enc = EncoderProvider::from_store(d.store);
    const auto params = init_params(HyperMode::lowrank, 8, 2, 3);
    const auto pred = predict_csts(params, enc, d.items);
    std::vector<double> gold;
    for (const auto& q : d.items) gold.push_back(q.label);
    const auto m = evaluate_csts(params, enc, d.items);
    CHECK(m.count == d.items.size());
    CHECK(m.spearman == spearman(pred, gold));
    CHECK(m.pearson == pearson(pred, gold));
    for (double p : pred) {
        // cosine in [-1, 1] through the affine label map
        CHECK(p >= -3.0 - 1e-12);
        CHECK(p <= 5.0 + 1e-12);
    }
}

TEST_CASE("k-means examples") {
    const std::vector<Vector> pts = {Vector{0, 0}, Vector{0.1, 0}, Vector{10, 10}, Vector{10, 10.1}};
    const auto r = kmeans(pts, 2, 1);
    CHECK(r.assignments[0] == r.assignments[1]);
    CHECK(r.assignments[2] == r.assignments[3]);
    CHECK(r.assignments[0] != r.assignments[2]);
    CHECK(r.inertia == Approx(0.01).margin(1e-12));
    CHECK(kmeans(pts, 4, 1).inertia == 0.0);
    CHECK(kmeans(pts, 2, 7).assignments == kmeans(pts, 2, 7).assignments);
    CHECK_THROWS_AS(kmeans(pts, 5, 0), DomainError);
    CHECK_THROWS_AS(kmeans(pts, 0, 0), DomainError);
    // coincident points
    const std::vector<Vector> same(5, Vector{1, 1});
    CHECK(kmeans(same, 3, 0).inertia == 0.0);
}

TEST_CASE("impurity") {
    const std::vector<std::size_t> pure = {0, 0, 1, 1};
    const auto lab = labels_of({"x", "x", "y", "y"});
    CHECK(impurity(pure, lab) == 0.0);
    const std::vector<std::size_t> mixed = {0, 1, 0, 1};
    CHECK(impurity(mixed, lab) == Approx(std::log(2.0)).margin(1e-15));
    // k groups spread evenly over k clusters
    std::vector<std::size_t> spread;
    std::vector<std::string> groups;
    for (int g = 0; g < 3; ++g) {
        for (int c = 0; c < 3; ++c) {
            spread.push_back(static_cast<std::size_t>(c));
            groups.push_back("g" + std::to_string(g));
        }
    }
    CHECK(impurity(spread, groups) == Approx(std::log(3.0)).margin(1e-12));
    CHECK_THROWS_AS(impurity(std::vector<std::size_t>{}, std::vector<std::string>{}), DomainError);

    // counting oracle
    Rng rng = make_rng(3);
    std::uniform_int_distribution<std::size_t> cl(0, 3), gr(0, 4);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::size_t> a(40);
        std::vector<std::string> l(40);
        for (std::size_t i = 0; i < 40; ++i) {
            a[i] = cl(rng);
            l[i] = "g" + std::to_string(gr(rng));
        }
        double expected = 0.0;
        for (std::size_t g = 0; g < 5; ++g) {
            const std::string name = "g" + std::to_string(g);
            double ci = 0;
            std::vector<double> lij(4, 0.0);
            for (std::size_t i = 0; i < 40; ++i) {
                if (l[i] == name) {
                    ++ci;
                    ++lij[a[i]];
                }
            }
            for (double x : lij) {
                if (x > 0) expected -= (ci / 40.0) * (x / ci) * std::log(x / ci);
            }
        }
        CHECK(impurity(a, l) == Approx(expected).margin(1e-12));
    }
}

TEST_CASE("condition group sampling") {
    std::vector<CstsQuadruplet> items;
    for (int p = 0; p < 30; ++p) {
        const std::string s1 = "s" + std::to_string(2 * p), s2 = "s" + std::to_string(2 * p + 1);
        items.push_back({s1, s2, "c" + std::to_string(p % 3), 3.0, p});
        items.push_back({s1, s2, "c" + std::to_string((p + 1) % 3), 2.0, p});
    }
    const auto groups = sample_condition_groups(items, 5, 1);
    CHECK(groups.size() == 15);
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& [s, c] : groups) seen[c].insert(s);
    for (const auto& [c, ss] : seen) CHECK(ss.size() == 5);
    CHECK(groups.front().second == "c0");
    CHECK(groups == sample_condition_groups(items, 5, 1));
    CHECK(groups != sample_condition_groups(items, 5, 2));
    // capped by what exists: each condition appears in 20 pairs, 40 sentences
    CHECK(sample_condition_groups(items, 100, 1).size() == 120);
}

TEST_CASE("cluster report keeps the best restart") {
    Rng rng = make_rng(4);
    std::vector<Vector> pts;
    std::vector<std::string> labels;
    for (int g = 0; g < 3; ++g) {
        for (int i = 0; i < 15; ++i) {
            Vector v = gaussian(3, rng, 0.05);
            v[static_cast<std::size_t>(g)] += 1.0;
            pts.push_back(v);
            labels.push_back("g" + std::to_string(g));
        }
    }
    const auto r = cluster_report(pts, labels, 3, 9);
    CHECK(r.impurity == Approx(0.0).margin(1e-12));
    CHECK(r.k == 3);
    const auto single = cluster_report(pts, labels, 1, 9);
    CHECK(single.impurity == 0.0);
    CHECK_THROWS_AS(cluster_report(pts, labels, 3, 9, 0), DomainError);
}

TEST_CASE("operator norms") {
    Rng rng = make_rng(5);
    const Matrix w1 = testing::gaussian(6, 2, rng), w2 = testing::gaussian(6, 2, rng);
    CHECK(factored_frobenius_norm(w1, w2) == Approx(frobenius_norm(matmul_transposed_rhs(w1, w2))).epsilon(1e-12));
    const auto op = ConditionOperator::factored(w1, w2);
    CHECK(operator_norm_normalized(op) == Approx(frobenius_norm(densify(op)) / std::sqrt(24.0)).epsilon(1e-12));
    CHECK(operator_norm_normalized(ConditionOperator::dense(Matrix::identity(4))) == Approx(0.5).margin(1e-15));
    const Vector h{3, 4, 0, 0};
    CHECK(operator_norm_normalized(ConditionOperator::diagonal(h)) == Approx(2.5).margin(1e-15));
}

TEST_CASE("Frobenius variance report") {
    EmbeddingStore store(4);
    store.insert("one", Vector{1, 0, 0, 0});
    store.insert("two", Vector{0, 2, 0, 0});
    const auto enc = EncoderProvider::from_store(store);
    const auto params = init_params(HyperMode::full, 4, 0, 1);
    const std::vector<std::string> one = {"one"};
    const auto single = frobenius_variance_report(params, enc, one);
    CHECK(single.var_hyper == 0.0);
    CHECK(single.var_diag == 0.0);
    const std::vector<std::string> both = {"one", "two"};
    const auto r = frobenius_variance_report(params, enc, both);
    CHECK(r.diag_norms[0] == Approx(0.5));
    CHECK(r.diag_norms[1] == Approx(1.0));
    CHECK(r.var_diag == Approx(0.0625).margin(1e-15));
    CHECK(r.hyper_norms.size() == 2);
    CHECK_THROWS_AS(frobenius_variance_report(params, enc, std::vector<std::string>{}), DomainError);
    CHECK_THROWS_AS(frobenius_variance_report(init_params(HyperMode::hadamard, 4, 0, 0), enc, both), DomainError);
}
