#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace hypercl;
using Catch::Approx;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(std::move(args), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void patch_config(const std::string& path, const json& train_patch) {
    json j = json::parse(slurp(path));
    j["train"].merge_patch(train_patch);
    std::ofstream(path) << j.dump(2);
}

/// Small synthetic C-STS directory with a 2-epoch config.
struct CstsDir {
    testing::TempDir dir{"cli-csts"};
    std::string config;

    CstsDir() {
        const auto r = run_cli({"make-synthetic", "csts", "--out", dir.path().string(), "--pairs", "40", "--conditions",
                                "4", "--nh", "16", "--seed", "3"});
        REQUIRE(r.code == cli::kExitOk);
        config = dir.file("config.json");
        patch_config(config, {{"epochs", 2}, {"batch_size", 8}});
    }
};

struct KgDir {
    testing::TempDir dir{"cli-kg"};
    std::string config;

    KgDir() {
        const auto r = run_cli({"make-synthetic", "kg", "--out", dir.path().string(), "--entities", "40", "--relations",
                                "2", "--nh", "16", "--seed", "5"});
        REQUIRE(r.code == cli::kExitOk);
        config = dir.file("config.json");
        patch_config(config, {{"epochs", 2}, {"batch_size", 8}, {"mode", "lowrank"}, {"nk", 4}});
    }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli({}).code == cli::kExitUsage);
    CHECK(run_cli({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run_cli({"train", "--bogus"}).code == cli::kExitUsage);
    CHECK(run_cli({"--help"}).code == cli::kExitOk);
    CHECK(run_cli({"eval"}).code == cli::kExitUsage);  // --checkpoint is required
}

TEST_CASE("missing inputs exit with 2") {
    testing::TempDir tmp("cli-missing");
    const std::string cfg = tmp.file("config.json");
    std::ofstream(cfg) << R"({"train": {"nh": 8}, "data": {"train": "nope.jsonl"}})";
    const auto r = run_cli({"train", "--config", cfg});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("nope.jsonl") != std::string::npos);
    CHECK(run_cli({"train", "--config", tmp.file("absent.json")}).code == cli::kExitUsage);

    std::ofstream(cfg) << R"({"train": {"nh": 8}, "dataset": {}})";
    CHECK(run_cli({"train", "--config", cfg}).code == cli::kExitUsage);
    std::ofstream(cfg) << R"({"train": {"nh": 8, "lr": "fast"}})";
    CHECK(run_cli({"train", "--config", cfg}).code == cli::kExitUsage);
}

TEST_CASE("train writes a checkpoint and a report; reruns are identical") {
    CstsDir d;
    const std::string ckpt = d.dir.file("a.ckpt");
    const auto r1 = run_cli({"train", "--config", d.config, "--out", ckpt});
    REQUIRE(r1.code == cli::kExitOk);
    CHECK(slurp(ckpt).substr(0, 8) == "HYPERCL1");
    const json report = json::parse(slurp(ckpt + ".report.json"));
    CHECK(report.at("epoch_losses").size() == 2);
    CHECK(report.at("mode") == "full");

    const std::string ckpt2 = d.dir.file("b.ckpt");
    const auto r2 = run_cli({"train", "--config", d.config, "--out", ckpt2});
    REQUIRE(r2.code == cli::kExitOk);
    CHECK(json::parse(slurp(ckpt2 + ".report.json")).at("epoch_losses") == report.at("epoch_losses"));
    CHECK(slurp(ckpt) == slurp(ckpt2));

    // command-line flags override the config
    const auto r3 = run_cli({"train", "--config", d.config, "--out", d.dir.file("c.ckpt"), "--mode", "lowrank",
                             "--nk", "2", "--seed", "4"});
    REQUIRE(r3.code == cli::kExitOk);
    const Model m = load_checkpoint(d.dir.file("c.ckpt"));
    CHECK(m.net.mode == HyperMode::lowrank);
    CHECK(m.net.nk == 2);
    CHECK(run_cli({"train", "--config", d.config, "--mode", "dense"}).code == cli::kExitUsage);
    CHECK(run_cli({"train", "--config", d.config, "--nh", "8"}).code == cli::kExitUsage);
}

TEST_CASE("eval reports the library metrics and partitions the split") {
    CstsDir d;
    const std::string ckpt = d.dir.file("m.ckpt");
    REQUIRE(run_cli({"train", "--config", d.config, "--out", ckpt}).code == cli::kExitOk);
    const auto overall = run_cli({"eval", "--config", d.config, "--checkpoint", ckpt});
    REQUIRE(overall.code == cli::kExitOk);
    const json j = json::parse(overall.out);
    CHECK(j.at("split") == "overall");

    const auto test = read_csts_jsonl(d.dir.file("test.jsonl"));
    const auto store = load_embeddings(d.dir.file("embeddings.jsonl"));
    const auto lib = evaluate_csts(load_checkpoint(ckpt).net, EncoderProvider::from_store(store), test);
    CHECK(j.at("spearman").get<double>() == Approx(lib.spearman).margin(1e-12));
    CHECK(j.at("pearson").get<double>() == Approx(lib.pearson).margin(1e-12));
    CHECK(j.at("count") == test.size());

    const json seen = json::parse(run_cli({"eval", "--config", d.config, "--checkpoint", ckpt, "--split", "seen"}).out);
    const json unseen =
        json::parse(run_cli({"eval", "--config", d.config, "--checkpoint", ckpt, "--split", "unseen"}).out);
    CHECK(seen.at("count").get<std::size_t>() + unseen.at("count").get<std::size_t>() == test.size());
    CHECK(unseen.at("spearman").is_null());

    CHECK(run_cli({"eval", "--config", d.config, "--checkpoint", ckpt, "--split", "all"}).code == cli::kExitUsage);
    const std::string junk = d.dir.file("junk.ckpt");
    std::ofstream(junk) << "NOTACKPT and some bytes";
    CHECK(run_cli({"eval", "--config", d.config, "--checkpoint", junk}).code == cli::kExitUsage);
    CHECK(run_cli({"eval", "--config", d.config, "--checkpoint", d.dir.file("missing.ckpt")}).code ==
          cli::kExitUsage);
}

TEST_CASE("KGC train and eval") {
    KgDir d;
    const std::string ckpt = d.dir.file("kg.ckpt");
    REQUIRE(run_cli({"train", "--config", d.config, "--out", ckpt}).code == cli::kExitOk);
    const auto r = run_cli({"eval", "--config", d.config, "--checkpoint", ckpt});
    REQUIRE(r.code == cli::kExitOk);
    const json j = json::parse(r.out);
    const double mrr = j.at("mrr").get<double>();
    CHECK(mrr > 0.0);
    CHECK(mrr <= 1.0);
    CHECK(j.at("hits").contains("10"));
    CHECK(j.at("hits").at("1").get<double>() <= j.at("hits").at("10").get<double>());

    const auto train = read_kg_tsv(d.dir.file("train.tsv"));
    const auto valid = read_kg_tsv(d.dir.file("valid.tsv"));
    const auto test = read_kg_tsv(d.dir.file("test.tsv"));
    std::vector<KgTriple> known = test;
    known.insert(known.end(), train.begin(), train.end());
    known.insert(known.end(), valid.begin(), valid.end());
    std::set<std::string> ents;
    for (const auto& t : known) {
        ents.insert(t.head);
        ents.insert(t.tail);
    }
    const std::vector<std::string> entities(ents.begin(), ents.end());
    const auto ev = evaluate_kgc(load_checkpoint(ckpt).net,
                                 EncoderProvider::from_store(load_embeddings(d.dir.file("embeddings.jsonl"))), test,
                                 entities, known);
    CHECK(mrr == Approx(ev.combined.mrr).margin(1e-12));
}

TEST_CASE("bench-cache") {
    testing::TempDir tmp("cli-bench");
    const std::string out = tmp.file("bench.tsv");
    const auto r = run_cli({"bench-cache", "--sentences", "10", "--conditions", "5", "--nh", "16", "--nk", "4",
                            "--depth", "2", "--repetitions", "1", "--out", out});
    REQUIRE(r.code == cli::kExitOk);
    std::istringstream is(slurp(out));
    std::string line;
    std::getline(is, line);
    std::map<std::string, std::vector<std::string>> rows;
    while (std::getline(is, line)) {
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, '\t')) cols.push_back(c);
        rows[cols[0]] = cols;
    }
    REQUIRE(rows.size() == 4);
    CHECK(rows["tri"][2] == "15");
    CHECK(std::stod(rows["tri"][6]) == Approx(0.85));
    CHECK(rows["bi"][2] == "50");
    const auto sim = simulate_workload({Architecture::hyper, full_cross_stream(10, 5)}, 16, 4);
    CHECK(rows["hyper-lowrank"][7] == std::to_string(sim.resident_bytes));
    CHECK(rows["hyper-lowrank"][4] == std::to_string(sim.hits));

    // a request file
    const std::string req = tmp.file("req.tsv");
    std::ofstream(req) << "a\tc1\nb\tc1\na\tc2\n";
    CHECK(run_cli({"bench-cache", "--requests", req, "--nh", "8", "--depth", "1", "--repetitions", "1"}).code ==
          cli::kExitOk);

    CHECK(run_cli({"bench-cache", "--nh", "8"}).code == cli::kExitUsage);
    const std::string empty = tmp.file("empty.tsv");
    std::ofstream(empty) << "";
    CHECK(run_cli({"bench-cache", "--requests", empty, "--nh", "8"}).code == cli::kExitUsage);
}

TEST_CASE("analyze clusters and frobenius") {
    CstsDir d;
    const std::string ckpt = d.dir.file("m.ckpt");
    REQUIRE(run_cli({"train", "--config", d.config, "--out", ckpt}).code == cli::kExitOk);
    const std::string base = d.dir.file("clusters");
    const auto r = run_cli({"analyze", "clusters", "--config", d.config, "--checkpoint", ckpt, "--per-condition", "5",
                            "--out", base});
    REQUIRE(r.code == cli::kExitOk);
    const json j = json::parse(r.out);
    CHECK(j.at("k") == 4);
    CHECK(j.at("impurity_before").get<double>() >= 0.0);
    CHECK(j.at("impurity_before").get<double>() <= std::log(4.0) + 1e-12);
    const std::string before = slurp(base + ".before.tsv");
    CHECK(before.rfind("point_id\tcondition\tcluster\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(before.begin(), before.end(), '\n')) ==
          j.at("points").get<std::size_t>() + 1);
    CHECK(run_cli({"analyze", "clusters", "--config", d.config, "--checkpoint", ckpt, "--k", "1000"}).code ==
          cli::kExitUsage);

    const auto f = run_cli({"analyze", "frobenius", "--config", d.config, "--checkpoint", ckpt});
    REQUIRE(f.code == cli::kExitOk);
    CHECK(json::parse(f.out).at("conditions") == 4);
    const std::string one = d.dir.file("one.txt");
    std::ofstream(one) << "condition 0\n";
    const json single =
        json::parse(run_cli({"analyze", "frobenius", "--config", d.config, "--checkpoint", ckpt, "--conditions", one}).out);
    CHECK(single.at("var_hyper") == 0.0);
    CHECK(single.at("var_diag") == 0.0);
}

TEST_CASE("sweep-rank") {
    CstsDir d;
    const std::string out = d.dir.file("sweep.tsv");
    const auto r = run_cli({"sweep-rank", "--config", d.config, "--divisors", "1,4,32", "--out", out});
    REQUIRE(r.code == cli::kExitOk);
    std::istringstream is(slurp(out));
    std::string line;
    std::getline(is, line);
    CHECK(line == "nk\tparam_count\tmetric");
    std::vector<std::pair<std::size_t, std::size_t>> rows;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::size_t nk = 0, pc = 0;
        ss >> nk >> pc;
        rows.emplace_back(nk, pc);
    }
    // divisor 32 gives nk = 0 and is skipped
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].first == 16);
    CHECK(rows[1].first == 4);
    CHECK(rows[0].second == param_count(HyperMode::lowrank, 16, 16));
    CHECK(rows[0].second > rows[1].second);
    CHECK(run_cli({"sweep-rank", "--config", d.config, "--divisors", "a,b"}).code == cli::kExitUsage);
}

TEST_CASE("gradcheck") {
    const auto r = run_cli({"gradcheck", "--nh", "8", "--nk", "2", "--probes", "10"});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find(" PASS") != std::string::npos);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 5);
    CHECK(run_cli({"gradcheck", "--nh", "8", "--nk", "2", "--probes", "10"}).out == r.out);
    const auto bad = run_cli({"gradcheck", "--epsilon", "0"});
    CHECK(bad.code == cli::kExitUsage);
    CHECK(bad.err == run_cli({"gradcheck", "--epsilon", "0"}).err);
    CHECK(run_cli({"gradcheck", "--probes", "0"}).code == cli::kExitUsage);
}

TEST_CASE("make-synthetic rejects bad shapes") {
    testing::TempDir tmp("cli-syn");
    CHECK(run_cli({"make-synthetic", "csts", "--out", tmp.file("a"), "--nh", "10", "--conditions", "4"}).code ==
          cli::kExitUsage);
    CHECK(run_cli({"make-synthetic", "csts", "--out", tmp.file("b"), "--test-fraction", "1.5"}).code ==
          cli::kExitUsage);
    CHECK(run_cli({"make-synthetic", "kg", "--out", tmp.file("c"), "--relations", "1"}).code == cli::kExitUsage);
}
