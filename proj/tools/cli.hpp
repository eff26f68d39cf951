#pragma once

// Command-line surface. Every command is a function of (args, out, err) -> exit code so tests can
// drive it in-process.
//
// Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 runtime abort.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hypercl/hypercl.hpp"

namespace hypercl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitAbort = 3;

/// Bad flags, missing files, inconsistent options.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Paths for data, embeddings and the training config, as read from a run config file:
///
///   {"train": {TrainConfig fields}, "data": {"train": ..., "valid": ..., "eval": ..., "embeddings": ...},
///    "encoder": {"hash_seed": N}}
///
/// Relative paths resolve against the config file's directory. Without "embeddings" the hashing
/// encoder of dimension nh is used.
struct RunConfig {
    TrainConfig train;
    std::string train_data, valid_data, eval_data, embeddings;
    std::uint64_t hash_seed = 0;
};

namespace detail {

inline std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return p;
    const fs::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

inline void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " path not set");
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

inline std::string format_json(const json& j) { return j.dump(2) + "\n"; }

inline void emit(const std::string& path, const std::string& content, std::ostream& out) {
    if (path.empty()) {
        out << content;
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot write " + path);
    os << content;
}

inline std::string to_tsv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "\t" : "") << cells[i];
        os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
}

inline std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(10) << x;
    return os.str();
}

inline std::set<std::string> conditions_of(std::span<const CstsQuadruplet> items) {
    std::set<std::string> out;
    for (const auto& q : items) out.insert(q.condition);
    return out;
}

inline std::set<std::string> relations_of(std::span<const KgTriple> triples) {
    std::set<std::string> out;
    for (const auto& t : triples) out.insert(t.relation);
    return out;
}

inline std::vector<std::string> entities_of(std::span<const KgTriple> triples) {
    std::set<std::string> s;
    for (const auto& t : triples) {
        s.insert(t.head);
        s.insert(t.tail);
    }
    return {s.begin(), s.end()};
}

}  // namespace detail

inline RunConfig load_run_config(const std::string& path) {
    detail::require_file(path, "config");
    std::ifstream is(path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError(path + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (key != "train" && key != "data" && key != "encoder") throw FormatError(path + ": unknown field \"" + key + "\"");
    }
    RunConfig rc;
    const fs::path base = fs::path(path).parent_path();
    if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
    if (j.contains("data")) {
        const json& d = j.at("data");
        for (const auto& [key, _] : d.items()) {
            if (key != "train" && key != "valid" && key != "eval" && key != "embeddings") {
                throw FormatError(path + ": unknown data field \"" + key + "\"");
            }
        }
        rc.train_data = detail::resolve(base, d.value("train", std::string{}));
        rc.valid_data = detail::resolve(base, d.value("valid", std::string{}));
        rc.eval_data = detail::resolve(base, d.value("eval", std::string{}));
        rc.embeddings = detail::resolve(base, d.value("embeddings", std::string{}));
    }
    if (j.contains("encoder")) rc.hash_seed = j.at("encoder").value("hash_seed", rc.hash_seed);
    if (!rc.train.checkpoint_path.empty()) rc.train.checkpoint_path = detail::resolve(base, rc.train.checkpoint_path);
    return rc;
}

inline EncoderProvider make_encoder(const RunConfig& rc, std::size_t nh) {
    if (rc.embeddings.empty()) return EncoderProvider::hashing(nh, rc.hash_seed);
    detail::require_file(rc.embeddings, "embeddings");
    auto store = load_embeddings(rc.embeddings);
    if (store.dim() != nh) {
        throw DimensionError("embeddings have dim " + std::to_string(store.dim()) + " but nh is " + std::to_string(nh));
    }
    return EncoderProvider::from_store(std::move(store));
}

/// Flags shared by the model-facing commands. Unset optionals leave the config value alone.
struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<std::size_t> nh, nk;
    std::string out;

    void add_to(CLI::App& app, bool with_config = true) {
        if (with_config) app.add_option("--config", config, "run config JSON");
        app.add_option("--seed", seed, "random seed");
        app.add_option("--mode", mode, "full|lowrank|hadamard|concat");
        app.add_option("--nh", nh, "embedding dimension");
        app.add_option("--nk", nk, "low-rank dimension");
        app.add_option("--out", out, "output path");
    }

    RunConfig load() const {
        RunConfig rc = config.empty() ? RunConfig{} : load_run_config(config);
        if (seed) rc.train.seed = *seed;
        if (mode) rc.train.mode = parse_hyper_mode(*mode);
        if (nh) rc.train.nh = *nh;
        if (nk) rc.train.nk = *nk;
        return rc;
    }
};

// ---------------------------------------------------------------------------
// Training

inline TrainResult train_from_config(const RunConfig& rc, const EncoderProvider& encoder) {
    detail::require_file(rc.train_data, "training data");
    if (rc.train.task == Task::csts) return train_csts(rc.train, read_csts_jsonl(rc.train_data), encoder);
    return train_kgc(rc.train, read_kg_tsv(rc.train_data), encoder);
}

inline int cmd_train(const CommonFlags& flags, const std::string& report_path, std::ostream& out) {
    RunConfig rc = flags.load();
    if (!flags.out.empty()) rc.train.checkpoint_path = flags.out;
    rc.train.validate();
    detail::require_file(rc.train_data, "training data");
    const EncoderProvider encoder = make_encoder(rc, rc.train.nh);
    log::info("train: task " + std::string(to_string(rc.train.task)) + " mode " + std::string(to_string(rc.train.mode)) +
              " seed " + std::to_string(rc.train.seed));
    const TrainResult result = train_from_config(rc, encoder);
    json report = result.report;
    report["task"] = std::string(to_string(rc.train.task));
    report["mode"] = std::string(to_string(rc.train.mode));
    std::string path = report_path;
    if (path.empty() && !rc.train.checkpoint_path.empty()) path = rc.train.checkpoint_path + ".report.json";
    if (!path.empty()) detail::emit(path, detail::format_json(report), out);
    out << detail::format_json(report);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class Split { seen, unseen, overall };

inline Split parse_split(const std::string& s) {
    if (s == "seen") return Split::seen;
    if (s == "unseen") return Split::unseen;
    if (s == "overall") return Split::overall;
    throw UsageError("unknown split: " + s);
}

template <class Item>
std::vector<Item> select_split(Split split, const std::set<std::string>& train_conditions, std::span<const Item> items) {
    if (split == Split::overall) return {items.begin(), items.end()};
    auto [seen, unseen] = split_seen_unseen(train_conditions, items);
    return split == Split::seen ? seen : unseen;
}

/// Metric JSON for an already loaded model; shared by eval and sweep-rank.
inline json evaluate_to_json(const RunConfig& rc, const Model& model, const EncoderProvider& encoder, Split split) {
    detail::require_file(rc.eval_data, "eval data");
    const char* split_name = split == Split::seen ? "seen" : split == Split::unseen ? "unseen" : "overall";
    if (split != Split::overall) detail::require_file(rc.train_data, "training data (needed for seen/unseen)");
    json j;
    if (rc.train.task == Task::csts) {
        const auto items = read_csts_jsonl(rc.eval_data);
        std::set<std::string> train_conditions;
        if (!rc.train_data.empty() && split != Split::overall) {
            train_conditions = detail::conditions_of(read_csts_jsonl(rc.train_data));
        }
        const auto part = select_split<CstsQuadruplet>(split, train_conditions, items);
        j["split"] = split_name;
        j["count"] = part.size();
        if (part.size() < 2) {
            j["spearman"] = nullptr;
            j["pearson"] = nullptr;
            return j;
        }
        const auto m = evaluate_csts(model.net, encoder, part, rc.train.loss);
        j["spearman"] = m.spearman;
        j["pearson"] = m.pearson;
        return j;
    }
    const auto queries = read_kg_tsv(rc.eval_data);
    std::vector<KgTriple> known = queries;
    std::vector<KgTriple> train;
    if (!rc.train_data.empty() && fs::exists(rc.train_data)) train = read_kg_tsv(rc.train_data);
    known.insert(known.end(), train.begin(), train.end());
    if (!rc.valid_data.empty() && fs::exists(rc.valid_data)) {
        const auto valid = read_kg_tsv(rc.valid_data);
        known.insert(known.end(), valid.begin(), valid.end());
    }
    const auto part = select_split<KgTriple>(split, detail::relations_of(train), queries);
    j["split"] = split_name;
    j["count"] = part.size();
    if (part.empty()) {
        j["mrr"] = nullptr;
        j["hits"] = json::object();
        return j;
    }
    const auto entities = detail::entities_of(known);
    const auto ev = evaluate_kgc(model.net, encoder, part, entities, known);
    j["mrr"] = ev.combined.mrr;
    json hits = json::object();
    for (const auto& [k, v] : ev.combined.hits) hits[std::to_string(k)] = v;
    j["hits"] = hits;
    return j;
}

inline int cmd_eval(const CommonFlags& flags, const std::string& checkpoint, const std::string& split_name,
                    std::ostream& out) {
    const RunConfig rc = flags.load();
    const Split split = parse_split(split_name);
    detail::require_file(checkpoint, "checkpoint");
    const Model model = load_checkpoint(checkpoint);
    const EncoderProvider encoder = make_encoder(rc, model.net.nh);
    detail::emit(flags.out, detail::format_json(evaluate_to_json(rc, model, encoder, split)), out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Cache benchmark

inline std::vector<Request> read_requests_tsv(const std::string& path) {
    detail::require_file(path, "requests");
    std::ifstream is(path);
    std::vector<Request> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected sentence<TAB>condition");
        }
        out.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return out;
}

struct BenchFlags {
    std::string requests;
    std::size_t sentences = 0, conditions = 0;
    std::size_t depth = 12, repetitions = 3;
};

inline int cmd_bench_cache(const CommonFlags& flags, const BenchFlags& bf, std::ostream& out) {
    RunConfig rc = flags.load();
    std::vector<Request> requests =
        bf.requests.empty() ? full_cross_stream(bf.sentences, bf.conditions) : read_requests_tsv(bf.requests);
    if (requests.empty()) throw UsageError("bench-cache: empty workload (give --requests or --sentences/--conditions)");
    const std::size_t nh = rc.train.nh;
    const std::size_t nk = rc.train.nk == 0 ? default_rank(nh) : rc.train.nk;
    const EncoderProvider encoder = make_encoder(rc, nh);
    const HyperNetParams full = init_params(HyperMode::full, nh, 0, rc.train.seed);
    const HyperNetParams lowrank = init_params(HyperMode::lowrank, nh, nk, rc.train.seed);
    const std::vector<std::pair<std::string, const HyperNetParams*>> nets = {{"hyper-full", &full},
                                                                              {"hyper-lowrank", &lowrank}};
    BenchOptions opts;
    opts.repetitions = bf.repetitions;
    opts.encoder_depth = bf.depth;
    opts.seed = rc.train.seed;
    const auto rows = bench_report(requests, nets, encoder, opts);
    std::ostringstream os;
    write_bench_tsv(rows, os);
    detail::emit(flags.out, os.str(), out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Analysis

inline int cmd_analyze_clusters(const CommonFlags& flags, const std::string& checkpoint, std::size_t k,
                                std::size_t per_condition, std::ostream& out) {
    const RunConfig rc = flags.load();
    detail::require_file(checkpoint, "checkpoint");
    detail::require_file(rc.eval_data, "eval data");
    const Model model = load_checkpoint(checkpoint);
    const EncoderProvider encoder = make_encoder(rc, model.net.nh);
    const auto items = read_csts_jsonl(rc.eval_data);
    const auto sample = sample_condition_groups(items, per_condition, rc.train.seed);
    std::vector<Vector> before, after;
    std::vector<std::string> labels;
    for (const auto& [sentence, condition] : sample) {
        const Vector h_s = encoder.embed(sentence);
        before.push_back(h_s);
        after.push_back(compose(model.net, encoder.embed(condition), h_s));
        labels.push_back(condition);
    }
    if (k == 0) k = detail::conditions_of(items).size();
    if (k > before.size()) {
        throw UsageError("analyze clusters: k (" + std::to_string(k) + ") exceeds point count (" +
                         std::to_string(before.size()) + ")");
    }
    const auto rb = cluster_report(before, labels, k, rc.train.seed);
    const auto ra = cluster_report(after, labels, k, rc.train.seed);
    if (!flags.out.empty()) {
        for (const auto& [suffix, report] : {std::pair{".before.tsv", &rb}, std::pair{".after.tsv", &ra}}) {
            std::vector<std::vector<std::string>> rows;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                rows.push_back({sample[i].first, labels[i], std::to_string(report->assignments[i])});
            }
            detail::emit(flags.out + suffix, detail::to_tsv({"point_id", "condition", "cluster"}, rows), out);
        }
    }
    const json j = {{"impurity_before", rb.impurity}, {"impurity_after", ra.impurity}, {"k", k},
                    {"points", labels.size()}};
    out << detail::format_json(j);
    return kExitOk;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    detail::require_file(path, "conditions");
    std::ifstream is(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

inline int cmd_analyze_frobenius(const CommonFlags& flags, const std::string& checkpoint,
                                 const std::string& conditions_path, std::ostream& out) {
    const RunConfig rc = flags.load();
    detail::require_file(checkpoint, "checkpoint");
    const Model model = load_checkpoint(checkpoint);
    const EncoderProvider encoder = make_encoder(rc, model.net.nh);
    std::vector<std::string> conditions;
    if (!conditions_path.empty()) {
        conditions = read_lines(conditions_path);
    } else {
        detail::require_file(rc.eval_data, "eval data");
        const auto set = rc.train.task == Task::csts ? detail::conditions_of(read_csts_jsonl(rc.eval_data))
                                                     : detail::relations_of(read_kg_tsv(rc.eval_data));
        conditions.assign(set.begin(), set.end());
    }
    const auto r = frobenius_variance_report(model.net, encoder, conditions);
    const json j = {{"var_hyper", r.var_hyper}, {"var_diag", r.var_diag}, {"conditions", conditions.size()}};
    detail::emit(flags.out, detail::format_json(j), out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Rank sweep

inline std::vector<std::size_t> parse_divisors(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(item, &pos);
            if (pos != item.size() || v <= 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw UsageError("bad divisor: \"" + item + "\"");
        }
    }
    if (out.empty()) throw UsageError("no divisors given");
    return out;
}

inline int cmd_sweep_rank(const CommonFlags& flags, const std::string& divisors, std::ostream& out) {
    RunConfig rc = flags.load();
    rc.train.mode = HyperMode::lowrank;
    rc.train.checkpoint_path.clear();
    detail::require_file(rc.train_data, "training data");
    detail::require_file(rc.eval_data, "eval data");
    const EncoderProvider encoder = make_encoder(rc, rc.train.nh);
    const std::size_t nh = rc.train.nh;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t d : parse_divisors(divisors)) {
        if (nh % d != 0) log::warn("sweep-rank: nh " + std::to_string(nh) + " not divisible by " + std::to_string(d) +
                                   "; rounding nk down");
        const std::size_t nk = nh / d;
        if (nk == 0) {
            log::warn("sweep-rank: divisor " + std::to_string(d) + " gives nk = 0; skipped");
            continue;
        }
        rc.train.nk = nk;
        const TrainResult res = train_from_config(rc, encoder);
        const json m = evaluate_to_json(rc, res.model, encoder, Split::overall);
        const json& metric = rc.train.task == Task::csts ? m.at("spearman") : m.at("mrr");
        rows.push_back({std::to_string(nk), std::to_string(param_count(HyperMode::lowrank, nh, nk, rc.train.use_bias)),
                        metric.is_null() ? "nan" : detail::fmt(metric.get<double>())});
    }
    detail::emit(flags.out, detail::to_tsv({"nk", "param_count", "metric"}, rows), out);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckCase {
    HyperMode mode;
    Task task;
    GradientCheckReport report;
};

/// Central-difference check of the analytic gradients for {full, lowrank} x {C-STS, KGC} on small
/// synthetic batches. Each tensor gets `probes` random coordinates (all of them if it is smaller).
inline std::vector<GradcheckCase> run_gradcheck(std::size_t nh, std::size_t nk, std::size_t probes, double epsilon,
                                                std::uint64_t seed) {
    const auto csts = make_synthetic_csts(4, 4, nh, seed);
    const auto kg = make_synthetic_kg(32, 2, nh, seed);
    const auto csts_enc = EncoderProvider::from_store(csts.store);
    const auto kg_enc = EncoderProvider::from_store(kg.store);
    const std::vector<KgTriple> kg_batch(kg.train.begin(), kg.train.begin() + std::min<std::size_t>(6, kg.train.size()));
    LossConfig cfg;
    cfg.prebatch_size = 1;
    PrebatchQueue prebatch(1);
    {
        std::vector<std::pair<std::string, Vector>> tails;
        for (const auto& t : kg.valid) tails.emplace_back(t.tail, kg_enc.embed(t.tail));
        prebatch.push(std::move(tails));
    }

    std::vector<GradcheckCase> out;
    for (HyperMode mode : {HyperMode::full, HyperMode::lowrank}) {
        for (Task task : {Task::csts, Task::kgc}) {
            Model model;
            model.net = init_params(mode, nh, mode == HyperMode::lowrank ? nk : 0, seed);
            // move off the identity/near-zero init so every term is exercised
            Rng rng = derive_rng(seed, 17);
            for (auto& t : model.net.tensors()) {
                for (double& x : t.data) x += random_gaussian(1, rng, 0.05)[0];
            }
            model.tau_kgc = cfg.tau_kgc;
            model.learn_tau = task == Task::kgc;
            auto loss = [&](const Model& m) {
                return task == Task::csts ? csts_batch_loss(m, csts.items, csts_enc, cfg)
                                          : kgc_batch_loss(m, kg_batch, kg_enc, cfg, prebatch);
            };
            auto analytic = [&](const Model& m) {
                Model g = m.zeros_like();
                if (task == Task::csts) {
                    csts_batch_loss(m, csts.items, csts_enc, cfg, &g);
                } else {
                    kgc_batch_loss(m, kg_batch, kg_enc, cfg, prebatch, &g);
                }
                return g;
            };
            GradCheckOptions opts;
            opts.epsilon = epsilon;
            opts.seed = seed;
            opts.max_per_tensor = probes;
            out.push_back({mode, task, grad_check(loss, analytic, model, opts)});
        }
    }
    return out;
}

inline constexpr double kGradcheckThreshold = 1e-4;

inline int cmd_gradcheck(std::size_t nh, std::size_t nk, std::size_t probes, double epsilon, std::uint64_t seed,
                         std::ostream& out) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw UsageError("gradcheck: epsilon must lie in [1e-7, 1e-3]");
    if (probes == 0) throw UsageError("gradcheck: probes must be positive");
    const auto cases = run_gradcheck(nh, nk, probes, epsilon, seed);
    double worst = 0.0;
    for (const auto& c : cases) {
        out << "mode=" << to_string(c.mode) << " task=" << to_string(c.task) << " checked=" << c.report.checked
            << " max_rel_error=" << std::setprecision(6) << c.report.max_rel_error << " worst=" << c.report.worst_tensor
            << "[" << c.report.worst_index << "]\n";
        worst = std::max(worst, c.report.max_rel_error);
    }
    out << "max_rel_error=" << std::setprecision(6) << worst << (worst < kGradcheckThreshold ? " PASS" : " FAIL")
        << '\n';
    return worst < kGradcheckThreshold ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// Synthetic data

inline void write_synthetic_config(const fs::path& dir, Task task, std::size_t nh, std::uint64_t seed,
                                   const std::string& train, const std::string& valid, const std::string& eval) {
    TrainConfig tc;
    tc.task = task;
    tc.nh = nh;
    tc.seed = seed;
    tc.checkpoint_path = "model.ckpt";
    json data = {{"train", train}, {"eval", eval}, {"embeddings", "embeddings.jsonl"}};
    if (!valid.empty()) data["valid"] = valid;
    const json j = {{"train", tc}, {"data", data}};
    std::ofstream os(dir / "config.json");
    os << j.dump(2) << '\n';
}

inline int cmd_make_synthetic_csts(const std::string& dir, std::size_t n_pairs, std::size_t n_conditions,
                                   std::size_t nh, std::uint64_t seed, double test_fraction, std::ostream& out) {
    if (dir.empty()) throw UsageError("make-synthetic: --out DIR is required");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("make-synthetic: test fraction must be in (0, 1)");
    const auto syn = make_synthetic_csts(n_pairs, n_conditions, nh, seed);
    const auto [train, test] = split_csts_by_pair(syn.items, test_fraction, seed);
    fs::create_directories(dir);
    const fs::path d(dir);
    write_csts_jsonl(train, (d / "train.jsonl").string());
    write_csts_jsonl(test, (d / "test.jsonl").string());
    save_embeddings(syn.store, (d / "embeddings.jsonl").string());
    write_synthetic_config(d, Task::csts, nh, seed, "train.jsonl", "", "test.jsonl");
    out << detail::format_json({{"train", train.size()}, {"test", test.size()}, {"embeddings", syn.store.size()}});
    return kExitOk;
}

inline int cmd_make_synthetic_kg(const std::string& dir, std::size_t n_entities, std::size_t n_relations,
                                 std::size_t nh, std::uint64_t seed, std::ostream& out) {
    if (dir.empty()) throw UsageError("make-synthetic: --out DIR is required");
    const auto kg = make_synthetic_kg(n_entities, n_relations, nh, seed);
    fs::create_directories(dir);
    const fs::path d(dir);
    write_kg_tsv(kg.train, (d / "train.tsv").string());
    write_kg_tsv(kg.valid, (d / "valid.tsv").string());
    write_kg_tsv(kg.test, (d / "test.tsv").string());
    save_embeddings(kg.store, (d / "embeddings.jsonl").string());
    write_synthetic_config(d, Task::kgc, nh, seed, "train.tsv", "valid.tsv", "test.tsv");
    out << detail::format_json(
        {{"train", kg.train.size()}, {"valid", kg.valid.size()}, {"test", kg.test.size()}, {"embeddings", kg.store.size()}});
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Dispatch

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hypercl: condition-aware sentence embeddings with hypernetworks", "hypercl"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    std::string report_path;
    auto* train = app.add_subcommand("train", "train a model from a run config");
    train_flags.add_to(*train);
    train->add_option("--report", report_path, "TrainReport JSON path (default <checkpoint>.report.json)");

    CommonFlags eval_flags;
    std::string eval_checkpoint, split = "overall";
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_flags.add_to(*eval);
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
    eval->add_option("--split", split, "seen|unseen|overall");

    CommonFlags bench_flags;
    BenchFlags bf;
    auto* bench = app.add_subcommand("bench-cache", "time cached request streams");
    bench_flags.add_to(*bench);
    bench->add_option("--requests", bf.requests, "TSV of sentence<TAB>condition");
    bench->add_option("--sentences", bf.sentences, "full-cross sentences");
    bench->add_option("--conditions", bf.conditions, "full-cross conditions");
    bench->add_option("--depth", bf.depth, "simulated encoder depth");
    bench->add_option("--repetitions", bf.repetitions, "timed repetitions");

    auto* analyze = app.add_subcommand("analyze", "embedding analyses");
    analyze->require_subcommand(1);
    CommonFlags cluster_flags;
    std::string cluster_checkpoint;
    std::size_t k = 0, per_condition = 20;
    auto* clusters = analyze->add_subcommand("clusters", "k-means impurity before/after projection");
    cluster_flags.add_to(*clusters);
    clusters->add_option("--checkpoint", cluster_checkpoint, "checkpoint path")->required();
    clusters->add_option("--k", k, "cluster count (default: number of conditions)");
    clusters->add_option("--per-condition", per_condition, "sentences sampled per condition");
    CommonFlags frob_flags;
    std::string frob_checkpoint, conditions_path;
    auto* frob = analyze->add_subcommand("frobenius", "variance of operator Frobenius norms");
    frob_flags.add_to(*frob);
    frob->add_option("--checkpoint", frob_checkpoint, "checkpoint path")->required();
    frob->add_option("--conditions", conditions_path, "file with one condition per line");

    CommonFlags sweep_flags;
    std::string divisors = "1,4,8,12,16,24";
    auto* sweep = app.add_subcommand("sweep-rank", "train low-rank models over nk = nh / divisor");
    sweep_flags.add_to(*sweep);
    sweep->add_option("--divisors", divisors, "comma-separated divisors");

    std::size_t gc_nh = 16, gc_nk = 4, gc_probes = 100;
    double gc_eps = 1e-5;
    std::uint64_t gc_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
    gradcheck->add_option("--nh", gc_nh);
    gradcheck->add_option("--nk", gc_nk);
    gradcheck->add_option("--probes", gc_probes);
    gradcheck->add_option("--epsilon", gc_eps);
    gradcheck->add_option("--seed", gc_seed);

    auto* synth = app.add_subcommand("make-synthetic", "write a synthetic dataset");
    synth->require_subcommand(1);
    std::string syn_out;
    std::size_t syn_nh = 64, n_pairs = 500, n_conditions = 4, n_entities = 200, n_relations = 4;
    std::uint64_t syn_seed = 7;
    double test_fraction = 0.2;
    auto* syn_csts = synth->add_subcommand("csts", "conditional similarity quadruplets");
    syn_csts->add_option("--out", syn_out, "output directory")->required();
    syn_csts->add_option("--nh", syn_nh);
    syn_csts->add_option("--seed", syn_seed);
    syn_csts->add_option("--pairs", n_pairs);
    syn_csts->add_option("--conditions", n_conditions);
    syn_csts->add_option("--test-fraction", test_fraction);
    auto* syn_kg = synth->add_subcommand("kg", "knowledge-graph triples");
    syn_kg->add_option("--out", syn_out, "output directory")->required();
    syn_kg->add_option("--nh", syn_nh);
    syn_kg->add_option("--seed", syn_seed);
    syn_kg->add_option("--entities", n_entities);
    syn_kg->add_option("--relations", n_relations);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "hypercl: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*train) return cmd_train(train_flags, report_path, out);
        if (*eval) return cmd_eval(eval_flags, eval_checkpoint, split, out);
        if (*bench) return cmd_bench_cache(bench_flags, bf, out);
        if (*clusters) return cmd_analyze_clusters(cluster_flags, cluster_checkpoint, k, per_condition, out);
        if (*frob) return cmd_analyze_frobenius(frob_flags, frob_checkpoint, conditions_path, out);
        if (*sweep) return cmd_sweep_rank(sweep_flags, divisors, out);
        if (*gradcheck) return cmd_gradcheck(gc_nh, gc_nk, gc_probes, gc_eps, gc_seed, out);
        if (*syn_csts) {
            return cmd_make_synthetic_csts(syn_out, n_pairs, n_conditions, syn_nh, syn_seed, test_fraction, out);
        }
        if (*syn_kg) return cmd_make_synthetic_kg(syn_out, n_entities, n_relations, syn_nh, syn_seed, out);
    } catch (const NonFiniteError& e) {
        err << "hypercl: aborted: " << e.what() << '\n';
        return kExitAbort;
    } catch (const Error& e) {
        err << "hypercl: " << e.what() << '\n';
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "hypercl: config: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "hypercl: aborted: " << e.what() << '\n';
        return kExitAbort;
    }
    return kExitUsage;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace hypercl::cli
