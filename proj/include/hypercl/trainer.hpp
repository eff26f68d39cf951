#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypercl/checkpoint.hpp"
#include "hypercl/encoder.hpp"
#include "hypercl/error.hpp"
#include "hypercl/log.hpp"
#include "hypercl/losses.hpp"
#include "hypercl/model.hpp"
#include "hypercl/optim.hpp"

namespace hypercl {

enum class Task { csts, kgc };

inline std::string_view to_string(Task t) { return t == Task::csts ? "csts" : "kgc"; }

inline Task parse_task(std::string_view s) {
    if (s == "csts") return Task::csts;
    if (s == "kgc") return Task::kgc;
    throw DomainError("unknown task: " + std::string(s));
}

struct TrainConfig {
    Task task = Task::csts;
    HyperMode mode = HyperMode::full;
    std::size_t nh = 64;
    std::size_t nk = 0;  // 0 -> floor(nh / 12)
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    LossConfig loss;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool use_bias = true;
    double dropout_p = 0.1;
    std::string checkpoint_path;  // empty: no checkpoint

    std::size_t effective_nk() const { return mode == HyperMode::lowrank ? (nk == 0 ? default_rank(nh) : nk) : 0; }

    void validate() const {
        if (nh == 0) throw DomainError("nh must be positive");
        if (!(lr >= 0.0)) throw DomainError("lr must be >= 0");
        if (epochs == 0) throw DomainError("epochs must be positive");
        if (batch_size == 0) throw DomainError("batch_size must be positive");
        if (!(weight_decay >= 0.0)) throw DomainError("weight_decay must be >= 0");
        if (mode == HyperMode::lowrank && effective_nk() > nh) throw DomainError("nk must not exceed nh");
        loss.validate();
    }
};

inline void to_json(nlohmann::json& j, const LossConfig& c) {
    j = {{"tau_csts", c.tau_csts},         {"tau_kgc", c.tau_kgc},
         {"learn_tau_kgc", c.learn_tau_kgc}, {"gamma", c.gamma},
         {"use_cl", c.use_cl},             {"use_self_neg", c.use_self_neg},
         {"use_prebatch_neg", c.use_prebatch_neg}, {"prebatch_size", c.prebatch_size},
         {"label_min", c.label_min},       {"label_max", c.label_max}};
}

inline void from_json(const nlohmann::json& j, LossConfig& c) {
    c.tau_csts = j.value("tau_csts", c.tau_csts);
    c.tau_kgc = j.value("tau_kgc", c.tau_kgc);
    c.learn_tau_kgc = j.value("learn_tau_kgc", c.learn_tau_kgc);
    c.gamma = j.value("gamma", c.gamma);
    c.use_cl = j.value("use_cl", c.use_cl);
    c.use_self_neg = j.value("use_self_neg", c.use_self_neg);
    c.use_prebatch_neg = j.value("use_prebatch_neg", c.use_prebatch_neg);
    c.prebatch_size = j.value("prebatch_size", c.prebatch_size);
    c.label_min = j.value("label_min", c.label_min);
    c.label_max = j.value("label_max", c.label_max);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"task", std::string(to_string(c.task))},
         {"mode", std::string(to_string(c.mode))},
         {"nh", c.nh},
         {"nk", c.nk},
         {"lr", c.lr},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"loss", c.loss},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"eps", c.eps},
         {"weight_decay", c.weight_decay},
         {"use_bias", c.use_bias},
         {"dropout_p", c.dropout_p},
         {"checkpoint_path", c.checkpoint_path}};
}

/// Unknown keys are rejected so typos surface as config errors.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    static const std::vector<std::string> known = {"task", "mode", "nh", "nk", "lr", "epochs", "batch_size",
                                                   "seed", "loss", "beta1", "beta2", "eps", "weight_decay",
                                                   "use_bias", "dropout_p", "checkpoint_path"};
    if (!j.is_object()) throw FormatError("config: expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw FormatError("config: unknown field \"" + key + "\"");
        }
    }
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("mode")) c.mode = parse_hyper_mode(j.at("mode").get<std::string>());
    c.nh = j.value("nh", c.nh);
    c.nk = j.value("nk", c.nk);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("loss")) c.loss = j.at("loss").get<LossConfig>();
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.use_bias = j.value("use_bias", c.use_bias);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.checkpoint_path = j.value("checkpoint_path", c.checkpoint_path);
}

struct TrainReport {
    std::vector<double> epoch_losses;
    std::string checkpoint_path;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
    double final_tau_kgc = 0.0;
};

inline void to_json(nlohmann::json& j, const TrainReport& r) {
    j = {{"epoch_losses", r.epoch_losses},
         {"checkpoint_path", r.checkpoint_path},
         {"wall_ms", r.wall_ms},
         {"seed", r.seed},
         {"final_tau_kgc", r.final_tau_kgc}};
}

struct TrainResult {
    Model model;
    TrainReport report;
};

/// Raised when a loss turns non-finite mid-training.
class TrainingAborted : public NonFiniteError {
public:
    using NonFiniteError::NonFiniteError;
};

/// Fresh model for a config: seeded composer parameters plus the initial KGC temperature.
inline Model init_model(const TrainConfig& cfg) {
    Model m;
    InitOptions opts;
    opts.use_bias = cfg.use_bias;
    opts.dropout_p = cfg.dropout_p;
    m.net = init_params(cfg.mode, cfg.nh, cfg.effective_nk(), cfg.seed, opts);
    m.tau_kgc = cfg.loss.tau_kgc;
    m.learn_tau = cfg.task == Task::kgc && cfg.loss.learn_tau_kgc;
    return m;
}

namespace detail {

inline void check_finite(double loss, std::size_t epoch, std::size_t batch, const char* what) {
    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite " << what << " loss " << loss << " at epoch " << epoch << ", batch " << batch;
        throw TrainingAborted(msg.str());
    }
}

inline void finalize(const TrainConfig& cfg, TrainResult& result, std::chrono::steady_clock::time_point start) {
    if (!cfg.checkpoint_path.empty()) {
        save_checkpoint(result.model, cfg.checkpoint_path);
        result.report.checkpoint_path = cfg.checkpoint_path;
    }
    result.report.seed = cfg.seed;
    result.report.final_tau_kgc = result.model.tau_kgc;
    result.report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// Group C-STS items into twin instances (both twins of a pair_id together).
inline std::vector<std::vector<CstsQuadruplet>> group_twins(std::span<const CstsQuadruplet> items) {
    std::map<std::int64_t, std::vector<CstsQuadruplet>> by_id;
    std::vector<std::int64_t> order;
    for (const auto& q : items) {
        auto [it, inserted] = by_id.try_emplace(q.pair_id);
        if (inserted) order.push_back(q.pair_id);
        it->second.push_back(q);
    }
    std::vector<std::vector<CstsQuadruplet>> out;
    out.reserve(order.size());
    for (auto id : order) {
        if (by_id[id].size() != 2) {
            throw DomainError("C-STS pair_id " + std::to_string(id) + " has " + std::to_string(by_id[id].size()) +
                              " records; twins must come in pairs");
        }
        out.push_back(std::move(by_id[id]));
    }
    return out;
}

inline TrainResult train_csts(const TrainConfig& cfg, std::span<const CstsQuadruplet> data,
                              const EncoderProvider& encoder, std::optional<Model> initial = std::nullopt) {
    cfg.validate();
    if (data.empty()) throw DomainError("train: empty C-STS data");
    if (encoder.dim() != cfg.nh) throw DimensionError("train: encoder dim differs from nh");
    const auto start = std::chrono::steady_clock::now();
    const auto instances = group_twins(data);

    TrainResult result{initial ? *initial : init_model(cfg), {}};
    AdamW opt({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = derive_rng(cfg.seed, 2 * epoch + 1);
        Rng dropout_rng = derive_rng(cfg.seed, 2 * epoch + 2);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<CstsQuadruplet> batch;
            for (std::size_t i = begin; i < end; ++i) {
                const auto& inst = instances[order[i]];
                batch.insert(batch.end(), inst.begin(), inst.end());
            }
            Model grad = result.model.zeros_like();
            const double loss = csts_batch_loss(result.model, batch, encoder, cfg.loss, &grad, &dropout_rng);
            detail::check_finite(loss, epoch, batch_index, "C-STS");
            opt.step(result.model, grad);
            epoch_sum += loss * static_cast<double>(end - begin);
        }
        result.report.epoch_losses.push_back(epoch_sum / static_cast<double>(order.size()));
        log::info("epoch " + std::to_string(epoch) + " loss " + std::to_string(result.report.epoch_losses.back()));
    }
    detail::finalize(cfg, result, start);
    return result;
}

inline TrainResult train_kgc(const TrainConfig& cfg, std::span<const KgTriple> data, const EncoderProvider& encoder,
                             std::optional<Model> initial = std::nullopt) {
    cfg.validate();
    if (data.empty()) throw DomainError("train: empty KG data");
    if (encoder.dim() != cfg.nh) throw DimensionError("train: encoder dim differs from nh");
    const auto start = std::chrono::steady_clock::now();

    TrainResult result{initial ? *initial : init_model(cfg), {}};
    AdamW opt({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
    std::vector<KgTriple> triples(data.begin(), data.end());
    PrebatchQueue prebatch(cfg.loss.use_prebatch_neg ? cfg.loss.prebatch_size : 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = derive_rng(cfg.seed, 2 * epoch + 1);
        Rng dropout_rng = derive_rng(cfg.seed, 2 * epoch + 2);
        std::shuffle(triples.begin(), triples.end(), shuffle_rng);
        double epoch_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < triples.size(); begin += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(triples.size(), begin + cfg.batch_size);
            const std::span<const KgTriple> batch(triples.data() + begin, end - begin);
            Model grad = result.model.zeros_like();
            const double loss = kgc_batch_loss(result.model, batch, encoder, cfg.loss, prebatch, &grad, &dropout_rng);
            detail::check_finite(loss, epoch, batch_index, "KGC");
            opt.step(result.model, grad);
            std::vector<std::pair<std::string, Vector>> tails;
            for (const auto& t : batch) tails.emplace_back(t.tail, encoder.embed(t.tail));
            prebatch.push(std::move(tails));
            epoch_sum += loss * static_cast<double>(end - begin);
        }
        result.report.epoch_losses.push_back(epoch_sum / static_cast<double>(triples.size()));
        log::info("epoch " + std::to_string(epoch) + " loss " + std::to_string(result.report.epoch_losses.back()) +
                  " tau " + std::to_string(result.model.tau_kgc));
    }
    detail::finalize(cfg, result, start);
    return result;
}

}  // namespace hypercl
