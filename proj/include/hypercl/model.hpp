#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hypercl/encoder.hpp"
#include "hypercl/hypernet.hpp"
#include "hypercl/losses.hpp"

namespace hypercl {

/// Everything the trainer updates: the composer parameters and the KGC temperature.
struct Model {
    HyperNetParams net;
    double tau_kgc = 0.05;
    bool learn_tau = false;

    std::vector<TensorRef> tensors() {
        auto out = net.tensors();
        if (learn_tau) out.push_back({"tau_kgc", {1}, std::span<double>(&tau_kgc, 1)});
        return out;
    }

    Model zeros_like() const {
        Model z;
        z.net = net.zeros_like();
        z.tau_kgc = 0.0;
        z.learn_tau = learn_tau;
        return z;
    }

    friend bool operator==(const Model&, const Model&) = default;
};

/// Conditioned embedding for inference (no dropout).
inline Vector compose(const HyperNetParams& p, const Vector& h_c, const Vector& h_s) {
    switch (p.mode) {
        case HyperMode::full:
        case HyperMode::lowrank: return project(generate_condition_matrix(p, h_c), h_s);
        case HyperMode::hadamard: return hadamard_compose(h_c, h_s);
        case HyperMode::concat: return concat_compose(p, h_c, h_s);
    }
    return {};
}

/// Runs the composer over a batch, generating each condition's operator once, and remembers
/// what it needs to backpropagate into the parameters.
class BatchComposer {
public:
    BatchComposer(const HyperNetParams& params, const EncoderProvider& encoder, Rng* dropout_rng = nullptr)
        : params_(params), encoder_(encoder), rng_(dropout_rng) {
        if (encoder.dim() != params.nh) {
            throw DimensionError("encoder dim " + std::to_string(encoder.dim()) + " != nh " +
                                 std::to_string(params.nh));
        }
    }

    /// Returns the index of the new record; the output is `output(id)`.
    std::size_t forward(const std::string& condition, const std::string& sentence) {
        const Vector& h_c = condition_embedding(condition);
        Record rec;
        rec.condition = condition;
        rec.h_s = encoder_.embed(sentence);
        switch (params_.mode) {
            case HyperMode::full:
            case HyperMode::lowrank:
                rec.output = project(operator_for(condition), rec.h_s);
                break;
            case HyperMode::hadamard:
                rec.output = hadamard_compose(h_c, rec.h_s);
                break;
            case HyperMode::concat: {
                auto fwd = concat_forward(params_, h_c, rec.h_s, rng_ != nullptr, rng_);
                rec.output = fwd.output;
                rec.concat_input = std::move(fwd.input);
                break;
            }
        }
        records_.push_back(std::move(rec));
        return records_.size() - 1;
    }

    const Vector& output(std::size_t id) const { return records_.at(id).output; }
    const Vector& sentence_embedding(std::size_t id) const { return records_.at(id).h_s; }

    void backward(std::size_t id, const Vector& grad_out) {
        const Record& rec = records_.at(id);
        switch (params_.mode) {
            case HyperMode::full:
            case HyperMode::lowrank: {
                const ConditionOperator& op = operators_.at(rec.condition);
                auto it = op_grads_.find(rec.condition);
                if (it == op_grads_.end()) it = op_grads_.emplace(rec.condition, zero_operator_like(op)).first;
                project_backward(op, rec.h_s, grad_out, it->second);
                break;
            }
            case HyperMode::concat:
                pending_concat_.emplace_back(id, grad_out);
                break;
            case HyperMode::hadamard:
                break;
        }
    }

    /// Flush accumulated gradients into `grad`, in a fixed (condition-sorted) order.
    void finish(HyperNetParams& grad) {
        for (const auto& [cond, gop] : op_grads_) {
            generate_condition_matrix_backward(params_, condition_embeddings_.at(cond), gop, grad);
        }
        op_grads_.clear();
        for (const auto& [id, g] : pending_concat_) {
            add_outer(grad.Wcat, g.values(), records_[id].concat_input.values());
        }
        pending_concat_.clear();
    }

    std::size_t distinct_conditions() const noexcept { return condition_embeddings_.size(); }

private:
    struct Record {
        std::string condition;
        Vector h_s;
        Vector output;
        Vector concat_input;
    };

    const Vector& condition_embedding(const std::string& condition) {
        auto it = condition_embeddings_.find(condition);
        if (it == condition_embeddings_.end()) {
            it = condition_embeddings_.emplace(condition, encoder_.embed(condition)).first;
        }
        return it->second;
    }

    const ConditionOperator& operator_for(const std::string& condition) {
        auto it = operators_.find(condition);
        if (it == operators_.end()) {
            it = operators_.emplace(condition, generate_condition_matrix(params_, condition_embedding(condition))).first;
        }
        return it->second;
    }

    const HyperNetParams& params_;
    const EncoderProvider& encoder_;
    Rng* rng_;
    std::map<std::string, Vector> condition_embeddings_;
    std::map<std::string, ConditionOperator> operators_;
    std::map<std::string, ConditionOperator> op_grads_;
    std::vector<std::pair<std::size_t, Vector>> pending_concat_;
    std::vector<Record> records_;
};

/// C-STS objective on one batch of twin quadruplets. When `grad` is non-null the gradient of the
/// returned loss is accumulated into it. A non-null `dropout_rng` means training mode.
inline double csts_batch_loss(const Model& model, std::span<const CstsQuadruplet> batch,
                              const EncoderProvider& encoder, const LossConfig& cfg, Model* grad = nullptr,
                              Rng* dropout_rng = nullptr) {
    BatchComposer composer(model.net, encoder, dropout_rng);
    std::vector<ProjectedQuad> items;
    std::vector<std::pair<std::size_t, std::size_t>> ids;
    items.reserve(batch.size());
    for (const auto& q : batch) {
        const auto a = composer.forward(q.condition, q.sentence1);
        const auto b = composer.forward(q.condition, q.sentence2);
        ids.emplace_back(a, b);
        items.push_back({q.pair_id, q.label, composer.output(a), composer.output(b)});
    }
    if (!grad) return loss_csts_total(items, cfg);
    std::vector<ProjectedQuadGrad> grads;
    const double loss = loss_csts_total(items, cfg, &grads);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        composer.backward(ids[i].first, grads[i].h1);
        composer.backward(ids[i].second, grads[i].h2);
    }
    composer.finish(grad->net);
    return loss;
}

/// KGC objective on one batch: the relation conditions the head; tails stay raw.
inline double kgc_batch_loss(const Model& model, std::span<const KgTriple> batch, const EncoderProvider& encoder,
                             const LossConfig& cfg, const PrebatchQueue& prebatch, Model* grad = nullptr,
                             Rng* dropout_rng = nullptr) {
    if (batch.empty()) throw DomainError("kgc_batch_loss: empty batch");
    BatchComposer composer(model.net, encoder, dropout_rng);
    std::vector<EmbeddedTriple> embedded;
    std::vector<std::size_t> ids;
    embedded.reserve(batch.size());
    for (const auto& t : batch) {
        const auto id = composer.forward(t.relation, t.head);
        ids.push_back(id);
        embedded.push_back({t.head, t.tail, composer.sentence_embedding(id), encoder.embed(t.tail)});
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto negatives = assemble_negatives(embedded, i, cfg, prebatch);
        const auto r = loss_kgc_backward(composer.output(ids[i]), embedded[i].h_tail, negatives, cfg.gamma,
                                         model.tau_kgc, grad != nullptr);
        total += r.loss;
        if (grad) {
            composer.backward(ids[i], scaled(r.d_h_hr, inv_n));
            if (model.learn_tau) grad->tau_kgc += r.d_tau * inv_n;
        }
    }
    if (grad) composer.finish(grad->net);
    return total * inv_n;
}

}  // namespace hypercl
