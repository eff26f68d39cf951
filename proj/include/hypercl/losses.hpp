#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "hypercl/error.hpp"
#include "hypercl/numeric.hpp"
#include "hypercl/random.hpp"

namespace hypercl {

/// One C-STS record. Twins share (sentence1, sentence2, pair_id) and differ in condition.
struct CstsQuadruplet {
    std::string sentence1;
    std::string sentence2;
    std::string condition;
    double label = 0.0;
    std::int64_t pair_id = 0;

    friend bool operator==(const CstsQuadruplet&, const CstsQuadruplet&) = default;
};

struct KgTriple {
    std::string head;
    std::string relation;
    std::string tail;

    friend bool operator==(const KgTriple&, const KgTriple&) = default;
    friend auto operator<=>(const KgTriple&, const KgTriple&) = default;
};

inline constexpr double kTauFloor = 1e-3;

struct LossConfig {
    double tau_csts = 1.5;
    double tau_kgc = 0.05;  // initial value; learnable
    bool learn_tau_kgc = true;
    double gamma = 0.02;
    bool use_cl = true;  // C-STS contrastive term on/off (ablation)
    bool use_self_neg = true;
    bool use_prebatch_neg = true;
    std::size_t prebatch_size = 1;
    // native C-STS label range, mapped affinely onto [0, 1]
    double label_min = 1.0;
    double label_max = 5.0;

    void validate() const {
        if (!(tau_csts > 0.0)) throw DomainError("tau_csts must be > 0");
        if (!(tau_kgc >= kTauFloor)) throw DomainError("tau_kgc must be >= 1e-3");
        if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
        if (!(label_max > label_min)) throw DomainError("label_max must exceed label_min");
    }

    double to_unit(double y) const { return (y - label_min) / (label_max - label_min); }
    double to_native(double s) const { return label_min + s * (label_max - label_min); }
};

// ---------------------------------------------------------------------------
// C-STS

struct CstsClGrad {
    double loss = 0.0;
    double d_phi_hi = 0.0;
    double d_phi_lo = 0.0;
};

/// -log(e^{phi_hi/tau} / (e^{phi_hi/tau} + e^{phi_lo/tau})) as a function of the two similarities.
inline CstsClGrad csts_cl_from_similarities(double phi_hi, double phi_lo, double tau) {
    if (!(tau > 0.0)) throw DomainError("loss_csts_cl: tau must be > 0");
    const double z = (phi_lo - phi_hi) / tau;
    // softplus(z), stable for both signs
    const double loss = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return {loss, -sig / tau, sig / tau};
}

inline double loss_csts_cl(const Vector& h1_hi, const Vector& h2_hi, const Vector& h1_lo, const Vector& h2_lo,
                           double tau) {
    return csts_cl_from_similarities(cosine_similarity(h1_hi, h2_hi), cosine_similarity(h1_lo, h2_lo), tau).loss;
}

/// (phi(h1c, h2c) - y)^2 with y already on the similarity scale.
inline double loss_csts_mse(const Vector& h1c, const Vector& h2c, double y) {
    const double diff = cosine_similarity(h1c, h2c) - y;
    return diff * diff;
}

/// Gradient of loss_csts_mse with respect to both inputs.
inline double loss_csts_mse_backward(const Vector& h1c, const Vector& h2c, double y, double upstream, Vector& g1,
                                     Vector& g2) {
    const double diff = cosine_similarity(h1c, h2c) - y;
    cosine_backward(h1c, h2c, upstream * 2.0 * diff, &g1, &g2);
    return diff * diff;
}

/// Conditioned embeddings of one quadruplet, ready for the loss.
struct ProjectedQuad {
    std::int64_t pair_id = 0;
    double label = 0.0;  // native scale
    Vector h1;
    Vector h2;
};

struct ProjectedQuadGrad {
    Vector h1;
    Vector h2;
};

struct TwinIndex {
    std::size_t high;
    std::size_t low;
};

/// Group items into twins by pair_id. The twin with the larger label is c_high.
inline std::vector<TwinIndex> pair_twins(std::span<const ProjectedQuad> items) {
    std::map<std::int64_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < items.size(); ++i) groups[items[i].pair_id].push_back(i);
    std::vector<TwinIndex> twins;
    twins.reserve(groups.size());
    for (const auto& [pid, idx] : groups) {
        if (idx.size() != 2) {
            throw DomainError("unmatched twins: pair_id " + std::to_string(pid) + " has " +
                              std::to_string(idx.size()) + " member(s), expected 2");
        }
        const bool first_high = items[idx[0]].label >= items[idx[1]].label;
        twins.push_back(first_high ? TwinIndex{idx[0], idx[1]} : TwinIndex{idx[1], idx[0]});
    }
    return twins;
}

/// Mean over twin instances of MSE(high) + MSE(low) + CL. Optionally fills per-item input gradients.
inline double loss_csts_total(std::span<const ProjectedQuad> items, const LossConfig& cfg,
                              std::vector<ProjectedQuadGrad>* grads = nullptr) {
    if (items.empty()) throw DomainError("loss_csts_total: empty batch");
    const auto twins = pair_twins(items);
    const double inv_n = 1.0 / static_cast<double>(twins.size());
    if (grads) {
        grads->assign(items.size(), {});
        for (std::size_t i = 0; i < items.size(); ++i) {
            (*grads)[i].h1 = Vector(items[i].h1.dim());
            (*grads)[i].h2 = Vector(items[i].h2.dim());
        }
    }
    double total = 0.0;
    for (const auto& tw : twins) {
        const auto& hi = items[tw.high];
        const auto& lo = items[tw.low];
        if (grads) {
            total += loss_csts_mse_backward(hi.h1, hi.h2, cfg.to_unit(hi.label), inv_n, (*grads)[tw.high].h1,
                                            (*grads)[tw.high].h2);
            total += loss_csts_mse_backward(lo.h1, lo.h2, cfg.to_unit(lo.label), inv_n, (*grads)[tw.low].h1,
                                            (*grads)[tw.low].h2);
        } else {
            total += loss_csts_mse(hi.h1, hi.h2, cfg.to_unit(hi.label));
            total += loss_csts_mse(lo.h1, lo.h2, cfg.to_unit(lo.label));
        }
        if (cfg.use_cl) {
            const auto cl = csts_cl_from_similarities(cosine_similarity(hi.h1, hi.h2),
                                                      cosine_similarity(lo.h1, lo.h2), cfg.tau_csts);
            total += cl.loss;
            if (grads) {
                cosine_backward(hi.h1, hi.h2, inv_n * cl.d_phi_hi, &(*grads)[tw.high].h1, &(*grads)[tw.high].h2);
                cosine_backward(lo.h1, lo.h2, inv_n * cl.d_phi_lo, &(*grads)[tw.low].h1, &(*grads)[tw.low].h2);
            }
        }
    }
    return total * inv_n;
}

// ---------------------------------------------------------------------------
// KGC

struct KgcLossGrad {
    double loss = 0.0;
    Vector d_h_hr;
    double d_tau = 0.0;
};

/// InfoNCE with additive margin on the positive. Gradient is only taken through h_hr and tau;
/// tails and negatives come from the frozen encoder.
inline KgcLossGrad loss_kgc_backward(const Vector& h_hr, const Vector& h_t, std::span<const Vector> negatives,
                                     double gamma, double tau, bool want_grad = true) {
    if (negatives.empty()) throw DomainError("loss_kgc: no negatives");
    if (!(tau >= kTauFloor)) throw DomainError("loss_kgc: tau below floor 1e-3");
    const std::size_t n = negatives.size() + 1;
    std::vector<double> phi(n), logits(n);
    phi[0] = cosine_similarity(h_hr, h_t);
    logits[0] = (phi[0] - gamma) / tau;
    for (std::size_t j = 0; j < negatives.size(); ++j) {
        phi[j + 1] = cosine_similarity(h_hr, negatives[j]);
        logits[j + 1] = phi[j + 1] / tau;
    }
    const double lse = log_sum_exp(logits);
    KgcLossGrad out;
    out.loss = lse - logits[0];
    if (!want_grad) return out;

    out.d_h_hr = Vector(h_hr.dim());
    for (std::size_t k = 0; k < n; ++k) {
        const double p = std::exp(logits[k] - lse);
        const double d_logit = p - (k == 0 ? 1.0 : 0.0);
        // logit_k = (phi_k - margin_k) / tau
        out.d_tau += d_logit * (-logits[k] / tau);
        const Vector& other = k == 0 ? h_t : negatives[k - 1];
        cosine_backward(h_hr, other, d_logit / tau, &out.d_h_hr, nullptr);
    }
    return out;
}

inline double loss_kgc(const Vector& h_hr, const Vector& h_t, std::span<const Vector> negatives, double gamma,
                       double tau) {
    return loss_kgc_backward(h_hr, h_t, negatives, gamma, tau, false).loss;
}

/// Raw (frozen-encoder) embeddings of one triple.
struct EmbeddedTriple {
    std::string head;
    std::string tail;
    Vector h_head;
    Vector h_tail;
};

/// Tails of the most recent completed batches, oldest first.
class PrebatchQueue {
public:
    explicit PrebatchQueue(std::size_t capacity = 0) : capacity_(capacity) {}

    void push(std::vector<std::pair<std::string, Vector>> tails) {
        if (capacity_ == 0) return;
        batches_.push_back(std::move(tails));
        while (batches_.size() > capacity_) batches_.pop_front();
    }

    void clear() { batches_.clear(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const std::deque<std::vector<std::pair<std::string, Vector>>>& batches() const noexcept { return batches_; }

private:
    std::size_t capacity_;
    std::deque<std::vector<std::pair<std::string, Vector>>> batches_;
};

/// Negatives for batch item i: in-batch tails, then the self-negative, then pre-batch tails.
/// Anything whose text equals the gold tail is dropped.
inline std::vector<Vector> assemble_negatives(std::span<const EmbeddedTriple> batch, std::size_t i,
                                              const LossConfig& cfg, const PrebatchQueue& prebatch) {
    if (batch.empty()) throw DomainError("assemble_negatives: empty batch");
    if (i >= batch.size()) throw DomainError("assemble_negatives: index out of range");
    const std::string& gold = batch[i].tail;
    std::vector<Vector> out;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j == i || batch[j].tail == gold) continue;
        out.push_back(batch[j].h_tail);
    }
    if (cfg.use_self_neg && batch[i].head != gold) out.push_back(batch[i].h_head);
    if (cfg.use_prebatch_neg) {
        for (const auto& b : prebatch.batches()) {
            for (const auto& [text, v] : b) {
                if (text != gold) out.push_back(v);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradientCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckOptions {
    double epsilon = 1e-5;
    /// Coordinates sampled per tensor; 0 checks every scalar.
    std::size_t max_per_tensor = 0;
    std::uint64_t seed = 0;
};

/// Compare an analytic gradient against central differences, coordinate by coordinate.
///
/// `Model` must expose `tensors()` returning named spans in a fixed order. `loss(model)` returns the
/// scalar objective; `analytic(model)` returns a Model-shaped gradient.
/// Relative error is |a - n| / max(1, |a|, |n|).
template <class Model, class LossFn, class GradFn>
GradientCheckReport grad_check(LossFn&& loss, GradFn&& analytic, Model model, GradCheckOptions opts = {}) {
    if (!(opts.epsilon >= 1e-7 && opts.epsilon <= 1e-3)) {
        throw DomainError("grad_check: epsilon must lie in [1e-7, 1e-3]");
    }
    const double base = loss(static_cast<const Model&>(model));
    if (!std::isfinite(base)) throw NonFiniteError("grad_check: non-finite loss");
    Model grad = analytic(static_cast<const Model&>(model));
    auto grad_tensors = grad.tensors();
    auto tensors = model.tensors();
    if (grad_tensors.size() != tensors.size()) throw DimensionError("grad_check: gradient/model tensor mismatch");

    Rng rng = make_rng(opts.seed);
    GradientCheckReport report;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& tensor = tensors[t];
        const auto g = grad_tensors[t].data;
        std::vector<std::size_t> coords;
        if (opts.max_per_tensor == 0 || opts.max_per_tensor >= tensor.data.size()) {
            coords.resize(tensor.data.size());
            std::iota(coords.begin(), coords.end(), std::size_t{0});
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, tensor.data.size() - 1);
            for (std::size_t k = 0; k < opts.max_per_tensor; ++k) coords.push_back(pick(rng));
        }
        for (std::size_t idx : coords) {
            double& x = tensor.data[idx];
            const double saved = x;
            x = saved + opts.epsilon;
            const double up = loss(static_cast<const Model&>(model));
            x = saved - opts.epsilon;
            const double down = loss(static_cast<const Model&>(model));
            x = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) throw NonFiniteError("grad_check: non-finite loss");
            const double numeric = (up - down) / (2.0 * opts.epsilon);
            const double a = g[idx];
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (report.checked++ == 0 || err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_tensor = tensor.name;
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace hypercl
