#pragma once

#include <cmath>
#include <vector>

#include "hypercl/error.hpp"
#include "hypercl/model.hpp"

namespace hypercl {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Adam with decoupled weight decay. Weight decay is not applied to the temperature.
class AdamW {
public:
    explicit AdamW(AdamConfig cfg) : cfg_(cfg) {
        if (!(cfg_.lr >= 0.0)) throw DomainError("adam: lr must be >= 0");
        if (!(cfg_.weight_decay >= 0.0)) throw DomainError("adam: weight_decay must be >= 0");
    }

    void step(Model& model, Model& grad) {
        auto params = model.tensors();
        auto grads = grad.tensors();
        if (params.size() != grads.size()) throw DimensionError("adam: parameter/gradient tensor mismatch");
        if (m_.empty()) {
            for (const auto& t : params) {
                m_.emplace_back(t.data.size(), 0.0);
                v_.emplace_back(t.data.size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto x = params[k].data;
            const auto g = grads[k].data;
            auto& m = m_[k];
            auto& v = v_[k];
            const bool decay = params[k].name != "tau_kgc" && cfg_.weight_decay > 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                if (cfg_.lr == 0.0) continue;
                const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                if (decay) x[i] -= cfg_.lr * cfg_.weight_decay * x[i];
                x[i] -= cfg_.lr * update;
            }
        }
        if (model.learn_tau && model.tau_kgc < kTauFloor) model.tau_kgc = kTauFloor;
    }

    std::size_t steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace hypercl
