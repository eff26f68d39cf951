#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hypercl/error.hpp"
#include "hypercl/numeric.hpp"
#include "hypercl/random.hpp"

namespace hypercl {

enum class HyperMode { full, lowrank, hadamard, concat };

inline std::string_view to_string(HyperMode m) {
    switch (m) {
        case HyperMode::full: return "full";
        case HyperMode::lowrank: return "lowrank";
        case HyperMode::hadamard: return "hadamard";
        case HyperMode::concat: return "concat";
    }
    return "?";
}

inline HyperMode parse_hyper_mode(std::string_view s) {
    if (s == "full") return HyperMode::full;
    if (s == "lowrank") return HyperMode::lowrank;
    if (s == "hadamard") return HyperMode::hadamard;
    if (s == "concat") return HyperMode::concat;
    throw DomainError("unknown hypernet mode: " + std::string(s));
}

/// Rank used when none is given: floor(nh / 12), at least 1.
inline std::size_t default_rank(std::size_t nh) { return std::max<std::size_t>(1, nh / 12); }

/// Named view over one learnable tensor.
struct TensorRef {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<double> data;
};

struct ConstTensorRef {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<const double> data;
};

/// Parameters of the condition composer. Only the fields of the active mode are populated.
///
/// full:     W_c = reshape(U h_c + U_bias, nh x nh)
/// lowrank:  W_c1 = reshape(U1 h_c + U1_bias, nh x nk), W_c2 likewise, W_c = W_c1 W_c2^T
/// concat:   g(h_c, h_s) = Wcat dropout([h_c; h_s])
/// hadamard: g(h_c, h_s) = h_c * h_s, nothing learnable
struct HyperNetParams {
    HyperMode mode = HyperMode::full;
    std::size_t nh = 0;
    std::size_t nk = 0;
    bool use_bias = true;
    double dropout_p = 0.0;

    Matrix U;
    Vector U_bias;
    Matrix U1, U2;
    Vector U1_bias, U2_bias;
    Matrix Wcat;

    std::vector<TensorRef> tensors() {
        std::vector<TensorRef> out;
        switch (mode) {
            case HyperMode::full:
                out.push_back({"U", {nh * nh, nh}, U.values()});
                if (use_bias) out.push_back({"U_bias", {nh * nh}, U_bias.values()});
                break;
            case HyperMode::lowrank:
                out.push_back({"U1", {nh * nk, nh}, U1.values()});
                out.push_back({"U2", {nh * nk, nh}, U2.values()});
                if (use_bias) {
                    out.push_back({"U1_bias", {nh * nk}, U1_bias.values()});
                    out.push_back({"U2_bias", {nh * nk}, U2_bias.values()});
                }
                break;
            case HyperMode::concat:
                out.push_back({"Wcat", {nh, 2 * nh}, Wcat.values()});
                break;
            case HyperMode::hadamard:
                break;
        }
        return out;
    }

    std::vector<ConstTensorRef> tensors() const {
        std::vector<ConstTensorRef> out;
        for (auto& t : const_cast<HyperNetParams*>(this)->tensors()) {
            out.push_back({t.name, t.shape, t.data});
        }
        return out;
    }

    /// Same shapes, all zeros. Used as a gradient buffer.
    HyperNetParams zeros_like() const {
        HyperNetParams z = *this;
        for (auto& t : z.tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
        return z;
    }

    friend bool operator==(const HyperNetParams&, const HyperNetParams&) = default;
};

/// Exact learnable-scalar count.
inline std::size_t param_count(HyperMode mode, std::size_t nh, std::size_t nk, bool use_bias = true) {
    switch (mode) {
        case HyperMode::full: return nh * nh * nh + (use_bias ? nh * nh : 0);
        case HyperMode::lowrank: return 2 * (nh * nh * nk + (use_bias ? nh * nk : 0));
        case HyperMode::concat: return 2 * nh * nh;
        case HyperMode::hadamard: return 0;
    }
    return 0;
}

inline std::size_t param_count(const HyperNetParams& p) {
    return param_count(p.mode, p.nh, p.nk, p.use_bias);
}

struct InitOptions {
    bool use_bias = true;
    double dropout_p = 0.1;
};

inline HyperNetParams init_params(HyperMode mode, std::size_t nh, std::size_t nk, std::uint64_t seed,
                                  InitOptions opts = {}) {
    if (nh == 0) throw DomainError("init_params: nh must be positive");
    if (mode == HyperMode::lowrank && (nk == 0 || nk > nh)) {
        throw DomainError("init_params: lowrank requires 1 <= nk <= nh (nk=" + std::to_string(nk) +
                          ", nh=" + std::to_string(nh) + ")");
    }
    if (opts.dropout_p < 0.0 || opts.dropout_p >= 1.0) throw DomainError("init_params: dropout_p must be in [0,1)");

    constexpr double kStd = 0.02;
    HyperNetParams p;
    p.mode = mode;
    p.nh = nh;
    p.nk = mode == HyperMode::lowrank ? nk : 0;
    p.use_bias = opts.use_bias;
    Rng rng = make_rng(seed);
    switch (mode) {
        case HyperMode::full: {
            p.U = Matrix(nh * nh, nh);
            fill_gaussian(p.U.values(), rng, kStd);
            p.U_bias = Vector(nh * nh);
            if (p.use_bias) {
                for (std::size_t i = 0; i < nh; ++i) p.U_bias[i * nh + i] = 1.0;
            }
            break;
        }
        case HyperMode::lowrank: {
            p.U1 = Matrix(nh * nk, nh);
            p.U2 = Matrix(nh * nk, nh);
            fill_gaussian(p.U1.values(), rng, kStd);
            fill_gaussian(p.U2.values(), rng, kStd);
            p.U1_bias = Vector(nh * nk);
            p.U2_bias = Vector(nh * nk);
            if (p.use_bias) {
                const double bias_std = kStd / std::sqrt(static_cast<double>(nk));
                fill_gaussian(p.U1_bias.values(), rng, bias_std);
                fill_gaussian(p.U2_bias.values(), rng, bias_std);
            }
            break;
        }
        case HyperMode::concat:
            p.Wcat = Matrix(nh, 2 * nh);
            fill_gaussian(p.Wcat.values(), rng, kStd);
            p.dropout_p = opts.dropout_p;
            break;
        case HyperMode::hadamard:
            break;
    }
    return p;
}

enum class OperatorForm { dense, factored, diagonal };

/// A condition-specific linear map. Factored operators stand for W1 W2^T and are never densified
/// on the projection path.
struct ConditionOperator {
    OperatorForm form = OperatorForm::dense;
    Matrix W;
    Matrix W1, W2;
    Vector d;

    static ConditionOperator dense(Matrix w) {
        ConditionOperator op;
        op.form = OperatorForm::dense;
        op.W = std::move(w);
        return op;
    }
    static ConditionOperator factored(Matrix w1, Matrix w2) {
        if (w1.rows() != w2.rows() || w1.cols() != w2.cols()) {
            throw DimensionError("factored operator: W1 and W2 shapes differ");
        }
        ConditionOperator op;
        op.form = OperatorForm::factored;
        op.W1 = std::move(w1);
        op.W2 = std::move(w2);
        return op;
    }
    static ConditionOperator diagonal(Vector diag) {
        ConditionOperator op;
        op.form = OperatorForm::diagonal;
        op.d = std::move(diag);
        return op;
    }

    std::size_t dim() const noexcept {
        switch (form) {
            case OperatorForm::dense: return W.rows();
            case OperatorForm::factored: return W1.rows();
            case OperatorForm::diagonal: return d.dim();
        }
        return 0;
    }

    /// Number of stored reals.
    std::size_t stored_values() const noexcept {
        switch (form) {
            case OperatorForm::dense: return W.size();
            case OperatorForm::factored: return W1.size() + W2.size();
            case OperatorForm::diagonal: return d.dim();
        }
        return 0;
    }

    friend bool operator==(const ConditionOperator&, const ConditionOperator&) = default;
};

namespace detail {
inline std::atomic<std::uint64_t>& densify_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}
}  // namespace detail

/// How many times an operator has been expanded to a full nh x nh matrix in this process.
inline std::uint64_t densify_count() noexcept { return detail::densify_counter().load(); }

/// Materialize the operator as an nh x nh matrix.
inline Matrix densify(const ConditionOperator& op) {
    detail::densify_counter().fetch_add(1, std::memory_order_relaxed);
    switch (op.form) {
        case OperatorForm::dense: return op.W;
        case OperatorForm::factored: return matmul_transposed_rhs(op.W1, op.W2);
        case OperatorForm::diagonal: {
            Matrix m(op.d.dim(), op.d.dim());
            for (std::size_t i = 0; i < op.d.dim(); ++i) m(i, i) = op.d[i];
            return m;
        }
    }
    return {};
}

/// W_c = q(h_c). Affine in h_c.
inline ConditionOperator generate_condition_matrix(const HyperNetParams& p, const Vector& h_c) {
    detail::require_same_dim(p.nh, h_c.dim(), "generate_condition_matrix");
    const std::size_t nh = p.nh;
    switch (p.mode) {
        case HyperMode::full: {
            Vector flat = matvec(p.U, h_c);
            for (std::size_t i = 0; i < flat.dim(); ++i) flat[i] += p.U_bias[i];
            return ConditionOperator::dense(Matrix(nh, nh, std::vector<double>(flat.begin(), flat.end())));
        }
        case HyperMode::lowrank: {
            Vector f1 = matvec(p.U1, h_c);
            Vector f2 = matvec(p.U2, h_c);
            for (std::size_t i = 0; i < f1.dim(); ++i) {
                f1[i] += p.U1_bias[i];
                f2[i] += p.U2_bias[i];
            }
            return ConditionOperator::factored(Matrix(nh, p.nk, std::vector<double>(f1.begin(), f1.end())),
                                               Matrix(nh, p.nk, std::vector<double>(f2.begin(), f2.end())));
        }
        default:
            throw DomainError("generate_condition_matrix: mode " + std::string(to_string(p.mode)) +
                              " has no hypernetwork");
    }
}

/// Backpropagate a gradient on the generated operator into the hypernetwork parameters.
inline void generate_condition_matrix_backward(const HyperNetParams& p, const Vector& h_c,
                                               const ConditionOperator& grad_op, HyperNetParams& grad) {
    switch (p.mode) {
        case HyperMode::full: {
            const auto g = grad_op.W.values();
            add_outer(grad.U, g, h_c.values());
            if (p.use_bias) {
                for (std::size_t i = 0; i < g.size(); ++i) grad.U_bias[i] += g[i];
            }
            break;
        }
        case HyperMode::lowrank: {
            const auto g1 = grad_op.W1.values();
            const auto g2 = grad_op.W2.values();
            add_outer(grad.U1, g1, h_c.values());
            add_outer(grad.U2, g2, h_c.values());
            if (p.use_bias) {
                for (std::size_t i = 0; i < g1.size(); ++i) {
                    grad.U1_bias[i] += g1[i];
                    grad.U2_bias[i] += g2[i];
                }
            }
            break;
        }
        default:
            throw DomainError("generate_condition_matrix_backward: mode has no hypernetwork");
    }
}

/// h_sc = W_c h_s. Factored operators evaluate W1 (W2^T h_s).
inline Vector project(const ConditionOperator& op, const Vector& h_s) {
    switch (op.form) {
        case OperatorForm::dense: return matvec(op.W, h_s);
        case OperatorForm::factored: {
            const Vector inner = matvec_transposed(op.W2, h_s.values());
            return matvec(op.W1, inner);
        }
        case OperatorForm::diagonal: {
            detail::require_same_dim(op.d.dim(), h_s.dim(), "project(diagonal)");
            Vector out(h_s.dim());
            for (std::size_t i = 0; i < h_s.dim(); ++i) out[i] = op.d[i] * h_s[i];
            return out;
        }
    }
    return {};
}

/// A zero operator with the same form and shape, for gradient accumulation.
inline ConditionOperator zero_operator_like(const ConditionOperator& op) {
    switch (op.form) {
        case OperatorForm::dense: return ConditionOperator::dense(Matrix(op.W.rows(), op.W.cols()));
        case OperatorForm::factored:
            return ConditionOperator::factored(Matrix(op.W1.rows(), op.W1.cols()),
                                               Matrix(op.W2.rows(), op.W2.cols()));
        case OperatorForm::diagonal: return ConditionOperator::diagonal(Vector(op.d.dim()));
    }
    return {};
}

/// Accumulate d(loss)/d(operator) given d(loss)/d(project(op, h_s)).
inline void project_backward(const ConditionOperator& op, const Vector& h_s, const Vector& grad_out,
                             ConditionOperator& grad_op) {
    switch (op.form) {
        case OperatorForm::dense:
            add_outer(grad_op.W, grad_out.values(), h_s.values());
            break;
        case OperatorForm::factored: {
            const Vector inner = matvec_transposed(op.W2, h_s.values());
            add_outer(grad_op.W1, grad_out.values(), inner.values());
            const Vector grad_inner = matvec_transposed(op.W1, grad_out.values());
            add_outer(grad_op.W2, h_s.values(), grad_inner.values());
            break;
        }
        case OperatorForm::diagonal:
            for (std::size_t i = 0; i < h_s.dim(); ++i) grad_op.d[i] += grad_out[i] * h_s[i];
            break;
    }
}

/// g1(h_c, h_s) = h_c * h_s elementwise.
inline Vector hadamard_compose(const Vector& h_c, const Vector& h_s) {
    detail::require_same_dim(h_c.dim(), h_s.dim(), "hadamard_compose");
    Vector out(h_c.dim());
    for (std::size_t i = 0; i < h_c.dim(); ++i) out[i] = h_c[i] * h_s[i];
    return out;
}

/// Output of the concatenation composer plus the (possibly dropped-out) input it consumed.
struct ConcatResult {
    Vector output;
    Vector input;
};

/// g2(h_c, h_s) = Wcat d([h_c; h_s]) with inverted dropout when training.
inline ConcatResult concat_forward(const HyperNetParams& p, const Vector& h_c, const Vector& h_s, bool training,
                                   Rng* rng) {
    if (p.mode != HyperMode::concat) throw DomainError("concat_compose: params are not in concat mode");
    detail::require_same_dim(h_c.dim(), h_s.dim(), "concat_compose");
    detail::require_same_dim(p.nh, h_c.dim(), "concat_compose");
    Vector z(2 * p.nh);
    for (std::size_t i = 0; i < p.nh; ++i) {
        z[i] = h_c[i];
        z[p.nh + i] = h_s[i];
    }
    if (training && p.dropout_p > 0.0) {
        if (rng == nullptr) throw DomainError("concat_compose: training with dropout needs an rng");
        std::bernoulli_distribution keep(1.0 - p.dropout_p);
        const double scale = 1.0 / (1.0 - p.dropout_p);
        for (double& x : z) x = keep(*rng) ? x * scale : 0.0;
    }
    Vector y = matvec(p.Wcat, z);
    return {std::move(y), std::move(z)};
}

inline Vector concat_compose(const HyperNetParams& p, const Vector& h_c, const Vector& h_s, bool training = false,
                             Rng* rng = nullptr) {
    return concat_forward(p, h_c, h_s, training, rng).output;
}

inline void concat_backward(const ConcatResult& fwd, const Vector& grad_out, HyperNetParams& grad) {
    add_outer(grad.Wcat, grad_out.values(), fwd.input.values());
}

}  // namespace hypercl
