#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "gcopt/gc.hpp"
#include "gcopt/tensor.hpp"

namespace gcopt {

enum class OptimizerKind { sgdm, sgdw, adagrad, adam, adamw };
enum class DecayMode { coupled_l2, decoupled };
// paper: m = b*m + (1-b)*g  (the form the algorithms are stated in)
// classic: m = b*m + g     (common framework variant, for cross-checks)
enum class MomentumForm { paper, classic };

inline const char* optimizer_kind_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::sgdm: return "sgdm";
        case OptimizerKind::sgdw: return "sgdw";
        case OptimizerKind::adagrad: return "adagrad";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::adamw: return "adamw";
    }
    return "?";
}

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgdm") return OptimizerKind::sgdm;
    if (s == "sgdw") return OptimizerKind::sgdw;
    if (s == "adagrad") return OptimizerKind::adagrad;
    if (s == "adam") return OptimizerKind::adam;
    if (s == "adamw") return OptimizerKind::adamw;
    throw std::invalid_argument("unknown optimizer kind: " + s);
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgdm;
    double lr = 0.1;
    double momentum = 0.9;       // sgdm/sgdw
    double beta1 = 0.9;          // adam/adamw
    double beta2 = 0.999;        // adam/adamw
    double eps = 1e-8;           // adam/adamw/adagrad
    double weight_decay = 0.0;
    DecayMode decay_mode = DecayMode::coupled_l2;
    MomentumForm momentum_form = MomentumForm::paper;
    bool gc_enabled = false;
    GcPolicy gc;

    bool uses_decoupled_kind() const {
        return kind == OptimizerKind::sgdw || kind == OptimizerKind::adamw;
    }

    void validate() const {
        const bool finite = std::isfinite(lr) && std::isfinite(momentum) &&
                            std::isfinite(beta1) && std::isfinite(beta2) &&
                            std::isfinite(eps) && std::isfinite(weight_decay);
        if (!finite) throw std::invalid_argument("OptimizerConfig: non-finite field");
        if (lr <= 0.0) throw std::invalid_argument("OptimizerConfig: lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("OptimizerConfig: momentum must be in [0,1)");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw std::invalid_argument("OptimizerConfig: betas must be in [0,1)");
        if (eps < 0.0) throw std::invalid_argument("OptimizerConfig: eps must be >= 0");
        if (weight_decay < 0.0)
            throw std::invalid_argument("OptimizerConfig: weight_decay must be >= 0");
        const bool decoupled = decay_mode == DecayMode::decoupled;
        if (decoupled != uses_decoupled_kind()) {
            throw std::invalid_argument(
                std::string("OptimizerConfig: decay_mode ") +
                (decoupled ? "decoupled" : "coupled_l2") + " is invalid for " +
                optimizer_kind_name(kind) +
                " (decoupled is for sgdw/adamw only)");
        }
        gc.validate();
    }
};

// Per-parameter moment buffers. m is the first moment (momentum), v the
// second moment (adam) or squared-gradient accumulator (adagrad). A state
// hit by a non-finite gradient is poisoned for good.
template <typename T>
struct OptimizerState {
    std::uint64_t step = 0;
    Tensor<T> m;
    Tensor<T> v;
    bool poisoned = false;

    explicit OptimizerState(const std::vector<std::size_t>& dims)
        : m(dims), v(dims) {}
    OptimizerState() = default;
};

// How a parameter's gradient maps onto the M x N column convention.
// kind=none means the parameter has no fan-in/fan-out decomposition (bias,
// normalization scale/shift) and is never centralized.
struct GcMeta {
    enum class Kind { none, fc, conv } kind = Kind::none;
    ConvDims conv;
};

// Stage 1 of preprocessing: fold coupled L2 decay into the gradient.
// Decoupled decay never passes through here (it acts on the weight after
// the update step).
template <typename T>
Tensor<T> decay_coupled(const Tensor<T>& g, const Tensor<T>& w,
                        const OptimizerConfig& cfg) {
    check_same_shape(g, w, "preprocess_gradient");
    Tensor<T> ghat = g;
    if (cfg.decay_mode == DecayMode::coupled_l2 && cfg.weight_decay != 0.0) {
        axpy(static_cast<T>(cfg.weight_decay), w, ghat);
    }
    return ghat;
}

// Stage 2: centralize in place when enabled. The kGcCompiled=false
// instantiation contains no centralization code at all, for the
// one-line-embedding equivalence check.
template <typename T, bool kGcCompiled = true>
void centralize_gradient(Tensor<T>& ghat, const GcMeta& meta, const OptimizerConfig& cfg) {
    if constexpr (kGcCompiled) {
        if (!cfg.gc_enabled) return;
        if (meta.kind == GcMeta::Kind::fc) {
            auto view = unfold(ghat, LayerGradKind::fc);
            centralize(view, cfg.gc);
        } else if (meta.kind == GcMeta::Kind::conv) {
            auto view = unfold(ghat, LayerGradKind::conv, &meta.conv);
            centralize(view, cfg.gc);
        }
    }
}

// Produce the update gradient ghat. Pure function of (g, w, cfg, meta).
// Coupled L2 mode yields P(g + lambda*w): decay first, then centralized.
template <typename T, bool kGcCompiled = true>
Tensor<T> preprocess_gradient(const Tensor<T>& g, const Tensor<T>& w,
                              const OptimizerConfig& cfg, const GcMeta& meta) {
    Tensor<T> ghat = decay_coupled(g, w, cfg);
    centralize_gradient<T, kGcCompiled>(ghat, meta, cfg);
    return ghat;
}

namespace detail {

template <typename T>
void require_healthy(const Tensor<T>& ghat, OptimizerState<T>& state,
                     const std::string& param_name) {
    if (state.poisoned) {
        throw std::runtime_error("optimizer state for '" + param_name +
                                 "' is poisoned by an earlier non-finite gradient");
    }
    if (!all_finite(ghat)) {
        state.poisoned = true;
        throw std::runtime_error("non-finite gradient for parameter '" + param_name + "'");
    }
}

}  // namespace detail

// One SGDM step on ghat (already preprocessed):
//   paper form:   m = b*m + (1-b)*ghat
//   classic form: m = b*m + ghat
//   w -= lr * m
template <typename T>
void sgdm_step(Tensor<T>& w, const Tensor<T>& ghat, OptimizerState<T>& state,
               const OptimizerConfig& cfg, const std::string& param_name = "w") {
    detail::require_healthy(ghat, state, param_name);
    check_same_shape(w, ghat, "sgdm_step");
    const T beta = static_cast<T>(cfg.momentum);
    const T lr = static_cast<T>(cfg.lr);
    const T g_scale = cfg.momentum_form == MomentumForm::paper ? T(1) - beta : T(1);
    T* pm = state.m.data();
    T* pw = w.data();
    const T* pg = ghat.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
        pm[i] = beta * pm[i] + g_scale * pg[i];
        pw[i] -= lr * pm[i];
    }
    state.step += 1;
}

// One Adam step. Bias corrections use the post-increment step count (t = 1
// on the first call); eps is added after the square root.
template <typename T>
void adam_step(Tensor<T>& w, const Tensor<T>& ghat, OptimizerState<T>& state,
               const OptimizerConfig& cfg, const std::string& param_name = "w") {
    detail::require_healthy(ghat, state, param_name);
    check_same_shape(w, ghat, "adam_step");
    state.step += 1;
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.lr);
    const T eps = static_cast<T>(cfg.eps);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.step)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.step)));
    T* pm = state.m.data();
    T* pv = state.v.data();
    T* pw = w.data();
    const T* pg = ghat.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
        pm[i] = b1 * pm[i] + (T(1) - b1) * pg[i];
        pv[i] = b2 * pv[i] + (T(1) - b2) * pg[i] * pg[i];
        const T mhat = pm[i] / bc1;
        const T vhat = pv[i] / bc2;
        pw[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// Adagrad: v += ghat^2; w -= lr * ghat / (sqrt(v) + eps). A zero gradient
// entry contributes no update even at eps = 0 (where 0/0 would otherwise
// poison the weight).
template <typename T>
void adagrad_step(Tensor<T>& w, const Tensor<T>& ghat, OptimizerState<T>& state,
                  const OptimizerConfig& cfg, const std::string& param_name = "w") {
    detail::require_healthy(ghat, state, param_name);
    check_same_shape(w, ghat, "adagrad_step");
    const T lr = static_cast<T>(cfg.lr);
    const T eps = static_cast<T>(cfg.eps);
    T* pv = state.v.data();
    T* pw = w.data();
    const T* pg = ghat.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (pg[i] == T(0)) continue;
        pv[i] += pg[i] * pg[i];
        pw[i] -= lr * pg[i] / (std::sqrt(pv[i]) + eps);
    }
    state.step += 1;
}

// Decoupled decay (sgdw/adamw): w -= lr * lambda * w, applied after the
// gradient-based update and never centralized.
template <typename T>
void decoupled_decay_step(Tensor<T>& w, const OptimizerConfig& cfg) {
    if (cfg.decay_mode != DecayMode::decoupled) {
        throw std::invalid_argument("decoupled_decay_step: config is not in decoupled mode");
    }
    const T f = static_cast<T>(cfg.lr) * static_cast<T>(cfg.weight_decay);
    T* pw = w.data();
    for (std::size_t i = 0; i < w.size(); ++i) pw[i] -= f * pw[i];
}

// Moment update for one parameter from an already-preprocessed gradient.
template <typename T>
void apply_update(Tensor<T>& w, const Tensor<T>& ghat, OptimizerState<T>& state,
                  const OptimizerConfig& cfg, const std::string& param_name = "w") {
    switch (cfg.kind) {
        case OptimizerKind::sgdm:
        case OptimizerKind::sgdw:
            sgdm_step(w, ghat, state, cfg, param_name);
            break;
        case OptimizerKind::adam:
        case OptimizerKind::adamw:
            adam_step(w, ghat, state, cfg, param_name);
            break;
        case OptimizerKind::adagrad:
            adagrad_step(w, ghat, state, cfg, param_name);
            break;
    }
}

// Full update for one parameter: preprocess, moment update, decoupled decay.
template <typename T, bool kGcCompiled = true>
void optimizer_step(Tensor<T>& w, const Tensor<T>& g, OptimizerState<T>& state,
                    const OptimizerConfig& cfg, const GcMeta& meta,
                    const std::string& param_name = "w") {
    const Tensor<T> ghat = preprocess_gradient<T, kGcCompiled>(g, w, cfg, meta);
    apply_update(w, ghat, state, cfg, param_name);
    if (cfg.decay_mode == DecayMode::decoupled && cfg.weight_decay != 0.0) {
        decoupled_decay_step(w, cfg);
    }
}

}  // namespace gcopt
