#pragma once

#include "ganloc/nn/models.hpp"
#include "ganloc/rng.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace ganloc::loss {

using nn::DifferentiableCritic;
using nn::GanConfig;
using nn::Mode;
using nn::Variant;

// ---------------------------------------------------------------------------
// Probability-space contracts. Training uses the logit-space graph builders
// below; these are the mathematical reference (and are tested against them).
// ---------------------------------------------------------------------------

// -mean(log p_real) - mean(log(1 - p_fake))
double d_loss_ns(const std::vector<double>& real_probs, const std::vector<double>& fake_probs);
// mean(log(1 - p_fake)); saturating form, never selected by assemble_objectives
double g_loss_minimax(const std::vector<double>& fake_probs);
// -mean(log p_fake)
double g_loss_ns(const std::vector<double>& fake_probs);
// critic scores, no sigmoid: {mean(fake) - mean(real), -mean(fake)}
std::pair<double, double> wgan_losses(const std::vector<double>& real_scores,
                                      const std::vector<double>& fake_scores);

enum class DLossKind { non_saturating, wasserstein };
enum class GLossKind { non_saturating, wasserstein };
enum class PenaltyMode { none, interpolate, perturb };

struct LossRecipe {
    DLossKind d_loss;
    GLossKind g_loss;
    PenaltyMode penalty;
    double penalty_weight; // ignored when penalty == none
};

LossRecipe assemble_objectives(const GanConfig& config);

struct LossBundle {
    double d_loss = 0;
    double g_loss = 0;
    double penalty = 0;
    std::map<std::string, double> diagnostics;
};

// ---------------------------------------------------------------------------
// Logit-space graph builders (numerically stable log-sigmoid forms)
// ---------------------------------------------------------------------------

// mean softplus(-real) + mean softplus(fake)
template <typename T>
ad::Var d_loss_ns_logits(ad::Graph<T>& g, ad::Var real_logits, ad::Var fake_logits) {
    ad::Var a = ad::mean_all(g, ad::softplus(g, ad::neg(g, real_logits)));
    ad::Var b = ad::mean_all(g, ad::softplus(g, fake_logits));
    return ad::add(g, a, b);
}

// mean softplus(-fake)
template <typename T>
ad::Var g_loss_ns_logits(ad::Graph<T>& g, ad::Var fake_logits) {
    return ad::mean_all(g, ad::softplus(g, ad::neg(g, fake_logits)));
}

// mean(log(1 - sigmoid(fake))) = -mean softplus(fake)
template <typename T>
ad::Var g_loss_minimax_logits(ad::Graph<T>& g, ad::Var fake_logits) {
    return ad::neg(g, ad::mean_all(g, ad::softplus(g, fake_logits)));
}

template <typename T>
ad::Var wgan_d_loss_logits(ad::Graph<T>& g, ad::Var real_scores, ad::Var fake_scores) {
    return ad::sub(g, ad::mean_all(g, fake_scores), ad::mean_all(g, real_scores));
}

template <typename T>
ad::Var wgan_g_loss_logits(ad::Graph<T>& g, ad::Var fake_scores) {
    return ad::neg(g, ad::mean_all(g, fake_scores));
}

// ---------------------------------------------------------------------------
// Gradient penalty: mean_i (||grad_x D(xbar_i)||_2 - 1)^2
// ---------------------------------------------------------------------------

template <typename T>
struct PenaltyResult {
    T value = T(0);
    T grad_norm_mean = T(0);
};

// xbar = alpha * real + (1 - alpha) * anchor, per-image alpha ~ U[0,1)
template <typename T>
Tensor<T> mix_interpolates(const Tensor<T>& real, const Tensor<T>& anchor, Rng& rng) {
    if (!real.same_shape(anchor)) throw std::invalid_argument("gradient penalty: batch shape mismatch");
    const int64_t n = real.dim(0), m = real.numel() / real.dim(0);
    Tensor<T> out(real.shape);
    for (int64_t i = 0; i < n; ++i) {
        const T a = static_cast<T>(rng.uniform());
        const T* rp = real.ptr() + i * m;
        const T* ap = anchor.ptr() + i * m;
        T* op = out.ptr() + i * m;
        for (int64_t j = 0; j < m; ++j) op[j] = a * rp[j] + (T(1) - a) * ap[j];
    }
    return out;
}

// anchor for perturb mode: real + N(0, (scale * std(real))^2)
template <typename T>
Tensor<T> perturb_anchor(const Tensor<T>& real, T scale, Rng& rng) {
    const int64_t n = real.numel();
    T mean = kernels::ops<T>().sum(n, real.ptr()) / static_cast<T>(n);
    T var = T(0);
    for (int64_t i = 0; i < n; ++i) var += (real[i] - mean) * (real[i] - mean);
    var /= static_cast<T>(n);
    const T sd = scale * std::sqrt(var);
    Tensor<T> out = real;
    for (int64_t i = 0; i < n; ++i) out[i] += static_cast<T>(rng.normal(0.0, sd));
    return out;
}

// Per-image input gradients of sum(logits) at xbar. Returns [N, M] flattened.
template <typename T>
Tensor<T> critic_input_gradients(DifferentiableCritic<T>& critic, const Tensor<T>& xbar) {
    ad::Graph<T> g;
    ad::Var x = g.leaf(xbar, /*requires_grad=*/true);
    ad::Var logits = critic.logits(g, x, Mode::frozen_stats);
    ad::Var s = ad::sum_all(g, logits);
    g.backward(s);
    const Tensor<T>* gx = g.grad_of(x);
    if (!gx) throw std::runtime_error("gradient penalty: critic is not differentiable in its input");
    return *gx;
}

// Penalty value only; deterministic given xbar.
template <typename T>
PenaltyResult<T> gradient_penalty_value(DifferentiableCritic<T>& critic, const Tensor<T>& xbar) {
    Tensor<T> gx = critic_input_gradients(critic, xbar);
    const int64_t n = xbar.dim(0), m = xbar.numel() / n;
    PenaltyResult<T> r;
    for (int64_t i = 0; i < n; ++i) {
        const T s = std::sqrt(kernels::ops<T>().dot(m, gx.ptr() + i * m, gx.ptr() + i * m));
        r.value += (s - T(1)) * (s - T(1));
        r.grad_norm_mean += s;
    }
    r.value /= static_cast<T>(n);
    r.grad_norm_mean /= static_cast<T>(n);
    return r;
}

// Penalty value plus lambda-scaled parameter gradients, accumulated into the
// critic's Param::grad buffers. Second-order terms are obtained by reverse
// over a forward-mode directional derivative:
//   d/dtheta mean_i (||g_i|| - 1)^2 = d/dtheta sum_i u_i . grad_x D(xbar_i)
// with detached u_i = (2 lambda / N) (||g_i|| - 1) / ||g_i|| * g_i.
template <typename T>
PenaltyResult<T> gradient_penalty_backward(DifferentiableCritic<T>& critic, const Tensor<T>& xbar,
                                           T lambda) {
    Tensor<T> gx = critic_input_gradients(critic, xbar);
    const int64_t n = xbar.dim(0), m = xbar.numel() / n;
    PenaltyResult<T> r;
    Tensor<T> u(xbar.shape);
    for (int64_t i = 0; i < n; ++i) {
        const T* gp = gx.ptr() + i * m;
        const T s = std::sqrt(kernels::ops<T>().dot(m, gp, gp));
        r.value += (s - T(1)) * (s - T(1));
        r.grad_norm_mean += s;
        if (s > T(1e-12)) {
            const T c = T(2) * lambda / static_cast<T>(n) * (s - T(1)) / s;
            T* up = u.ptr() + i * m;
            for (int64_t j = 0; j < m; ++j) up[j] = c * gp[j];
        }
    }
    r.value /= static_cast<T>(n);
    r.grad_norm_mean /= static_cast<T>(n);

    ad::Graph<T> g;
    ad::Dual x{g.leaf(xbar), g.leaf(std::move(u))};
    ad::Dual out = critic.logits_dual(g, x);
    ad::Var h = ad::sum_all(g, out.t);
    g.backward(h);
    g.accumulate_param_grads();
    return r;
}

// Spec-level entry: draws alpha (and perturbation noise when asked) and
// returns the penalty. When lambda > 0, parameter gradients are accumulated.
template <typename T>
PenaltyResult<T> gradient_penalty(DifferentiableCritic<T>& critic, const Tensor<T>& real_batch,
                                  const Tensor<T>& anchor_batch, PenaltyMode mode, Rng& rng,
                                  T lambda = T(0)) {
    if (mode == PenaltyMode::none) return {};
    Tensor<T> xbar = mix_interpolates(real_batch, anchor_batch, rng);
    if (lambda > T(0)) return gradient_penalty_backward(critic, xbar, lambda);
    return gradient_penalty_value(critic, xbar);
}

} // namespace ganloc::loss
