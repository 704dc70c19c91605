#pragma once

#include "ganloc/graph.hpp"
#include "ganloc/rng.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ganloc::nn {

using ad::ConvGeom;
using ad::Dual;
using ad::Graph;
using ad::Param;
using ad::Var;

// Result of normalizing a 2-D weight matrix by its power-iteration spectral
// norm estimate. `state` is the updated left singular vector iterate.
template <typename T>
struct SpectralNormResult {
    Tensor<T> normalized;
    Tensor<T> state;
    T sigma = T(0);
    bool degenerate = false;
};

// weight: [rows, cols] treated as a plain matrix; state: unit vector [rows].
// Runs `iterations` rounds of power iteration and divides by the estimate.
// A zero matrix is returned unchanged with the degenerate flag set.
template <typename T>
SpectralNormResult<T> spectral_normalize(const Tensor<T>& weight, Tensor<T> state,
                                         int iterations = 1) {
    const int64_t rows = weight.dim(0), cols = weight.dim(1);
    if (state.numel() != rows) throw std::invalid_argument("spectral_normalize: bad state size");
    SpectralNormResult<T> r;
    T wnorm = T(0);
    for (int64_t i = 0; i < weight.numel(); ++i) wnorm += weight[i] * weight[i];
    if (wnorm == T(0)) {
        r.normalized = weight;
        r.state = std::move(state);
        r.degenerate = true;
        return r;
    }
    Tensor<T> v({cols});
    const T eps = T(1e-12);
    for (int it = 0; it < iterations; ++it) {
        // v = W^T u / ||.||
        v.fill(T(0));
        for (int64_t i = 0; i < rows; ++i)
            kernels::ops<T>().axpy(cols, state[i], weight.ptr() + i * cols, v.ptr());
        T nv = std::sqrt(kernels::ops<T>().dot(cols, v.ptr(), v.ptr()));
        kernels::ops<T>().scale(cols, T(1) / (nv + eps), v.ptr());
        // u = W v / ||.||
        for (int64_t i = 0; i < rows; ++i)
            state[i] = kernels::ops<T>().dot(cols, weight.ptr() + i * cols, v.ptr());
        T nu = std::sqrt(kernels::ops<T>().dot(rows, state.ptr(), state.ptr()));
        kernels::ops<T>().scale(rows, T(1) / (nu + eps), state.ptr());
    }
    T sigma = T(0);
    for (int64_t i = 0; i < rows; ++i)
        sigma += state[i] * kernels::ops<T>().dot(cols, weight.ptr() + i * cols, v.ptr());
    r.sigma = sigma;
    r.normalized = weight;
    kernels::ops<T>().scale(r.normalized.numel(), T(1) / sigma, r.normalized.ptr());
    r.state = std::move(state);
    return r;
}

// Persistent power-iteration state for a spectrally normalized layer.
// The weight is viewed as [rows = flattened-in, cols = out-channels]; the
// iterate is kept over the out-channel side.
template <typename T>
struct SpectralState {
    Tensor<T> u;     // [cols]
    Tensor<T> v;     // [rows]
    T sigma = T(1);

    void init(int64_t rows, int64_t cols, Rng& rng) {
        u = Tensor<T>({cols});
        v = Tensor<T>({rows});
        for (int64_t i = 0; i < cols; ++i) u[i] = static_cast<T>(rng.normal());
        T n = std::sqrt(kernels::ops<T>().dot(cols, u.ptr(), u.ptr()));
        kernels::ops<T>().scale(cols, T(1) / n, u.ptr());
    }

    // One power-iteration round on w2d = weight viewed as [rows, cols].
    void iterate(const Tensor<T>& w, int64_t rows, int64_t cols) {
        const T eps = T(1e-12);
        // v = W u / ||.||  (v over rows)
        for (int64_t i = 0; i < rows; ++i)
            v[i] = kernels::ops<T>().dot(cols, w.ptr() + i * cols, u.ptr());
        T nv = std::sqrt(kernels::ops<T>().dot(rows, v.ptr(), v.ptr()));
        kernels::ops<T>().scale(rows, T(1) / (nv + eps), v.ptr());
        // u = W^T v / ||.||
        u.fill(T(0));
        for (int64_t i = 0; i < rows; ++i)
            kernels::ops<T>().axpy(cols, v[i], w.ptr() + i * cols, u.ptr());
        T nu = std::sqrt(kernels::ops<T>().dot(cols, u.ptr(), u.ptr()));
        kernels::ops<T>().scale(cols, T(1) / (nu + eps), u.ptr());
        sigma = T(0);
        for (int64_t i = 0; i < rows; ++i)
            sigma += v[i] * kernels::ops<T>().dot(cols, w.ptr() + i * cols, u.ptr());
    }

    // Graph node for W / sigma with sigma = v^T W u built from the frozen
    // u, v iterates (gradients flow through W on both paths).
    Var normalized_weight(Graph<T>& g, Var wv, int64_t rows, int64_t cols) {
        auto outer = std::make_shared<Tensor<T>>(std::vector<int64_t>{rows, cols});
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < cols; ++j)
                (*outer)[i * cols + j] = v[i] * u[j];
        outer->shape = g.val(wv).shape;
        Var s = ad::sum_all(g, ad::mul_const(g, wv, outer));
        return ad::scale_by(g, wv, ad::recip(g, s));
    }
};

// frozen_stats: batch statistics are used (like train) but nothing mutates —
// no running-average update, no power-iteration step. Penalty passes use it.
enum class Mode { train, eval, frozen_stats };

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Var forward(Graph<T>& g, Var x, Mode mode) = 0;
    // Primal/tangent forward for directional-derivative graphs. Layers that
    // never sit on a penalty path may keep the default.
    virtual Dual forward_dual(Graph<T>& g, Dual x) {
        (void)g;
        (void)x;
        throw std::logic_error("forward_dual not supported by this layer");
    }
    virtual std::vector<Param<T>*> params() { return {}; }
    virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
};

template <typename T>
class Conv2d : public Layer<T> {
public:
    Param<T> weight; // [kh,kw,Cin,Cout]
    Param<T> bias;   // [Cout]
    ConvGeom geom;
    bool spectral = false;
    SpectralState<T> sn;

    Conv2d(const std::string& name, int64_t kh, int64_t kw, int64_t cin, int64_t cout,
           int64_t stride, int64_t pad_lo, int64_t pad_hi, bool use_spectral, Rng& rng,
           T init_std = T(0.02)) {
        geom.kh = kh;
        geom.kw = kw;
        geom.stride = stride;
        geom.pad_t = pad_lo;
        geom.pad_l = pad_lo;
        geom.pad_b = pad_hi;
        geom.pad_r = pad_hi;
        Tensor<T> w({kh, kw, cin, cout});
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, init_std));
        weight = Param<T>(name + ".weight", std::move(w));
        bias = Param<T>(name + ".bias", Tensor<T>({cout}));
        spectral = use_spectral;
        if (spectral) {
            sn.init(kh * kw * cin, cout, rng);
            sn.iterate(weight.value, kh * kw * cin, cout);
        }
    }

    Var weight_var(Graph<T>& g, Mode mode) {
        Var wv = g.param(weight);
        if (!spectral) return wv;
        const int64_t cols = weight.value.shape.back();
        const int64_t rows = weight.value.numel() / cols;
        if (mode == Mode::train) sn.iterate(weight.value, rows, cols);
        return sn.normalized_weight(g, wv, rows, cols);
    }

    Var forward(Graph<T>& g, Var x, Mode mode) override {
        return ad::conv2d(g, x, weight_var(g, mode), g.param(bias), geom);
    }

    Dual forward_dual(Graph<T>& g, Dual x) override {
        Var wv = weight_var(g, Mode::eval);
        Var y = ad::conv2d(g, x.v, wv, g.param(bias), geom);
        Var yt = ad::conv2d(g, x.t, wv, Var{}, geom);
        return {y, yt};
    }

    std::vector<Param<T>*> params() override { return {&weight, &bias}; }
    std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
        if (!spectral) return {};
        return {{weight.name + ".sn_u", &sn.u}, {weight.name + ".sn_v", &sn.v}};
    }
};

template <typename T>
class ConvTranspose2d : public Layer<T> {
public:
    Param<T> weight; // [kh,kw,Cout,Cin]
    Param<T> bias;   // [Cout]
    ConvGeom geom;

    ConvTranspose2d(const std::string& name, int64_t kh, int64_t kw, int64_t cin, int64_t cout,
                    int64_t stride, int64_t pad_lo, int64_t pad_hi, Rng& rng, T init_std = T(0.02)) {
        geom.kh = kh;
        geom.kw = kw;
        geom.stride = stride;
        geom.pad_t = pad_lo;
        geom.pad_l = pad_lo;
        geom.pad_b = pad_hi;
        geom.pad_r = pad_hi;
        Tensor<T> w({kh, kw, cout, cin});
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, init_std));
        weight = Param<T>(name + ".weight", std::move(w));
        bias = Param<T>(name + ".bias", Tensor<T>({cout}));
    }

    Var forward(Graph<T>& g, Var x, Mode) override {
        return ad::conv_transpose2d(g, x, g.param(weight), g.param(bias), geom);
    }

    std::vector<Param<T>*> params() override { return {&weight, &bias}; }
};

template <typename T>
class Linear : public Layer<T> {
public:
    Param<T> weight; // [O,I]
    Param<T> bias;   // [O]
    bool spectral = false;
    SpectralState<T> sn;

    Linear(const std::string& name, int64_t in, int64_t out, bool use_spectral, Rng& rng,
           T init_std = T(0.02)) {
        Tensor<T> w({out, in});
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, init_std));
        weight = Param<T>(name + ".weight", std::move(w));
        bias = Param<T>(name + ".bias", Tensor<T>({out}));
        spectral = use_spectral;
        if (spectral) {
            sn.init(out, in, rng); // rows = out, cols = in
            sn.iterate(weight.value, out, in);
        }
    }

    Var weight_var(Graph<T>& g, Mode mode) {
        Var wv = g.param(weight);
        if (!spectral) return wv;
        const int64_t rows = weight.value.dim(0), cols = weight.value.dim(1);
        if (mode == Mode::train) sn.iterate(weight.value, rows, cols);
        return sn.normalized_weight(g, wv, rows, cols);
    }

    Var forward(Graph<T>& g, Var x, Mode mode) override {
        return ad::linear(g, x, weight_var(g, mode), g.param(bias));
    }

    Dual forward_dual(Graph<T>& g, Dual x) override {
        Var wv = weight_var(g, Mode::eval);
        Var y = ad::linear(g, x.v, wv, g.param(bias));
        Var yt = ad::linear(g, x.t, wv, Var{});
        return {y, yt};
    }

    std::vector<Param<T>*> params() override { return {&weight, &bias}; }
    std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
        if (!spectral) return {};
        return {{weight.name + ".sn_u", &sn.u}, {weight.name + ".sn_v", &sn.v}};
    }
};

template <typename T>
class BatchNorm : public Layer<T> {
public:
    Param<T> gamma, beta;
    Tensor<T> running_mean, running_var;
    T eps = T(1e-5);
    T momentum = T(0.9);

    BatchNorm(const std::string& name, int64_t channels) {
        gamma = Param<T>(name + ".gamma", Tensor<T>({channels}, T(1)));
        beta = Param<T>(name + ".beta", Tensor<T>({channels}));
        running_mean = Tensor<T>({channels});
        running_var = Tensor<T>({channels}, T(1));
    }

    Var forward(Graph<T>& g, Var x, Mode mode) override {
        const auto shape = g.val(x).shape;
        if (mode != Mode::eval) {
            Var m = ad::mean_per_channel(g, x);
            Var xc = ad::sub(g, x, ad::broadcast_channel(g, m, shape));
            Var v = ad::mean_per_channel(g, ad::square(g, xc));
            if (mode == Mode::train) update_running(g.val(m), g.val(v));
            Var inv = ad::rsqrt(g, ad::add_scalar(g, v, eps));
            Var xn = ad::mul(g, xc, ad::broadcast_channel(g, inv, shape));
            return affine(g, xn, shape);
        }
        return eval_normalize(g, x, shape);
    }

    Dual forward_dual(Graph<T>& g, Dual x) override {
        // Penalty paths go through training-mode statistics of the mixed batch.
        const auto shape = g.val(x.v).shape;
        Var m = ad::mean_per_channel(g, x.v);
        Var mt = ad::mean_per_channel(g, x.t);
        Var xc = ad::sub(g, x.v, ad::broadcast_channel(g, m, shape));
        Var xct = ad::sub(g, x.t, ad::broadcast_channel(g, mt, shape));
        Var v = ad::mean_per_channel(g, ad::square(g, xc));
        Var vt = ad::scale(g, ad::mean_per_channel(g, ad::mul(g, xc, xct)), T(2));
        Var inv = ad::rsqrt(g, ad::add_scalar(g, v, eps));
        Var inv3 = ad::mul(g, ad::mul(g, inv, inv), inv);
        Var invt = ad::scale(g, ad::mul(g, inv3, vt), T(-0.5));
        Var xn = ad::mul(g, xc, ad::broadcast_channel(g, inv, shape));
        Var xnt = ad::add(g, ad::mul(g, xct, ad::broadcast_channel(g, inv, shape)),
                          ad::mul(g, xc, ad::broadcast_channel(g, invt, shape)));
        Var y = affine(g, xn, shape);
        Var yt = ad::mul(g, xnt, ad::broadcast_channel(g, g.param(gamma), shape));
        return {y, yt};
    }

    std::vector<Param<T>*> params() override { return {&gamma, &beta}; }
    std::vector<std::pair<std::string, Tensor<T>*>> buffers() override {
        return {{gamma.name + ".running_mean", &running_mean},
                {gamma.name + ".running_var", &running_var}};
    }

private:
    void update_running(const Tensor<T>& m, const Tensor<T>& v) {
        for (int64_t c = 0; c < m.numel(); ++c) {
            running_mean[c] = momentum * running_mean[c] + (T(1) - momentum) * m[c];
            running_var[c] = momentum * running_var[c] + (T(1) - momentum) * v[c];
        }
    }

    Var affine(Graph<T>& g, Var xn, const std::vector<int64_t>& shape) {
        Var sg = ad::mul(g, xn, ad::broadcast_channel(g, g.param(gamma), shape));
        return ad::add(g, sg, ad::broadcast_channel(g, g.param(beta), shape));
    }

    Var eval_normalize(Graph<T>& g, Var x, const std::vector<int64_t>& shape) {
        const int64_t C = shape.back();
        auto scale_c = std::make_shared<Tensor<T>>(shape);
        Tensor<T> shift(shape);
        for (int64_t r = 0; r < g.val(x).numel() / C; ++r) {
            for (int64_t c = 0; c < C; ++c) {
                const T inv = T(1) / std::sqrt(running_var[c] + eps);
                (*scale_c)[r * C + c] = inv;
                shift[r * C + c] = -running_mean[c] * inv;
            }
        }
        Var xn = ad::add(g, ad::mul_const(g, x, scale_c), g.leaf(std::move(shift)));
        return affine(g, xn, shape);
    }
};

// Normalization over each image's (H,W,C) extent, per-channel affine.
template <typename T>
class LayerNorm : public Layer<T> {
public:
    Param<T> gamma, beta;
    T eps = T(1e-5);

    LayerNorm(const std::string& name, int64_t channels) {
        gamma = Param<T>(name + ".gamma", Tensor<T>({channels}, T(1)));
        beta = Param<T>(name + ".beta", Tensor<T>({channels}));
    }

    Var forward(Graph<T>& g, Var x, Mode) override {
        const auto shape = g.val(x).shape;
        Var m = ad::mean_per_image(g, x);
        Var xc = ad::sub(g, x, ad::broadcast_image(g, m, shape));
        Var v = ad::mean_per_image(g, ad::square(g, xc));
        Var inv = ad::rsqrt(g, ad::add_scalar(g, v, eps));
        Var xn = ad::mul(g, xc, ad::broadcast_image(g, inv, shape));
        return affine(g, xn, shape);
    }

    Dual forward_dual(Graph<T>& g, Dual x) override {
        const auto shape = g.val(x.v).shape;
        Var m = ad::mean_per_image(g, x.v);
        Var mt = ad::mean_per_image(g, x.t);
        Var xc = ad::sub(g, x.v, ad::broadcast_image(g, m, shape));
        Var xct = ad::sub(g, x.t, ad::broadcast_image(g, mt, shape));
        Var v = ad::mean_per_image(g, ad::square(g, xc));
        Var vt = ad::scale(g, ad::mean_per_image(g, ad::mul(g, xc, xct)), T(2));
        Var inv = ad::rsqrt(g, ad::add_scalar(g, v, eps));
        Var inv3 = ad::mul(g, ad::mul(g, inv, inv), inv);
        Var invt = ad::scale(g, ad::mul(g, inv3, vt), T(-0.5));
        Var xn = ad::mul(g, xc, ad::broadcast_image(g, inv, shape));
        Var xnt = ad::add(g, ad::mul(g, xct, ad::broadcast_image(g, inv, shape)),
                          ad::mul(g, xc, ad::broadcast_image(g, invt, shape)));
        Var y = affine(g, xn, shape);
        Var yt = ad::mul(g, xnt, ad::broadcast_channel(g, g.param(gamma), shape));
        return {y, yt};
    }

    std::vector<Param<T>*> params() override { return {&gamma, &beta}; }

private:
    Var affine(Graph<T>& g, Var xn, const std::vector<int64_t>& shape) {
        Var sg = ad::mul(g, xn, ad::broadcast_channel(g, g.param(gamma), shape));
        return ad::add(g, sg, ad::broadcast_channel(g, g.param(beta), shape));
    }
};

template <typename T>
class LeakyReLU : public Layer<T> {
public:
    T slope;
    explicit LeakyReLU(T s) : slope(s) {}

    Var forward(Graph<T>& g, Var x, Mode) override { return ad::leaky_relu(g, x, slope); }

    Dual forward_dual(Graph<T>& g, Dual x) override {
        Var y = ad::leaky_relu(g, x.v, slope);
        // lrelu'(x) is piecewise constant; the tangent mask is detached
        auto mask = std::make_shared<Tensor<T>>(g.val(x.v).shape);
        const auto& xv = g.val(x.v);
        for (int64_t i = 0; i < xv.numel(); ++i) (*mask)[i] = xv[i] > T(0) ? T(1) : slope;
        return {y, ad::mul_const(g, x.t, mask)};
    }
};

template <typename T>
class ReLU : public Layer<T> {
public:
    Var forward(Graph<T>& g, Var x, Mode) override { return ad::relu(g, x); }
};

template <typename T>
class Tanh : public Layer<T> {
public:
    Var forward(Graph<T>& g, Var x, Mode) override { return ad::tanh_op(g, x); }
};

template <typename T>
class GlobalAveragePool : public Layer<T> {
public:
    Var forward(Graph<T>& g, Var x, Mode) override { return ad::gap(g, x); }
    Dual forward_dual(Graph<T>& g, Dual x) override {
        return {ad::gap(g, x.v), ad::gap(g, x.t)};
    }
};

} // namespace ganloc::nn
