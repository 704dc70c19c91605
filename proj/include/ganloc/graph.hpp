#pragma once

#include "ganloc/kernels/kernels.hpp"
#include "ganloc/tensor.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ganloc::ad {

// Trainable tensor living outside any graph; graphs accumulate into .grad.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
    void zero_grad() { grad.fill(T(0)); }
};

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Primal/tangent pair for forward-mode directional derivatives built on the
// same tape (reverse over the pair yields second-order terms).
struct Dual {
    Var v; // value
    Var t; // tangent
};

struct ConvGeom {
    int64_t kh = 0, kw = 0;
    int64_t stride = 1;
    int64_t pad_t = 0, pad_l = 0, pad_b = 0, pad_r = 0;
};

// Dynamic reverse-mode tape. Nodes are appended in topological order.
template <typename T>
class Graph {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::function<void(Graph&, int)> backward;
        Param<T>* param = nullptr;
    };

    std::vector<Node> nodes;

    Var leaf(Tensor<T> v, bool requires_grad = false) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        nodes.push_back(std::move(n));
        return Var{static_cast<int>(nodes.size()) - 1};
    }

    Var param(Param<T>& p) {
        Var v = leaf(p.value, true);
        nodes[v.idx].param = &p;
        return v;
    }

    Var op(Tensor<T> v, std::initializer_list<Var> parents,
           std::function<void(Graph&, int)> bw) {
        bool rg = false;
        for (Var p : parents) rg = rg || nodes[p.idx].requires_grad;
        Node n;
        n.value = std::move(v);
        n.requires_grad = rg;
        if (rg) n.backward = std::move(bw);
        nodes.push_back(std::move(n));
        return Var{static_cast<int>(nodes.size()) - 1};
    }

    Tensor<T>& val(Var v) { return nodes[v.idx].value; }
    const Tensor<T>& val(Var v) const { return nodes[v.idx].value; }

    bool requires_grad(Var v) const { return nodes[v.idx].requires_grad; }

    Tensor<T>& grad_buf(int idx) {
        Node& n = nodes[idx];
        if (!n.has_grad) {
            n.grad = Tensor<T>(n.value.shape);
            n.has_grad = true;
        }
        return n.grad;
    }

    // Accumulate g into the gradient of v (only when v wants gradients).
    void accum(Var v, const Tensor<T>& g) {
        if (!nodes[v.idx].requires_grad) return;
        Tensor<T>& dst = grad_buf(v.idx);
        kernels::ops<T>().axpy(dst.numel(), T(1), g.ptr(), dst.ptr());
    }

    const Tensor<T>* grad_of(Var v) const {
        return nodes[v.idx].has_grad ? &nodes[v.idx].grad : nullptr;
    }

    // Reverse sweep from a scalar root. Does NOT touch Param::grad;
    // call accumulate_param_grads() for that.
    void backward(Var root) {
        Node& r = nodes[root.idx];
        if (r.value.numel() != 1) throw std::logic_error("backward: root must be scalar");
        if (!r.requires_grad) return;
        grad_buf(root.idx).fill(T(1));
        for (int i = root.idx; i >= 0; --i) {
            Node& n = nodes[i];
            if (n.has_grad && n.requires_grad && n.backward) n.backward(*this, i);
        }
    }

    void accumulate_param_grads() {
        for (Node& n : nodes) {
            if (n.param && n.has_grad)
                kernels::ops<T>().axpy(n.grad.numel(), T(1), n.grad.ptr(), n.param->grad.ptr());
        }
    }
};

// ---------------------------------------------------------------------------
// im2col / col2im with asymmetric padding (shared by conv and transposed conv)
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const Tensor<T>& src, const ConvGeom& g, int64_t oh, int64_t ow, Tensor<T>& cols) {
    const int64_t N = src.dim(0), H = src.dim(1), W = src.dim(2), C = src.dim(3);
    const int64_t row_len = g.kh * g.kw * C;
    cols = Tensor<T>({N * oh * ow, row_len});
    T* dst = cols.ptr();
    const T* sp = src.ptr();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t y = 0; y < oh; ++y) {
            for (int64_t x = 0; x < ow; ++x) {
                for (int64_t ki = 0; ki < g.kh; ++ki) {
                    const int64_t h = y * g.stride - g.pad_t + ki;
                    if (h < 0 || h >= H) {
                        for (int64_t q = 0; q < g.kw * C; ++q) *dst++ = T(0);
                        continue;
                    }
                    for (int64_t kj = 0; kj < g.kw; ++kj) {
                        const int64_t w = x * g.stride - g.pad_l + kj;
                        if (w < 0 || w >= W) {
                            for (int64_t c = 0; c < C; ++c) *dst++ = T(0);
                        } else {
                            const T* s = sp + ((n * H + h) * W + w) * C;
                            for (int64_t c = 0; c < C; ++c) *dst++ = s[c];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const Tensor<T>& cols, const ConvGeom& g, int64_t oh, int64_t ow, Tensor<T>& dst) {
    const int64_t N = dst.dim(0), H = dst.dim(1), W = dst.dim(2), C = dst.dim(3);
    const T* sp = cols.ptr();
    T* dp = dst.ptr();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t y = 0; y < oh; ++y) {
            for (int64_t x = 0; x < ow; ++x) {
                for (int64_t ki = 0; ki < g.kh; ++ki) {
                    const int64_t h = y * g.stride - g.pad_t + ki;
                    if (h < 0 || h >= H) {
                        sp += g.kw * C;
                        continue;
                    }
                    for (int64_t kj = 0; kj < g.kw; ++kj) {
                        const int64_t w = x * g.stride - g.pad_l + kj;
                        if (w < 0 || w >= W) {
                            sp += C;
                        } else {
                            T* d = dp + ((n * H + h) * W + w) * C;
                            for (int64_t c = 0; c < C; ++c) d[c] += sp[c];
                            sp += C;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Primitive ops
// ---------------------------------------------------------------------------

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
    if (!g.val(a).same_shape(g.val(b))) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out(g.val(a).shape);
    kernels::ops<T>().add(out.numel(), g.val(a).ptr(), g.val(b).ptr(), out.ptr());
    return g.op(std::move(out), {a, b}, [a, b](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        gr.accum(a, gy);
        gr.accum(b, gy);
    });
}

template <typename T>
Var sub(Graph<T>& g, Var a, Var b) {
    if (!g.val(a).same_shape(g.val(b))) throw std::invalid_argument("sub: shape mismatch");
    Tensor<T> out(g.val(a).shape);
    kernels::ops<T>().sub(out.numel(), g.val(a).ptr(), g.val(b).ptr(), out.ptr());
    return g.op(std::move(out), {a, b}, [a, b](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        gr.accum(a, gy);
        if (gr.requires_grad(b)) {
            Tensor<T> nb(gy.shape);
            for (int64_t i = 0; i < gy.numel(); ++i) nb[i] = -gy[i];
            gr.accum(b, nb);
        }
    });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
    if (!g.val(a).same_shape(g.val(b))) throw std::invalid_argument("mul: shape mismatch");
    Tensor<T> out(g.val(a).shape);
    kernels::ops<T>().mul(out.numel(), g.val(a).ptr(), g.val(b).ptr(), out.ptr());
    return g.op(std::move(out), {a, b}, [a, b](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        if (gr.requires_grad(a)) {
            Tensor<T> t(gy.shape);
            kernels::ops<T>().mul(gy.numel(), gy.ptr(), gr.val(b).ptr(), t.ptr());
            gr.accum(a, t);
        }
        if (gr.requires_grad(b)) {
            Tensor<T> t(gy.shape);
            kernels::ops<T>().mul(gy.numel(), gy.ptr(), gr.val(a).ptr(), t.ptr());
            gr.accum(b, t);
        }
    });
}

template <typename T>
Var mul_const(Graph<T>& g, Var a, std::shared_ptr<Tensor<T>> c) {
    if (!g.val(a).same_shape(*c)) throw std::invalid_argument("mul_const: shape mismatch");
    Tensor<T> out(g.val(a).shape);
    kernels::ops<T>().mul(out.numel(), g.val(a).ptr(), c->ptr(), out.ptr());
    return g.op(std::move(out), {a}, [a, c](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t(gy.shape);
        kernels::ops<T>().mul(gy.numel(), gy.ptr(), c->ptr(), t.ptr());
        gr.accum(a, t);
    });
}

template <typename T>
Var scale(Graph<T>& g, Var a, T c) {
    Tensor<T> out = g.val(a);
    kernels::ops<T>().scale(out.numel(), c, out.ptr());
    return g.op(std::move(out), {a}, [a, c](Graph<T>& gr, int self) {
        Tensor<T> t = gr.nodes[self].grad;
        kernels::ops<T>().scale(t.numel(), c, t.ptr());
        gr.accum(a, t);
    });
}

template <typename T>
Var add_scalar(Graph<T>& g, Var a, T c) {
    Tensor<T> out = g.val(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        gr.accum(a, gr.nodes[self].grad);
    });
}

template <typename T>
Var neg(Graph<T>& g, Var a) {
    return scale(g, a, T(-1));
}

// y = x * s, s a scalar (1-element) variable
template <typename T>
Var scale_by(Graph<T>& g, Var x, Var s) {
    if (g.val(s).numel() != 1) throw std::invalid_argument("scale_by: s must be scalar");
    Tensor<T> out = g.val(x);
    kernels::ops<T>().scale(out.numel(), g.val(s)[0], out.ptr());
    return g.op(std::move(out), {x, s}, [x, s](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        if (gr.requires_grad(x)) {
            Tensor<T> t = gy;
            kernels::ops<T>().scale(t.numel(), gr.val(s)[0], t.ptr());
            gr.accum(x, t);
        }
        if (gr.requires_grad(s)) {
            Tensor<T> t({1});
            t[0] = kernels::ops<T>().dot(gy.numel(), gy.ptr(), gr.val(x).ptr());
            gr.accum(s, t);
        }
    });
}

template <typename T>
Var reshape(Graph<T>& g, Var a, std::vector<int64_t> shape) {
    Tensor<T> out = g.val(a).reshaped(shape);
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        Tensor<T> t = gr.nodes[self].grad.reshaped(gr.val(a).shape);
        gr.accum(a, t);
    });
}

template <typename T>
Var leaky_relu(Graph<T>& g, Var a, T slope) {
    Tensor<T> out(g.val(a).shape);
    kernels::ops<T>().leaky_relu_fwd(out.numel(), g.val(a).ptr(), out.ptr(), slope);
    return g.op(std::move(out), {a}, [a, slope](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t(gy.shape);
        kernels::ops<T>().leaky_relu_bwd(gy.numel(), gr.val(a).ptr(), gy.ptr(), t.ptr(), slope);
        gr.accum(a, t);
    });
}

template <typename T>
Var relu(Graph<T>& g, Var a) {
    return leaky_relu(g, a, T(0));
}

template <typename T>
Var tanh_op(Graph<T>& g, Var a) {
    Tensor<T> out(g.val(a).shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(g.val(a)[i]);
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        const Tensor<T>& y = gr.nodes[self].value;
        Tensor<T> t(gy.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) t[i] = gy[i] * (T(1) - y[i] * y[i]);
        gr.accum(a, t);
    });
}

// log(1 + exp(x)), numerically stable over the whole real line
template <typename T>
Var softplus(Graph<T>& g, Var a) {
    Tensor<T> out(g.val(a).shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        const T x = g.val(a)[i];
        out[i] = x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t(gy.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) {
            const T x = gr.val(a)[i];
            const T s = x > T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
            t[i] = gy[i] * s;
        }
        gr.accum(a, t);
    });
}

template <typename T>
Var square(Graph<T>& g, Var a) {
    Tensor<T> out(g.val(a).shape);
    kernels::ops<T>().mul(out.numel(), g.val(a).ptr(), g.val(a).ptr(), out.ptr());
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t(gy.shape);
        kernels::ops<T>().mul(gy.numel(), gy.ptr(), gr.val(a).ptr(), t.ptr());
        kernels::ops<T>().scale(t.numel(), T(2), t.ptr());
        gr.accum(a, t);
    });
}

template <typename T>
Var rsqrt(Graph<T>& g, Var a) {
    Tensor<T> out(g.val(a).shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / std::sqrt(g.val(a)[i]);
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        const Tensor<T>& y = gr.nodes[self].value;
        Tensor<T> t(gy.shape);
        for (int64_t i = 0; i < gy.numel(); ++i)
            t[i] = gy[i] * T(-0.5) * y[i] * y[i] * y[i];
        gr.accum(a, t);
    });
}

template <typename T>
Var recip(Graph<T>& g, Var a) {
    Tensor<T> out(g.val(a).shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = T(1) / g.val(a)[i];
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        const Tensor<T>& y = gr.nodes[self].value;
        Tensor<T> t(gy.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) t[i] = -gy[i] * y[i] * y[i];
        gr.accum(a, t);
    });
}

// ---------------------------------------------------------------------------
// Reductions / broadcasts (NHWC conventions)
// ---------------------------------------------------------------------------

template <typename T>
Var sum_all(Graph<T>& g, Var a) {
    Tensor<T> out({1});
    out[0] = kernels::ops<T>().sum(g.val(a).numel(), g.val(a).ptr());
    return g.op(std::move(out), {a}, [a](Graph<T>& gr, int self) {
        const T gy = gr.nodes[self].grad[0];
        Tensor<T> t(gr.val(a).shape, gy);
        gr.accum(a, t);
    });
}

template <typename T>
Var mean_all(Graph<T>& g, Var a) {
    const T inv = T(1) / static_cast<T>(g.val(a).numel());
    return scale(g, sum_all(g, a), inv);
}

// [N,H,W,C] -> [N], mean over H,W,C
template <typename T>
Var mean_per_image(Graph<T>& g, Var a) {
    const auto& x = g.val(a);
    const int64_t N = x.dim(0), M = x.numel() / x.dim(0);
    Tensor<T> out({N});
    for (int64_t n = 0; n < N; ++n)
        out[n] = kernels::ops<T>().sum(M, x.ptr() + n * M) / static_cast<T>(M);
    return g.op(std::move(out), {a}, [a, N, M](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t(gr.val(a).shape);
        for (int64_t n = 0; n < N; ++n) {
            const T v = gy[n] / static_cast<T>(M);
            T* p = t.ptr() + n * M;
            for (int64_t i = 0; i < M; ++i) p[i] = v;
        }
        gr.accum(a, t);
    });
}

// [N,H,W,C] -> [C], mean over N,H,W
template <typename T>
Var mean_per_channel(Graph<T>& g, Var a) {
    const auto& x = g.val(a);
    const int64_t C = x.shape.back(), R = x.numel() / C;
    Tensor<T> out({C});
    for (int64_t r = 0; r < R; ++r) {
        const T* p = x.ptr() + r * C;
        for (int64_t c = 0; c < C; ++c) out[c] += p[c];
    }
    for (int64_t c = 0; c < C; ++c) out[c] /= static_cast<T>(R);
    return g.op(std::move(out), {a}, [a, C, R](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t(gr.val(a).shape);
        for (int64_t r = 0; r < R; ++r) {
            T* p = t.ptr() + r * C;
            for (int64_t c = 0; c < C; ++c) p[c] = gy[c] / static_cast<T>(R);
        }
        gr.accum(a, t);
    });
}

// [N,H,W,C] -> [N,C], spatial mean (global average pooling)
template <typename T>
Var gap(Graph<T>& g, Var a) {
    const auto& x = g.val(a);
    const int64_t N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
    Tensor<T> out({N, C});
    for (int64_t n = 0; n < N; ++n) {
        T* o = out.ptr() + n * C;
        for (int64_t s = 0; s < HW; ++s) {
            const T* p = x.ptr() + (n * HW + s) * C;
            for (int64_t c = 0; c < C; ++c) o[c] += p[c];
        }
        for (int64_t c = 0; c < C; ++c) o[c] /= static_cast<T>(HW);
    }
    return g.op(std::move(out), {a}, [a, N, HW, C](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t(gr.val(a).shape);
        for (int64_t n = 0; n < N; ++n) {
            const T* go = gy.ptr() + n * C;
            for (int64_t s = 0; s < HW; ++s) {
                T* p = t.ptr() + (n * HW + s) * C;
                for (int64_t c = 0; c < C; ++c) p[c] = go[c] / static_cast<T>(HW);
            }
        }
        gr.accum(a, t);
    });
}

// [N] -> [N,H,W,C]
template <typename T>
Var broadcast_image(Graph<T>& g, Var a, const std::vector<int64_t>& shape) {
    const auto& x = g.val(a);
    const int64_t N = shape[0];
    const int64_t M = Tensor<T>::numel_of(shape) / N;
    Tensor<T> out(shape);
    for (int64_t n = 0; n < N; ++n) {
        T* p = out.ptr() + n * M;
        for (int64_t i = 0; i < M; ++i) p[i] = x[n];
    }
    return g.op(std::move(out), {a}, [a, N, M](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t({N});
        for (int64_t n = 0; n < N; ++n)
            t[n] = kernels::ops<T>().sum(M, gy.ptr() + n * M);
        gr.accum(a, t);
    });
}

// [C] -> [N,H,W,C]
template <typename T>
Var broadcast_channel(Graph<T>& g, Var a, const std::vector<int64_t>& shape) {
    const int64_t C = shape.back();
    const int64_t R = Tensor<T>::numel_of(shape) / C;
    const auto& x = g.val(a);
    Tensor<T> out(shape);
    for (int64_t r = 0; r < R; ++r) {
        T* p = out.ptr() + r * C;
        for (int64_t c = 0; c < C; ++c) p[c] = x[c];
    }
    return g.op(std::move(out), {a}, [a, C, R](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        Tensor<T> t({C});
        for (int64_t r = 0; r < R; ++r) {
            const T* p = gy.ptr() + r * C;
            for (int64_t c = 0; c < C; ++c) t[c] += p[c];
        }
        gr.accum(a, t);
    });
}

// ---------------------------------------------------------------------------
// Linear / convolutions
// ---------------------------------------------------------------------------

// x:[N,I], w:[O,I], b:[O] (optional) -> [N,O]
template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
    const auto& xv = g.val(x);
    const auto& wv = g.val(w);
    const int64_t N = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
    if (wv.dim(1) != I) throw std::invalid_argument("linear: weight shape mismatch");
    Tensor<T> out({N, O});
    kernels::ops<T>().gemm(false, true, N, O, I, T(1), xv.ptr(), I, wv.ptr(), I, T(0), out.ptr(), O);
    if (b.valid()) {
        const auto& bv = g.val(b);
        for (int64_t n = 0; n < N; ++n)
            kernels::ops<T>().axpy(O, T(1), bv.ptr(), out.ptr() + n * O);
    }
    return g.op(std::move(out), b.valid() ? std::initializer_list<Var>{x, w, b}
                                          : std::initializer_list<Var>{x, w},
                [x, w, b, N, I, O](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        if (gr.requires_grad(x)) {
            Tensor<T> gx({N, I});
            kernels::ops<T>().gemm(false, false, N, I, O, T(1), gy.ptr(), O,
                                   gr.val(w).ptr(), I, T(0), gx.ptr(), I);
            gr.accum(x, gx);
        }
        if (gr.requires_grad(w)) {
            Tensor<T> gw({O, I});
            kernels::ops<T>().gemm(true, false, O, I, N, T(1), gy.ptr(), O,
                                   gr.val(x).ptr(), I, T(0), gw.ptr(), I);
            gr.accum(w, gw);
        }
        if (b.valid() && gr.requires_grad(b)) {
            Tensor<T> gb({O});
            for (int64_t n = 0; n < N; ++n)
                kernels::ops<T>().axpy(O, T(1), gy.ptr() + n * O, gb.ptr());
            gr.accum(b, gb);
        }
    });
}

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t plo, int64_t phi) {
    return (in + plo + phi - k) / stride + 1;
}

// x:[N,H,W,Cin], w:[kh,kw,Cin,Cout], b:[Cout] (optional)
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, const ConvGeom& geom) {
    const auto& xv = g.val(x);
    const auto& wv = g.val(w);
    const int64_t N = xv.dim(0), H = xv.dim(1), W = xv.dim(2), Cin = xv.dim(3);
    const int64_t Cout = wv.dim(3);
    if (wv.dim(0) != geom.kh || wv.dim(1) != geom.kw || wv.dim(2) != Cin)
        throw std::invalid_argument("conv2d: weight shape mismatch");
    const int64_t OH = conv_out_dim(H, geom.kh, geom.stride, geom.pad_t, geom.pad_b);
    const int64_t OW = conv_out_dim(W, geom.kw, geom.stride, geom.pad_l, geom.pad_r);
    const int64_t RK = geom.kh * geom.kw * Cin;

    Tensor<T> cols;
    im2col(xv, geom, OH, OW, cols);
    Tensor<T> out({N, OH, OW, Cout});
    kernels::ops<T>().gemm(false, false, N * OH * OW, Cout, RK, T(1), cols.ptr(), RK,
                           wv.ptr(), Cout, T(0), out.ptr(), Cout);
    if (b.valid()) {
        const auto& bv = g.val(b);
        for (int64_t r = 0; r < N * OH * OW; ++r)
            kernels::ops<T>().axpy(Cout, T(1), bv.ptr(), out.ptr() + r * Cout);
    }
    return g.op(std::move(out), b.valid() ? std::initializer_list<Var>{x, w, b}
                                          : std::initializer_list<Var>{x, w},
                [x, w, b, geom, N, OH, OW, Cout, RK](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        const int64_t rows = N * OH * OW;
        if (gr.requires_grad(w)) {
            Tensor<T> cols2;
            im2col(gr.val(x), geom, OH, OW, cols2);
            Tensor<T> gw(gr.val(w).shape);
            kernels::ops<T>().gemm(true, false, RK, Cout, rows, T(1), cols2.ptr(), RK,
                                   gy.ptr(), Cout, T(0), gw.ptr(), Cout);
            gr.accum(w, gw);
        }
        if (gr.requires_grad(x)) {
            Tensor<T> gcols({rows, RK});
            kernels::ops<T>().gemm(false, true, rows, RK, Cout, T(1), gy.ptr(), Cout,
                                   gr.val(w).ptr(), Cout, T(0), gcols.ptr(), RK);
            Tensor<T> gx(gr.val(x).shape);
            col2im_add(gcols, geom, OH, OW, gx);
            gr.accum(x, gx);
        }
        if (b.valid() && gr.requires_grad(b)) {
            Tensor<T> gb({Cout});
            for (int64_t r = 0; r < rows; ++r)
                kernels::ops<T>().axpy(Cout, T(1), gy.ptr() + r * Cout, gb.ptr());
            gr.accum(b, gb);
        }
    });
}

// x:[N,h,w,Cin], w:[kh,kw,Cout,Cin], output [N,OH,OW,Cout] where
// OH = (h-1)*stride - (pad_t+pad_b) + kh
template <typename T>
Var conv_transpose2d(Graph<T>& g, Var x, Var w, Var b, const ConvGeom& geom) {
    const auto& xv = g.val(x);
    const auto& wv = g.val(w);
    const int64_t N = xv.dim(0), h = xv.dim(1), wdim = xv.dim(2), Cin = xv.dim(3);
    const int64_t Cout = wv.dim(2);
    if (wv.dim(0) != geom.kh || wv.dim(1) != geom.kw || wv.dim(3) != Cin)
        throw std::invalid_argument("conv_transpose2d: weight shape mismatch");
    const int64_t OH = (h - 1) * geom.stride - (geom.pad_t + geom.pad_b) + geom.kh;
    const int64_t OW = (wdim - 1) * geom.stride - (geom.pad_l + geom.pad_r) + geom.kw;
    const int64_t RK = geom.kh * geom.kw * Cout;
    const int64_t rows = N * h * wdim;

    // G[rows, kh*kw*Cout] = x2[rows, Cin] * W2^T, then scatter into the output
    Tensor<T> gcols({rows, RK});
    kernels::ops<T>().gemm(false, true, rows, RK, Cin, T(1), xv.ptr(), Cin,
                           wv.ptr(), Cin, T(0), gcols.ptr(), RK);
    Tensor<T> out({N, OH, OW, Cout});
    col2im_add(gcols, geom, h, wdim, out);
    if (b.valid()) {
        const auto& bv = g.val(b);
        for (int64_t r = 0; r < N * OH * OW; ++r)
            kernels::ops<T>().axpy(Cout, T(1), bv.ptr(), out.ptr() + r * Cout);
    }
    return g.op(std::move(out), b.valid() ? std::initializer_list<Var>{x, w, b}
                                          : std::initializer_list<Var>{x, w},
                [x, w, b, geom, N, h, wdim, Cin, Cout, RK, OH, OW](Graph<T>& gr, int self) {
        const Tensor<T>& gy = gr.nodes[self].grad;
        const int64_t rows = N * h * wdim;
        Tensor<T> cols;
        im2col(gy, geom, h, wdim, cols); // [rows, RK]
        if (gr.requires_grad(x)) {
            Tensor<T> gx({N, h, wdim, Cin});
            kernels::ops<T>().gemm(false, false, rows, Cin, RK, T(1), cols.ptr(), RK,
                                   gr.val(w).ptr(), Cin, T(0), gx.ptr(), Cin);
            gx.shape = gr.val(x).shape;
            gr.accum(x, gx);
        }
        if (gr.requires_grad(w)) {
            Tensor<T> gw(gr.val(w).shape);
            kernels::ops<T>().gemm(true, false, RK, Cin, rows, T(1), cols.ptr(), RK,
                                   gr.val(x).ptr(), Cin, T(0), gw.ptr(), Cin);
            gr.accum(w, gw);
        }
        if (b.valid() && gr.requires_grad(b)) {
            Tensor<T> gb({Cout});
            for (int64_t r = 0; r < N * OH * OW; ++r)
                kernels::ops<T>().axpy(Cout, T(1), gy.ptr() + r * Cout, gb.ptr());
            gr.accum(b, gb);
        }
    });
}

} // namespace ganloc::ad
