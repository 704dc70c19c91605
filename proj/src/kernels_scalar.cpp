#include "ganloc/kernels/kernels.hpp"

#include <cmath>

namespace ganloc::kernels::detail {

template <typename T>
static inline const T* row(const T* a, int64_t i, int64_t ld) { return a + i * ld; }

template <typename T>
void gemm_scalar(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 T alpha, const T* a, int64_t lda, const T* b, int64_t ldb,
                 T beta, T* c, int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        T* ci = c + i * ldc;
        if (beta == T(0)) {
            for (int64_t j = 0; j < n; ++j) ci[j] = T(0);
        } else if (beta != T(1)) {
            for (int64_t j = 0; j < n; ++j) ci[j] *= beta;
        }
    }
    if (alpha == T(0) || k == 0) return;
    // ikj order keeps the inner loop contiguous over C and op(B) rows.
    for (int64_t i = 0; i < m; ++i) {
        T* ci = c + i * ldc;
        for (int64_t p = 0; p < k; ++p) {
            const T aip = trans_a ? a[p * lda + i] : a[i * lda + p];
            if (aip == T(0)) continue;
            const T s = alpha * aip;
            if (!trans_b) {
                const T* bp = b + p * ldb;
                for (int64_t j = 0; j < n; ++j) ci[j] += s * bp[j];
            } else {
                for (int64_t j = 0; j < n; ++j) ci[j] += s * b[j * ldb + p];
            }
        }
    }
}

template <typename T>
void axpy_scalar(int64_t n, T alpha, const T* x, T* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_scalar(int64_t n, T alpha, T* x) {
    for (int64_t i = 0; i < n; ++i) x[i] *= alpha;
}

template <typename T>
void add_scalar(int64_t n, const T* x, const T* y, T* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <typename T>
void sub_scalar(int64_t n, const T* x, const T* y, T* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

template <typename T>
void mul_scalar(int64_t n, const T* x, const T* y, T* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template <typename T>
T sum_scalar(int64_t n, const T* x) {
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

template <typename T>
T dot_scalar(int64_t n, const T* x, const T* y) {
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

template <typename T>
void lrelu_fwd_scalar(int64_t n, const T* x, T* y, T slope) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void lrelu_bwd_scalar(int64_t n, const T* x, const T* gy, T* gx, T slope) {
    for (int64_t i = 0; i < n; ++i) gx[i] = x[i] > T(0) ? gy[i] : slope * gy[i];
}

template <typename T>
Ops<T> make_scalar_table() {
    Ops<T> t;
    t.gemm = &gemm_scalar<T>;
    t.axpy = &axpy_scalar<T>;
    t.scale = &scale_scalar<T>;
    t.add = &add_scalar<T>;
    t.sub = &sub_scalar<T>;
    t.mul = &mul_scalar<T>;
    t.sum = &sum_scalar<T>;
    t.dot = &dot_scalar<T>;
    t.leaky_relu_fwd = &lrelu_fwd_scalar<T>;
    t.leaky_relu_bwd = &lrelu_bwd_scalar<T>;
    return t;
}

template Ops<float> make_scalar_table<float>();
template Ops<double> make_scalar_table<double>();

} // namespace ganloc::kernels::detail

namespace ganloc::kernels {

template <>
const Ops<float>& scalar_ops<float>() {
    static const Ops<float> t = detail::make_scalar_table<float>();
    return t;
}

template <>
const Ops<double>& scalar_ops<double>() {
    static const Ops<double> t = detail::make_scalar_table<double>();
    return t;
}

} // namespace ganloc::kernels
