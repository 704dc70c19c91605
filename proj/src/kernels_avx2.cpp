// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; nothing here runs unless the dispatcher verified CPU support.

#include "ganloc/kernels/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace ganloc::kernels::avx2 {

template <typename T>
struct V;

template <>
struct V<float> {
    using reg = __m256;
    static constexpr int64_t lanes = 8;
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg set1(float x) { return _mm256_set1_ps(x); }
    static reg zero() { return _mm256_setzero_ps(); }
    static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
    static reg lrelu(reg x, reg slope) {
        reg mask = _mm256_cmp_ps(x, _mm256_setzero_ps(), _CMP_GT_OQ);
        return _mm256_blendv_ps(_mm256_mul_ps(slope, x), x, mask);
    }
    static reg lrelu_grad(reg x, reg g, reg slope) {
        reg mask = _mm256_cmp_ps(x, _mm256_setzero_ps(), _CMP_GT_OQ);
        return _mm256_blendv_ps(_mm256_mul_ps(slope, g), g, mask);
    }
    static float hsum(reg v) {
        __m128 lo = _mm256_castps256_ps128(v);
        __m128 hi = _mm256_extractf128_ps(v, 1);
        lo = _mm_add_ps(lo, hi);
        lo = _mm_hadd_ps(lo, lo);
        lo = _mm_hadd_ps(lo, lo);
        return _mm_cvtss_f32(lo);
    }
};

template <>
struct V<double> {
    using reg = __m256d;
    static constexpr int64_t lanes = 4;
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg set1(double x) { return _mm256_set1_pd(x); }
    static reg zero() { return _mm256_setzero_pd(); }
    static reg fma(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
    static reg lrelu(reg x, reg slope) {
        reg mask = _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_GT_OQ);
        return _mm256_blendv_pd(_mm256_mul_pd(slope, x), x, mask);
    }
    static reg lrelu_grad(reg x, reg g, reg slope) {
        reg mask = _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_GT_OQ);
        return _mm256_blendv_pd(_mm256_mul_pd(slope, g), g, mask);
    }
    static double hsum(reg v) {
        __m128d lo = _mm256_castpd256_pd128(v);
        __m128d hi = _mm256_extractf128_pd(v, 1);
        lo = _mm_add_pd(lo, hi);
        lo = _mm_hadd_pd(lo, lo);
        return _mm_cvtsd_f64(lo);
    }
};

// ---------------------------------------------------------------------------
// GEMM: packed panels + MR x NR FMA microkernel.
// ---------------------------------------------------------------------------

inline constexpr int64_t MR = 4;
inline constexpr int64_t KC = 256;
inline constexpr int64_t MC = 128;
inline constexpr int64_t NC = 2048;

template <typename T>
static inline T a_elem(const T* a, int64_t lda, bool trans, int64_t i, int64_t k) {
    return trans ? a[k * lda + i] : a[i * lda + k];
}

template <typename T>
static inline T b_elem(const T* b, int64_t ldb, bool trans, int64_t k, int64_t j) {
    return trans ? b[j * ldb + k] : b[k * ldb + j];
}

// Ap: per MR-row micro-panel, k-major, zero padded.
template <typename T>
static void pack_a(const T* a, int64_t lda, bool trans, int64_t i0, int64_t mb,
                   int64_t k0, int64_t kb, T* ap) {
    for (int64_t ir = 0; ir < mb; ir += MR) {
        const int64_t rows = std::min(MR, mb - ir);
        for (int64_t k = 0; k < kb; ++k) {
            for (int64_t i = 0; i < MR; ++i) {
                *ap++ = (i < rows) ? a_elem(a, lda, trans, i0 + ir + i, k0 + k) : T(0);
            }
        }
    }
}

// Bp: per NR-col micro-panel, k-major, zero padded.
template <typename T>
static void pack_b(const T* b, int64_t ldb, bool trans, int64_t k0, int64_t kb,
                   int64_t j0, int64_t nb, int64_t nr, T* bp) {
    for (int64_t jr = 0; jr < nb; jr += nr) {
        const int64_t cols = std::min(nr, nb - jr);
        for (int64_t k = 0; k < kb; ++k) {
            for (int64_t j = 0; j < nr; ++j) {
                *bp++ = (j < cols) ? b_elem(b, ldb, trans, k0 + k, j0 + jr + j) : T(0);
            }
        }
    }
}

template <typename T>
static void micro_kernel(int64_t kb, const T* ap, const T* bp, T* acc /* MR x NR */) {
    using W = V<T>;
    constexpr int64_t L = W::lanes;
    typename W::reg c[MR][2];
    for (int64_t i = 0; i < MR; ++i) {
        c[i][0] = W::zero();
        c[i][1] = W::zero();
    }
    for (int64_t k = 0; k < kb; ++k) {
        const typename W::reg b0 = W::load(bp + k * 2 * L);
        const typename W::reg b1 = W::load(bp + k * 2 * L + L);
        const T* ak = ap + k * MR;
        for (int64_t i = 0; i < MR; ++i) {
            const typename W::reg ai = W::set1(ak[i]);
            c[i][0] = W::fma(ai, b0, c[i][0]);
            c[i][1] = W::fma(ai, b1, c[i][1]);
        }
    }
    for (int64_t i = 0; i < MR; ++i) {
        W::store(acc + i * 2 * L, c[i][0]);
        W::store(acc + i * 2 * L + L, c[i][1]);
    }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          T alpha, const T* a, int64_t lda, const T* b, int64_t ldb,
          T beta, T* c, int64_t ldc) {
    const int64_t NR = 2 * V<T>::lanes;
    // beta pass up front so k-blocks can plainly accumulate
    for (int64_t i = 0; i < m; ++i) {
        T* ci = c + i * ldc;
        if (beta == T(0)) {
            std::memset(ci, 0, sizeof(T) * static_cast<size_t>(n));
        } else if (beta != T(1)) {
            for (int64_t j = 0; j < n; ++j) ci[j] *= beta;
        }
    }
    if (alpha == T(0) || k == 0 || m == 0 || n == 0) return;

    std::vector<T> ap(static_cast<size_t>(MC + MR) * KC);
    std::vector<T> bp(static_cast<size_t>(KC) * (NC + NR));
    std::vector<T> acc(static_cast<size_t>(MR) * NR);

    for (int64_t jc = 0; jc < n; jc += NC) {
        const int64_t nb = std::min(NC, n - jc);
        for (int64_t pc = 0; pc < k; pc += KC) {
            const int64_t kb = std::min(KC, k - pc);
            pack_b(b, ldb, trans_b, pc, kb, jc, nb, NR, bp.data());
            for (int64_t ic = 0; ic < m; ic += MC) {
                const int64_t mb = std::min(MC, m - ic);
                pack_a(a, lda, trans_a, ic, mb, pc, kb, ap.data());
                for (int64_t jr = 0; jr < nb; jr += NR) {
                    const int64_t cols = std::min(NR, nb - jr);
                    const T* bpanel = bp.data() + (jr / NR) * kb * NR;
                    for (int64_t ir = 0; ir < mb; ir += MR) {
                        const int64_t rows = std::min(MR, mb - ir);
                        const T* apanel = ap.data() + (ir / MR) * kb * MR;
                        micro_kernel(kb, apanel, bpanel, acc.data());
                        for (int64_t i = 0; i < rows; ++i) {
                            T* ci = c + (ic + ir + i) * ldc + jc + jr;
                            const T* ai = acc.data() + i * NR;
                            if (alpha == T(1)) {
                                for (int64_t j = 0; j < cols; ++j) ci[j] += ai[j];
                            } else {
                                for (int64_t j = 0; j < cols; ++j) ci[j] += alpha * ai[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise and reductions
// ---------------------------------------------------------------------------

template <typename T>
void axpy(int64_t n, T alpha, const T* x, T* y) {
    using W = V<T>;
    const typename W::reg va = W::set1(alpha);
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        W::store(y + i, W::fma(va, W::load(x + i), W::load(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(int64_t n, T alpha, T* x) {
    using W = V<T>;
    const typename W::reg va = W::set1(alpha);
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        W::store(x + i, W::mul(va, W::load(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

template <typename T>
void add(int64_t n, const T* x, const T* y, T* out) {
    using W = V<T>;
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        W::store(out + i, W::add(W::load(x + i), W::load(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

template <typename T>
void sub(int64_t n, const T* x, const T* y, T* out) {
    using W = V<T>;
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        W::store(out + i, W::sub(W::load(x + i), W::load(y + i)));
    for (; i < n; ++i) out[i] = x[i] - y[i];
}

template <typename T>
void mul(int64_t n, const T* x, const T* y, T* out) {
    using W = V<T>;
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        W::store(out + i, W::mul(W::load(x + i), W::load(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

template <typename T>
T sum(int64_t n, const T* x) {
    using W = V<T>;
    typename W::reg acc = W::zero();
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes) acc = W::add(acc, W::load(x + i));
    T s = W::hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

template <typename T>
T dot(int64_t n, const T* x, const T* y) {
    using W = V<T>;
    typename W::reg acc = W::zero();
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        acc = W::fma(W::load(x + i), W::load(y + i), acc);
    T s = W::hsum(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

template <typename T>
void lrelu_fwd(int64_t n, const T* x, T* y, T slope) {
    using W = V<T>;
    const typename W::reg vs = W::set1(slope);
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        W::store(y + i, W::lrelu(W::load(x + i), vs));
    for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void lrelu_bwd(int64_t n, const T* x, const T* gy, T* gx, T slope) {
    using W = V<T>;
    const typename W::reg vs = W::set1(slope);
    int64_t i = 0;
    for (; i + W::lanes <= n; i += W::lanes)
        W::store(gx + i, W::lrelu_grad(W::load(x + i), W::load(gy + i), vs));
    for (; i < n; ++i) gx[i] = x[i] > T(0) ? gy[i] : slope * gy[i];
}

template <typename T>
Ops<T> make_table() {
    Ops<T> t;
    t.gemm = &gemm<T>;
    t.axpy = &axpy<T>;
    t.scale = &scale<T>;
    t.add = &add<T>;
    t.sub = &sub<T>;
    t.mul = &mul<T>;
    t.sum = &sum<T>;
    t.dot = &dot<T>;
    t.leaky_relu_fwd = &lrelu_fwd<T>;
    t.leaky_relu_bwd = &lrelu_bwd<T>;
    return t;
}

const Ops<float>& table_f32() {
    static const Ops<float> t = make_table<float>();
    return t;
}

const Ops<double>& table_f64() {
    static const Ops<double> t = make_table<double>();
    return t;
}

} // namespace ganloc::kernels::avx2
