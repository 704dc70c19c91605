#pragma once

#include <cstdint>
#include <string>

namespace ganloc::kernels {

// Low-level numeric kernels behind the tensor ops. Every kernel has a scalar
// reference implementation; hot ones additionally have AVX2 variants picked
// at runtime. Tests compare the active backend against the scalar reference.

enum class Backend { auto_detect, scalar, avx2 };

// C (MxN, row-major, ldc) = alpha * op(A) * op(B) + beta * C
// op(A) is MxK with lda; op(B) is KxN with ldb.
template <typename T>
using GemmFn = void (*)(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                        T alpha, const T* a, int64_t lda, const T* b, int64_t ldb,
                        T beta, T* c, int64_t ldc);

template <typename T>
struct Ops {
    GemmFn<T> gemm;
    void (*axpy)(int64_t n, T alpha, const T* x, T* y);          // y += alpha*x
    void (*scale)(int64_t n, T alpha, T* x);                     // x *= alpha
    void (*add)(int64_t n, const T* x, const T* y, T* out);      // out = x + y
    void (*sub)(int64_t n, const T* x, const T* y, T* out);
    void (*mul)(int64_t n, const T* x, const T* y, T* out);
    T (*sum)(int64_t n, const T* x);
    T (*dot)(int64_t n, const T* x, const T* y);
    void (*leaky_relu_fwd)(int64_t n, const T* x, T* y, T slope);
    void (*leaky_relu_bwd)(int64_t n, const T* x, const T* gy, T* gx, T slope); // gx = gy * lrelu'(x)
};

template <typename T>
const Ops<T>& ops();

// Scalar reference table, always available (for equivalence tests).
template <typename T>
const Ops<T>& scalar_ops();

void select_backend(Backend b);
Backend active_backend();
std::string backend_name();
bool cpu_has_avx2();

} // namespace ganloc::kernels
