#include "ganloc/kernels/kernels.hpp"

#include <atomic>

namespace ganloc::kernels {

namespace avx2 {
const Ops<float>& table_f32();
const Ops<double>& table_f64();
} // namespace avx2

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {
std::atomic<Backend> g_backend{Backend::auto_detect};

Backend resolved() {
    Backend b = g_backend.load(std::memory_order_relaxed);
    if (b == Backend::auto_detect) return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
    return b;
}
} // namespace

void select_backend(Backend b) {
    if (b == Backend::avx2 && !cpu_has_avx2()) b = Backend::scalar;
    g_backend.store(b, std::memory_order_relaxed);
}

Backend active_backend() { return resolved(); }

std::string backend_name() {
    return resolved() == Backend::avx2 ? "avx2" : "scalar";
}

template <>
const Ops<float>& ops<float>() {
    return resolved() == Backend::avx2 ? avx2::table_f32() : scalar_ops<float>();
}

template <>
const Ops<double>& ops<double>() {
    return resolved() == Backend::avx2 ? avx2::table_f64() : scalar_ops<double>();
}

} // namespace ganloc::kernels
