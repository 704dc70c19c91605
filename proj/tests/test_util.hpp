#pragma once

#include "ganloc/graph.hpp"
#include "ganloc/rng.hpp"

#include <doctest.h>

#include <functional>

namespace test_util {

using ganloc::Rng;
using ganloc::Tensor;

inline void fill_normal(Tensor<double>& t, Rng& rng, double scale = 1.0) {
    for (auto& v : t.data) v = scale * rng.normal();
}

inline void fill_normal(Tensor<float>& t, Rng& rng, double scale = 1.0) {
    for (auto& v : t.data) v = static_cast<float>(scale * rng.normal());
}

// Central-difference check of d(loss)/d(param) for every listed parameter.
// `value` must rebuild the computation from scratch (no reused graphs).
inline void gradcheck(const std::function<double()>& value,
                      const std::function<void()>& backward,
                      const std::vector<ganloc::ad::Param<double>*>& params, double eps = 1e-5,
                      double rel_tol = 1e-4) {
    for (auto* p : params) p->zero_grad();
    backward();
    for (auto* p : params) {
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + eps;
            const double up = value();
            p->value[i] = keep - eps;
            const double down = value();
            p->value[i] = keep;
            const double fd = (up - down) / (2.0 * eps);
            const double an = p->grad[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            INFO(p->name, "[", i, "] analytic=", an, " fd=", fd);
            CHECK(std::abs(an - fd) / denom < rel_tol);
        }
    }
}

} // namespace test_util
