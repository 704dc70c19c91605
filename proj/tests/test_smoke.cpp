#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ganloc/losses.hpp"
#include "ganloc/nn/models.hpp"

using namespace ganloc;

TEST_CASE("gemm equivalence avx2 vs scalar") {
    Rng rng(1);
    for (auto [m, n, k] : {std::tuple{7, 13, 5}, {64, 48, 129}, {1, 300, 17}, {33, 1, 9}}) {
        std::vector<double> a(m * k), b(k * n), c1(m * n, 0.5), c2(m * n, 0.5);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        for (int ta = 0; ta < 2; ++ta)
            for (int tb = 0; tb < 2; ++tb) {
                kernels::scalar_ops<double>().gemm(ta, tb, m, n, k, 1.3, a.data(), ta ? m : k,
                                                   b.data(), tb ? k : n, 0.7, c1.data(), n);
                kernels::ops<double>().gemm(ta, tb, m, n, k, 1.3, a.data(), ta ? m : k,
                                            b.data(), tb ? k : n, 0.7, c2.data(), n);
                for (size_t i = 0; i < c1.size(); ++i)
                    CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
            }
    }
}

TEST_CASE("graph basics: linear gradcheck") {
    Rng rng(7);
    ad::Param<double> w("w", Tensor<double>({3, 4}));
    ad::Param<double> b("b", Tensor<double>({3}));
    for (auto& v : w.value.data) v = rng.normal();
    for (auto& v : b.value.data) v = rng.normal();
    Tensor<double> x({5, 4});
    for (auto& v : x.data) v = rng.normal();

    auto build = [&](ad::Graph<double>& g) {
        ad::Var xv = g.leaf(x);
        ad::Var y = ad::linear(g, xv, g.param(w), g.param(b));
        return ad::mean_all(g, ad::square(g, ad::tanh_op(g, y)));
    };
    auto value = [&]() {
        ad::Graph<double> g;
        return g.val(build(g))[0];
    };
    {
        ad::Graph<double> g;
        ad::Var l = build(g);
        g.backward(l);
        g.accumulate_param_grads();
    }
    const double eps = 1e-6;
    for (auto* p : {&w, &b}) {
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + eps;
            const double hi = value();
            p->value[i] = orig - eps;
            const double lo = value();
            p->value[i] = orig;
            const double fd = (hi - lo) / (2 * eps);
            CHECK(p->grad[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("model shapes 64") {
    Rng rng(3);
    auto cfg = nn::GanConfig::defaults(nn::Variant::sn_dcgan, 64);
    nn::Generator<float> gen(cfg, rng);
    nn::Discriminator<float> dis(cfg, rng);
    Tensor<float> z({2, 128});
    for (auto& v : z.data) v = (float)rng.uniform(-1, 1);
    Tensor<float> img = gen.sample(z);
    CHECK(img.shape == std::vector<int64_t>{2, 64, 64, 3});
    for (float v : img.data) CHECK(std::abs(v) <= 1.0f);
    auto r = dis.forward_readout(img);
    CHECK(r.logits.size() == 2);
    CHECK(r.feature_maps.shape == std::vector<int64_t>{2, 4, 4, 512});
}
