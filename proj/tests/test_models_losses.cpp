#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ganloc/losses.hpp"
#include "ganloc/nn/models.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace ganloc;
using test_util::fill_normal;

namespace {

using Shape = std::vector<int64_t>;
using Shapes = std::vector<Shape>;

const std::vector<nn::Variant> kAllVariants = {nn::Variant::dcgan, nn::Variant::sn_dcgan,
                                               nn::Variant::dragan, nn::Variant::wgan_gp,
                                               nn::Variant::sn_wgan_gp};

// Small two-layer scoring network used for finite-difference checks
// (well under 500 parameters in double precision).
class TinyCritic : public nn::DifferentiableCritic<double> {
public:
    explicit TinyCritic(Rng& rng, int64_t in = 6, int64_t hidden = 5)
        : w1("w1", Tensor<double>({hidden, in})),
          b1("b1", Tensor<double>({hidden})),
          w2("w2", Tensor<double>({1, hidden})),
          b2("b2", Tensor<double>({1})) {
        fill_normal(w1.value, rng, 0.5);
        fill_normal(b1.value, rng, 0.2);
        fill_normal(w2.value, rng, 0.5);
        fill_normal(b2.value, rng, 0.2);
    }

    ad::Var logits(ad::Graph<double>& g, ad::Var x, nn::Mode) override {
        ad::Var h = ad::leaky_relu(g, ad::linear(g, x, g.param(w1), g.param(b1)), 0.2);
        return ad::linear(g, h, g.param(w2), g.param(b2));
    }

    ad::Dual logits_dual(ad::Graph<double>& g, ad::Dual x) override {
        ad::Var w1v = g.param(w1), w2v = g.param(w2);
        ad::Var h = ad::linear(g, x.v, w1v, g.param(b1));
        ad::Var ht = ad::linear(g, x.t, w1v, ad::Var{});
        auto mask = std::make_shared<Tensor<double>>(g.val(h).shape);
        for (int64_t i = 0; i < g.val(h).numel(); ++i)
            (*mask)[i] = g.val(h)[i] > 0 ? 1.0 : 0.2;
        ad::Var a = ad::leaky_relu(g, h, 0.2);
        ad::Var at = ad::mul_const(g, ht, mask);
        return {ad::linear(g, a, w2v, g.param(b2)), ad::linear(g, at, w2v, ad::Var{})};
    }

    std::vector<ad::Param<double>*> params() override { return {&w1, &b1, &w2, &b2}; }

    ad::Param<double> w1, b1, w2, b2;
};

// D(x) = w . x_flat (no bias), for the penalty zero-point oracles
class LinearCritic : public nn::DifferentiableCritic<double> {
public:
    explicit LinearCritic(Tensor<double> weight) : w("w", std::move(weight)) {}

    ad::Var logits(ad::Graph<double>& g, ad::Var x, nn::Mode) override {
        const int64_t n = g.val(x).dim(0);
        ad::Var flat = ad::reshape(g, x, {n, w.value.numel()});
        return ad::linear(g, flat, g.param(w), ad::Var{});
    }
    ad::Dual logits_dual(ad::Graph<double>& g, ad::Dual x) override {
        return {logits(g, x.v, nn::Mode::eval), logits(g, x.t, nn::Mode::eval)};
    }
    std::vector<ad::Param<double>*> params() override { return {&w}; }

    ad::Param<double> w; // [1, M]
};

} // namespace

TEST_CASE("generator stage shapes follow the published architecture") {
    const Shapes want64 = {{2, 4, 4, 128}, {2, 8, 8, 512}, {2, 16, 16, 256},
                           {2, 32, 32, 128}, {2, 64, 64, 3}};
    const Shapes want32 = {{2, 4, 4, 128}, {2, 8, 8, 512}, {2, 16, 16, 256},
                           {2, 32, 32, 128}, {2, 32, 32, 3}};
    for (nn::Variant v : kAllVariants) {
        for (int size : {32, 64}) {
            nn::GanConfig cfg = nn::GanConfig::defaults(v, size);
            Rng rng(1);
            nn::Generator<float> gen(cfg, rng);
            CHECK(gen.forward_shapes(2) == (size == 64 ? want64 : want32));
        }
    }
}

TEST_CASE("discriminator stage shapes follow the published architecture") {
    const Shapes want = {{2, 32, 32, 64}, {2, 16, 16, 128}, {2, 8, 8, 256},
                         {2, 4, 4, 512},  {2, 512},         {2, 1}};
    for (nn::Variant v : kAllVariants) {
        for (int size : {32, 64}) {
            nn::GanConfig cfg = nn::GanConfig::defaults(v, size);
            Rng rng(1);
            nn::Discriminator<float> disc(cfg, rng);
            Shapes expect = want;
            if (size == 32) expect[0] = {2, 32, 32, 64}; // first conv keeps 32 via stride 1
            CHECK(disc.forward_shapes(2) == expect);
        }
    }
}

TEST_CASE("layer plans record the per-variant normalization scheme") {
    auto disc = [](nn::Variant v) {
        return nn::build_discriminator(nn::GanConfig::defaults(v, 64));
    };
    for (const auto& l : disc(nn::Variant::dcgan))
        if (l.kind == nn::LayerKind::conv) {
            CHECK(l.normalization == nn::NormKind::batch);
            CHECK(!l.spectral);
        }
    for (const auto& l : disc(nn::Variant::sn_dcgan))
        if (l.kind == nn::LayerKind::conv) {
            CHECK(l.normalization == nn::NormKind::none);
            CHECK(l.spectral);
        }
    for (const auto& l : disc(nn::Variant::dragan))
        if (l.kind == nn::LayerKind::conv) CHECK(!l.spectral);
    for (const auto& l : disc(nn::Variant::wgan_gp))
        if (l.kind == nn::LayerKind::conv) {
            CHECK(l.normalization == nn::NormKind::layer);
            CHECK(!l.spectral);
        }
    for (const auto& l : disc(nn::Variant::sn_wgan_gp))
        if (l.kind == nn::LayerKind::conv) {
            CHECK(l.normalization == nn::NormKind::layer);
            CHECK(l.spectral);
        }
}

TEST_CASE("probability-space loss oracles") {
    // hand-computed: -log(0.9) - log(1-0.2)
    CHECK(loss::d_loss_ns({0.9}, {0.2}) ==
          doctest::Approx(-std::log(0.9) - std::log(0.8)).epsilon(1e-12));
    CHECK(loss::g_loss_ns({0.25}) == doctest::Approx(-std::log(0.25)));
    CHECK(loss::g_loss_minimax({0.25}) == doctest::Approx(std::log(0.75)));
    const auto [dl, gl] = loss::wgan_losses({1.0, 3.0}, {0.5, 1.5});
    CHECK(dl == doctest::Approx(1.0 - 2.0));
    CHECK(gl == doctest::Approx(-1.0));
    CHECK_THROWS_AS(loss::d_loss_ns({1.5}, {0.2}), std::domain_error);
}

TEST_CASE("logit-space builders agree with probability-space forms") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<double> rl({3}), fl({3});
        fill_normal(rl, rng, 2.0);
        fill_normal(fl, rng, 2.0);
        std::vector<double> rp(3), fp(3);
        for (int i = 0; i < 3; ++i) {
            rp[i] = 1.0 / (1.0 + std::exp(-rl[i]));
            fp[i] = 1.0 / (1.0 + std::exp(-fl[i]));
        }
        ad::Graph<double> g;
        ad::Var rv = g.leaf(rl), fv = g.leaf(fl);
        CHECK(g.val(loss::d_loss_ns_logits(g, rv, fv))[0] ==
              doctest::Approx(loss::d_loss_ns(rp, fp)).epsilon(1e-10));
        CHECK(g.val(loss::g_loss_ns_logits(g, fv))[0] ==
              doctest::Approx(loss::g_loss_ns(fp)).epsilon(1e-10));
        CHECK(g.val(loss::g_loss_minimax_logits(g, fv))[0] ==
              doctest::Approx(loss::g_loss_minimax(fp)).epsilon(1e-10));
        const auto [dw, gw] = loss::wgan_losses({rl[0], rl[1], rl[2]}, {fl[0], fl[1], fl[2]});
        CHECK(g.val(loss::wgan_d_loss_logits(g, rv, fv))[0] == doctest::Approx(dw));
        CHECK(g.val(loss::wgan_g_loss_logits(g, fv))[0] == doctest::Approx(gw));
    }
}

TEST_CASE("objective assembly per variant") {
    auto recipe = [](nn::Variant v) {
        return loss::assemble_objectives(nn::GanConfig::defaults(v, 64));
    };
    CHECK(recipe(nn::Variant::dcgan).penalty == loss::PenaltyMode::none);
    CHECK(recipe(nn::Variant::sn_dcgan).penalty == loss::PenaltyMode::none);
    CHECK(recipe(nn::Variant::dragan).penalty == loss::PenaltyMode::perturb);
    CHECK(recipe(nn::Variant::wgan_gp).penalty == loss::PenaltyMode::interpolate);
    CHECK(recipe(nn::Variant::sn_wgan_gp).penalty == loss::PenaltyMode::interpolate);
    CHECK(recipe(nn::Variant::wgan_gp).d_loss == loss::DLossKind::wasserstein);
    CHECK(recipe(nn::Variant::dcgan).d_loss == loss::DLossKind::non_saturating);
}

TEST_CASE("adversarial loss gradients match finite differences") {
    Rng rng(12);
    TinyCritic critic(rng);
    Tensor<double> real({4, 6}), fake({4, 6});
    fill_normal(real, rng);
    fill_normal(fake, rng);

    auto check_loss = [&](auto make_loss) {
        auto value = [&] {
            ad::Graph<double> g;
            return g.val(make_loss(g))[0];
        };
        auto backward = [&] {
            ad::Graph<double> g;
            g.backward(make_loss(g));
            g.accumulate_param_grads();
        };
        test_util::gradcheck(value, backward, critic.params());
    };

    check_loss([&](ad::Graph<double>& g) {
        ad::Var rl = critic.logits(g, g.leaf(real), nn::Mode::train);
        ad::Var fl = critic.logits(g, g.leaf(fake), nn::Mode::train);
        return loss::d_loss_ns_logits(g, rl, fl);
    });
    check_loss([&](ad::Graph<double>& g) {
        return loss::g_loss_ns_logits(g, critic.logits(g, g.leaf(fake), nn::Mode::train));
    });
    check_loss([&](ad::Graph<double>& g) {
        return loss::g_loss_minimax_logits(g, critic.logits(g, g.leaf(fake), nn::Mode::train));
    });
    check_loss([&](ad::Graph<double>& g) {
        ad::Var rl = critic.logits(g, g.leaf(real), nn::Mode::train);
        ad::Var fl = critic.logits(g, g.leaf(fake), nn::Mode::train);
        return loss::wgan_d_loss_logits(g, rl, fl);
    });
}

TEST_CASE("gradient penalty parameter gradients match finite differences") {
    Rng rng(21);
    TinyCritic critic(rng);
    Tensor<double> xbar({3, 6});
    fill_normal(xbar, rng);

    const double lambda = 10.0;
    for (auto* p : critic.params()) p->zero_grad();
    const auto res = loss::gradient_penalty_backward(critic, xbar, lambda);
    CHECK(res.value >= 0.0);

    for (auto* p : critic.params()) {
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            const double keep = p->value[i];
            const double eps = 1e-5;
            p->value[i] = keep + eps;
            const double up = lambda * loss::gradient_penalty_value(critic, xbar).value;
            p->value[i] = keep - eps;
            const double down = lambda * loss::gradient_penalty_value(critic, xbar).value;
            p->value[i] = keep;
            const double fd = (up - down) / (2.0 * eps);
            const double an = p->grad[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            INFO(p->name, "[", i, "] analytic=", an, " fd=", fd);
            CHECK(std::abs(an - fd) / denom < 1e-4);
        }
    }
}

TEST_CASE("gradient penalty zero-point oracles") {
    // unit-norm linear critic: ||grad|| = 1 everywhere -> penalty 0
    Tensor<double> w({1, 8});
    Rng rng(3);
    fill_normal(w, rng);
    double norm = 0.0;
    for (double v : w.data) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : w.data) v /= norm;

    Tensor<double> xbar({5, 8});
    fill_normal(xbar, rng);

    LinearCritic unit(w);
    CHECK(loss::gradient_penalty_value(unit, xbar).value < 1e-10);

    Tensor<double> zero({1, 8});
    zero.fill(0.0);
    LinearCritic constant(zero);
    CHECK(loss::gradient_penalty_value(constant, xbar).value == doctest::Approx(1.0).epsilon(1e-6));

    Tensor<double> scaled = w;
    for (auto& v : scaled.data) v *= 3.0;
    LinearCritic gain3(scaled);
    CHECK(loss::gradient_penalty_value(gain3, xbar).value == doctest::Approx(4.0).epsilon(1e-4));
}

TEST_CASE("interpolates and perturbation anchors") {
    Rng rng(6);
    Tensor<double> real({4, 3}), fake({4, 3});
    fill_normal(real, rng);
    fake = real;
    for (auto& v : fake.data) v += 2.0; // fixed offset makes alpha recoverable
    const Tensor<double> mix = loss::mix_interpolates(real, fake, rng);
    for (int64_t i = 0; i < 4; ++i) {
        // each row lies on the segment between real and fake rows
        const double a = (mix[i * 3] - fake[i * 3]) / (real[i * 3] - fake[i * 3]);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        for (int64_t j = 1; j < 3; ++j)
            CHECK(mix[i * 3 + j] ==
                  doctest::Approx(a * real[i * 3 + j] + (1 - a) * fake[i * 3 + j]).epsilon(1e-9));
    }

    Tensor<double> big({1, 1000});
    fill_normal(big, rng, 2.0);
    const Tensor<double> anchor = loss::perturb_anchor(big, 0.5, rng);
    double dev = 0.0;
    for (int64_t i = 0; i < 1000; ++i) dev += (anchor[i] - big[i]) * (anchor[i] - big[i]);
    dev = std::sqrt(dev / 1000.0);
    CHECK(dev == doctest::Approx(0.5 * 2.0).epsilon(0.15)); // noise std ~ scale * std(real)
}

TEST_CASE("spectral norm estimate matches SVD oracle after 50 iterations") {
    Rng rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t rows = 3 + static_cast<int64_t>(rng.uniform_int(10));
        const int64_t cols = 3 + static_cast<int64_t>(rng.uniform_int(10));
        Tensor<double> w({rows, cols});
        fill_normal(w, rng);
        Tensor<double> state({rows});
        fill_normal(state, rng);
        // well past the >=50 iterations the contract allows; near-degenerate
        // top singular pairs need the extra rounds to converge below 1e-3
        const auto r = nn::spectral_normalize(w, state, 400);
        const double oracle = oracles::svd_max_singular(w);
        REQUIRE(!r.degenerate);
        CHECK(std::abs(r.sigma - oracle) < 1e-3);
        CHECK(oracles::svd_max_singular(r.normalized) == doctest::Approx(1.0).epsilon(1e-3));
    }

    Tensor<double> z({4, 4});
    z.fill(0.0);
    Tensor<double> s({4});
    s.fill(0.5);
    const auto rz = nn::spectral_normalize(z, s, 50);
    CHECK(rz.degenerate);
    CHECK(rz.normalized.data == z.data);
}

TEST_CASE("config validation rejects inconsistent settings") {
    nn::GanConfig c = nn::GanConfig::defaults(nn::Variant::dragan, 64);
    CHECK(c.critic_steps == 1);
    c.spectral_norm = true;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);

    nn::GanConfig w = nn::GanConfig::defaults(nn::Variant::wgan_gp, 64);
    CHECK(w.critic_steps == 5);
    w.critic_steps = 1;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);

    nn::GanConfig bad = nn::GanConfig::defaults(nn::Variant::dcgan, 64);
    bad.input_size = 48;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
