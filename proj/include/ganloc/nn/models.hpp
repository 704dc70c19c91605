#pragma once

#include "ganloc/nn/layers.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ganloc::nn {

enum class Variant { dcgan, sn_dcgan, dragan, wgan_gp, sn_wgan_gp };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct GanConfig {
    Variant variant = Variant::sn_dcgan;
    int input_size = 64; // 32 or 64
    int latent_dim = 128;
    double leaky_slope = 0.2;
    int critic_steps = 1;
    double penalty_weight = 10.0;
    double learning_rate = 2e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 128;
    int64_t max_iterations = 250000;
    bool augmentation = false;
    uint64_t seed = 0;
    bool spectral_norm = true;            // derived from variant; validated
    double dragan_noise_scale = 0.5;      // x std(real batch)
    int64_t checkpoint_interval = 5000;

    // Fill variant-dependent defaults (critic_steps, spectral_norm).
    static GanConfig defaults(Variant v, int input_size);
    // Throws std::invalid_argument when an invariant is broken.
    void validate() const;

    // key=value round trip (checkpoint archives, resolved-config files)
    std::map<std::string, std::string> to_map() const;
    static GanConfig from_map(const std::map<std::string, std::string>& kv);

    bool uses_wgan_loss() const { return variant == Variant::wgan_gp || variant == Variant::sn_wgan_gp; }
    bool uses_penalty() const { return variant == Variant::dragan || uses_wgan_loss(); }
    bool uses_batch_norm_d() const { return variant == Variant::dcgan || variant == Variant::dragan; }
    bool uses_layer_norm_d() const { return uses_wgan_loss(); }
};

enum class LayerKind { conv, transposed_conv, linear, global_average_pool };
enum class NormKind { batch, layer, none };
enum class ActKind { relu, leaky_relu, tanh, none };

struct LayerSpec {
    LayerKind kind;
    int64_t kernel = 0;
    int64_t stride = 0;
    int64_t out_channels = 0;
    NormKind normalization = NormKind::none;
    bool spectral = false; // may combine with layer norm (SN on top of LN)
    ActKind activation = ActKind::none;
    // expected output extent (h == w) and channels, for shape conformance
    int64_t out_h = 0, out_w = 0;
};

std::vector<LayerSpec> build_generator(const GanConfig& config);
std::vector<LayerSpec> build_discriminator(const GanConfig& config);

// Per-image discriminator internals needed for class-activation maps.
template <typename T>
struct DiscriminatorReadout {
    std::vector<T> logits;      // [N]
    Tensor<T> feature_maps;     // [N,h,w,K] before global average pooling
    Tensor<T> gap_weights;      // [K]
    T gap_bias = T(0);
};

// Interface the gradient penalty needs from a scoring network.
template <typename T>
class DifferentiableCritic {
public:
    virtual ~DifferentiableCritic() = default;
    virtual Var logits(Graph<T>& g, Var x, Mode mode) = 0;
    virtual Dual logits_dual(Graph<T>& g, Dual x) = 0;
    virtual std::vector<Param<T>*> params() = 0;
};

template <typename T>
class Generator {
public:
    Generator(const GanConfig& config, Rng& rng) : cfg_(config) {
        const int64_t s = config.input_size;
        fc_ = std::make_unique<Linear<T>>("generator.fc", config.latent_dim, 4 * 4 * 128, false, rng);
        const int64_t widths[3] = {512, 256, 128};
        int64_t cin = 128;
        for (int i = 0; i < 3; ++i) {
            deconv_.push_back(std::make_unique<ConvTranspose2d<T>>(
                "generator.deconv" + std::to_string(i + 1), 4, 4, cin, widths[i], 2, 1, 1, rng));
            bn_.push_back(std::make_unique<BatchNorm<T>>("generator.bn" + std::to_string(i + 1), widths[i]));
            cin = widths[i];
        }
        // last layer: stride 2 doubles 32 -> 64; stride 1 keeps 32
        if (s == 64) {
            deconv_.push_back(std::make_unique<ConvTranspose2d<T>>("generator.deconv4", 4, 4, cin, 3, 2, 1, 1, rng));
        } else {
            deconv_.push_back(std::make_unique<ConvTranspose2d<T>>("generator.deconv4", 4, 4, cin, 3, 1, 1, 2, rng));
        }
    }

    // z: [N, latent_dim] -> images [N,s,s,3] in (-1,1)
    Var forward(Graph<T>& g, Var z, Mode mode) {
        const int64_t n = g.val(z).dim(0);
        Var x = fc_->forward(g, z, mode);
        x = ad::reshape(g, x, {n, 4, 4, 128});
        for (size_t i = 0; i < 3; ++i) {
            x = deconv_[i]->forward(g, x, mode);
            x = bn_[i]->forward(g, x, mode);
            x = ad::relu(g, x);
        }
        x = deconv_[3]->forward(g, x, mode);
        return ad::tanh_op(g, x);
    }

    // per-stage output shapes for a forward pass at batch n
    std::vector<std::vector<int64_t>> forward_shapes(int n) {
        Graph<T> g;
        Tensor<T> z({n, cfg_.latent_dim});
        z.fill(T(0));
        Var x = fc_->forward(g, g.leaf(z), Mode::eval);
        x = ad::reshape(g, x, {static_cast<int64_t>(n), 4, 4, 128});
        std::vector<std::vector<int64_t>> shapes;
        shapes.push_back(g.val(x).shape);
        for (size_t i = 0; i < 3; ++i) {
            x = deconv_[i]->forward(g, x, Mode::eval);
            x = bn_[i]->forward(g, x, Mode::eval);
            x = ad::relu(g, x);
            shapes.push_back(g.val(x).shape);
        }
        x = ad::tanh_op(g, deconv_[3]->forward(g, x, Mode::eval));
        shapes.push_back(g.val(x).shape);
        return shapes;
    }

    Tensor<T> sample(const Tensor<T>& z, Mode mode = Mode::eval) {
        Graph<T> g;
        Var zv = g.leaf(z);
        Var img = forward(g, zv, mode);
        return g.val(img);
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out = fc_->params();
        for (auto& d : deconv_)
            for (auto* p : d->params()) out.push_back(p);
        for (auto& b : bn_)
            for (auto* p : b->params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> buffers() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (auto& b : bn_)
            for (auto& kv : b->buffers()) out.push_back(kv);
        return out;
    }

    const GanConfig& config() const { return cfg_; }

private:
    GanConfig cfg_;
    std::unique_ptr<Linear<T>> fc_;
    std::vector<std::unique_ptr<ConvTranspose2d<T>>> deconv_;
    std::vector<std::unique_ptr<BatchNorm<T>>> bn_;
};

template <typename T>
class Discriminator : public DifferentiableCritic<T> {
public:
    Discriminator(const GanConfig& config, Rng& rng) : cfg_(config) {
        const bool sn = config.spectral_norm;
        const int64_t widths[4] = {64, 128, 256, 512};
        int64_t cin = 3;
        for (int i = 0; i < 4; ++i) {
            const bool first32 = (i == 0 && config.input_size == 32);
            const int64_t stride = first32 ? 1 : 2;
            const int64_t pad_lo = 1;
            const int64_t pad_hi = first32 ? 2 : 1;
            conv_.push_back(std::make_unique<Conv2d<T>>("discriminator.conv" + std::to_string(i + 1),
                                                        4, 4, cin, widths[i], stride, pad_lo, pad_hi,
                                                        sn, rng));
            if (config.uses_batch_norm_d())
                norm_.push_back(std::make_unique<BatchNorm<T>>("discriminator.bn" + std::to_string(i + 1), widths[i]));
            else if (config.uses_layer_norm_d())
                norm_.push_back(std::make_unique<LayerNorm<T>>("discriminator.ln" + std::to_string(i + 1), widths[i]));
            cin = widths[i];
        }
        act_ = std::make_unique<LeakyReLU<T>>(static_cast<T>(config.leaky_slope));
        fc_ = std::make_unique<Linear<T>>("discriminator.fc", 512, 1, sn, rng);
    }

    Var logits(Graph<T>& g, Var x, Mode mode) override {
        Var h = features(g, x, mode);
        last_features_ = h;
        Var pooled = ad::gap(g, h);
        return fc_->forward(g, pooled, mode);
    }

    Dual logits_dual(Graph<T>& g, Dual x) override {
        Dual h = x;
        for (size_t i = 0; i < conv_.size(); ++i) {
            h = conv_[i]->forward_dual(g, h);
            if (!norm_.empty()) h = norm_[i]->forward_dual(g, h);
            h = act_->forward_dual(g, h);
        }
        Dual pooled{ad::gap(g, h.v), ad::gap(g, h.t)};
        return fc_->forward_dual(g, pooled);
    }

    // Forward with retained internals; inference-mode statistics.
    DiscriminatorReadout<T> forward_readout(const Tensor<T>& images) {
        Graph<T> g;
        Var x = g.leaf(images);
        Var logit = logits(g, x, Mode::eval);
        DiscriminatorReadout<T> r;
        const auto& lv = g.val(logit);
        r.logits.assign(lv.ptr(), lv.ptr() + lv.numel());
        r.feature_maps = g.val(last_features_);
        const auto& w = fc_->weight.value; // [1,512]
        r.gap_weights = Tensor<T>({w.numel()}, w.data);
        if (fc_->spectral) {
            // readout must reflect the effective (normalized) weight:
            // sigma recomputed from the frozen power-iteration state
            const int64_t rows = w.dim(0), cols = w.dim(1);
            SpectralState<T>& s = fc_->sn;
            T sigma = T(0);
            for (int64_t i = 0; i < rows; ++i)
                sigma += s.v[i] * kernels::ops<T>().dot(cols, w.ptr() + i * cols, s.u.ptr());
            Tensor<T> tmp = w;
            kernels::ops<T>().scale(tmp.numel(), T(1) / sigma, tmp.ptr());
            r.gap_weights = Tensor<T>({tmp.numel()}, tmp.data);
        }
        r.gap_bias = fc_->bias.value[0];
        return r;
    }

    std::vector<Param<T>*> params() override {
        std::vector<Param<T>*> out;
        for (auto& c : conv_)
            for (auto* p : c->params()) out.push_back(p);
        for (auto& nl : norm_)
            for (auto* p : nl->params()) out.push_back(p);
        for (auto* p : fc_->params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> buffers() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for (auto& c : conv_)
            for (auto& kv : c->buffers()) out.push_back(kv);
        for (auto& nl : norm_)
            for (auto& kv : nl->buffers()) out.push_back(kv);
        for (auto& kv : fc_->buffers()) out.push_back(kv);
        return out;
    }

    const GanConfig& config() const { return cfg_; }

    // per-stage output shapes for a forward pass at batch n
    std::vector<std::vector<int64_t>> forward_shapes(int n) {
        Graph<T> g;
        Tensor<T> x({n, cfg_.input_size, cfg_.input_size, 3});
        x.fill(T(0));
        Var h = g.leaf(x);
        std::vector<std::vector<int64_t>> shapes;
        for (size_t i = 0; i < conv_.size(); ++i) {
            h = conv_[i]->forward(g, h, Mode::eval);
            if (!norm_.empty()) h = norm_[i]->forward(g, h, Mode::eval);
            h = act_->forward(g, h, Mode::eval);
            shapes.push_back(g.val(h).shape);
        }
        Var pooled = ad::gap(g, h);
        shapes.push_back(g.val(pooled).shape);
        Var out = fc_->forward(g, pooled, Mode::eval);
        shapes.push_back(g.val(out).shape);
        return shapes;
    }

    // feature stack only (pre-GAP), exposed for shape tests
    Var features(Graph<T>& g, Var x, Mode mode) {
        Var h = x;
        for (size_t i = 0; i < conv_.size(); ++i) {
            h = conv_[i]->forward(g, h, mode);
            if (!norm_.empty()) h = norm_[i]->forward(g, h, mode);
            h = act_->forward(g, h, mode);
        }
        return h;
    }

private:
    GanConfig cfg_;
    std::vector<std::unique_ptr<Conv2d<T>>> conv_;
    std::vector<std::unique_ptr<Layer<T>>> norm_;
    std::unique_ptr<LeakyReLU<T>> act_;
    std::unique_ptr<Linear<T>> fc_;
    Var last_features_;
};

} // namespace ganloc::nn
