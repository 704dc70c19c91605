#include "ganloc/training.hpp"

#include "ganloc/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;

namespace ganloc::train {

namespace {

// eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations
void eigen3(double a[3][3], double eigval[3], double eigvec[3][3]) {
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-30) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    for (int i = 0; i < 3; ++i) {
        eigval[i] = a[i][i];
        for (int k = 0; k < 3; ++k) eigvec[k][i] = v[k][i];
    }
}

} // namespace

Tensor<float> augment(const Tensor<float>& images, const AugmentationPolicy& policy, Rng& rng) {
    const int64_t n = images.dim(0), h = images.dim(1), w = images.dim(2);
    const int max_shift =
        static_cast<int>(policy.max_translation_fraction * static_cast<double>(h));
    const bool photometric = policy.brightness > 0 || policy.contrast > 0 ||
                             policy.saturation > 0 || policy.lighting_pca_scale > 0;
    Tensor<float> out = images;

    // channel covariance over the whole batch, for PCA lighting noise
    double eigval[3] = {0, 0, 0};
    double eigvec[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    if (policy.lighting_pca_scale > 0) {
        const int64_t pixels = images.numel() / 3;
        double mean[3] = {0, 0, 0};
        for (int64_t p = 0; p < pixels; ++p)
            for (int c = 0; c < 3; ++c) mean[c] += images[p * 3 + c];
        for (double& m : mean) m /= static_cast<double>(pixels);
        double cov[3][3] = {};
        for (int64_t p = 0; p < pixels; ++p)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    cov[i][j] += (images[p * 3 + i] - mean[i]) * (images[p * 3 + j] - mean[j]);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) cov[i][j] /= static_cast<double>(pixels);
        eigen3(cov, eigval, eigvec);
    }

    const int64_t per = h * w * 3;
    for (int64_t i = 0; i < n; ++i) {
        float* img = out.ptr() + i * per;
        const float* src = images.ptr() + i * per;

        if (max_shift > 0) {
            const int dx = static_cast<int>(rng.uniform_int(2 * max_shift + 1)) - max_shift;
            const int dy = static_cast<int>(rng.uniform_int(2 * max_shift + 1)) - max_shift;
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const int64_t sy = std::clamp<int64_t>(y - dy, 0, h - 1);
                    const int64_t sx = std::clamp<int64_t>(x - dx, 0, w - 1);
                    for (int c = 0; c < 3; ++c)
                        img[(y * w + x) * 3 + c] = src[(sy * w + sx) * 3 + c];
                }
        }

        if (!photometric) continue;
        const double fb = policy.brightness > 0
                              ? rng.uniform(1.0 - policy.brightness, 1.0 + policy.brightness)
                              : 1.0;
        const double fc = policy.contrast > 0
                              ? rng.uniform(1.0 - policy.contrast, 1.0 + policy.contrast)
                              : 1.0;
        const double fs = policy.saturation > 0
                              ? rng.uniform(1.0 - policy.saturation, 1.0 + policy.saturation)
                              : 1.0;
        double light[3] = {0, 0, 0};
        if (policy.lighting_pca_scale > 0)
            for (int j = 0; j < 3; ++j) {
                const double a = rng.normal(0.0, policy.lighting_pca_scale);
                for (int c = 0; c < 3; ++c) light[c] += eigvec[c][j] * a * eigval[j];
            }

        // photometric ops act in [0,1] space
        double gray_mean = 0.0;
        for (int64_t p = 0; p < h * w; ++p) {
            const float* px = img + p * 3;
            gray_mean += ((px[0] + px[1] + px[2]) / 3.0 + 1.0) * 0.5;
        }
        gray_mean /= static_cast<double>(h * w);
        for (int64_t p = 0; p < h * w; ++p) {
            float* px = img + p * 3;
            const double gray = ((px[0] + px[1] + px[2]) / 3.0 + 1.0) * 0.5 * fb;
            for (int c = 0; c < 3; ++c) {
                double u = (px[c] + 1.0) * 0.5;
                u *= fb;                              // brightness
                u = gray_mean + (u - gray_mean) * fc; // contrast
                u = gray + (u - gray) * fs;           // saturation
                u += light[c];                        // lighting
                px[c] = static_cast<float>(std::clamp(u * 2.0 - 1.0, -1.0, 1.0));
            }
        }
    }
    return out;
}

void Adam::step(const std::vector<ad::Param<float>*>& params) {
    ++t_;
    const double corr = lr_ * std::sqrt(1.0 - std::pow(b2_, static_cast<double>(t_))) /
                        (1.0 - std::pow(b1_, static_cast<double>(t_)));
    for (auto* p : params) {
        auto it = slots_.find(p->name);
        if (it == slots_.end()) {
            Tensor<float> zero(p->value.shape);
            zero.fill(0.0f);
            it = slots_.emplace(p->name, std::make_pair(zero, zero)).first;
        }
        Tensor<float>& m = it->second.first;
        Tensor<float>& v = it->second.second;
        const int64_t count = p->value.numel();
        for (int64_t i = 0; i < count; ++i) {
            const float g = p->grad[i];
            m[i] = static_cast<float>(b1_ * m[i] + (1.0 - b1_) * g);
            v[i] = static_cast<float>(b2_ * v[i] + (1.0 - b2_) * g * g);
            p->value[i] -= static_cast<float>(corr * m[i] / (std::sqrt(v[i]) + eps_));
        }
    }
}

void Adam::store(std::map<std::string, Tensor<float>>& out, const std::string& prefix) const {
    Tensor<float> t({1});
    t[0] = static_cast<float>(t_);
    out[prefix + ".t"] = t;
    for (const auto& [name, mv] : slots_) {
        out[prefix + "." + name + ".m"] = mv.first;
        out[prefix + "." + name + ".v"] = mv.second;
    }
}

void Adam::load(const std::map<std::string, Tensor<float>>& in, const std::string& prefix,
                const std::vector<ad::Param<float>*>& params) {
    auto find = [&](const std::string& name) -> const Tensor<float>& {
        auto it = in.find(name);
        if (it == in.end())
            throw ckpt::CheckpointError("checkpoint is missing optimizer tensor " + name);
        return it->second;
    };
    t_ = static_cast<int64_t>(find(prefix + ".t")[0]);
    slots_.clear();
    for (auto* p : params)
        slots_[p->name] = {find(prefix + "." + p->name + ".m"),
                           find(prefix + "." + p->name + ".v")};
}

Trainer::Trainer(const nn::GanConfig& config, const data::Dataset& dataset, std::string out_dir)
    : cfg_(config),
      dataset_(&dataset),
      out_dir_(std::move(out_dir)),
      rng_(config.seed),
      adam_g_(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps),
      adam_d_(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps),
      recipe_(loss::assemble_objectives(config)) {
    cfg_.validate();
    if (dataset.train.empty()) throw std::invalid_argument("training split is empty");
    if (static_cast<int>(dataset.train.size()) < cfg_.batch_size)
        throw std::invalid_argument("training split smaller than one batch");
    if (dataset.input_size != cfg_.input_size)
        throw std::invalid_argument("dataset image size " + std::to_string(dataset.input_size) +
                                    " does not match configured input_size " +
                                    std::to_string(cfg_.input_size));
    // construction order is part of the determinism contract
    generator_ = std::make_unique<nn::Generator<float>>(cfg_, rng_);
    discriminator_ = std::make_unique<nn::Discriminator<float>>(cfg_, rng_);
    order_.resize(dataset.train.size());
    std::iota(order_.begin(), order_.end(), 0);
    cursor_ = order_.size(); // force a shuffle on first use
    fs::create_directories(out_dir_);
}

Tensor<float> Trainer::next_real_batch() {
    const size_t batch = static_cast<size_t>(cfg_.batch_size);
    if (cursor_ + batch > order_.size()) {
        for (size_t i = order_.size(); i > 1; --i)
            std::swap(order_[i - 1], order_[rng_.uniform_int(static_cast<int64_t>(i))]);
        cursor_ = 0;
    }
    std::vector<int> idx(order_.begin() + cursor_, order_.begin() + cursor_ + batch);
    cursor_ += batch;
    Tensor<float> real = data::make_batch(dataset_->train, idx);
    if (cfg_.augmentation) real = augment(real, aug_policy_, rng_);
    return real;
}

Tensor<float> Trainer::sample_latent(int n) {
    Tensor<float> z({n, cfg_.latent_dim});
    for (auto& v : z.data) v = static_cast<float>(rng_.uniform(-1.0, 1.0));
    return z;
}

void Trainer::check_finite(double value, const char* what, const Tensor<float>& batch) {
    if (std::isfinite(value)) return;
    double lo = batch[0], hi = batch[0], mean = 0.0;
    for (int64_t i = 0; i < batch.numel(); ++i) {
        lo = std::min<double>(lo, batch[i]);
        hi = std::max<double>(hi, batch[i]);
        mean += batch[i];
    }
    mean /= static_cast<double>(batch.numel());
    std::cerr << "non-finite " << what << " at iteration " << iteration_ << "; batch "
              << batch.shape_str() << " min=" << lo << " max=" << hi << " mean=" << mean << "\n";
    throw NumericError(std::string("non-finite ") + what + " at iteration " +
                       std::to_string(iteration_));
}

void Trainer::discriminator_update(loss::LossBundle& bundle) {
    Tensor<float> real = next_real_batch();
    Tensor<float> z = sample_latent(cfg_.batch_size);
    Tensor<float> fake = generator_->sample(z, nn::Mode::frozen_stats);

    for (auto* p : discriminator_->params()) p->zero_grad();
    ad::Graph<float> g;
    ad::Var xr = g.leaf(real);
    ad::Var xf = g.leaf(fake);
    // real pass owns the stat updates; the fake pass reuses frozen state
    ad::Var rl = discriminator_->logits(g, xr, nn::Mode::train);
    ad::Var fl = discriminator_->logits(g, xf, nn::Mode::frozen_stats);
    ad::Var dl = recipe_.d_loss == loss::DLossKind::wasserstein
                     ? loss::wgan_d_loss_logits(g, rl, fl)
                     : loss::d_loss_ns_logits(g, rl, fl);
    g.backward(dl);
    g.accumulate_param_grads();
    double d_loss = g.val(dl)[0];

    const Tensor<float>& rlv = g.val(rl);
    const Tensor<float>& flv = g.val(fl);
    bundle.diagnostics["real_logit_mean"] =
        kernels::ops<float>().sum(rlv.numel(), rlv.ptr()) / rlv.numel();
    bundle.diagnostics["fake_logit_mean"] =
        kernels::ops<float>().sum(flv.numel(), flv.ptr()) / flv.numel();

    if (recipe_.penalty != loss::PenaltyMode::none) {
        Tensor<float> anchor =
            recipe_.penalty == loss::PenaltyMode::interpolate
                ? fake
                : loss::perturb_anchor(real, static_cast<float>(cfg_.dragan_noise_scale), rng_);
        auto pr = loss::gradient_penalty(*discriminator_, real, anchor, recipe_.penalty, rng_,
                                         static_cast<float>(recipe_.penalty_weight));
        bundle.penalty = pr.value;
        bundle.diagnostics["grad_norm_mean"] = pr.grad_norm_mean;
        d_loss += recipe_.penalty_weight * pr.value;
    }
    bundle.d_loss = d_loss;
    check_finite(d_loss, "discriminator loss", real);
    adam_d_.step(discriminator_->params());
    ++d_updates_;
}

void Trainer::generator_update(loss::LossBundle& bundle) {
    Tensor<float> z = sample_latent(cfg_.batch_size);
    for (auto* p : generator_->params()) p->zero_grad();
    for (auto* p : discriminator_->params()) p->zero_grad();
    ad::Graph<float> g;
    ad::Var zv = g.leaf(z);
    ad::Var x = generator_->forward(g, zv, nn::Mode::train);
    ad::Var fl = discriminator_->logits(g, x, nn::Mode::frozen_stats);
    ad::Var gl = recipe_.g_loss == loss::GLossKind::wasserstein
                     ? loss::wgan_g_loss_logits(g, fl)
                     : loss::g_loss_ns_logits(g, fl);
    g.backward(gl);
    g.accumulate_param_grads();
    bundle.g_loss = g.val(gl)[0];
    check_finite(bundle.g_loss, "generator loss", z);
    adam_g_.step(generator_->params());
}

loss::LossBundle Trainer::step() {
    loss::LossBundle bundle;
    for (int k = 0; k < cfg_.critic_steps; ++k) discriminator_update(bundle);
    generator_update(bundle);
    ++iteration_;
    return bundle;
}

std::string Trainer::write_checkpoint() {
    ckpt::Checkpoint c;
    c.config = cfg_;
    c.iteration = iteration_;
    ckpt::store_model_state(c, *generator_, *discriminator_);
    adam_g_.store(c.tensors, "optimizer.generator");
    adam_d_.store(c.tensors, "optimizer.discriminator");
    Tensor<float> order({static_cast<int64_t>(order_.size())});
    for (size_t i = 0; i < order_.size(); ++i) order[i] = static_cast<float>(order_[i]);
    c.tensors["trainer.order"] = order;
    Tensor<float> cursor({1});
    cursor[0] = static_cast<float>(cursor_);
    c.tensors["trainer.cursor"] = cursor;
    c.rng_state = rng_.serialize();

    const std::string path = (fs::path(out_dir_) / ("checkpoint_" + c.id() + ".ckpt")).string();
    ckpt::save_checkpoint(path, c);
    // sample grid uses its own stream so checkpointing never perturbs training
    Rng grid_rng(cfg_.seed ^ (0x9e3779b97f4a7c15ull + static_cast<uint64_t>(iteration_)));
    write_sample_grid(*generator_, (fs::path(out_dir_) / ("samples_" + c.id() + ".ppm")).string(),
                      grid_rng);
    checkpoint_paths_.push_back(path);
    return path;
}

void Trainer::restore(const std::string& checkpoint_path) {
    ckpt::Checkpoint c = ckpt::load_checkpoint(checkpoint_path);
    // schedule length may be extended on resume; everything else must match
    auto strip = [](std::map<std::string, std::string> m) {
        m.erase("max_iterations");
        m.erase("checkpoint_interval");
        return m;
    };
    if (strip(c.config.to_map()) != strip(cfg_.to_map()))
        throw ckpt::CheckpointError("checkpoint config does not match trainer config");
    ckpt::load_model_state(c, *generator_, *discriminator_);
    adam_g_.load(c.tensors, "optimizer.generator", generator_->params());
    adam_d_.load(c.tensors, "optimizer.discriminator", discriminator_->params());
    auto order_it = c.tensors.find("trainer.order");
    auto cursor_it = c.tensors.find("trainer.cursor");
    if (order_it == c.tensors.end() || cursor_it == c.tensors.end())
        throw ckpt::CheckpointError("checkpoint is missing trainer state");
    order_.resize(order_it->second.numel());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(order_it->second[i]);
    cursor_ = static_cast<size_t>(cursor_it->second[0]);
    iteration_ = c.iteration;
    rng_.deserialize(c.rng_state);
}

void Trainer::run(int64_t iterations, const TrainCallbacks& callbacks) {
    const int64_t target = iterations < 0
                               ? cfg_.max_iterations
                               : std::min(cfg_.max_iterations, iteration_ + iterations);
    std::ofstream log(fs::path(out_dir_) / "train_log.tsv", std::ios::app);
    bool checkpointed = iteration_ > 0;
    while (iteration_ < target) {
        loss::LossBundle b = step();
        log << iteration_ << "\td_loss\t" << b.d_loss << "\n"
            << iteration_ << "\tg_loss\t" << b.g_loss << "\n";
        if (recipe_.penalty != loss::PenaltyMode::none)
            log << iteration_ << "\tpenalty\t" << b.penalty << "\n";
        for (const auto& [name, value] : b.diagnostics)
            log << iteration_ << "\t" << name << "\t" << value << "\n";
        log.flush();
        if (callbacks.on_iteration) callbacks.on_iteration(iteration_, b);
        checkpointed = false;
        if (iteration_ % cfg_.checkpoint_interval == 0) {
            const std::string path = write_checkpoint();
            checkpointed = true;
            if (callbacks.on_checkpoint) callbacks.on_checkpoint(iteration_, path);
        }
    }
    if (!checkpointed) {
        const std::string path = write_checkpoint();
        if (callbacks.on_checkpoint) callbacks.on_checkpoint(iteration_, path);
    }
}

std::string select_peak_checkpoint(const std::vector<std::string>& checkpoints,
                                   const std::function<double(const std::string&)>& eval_fn) {
    if (checkpoints.empty()) throw std::invalid_argument("no checkpoints to select from");
    size_t best = 0;
    double best_score = eval_fn(checkpoints[0]);
    for (size_t i = 1; i < checkpoints.size(); ++i) {
        const double s = eval_fn(checkpoints[i]);
        if (s > best_score) { // strict: ties keep the earliest
            best_score = s;
            best = i;
        }
    }
    return checkpoints[best];
}

void write_sample_grid(nn::Generator<float>& generator, const std::string& path, Rng& rng) {
    const int n = 64;
    const int latent = generator.config().latent_dim;
    Tensor<float> z({n, latent});
    for (auto& v : z.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor<float> imgs = generator.sample(z, nn::Mode::eval);
    const int s = static_cast<int>(imgs.dim(1));
    img::Image8 grid;
    grid.height = 8 * s;
    grid.width = 8 * s;
    grid.channels = 3;
    grid.data.resize(static_cast<size_t>(grid.height) * grid.width * 3);
    for (int i = 0; i < n; ++i) {
        const int gy = (i / 8) * s, gx = (i % 8) * s;
        const float* src = imgs.ptr() + static_cast<int64_t>(i) * s * s * 3;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                for (int c = 0; c < 3; ++c)
                    grid.at(gy + y, gx + x, c) = img::quantize_unit(src[(y * s + x) * 3 + c]);
    }
    img::write_ppm(path, grid);
}

} // namespace ganloc::train
