#pragma once

#include "ganloc/checkpoint.hpp"
#include "ganloc/data.hpp"
#include "ganloc/losses.hpp"
#include "ganloc/nn/models.hpp"
#include "ganloc/rng.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ganloc::train {

struct AugmentationPolicy {
    double max_translation_fraction = 0.05; // pixels shift = floor(fraction * size)
    double brightness = 0.2;                // multiplicative jitter in [1-a, 1+a]
    double contrast = 0.2;
    double saturation = 0.2;
    double lighting_pca_scale = 0.1; // stddev of per-eigenvector lighting noise
};

// per-image random translation (edge-replicate) followed by photometric
// jitter; output clamped to [-1,1], shape preserved
Tensor<float> augment(const Tensor<float>& images, const AugmentationPolicy& policy, Rng& rng);

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<ad::Param<float>*>& params);

    int64_t t() const { return t_; }
    // checkpoint plumbing: moments and step count under `prefix.`
    void store(std::map<std::string, Tensor<float>>& out, const std::string& prefix) const;
    void load(const std::map<std::string, Tensor<float>>& in, const std::string& prefix,
              const std::vector<ad::Param<float>*>& params);

private:
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, std::pair<Tensor<float>, Tensor<float>>> slots_; // name -> (m, v)
};

struct TrainCallbacks {
    std::function<void(int64_t iteration, const loss::LossBundle&)> on_iteration;
    std::function<void(int64_t iteration, const std::string& checkpoint_path)> on_checkpoint;
};

class Trainer {
public:
    Trainer(const nn::GanConfig& config, const data::Dataset& dataset, std::string out_dir);

    // one generator iteration (critic_steps discriminator updates + 1 generator update)
    loss::LossBundle step();
    // run until max_iterations (or `iterations` more when >= 0), checkpointing on schedule
    void run(int64_t iterations = -1, const TrainCallbacks& callbacks = {});

    void restore(const std::string& checkpoint_path);
    std::string write_checkpoint();

    int64_t iteration() const { return iteration_; }
    int64_t discriminator_updates() const { return d_updates_; }
    const std::vector<std::string>& checkpoint_paths() const { return checkpoint_paths_; }
    nn::Generator<float>& generator() { return *generator_; }
    nn::Discriminator<float>& discriminator() { return *discriminator_; }

private:
    Tensor<float> next_real_batch();
    Tensor<float> sample_latent(int n);
    void discriminator_update(loss::LossBundle& bundle);
    void generator_update(loss::LossBundle& bundle);
    void check_finite(double value, const char* what, const Tensor<float>& batch);

    nn::GanConfig cfg_;
    const data::Dataset* dataset_;
    std::string out_dir_;
    Rng rng_;
    std::unique_ptr<nn::Generator<float>> generator_;
    std::unique_ptr<nn::Discriminator<float>> discriminator_;
    Adam adam_g_, adam_d_;
    loss::LossRecipe recipe_;
    AugmentationPolicy aug_policy_;
    std::vector<int> order_;
    size_t cursor_ = 0;
    int64_t iteration_ = 0;
    int64_t d_updates_ = 0;
    std::vector<std::string> checkpoint_paths_;
};

// argmax of eval_fn over checkpoints; ties keep the earliest entry
std::string select_peak_checkpoint(const std::vector<std::string>& checkpoints,
                                   const std::function<double(const std::string&)>& eval_fn);

// 8x8 grid of generator samples as one image file
void write_sample_grid(nn::Generator<float>& generator, const std::string& path, Rng& rng);

} // namespace ganloc::train
