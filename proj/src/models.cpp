#include "ganloc/nn/models.hpp"

#include <cstdio>
#include <stdexcept>

namespace ganloc::nn {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::dcgan: return "DCGAN";
        case Variant::sn_dcgan: return "SN-DCGAN";
        case Variant::dragan: return "DRAGAN";
        case Variant::wgan_gp: return "WGAN-GP";
        case Variant::sn_wgan_gp: return "SN-WGAN-GP";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "DCGAN" || name == "dcgan") return Variant::dcgan;
    if (name == "SN-DCGAN" || name == "sn-dcgan") return Variant::sn_dcgan;
    if (name == "DRAGAN" || name == "dragan") return Variant::dragan;
    if (name == "WGAN-GP" || name == "wgan-gp") return Variant::wgan_gp;
    if (name == "SN-WGAN-GP" || name == "sn-wgan-gp") return Variant::sn_wgan_gp;
    throw std::invalid_argument("unknown GAN variant: " + name);
}

GanConfig GanConfig::defaults(Variant v, int input_size) {
    GanConfig c;
    c.variant = v;
    c.input_size = input_size;
    c.critic_steps = (v == Variant::wgan_gp || v == Variant::sn_wgan_gp) ? 5 : 1;
    c.spectral_norm = (v == Variant::sn_dcgan || v == Variant::sn_wgan_gp);
    c.penalty_weight = 10.0;
    return c;
}

void GanConfig::validate() const {
    if (input_size != 32 && input_size != 64)
        throw std::invalid_argument("input_size must be 32 or 64");
    if (latent_dim <= 0) throw std::invalid_argument("latent_dim must be positive");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (max_iterations <= 0) throw std::invalid_argument("max_iterations must be positive");
    if (penalty_weight < 0) throw std::invalid_argument("penalty_weight must be nonnegative");
    if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 || adam_beta2 >= 1)
        throw std::invalid_argument("adam betas must lie in (0,1)");
    const bool wgan = (variant == Variant::wgan_gp || variant == Variant::sn_wgan_gp);
    if (wgan && critic_steps != 5)
        throw std::invalid_argument("WGAN-GP variants require critic_steps = 5");
    if (!wgan && critic_steps != 1)
        throw std::invalid_argument("non-WGAN variants require critic_steps = 1");
    if (variant == Variant::dragan && spectral_norm)
        throw std::invalid_argument("spectral normalization must be disabled for DRAGAN");
    const bool sn_variant = (variant == Variant::sn_dcgan || variant == Variant::sn_wgan_gp);
    if (sn_variant && !spectral_norm)
        throw std::invalid_argument("SN variants require spectral_norm = true");
    if ((variant == Variant::dcgan || variant == Variant::wgan_gp) && spectral_norm)
        throw std::invalid_argument("spectral_norm = true requires an SN variant");
}

namespace {
std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace

std::map<std::string, std::string> GanConfig::to_map() const {
    std::map<std::string, std::string> kv;
    kv["variant"] = variant_name(variant);
    kv["input_size"] = std::to_string(input_size);
    kv["latent_dim"] = std::to_string(latent_dim);
    kv["leaky_slope"] = fmt_double(leaky_slope);
    kv["critic_steps"] = std::to_string(critic_steps);
    kv["penalty_weight"] = fmt_double(penalty_weight);
    kv["learning_rate"] = fmt_double(learning_rate);
    kv["adam_beta1"] = fmt_double(adam_beta1);
    kv["adam_beta2"] = fmt_double(adam_beta2);
    kv["adam_eps"] = fmt_double(adam_eps);
    kv["batch_size"] = std::to_string(batch_size);
    kv["max_iterations"] = std::to_string(max_iterations);
    kv["augmentation"] = augmentation ? "true" : "false";
    kv["seed"] = std::to_string(seed);
    kv["spectral_norm"] = spectral_norm ? "true" : "false";
    kv["dragan_noise_scale"] = fmt_double(dragan_noise_scale);
    kv["checkpoint_interval"] = std::to_string(checkpoint_interval);
    return kv;
}

GanConfig GanConfig::from_map(const std::map<std::string, std::string>& kv) {
    GanConfig c;
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument(std::string("missing config key: ") + key);
        return it->second;
    };
    auto get_bool = [&](const char* key) {
        const std::string& v = get(key);
        if (v == "true") return true;
        if (v == "false") return false;
        throw std::invalid_argument(std::string("config key ") + key + " must be true or false");
    };
    try {
        c.variant = variant_from_name(get("variant"));
        c.input_size = std::stoi(get("input_size"));
        c.latent_dim = std::stoi(get("latent_dim"));
        c.leaky_slope = std::stod(get("leaky_slope"));
        c.critic_steps = std::stoi(get("critic_steps"));
        c.penalty_weight = std::stod(get("penalty_weight"));
        c.learning_rate = std::stod(get("learning_rate"));
        c.adam_beta1 = std::stod(get("adam_beta1"));
        c.adam_beta2 = std::stod(get("adam_beta2"));
        c.adam_eps = std::stod(get("adam_eps"));
        c.batch_size = std::stoi(get("batch_size"));
        c.max_iterations = std::stoll(get("max_iterations"));
        c.augmentation = get_bool("augmentation");
        c.seed = std::stoull(get("seed"));
        c.spectral_norm = get_bool("spectral_norm");
        c.dragan_noise_scale = std::stod(get("dragan_noise_scale"));
        c.checkpoint_interval = std::stoll(get("checkpoint_interval"));
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("malformed numeric value in config");
    }
    return c;
}

std::vector<LayerSpec> build_generator(const GanConfig& config) {
    config.validate();
    const int64_t s = config.input_size;
    std::vector<LayerSpec> specs;
    // latent projection to the 4x4x128 reshape stage
    specs.push_back({LayerKind::linear, 0, 0, 128, NormKind::none, false, ActKind::none, 4, 4});
    const int64_t widths[3] = {512, 256, 128};
    int64_t extent = 4;
    for (int i = 0; i < 3; ++i) {
        extent *= 2;
        specs.push_back({LayerKind::transposed_conv, 4, 2, widths[i], NormKind::batch, false,
                         ActKind::relu, extent, extent});
    }
    const int64_t last_stride = (s == 64) ? 2 : 1;
    extent = (s == 64) ? extent * 2 : extent;
    specs.push_back({LayerKind::transposed_conv, 4, last_stride, 3, NormKind::none, false,
                     ActKind::tanh, extent, extent});
    return specs;
}

std::vector<LayerSpec> build_discriminator(const GanConfig& config) {
    config.validate();
    const bool sn = config.spectral_norm;
    NormKind norm = NormKind::none;
    if (config.uses_batch_norm_d()) norm = NormKind::batch;
    if (config.uses_layer_norm_d()) norm = NormKind::layer;
    std::vector<LayerSpec> specs;
    const int64_t widths[4] = {64, 128, 256, 512};
    int64_t extent = config.input_size;
    for (int i = 0; i < 4; ++i) {
        const int64_t stride = (i == 0 && config.input_size == 32) ? 1 : 2;
        extent = (stride == 2) ? extent / 2 : extent;
        specs.push_back({LayerKind::conv, 4, stride, widths[i], norm, sn, ActKind::leaky_relu,
                         extent, extent});
    }
    specs.push_back({LayerKind::global_average_pool, 0, 0, 512, NormKind::none, false,
                     ActKind::none, 1, 1});
    specs.push_back({LayerKind::linear, 0, 0, 1, NormKind::none, sn, ActKind::none, 1, 1});
    return specs;
}

} // namespace ganloc::nn
