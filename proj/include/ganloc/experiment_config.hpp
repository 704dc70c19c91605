#pragma once

#include "ganloc/data.hpp"
#include "ganloc/nn/models.hpp"
#include "ganloc/training.hpp"

#include <map>
#include <string>

namespace ganloc::cfg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value experiment description: GAN hyperparameters, augmentation
// amplitudes, dataset binding, threshold ratio, and output directory.
struct ExperimentConfig {
    nn::GanConfig gan;
    train::AugmentationPolicy aug;
    std::string dataset;          // builtin spec name, "cifar10-<category>", or a manifest dir
    std::string root;             // dataset root directory
    std::string out_dir = "out";
    double ratio = 0.2;
    bool include_test_in_training = false;

    std::map<std::string, std::string> to_map() const;
    // unknown keys rejected; absent keys keep variant-dependent defaults
    static ExperimentConfig from_map(const std::map<std::string, std::string>& kv);
};

// UTF-8 `key=value` lines with `#` comments; duplicate keys rejected
std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& source_name);
ExperimentConfig load_config_file(const std::string& path);
// every run writes the fully resolved config beside its outputs
void write_resolved_config(const std::string& path, const ExperimentConfig& config);

// binds the dataset key to a loader: CIFAR-10 category, Tiny-ImageNet group,
// or a persisted manifest directory
data::Dataset resolve_dataset(const ExperimentConfig& config);

} // namespace ganloc::cfg
