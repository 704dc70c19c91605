#pragma once

#include "ganloc/nn/models.hpp"
#include "ganloc/tensor.hpp"

#include <map>
#include <string>

namespace ganloc::ckpt {

// Single-file binary archive: config as key=value text, iteration counter,
// RNG state, and every tensor keyed by a stable dotted path. Saving a loaded
// checkpoint reproduces the file byte for byte.
struct Checkpoint {
    nn::GanConfig config;
    int64_t iteration = 0;
    std::string rng_state;
    std::map<std::string, Tensor<float>> tensors;

    // derived from the iteration counter, e.g. "iter_0005000"
    std::string id() const;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// restore/capture model parameter and buffer tensors by dotted path
void store_model_state(Checkpoint& ckpt, nn::Generator<float>& generator,
                       nn::Discriminator<float>& discriminator);
void load_model_state(const Checkpoint& ckpt, nn::Generator<float>& generator,
                      nn::Discriminator<float>& discriminator);

} // namespace ganloc::ckpt
