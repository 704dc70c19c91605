#pragma once

#include "ganloc/nn/models.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ganloc::saliency {

// Single-channel map at input resolution, min-max normalized to [0,1].
// A constant raw map normalizes to all zeros and is flagged degenerate.
struct SaliencyMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    double raw_min = 0.0;
    double raw_max = 0.0;
    bool degenerate = false;

    double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    double max_value() const;
};

// Weighted sum of activation maps at feature resolution (no upsampling,
// no normalization). Exposed for oracle tests.
template <typename T>
std::vector<double> cam_raw(const nn::DiscriminatorReadout<T>& readout, int image_index) {
    const auto& fm = readout.feature_maps;
    const int64_t n = fm.dim(0), h = fm.dim(1), w = fm.dim(2), k = fm.dim(3);
    if (image_index < 0 || image_index >= n)
        throw std::out_of_range("cam_raw: image index out of range");
    std::vector<double> raw(static_cast<size_t>(h * w), 0.0);
    const T* base = fm.ptr() + static_cast<int64_t>(image_index) * h * w * k;
    for (int64_t s = 0; s < h * w; ++s) {
        double acc = 0.0;
        const T* p = base + s * k;
        for (int64_t c = 0; c < k; ++c)
            acc += static_cast<double>(readout.gap_weights[c]) * static_cast<double>(p[c]);
        raw[static_cast<size_t>(s)] = acc;
    }
    return raw;
}

// Bilinear upsampling, corner alignment off (pixel centers at half offsets).
std::vector<double> upsample_bilinear(const std::vector<double>& src, int sh, int sw,
                                      int dh, int dw);

// Min-max normalization into [0,1]; constant input maps to zeros + flag.
SaliencyMap normalize_map(std::vector<double> raw, int h, int w);

template <typename T>
SaliencyMap compute_cam(const nn::DiscriminatorReadout<T>& readout, int image_index,
                        int input_size) {
    const auto& fm = readout.feature_maps;
    std::vector<double> raw = cam_raw(readout, image_index);
    std::vector<double> up = upsample_bilinear(raw, static_cast<int>(fm.dim(1)),
                                               static_cast<int>(fm.dim(2)), input_size, input_size);
    return normalize_map(std::move(up), input_size, input_size);
}

template <typename T>
std::vector<SaliencyMap> cam_batch(nn::Discriminator<T>& model, const Tensor<T>& images) {
    auto readout = model.forward_readout(images);
    const int size = static_cast<int>(images.dim(1));
    std::vector<SaliencyMap> maps;
    maps.reserve(static_cast<size_t>(images.dim(0)));
    for (int64_t i = 0; i < images.dim(0); ++i)
        maps.push_back(compute_cam(readout, static_cast<int>(i), size));
    return maps;
}

// 8-bit export: round(255 * value), row-major
std::vector<uint8_t> to_gray8(const SaliencyMap& map);
// raw text grid, one row per line, values separated by single spaces
std::string to_text_grid(const SaliencyMap& map);

} // namespace ganloc::saliency
