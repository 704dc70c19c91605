#pragma once

#include "ganloc/image_io.hpp"
#include "ganloc/localization.hpp"
#include "ganloc/rng.hpp"
#include "ganloc/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ganloc::data {

struct DatasetSpec {
    std::string name;
    std::vector<std::string> subcategory_names;
    int train_count = 0;
    int test_count = 0;
    int input_size = 64; // 32 or 64
    bool has_boxes = true;
};

// the six built-in Tiny-ImageNet groupings
const std::vector<DatasetSpec>& builtin_specs();
// accepts "Four-legs animals" as an alias of "Artiodactyla"; throws on unknown name
const DatasetSpec& spec_by_name(const std::string& name);

struct AnnotatedImage {
    std::string image_id;
    Tensor<float> pixels; // [H,W,3] in [-1,1]
    std::optional<loc::Box> gt_box;
};

struct Dataset {
    std::string name;
    int input_size = 0;
    bool has_boxes = false;
    std::vector<AnnotatedImage> train;
    std::vector<AnnotatedImage> test;
};

// raised with exit-code semantics "data error" at the CLI boundary
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Tensor<float> normalize_image(const img::Image8& image);
img::Image8 denormalize_image(const Tensor<float>& pixels);

// standard CIFAR-10 binary batches under root; 5000 train / 1000 test, no boxes
Dataset build_cifar_category(const std::string& category, const std::string& root);

// standard Tiny-ImageNet layout under root; counts asserted against the spec
Dataset build_tiny_imagenet_group(const DatasetSpec& spec, const std::string& root);

// near-constant dark background in [-0.85,-0.8] with one bright square in [0.6,1]
// (smooth border, high-frequency binary core);
// n training images plus a held-out test split of n/10
Dataset build_synthetic_square_dataset(int n, int size, int square, Rng& rng);

// collate selected images into an [N,H,W,3] batch
Tensor<float> make_batch(const std::vector<AnnotatedImage>& images, const std::vector<int>& indices);

// tab-separated rows: image_id, relative path, split, box ("x0,y0,x1,y1" or "-")
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);
std::string manifest_checksum(const std::string& manifest_path);

} // namespace ganloc::data
