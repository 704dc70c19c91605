#pragma once

#include "ganloc/data.hpp"
#include "ganloc/localization.hpp"
#include "ganloc/nn/models.hpp"
#include "ganloc/rng.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ganloc::eval {

// |a∩b| / |a∪b| over integer pixel sets (half-open boxes); 0 when disjoint
double iou(const loc::Box& a, const loc::Box& b);

// fraction of images with iou strictly greater than 0.5
double gt_known_loc(const std::vector<loc::Box>& predictions,
                    const std::vector<loc::Box>& ground_truth);

// Multi-scale structural similarity on [-1,1] RGB images [H,W,3].
// Luminance = channel mean shifted to [0,1]; Gaussian 11x11 sigma 1.5,
// K1=0.01, K2=0.03, L=1; standard five-scale weights truncated to the
// number of scales the image supports and renormalized (3 at 64px, 2 at 32px).
double ms_ssim(const Tensor<float>& a, const Tensor<float>& b);

// mean MS-SSIM over `pairs` random latent pairs; higher mean = lower diversity
double ms_ssim_diversity(nn::Generator<float>& generator, int pairs, Rng& rng);

struct PerImageResult {
    std::string image_id;
    double iou = 0.0;
    bool correct = false;
};

struct EvalReport {
    std::vector<PerImageResult> per_image;
    double gt_known_loc = 0.0;
    std::optional<double> ms_ssim_mean;
    int ms_ssim_pairs = 0;
    uint64_t ms_ssim_seed = 0;
    std::map<std::string, std::string> config;
    std::string checkpoint_id;
    double ratio = 0.2;

    std::string to_json() const;
    // `gt_known_loc=<float> n=<int> ratio=<float> checkpoint=<id>`
    std::string summary_line() const;
};

// CAM -> threshold -> largest box per image, scored against gt boxes
EvalReport evaluate_split(nn::Discriminator<float>& discriminator,
                          const std::vector<data::AnnotatedImage>& split, double ratio,
                          const std::string& checkpoint_id);

// score a prediction file against the annotated images it was produced from
EvalReport evaluate_predictions(const std::vector<loc::Prediction>& predictions,
                                const std::vector<data::AnnotatedImage>& split, double ratio,
                                const std::string& checkpoint_id);

} // namespace ganloc::eval
