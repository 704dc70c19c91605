#include "ganloc/evaluation.hpp"

#include "ganloc/saliency.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ganloc::eval {

double iou(const loc::Box& a, const loc::Box& b) {
    if (!a.valid() || !b.valid()) throw std::invalid_argument("iou: invalid box");
    const int ix0 = std::max(a.x_min, b.x_min);
    const int iy0 = std::max(a.y_min, b.y_min);
    const int ix1 = std::min(a.x_max, b.x_max);
    const int iy1 = std::min(a.y_max, b.y_max);
    const int64_t inter = ix0 < ix1 && iy0 < iy1
                              ? static_cast<int64_t>(ix1 - ix0) * (iy1 - iy0)
                              : 0;
    const int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double gt_known_loc(const std::vector<loc::Box>& predictions,
                    const std::vector<loc::Box>& ground_truth) {
    if (predictions.size() != ground_truth.size())
        throw std::invalid_argument("gt_known_loc: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("gt_known_loc: empty input");
    int correct = 0;
    for (size_t i = 0; i < predictions.size(); ++i)
        if (iou(predictions[i], ground_truth[i]) > 0.5) ++correct;
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01, kK2 = 0.03; // L = 1

const std::vector<double>& gaussian_window() {
    static const std::vector<double> w = [] {
        std::vector<double> g(kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += g[i];
        }
        for (auto& v : g) v /= sum;
        return g;
    }();
    return w;
}

struct Gray {
    int h = 0, w = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

Gray to_luminance(const Tensor<float>& im) {
    Gray g;
    g.h = static_cast<int>(im.shape[0]);
    g.w = static_cast<int>(im.shape[1]);
    g.v.resize(static_cast<size_t>(g.h) * g.w);
    for (size_t p = 0; p < g.v.size(); ++p) {
        const float* px = im.data.data() + p * 3;
        const double mean = (px[0] + px[1] + px[2]) / 3.0;
        g.v[p] = (mean + 1.0) * 0.5; // [-1,1] -> [0,1]
    }
    return g;
}

// separable Gaussian filter, valid region only (output (h-10)x(w-10))
Gray filter_valid(const Gray& src) {
    const auto& win = gaussian_window();
    Gray tmp; // horizontal pass
    tmp.h = src.h;
    tmp.w = src.w - kWin + 1;
    tmp.v.resize(static_cast<size_t>(tmp.h) * tmp.w);
    for (int y = 0; y < tmp.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += win[k] * src.at(y, x + k);
            tmp.v[static_cast<size_t>(y) * tmp.w + x] = acc;
        }
    Gray out;
    out.h = src.h - kWin + 1;
    out.w = tmp.w;
    out.v.resize(static_cast<size_t>(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k) acc += win[k] * tmp.at(y + k, x);
            out.v[static_cast<size_t>(y) * out.w + x] = acc;
        }
    return out;
}

Gray mul_gray(const Gray& a, const Gray& b) {
    Gray out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
    return out;
}

Gray downsample2(const Gray& src) {
    Gray out;
    out.h = src.h / 2;
    out.w = src.w / 2;
    out.v.resize(static_cast<size_t>(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.v[static_cast<size_t>(y) * out.w + x] =
                0.25 * (src.at(2 * y, 2 * x) + src.at(2 * y, 2 * x + 1) +
                        src.at(2 * y + 1, 2 * x) + src.at(2 * y + 1, 2 * x + 1));
    return out;
}

// mean luminance term and contrast-structure term at one scale
void ssim_terms(const Gray& a, const Gray& b, double& lum, double& cs) {
    const double c1 = kK1 * kK1, c2 = kK2 * kK2;
    const Gray mu_a = filter_valid(a);
    const Gray mu_b = filter_valid(b);
    const Gray saa = filter_valid(mul_gray(a, a));
    const Gray sbb = filter_valid(mul_gray(b, b));
    const Gray sab = filter_valid(mul_gray(a, b));
    double lum_sum = 0.0, cs_sum = 0.0;
    for (size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double va = saa.v[i] - ma * ma;
        const double vb = sbb.v[i] - mb * mb;
        const double cov = sab.v[i] - ma * mb;
        lum_sum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs_sum += (2.0 * cov + c2) / (va + vb + c2);
    }
    lum = lum_sum / static_cast<double>(mu_a.v.size());
    cs = cs_sum / static_cast<double>(mu_a.v.size());
}

int supported_scales(int size) {
    // each scale halves; the window must fit at the coarsest scale
    int m = 0;
    while (size >= kWin && m < 5) {
        ++m;
        size /= 2;
    }
    return std::max(m, 1);
}

} // namespace

double ms_ssim(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape != b.shape) throw std::invalid_argument("ms_ssim: shape mismatch");
    const int size = static_cast<int>(std::min(a.shape[0], a.shape[1]));
    const int wanted = size >= 64 ? 3 : 2;
    int scales = supported_scales(size);
    if (scales < wanted)
        std::cerr << "warning: image " << size << "px supports only " << scales
                  << " structural-similarity scales\n";
    scales = std::min(scales, wanted);

    static const double kWeights5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    std::vector<double> weights(kWeights5, kWeights5 + scales);
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    for (auto& w : weights) w /= wsum;

    Gray ga = to_luminance(a);
    Gray gb = to_luminance(b);
    double score = 1.0;
    for (int s = 0; s < scales; ++s) {
        double lum, cs;
        ssim_terms(ga, gb, lum, cs);
        if (s == scales - 1) {
            score *= std::pow(std::max(lum * cs, 0.0), weights[s]);
        } else {
            score *= std::pow(std::max(cs, 0.0), weights[s]);
            ga = downsample2(ga);
            gb = downsample2(gb);
        }
    }
    return score;
}

double ms_ssim_diversity(nn::Generator<float>& generator, int pairs, Rng& rng) {
    if (pairs < 1) throw std::invalid_argument("ms_ssim_diversity: pairs must be >= 1");
    const int latent = generator.config().latent_dim;
    double total = 0.0;
    for (int p = 0; p < pairs; ++p) {
        Tensor<float> z({2, latent});
        for (auto& v : z.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        Tensor<float> imgs = generator.sample(z, nn::Mode::frozen_stats);
        const size_t per = imgs.numel() / 2;
        Tensor<float> a({imgs.shape[1], imgs.shape[2], imgs.shape[3]});
        Tensor<float> b = a;
        std::copy_n(imgs.data.data(), per, a.data.data());
        std::copy_n(imgs.data.data() + per, per, b.data.data());
        total += ms_ssim(a, b);
    }
    return total / pairs;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["gt_known_loc"] = gt_known_loc;
    j["ratio"] = ratio;
    j["checkpoint_id"] = checkpoint_id;
    j["n"] = per_image.size();
    if (ms_ssim_mean) {
        j["ms_ssim_mean"] = *ms_ssim_mean;
        j["ms_ssim_pairs"] = ms_ssim_pairs;
        j["ms_ssim_seed"] = ms_ssim_seed;
    }
    j["config"] = config;
    auto& arr = j["per_image"] = nlohmann::json::array();
    for (const auto& r : per_image)
        arr.push_back({{"image_id", r.image_id}, {"iou", r.iou}, {"correct", r.correct}});
    return j.dump(2);
}

std::string EvalReport::summary_line() const {
    std::ostringstream out;
    out << "gt_known_loc=" << gt_known_loc << " n=" << per_image.size() << " ratio=" << ratio
        << " checkpoint=" << checkpoint_id;
    return out.str();
}

namespace {

EvalReport score_boxes(const std::vector<std::string>& ids, const std::vector<loc::Box>& pred,
                       const std::vector<loc::Box>& gt, double ratio,
                       const std::string& checkpoint_id) {
    EvalReport report;
    report.ratio = ratio;
    report.checkpoint_id = checkpoint_id;
    for (size_t i = 0; i < pred.size(); ++i) {
        PerImageResult r;
        r.image_id = ids[i];
        r.iou = iou(pred[i], gt[i]);
        r.correct = r.iou > 0.5;
        report.per_image.push_back(r);
    }
    report.gt_known_loc = gt_known_loc(pred, gt);
    return report;
}

} // namespace

EvalReport evaluate_split(nn::Discriminator<float>& discriminator,
                          const std::vector<data::AnnotatedImage>& split, double ratio,
                          const std::string& checkpoint_id) {
    if (split.empty()) throw std::invalid_argument("evaluate_split: empty split");
    std::vector<std::string> ids;
    std::vector<loc::Box> pred, gt;
    for (const auto& im : split) {
        if (!im.gt_box) throw std::invalid_argument("evaluate_split: image " + im.image_id +
                                                    " has no ground-truth box");
        Tensor<float> batch({1, im.pixels.shape[0], im.pixels.shape[1], 3});
        batch.data = im.pixels.data;
        auto maps = saliency::cam_batch(discriminator, batch);
        ids.push_back(im.image_id);
        pred.push_back(loc::localize(maps[0], ratio));
        gt.push_back(*im.gt_box);
    }
    return score_boxes(ids, pred, gt, ratio, checkpoint_id);
}

EvalReport evaluate_predictions(const std::vector<loc::Prediction>& predictions,
                                const std::vector<data::AnnotatedImage>& split, double ratio,
                                const std::string& checkpoint_id) {
    if (predictions.empty()) throw std::invalid_argument("evaluate_predictions: empty input");
    std::map<std::string, const loc::Box*> gt_by_id;
    for (const auto& im : split)
        if (im.gt_box) gt_by_id[im.image_id] = &*im.gt_box;
    std::vector<std::string> ids;
    std::vector<loc::Box> pred, gt;
    for (const auto& p : predictions) {
        auto it = gt_by_id.find(p.image_id);
        if (it == gt_by_id.end())
            throw std::invalid_argument("no ground-truth box for image " + p.image_id);
        ids.push_back(p.image_id);
        pred.push_back(p.box);
        gt.push_back(*it->second);
    }
    return score_boxes(ids, pred, gt, ratio, checkpoint_id);
}

} // namespace ganloc::eval
