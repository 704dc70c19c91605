#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ganloc/localization.hpp"
#include "ganloc/saliency.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <cstdio>
#include <filesystem>

using namespace ganloc;

namespace {

saliency::SaliencyMap map_from(std::vector<double> v, int h, int w) {
    return saliency::normalize_map(std::move(v), h, w);
}

loc::BinaryMask mask_from(const std::vector<uint8_t>& bits, int h, int w) {
    loc::BinaryMask m;
    m.height = h;
    m.width = w;
    m.data = bits;
    return m;
}

} // namespace

TEST_CASE("cam_raw matches per-pixel dot product oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2, h = 3, w = 4, k = 5;
        nn::DiscriminatorReadout<double> r;
        r.feature_maps = Tensor<double>({n, h, w, k});
        r.gap_weights = Tensor<double>({k});
        test_util::fill_normal(r.feature_maps, rng);
        test_util::fill_normal(r.gap_weights, rng);
        for (int img = 0; img < n; ++img) {
            const auto raw = saliency::cam_raw(r, img);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double expected = 0.0;
                    for (int c = 0; c < k; ++c)
                        expected += r.gap_weights[c] *
                                    r.feature_maps.data[((img * h + y) * w + x) * k + c];
                    CHECK(raw[y * w + x] == doctest::Approx(expected).epsilon(1e-6));
                }
        }
    }
}

TEST_CASE("bilinear upsampling: constant preserved, identity at same size") {
    std::vector<double> c(16, 3.25);
    for (double v : saliency::upsample_bilinear(c, 4, 4, 9, 9)) CHECK(v == doctest::Approx(3.25));
    Rng rng(3);
    std::vector<double> src(25);
    for (auto& v : src) v = rng.normal();
    const auto same = saliency::upsample_bilinear(src, 5, 5, 5, 5);
    for (int i = 0; i < 25; ++i) CHECK(same[i] == doctest::Approx(src[i]));
}

TEST_CASE("normalize_map: range and degenerate flag") {
    auto m = map_from({1.0, 3.0, 2.0, 5.0}, 2, 2);
    CHECK(!m.degenerate);
    CHECK(m.at(0, 0) == doctest::Approx(0.0));
    CHECK(m.at(1, 1) == doctest::Approx(1.0));
    CHECK(m.raw_min == doctest::Approx(1.0));
    CHECK(m.raw_max == doctest::Approx(5.0));

    auto flat = map_from({7.0, 7.0, 7.0, 7.0}, 2, 2);
    CHECK(flat.degenerate);
    for (double v : flat.values) CHECK(v == 0.0);
}

TEST_CASE("to_gray8 rounds 255 * value") {
    auto m = map_from({0.0, 0.5, 0.25, 1.0}, 2, 2);
    const auto g = saliency::to_gray8(m);
    CHECK(g[0] == 0);
    CHECK(g[3] == 255);
    // normalized values: 0, 0.5, 0.25, 1 -> round(255 v)
    CHECK(g[1] == 128);
    CHECK(g[2] == 64);
}

TEST_CASE("binarize: threshold is ratio * max, degenerate -> all false") {
    auto m = map_from({0.0, 10.0, 2.0, 5.0}, 2, 2);
    auto b = loc::binarize(m, 0.2);
    // normalized max is 1; threshold 0.2 keeps values >= 0.2
    CHECK(b.at(0, 1));
    CHECK(b.at(1, 1)); // 0.5
    CHECK(!b.at(0, 0));
    CHECK(b.at(1, 0)); // 0.2 exactly: >= threshold
    CHECK_THROWS_AS(loc::binarize(m, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(loc::binarize(m, 1.5), std::invalid_argument);

    auto flat = map_from({1.0, 1.0, 1.0, 1.0}, 2, 2);
    auto bf = loc::binarize(flat, 0.2);
    CHECK(bf.degenerate);
    for (auto v : bf.data) CHECK(v == 0);
}

TEST_CASE("connected components match union-find oracle on all 4x4 masks") {
    for (int bits = 0; bits < 65536; ++bits) {
        std::vector<uint8_t> px(16);
        for (int i = 0; i < 16; ++i) px[i] = (bits >> i) & 1;
        const auto m = mask_from(px, 4, 4);
        for (bool eight : {false, true}) {
            const auto got = loc::connected_components(
                m, eight ? loc::Connectivity::eight : loc::Connectivity::four);
            const auto want = oracles::components_union_find(px, 4, 4, eight);
            REQUIRE(got == want);
        }
    }
}

TEST_CASE("connected components match oracle on random 16x16 masks") {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<uint8_t> px(256);
        for (auto& v : px) v = rng.uniform() < 0.4 ? 1 : 0;
        const auto m = mask_from(px, 16, 16);
        for (bool eight : {false, true}) {
            const auto got = loc::connected_components(
                m, eight ? loc::Connectivity::eight : loc::Connectivity::four);
            const auto want = oracles::components_union_find(px, 16, 16, eight);
            REQUIRE(got == want);
        }
    }
}

TEST_CASE("tightest_box and localize") {
    // two blobs: 2x2 at top-left, 1x3 row at bottom
    std::vector<double> v(25, 0.0);
    v[0] = v[1] = v[5] = v[6] = 1.0;
    v[22] = v[23] = v[24] = 0.9;
    auto m = map_from(v, 5, 5);
    const loc::Box box = loc::localize(m, 0.5);
    CHECK(box == loc::Box{0, 0, 2, 2}); // area 4 beats area 3

    // component_pixels mode picks the same here; box-area tie keeps earliest
    const loc::Box by_pixels = loc::localize(m, 0.5, loc::Connectivity::eight,
                                             loc::LargestBy::component_pixels);
    CHECK(by_pixels == loc::Box{0, 0, 2, 2});

    // degenerate map falls back to the full image
    auto flat = map_from(std::vector<double>(25, 1.0), 5, 5);
    CHECK(loc::localize(flat, 0.2) == loc::Box{0, 0, 5, 5});
}

TEST_CASE("localize matches enumeration oracle on random masks") {
    Rng rng(123);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> v(64);
        for (auto& x : v) x = rng.uniform() < 0.35 ? 1.0 : 0.0;
        if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) continue;
        auto m = map_from(v, 8, 8);
        std::vector<uint8_t> px(64);
        for (int i = 0; i < 64; ++i) px[i] = v[i] >= 0.5 ? 1 : 0;
        CHECK(loc::localize(m, 0.5) == oracles::largest_box(px, 8, 8, true));
    }
}

TEST_CASE("prediction JSON lines round trip") {
    loc::Prediction p;
    p.image_id = "img_007";
    p.box = {3, 4, 17, 21};
    p.ratio = 0.35;
    p.degenerate = true;
    const loc::Prediction q = loc::prediction_from_json(loc::to_json_line(p));
    CHECK(q.image_id == p.image_id);
    CHECK(q.box == p.box);
    CHECK(q.ratio == doctest::Approx(p.ratio));
    CHECK(q.degenerate == p.degenerate);

    const std::string path =
        (std::filesystem::temp_directory_path() / "ganloc_pred_test.jsonl").string();
    loc::write_predictions(path, {p, p});
    const auto preds = loc::read_predictions(path);
    REQUIRE(preds.size() == 2);
    CHECK(preds[1].box == p.box);
    std::remove(path.c_str());
}
