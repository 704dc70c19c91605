#pragma once

#include "ganloc/saliency.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ganloc::loc {

// Pixel rectangle, inclusive min corner, exclusive max corner.
struct Box {
    int x_min = 0, y_min = 0;
    int x_max = 0, y_max = 0;

    int64_t area() const {
        return static_cast<int64_t>(x_max - x_min) * static_cast<int64_t>(y_max - y_min);
    }
    bool valid() const { return x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max; }
    bool operator==(const Box&) const = default;
};

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;
    bool degenerate = false;

    bool at(int y, int x) const { return data[static_cast<size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
};

enum class Connectivity { four, eight };
enum class LargestBy { box_area, component_pixels };

// mask(i,j) = map(i,j) >= ratio * max(map). An all-zero (degenerate) map
// yields an all-false mask with the degenerate flag set.
BinaryMask binarize(const saliency::SaliencyMap& map, double ratio);

// Maximal connected components of true pixels, ordered by (min row, min col).
// Each component is a sorted list of row-major pixel indices.
std::vector<std::vector<int>> connected_components(const BinaryMask& mask,
                                                   Connectivity conn = Connectivity::eight);

Box tightest_box(const std::vector<int>& component, int width);

// Threshold -> components -> tightest box per component -> largest box.
// Degenerate maps fall back to the full-image box.
Box localize(const saliency::SaliencyMap& map, double ratio,
             Connectivity conn = Connectivity::eight,
             LargestBy largest = LargestBy::box_area);

struct Prediction {
    std::string image_id;
    Box box;
    double ratio = 0.2;
    bool degenerate = false;
};

// One JSON object per line: {image_id, x_min, y_min, x_max, y_max, ratio, degenerate_flag}
std::string to_json_line(const Prediction& p);
Prediction prediction_from_json(const std::string& line);
void write_predictions(const std::string& path, const std::vector<Prediction>& preds);
std::vector<Prediction> read_predictions(const std::string& path);

} // namespace ganloc::loc
