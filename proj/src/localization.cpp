#include "ganloc/localization.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace ganloc::loc {

BinaryMask binarize(const saliency::SaliencyMap& map, double ratio) {
    if (ratio <= 0.0 || ratio > 1.0) throw std::invalid_argument("binarize: ratio must be in (0,1]");
    BinaryMask m;
    m.height = map.height;
    m.width = map.width;
    m.data.assign(map.values.size(), 0);
    if (map.degenerate) {
        m.degenerate = true;
        return m;
    }
    const double threshold = ratio * map.max_value();
    for (size_t i = 0; i < map.values.size(); ++i)
        m.data[i] = map.values[i] >= threshold ? 1 : 0;
    return m;
}

std::vector<std::vector<int>> connected_components(const BinaryMask& mask, Connectivity conn) {
    const int h = mask.height, w = mask.width;
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    std::vector<std::vector<int>> comps;
    std::vector<int> stack;
    for (int start = 0; start < h * w; ++start) {
        if (!mask.data[static_cast<size_t>(start)] || label[static_cast<size_t>(start)] >= 0)
            continue;
        const int id = static_cast<int>(comps.size());
        comps.emplace_back();
        stack.assign(1, start);
        label[static_cast<size_t>(start)] = id;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            comps[static_cast<size_t>(id)].push_back(p);
            const int y = p / w, x = p % w;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    if (conn == Connectivity::four && dy != 0 && dx != 0) continue;
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int q = ny * w + nx;
                    if (mask.data[static_cast<size_t>(q)] && label[static_cast<size_t>(q)] < 0) {
                        label[static_cast<size_t>(q)] = id;
                        stack.push_back(q);
                    }
                }
            }
        }
        std::sort(comps.back().begin(), comps.back().end());
    }
    // deterministic order: (min row, min col) of each component
    std::vector<std::pair<std::pair<int, int>, int>> keys;
    for (size_t i = 0; i < comps.size(); ++i) {
        int min_row = h, min_col = w;
        for (int p : comps[i]) {
            min_row = std::min(min_row, p / w);
            min_col = std::min(min_col, p % w);
        }
        keys.push_back({{min_row, min_col}, static_cast<int>(i)});
    }
    std::sort(keys.begin(), keys.end());
    std::vector<std::vector<int>> ordered;
    ordered.reserve(comps.size());
    for (auto& k : keys) ordered.push_back(std::move(comps[static_cast<size_t>(k.second)]));
    return ordered;
}

Box tightest_box(const std::vector<int>& component, int width) {
    if (component.empty()) throw std::invalid_argument("tightest_box: empty component");
    Box b{width, 1 << 30, 0, 0};
    b.x_min = width;
    b.y_min = 1 << 30;
    for (int p : component) {
        const int y = p / width, x = p % width;
        b.x_min = std::min(b.x_min, x);
        b.y_min = std::min(b.y_min, y);
        b.x_max = std::max(b.x_max, x + 1);
        b.y_max = std::max(b.y_max, y + 1);
    }
    return b;
}

Box localize(const saliency::SaliencyMap& map, double ratio, Connectivity conn, LargestBy largest) {
    BinaryMask mask = binarize(map, ratio);
    auto comps = connected_components(mask, conn);
    if (comps.empty()) return Box{0, 0, map.width, map.height}; // degenerate fallback
    Box best;
    int64_t best_score = -1;
    for (const auto& comp : comps) {
        Box b = tightest_box(comp, map.width);
        const int64_t score = largest == LargestBy::box_area
                                  ? b.area()
                                  : static_cast<int64_t>(comp.size());
        if (score > best_score) { // ties keep the earliest component
            best_score = score;
            best = b;
        }
    }
    return best;
}

std::string to_json_line(const Prediction& p) {
    nlohmann::json j;
    j["image_id"] = p.image_id;
    j["x_min"] = p.box.x_min;
    j["y_min"] = p.box.y_min;
    j["x_max"] = p.box.x_max;
    j["y_max"] = p.box.y_max;
    j["ratio"] = p.ratio;
    j["degenerate_flag"] = p.degenerate;
    return j.dump();
}

Prediction prediction_from_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    Prediction p;
    p.image_id = j.at("image_id").get<std::string>();
    p.box = Box{j.at("x_min").get<int>(), j.at("y_min").get<int>(),
                j.at("x_max").get<int>(), j.at("y_max").get<int>()};
    p.ratio = j.at("ratio").get<double>();
    p.degenerate = j.at("degenerate_flag").get<bool>();
    return p;
}

void write_predictions(const std::string& path, const std::vector<Prediction>& preds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open predictions file for writing: " + path);
    for (const auto& p : preds) out << to_json_line(p) << '\n';
}

std::vector<Prediction> read_predictions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open predictions file: " + path);
    std::vector<Prediction> preds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        preds.push_back(prediction_from_json(line));
    }
    return preds;
}

} // namespace ganloc::loc
