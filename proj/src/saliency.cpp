#include "ganloc/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ganloc::saliency {

double SaliencyMap::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

std::vector<double> upsample_bilinear(const std::vector<double>& src, int sh, int sw,
                                      int dh, int dw) {
    std::vector<double> dst(static_cast<size_t>(dh) * dw);
    const double ry = static_cast<double>(sh) / dh;
    const double rx = static_cast<double>(sw) / dw;
    for (int y = 0; y < dh; ++y) {
        const double fy = (y + 0.5) * ry - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        int y1 = std::min(y0 + 1, sh - 1);
        y0 = std::max(y0, 0);
        for (int x = 0; x < dw; ++x) {
            const double fx = (x + 0.5) * rx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            int x1 = std::min(x0 + 1, sw - 1);
            x0 = std::max(x0, 0);
            const double top = src[static_cast<size_t>(y0) * sw + x0] * (1 - wx) +
                               src[static_cast<size_t>(y0) * sw + x1] * wx;
            const double bot = src[static_cast<size_t>(y1) * sw + x0] * (1 - wx) +
                               src[static_cast<size_t>(y1) * sw + x1] * wx;
            dst[static_cast<size_t>(y) * dw + x] = top * (1 - wy) + bot * wy;
        }
    }
    return dst;
}

SaliencyMap normalize_map(std::vector<double> raw, int h, int w) {
    SaliencyMap m;
    m.height = h;
    m.width = w;
    auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
    m.raw_min = *mn;
    m.raw_max = *mx;
    const double span = m.raw_max - m.raw_min;
    if (span <= 0.0 || !std::isfinite(span)) {
        m.degenerate = true;
        m.values.assign(raw.size(), 0.0);
        return m;
    }
    m.values = std::move(raw);
    for (double& v : m.values) v = (v - m.raw_min) / span;
    return m;
}

std::vector<uint8_t> to_gray8(const SaliencyMap& map) {
    std::vector<uint8_t> out(map.values.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint8_t>(std::lround(255.0 * map.values[i]));
    return out;
}

std::string to_text_grid(const SaliencyMap& map) {
    std::ostringstream oss;
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            if (x) oss << ' ';
            oss << map.at(y, x);
        }
        oss << '\n';
    }
    return oss.str();
}

} // namespace ganloc::saliency
