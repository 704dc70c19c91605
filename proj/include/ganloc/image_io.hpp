#pragma once

#include "ganloc/localization.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ganloc::img {

// 8-bit interleaved RGB image
struct Image8 {
    int height = 0;
    int width = 0;
    int channels = 3; // 1 or 3
    std::vector<uint8_t> data;

    uint8_t& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

void write_ppm(const std::string& path, const Image8& image);
void write_pgm(const std::string& path, const uint8_t* gray, int height, int width);
Image8 read_ppm(const std::string& path);
// dispatches on extension (.ppm/.pgm always; .jpg/.jpeg when built with libjpeg)
Image8 load_image(const std::string& path);
bool jpeg_supported();

// [-1,1] float pixels -> 8-bit, the exact inverse of v/127.5 - 1
uint8_t quantize_unit(float v);
float dequantize_unit(uint8_t v);

struct Rgb {
    uint8_t r, g, b;
};

void draw_box(Image8& image, const loc::Box& box, Rgb color);
// fixed 256-entry blue->red color table for heatmap overlays
Rgb heat_color(uint8_t level);
// alpha-blend: out = (1-alpha)*image + alpha*colormap(map)
Image8 overlay_heatmap(const Image8& image, const std::vector<uint8_t>& gray_map, double alpha);
// place panels side by side with a 2px separator
Image8 hstack(const std::vector<Image8>& panels);

} // namespace ganloc::img
