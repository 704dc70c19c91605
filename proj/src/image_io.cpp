#include "ganloc/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#ifdef GANLOC_HAVE_LIBJPEG
#include <csetjmp>
#include <jpeglib.h>
#endif

namespace ganloc::img {

void write_ppm(const std::string& path, const Image8& image) {
    if (image.channels != 3) throw std::invalid_argument("write_ppm: need 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image: " + path);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.data.data()),
              static_cast<std::streamsize>(image.data.size()));
}

void write_pgm(const std::string& path, const uint8_t* gray, int height, int width) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(gray),
              static_cast<std::streamsize>(height) * width);
}

namespace {
int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    in >> v;
    return v;
}
} // namespace

Image8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read image: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6" && magic != "P5") throw std::runtime_error("unsupported PNM type in " + path);
    Image8 im;
    im.channels = magic == "P6" ? 3 : 1;
    im.width = read_pnm_token(in);
    im.height = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (maxval != 255) throw std::runtime_error("unsupported PNM maxval in " + path);
    in.get(); // single whitespace after header
    im.data.resize(static_cast<size_t>(im.height) * im.width * im.channels);
    in.read(reinterpret_cast<char*>(im.data.data()), static_cast<std::streamsize>(im.data.size()));
    if (!in) throw std::runtime_error("truncated PNM file: " + path);
    return im;
}

bool jpeg_supported() {
#ifdef GANLOC_HAVE_LIBJPEG
    return true;
#else
    return false;
#endif
}

#ifdef GANLOC_HAVE_LIBJPEG
namespace {
struct JpegErr {
    jpeg_error_mgr mgr;
    jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    longjmp(err->jump, 1);
}

Image8 read_jpeg(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot read image: " + path);
    jpeg_decompress_struct cinfo{};
    JpegErr jerr{};
    cinfo.err = jpeg_std_error(&jerr.mgr);
    jerr.mgr.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(f);
        throw std::runtime_error("corrupt JPEG: " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    Image8 im;
    im.width = static_cast<int>(cinfo.output_width);
    im.height = static_cast<int>(cinfo.output_height);
    im.channels = 3;
    im.data.resize(static_cast<size_t>(im.height) * im.width * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        uint8_t* row = im.data.data() + static_cast<size_t>(cinfo.output_scanline) * im.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    return im;
}
} // namespace
#endif

Image8 load_image(const std::string& path) {
    auto ends_with = [&](const char* suf) {
        const std::string s(suf);
        if (path.size() < s.size()) return false;
        std::string tail = path.substr(path.size() - s.size());
        std::transform(tail.begin(), tail.end(), tail.begin(), ::tolower);
        return tail == s;
    };
    if (ends_with(".ppm") || ends_with(".pgm")) return read_ppm(path);
#ifdef GANLOC_HAVE_LIBJPEG
    if (ends_with(".jpg") || ends_with(".jpeg")) return read_jpeg(path);
#endif
    throw std::runtime_error("unsupported image format: " + path);
}

uint8_t quantize_unit(float v) {
    const float x = std::clamp((v + 1.0f) * 127.5f, 0.0f, 255.0f);
    return static_cast<uint8_t>(std::lround(x));
}

float dequantize_unit(uint8_t v) {
    return static_cast<float>(v) / 127.5f - 1.0f;
}

void draw_box(Image8& image, const loc::Box& box, Rgb color) {
    const int x0 = std::clamp(box.x_min, 0, image.width - 1);
    const int x1 = std::clamp(box.x_max - 1, 0, image.width - 1);
    const int y0 = std::clamp(box.y_min, 0, image.height - 1);
    const int y1 = std::clamp(box.y_max - 1, 0, image.height - 1);
    auto put = [&](int y, int x) {
        image.at(y, x, 0) = color.r;
        image.at(y, x, 1) = color.g;
        image.at(y, x, 2) = color.b;
    };
    for (int x = x0; x <= x1; ++x) {
        put(y0, x);
        put(y1, x);
    }
    for (int y = y0; y <= y1; ++y) {
        put(y, x0);
        put(y, x1);
    }
}

Rgb heat_color(uint8_t level) {
    // piecewise-linear blue -> cyan -> yellow -> red
    const double t = level / 255.0;
    auto seg = [](double t, double lo, double hi) {
        return std::clamp((t - lo) / (hi - lo), 0.0, 1.0);
    };
    const double r = seg(t, 0.35, 0.65);
    const double g = t < 0.65 ? seg(t, 0.10, 0.35) : 1.0 - seg(t, 0.65, 1.0) * 0.6;
    const double b = 1.0 - seg(t, 0.35, 0.65);
    return Rgb{static_cast<uint8_t>(std::lround(255 * r)),
               static_cast<uint8_t>(std::lround(255 * g)),
               static_cast<uint8_t>(std::lround(255 * b))};
}

Image8 overlay_heatmap(const Image8& image, const std::vector<uint8_t>& gray_map, double alpha) {
    if (gray_map.size() != static_cast<size_t>(image.height) * image.width)
        throw std::invalid_argument("overlay_heatmap: size mismatch");
    Image8 out = image;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const Rgb hc = heat_color(gray_map[static_cast<size_t>(y) * image.width + x]);
            const uint8_t src[3] = {hc.r, hc.g, hc.b};
            for (int c = 0; c < 3; ++c) {
                const double v = (1.0 - alpha) * image.at(y, x, c) + alpha * src[c];
                out.at(y, x, c) = static_cast<uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

Image8 hstack(const std::vector<Image8>& panels) {
    if (panels.empty()) throw std::invalid_argument("hstack: no panels");
    const int h = panels[0].height;
    const int sep = 2;
    int w = 0;
    for (const auto& p : panels) {
        if (p.height != h || p.channels != 3) throw std::invalid_argument("hstack: panel mismatch");
        w += p.width;
    }
    w += sep * (static_cast<int>(panels.size()) - 1);
    Image8 out;
    out.height = h;
    out.width = w;
    out.channels = 3;
    out.data.assign(static_cast<size_t>(h) * w * 3, 255);
    int x_off = 0;
    for (const auto& p : panels) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < p.width; ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x_off + x, c) = p.at(y, x, c);
        x_off += p.width + sep;
    }
    return out;
}

} // namespace ganloc::img
