#include "ganloc/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace ganloc::data {

const std::vector<DatasetSpec>& builtin_specs() {
    static const std::vector<DatasetSpec> specs = {
        {"Artiodactyla", {"bison", "ox", "bighorn", "gazelle", "arabian camel"}, 2500, 250, 64, true},
        {"Bottle", {"pop bottle", "beer bottle"}, 1000, 100, 64, true},
        {"Bird", {"albatross", "black stork", "goose"}, 1500, 150, 64, true},
        {"Cat", {"tabby", "persian cat", "egyptian cat", "cougar"}, 2000, 200, 64, true},
        {"Dog",
         {"standard poodle", "yorkshire", "golden retriever", "labrador retriever",
          "german shephered", "chihuahua"},
         3000, 300, 64, true},
        {"Vehicle",
         {"convertible", "school bus", "trolleybus", "sports car", "police van", "moving van",
          "limousine", "beach wagon"},
         4000, 400, 64, true},
    };
    return specs;
}

const DatasetSpec& spec_by_name(const std::string& name) {
    const std::string key = name == "Four-legs animals" ? "Artiodactyla" : name;
    for (const auto& s : builtin_specs())
        if (s.name == key) return s;
    throw DataError("unknown dataset spec: " + name);
}

Tensor<float> normalize_image(const img::Image8& image) {
    Tensor<float> out({image.height, image.width, 3});
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const uint8_t v = image.channels == 3 ? image.at(y, x, c) : image.at(y, x, 0);
                out.data[(static_cast<size_t>(y) * image.width + x) * 3 + c] =
                    img::dequantize_unit(v);
            }
    return out;
}

img::Image8 denormalize_image(const Tensor<float>& pixels) {
    const int h = static_cast<int>(pixels.shape[0]);
    const int w = static_cast<int>(pixels.shape[1]);
    img::Image8 out;
    out.height = h;
    out.width = w;
    out.channels = 3;
    out.data.resize(static_cast<size_t>(h) * w * 3);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = img::quantize_unit(pixels.data[i]);
    return out;
}

namespace {

int cifar_label_of(const std::string& category) {
    static const std::vector<std::string> names = {"airplane", "automobile", "bird", "cat", "deer",
                                                   "dog",      "frog",       "horse", "ship", "truck"};
    for (int i = 0; i < static_cast<int>(names.size()); ++i)
        if (names[i] == category) return i;
    throw DataError("unknown CIFAR-10 category: " + category);
}

void read_cifar_batch(const std::string& path, int want_label, const std::string& id_prefix,
                      std::vector<AnnotatedImage>& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing CIFAR-10 archive: " + path);
    constexpr int kRecord = 1 + 3072;
    std::vector<uint8_t> rec(kRecord);
    int idx = 0;
    while (in.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
        if (rec[0] == want_label) {
            AnnotatedImage im;
            im.image_id = id_prefix + "_" + std::to_string(idx);
            im.pixels = Tensor<float>({32, 32, 3});
            // CIFAR stores channel-planar R,G,B planes of 32x32
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < 32; ++y)
                    for (int x = 0; x < 32; ++x)
                        im.pixels.data[(static_cast<size_t>(y) * 32 + x) * 3 + c] =
                            img::dequantize_unit(rec[1 + c * 1024 + y * 32 + x]);
            out.push_back(std::move(im));
        }
        ++idx;
    }
    if (in.gcount() != 0) throw DataError("corrupt CIFAR-10 archive: " + path);
}

} // namespace

Dataset build_cifar_category(const std::string& category, const std::string& root) {
    const int label = cifar_label_of(category);
    Dataset ds;
    ds.name = "cifar10-" + category;
    ds.input_size = 32;
    ds.has_boxes = false;
    for (int b = 1; b <= 5; ++b) {
        const std::string path = root + "/data_batch_" + std::to_string(b) + ".bin";
        read_cifar_batch(path, label, category + "_train_b" + std::to_string(b), ds.train);
    }
    read_cifar_batch(root + "/test_batch.bin", label, category + "_test", ds.test);
    if (ds.train.size() != 5000 || ds.test.size() != 1000)
        throw DataError("CIFAR-10 count mismatch for " + category + ": got " +
                        std::to_string(ds.train.size()) + "/" + std::to_string(ds.test.size()) +
                        ", expected 5000/1000");
    return ds;
}

namespace {

std::string lower_trim(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// words.txt: wnid \t comma-separated synonym list
std::map<std::string, std::string> match_wnids(const std::string& root,
                                               const std::vector<std::string>& wanted) {
    const std::string path = root + "/words.txt";
    std::ifstream in(path);
    if (!in) throw DataError("missing annotation index: " + path);
    std::map<std::string, std::string> wnid_to_name;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed line");
        const std::string wnid = line.substr(0, tab);
        std::stringstream names(line.substr(tab + 1));
        std::string synonym;
        while (std::getline(names, synonym, ',')) {
            const std::string n = lower_trim(synonym);
            for (const auto& w : wanted)
                if (n == lower_trim(w)) wnid_to_name[wnid] = w;
        }
    }
    if (wnid_to_name.size() != wanted.size()) {
        std::string msg = "subcategory matching failed; matched " +
                          std::to_string(wnid_to_name.size()) + " of " +
                          std::to_string(wanted.size()) + " names in " + path;
        throw DataError(msg);
    }
    return wnid_to_name;
}

loc::Box parse_box_fields(const std::vector<std::string>& f, size_t off, const std::string& path,
                          int line_no) {
    loc::Box box;
    try {
        box.x_min = std::stoi(f.at(off));
        box.y_min = std::stoi(f.at(off + 1));
        box.x_max = std::stoi(f.at(off + 2)) + 1; // inclusive coords -> half-open
        box.y_max = std::stoi(f.at(off + 3)) + 1;
    } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": malformed annotation line");
    }
    if (!box.valid())
        throw DataError(path + ":" + std::to_string(line_no) + ": degenerate annotation box");
    return box;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) {
        if (!f.empty() && f.back() == '\r') f.pop_back();
        out.push_back(f);
    }
    return out;
}

} // namespace

Dataset build_tiny_imagenet_group(const DatasetSpec& spec, const std::string& root) {
    const auto wnids = match_wnids(root, spec.subcategory_names);
    Dataset ds;
    ds.name = spec.name;
    ds.input_size = spec.input_size;
    ds.has_boxes = true;

    for (const auto& [wnid, name] : wnids) {
        const std::string boxes_path = root + "/train/" + wnid + "/" + wnid + "_boxes.txt";
        std::ifstream boxes(boxes_path);
        if (!boxes) throw DataError("missing annotation file: " + boxes_path);
        std::string line;
        int line_no = 0;
        while (std::getline(boxes, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto f = split_tabs(line);
            if (f.size() != 5)
                throw DataError(boxes_path + ":" + std::to_string(line_no) +
                                ": malformed annotation line");
            AnnotatedImage im;
            im.image_id = f[0];
            im.gt_box = parse_box_fields(f, 1, boxes_path, line_no);
            im.pixels = normalize_image(
                img::load_image(root + "/train/" + wnid + "/images/" + f[0]));
            ds.train.push_back(std::move(im));
        }
    }

    const std::string val_path = root + "/val/val_annotations.txt";
    std::ifstream val(val_path);
    if (!val) throw DataError("missing annotation file: " + val_path);
    std::string line;
    int line_no = 0;
    while (std::getline(val, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() != 6)
            throw DataError(val_path + ":" + std::to_string(line_no) + ": malformed annotation line");
        if (!wnids.count(f[1])) continue;
        AnnotatedImage im;
        im.image_id = f[0];
        im.gt_box = parse_box_fields(f, 2, val_path, line_no);
        im.pixels = normalize_image(img::load_image(root + "/val/images/" + f[0]));
        ds.test.push_back(std::move(im));
    }

    if (static_cast<int>(ds.train.size()) != spec.train_count ||
        static_cast<int>(ds.test.size()) != spec.test_count)
        throw DataError("count mismatch for " + spec.name + ": got " +
                        std::to_string(ds.train.size()) + "/" + std::to_string(ds.test.size()) +
                        ", expected " + std::to_string(spec.train_count) + "/" +
                        std::to_string(spec.test_count));
    return ds;
}

Dataset build_synthetic_square_dataset(int n, int size, int square, Rng& rng) {
    if (square <= 0 || square >= size)
        throw DataError("square side must be in (0, size); got square=" + std::to_string(square) +
                        " size=" + std::to_string(size));
    Dataset ds;
    ds.name = "synthetic-square";
    ds.input_size = size;
    ds.has_boxes = true;
    // n training images plus a held-out annotated test split of n/10
    const int n_test = n / 10;
    const int total = n + n_test;
    for (int i = 0; i < total; ++i) {
        AnnotatedImage im;
        im.image_id = "sq_" + std::to_string(i);
        im.pixels = Tensor<float>({size, size, 3});
        // Keep the background texture nearly flat: with wide-band noise the
        // generator never matches the texture statistics, so the critic can win
        // on a diffuse global cue and its attention map loses the object.
        for (auto& v : im.pixels.data) v = static_cast<float>(rng.uniform(-0.85, -0.8));
        const int x0 = static_cast<int>(rng.uniform_int(size - square + 1));
        const int y0 = static_cast<int>(rng.uniform_int(size - square + 1));
        // The square is a smooth bright border around a high-frequency binary
        // core. The generator masters the smooth parts quickly, so the core
        // texture stays the critic's dominant evidence and its attention map
        // concentrates inside the object instead of smearing over its edges.
        const int margin = square / 3;
        for (int y = y0; y < y0 + square; ++y)
            for (int x = x0; x < x0 + square; ++x) {
                const bool core = x >= x0 + margin && x < x0 + square - margin &&
                                  y >= y0 + margin && y < y0 + square - margin;
                float v;
                if (core)
                    v = rng.uniform(0.0, 1.0) < 0.5 ? static_cast<float>(rng.uniform(0.6, 0.65))
                                                    : static_cast<float>(rng.uniform(0.95, 1.0));
                else
                    v = static_cast<float>(rng.uniform(0.8, 0.85));
                for (int c = 0; c < 3; ++c)
                    im.pixels.data[(static_cast<size_t>(y) * size + x) * 3 + c] = v;
            }
        im.gt_box = loc::Box{x0, y0, x0 + square, y0 + square};
        if (i < n)
            ds.train.push_back(std::move(im));
        else
            ds.test.push_back(std::move(im));
    }
    return ds;
}

Tensor<float> make_batch(const std::vector<AnnotatedImage>& images, const std::vector<int>& indices) {
    if (indices.empty()) throw DataError("empty batch");
    const auto& first = images.at(indices[0]).pixels;
    const int64_t h = first.shape[0], w = first.shape[1];
    Tensor<float> batch({static_cast<int64_t>(indices.size()), h, w, 3});
    const size_t per = static_cast<size_t>(h) * w * 3;
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy_n(images.at(indices[i]).pixels.data.data(), per, batch.data.data() + i * per);
    return batch;
}

namespace {

std::string box_field(const std::optional<loc::Box>& box) {
    if (!box) return "-";
    return std::to_string(box->x_min) + "," + std::to_string(box->y_min) + "," +
           std::to_string(box->x_max) + "," + std::to_string(box->y_max);
}

std::optional<loc::Box> parse_box_field(const std::string& s, const std::string& path, int line_no) {
    if (s == "-") return std::nullopt;
    loc::Box box;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d", &box.x_min, &box.y_min, &box.x_max, &box.y_max) != 4)
        throw DataError(path + ":" + std::to_string(line_no) + ": malformed box field");
    return box;
}

} // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    std::ofstream manifest(fs::path(dir) / "manifest.tsv");
    if (!manifest) throw DataError("cannot write manifest under " + dir);
    auto dump = [&](const std::vector<AnnotatedImage>& images, const char* split) {
        for (const auto& im : images) {
            const std::string rel = "images/" + im.image_id + ".ppm";
            img::write_ppm((fs::path(dir) / rel).string(), denormalize_image(im.pixels));
            manifest << im.image_id << '\t' << rel << '\t' << split << '\t' << box_field(im.gt_box)
                     << '\n';
        }
    };
    dump(ds.train, "train");
    dump(ds.test, "test");
}

Dataset load_dataset(const std::string& dir) {
    const std::string path = (fs::path(dir) / "manifest.tsv").string();
    std::ifstream manifest(path);
    if (!manifest) throw DataError("missing manifest: " + path);
    Dataset ds;
    ds.name = fs::path(dir).filename().string();
    std::string line;
    int line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        if (f.size() != 4)
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed manifest line");
        AnnotatedImage im;
        im.image_id = f[0];
        im.gt_box = parse_box_field(f[3], path, line_no);
        im.pixels = normalize_image(img::load_image((fs::path(dir) / f[1]).string()));
        if (im.gt_box) ds.has_boxes = true;
        ds.input_size = static_cast<int>(im.pixels.shape[0]);
        if (f[2] == "train")
            ds.train.push_back(std::move(im));
        else if (f[2] == "test")
            ds.test.push_back(std::move(im));
        else
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown split " + f[2]);
    }
    return ds;
}

std::string manifest_checksum(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw DataError("missing manifest: " + manifest_path);
    uint64_t h = 1469598103934665603ull; // FNV-1a
    char c;
    while (in.get(c)) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace ganloc::data
