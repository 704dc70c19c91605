#include "ganloc/experiment_config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace ganloc::cfg {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::set<std::string>& augmentation_keys() {
    static const std::set<std::string> keys = {"max_translation_fraction", "brightness",
                                               "contrast", "saturation", "lighting_pca_scale"};
    return keys;
}

const std::set<std::string>& experiment_keys() {
    static const std::set<std::string> keys = {"dataset", "root", "out_dir", "ratio",
                                               "include_test_in_training"};
    return keys;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " has malformed numeric value '" + v + "'");
    }
}

} // namespace

std::map<std::string, std::string> ExperimentConfig::to_map() const {
    std::map<std::string, std::string> kv = gan.to_map();
    kv["max_translation_fraction"] = fmt_double(aug.max_translation_fraction);
    kv["brightness"] = fmt_double(aug.brightness);
    kv["contrast"] = fmt_double(aug.contrast);
    kv["saturation"] = fmt_double(aug.saturation);
    kv["lighting_pca_scale"] = fmt_double(aug.lighting_pca_scale);
    kv["dataset"] = dataset;
    kv["root"] = root;
    kv["out_dir"] = out_dir;
    kv["ratio"] = fmt_double(ratio);
    kv["include_test_in_training"] = include_test_in_training ? "true" : "false";
    return kv;
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& kv) {
    ExperimentConfig c;
    // variant and input_size fix the variant-dependent defaults first
    nn::Variant variant = c.gan.variant;
    int input_size = c.gan.input_size;
    try {
        if (auto it = kv.find("variant"); it != kv.end())
            variant = nn::variant_from_name(it->second);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (auto it = kv.find("input_size"); it != kv.end())
        input_size = static_cast<int>(parse_double("input_size", it->second));
    std::map<std::string, std::string> gan_kv =
        nn::GanConfig::defaults(variant, input_size).to_map();

    for (const auto& [key, value] : kv) {
        if (gan_kv.count(key)) {
            gan_kv[key] = value;
        } else if (augmentation_keys().count(key)) {
            const double v = parse_double(key, value);
            if (key == "max_translation_fraction") c.aug.max_translation_fraction = v;
            else if (key == "brightness") c.aug.brightness = v;
            else if (key == "contrast") c.aug.contrast = v;
            else if (key == "saturation") c.aug.saturation = v;
            else c.aug.lighting_pca_scale = v;
        } else if (experiment_keys().count(key)) {
            if (key == "dataset") c.dataset = value;
            else if (key == "root") c.root = value;
            else if (key == "out_dir") c.out_dir = value;
            else if (key == "ratio") c.ratio = parse_double(key, value);
            else if (value == "true") c.include_test_in_training = true;
            else if (value == "false") c.include_test_in_training = false;
            else throw ConfigError("config key " + key + " must be true or false");
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }

    try {
        c.gan = nn::GanConfig::from_map(gan_kv);
        c.gan.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.ratio <= 0.0 || c.ratio > 1.0)
        throw ConfigError("ratio must lie in (0, 1], got " + fmt_double(c.ratio));
    return c;
}

std::map<std::string, std::string> parse_key_values(const std::string& text,
                                                    const std::string& source_name) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source_name + ":" + std::to_string(line_no) +
                              ": expected key=value");
        auto trim = [](std::string s) {
            const auto b2 = s.find_first_not_of(" \t");
            if (b2 == std::string::npos) return std::string();
            const auto e2 = s.find_last_not_of(" \t");
            return s.substr(b2, e2 - b2 + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(source_name + ":" + std::to_string(line_no) + ": empty key");
        if (kv.count(key))
            throw ConfigError(source_name + ":" + std::to_string(line_no) + ": duplicate key " +
                              key);
        kv[key] = value;
    }
    return kv;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return ExperimentConfig::from_map(parse_key_values(text.str(), path));
}

void write_resolved_config(const std::string& path, const ExperimentConfig& config) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write resolved config: " + path);
    for (const auto& [k, v] : config.to_map()) out << k << '=' << v << '\n';
}

data::Dataset resolve_dataset(const ExperimentConfig& config) {
    const std::string& name = config.dataset;
    if (name.rfind("cifar10-", 0) == 0)
        return data::build_cifar_category(name.substr(8), config.root);
    for (const auto& s : data::builtin_specs())
        if (s.name == name || (name == "Four-legs animals" && s.name == "Artiodactyla"))
            return data::build_tiny_imagenet_group(s, config.root);
    if (fs::exists(fs::path(config.root) / "manifest.tsv")) return data::load_dataset(config.root);
    if (name == "synthetic-square") {
        // generate on first use and persist so later subcommands see the same data
        Rng rng(config.gan.seed);
        data::Dataset ds = data::build_synthetic_square_dataset(
            1000, config.gan.input_size, 3 * config.gan.input_size / 8, rng);
        if (!config.root.empty()) data::save_dataset(ds, config.root);
        return ds;
    }
    throw data::DataError("cannot resolve dataset '" + name + "' under root '" + config.root +
                          "' (no manifest.tsv found)");
}

} // namespace ganloc::cfg
