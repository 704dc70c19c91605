#include "ganloc/checkpoint.hpp"
#include "ganloc/data.hpp"
#include "ganloc/evaluation.hpp"
#include "ganloc/experiment_config.hpp"
#include "ganloc/image_io.hpp"
#include "ganloc/kernels/kernels.hpp"
#include "ganloc/localization.hpp"
#include "ganloc/saliency.hpp"
#include "ganloc/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

namespace fs = std::filesystem;
using namespace ganloc;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Flags {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::string dataset;
    std::string root;
    std::optional<double> ratio;
    std::optional<uint64_t> seed;
    std::string predictions; // evaluate: score an existing predictions file
};

cfg::ExperimentConfig resolve_config(const Flags& f, bool require_file) {
    cfg::ExperimentConfig c;
    if (!f.config.empty())
        c = cfg::load_config_file(f.config);
    else if (require_file)
        throw cfg::ConfigError("--config is required for this subcommand");
    if (!f.dataset.empty()) c.dataset = f.dataset;
    if (!f.root.empty()) c.root = f.root;
    if (!f.out.empty()) c.out_dir = f.out;
    if (f.ratio) c.ratio = *f.ratio;
    if (f.seed) c.gan.seed = *f.seed;
    if (c.ratio <= 0.0 || c.ratio > 1.0) throw cfg::ConfigError("ratio must lie in (0, 1]");
    return c;
}

struct LoadedModels {
    ckpt::Checkpoint checkpoint;
    std::unique_ptr<nn::Generator<float>> generator;
    std::unique_ptr<nn::Discriminator<float>> discriminator;
};

LoadedModels load_models(const std::string& path) {
    LoadedModels m;
    m.checkpoint = ckpt::load_checkpoint(path);
    Rng rng(m.checkpoint.config.seed);
    m.generator = std::make_unique<nn::Generator<float>>(m.checkpoint.config, rng);
    m.discriminator = std::make_unique<nn::Discriminator<float>>(m.checkpoint.config, rng);
    ckpt::load_model_state(m.checkpoint, *m.generator, *m.discriminator);
    return m;
}

std::vector<const data::AnnotatedImage*> sorted_images(const data::Dataset& ds, bool test_only) {
    std::vector<const data::AnnotatedImage*> all;
    for (const auto& im : ds.test) all.push_back(&im);
    if (!test_only)
        for (const auto& im : ds.train) all.push_back(&im);
    std::sort(all.begin(), all.end(),
              [](const auto* a, const auto* b) { return a->image_id < b->image_id; });
    return all;
}

void check_size(const ckpt::Checkpoint& c, const data::Dataset& ds) {
    if (ds.input_size != c.config.input_size)
        throw data::DataError("checkpoint expects " + std::to_string(c.config.input_size) +
                              "px images but the dataset has " + std::to_string(ds.input_size) +
                              "px images");
}

int cmd_train(const Flags& flags) {
    cfg::ExperimentConfig c = resolve_config(flags, /*require_file=*/true);
    data::Dataset ds = cfg::resolve_dataset(c);
    if (c.include_test_in_training) {
        for (auto& im : ds.test) ds.train.push_back(im);
        std::cout << "training on train+test splits (" << ds.train.size() << " images)\n";
    } else {
        std::cout << "training on the train split only (" << ds.train.size() << " images)\n";
    }
    fs::create_directories(c.out_dir);
    cfg::write_resolved_config((fs::path(c.out_dir) / "config_resolved.txt").string(), c);
    train::Trainer trainer(c.gan, ds, c.out_dir);
    if (!flags.checkpoint.empty()) trainer.restore(flags.checkpoint);
    train::TrainCallbacks cb;
    cb.on_checkpoint = [](int64_t iter, const std::string& path) {
        std::cout << "checkpoint at iteration " << iter << ": " << path << "\n";
    };
    trainer.run(-1, cb);
    std::cout << "done: " << trainer.checkpoint_paths().size() << " checkpoints in " << c.out_dir
              << "\n";
    return 0;
}

int cmd_localize(const Flags& flags) {
    if (flags.checkpoint.empty()) throw cfg::ConfigError("--checkpoint is required");
    cfg::ExperimentConfig c = resolve_config(flags, /*require_file=*/false);
    if (c.root.empty()) throw cfg::ConfigError("--root (images directory) is required");
    LoadedModels m = load_models(flags.checkpoint);
    data::Dataset ds = cfg::resolve_dataset(c);
    check_size(m.checkpoint, ds);

    std::vector<loc::Prediction> preds;
    for (const auto* im : sorted_images(ds, /*test_only=*/false)) {
        Tensor<float> batch({1, im->pixels.shape[0], im->pixels.shape[1], 3});
        batch.data = im->pixels.data;
        auto maps = saliency::cam_batch(*m.discriminator, batch);
        loc::Prediction p;
        p.image_id = im->image_id;
        p.box = loc::localize(maps[0], c.ratio);
        p.ratio = c.ratio;
        p.degenerate = maps[0].degenerate;
        preds.push_back(std::move(p));
    }
    const std::string out = flags.out.empty() ? "predictions.jsonl" : flags.out;
    loc::write_predictions(out, preds);
    std::cout << preds.size() << " predictions written to " << out << "\n";
    return 0;
}

int cmd_evaluate(const Flags& flags) {
    cfg::ExperimentConfig c = resolve_config(flags, /*require_file=*/false);
    if (c.root.empty()) throw cfg::ConfigError("--root (annotated images directory) is required");
    if (flags.predictions.empty() && flags.checkpoint.empty())
        throw cfg::ConfigError("evaluate needs --checkpoint or a predictions file");
    data::Dataset ds = cfg::resolve_dataset(c);

    eval::EvalReport report;
    if (!flags.predictions.empty()) {
        auto preds = loc::read_predictions(flags.predictions);
        auto images = ds.test;
        for (const auto& im : ds.train) images.push_back(im);
        report = eval::evaluate_predictions(preds, images, c.ratio, flags.predictions);
    } else if (!flags.checkpoint.empty()) {
        LoadedModels m = load_models(flags.checkpoint);
        check_size(m.checkpoint, ds);
        if (ds.test.empty()) throw data::DataError("dataset has no test split to evaluate");
        report = eval::evaluate_split(*m.discriminator, ds.test, c.ratio, m.checkpoint.id());
        report.config = m.checkpoint.config.to_map();
        const int pairs = 100;
        Rng div_rng(flags.seed.value_or(0));
        report.ms_ssim_mean = eval::ms_ssim_diversity(*m.generator, pairs, div_rng);
        report.ms_ssim_pairs = pairs;
        report.ms_ssim_seed = flags.seed.value_or(0);
    } else {
        throw cfg::ConfigError("evaluate needs --checkpoint or a predictions file");
    }

    const std::string out = flags.out.empty() ? "eval_report.json" : flags.out;
    std::ofstream json(out);
    json << report.to_json() << "\n";
    std::cout << report.summary_line() << "\n";
    return 0;
}

int cmd_visualize(const Flags& flags) {
    if (flags.checkpoint.empty()) throw cfg::ConfigError("--checkpoint is required");
    cfg::ExperimentConfig c = resolve_config(flags, /*require_file=*/false);
    if (c.root.empty()) throw cfg::ConfigError("--root (images directory) is required");
    const std::string out_dir = flags.out.empty() ? "visualizations" : flags.out;
    LoadedModels m = load_models(flags.checkpoint);
    data::Dataset ds = cfg::resolve_dataset(c);
    check_size(m.checkpoint, ds);
    fs::create_directories(out_dir);

    const img::Rgb kPredicted{0, 200, 0};
    const img::Rgb kGroundTruth{40, 80, 255};
    int ok = 0, failed = 0;
    for (const auto* im : sorted_images(ds, /*test_only=*/true)) {
        try {
            Tensor<float> batch({1, im->pixels.shape[0], im->pixels.shape[1], 3});
            batch.data = im->pixels.data;
            auto maps = saliency::cam_batch(*m.discriminator, batch);
            const loc::Box box = loc::localize(maps[0], c.ratio);
            const std::vector<uint8_t> gray = saliency::to_gray8(maps[0]);

            img::Image8 input = data::denormalize_image(im->pixels);
            img::Image8 boxed = input;
            if (im->gt_box) img::draw_box(boxed, *im->gt_box, kGroundTruth);
            img::draw_box(boxed, box, kPredicted);

            img::Image8 heat;
            heat.height = maps[0].height;
            heat.width = maps[0].width;
            heat.channels = 3;
            heat.data.resize(gray.size() * 3);
            for (size_t i = 0; i < gray.size(); ++i)
                heat.data[i * 3] = heat.data[i * 3 + 1] = heat.data[i * 3 + 2] = gray[i];

            img::Image8 panel = img::hstack({boxed, heat, img::overlay_heatmap(input, gray, 0.5)});
            img::write_ppm((fs::path(out_dir) / (im->image_id + "_panel.ppm")).string(), panel);
            img::write_pgm((fs::path(out_dir) / (im->image_id + "_heatmap.pgm")).string(),
                           gray.data(), maps[0].height, maps[0].width);
            ++ok;
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << im->image_id << ": " << e.what() << "\n";
            ++failed;
        }
    }
    Rng grid_rng(flags.seed.value_or(m.checkpoint.config.seed));
    train::write_sample_grid(*m.generator, (fs::path(out_dir) / "samples_grid.ppm").string(),
                             grid_rng);
    std::cout << ok << " panels written to " << out_dir << "\n";
    if (ok == 0 && failed > 0) throw data::DataError("all input images failed");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAN-discriminator object co-localization toolkit"};
    app.require_subcommand(1);

    Flags flags;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "experiment config file (key=value lines)");
        sub->add_option("--checkpoint", flags.checkpoint, "checkpoint archive path");
        sub->add_option("--ratio", "CAM threshold ratio in (0,1]")
            ->check(CLI::Number)
            ->each([&](const std::string& s) { flags.ratio = std::stod(s); });
        sub->add_option("--out", flags.out, "output file or directory");
        sub->add_option("--seed", "random seed override")
            ->check(CLI::Number)
            ->each([&](const std::string& s) { flags.seed = std::stoull(s); });
        sub->add_option("--dataset", flags.dataset, "dataset name");
        sub->add_option("--root", flags.root, "dataset root directory");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a GAN variant");
    add_common(train_cmd);
    CLI::App* localize_cmd =
        app.add_subcommand("localize", "emit bounding-box predictions for a directory of images");
    add_common(localize_cmd);
    CLI::App* evaluate_cmd =
        app.add_subcommand("evaluate", "score predictions or a checkpoint with GT-known Loc");
    add_common(evaluate_cmd);
    evaluate_cmd->add_option("predictions", flags.predictions,
                             "predictions file to score (JSON lines)");
    CLI::App* visualize_cmd =
        app.add_subcommand("visualize", "write box/heatmap/overlay panels and a sample grid");
    add_common(visualize_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        kernels::select_backend(kernels::Backend::auto_detect);
        if (train_cmd->parsed()) return cmd_train(flags);
        if (localize_cmd->parsed()) return cmd_localize(flags);
        if (evaluate_cmd->parsed()) return cmd_evaluate(flags);
        if (visualize_cmd->parsed()) return cmd_visualize(flags);
    } catch (const cfg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const data::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const train::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
