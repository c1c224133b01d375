// Command-line front end: dataset generation, two-stage training, evaluation,
// hyperparameter sweeps, and feature/heatmap exports. All runs are
// reproducible from (config, seed); the resolved config is echoed as
// run.lock next to each run's outputs.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gff/config.hpp"
#include "gff/model.hpp"
#include "gff/synthdata.hpp"
#include "gff/trainer.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::string weights_path;
    std::string ablation;
    std::string perturb = "off";
    std::string image_path;
    bool force = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (key = value lines)");
    cmd->add_option("--seed", args.seed, "run seed (overrides config)");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--weights", args.weights_path, "GFFW weight file");
    cmd->add_option("--ablation", args.ablation, "full | no-dfgm | no-fuse | none")
        ->check(CLI::IsMember({"full", "no-dfgm", "no-fuse", "none"}));
    cmd->add_option("--perturb", args.perturb, "apply the perturbation suite during eval")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_flag("--force", args.force, "overwrite existing outputs");
}

gff::RunConfig resolve_config(const CommonArgs& args) {
    gff::RunConfig cfg;
    if (!args.config_path.empty()) cfg = gff::load_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (!args.ablation.empty()) {
        gff::ablation_from_name(args.ablation);
        cfg.ablation = args.ablation;
    }
    return cfg;
}

std::string require_weights(const CommonArgs& args) {
    if (args.weights_path.empty())
        throw gff::ConfigError("--weights is required for this command");
    if (!fs::exists(args.weights_path))
        throw gff::DataError("missing weight file " + args.weights_path);
    return args.weights_path;
}

int cmd_gen(const CommonArgs& args) {
    gff::RunConfig cfg = resolve_config(args);
    const std::string dir = args.out_dir == "out" ? cfg.data_dir : args.out_dir;
    const std::vector<gff::SplitSpec> splits = {
        {"train", cfg.train_real, cfg.train_fake, gff::Family::kFakeA},
        {"val", cfg.val_real, cfg.val_fake, gff::Family::kFakeA},
        {"test_seen", cfg.test_real, cfg.test_fake, gff::Family::kFakeA},
        {"test_unseen", cfg.test_real, cfg.test_fake, gff::Family::kFakeB},
    };
    for (const auto& s : splits) {
        const fs::path manifest = fs::path(dir) / (s.name + ".csv");
        if (fs::exists(manifest) && !args.force)
            throw gff::DataError("refusing to overwrite " + manifest.string() +
                                 " (use --force)");
    }
    for (std::size_t i = 0; i < splits.size(); ++i) {
        const auto rows =
            gff::generate_split(dir, splits[i], i, cfg.seed, cfg.data_image_size);
        std::cout << splits[i].name << ": " << rows.size() << " images\n";
    }
    gff::write_run_lock(cfg, dir);
    return 0;
}

int cmd_train(const CommonArgs& args) {
    gff::RunConfig cfg = resolve_config(args);
    gff::GffModel<Scalar> model(cfg.model_config(), cfg.seed);
    const auto train_data = gff::load_split(cfg.data_dir, "train");
    std::cout << "training " << cfg.ablation << " on " << train_data.size() << " images\n";
    gff::TrainLog log =
        gff::train_two_stage(model, train_data, cfg.stage1, cfg.stage2, cfg.seed);
    fs::create_directories(args.out_dir);
    const fs::path weights = args.weights_path.empty()
                                 ? fs::path(args.out_dir) / "weights.gffw"
                                 : fs::path(args.weights_path);
    model.save(weights.string());
    gff::write_train_log_csv(log, (fs::path(args.out_dir) / "train_log.csv").string());
    gff::write_run_lock(cfg, args.out_dir);
    if (!log.empty()) std::cout << "final batch loss " << log.back().loss << "\n";
    std::cout << "weights written to " << weights.string() << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    gff::RunConfig cfg = resolve_config(args);
    gff::GffModel<Scalar> model(cfg.model_config(), cfg.seed);
    model.load(require_weights(args));
    gff::EvalOptions opts;
    opts.seed = cfg.seed;
    opts.threads = cfg.eval_threads;
    if (args.perturb == "on") opts.perturbation = cfg.perturbation;
    std::vector<std::pair<std::string, gff::EvalReport>> reports;
    for (const std::string split : {"test_seen", "test_unseen"}) {
        const auto data = gff::load_split(cfg.data_dir, split);
        reports.emplace_back(split, gff::evaluate(model, data, opts));
    }
    fs::create_directories(args.out_dir);
    gff::write_metrics_csv(reports, (fs::path(args.out_dir) / "metrics.csv").string());
    gff::write_run_lock(cfg, args.out_dir);
    for (const auto& [split, report] : reports)
        std::printf("%s: mean acc %.4f, mean ap %.4f\n", split.c_str(), report.mean.acc,
                    report.mean.ap);
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    gff::RunConfig cfg = resolve_config(args);
    const auto train_data = gff::load_split(cfg.data_dir, "train");
    const auto seen = gff::load_split(cfg.data_dir, "test_seen");
    const auto unseen = gff::load_split(cfg.data_dir, "test_unseen");
    fs::create_directories(args.out_dir);
    const fs::path csv_path = fs::path(args.out_dir) / "sweep.csv";
    std::ofstream os(csv_path);
    if (!os) throw gff::DataError("cannot write " + csv_path.string());
    os << "bottleneck_dim,fuse_layers,seen_acc,seen_ap,unseen_acc,unseen_ap\n";
    gff::EvalOptions opts;
    opts.seed = cfg.seed;
    opts.threads = cfg.eval_threads;
    char buf[160];
    for (std::size_t dim : cfg.sweep_dims)
        for (std::size_t layers : cfg.sweep_layers) {
            gff::RunConfig cell = cfg;
            cell.dfgm_dim = dim;
            cell.fuse_depth = layers;
            gff::GffModel<Scalar> model(cell.model_config(), cell.seed);
            gff::train_two_stage(model, train_data, cell.stage1, cell.stage2, cell.seed);
            const auto rs = gff::evaluate(model, seen, opts);
            const auto ru = gff::evaluate(model, unseen, opts);
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", dim, layers,
                          rs.mean.acc, rs.mean.ap, ru.mean.acc, ru.mean.ap);
            os << buf;
            std::cout << "dim " << dim << " layers " << layers << ": seen " << rs.mean.acc
                      << " unseen " << ru.mean.acc << "\n";
        }
    gff::write_run_lock(cfg, args.out_dir);
    return 0;
}

int cmd_cam(const CommonArgs& args) {
    gff::RunConfig cfg = resolve_config(args);
    if (args.image_path.empty()) throw gff::ConfigError("--image is required for cam");
    gff::GffModel<Scalar> model(cfg.model_config(), cfg.seed);
    model.load(require_weights(args));
    const gff::Image source = gff::read_ppm(args.image_path);
    fs::path out = fs::path(args.image_path).replace_extension(".cam.pgm");
    if (args.out_dir != "out") {
        fs::create_directories(args.out_dir);
        out = fs::path(args.out_dir) / out.filename();
    }
    gff::export_cam(model, source, out.string());
    std::cout << "heatmap written to " << out.string() << "\n";
    return 0;
}

int cmd_features(const CommonArgs& args) {
    gff::RunConfig cfg = resolve_config(args);
    gff::GffModel<Scalar> model(cfg.model_config(), cfg.seed);
    model.load(require_weights(args));
    fs::create_directories(args.out_dir);
    for (const std::string split : {"test_seen", "test_unseen"}) {
        const auto data = gff::load_split(cfg.data_dir, split);
        const fs::path out = fs::path(args.out_dir) / ("features_" + split + ".csv");
        gff::export_features(model, data, out.string());
        std::cout << split << ": " << data.size() << " rows -> " << out.string() << "\n";
    }
    gff::write_run_lock(cfg, args.out_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GFF: adapter-guided frozen ViT forgery detector"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* gen = app.add_subcommand("gen", "generate the synthetic dataset");
    auto* train = app.add_subcommand("train", "run the two-stage training protocol");
    auto* eval = app.add_subcommand("eval", "evaluate a trained model");
    auto* sweep = app.add_subcommand("sweep", "bottleneck-dim x fuse-depth grid");
    auto* cam = app.add_subcommand("cam", "export a gradient heatmap for one image");
    auto* features = app.add_subcommand("features", "export per-image fused features");
    for (auto* cmd : {gen, train, eval, sweep, cam, features}) add_common_flags(cmd, args);
    cam->add_option("--image", args.image_path, "input PPM image");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen(args);
        if (train->parsed()) return cmd_train(args);
        if (eval->parsed()) return cmd_eval(args);
        if (sweep->parsed()) return cmd_sweep(args);
        if (cam->parsed()) return cmd_cam(args);
        if (features->parsed()) return cmd_features(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const gff::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gff::NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 4;
    } catch (const gff::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const gff::FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
