#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gff/model.hpp"
#include "gff/perturb.hpp"
#include "gff/trainer.hpp"

namespace gff {

/// Resolved knobs for one run. Serialized as flat `key = value` lines with
/// `#` comments; unknown keys are rejected at parse time. Training-stage
/// defaults are the published recipe; model dims default to the desk-scale
/// profile.
struct RunConfig {
    std::uint64_t seed = 0;

    BackboneConfig backbone;        // 64 px, patch 8, dim 64, 4 heads, 4 blocks
    std::size_t dfgm_dim = 0;       // 0 = embed_dim / 4
    bool dfgm_bias = true;

    std::size_t fuse_depth = 2;
    std::size_t fuse_heads = 0;     // 0 = backbone head count
    double fuse_mlp_ratio = 4.0;
    bool fuse_positional = false;

    std::string ablation = "full";

    std::string data_dir = "data";
    std::size_t data_image_size = 64;
    std::size_t train_real = 1000, train_fake = 1000;
    std::size_t val_real = 100, val_fake = 100;
    std::size_t test_real = 250, test_fake = 250;

    StagePlan stage1 = StagePlan::stage1_defaults();
    StagePlan stage2 = StagePlan::stage2_defaults();

    PerturbationConfig perturbation;
    unsigned eval_threads = 0;

    std::vector<std::size_t> sweep_dims = {4, 8, 16, 32};
    std::vector<std::size_t> sweep_layers = {1, 2, 4, 8, 16};

    std::size_t bottleneck() const { return dfgm_dim ? dfgm_dim : backbone.embed_dim / 4; }

    ModelConfig model_config() const {
        ModelConfig mc;
        mc.backbone = backbone;
        mc.bottleneck = bottleneck();
        mc.dfgm_bias = dfgm_bias;
        mc.fuse_depth = fuse_depth;
        mc.fuse_heads = fuse_heads ? fuse_heads : backbone.num_heads;
        mc.fuse_mlp_ratio = fuse_mlp_ratio;
        mc.fuse_positional = fuse_positional;
        mc.mode = ablation_from_name(ablation);
        return mc;
    }
};

namespace detail {

template <typename T>
T parse_number(const std::string& value, const std::string& key, std::size_t line) {
    std::istringstream ss(value);
    T out;
    ss >> out;
    if (ss.fail() || !(ss >> std::ws).eof())
        throw ConfigError("line " + std::to_string(line) + ": bad value '" + value + "' for " +
                          key);
    return out;
}

inline bool parse_bool(const std::string& value, const std::string& key, std::size_t line) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("line " + std::to_string(line) + ": bad boolean '" + value + "' for " +
                      key);
}

inline std::vector<std::size_t> parse_size_list(const std::string& value, const std::string& key,
                                                std::size_t line) {
    std::vector<std::size_t> out;
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_number<std::size_t>(item, key, line));
    if (out.empty())
        throw ConfigError("line " + std::to_string(line) + ": empty list for " + key);
    return out;
}

inline std::string join_size_list(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace detail

/// Applies one key=value pair; throws ConfigError on unknown keys or bad
/// values, quoting the line number.
inline void config_set(RunConfig& c, const std::string& key, const std::string& value,
                       std::size_t line = 0) {
    using detail::parse_bool;
    using detail::parse_number;
    using detail::parse_size_list;
    if (key == "seed") c.seed = parse_number<std::uint64_t>(value, key, line);
    else if (key == "backbone.image_size") c.backbone.image_size = parse_number<std::size_t>(value, key, line);
    else if (key == "backbone.patch_size") c.backbone.patch_size = parse_number<std::size_t>(value, key, line);
    else if (key == "backbone.embed_dim") c.backbone.embed_dim = parse_number<std::size_t>(value, key, line);
    else if (key == "backbone.num_heads") c.backbone.num_heads = parse_number<std::size_t>(value, key, line);
    else if (key == "backbone.num_blocks") c.backbone.num_blocks = parse_number<std::size_t>(value, key, line);
    else if (key == "backbone.mlp_ratio") c.backbone.mlp_ratio = parse_number<double>(value, key, line);
    else if (key == "dfgm.dim") c.dfgm_dim = parse_number<std::size_t>(value, key, line);
    else if (key == "dfgm.bias") c.dfgm_bias = parse_bool(value, key, line);
    else if (key == "fuse.depth") c.fuse_depth = parse_number<std::size_t>(value, key, line);
    else if (key == "fuse.num_heads") c.fuse_heads = parse_number<std::size_t>(value, key, line);
    else if (key == "fuse.mlp_ratio") c.fuse_mlp_ratio = parse_number<double>(value, key, line);
    else if (key == "fuse.use_positional") c.fuse_positional = parse_bool(value, key, line);
    else if (key == "ablation") { ablation_from_name(value); c.ablation = value; }
    else if (key == "data.dir") c.data_dir = value;
    else if (key == "data.image_size") c.data_image_size = parse_number<std::size_t>(value, key, line);
    else if (key == "data.train_real") c.train_real = parse_number<std::size_t>(value, key, line);
    else if (key == "data.train_fake") c.train_fake = parse_number<std::size_t>(value, key, line);
    else if (key == "data.val_real") c.val_real = parse_number<std::size_t>(value, key, line);
    else if (key == "data.val_fake") c.val_fake = parse_number<std::size_t>(value, key, line);
    else if (key == "data.test_real") c.test_real = parse_number<std::size_t>(value, key, line);
    else if (key == "data.test_fake") c.test_fake = parse_number<std::size_t>(value, key, line);
    else if (key == "stage1.lr") c.stage1.lr = parse_number<double>(value, key, line);
    else if (key == "stage1.epochs") c.stage1.epochs = parse_number<int>(value, key, line);
    else if (key == "stage1.batch_size") c.stage1.batch_size = parse_number<int>(value, key, line);
    else if (key == "stage2.lr") c.stage2.lr = parse_number<double>(value, key, line);
    else if (key == "stage2.epochs") c.stage2.epochs = parse_number<int>(value, key, line);
    else if (key == "stage2.batch_size") c.stage2.batch_size = parse_number<int>(value, key, line);
    else if (key == "perturb.blur_sigma") c.perturbation.blur_sigma = parse_number<double>(value, key, line);
    else if (key == "perturb.crop_fraction") c.perturbation.crop_fraction = parse_number<double>(value, key, line);
    else if (key == "perturb.jpeg_quality") c.perturbation.jpeg_quality = parse_number<int>(value, key, line);
    else if (key == "perturb.noise_sigma") c.perturbation.noise_sigma = parse_number<double>(value, key, line);
    else if (key == "perturb.apply_probability") c.perturbation.apply_probability = parse_number<double>(value, key, line);
    else if (key == "eval.threads") c.eval_threads = parse_number<unsigned>(value, key, line);
    else if (key == "sweep.bottleneck_dims") c.sweep_dims = parse_size_list(value, key, line);
    else if (key == "sweep.fuse_layers") c.sweep_layers = parse_size_list(value, key, line);
    else throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
}

inline RunConfig parse_config_text(std::istream& is, RunConfig base = {}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        config_set(base, key, value, lineno);
    }
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    return parse_config_text(is, std::move(base));
}

/// Canonical serialization: every key in schema order.
inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os << "seed = " << c.seed << "\n";
    os << "backbone.image_size = " << c.backbone.image_size << "\n";
    os << "backbone.patch_size = " << c.backbone.patch_size << "\n";
    os << "backbone.embed_dim = " << c.backbone.embed_dim << "\n";
    os << "backbone.num_heads = " << c.backbone.num_heads << "\n";
    os << "backbone.num_blocks = " << c.backbone.num_blocks << "\n";
    os << "backbone.mlp_ratio = " << c.backbone.mlp_ratio << "\n";
    os << "dfgm.dim = " << c.bottleneck() << "\n";
    os << "dfgm.bias = " << (c.dfgm_bias ? "true" : "false") << "\n";
    os << "fuse.depth = " << c.fuse_depth << "\n";
    os << "fuse.num_heads = " << (c.fuse_heads ? c.fuse_heads : c.backbone.num_heads) << "\n";
    os << "fuse.mlp_ratio = " << c.fuse_mlp_ratio << "\n";
    os << "fuse.use_positional = " << (c.fuse_positional ? "true" : "false") << "\n";
    os << "ablation = " << c.ablation << "\n";
    os << "data.dir = " << c.data_dir << "\n";
    os << "data.image_size = " << c.data_image_size << "\n";
    os << "data.train_real = " << c.train_real << "\n";
    os << "data.train_fake = " << c.train_fake << "\n";
    os << "data.val_real = " << c.val_real << "\n";
    os << "data.val_fake = " << c.val_fake << "\n";
    os << "data.test_real = " << c.test_real << "\n";
    os << "data.test_fake = " << c.test_fake << "\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    os << "stage1.lr = " << num(c.stage1.lr) << "\n";
    os << "stage1.epochs = " << c.stage1.epochs << "\n";
    os << "stage1.batch_size = " << c.stage1.batch_size << "\n";
    os << "stage2.lr = " << num(c.stage2.lr) << "\n";
    os << "stage2.epochs = " << c.stage2.epochs << "\n";
    os << "stage2.batch_size = " << c.stage2.batch_size << "\n";
    os << "perturb.blur_sigma = " << num(c.perturbation.blur_sigma) << "\n";
    os << "perturb.crop_fraction = " << num(c.perturbation.crop_fraction) << "\n";
    os << "perturb.jpeg_quality = " << c.perturbation.jpeg_quality << "\n";
    os << "perturb.noise_sigma = " << num(c.perturbation.noise_sigma) << "\n";
    os << "perturb.apply_probability = " << num(c.perturbation.apply_probability) << "\n";
    os << "eval.threads = " << c.eval_threads << "\n";
    os << "sweep.bottleneck_dims = " << detail::join_size_list(c.sweep_dims) << "\n";
    os << "sweep.fuse_layers = " << detail::join_size_list(c.sweep_layers) << "\n";
    return os.str();
}

/// Echoes the resolved config next to a run's outputs.
inline void write_run_lock(const RunConfig& c, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / "run.lock");
    if (!os) throw DataError("cannot write run.lock in " + out_dir);
    os << serialize_config(c);
}

}  // namespace gff
