#pragma once

#include <string>

#include "gff/backbone.hpp"
#include "gff/fusion.hpp"
#include "gff/registry.hpp"
#include "gff/weights_io.hpp"

namespace gff {

/// Which modules take part in the pipeline (the Table-3 style switches).
enum class AblationMode { kFull, kNoDfgm, kNoFuse, kNone };

inline std::string ablation_name(AblationMode m) {
    switch (m) {
        case AblationMode::kFull: return "full";
        case AblationMode::kNoDfgm: return "no-dfgm";
        case AblationMode::kNoFuse: return "no-fuse";
        case AblationMode::kNone: return "none";
    }
    return "?";
}

inline AblationMode ablation_from_name(const std::string& s) {
    if (s == "full") return AblationMode::kFull;
    if (s == "no-dfgm") return AblationMode::kNoDfgm;
    if (s == "no-fuse") return AblationMode::kNoFuse;
    if (s == "none") return AblationMode::kNone;
    throw ConfigError("unknown ablation mode: " + s + " (want full|no-dfgm|no-fuse|none)");
}

struct ModelConfig {
    BackboneConfig backbone;
    std::size_t bottleneck = 16;  // adapter middle width
    bool dfgm_bias = true;
    std::size_t fuse_depth = 2;
    std::size_t fuse_heads = 4;
    double fuse_mlp_ratio = 4.0;
    bool fuse_positional = false;
    AblationMode mode = AblationMode::kFull;
};

/// Frozen backbone + adapters + fusion head wired per the ablation mode.
/// Component weights draw from independent seed streams, so the frozen
/// backbone is identical across modes for a given seed.
template <typename S>
class GffModel {
public:
    GffModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
        Rng backbone_rng(mix_seed(seed, 1));
        backbone_ = Backbone<S>(registry_, config.backbone, backbone_rng);
        if (has_adapters()) {
            Rng adapter_rng(mix_seed(seed, 2));
            backbone_.attach_adapters(registry_, config.bottleneck, config.dfgm_bias,
                                      adapter_rng);
        }
        if (has_fusion()) {
            FuseFormerConfig fc;
            fc.depth = config.fuse_depth;
            fc.embed_dim = config.backbone.embed_dim;
            fc.num_heads = config.fuse_heads;
            fc.num_stages = config.backbone.num_blocks;
            fc.mlp_ratio = config.fuse_mlp_ratio;
            fc.use_positional = config.fuse_positional;
            Rng fuse_rng(mix_seed(seed, 3));
            fuse_ = FuseFormer<S>(registry_, fc, fuse_rng);
        }
        Rng head_rng(mix_seed(seed, 4));
        head_ = ClassifierHead<S>(registry_, config.backbone.embed_dim, head_rng);
    }

    bool has_adapters() const {
        return config_.mode == AblationMode::kFull || config_.mode == AblationMode::kNoFuse;
    }
    bool has_fusion() const {
        return config_.mode == AblationMode::kFull || config_.mode == AblationMode::kNoDfgm;
    }

    /// Backbone pass under the mode's adapter setting.
    StageTokens<S> encode(const Tensor<S>& img, bool trace_last_input = false) const {
        return backbone_.forward(img, has_adapters(), trace_last_input);
    }

    /// The feature the classifier consumes: fused token when FuseFormer is
    /// in the pipeline, otherwise the (normalized) final-stage CLS.
    Tensor<S> feature(const StageTokens<S>& stages) const {
        return has_fusion() ? fuse_.forward_stages(stages) : stages.cls.back();
    }

    Tensor<S> logit_from(const StageTokens<S>& stages) const {
        return head_.logit(feature(stages));
    }
    Tensor<S> score_from(const StageTokens<S>& stages) const {
        return sigmoid(logit_from(stages));
    }

    /// Stage-one route: the classifier probes the final-stage CLS directly,
    /// with FuseFormer out of the graph.
    Tensor<S> probe_score_from(const StageTokens<S>& stages) const {
        return sigmoid(head_.logit(stages.cls.back()));
    }

    Tensor<S> score(const Tensor<S>& img) const { return score_from(encode(img)); }

    const ModelConfig& config() const { return config_; }
    ParameterRegistry<S>& registry() { return registry_; }
    const ParameterRegistry<S>& registry() const { return registry_; }
    Backbone<S>& backbone() { return backbone_; }
    FuseFormer<S>& fuse() { return fuse_; }
    ClassifierHead<S>& head() { return head_; }

    void save(const std::string& path) const { export_weights(registry_, path); }
    void load(const std::string& path) { load_weights_into(registry_, path); }

private:
    ModelConfig config_;
    ParameterRegistry<S> registry_;
    Backbone<S> backbone_;
    FuseFormer<S> fuse_;
    ClassifierHead<S> head_;
};

}  // namespace gff
