#pragma once

#include <string>
#include <vector>

#include "gff/backbone.hpp"
#include "gff/ops.hpp"
#include "gff/registry.hpp"
#include "gff/rng.hpp"

namespace gff {

struct FuseFormerConfig {
    std::size_t depth = 2;
    std::size_t embed_dim = 64;  // must equal the backbone width
    std::size_t num_heads = 4;
    std::size_t num_stages = 4;  // backbone block count L
    double mlp_ratio = 4.0;
    bool use_positional = false;

    std::size_t seq_len() const { return num_stages + 1; }
    std::size_t mlp_hidden() const {
        return static_cast<std::size_t>(embed_dim * mlp_ratio + 0.5);
    }

    void validate() const {
        if (depth == 0) throw ContractError("fuseformer: depth must be >= 1");
        if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
            throw ContractError("fuseformer: embed dim must be a multiple of head count");
        if (num_stages == 0) throw ContractError("fuseformer: needs at least one stage token");
    }
};

/// Concatenates the learnable Fuse CLS token (position 0) with the per-stage
/// CLS tokens, in block order. The stage tokens already live in the
/// transformer's embedding space, so no re-embedding happens here.
template <typename S>
Tensor<S> assemble_sequence(const StageTokens<S>& stages, const Tensor<S>& fuse_cls) {
    if (fuse_cls.ndim() != 1) throw DimError("assemble_sequence: fuse cls must be a vector");
    std::vector<Tensor<S>> rows;
    rows.reserve(stages.cls.size() + 1);
    rows.push_back(fuse_cls);
    for (const auto& c : stages.cls) {
        if (c.numel() != fuse_cls.numel())
            throw DimError("assemble_sequence: stage token " + shape_str(c.shape()) +
                           " vs fuse cls " + shape_str(fuse_cls.shape()));
        rows.push_back(c);
    }
    return stack_rows(rows);
}

/// Multi-stage fusion transformer. Consumes the (L+1) x D assembled sequence
/// and returns the position-0 token after `depth` standard pre-norm blocks.
template <typename S>
class FuseFormer {
public:
    FuseFormer() = default;

    FuseFormer(ParameterRegistry<S>& registry, const FuseFormerConfig& config, Rng& rng)
        : config_(config) {
        config.validate();
        fuse_cls_ = registry.add("fuse.cls_token",
                                 detail::init_tn<S>({config.embed_dim}, rng), false);
        if (config.use_positional)
            pos_ = registry.add("fuse.pos_embed",
                                detail::init_tn<S>({config.seq_len(), config.embed_dim}, rng),
                                false);
        blocks_.reserve(config.depth);
        for (std::size_t i = 0; i < config.depth; ++i)
            blocks_.emplace_back(registry, "fuse.block" + std::to_string(i), config.embed_dim,
                                 config.num_heads, config.mlp_hidden(), false, rng);
    }

    Tensor<S> fuse_cls() const { return fuse_cls_; }

    /// Fused representation of an assembled (L+1) x D sequence.
    Tensor<S> forward(const Tensor<S>& c0) const {
        if (c0.ndim() != 2 || c0.dim(0) != config_.seq_len() ||
            c0.dim(1) != config_.embed_dim)
            throw DimError("fuseformer: sequence " + shape_str(c0.shape()) + ", expected [" +
                           std::to_string(config_.seq_len()) + "x" +
                           std::to_string(config_.embed_dim) + "]");
        Tensor<S> x = config_.use_positional ? add(c0, pos_) : c0;
        for (const auto& b : blocks_) x = b.forward(x, false);
        return row(x, 0);
    }

    Tensor<S> forward_stages(const StageTokens<S>& stages) const {
        return forward(assemble_sequence(stages, fuse_cls_));
    }

    const FuseFormerConfig& config() const { return config_; }

private:
    FuseFormerConfig config_;
    Tensor<S> fuse_cls_, pos_;
    std::vector<Block<S>> blocks_;
};

/// Binary head: sigmoid(w . feature + b).
template <typename S>
class ClassifierHead {
public:
    ClassifierHead() = default;

    ClassifierHead(ParameterRegistry<S>& registry, std::size_t dim, Rng& rng) {
        w_ = registry.add("head.weight", detail::init_tn<S>({dim}, rng), false);
        b_ = registry.add("head.bias", Tensor<S>::zeros({1}), false);
    }

    /// Pre-sigmoid logit as a scalar tensor.
    Tensor<S> logit(const Tensor<S>& feature) const {
        if (feature.shape() != w_.shape())
            throw DimError("classifier: feature " + shape_str(feature.shape()) + " vs weight " +
                           shape_str(w_.shape()));
        return add(sum_all(mul(w_, feature)), b_);
    }

    Tensor<S> score(const Tensor<S>& feature) const { return sigmoid(logit(feature)); }

    Tensor<S>& weight() { return w_; }
    Tensor<S>& bias() { return b_; }

private:
    Tensor<S> w_, b_;
};

}  // namespace gff
