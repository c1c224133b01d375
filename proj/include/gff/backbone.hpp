#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gff/guidance.hpp"
#include "gff/ops.hpp"
#include "gff/registry.hpp"
#include "gff/rng.hpp"

namespace gff {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

struct BackboneConfig {
    std::size_t image_size = 64;  // H = W
    std::size_t patch_size = 8;
    std::size_t embed_dim = 64;
    std::size_t num_heads = 4;
    std::size_t num_blocks = 4;
    double mlp_ratio = 4.0;

    std::size_t patch_count() const {
        return (image_size / patch_size) * (image_size / patch_size);
    }
    std::size_t seq_len() const { return patch_count() + 1; }
    std::size_t mlp_hidden() const {
        return static_cast<std::size_t>(embed_dim * mlp_ratio + 0.5);
    }

    void validate() const {
        if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0)
            throw ContractError("backbone: image size must be a multiple of patch size");
        if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0)
            throw ContractError("backbone: embed dim must be a multiple of head count");
        if (num_blocks == 0) throw ContractError("backbone: needs at least one block");
        if (!(mlp_ratio > 0)) throw ContractError("backbone: mlp ratio must be positive");
    }
};

/// Per-stage CLS vectors plus the final-stage patch tokens. `cls[i]` is the
/// position-0 token of block i's output; the last entry is additionally
/// passed through the final layernorm before leaving the backbone.
template <typename S>
struct StageTokens {
    std::vector<Tensor<S>> cls;  // one D-vector per block
    Tensor<S> patches;           // N x D, final block output rows 1..N
    Tensor<S> last_block_input;  // (N+1) x D, for gradient-based heatmaps
};

namespace detail {

template <typename S>
Tensor<S> init_tn(Shape shape, Rng& rng, double stddev = kInitStd) {
    Tensor<S> t = Tensor<S>::zeros(std::move(shape));
    for (auto& v : t.data_mut()) v = static_cast<S>(rng.truncated_normal(stddev));
    return t;
}

// Projection matrices use fan-in scaling. The backbone stands in for a
// pre-trained encoder, so its weights must be at trained-network scale:
// with tiny weights the attention is uniform and the value path attenuates
// by ~3e-2 per block, which cuts the image off from the CLS token entirely.
inline double fan_in_std(std::size_t fan_in) {
    return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

}  // namespace detail

/// Multi-head self-attention over a T x D sequence. Weight tensors share
/// storage with the registry.
template <typename S>
class Attention {
public:
    Attention() = default;

    Attention(ParameterRegistry<S>& registry, const std::string& prefix, std::size_t dim,
              std::size_t heads, bool frozen, Rng& rng) {
        dim_ = dim;
        heads_ = heads;
        const double std = detail::fan_in_std(dim);
        wq_ = registry.add(prefix + ".wq", detail::init_tn<S>({dim, dim}, rng, std), frozen);
        bq_ = registry.add(prefix + ".bq", Tensor<S>::zeros({dim}), frozen);
        wk_ = registry.add(prefix + ".wk", detail::init_tn<S>({dim, dim}, rng, std), frozen);
        bk_ = registry.add(prefix + ".bk", Tensor<S>::zeros({dim}), frozen);
        wv_ = registry.add(prefix + ".wv", detail::init_tn<S>({dim, dim}, rng, std), frozen);
        bv_ = registry.add(prefix + ".bv", Tensor<S>::zeros({dim}), frozen);
        wo_ = registry.add(prefix + ".wo", detail::init_tn<S>({dim, dim}, rng, std), frozen);
        bo_ = registry.add(prefix + ".bo", Tensor<S>::zeros({dim}), frozen);
    }

    Tensor<S> forward(const Tensor<S>& x) const {
        if (x.ndim() != 2 || x.dim(1) != dim_)
            throw DimError("attention: input " + shape_str(x.shape()));
        const std::size_t head_dim = dim_ / heads_;
        const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(head_dim)));
        Tensor<S> q = add_rowvec(matmul(x, wq_), bq_);
        Tensor<S> k = add_rowvec(matmul(x, wk_), bk_);
        Tensor<S> v = add_rowvec(matmul(x, wv_), bv_);
        std::vector<Tensor<S>> head_outs;
        head_outs.reserve(heads_);
        for (std::size_t h = 0; h < heads_; ++h) {
            const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
            Tensor<S> qh = slice_cols(q, c0, c1);
            Tensor<S> kh = slice_cols(k, c0, c1);
            Tensor<S> vh = slice_cols(v, c0, c1);
            Tensor<S> scores = affine(matmul(qh, transpose2d(kh)), scale, S(0));
            head_outs.push_back(matmul(softmax(scores), vh));
        }
        return add_rowvec(matmul(concat_cols(head_outs), wo_), bo_);
    }

private:
    std::size_t dim_ = 0, heads_ = 1;
    Tensor<S> wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

/// One transformer block in pre-norm residual form, optionally hosting an
/// adapter between the attention and MLP sublayers:
///   z  = MHSA(LN(x)) + x
///   z' = DFGM(z) + z        (adapter present and enabled)
///   y  = MLP(LN(z')) + z'
template <typename S>
class Block {
public:
    Block() = default;

    Block(ParameterRegistry<S>& registry, const std::string& prefix, std::size_t dim,
          std::size_t heads, std::size_t mlp_hidden, bool frozen, Rng& rng)
        : attn_(registry, prefix + ".attn", dim, heads, frozen, rng) {
        ln1_g_ = registry.add(prefix + ".ln1.gamma", Tensor<S>::full({dim}, S(1)), frozen);
        ln1_b_ = registry.add(prefix + ".ln1.beta", Tensor<S>::zeros({dim}), frozen);
        ln2_g_ = registry.add(prefix + ".ln2.gamma", Tensor<S>::full({dim}, S(1)), frozen);
        ln2_b_ = registry.add(prefix + ".ln2.beta", Tensor<S>::zeros({dim}), frozen);
        fc1_w_ = registry.add(prefix + ".mlp.fc1.w",
                              detail::init_tn<S>({dim, mlp_hidden}, rng,
                                                 detail::fan_in_std(dim)),
                              frozen);
        fc1_b_ = registry.add(prefix + ".mlp.fc1.b", Tensor<S>::zeros({mlp_hidden}), frozen);
        fc2_w_ = registry.add(prefix + ".mlp.fc2.w",
                              detail::init_tn<S>({mlp_hidden, dim}, rng,
                                                 detail::fan_in_std(mlp_hidden)),
                              frozen);
        fc2_b_ = registry.add(prefix + ".mlp.fc2.b", Tensor<S>::zeros({dim}), frozen);
    }

    void attach_adapter(Dfgm<S> adapter) { adapter_ = std::move(adapter); }
    bool has_adapter() const { return adapter_.has_value(); }
    Dfgm<S>& adapter() { return *adapter_; }

    /// `use_adapter` off reduces the block to its plain form.
    Tensor<S> forward(const Tensor<S>& x, bool use_adapter) const {
        const S eps = static_cast<S>(kLayerNormEps);
        Tensor<S> z = add(attn_.forward(layernorm(x, ln1_g_, ln1_b_, eps)), x);
        if (use_adapter && adapter_) z = add(adapter_->forward(z), z);
        Tensor<S> h = layernorm(z, ln2_g_, ln2_b_, eps);
        h = gelu(add_rowvec(matmul(h, fc1_w_), fc1_b_));
        h = add_rowvec(matmul(h, fc2_w_), fc2_b_);
        return add(h, z);
    }

private:
    Attention<S> attn_;
    Tensor<S> ln1_g_, ln1_b_, ln2_g_, ln2_b_;
    Tensor<S> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
    std::optional<Dfgm<S>> adapter_;
};

/// Frozen ViT backbone with per-block adapter slots. Patch embedding,
/// positional embeddings and all block weights are registered frozen; only
/// the adapters (when attached) are trainable.
template <typename S>
class Backbone {
public:
    Backbone() = default;

    Backbone(ParameterRegistry<S>& registry, const BackboneConfig& config, Rng& rng)
        : config_(config) {
        config.validate();
        const std::size_t dim = config.embed_dim;
        const std::size_t patch_len = config.patch_size * config.patch_size * 3;
        patch_w_ = registry.add("backbone.patch_embed.weight",
                                detail::init_tn<S>({patch_len, dim}, rng,
                                                   detail::fan_in_std(patch_len)),
                                true);
        patch_b_ = registry.add("backbone.patch_embed.bias", Tensor<S>::zeros({dim}), true);
        cls_ = registry.add("backbone.cls_token", detail::init_tn<S>({dim}, rng), true);
        pos_ = registry.add("backbone.pos_embed",
                            detail::init_tn<S>({config.seq_len(), dim}, rng), true);
        blocks_.reserve(config.num_blocks);
        for (std::size_t i = 0; i < config.num_blocks; ++i)
            blocks_.emplace_back(registry, "backbone.block" + std::to_string(i), dim,
                                 config.num_heads, config.mlp_hidden(), true, rng);
        lnf_g_ = registry.add("backbone.ln_final.gamma", Tensor<S>::full({dim}, S(1)), true);
        lnf_b_ = registry.add("backbone.ln_final.beta", Tensor<S>::zeros({dim}), true);
    }

    void attach_adapters(ParameterRegistry<S>& registry, std::size_t bottleneck,
                         bool with_biases, Rng& rng) {
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].attach_adapter(Dfgm<S>(registry,
                                              "backbone.block" + std::to_string(i) + ".dfgm",
                                              config_.embed_dim, bottleneck, with_biases, rng));
    }

    /// Patch projection, CLS prepend, positional add: (N+1) x D embeddings.
    Tensor<S> patch_embed(const Tensor<S>& img) const {
        if (img.ndim() != 3 || img.dim(0) != config_.image_size ||
            img.dim(1) != config_.image_size || img.dim(2) != 3)
            throw DimError("patch_embed: image " + shape_str(img.shape()) + " vs config " +
                           std::to_string(config_.image_size));
        Tensor<S> patches = im2patches(img, config_.patch_size);
        Tensor<S> embedded = add_rowvec(matmul(patches, patch_w_), patch_b_);
        std::vector<Tensor<S>> rows;
        rows.reserve(config_.seq_len());
        rows.push_back(cls_);
        for (std::size_t n = 0; n < config_.patch_count(); ++n) rows.push_back(row(embedded, n));
        return add(stack_rows(rows), pos_);
    }

    /// Runs the full stack and collects the CLS token after every block.
    /// The final CLS is layer-normalized before leaving the backbone;
    /// intermediate ones are raw block outputs.
    StageTokens<S> forward(const Tensor<S>& img, bool use_adapters,
                           bool trace_last_input = false) const {
        StageTokens<S> out;
        Tensor<S> x = patch_embed(img);
        const std::size_t last = blocks_.size() - 1;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            if (i == last && trace_last_input) {
                x.set_requires_grad(true);
                out.last_block_input = x;
            }
            x = blocks_[i].forward(x, use_adapters);
            if (i == last) {
                const S eps = static_cast<S>(kLayerNormEps);
                out.cls.push_back(layernorm(row(x, 0), lnf_g_, lnf_b_, eps));
            } else {
                out.cls.push_back(row(x, 0));
            }
        }
        out.patches = slice_rows(x, 1, config_.seq_len());
        return out;
    }

    Tensor<S> plain_block_forward(std::size_t i, const Tensor<S>& x) const {
        return blocks_.at(i).forward(x, false);
    }

    const BackboneConfig& config() const { return config_; }
    std::size_t depth() const { return blocks_.size(); }
    std::vector<Block<S>>& blocks() { return blocks_; }

private:
    BackboneConfig config_;
    Tensor<S> patch_w_, patch_b_, cls_, pos_;
    std::vector<Block<S>> blocks_;
    Tensor<S> lnf_g_, lnf_b_;
};

}  // namespace gff
