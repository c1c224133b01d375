// Patch embedding, block composition, adapter identity, stage collection.

#include <gtest/gtest.h>

#include <cmath>

#include "gff/backbone.hpp"
#include "gff/rng.hpp"

using gff::Tensor;

namespace {

Tensor<double> random_image(std::size_t size, std::uint64_t seed) {
    gff::Rng rng(seed);
    auto t = Tensor<double>::zeros({size, size, 3});
    for (auto& v : t.data_mut()) v = rng.uniform();
    return t;
}

gff::BackboneConfig toy_config(std::size_t image = 32, std::size_t patch = 8,
                               std::size_t dim = 16, std::size_t heads = 2,
                               std::size_t blocks = 2) {
    gff::BackboneConfig c;
    c.image_size = image;
    c.patch_size = patch;
    c.embed_dim = dim;
    c.num_heads = heads;
    c.num_blocks = blocks;
    return c;
}

}  // namespace

TEST(BackboneConfig, PatchCountFormula) {
    auto full = toy_config(224, 14, 32, 2, 2);
    EXPECT_EQ(full.patch_count(), 256u);
    EXPECT_EQ(full.seq_len(), 257u);
    auto toy = toy_config(32, 8);
    EXPECT_EQ(toy.patch_count(), 16u);
    EXPECT_EQ(toy.seq_len(), 17u);
}

TEST(PatchEmbed, ZeroImageZeroWeightsLeavesPositional) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(1);
    gff::Backbone<double> backbone(registry, toy_config(), rng);
    auto& pw = registry.tensor("backbone.patch_embed.weight");
    std::fill(pw.data_mut().begin(), pw.data_mut().end(), 0.0);
    auto img = Tensor<double>::zeros({32, 32, 3});
    auto e = backbone.patch_embed(img);
    const auto& pos = registry.tensor("backbone.pos_embed");
    const auto& cls = registry.tensor("backbone.cls_token");
    const std::size_t dim = 16;
    for (std::size_t c = 0; c < dim; ++c)
        EXPECT_DOUBLE_EQ(e.at(c), cls.at(c) + pos.at(c));
    for (std::size_t r = 1; r < e.dim(0); ++r)
        for (std::size_t c = 0; c < dim; ++c)
            EXPECT_DOUBLE_EQ(e.at(r * dim + c), pos.at(r * dim + c));
}

TEST(PatchEmbed, RejectsWrongImageSize) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(2);
    gff::Backbone<double> backbone(registry, toy_config(), rng);
    EXPECT_THROW(backbone.patch_embed(Tensor<double>::zeros({16, 16, 3})), gff::DimError);
}

TEST(Block, ZeroWeightsReduceToIdentity) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(3);
    gff::Block<double> block(registry, "b", 8, 2, 16, false, rng);
    // zero every parameter, including the layernorm gammas
    for (auto& e : registry.entries())
        std::fill(e.tensor.data_mut().begin(), e.tensor.data_mut().end(), 0.0);
    gff::Rng img_rng(4);
    auto x = Tensor<double>::zeros({5, 8});
    for (auto& v : x.data_mut()) v = img_rng.normal();
    auto y = block.forward(x, false);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i));
}

TEST(Block, SingleHeadBruteForceOracle) {
    // one head, two tokens, width 2: recompute attention scalar by scalar
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(5);
    gff::Attention<double> attn(registry, "attn", 2, 1, false, rng);
    auto x = Tensor<double>::from({2, 2}, {0.3, -0.7, 1.1, 0.4});
    auto y = attn.forward(x);

    auto get = [&](const char* n, std::size_t i) { return registry.tensor(n).at(i); };
    double q[2][2], k[2][2], v[2][2];
    for (int t = 0; t < 2; ++t)
        for (int j = 0; j < 2; ++j) {
            q[t][j] = get("attn.bq", j);
            k[t][j] = get("attn.bk", j);
            v[t][j] = get("attn.bv", j);
            for (int i = 0; i < 2; ++i) {
                q[t][j] += x.at(t * 2 + i) * get("attn.wq", i * 2 + j);
                k[t][j] += x.at(t * 2 + i) * get("attn.wk", i * 2 + j);
                v[t][j] += x.at(t * 2 + i) * get("attn.wv", i * 2 + j);
            }
        }
    const double scale = 1.0 / std::sqrt(2.0);
    for (int t = 0; t < 2; ++t) {
        double s0 = scale * (q[t][0] * k[0][0] + q[t][1] * k[0][1]);
        double s1 = scale * (q[t][0] * k[1][0] + q[t][1] * k[1][1]);
        const double mx = std::max(s0, s1);
        const double e0 = std::exp(s0 - mx), e1 = std::exp(s1 - mx);
        const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
        double head[2];
        for (int j = 0; j < 2; ++j) head[j] = a0 * v[0][j] + a1 * v[1][j];
        for (int j = 0; j < 2; ++j) {
            double expect = get("attn.bo", j);
            for (int i = 0; i < 2; ++i) expect += head[i] * get("attn.wo", i * 2 + j);
            EXPECT_NEAR(y.at(t * 2 + j), expect, 1e-12);
        }
    }
}

TEST(Block, OutputShapeMatchesInput) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(6);
    gff::Block<double> block(registry, "b", 12, 3, 24, false, rng);
    auto x = Tensor<double>::zeros({7, 12});
    for (auto& v : x.data_mut()) v = rng.normal();
    auto y = block.forward(x, false);
    EXPECT_EQ(y.shape(), x.shape());
}

TEST(GvitBlock, ZeroUpProjectionEqualsPlainBlock) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(7);
    gff::Block<double> block(registry, "b", 8, 2, 16, true, rng);
    gff::Rng arng(8);
    block.attach_adapter(gff::Dfgm<double>(registry, "b.dfgm", 8, 4, true, arng));
    auto x = Tensor<double>::zeros({5, 8});
    for (auto& v : x.data_mut()) v = rng.normal();
    auto plain = block.forward(x, false);
    auto guided = block.forward(x, true);  // w_up is zero-initialized
    for (std::size_t i = 0; i < plain.numel(); ++i) EXPECT_EQ(guided.at(i), plain.at(i));
}

TEST(GvitBlock, DisabledAdapterFlagBypassesExactly) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(9);
    gff::Block<double> block(registry, "b", 8, 2, 16, true, rng);
    gff::Rng arng(10);
    block.attach_adapter(gff::Dfgm<double>(registry, "b.dfgm", 8, 4, true, arng));
    // make the adapter genuinely non-zero
    for (auto& v : block.adapter().w_up().data_mut()) v = 0.3;
    auto x = Tensor<double>::zeros({5, 8});
    for (auto& v : x.data_mut()) v = rng.normal();
    auto off = block.forward(x, false);
    auto on = block.forward(x, true);
    double diff = 0;
    for (std::size_t i = 0; i < off.numel(); ++i) diff += std::abs(on.at(i) - off.at(i));
    EXPECT_GT(diff, 1e-3);  // adapter actually does something when enabled
    // and the ablation path is bit-equal to a block that never had one
    gff::ParameterRegistry<double> registry2;
    gff::Rng rng2(9);
    gff::Block<double> block2(registry2, "b", 8, 2, 16, true, rng2);
    auto off2 = block2.forward(x, false);
    for (std::size_t i = 0; i < off.numel(); ++i) EXPECT_EQ(off.at(i), off2.at(i));
}

TEST(GvitBlock, MatchesComposedPieces) {
    // D=8, bottleneck 2: the guided block must equal the manual composition
    // of its attention, adapter, and MLP sublayers
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(11);
    gff::Block<double> block(registry, "b", 8, 2, 16, false, rng);
    gff::Rng arng(12);
    block.attach_adapter(gff::Dfgm<double>(registry, "b.dfgm", 8, 2, true, arng));
    gff::Rng wrng(13);
    for (auto& v : block.adapter().w_up().data_mut()) v = wrng.normal() * 0.1;

    gff::Rng xrng(14);
    auto x = Tensor<double>::zeros({4, 8});
    for (auto& v : x.data_mut()) v = xrng.normal();

    gff::Attention<double> attn_view;  // rebuild the pieces on the same tensors
    {
        // recompute via ops using the registered tensors directly
        const double eps = gff::kLayerNormEps;
        auto ln1 = gff::layernorm(x, registry.tensor("b.ln1.gamma"),
                                  registry.tensor("b.ln1.beta"), eps);
        // attention piece reproduced through a second Block with adapters off:
        // z = attn(ln1) + x comes from running the block without the adapter
        // and undoing nothing; easier: use the block's own plain forward on a
        // zero-MLP clone. Instead verify composition with the adapter math:
        auto z_expected = gff::add(block.forward(x, false), Tensor<double>::zeros({4, 8}));
        (void)z_expected;
        // z' = z + dfgm(z); y = mlp(ln2(z')) + z'
        // Reconstruct z from the plain path: plain = mlp(ln2(z)) + z is not
        // invertible, so instead recompute z directly:
        auto q = gff::add_rowvec(gff::matmul(ln1, registry.tensor("b.attn.wq")),
                                 registry.tensor("b.attn.bq"));
        auto k = gff::add_rowvec(gff::matmul(ln1, registry.tensor("b.attn.wk")),
                                 registry.tensor("b.attn.bk"));
        auto v = gff::add_rowvec(gff::matmul(ln1, registry.tensor("b.attn.wv")),
                                 registry.tensor("b.attn.bv"));
        std::vector<Tensor<double>> heads;
        for (std::size_t h = 0; h < 2; ++h) {
            auto qh = gff::slice_cols(q, h * 4, h * 4 + 4);
            auto kh = gff::slice_cols(k, h * 4, h * 4 + 4);
            auto vh = gff::slice_cols(v, h * 4, h * 4 + 4);
            auto s = gff::affine(gff::matmul(qh, gff::transpose2d(kh)), 0.5, 0.0);
            heads.push_back(gff::matmul(gff::softmax(s), vh));
        }
        auto attn_out = gff::add_rowvec(
            gff::matmul(gff::concat_cols(heads), registry.tensor("b.attn.wo")),
            registry.tensor("b.attn.bo"));
        auto z = gff::add(attn_out, x);
        auto zp = gff::add(block.adapter().forward(z), z);
        auto ln2 = gff::layernorm(zp, registry.tensor("b.ln2.gamma"),
                                  registry.tensor("b.ln2.beta"), eps);
        auto mlp = gff::add_rowvec(
            gff::matmul(gff::gelu(gff::add_rowvec(gff::matmul(ln2, registry.tensor("b.mlp.fc1.w")),
                                                  registry.tensor("b.mlp.fc1.b"))),
                        registry.tensor("b.mlp.fc2.w")),
            registry.tensor("b.mlp.fc2.b"));
        auto expect = gff::add(mlp, zp);
        auto got = block.forward(x, true);
        for (std::size_t i = 0; i < expect.numel(); ++i)
            EXPECT_NEAR(got.at(i), expect.at(i), 1e-12);
    }
}

TEST(Backbone, CollectsOneClsPerBlock) {
    {
        gff::ParameterRegistry<double> registry;
        gff::Rng rng(15);
        gff::Backbone<double> backbone(registry, toy_config(32, 8, 16, 2, 2), rng);
        auto st = backbone.forward(random_image(32, 1), false);
        EXPECT_EQ(st.cls.size(), 2u);
        EXPECT_EQ(st.patches.shape(), (gff::Shape{16, 16}));
    }
    {
        // 24 blocks mirror the full-size encoder depth
        gff::ParameterRegistry<double> registry;
        gff::Rng rng(16);
        gff::Backbone<double> backbone(registry, toy_config(16, 8, 8, 2, 24), rng);
        auto st = backbone.forward(random_image(16, 2), false);
        EXPECT_EQ(st.cls.size(), 24u);
    }
}

TEST(Backbone, DeterministicForward) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(17);
    gff::Backbone<double> backbone(registry, toy_config(), rng);
    auto img = random_image(32, 3);
    auto a = backbone.forward(img, false);
    auto b = backbone.forward(img, false);
    for (std::size_t i = 0; i < a.cls.size(); ++i)
        for (std::size_t c = 0; c < a.cls[i].numel(); ++c)
            EXPECT_EQ(a.cls[i].at(c), b.cls[i].at(c));
}

TEST(Backbone, FinalClsIsLayerNormalized) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(18);
    auto cfg = toy_config(32, 8, 16, 2, 2);
    gff::Backbone<double> backbone(registry, cfg, rng);
    auto st = backbone.forward(random_image(32, 4), false);
    // with gamma=1, beta=0 the final CLS must have zero mean and variance
    // var/(var+eps); activations at init are small, so allow the eps bite
    const auto& last = st.cls.back();
    double mean = 0;
    for (std::size_t c = 0; c < last.numel(); ++c) mean += last.at(c);
    mean /= static_cast<double>(last.numel());
    double var = 0;
    for (std::size_t c = 0; c < last.numel(); ++c)
        var += (last.at(c) - mean) * (last.at(c) - mean);
    var /= static_cast<double>(last.numel());
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_GT(var, 0.9);
    EXPECT_LE(var, 1.0 + 1e-9);
}

TEST(Backbone, CountTrainableIsAdaptersOnly) {
    gff::ParameterRegistry<double> registry;
    gff::Rng rng(19);
    gff::Backbone<double> backbone(registry, toy_config(32, 8, 16, 2, 3), rng);
    EXPECT_EQ(gff::count_trainable(registry), 0u);
    gff::Rng arng(20);
    backbone.attach_adapters(registry, 4, false, arng);
    EXPECT_EQ(gff::count_trainable(registry), 3 * gff::dfgm_param_count(16, 4, false));
    // all-frozen check with per-block filter
    EXPECT_EQ(gff::count_trainable(registry,
                                   [](const std::string& n) {
                                       return n.rfind("backbone.block1.dfgm", 0) == 0;
                                   }),
              gff::dfgm_param_count(16, 4, false));
}
