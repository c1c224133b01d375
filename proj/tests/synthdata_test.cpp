// Generators, the resize/crop protocol, perturbations, and PPM I/O.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "gff/perturb.hpp"
#include "gff/synthdata.hpp"

namespace fs = std::filesystem;

namespace {

double mean_abs_laplacian(const gff::Image& img) {
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t y = 1; y + 1 < img.height; ++y)
        for (std::size_t x = 1; x + 1 < img.width; ++x) {
            const double c = img.luminance(y, x);
            const double lap = 4.0 * c - img.luminance(y - 1, x) - img.luminance(y + 1, x) -
                               img.luminance(y, x - 1) - img.luminance(y, x + 1);
            acc += std::abs(lap);
            ++n;
        }
    return acc / static_cast<double>(n);
}

double max_abs_diff(const gff::Image& a, const gff::Image& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.pixels[i]) - b.pixels[i]));
    return m;
}

}  // namespace

TEST(GenReal, DeterministicInRangeNondegenerate) {
    auto a = gff::gen_real(42, 32, 32);
    auto b = gff::gen_real(42, 32, 32);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_EQ(a.label, 0);
    for (float p : a.image.pixels) {
        EXPECT_GE(p, 0.0f);
        EXPECT_LE(p, 1.0f);
    }
    auto c = gff::gen_real(43, 32, 32);
    EXPECT_GT(max_abs_diff(a.image, c.image), 0.0);
}

TEST(GenFake, NearestNeighborBlocksAreConstant) {
    auto fake = gff::gen_fake(7, 32, 32, gff::Family::kFakeA);
    EXPECT_EQ(fake.label, 1);
    for (std::size_t y = 0; y < 32; y += 2)
        for (std::size_t x = 0; x < 32; x += 2) {
            const float v = fake.image.luminance(y, x);
            EXPECT_EQ(fake.image.luminance(y, x + 1), v);
            EXPECT_EQ(fake.image.luminance(y + 1, x), v);
            EXPECT_EQ(fake.image.luminance(y + 1, x + 1), v);
        }
}

TEST(GenFake, FamiliesDifferOnSameSeed) {
    auto a = gff::gen_fake(11, 32, 32, gff::Family::kFakeA);
    auto b = gff::gen_fake(11, 32, 32, gff::Family::kFakeB);
    EXPECT_GT(max_abs_diff(a.image, b.image), 0.0);
    EXPECT_THROW(gff::gen_fake(11, 32, 32, gff::Family::kReal), gff::ContractError);
}

TEST(GenFake, UpsampledImagesHaveLessHighFrequencyEnergy) {
    // numeric oracle: mean |Laplacian| of FAKE_A vs matched real, 100 seeds
    double real_acc = 0, fake_acc = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        real_acc += mean_abs_laplacian(gff::gen_real(seed, 32, 32).image);
        fake_acc += mean_abs_laplacian(gff::gen_fake(seed, 32, 32, gff::Family::kFakeA).image);
    }
    EXPECT_LT(fake_acc, real_acc);
}

TEST(ResizeCrop, CenterOffsetsMatchProtocol) {
    EXPECT_EQ(gff::resize_edge_for_crop(224), 256u);
    EXPECT_EQ(gff::resize_edge_for_crop(64), 73u);
    // center crop offset (S - C) / 2 = 16 for the full-size path
    gff::LabeledImage li;
    li.image = gff::Image::filled(224, 224, 0.0f);
    // mark the pixel that lands at (0,0) after a (16,16)-offset center crop
    // of the 256x256 resize: resized(16,16) pulls from source around
    // (16.5 * 224/256 - 0.5) = 13.9; just verify geometry via sizes instead
    auto out = gff::resize_and_crop(li, 224, false, 0);
    EXPECT_EQ(out.image.height, 224u);
    EXPECT_EQ(out.image.width, 224u);
}

TEST(ResizeCrop, TrainPathReproducibleAndLabelPreserving) {
    auto img = gff::gen_fake(3, 64, 64, gff::Family::kFakeB);
    auto a = gff::resize_and_crop(img, 64, true, 5);
    auto b = gff::resize_and_crop(img, 64, true, 5);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
    EXPECT_EQ(a.label, 1);
    auto c = gff::resize_and_crop(img, 64, true, 6);
    EXPECT_GT(max_abs_diff(a.image, c.image), 0.0);
}

TEST(ResizeCrop, FlipIsAnInvolution) {
    auto img = gff::gen_real(9, 32, 32);
    auto flipped = gff::hflip(img.image);
    auto back = gff::hflip(flipped);
    EXPECT_EQ(back.pixels, img.image.pixels);
    EXPECT_GT(max_abs_diff(flipped, img.image), 0.0);
}

TEST(Perturb, ZeroProbabilityIsIdentity) {
    auto img = gff::gen_real(1, 32, 32);
    gff::PerturbationConfig cfg;
    cfg.apply_probability = 0.0;
    auto out = gff::perturb(img, cfg, 123);
    EXPECT_EQ(out.image.pixels, img.image.pixels);
}

TEST(Perturb, DeterministicUnderSeed) {
    auto img = gff::gen_real(2, 32, 32);
    gff::PerturbationConfig cfg;  // probability 0.5
    auto a = gff::perturb(img, cfg, 77);
    auto b = gff::perturb(img, cfg, 77);
    EXPECT_EQ(a.image.pixels, b.image.pixels);
}

TEST(Perturb, BlurKernelIsNormalized) {
    for (double sigma : {0.5, 1.0, 2.0, 3.7}) {
        const auto k = gff::detail::gaussian_kernel(sigma);
        double sum = 0;
        for (double v : k) sum += v;
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Perturb, BlurPreservesConstantImages) {
    gff::Image flat = gff::Image::filled(16, 16, 0.4f);
    auto blurred = gff::gaussian_blur(flat, 1.0);
    for (float p : blurred.pixels) EXPECT_NEAR(p, 0.4f, 1e-6f);
}

TEST(Perturb, JpegQuality100IsNearlyLossless) {
    // DCT round-trip oracle: quantization steps are all 1 at quality 100
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto img = gff::gen_real(seed, 32, 32);
        auto out = gff::jpeg_approx(img.image, 100);
        EXPECT_LT(max_abs_diff(img.image, out), 0.02);
    }
}

TEST(Perturb, LowerQualityDistortsMore) {
    auto img = gff::gen_real(5, 32, 32);
    const double d90 = max_abs_diff(img.image, gff::jpeg_approx(img.image, 90));
    const double d10 = max_abs_diff(img.image, gff::jpeg_approx(img.image, 10));
    EXPECT_GT(d10, d90);
}

class SynthFiles : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("synth_test_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

TEST_F(SynthFiles, PpmRoundTripWithinQuantization) {
    auto img = gff::gen_real(21, 24, 40);
    const std::string file = (dir_ / "rt.ppm").string();
    gff::write_ppm(img.image, file);
    auto back = gff::read_ppm(file);
    ASSERT_EQ(back.height, 24u);
    ASSERT_EQ(back.width, 40u);
    EXPECT_LE(max_abs_diff(img.image, back), 1.0 / 255.0);
}

TEST_F(SynthFiles, PpmRejectsBadMagicAndTruncation) {
    const std::string bad = (dir_ / "bad.ppm").string();
    std::ofstream(bad) << "P5\n4 4\n255\n";
    EXPECT_THROW(gff::read_ppm(bad), gff::FormatError);
    const std::string trunc = (dir_ / "trunc.ppm").string();
    std::ofstream(trunc, std::ios::binary) << "P6\n4 4\n255\nxx";
    EXPECT_THROW(gff::read_ppm(trunc), gff::FormatError);
    EXPECT_THROW(gff::read_ppm((dir_ / "missing.ppm").string()), gff::FormatError);
}

TEST_F(SynthFiles, PpmHeaderDimensionsDriveParsing) {
    auto img = gff::gen_real(22, 16, 24);
    const std::string file = (dir_ / "dims.ppm").string();
    gff::write_ppm(img.image, file);
    auto back = gff::read_ppm(file);
    EXPECT_EQ(back.height, img.image.height);
    EXPECT_EQ(back.width, img.image.width);
    EXPECT_EQ(back.pixels.size(), img.image.pixels.size());
}

TEST_F(SynthFiles, SplitGenerationIsPureAndBalanced) {
    gff::SplitSpec spec{"train", 6, 4, gff::Family::kFakeA};
    auto rows1 = gff::generate_split(dir_.string(), spec, 0, 99, 32);
    ASSERT_EQ(rows1.size(), 10u);
    std::size_t reals = 0, fakes = 0;
    for (const auto& r : rows1) (r.label == 0 ? reals : fakes)++;
    EXPECT_EQ(reals, 6u);
    EXPECT_EQ(fakes, 4u);
    // regeneration is bit-identical
    std::vector<std::vector<float>> first;
    for (const auto& r : rows1) first.push_back(gff::read_ppm((dir_ / r.path).string()).pixels);
    auto rows2 = gff::generate_split(dir_.string(), spec, 0, 99, 32);
    for (std::size_t i = 0; i < rows2.size(); ++i) {
        EXPECT_EQ(rows1[i].path, rows2[i].path);
        EXPECT_EQ(rows1[i].seed, rows2[i].seed);
        EXPECT_EQ(gff::read_ppm((dir_ / rows2[i].path).string()).pixels, first[i]);
    }
}

TEST_F(SynthFiles, FamilyHoldoutAcrossSplits) {
    auto train = gff::generate_split(dir_.string(), {"train", 3, 3, gff::Family::kFakeA}, 0, 1, 32);
    auto unseen =
        gff::generate_split(dir_.string(), {"test_unseen", 3, 3, gff::Family::kFakeB}, 3, 1, 32);
    for (const auto& r : train)
        if (r.label == 1) EXPECT_EQ(r.family, gff::Family::kFakeA);
    for (const auto& r : unseen)
        if (r.label == 1) EXPECT_EQ(r.family, gff::Family::kFakeB);
}

TEST_F(SynthFiles, ManifestRoundTripAndValidation) {
    auto rows = gff::generate_split(dir_.string(), {"val", 2, 2, gff::Family::kFakeA}, 1, 5, 32);
    auto loaded = gff::read_manifest((dir_ / "val.csv").string());
    ASSERT_EQ(loaded.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(loaded[i].path, rows[i].path);
        EXPECT_EQ(loaded[i].label, rows[i].label);
        EXPECT_EQ(loaded[i].family, rows[i].family);
        EXPECT_EQ(loaded[i].seed, rows[i].seed);
    }
    const std::string bad = (dir_ / "bad.csv").string();
    std::ofstream(bad) << "path,label\nx,0\n";
    EXPECT_THROW(gff::read_manifest(bad), gff::DataError);
}
