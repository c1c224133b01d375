#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "gff/image.hpp"
#include "gff/rng.hpp"

namespace gff {

struct PerturbationConfig {
    double blur_sigma = 1.0;
    double crop_fraction = 0.875;  // in (0, 1]
    int jpeg_quality = 75;         // 1..100
    double noise_sigma = 0.02;
    double apply_probability = 0.5;

    void validate() const {
        if (!(blur_sigma > 0)) throw ContractError("perturb: blur sigma must be positive");
        if (!(crop_fraction > 0) || crop_fraction > 1.0)
            throw ContractError("perturb: crop fraction must be in (0,1]");
        if (jpeg_quality < 1 || jpeg_quality > 100)
            throw ContractError("perturb: jpeg quality must be in 1..100");
        if (!(noise_sigma >= 0)) throw ContractError("perturb: noise sigma must be >= 0");
        if (apply_probability < 0.0 || apply_probability > 1.0)
            throw ContractError("perturb: apply probability must be in [0,1]");
    }
};

namespace detail {

/// Normalized Gaussian taps with radius ceil(3 sigma); sums to 1 exactly up
/// to the final division.
inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int t = -radius; t <= radius; ++t) {
        const double v = std::exp(-0.5 * (t * t) / (sigma * sigma));
        k[t + radius] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

inline Image separable_blur(const Image& src, const std::vector<double>& k) {
    const int radius = static_cast<int>(k.size() / 2);
    auto clampi = [](long v, long lo, long hi) { return std::min(hi, std::max(lo, v)); };
    Image tmp = Image::filled(src.height, src.width);
    for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t)
                    acc += k[t + radius] *
                           src.at(y,
                                  static_cast<std::size_t>(clampi(
                                      static_cast<long>(x) + t, 0,
                                      static_cast<long>(src.width) - 1)),
                                  c);
                tmp.at(y, x, c) = static_cast<float>(acc);
            }
    Image dst = Image::filled(src.height, src.width);
    for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t)
                    acc += k[t + radius] *
                           tmp.at(static_cast<std::size_t>(clampi(static_cast<long>(y) + t, 0,
                                                                  static_cast<long>(src.height) -
                                                                      1)),
                                  x, c);
                dst.at(y, x, c) = static_cast<float>(acc);
            }
    return dst;
}

// ---- JPEG approximation: 8x8 block DCT, luminance-table quantization -------

// standard luminance quantization table (Annex K ordering, row-major)
inline const std::array<int, 64>& jpeg_luma_table() {
    static const std::array<int, 64> table = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    return table;
}

/// Quality-scaled quantization steps per the usual 5000/q | 200-2q rule.
inline std::array<double, 64> jpeg_quant_steps(int quality) {
    const double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    std::array<double, 64> steps{};
    for (std::size_t i = 0; i < 64; ++i) {
        double q = std::floor((jpeg_luma_table()[i] * scale + 50.0) / 100.0);
        steps[i] = std::min(255.0, std::max(1.0, q));
    }
    return steps;
}

inline void dct8_forward(const double in[8][8], double out[8][8]) {
    constexpr double pi = std::numbers::pi;
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    acc += in[y][x] * std::cos((2 * y + 1) * u * pi / 16.0) *
                           std::cos((2 * x + 1) * v * pi / 16.0);
            const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
            const double cv = v == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
            out[u][v] = 0.25 * cu * cv * acc;
        }
}

inline void dct8_inverse(const double in[8][8], double out[8][8]) {
    constexpr double pi = std::numbers::pi;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v) {
                    const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
                    const double cv = v == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
                    acc += cu * cv * in[u][v] * std::cos((2 * y + 1) * u * pi / 16.0) *
                           std::cos((2 * x + 1) * v * pi / 16.0);
                }
            out[y][x] = 0.25 * acc;
        }
}

}  // namespace detail

/// Separable Gaussian blur; kernel weights sum to 1.
inline Image gaussian_blur(const Image& src, double sigma) {
    return detail::separable_blur(src, detail::gaussian_kernel(sigma));
}

/// Random sub-window of area fraction^2, resized back to the original size.
inline Image random_crop_resize(const Image& src, double fraction, Rng& rng) {
    const std::size_t ch = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        std::lround(src.height * fraction)));
    const std::size_t cw = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(src.width * fraction)));
    const std::size_t oy = static_cast<std::size_t>(rng.below(src.height - ch + 1));
    const std::size_t ox = static_cast<std::size_t>(rng.below(src.width - cw + 1));
    return resize_bilinear(crop(src, oy, ox, ch, cw), src.height, src.width);
}

/// Block-DCT quantization approximating JPEG compression. Each channel is
/// treated with the luminance table; blocks are padded by edge replication.
inline Image jpeg_approx(const Image& src, int quality) {
    const auto steps = detail::jpeg_quant_steps(quality);
    Image dst = Image::filled(src.height, src.width);
    double block[8][8], coef[8][8], back[8][8];
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t by = 0; by < src.height; by += 8)
            for (std::size_t bx = 0; bx < src.width; bx += 8) {
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        const std::size_t sy = std::min(by + y, src.height - 1);
                        const std::size_t sx = std::min(bx + x, src.width - 1);
                        block[y][x] = src.at(sy, sx, c) * 255.0 - 128.0;
                    }
                detail::dct8_forward(block, coef);
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        const double q = steps[u * 8 + v];
                        coef[u][v] = std::round(coef[u][v] / q) * q;
                    }
                detail::dct8_inverse(coef, back);
                for (int y = 0; y < 8 && by + y < src.height; ++y)
                    for (int x = 0; x < 8 && bx + x < src.width; ++x)
                        dst.at(by + y, bx + x, c) =
                            static_cast<float>((back[y][x] + 128.0) / 255.0);
            }
    dst.clamp01();
    return dst;
}

inline Image additive_noise(const Image& src, double sigma, Rng& rng) {
    Image dst = src;
    for (auto& p : dst.pixels) p += static_cast<float>(rng.normal(0.0, sigma));
    dst.clamp01();
    return dst;
}

/// Applies each perturbation independently with cfg.apply_probability, in
/// order: blur, crop, JPEG, noise. Deterministic in (cfg, seed). Probability
/// zero returns the input untouched.
inline LabeledImage perturb(const LabeledImage& in, const PerturbationConfig& cfg,
                            std::uint64_t seed) {
    cfg.validate();
    LabeledImage out = in;
    Rng rng(mix_seed(seed, 0x50455254));
    const bool do_blur = rng.bernoulli(cfg.apply_probability);
    const bool do_crop = rng.bernoulli(cfg.apply_probability);
    const bool do_jpeg = rng.bernoulli(cfg.apply_probability);
    const bool do_noise = rng.bernoulli(cfg.apply_probability);
    if (do_blur) out.image = gaussian_blur(out.image, cfg.blur_sigma);
    if (do_crop) out.image = random_crop_resize(out.image, cfg.crop_fraction, rng);
    if (do_jpeg) out.image = jpeg_approx(out.image, cfg.jpeg_quality);
    if (do_noise) out.image = additive_noise(out.image, cfg.noise_sigma, rng);
    // blur and crop-resize are convex combinations of in-range pixels and the
    // other two clamp internally, so no final clamp is needed; skipping it
    // keeps the zero-probability path bit-identical to the input
    return out;
}

}  // namespace gff
