#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gff/image.hpp"
#include "gff/rng.hpp"

namespace gff {

// Desk-scale stand-in for a real/fake forgery corpus. "Real" images are
// band-limited noise fields; "fake" images are the same kind of field
// rendered at half resolution and upsampled x2, which stamps them with the
// generator-style artifact the detector is supposed to find. The two fake
// families differ only in the upsampling kernel.

namespace detail {

// fixed 5-tap Gaussian (sigma 0.6), applied separably with edge replication;
// a sharp kernel keeps enough high frequency in the "real" fields to leave
// room below for the upsampled fakes
inline void smooth5(std::vector<float>& field, std::size_t h, std::size_t w) {
    static const float k[5] = {0.0025633543f, 0.1655595087f, 0.6637542740f, 0.1655595087f,
                               0.0025633543f};
    std::vector<float> tmp(field.size());
    auto clampi = [](long v, long lo, long hi) { return std::min(hi, std::max(lo, v)); };
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int t = -2; t <= 2; ++t)
                acc += k[t + 2] * field[y * w + clampi(static_cast<long>(x) + t, 0,
                                                       static_cast<long>(w) - 1)];
            tmp[y * w + x] = acc;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int t = -2; t <= 2; ++t)
                acc += k[t + 2] * tmp[clampi(static_cast<long>(y) + t, 0,
                                             static_cast<long>(h) - 1) *
                                          w +
                                      x];
            field[y * w + x] = acc;
        }
}

// smoothed standard-normal field plus a random per-channel affine color map;
// result is NOT clamped
inline Image textured_field(Rng& rng, std::size_t h, std::size_t w) {
    std::vector<float> field(h * w);
    for (auto& v : field) v = static_cast<float>(rng.normal());
    smooth5(field, h, w);
    // the smoothing halves the std; rescale to keep contrast
    for (auto& v : field) v *= 1.5f;
    Image img = Image::filled(h, w);
    for (std::size_t c = 0; c < 3; ++c) {
        const float base = static_cast<float>(rng.uniform(0.35, 0.65));
        const float gain = static_cast<float>(rng.uniform(0.20, 0.30));
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                img.at(y, x, c) = base + gain * field[y * w + x];
    }
    return img;
}

inline Image upsample2_nearest(const Image& src) {
    Image dst = Image::filled(src.height * 2, src.width * 2);
    for (std::size_t y = 0; y < dst.height; ++y)
        for (std::size_t x = 0; x < dst.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) dst.at(y, x, c) = src.at(y / 2, x / 2, c);
    return dst;
}

}  // namespace detail

/// Procedural "real" image: smoothed seeded noise with per-channel color.
inline LabeledImage gen_real(std::uint64_t seed, std::size_t h, std::size_t w) {
    if (h < 16 || w < 16) throw ContractError("gen_real: minimum size is 16");
    Rng rng(mix_seed(seed, 0x52454131));
    LabeledImage out;
    out.image = detail::textured_field(rng, h, w);
    out.image.clamp01();
    out.label = 0;
    out.family = Family::kReal;
    out.seed = seed;
    return out;
}

/// Procedural "fake" image: half-resolution field upsampled x2. FAKE_A uses
/// nearest-neighbor (blocky), FAKE_B bilinear (smooth). Both families share
/// the same base field for a given seed.
inline LabeledImage gen_fake(std::uint64_t seed, std::size_t h, std::size_t w, Family family) {
    if (h < 16 || w < 16) throw ContractError("gen_fake: minimum size is 16");
    if (family != Family::kFakeA && family != Family::kFakeB)
        throw ContractError("gen_fake: family must be FAKE_A or FAKE_B");
    Rng rng(mix_seed(seed, 0x46414b45));
    const std::size_t hh = (h + 1) / 2, hw = (w + 1) / 2;
    Image half = detail::textured_field(rng, hh, hw);
    Image up = family == Family::kFakeA ? detail::upsample2_nearest(half)
                                        : resize_bilinear(half, hh * 2, hw * 2);
    LabeledImage out;
    out.image = (up.height == h && up.width == w) ? std::move(up) : crop(up, 0, 0, h, w);
    out.image.clamp01();
    out.label = 1;
    out.family = family;
    out.seed = seed;
    return out;
}

inline LabeledImage gen_sample(Family family, std::uint64_t seed, std::size_t h, std::size_t w) {
    return family == Family::kReal ? gen_real(seed, h, w) : gen_fake(seed, h, w, family);
}

// ---- resize / crop protocol ------------------------------------------------

/// Resize edge for a given crop size, preserving the 256:224 ratio.
inline std::size_t resize_edge_for_crop(std::size_t crop_size) {
    return static_cast<std::size_t>(std::lround(crop_size * 256.0 / 224.0));
}

/// Train path: bilinear resize to the 256:224-scaled edge, random crop and
/// 50% horizontal flip. Test path: same resize, center crop with offset
/// (S - C) / 2. Crop size defaults to the input size.
inline LabeledImage resize_and_crop(const LabeledImage& in, std::size_t crop_size, bool train,
                                    std::uint64_t seed) {
    const std::size_t resize_to = resize_edge_for_crop(crop_size);
    if (resize_to < crop_size) throw ContractError("resize_and_crop: crop exceeds resize edge");
    LabeledImage out = in;
    Image resized = resize_bilinear(in.image, resize_to, resize_to);
    if (train) {
        Rng rng(mix_seed(seed, 0x43524f50));
        const std::size_t span = resize_to - crop_size + 1;
        const std::size_t oy = static_cast<std::size_t>(rng.below(span));
        const std::size_t ox = static_cast<std::size_t>(rng.below(span));
        out.image = crop(resized, oy, ox, crop_size, crop_size);
        if (rng.bernoulli(0.5)) out.image = hflip(out.image);
    } else {
        const std::size_t off = (resize_to - crop_size) / 2;
        out.image = crop(resized, off, off, crop_size, crop_size);
    }
    return out;
}

// ---- manifests and corpus generation ----------------------------------------

struct ManifestRow {
    std::string path;  // relative to the manifest's directory
    int label = 0;
    Family family = Family::kReal;
    std::uint64_t seed = 0;
};

struct SplitSpec {
    std::string name;
    std::size_t real_count = 0;
    std::size_t fake_count = 0;
    Family fake_family = Family::kFakeA;
};

inline void write_manifest(const std::vector<ManifestRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write manifest " + path);
    os << "path,label,family,seed\n";
    for (const auto& r : rows)
        os << r.path << "," << r.label << "," << family_name(r.family) << "," << r.seed << "\n";
}

inline std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest " + path);
    std::string line;
    if (!std::getline(is, line) || line != "path,label,family,seed")
        throw DataError("bad manifest header in " + path);
    std::vector<ManifestRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string p, l, f, s;
        if (!std::getline(ss, p, ',') || !std::getline(ss, l, ',') || !std::getline(ss, f, ',') ||
            !std::getline(ss, s))
            throw DataError("bad manifest row at " + path + ":" + std::to_string(lineno));
        ManifestRow row;
        row.path = p;
        row.label = std::stoi(l);
        row.family = family_from_name(f);
        row.seed = std::stoull(s);
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Generates one split: writes PPM files under dir/images and returns the
/// manifest rows. Sample seeds derive from (seed, split index, sample index),
/// so regeneration is bit-identical.
inline std::vector<ManifestRow> generate_split(const std::string& dir, const SplitSpec& split,
                                               std::size_t split_index, std::uint64_t seed,
                                               std::size_t image_size) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    std::vector<ManifestRow> rows;
    rows.reserve(split.real_count + split.fake_count);
    auto emit = [&](Family family, std::size_t i, std::size_t ordinal) {
        const std::uint64_t sample_seed = mix_seed(seed, split_index, ordinal);
        LabeledImage img = gen_sample(family, sample_seed, image_size, image_size);
        std::ostringstream name;
        name << "images/" << split.name << "_" << family_name(img.family) << "_" << i << ".ppm";
        write_ppm(img.image, (fs::path(dir) / name.str()).string());
        rows.push_back({name.str(), img.label, img.family, sample_seed});
    };
    std::size_t ordinal = 0;
    for (std::size_t i = 0; i < split.real_count; ++i) emit(Family::kReal, i, ordinal++);
    for (std::size_t i = 0; i < split.fake_count; ++i) emit(split.fake_family, i, ordinal++);
    write_manifest(rows, (fs::path(dir) / (split.name + ".csv")).string());
    return rows;
}

}  // namespace gff
