#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gff/errors.hpp"
#include "gff/tensor.hpp"

namespace gff {

/// H x W x 3 image, float pixels, row-major (y, x, channel).
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;  // size height * width * 3

    static Image filled(std::size_t h, std::size_t w, float v = 0.0f) {
        return Image{h, w, std::vector<float>(h * w * 3, v)};
    }

    float& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * 3 + c];
    }
    float at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }

    void clamp01() {
        for (auto& p : pixels) p = std::min(1.0f, std::max(0.0f, p));
    }

    float luminance(std::size_t y, std::size_t x) const {
        return (at(y, x, 0) + at(y, x, 1) + at(y, x, 2)) / 3.0f;
    }
};

enum class Family : int { kReal = 0, kFakeA = 1, kFakeB = 2 };

inline std::string family_name(Family f) {
    switch (f) {
        case Family::kReal: return "REAL";
        case Family::kFakeA: return "FAKE_A";
        case Family::kFakeB: return "FAKE_B";
    }
    return "?";
}

inline Family family_from_name(const std::string& s) {
    if (s == "REAL") return Family::kReal;
    if (s == "FAKE_A") return Family::kFakeA;
    if (s == "FAKE_B") return Family::kFakeB;
    throw DataError("unknown family tag: " + s);
}

/// Procedurally generated sample: pixels in [0,1], binary label, generator
/// family, and the per-sample seed it regenerates from.
struct LabeledImage {
    Image image;
    int label = 0;  // 0 real, 1 fake
    Family family = Family::kReal;
    std::uint64_t seed = 0;
};

// ---- PPM / PGM -------------------------------------------------------------

namespace detail {

inline int ppm_next_int(std::istream& is, const std::string& path) {
    // skips whitespace and '#' comments per the netpbm grammar
    int ch = is.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
        if (ch == '#')
            while (ch != EOF && ch != '\n') ch = is.get();
        ch = is.get();
    }
    if (ch == EOF || !std::isdigit(ch)) throw FormatError("malformed header in " + path);
    int value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        ch = is.get();
    }
    return value;
}

}  // namespace detail

/// Writes binary 8-bit PPM (P6).
inline void write_ppm(const Image& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, img.pixels[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("write failed for " + path);
}

/// Reads binary 8-bit PPM (P6).
inline Image read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '6') throw FormatError("bad magic in " + path + " (want P6)");
    const int w = detail::ppm_next_int(is, path);
    const int h = detail::ppm_next_int(is, path);
    const int maxval = detail::ppm_next_int(is, path);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw FormatError("unsupported PPM header in " + path);
    // header terminates with exactly one whitespace byte, already consumed
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(is.gcount()) != bytes.size())
        throw FormatError("truncated pixel data in " + path);
    Image img = Image::filled(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0f;
    return img;
}

/// Writes a single-channel [0,1] map as binary 8-bit PGM (P5).
inline void write_pgm(const std::vector<float>& map, std::size_t h, std::size_t w,
                      const std::string& path) {
    if (map.size() != h * w) throw ContractError("write_pgm: size mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> bytes(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, map[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw FormatError("write failed for " + path);
}

// ---- geometry --------------------------------------------------------------

/// Bilinear resize with half-pixel sample centers and edge clamping.
inline Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w) {
    Image dst = Image::filled(out_h, out_w);
    const double sy = static_cast<double>(src.height) / out_h;
    const double sx = static_cast<double>(src.width) / out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const double cy = std::min(std::max(fy, 0.0), static_cast<double>(src.height - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const float wy = static_cast<float>(cy - y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const double cx = std::min(std::max(fx, 0.0), static_cast<double>(src.width - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const float wx = static_cast<float>(cx - x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const float top = src.at(y0, x0, c) * (1.0f - wx) + src.at(y0, x1, c) * wx;
                const float bot = src.at(y1, x0, c) * (1.0f - wx) + src.at(y1, x1, c) * wx;
                dst.at(y, x, c) = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return dst;
}

inline Image crop(const Image& src, std::size_t oy, std::size_t ox, std::size_t h,
                  std::size_t w) {
    if (oy + h > src.height || ox + w > src.width)
        throw ContractError("crop: window exceeds image bounds");
    Image dst = Image::filled(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) dst.at(y, x, c) = src.at(oy + y, ox + x, c);
    return dst;
}

inline Image hflip(const Image& src) {
    Image dst = Image::filled(src.height, src.width);
    for (std::size_t y = 0; y < src.height; ++y)
        for (std::size_t x = 0; x < src.width; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                dst.at(y, x, c) = src.at(y, src.width - 1 - x, c);
    return dst;
}

/// Image as an H x W x 3 tensor.
template <typename S>
Tensor<S> image_to_tensor(const Image& img) {
    std::vector<S> data(img.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<S>(img.pixels[i]);
    return Tensor<S>::from({img.height, img.width, 3}, std::move(data));
}

}  // namespace gff
