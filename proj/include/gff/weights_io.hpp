#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gff/registry.hpp"

namespace gff {

// GFFW v1 weight file, little-endian:
//   magic "GFFW", u32 version = 1, u32 tensor count;
//   per tensor: u32 name length, UTF-8 name, u8 frozen flag,
//               u32 ndim, u32 dims[ndim], float32 data row-major.
// No padding or alignment. Values are stored as float32 regardless of the
// in-memory scalar type.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("weight file truncated reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline float get_f32(std::istream& is, const std::string& what) {
    std::uint32_t bits = get_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

template <typename S>
void export_weights(const ParameterRegistry<S>& registry, const std::string& path) {
    if (registry.size() == 0) throw ContractError("export_weights: empty registry");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("export_weights: cannot open " + path);
    os.write("GFFW", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<std::uint32_t>(registry.size()));
    for (const auto& e : registry.entries()) {
        detail::put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        const unsigned char frozen = e.frozen ? 1 : 0;
        os.write(reinterpret_cast<const char*>(&frozen), 1);
        detail::put_u32(os, static_cast<std::uint32_t>(e.tensor.ndim()));
        for (std::size_t d = 0; d < e.tensor.ndim(); ++d)
            detail::put_u32(os, static_cast<std::uint32_t>(e.tensor.dim(d)));
        for (S v : e.tensor.data()) detail::put_f32(os, static_cast<float>(v));
    }
    if (!os) throw FormatError("export_weights: write failed for " + path);
}

/// Reads a GFFW file into a fresh registry.
template <typename S>
ParameterRegistry<S> import_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("import_weights: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "GFFW", 4) != 0)
        throw FormatError("import_weights: bad magic in " + path);
    const std::uint32_t version = detail::get_u32(is, "version");
    if (version != 1)
        throw FormatError("import_weights: unsupported version " + std::to_string(version));
    const std::uint32_t count = detail::get_u32(is, "tensor count");
    ParameterRegistry<S> registry;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = detail::get_u32(is, "name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw FormatError("weight file truncated reading tensor name");
        unsigned char frozen;
        if (!is.read(reinterpret_cast<char*>(&frozen), 1))
            throw FormatError("weight file truncated reading flags of " + name);
        const std::uint32_t ndim = detail::get_u32(is, "ndim of " + name);
        Shape shape(ndim);
        for (std::uint32_t d = 0; d < ndim; ++d)
            shape[d] = detail::get_u32(is, "dims of " + name);
        std::vector<S> data(shape_numel(shape));
        for (auto& v : data) v = static_cast<S>(detail::get_f32(is, "data of " + name));
        registry.add(name, Tensor<S>::from(std::move(shape), std::move(data)), frozen != 0);
    }
    // trailing bytes mean the header undercounted
    if (is.peek() != std::ifstream::traits_type::eof())
        throw FormatError("import_weights: trailing bytes after " + std::to_string(count) +
                          " tensors in " + path);
    return registry;
}

/// Loads weights from a GFFW file into an existing registry; every file
/// tensor must match an existing entry's shape.
template <typename S>
void load_weights_into(ParameterRegistry<S>& registry, const std::string& path) {
    ParameterRegistry<S> loaded = import_weights<S>(path);
    if (loaded.size() != registry.size())
        throw FormatError("load_weights: file has " + std::to_string(loaded.size()) +
                          " tensors, model expects " + std::to_string(registry.size()));
    for (auto& e : loaded.entries()) {
        if (!registry.contains(e.name))
            throw FormatError("load_weights: unexpected tensor " + e.name);
        auto& dst = registry.entry(e.name);
        if (dst.tensor.shape() != e.tensor.shape())
            throw FormatError("load_weights: shape mismatch for " + e.name + ": file " +
                              shape_str(e.tensor.shape()) + " vs model " +
                              shape_str(dst.tensor.shape()));
        std::copy(e.tensor.data().begin(), e.tensor.data().end(), dst.tensor.data_mut().begin());
    }
}

}  // namespace gff
