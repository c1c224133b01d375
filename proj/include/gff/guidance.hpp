#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "gff/ops.hpp"
#include "gff/registry.hpp"
#include "gff/rng.hpp"

namespace gff {

/// Bottleneck adapter inserted between MHSA and MLP of a frozen block:
/// up(relu(mid(relu(down(z))))), applied token-wise. The up projection is
/// zero-initialized so an untrained adapter leaves the host block unchanged.
/// Tensor members share storage with the owning registry.
template <typename S>
class Dfgm {
public:
    Dfgm() = default;

    /// Registers the adapter's trainable parameters under `prefix`.
    Dfgm(ParameterRegistry<S>& registry, const std::string& prefix, std::size_t dim,
         std::size_t bottleneck, bool with_biases, Rng& rng) {
        if (bottleneck == 0 || dim == 0) throw ContractError("dfgm: dims must be positive");
        if (bottleneck * 2 > dim)
            throw ContractError("dfgm: bottleneck " + std::to_string(bottleneck) +
                                " must satisfy d <= D/2 for D=" + std::to_string(dim));
        dim_ = dim;
        bottleneck_ = bottleneck;
        with_biases_ = with_biases;
        auto tn = [&](Shape shape, double stddev) {
            Tensor<S> t = Tensor<S>::zeros(std::move(shape));
            for (auto& v : t.data_mut()) v = static_cast<S>(rng.truncated_normal(stddev));
            return t;
        };
        // fan-in scaled down/mid projections; the zero up-projection keeps
        // the host block's function untouched until training moves it
        w_down_ = registry.add(prefix + ".w_down",
                               tn({dim, bottleneck}, 1.0 / std::sqrt(static_cast<double>(dim))),
                               false);
        w_mid_ = registry.add(
            prefix + ".w_mid",
            tn({bottleneck, bottleneck}, 1.0 / std::sqrt(static_cast<double>(bottleneck))),
            false);
        w_up_ = registry.add(prefix + ".w_up", Tensor<S>::zeros({bottleneck, dim}), false);
        if (with_biases) {
            b_down_ = registry.add(prefix + ".b_down", Tensor<S>::zeros({bottleneck}), false);
            b_mid_ = registry.add(prefix + ".b_mid", Tensor<S>::zeros({bottleneck}), false);
            b_up_ = registry.add(prefix + ".b_up", Tensor<S>::zeros({dim}), false);
        }
    }

    /// Token-wise bottleneck chain on a T x D sequence. The caller owns the
    /// residual connection.
    Tensor<S> forward(const Tensor<S>& z) const {
        if (z.ndim() != 2 || z.dim(1) != dim_)
            throw DimError("dfgm: input " + shape_str(z.shape()) + " vs width " +
                           std::to_string(dim_));
        Tensor<S> h = matmul(z, w_down_);
        if (with_biases_) h = add_rowvec(h, b_down_);
        h = relu(h);
        h = matmul(h, w_mid_);
        if (with_biases_) h = add_rowvec(h, b_mid_);
        h = relu(h);
        h = matmul(h, w_up_);
        if (with_biases_) h = add_rowvec(h, b_up_);
        return h;
    }

    std::size_t dim() const { return dim_; }
    std::size_t bottleneck() const { return bottleneck_; }
    Tensor<S>& w_up() { return w_up_; }
    Tensor<S>& w_down() { return w_down_; }
    Tensor<S>& w_mid() { return w_mid_; }

private:
    std::size_t dim_ = 0;
    std::size_t bottleneck_ = 0;
    bool with_biases_ = true;
    Tensor<S> w_down_, w_mid_, w_up_;
    Tensor<S> b_down_, b_mid_, b_up_;
};

/// Trainable parameter count of one adapter: D*d + d*d + d*D weights, plus
/// 2d + D biases when enabled.
inline std::uint64_t dfgm_param_count(std::uint64_t dim, std::uint64_t bottleneck,
                                      bool with_biases) {
    std::uint64_t n = dim * bottleneck + bottleneck * bottleneck + bottleneck * dim;
    if (with_biases) n += 2 * bottleneck + dim;
    return n;
}

}  // namespace gff
