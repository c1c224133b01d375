#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gff/tensor.hpp"

namespace gff {

namespace detail {

// Raw row-major matmul kernels, accumulate form. Loop orders chosen so the
// inner loop runs over contiguous memory.

template <typename S>
void mm_nn(S* out, const S* a, const S* b, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const S aip = a[i * k + p];
            const S* brow = b + p * n;
            S* orow = out + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
}

// out[m x n] += a[m x k] * b^T, where b is [n x k]
template <typename S>
void mm_nt(S* out, const S* a, const S* b, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const S* arow = a + i * k;
            const S* brow = b + j * k;
            S acc = S(0);
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out[i * n + j] += acc;
        }
}

// out[m x n] += a^T * b, where a is [k x m], b is [k x n]
template <typename S>
void mm_tn(S* out, const S* a, const S* b, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
            const S api = a[p * m + i];
            const S* brow = b + p * n;
            S* orow = out + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += api * brow[j];
        }
}

template <typename S>
inline void maybe_record_vec(const char* op, const std::vector<Tensor<S>>& inputs,
                             const Tensor<S>& out, std::function<void()> pull) {
    Tape<S>* tape = Tape<S>::current();
    if (!tape) return;
    bool any = false;
    for (const auto& in : inputs) any = any || op_input_tracked(in);
    if (!any) return;
    typename Tape<S>::Node node;
    node.op = op;
    for (const auto& in : inputs) node.inputs.push_back(in.storage());
    node.output = out.storage();
    node.pull = std::move(pull);
    out.storage()->tracked = true;
    tape->record(std::move(node));
}

template <typename S>
inline void require_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw DimError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

// Interprets a tensor as rows of its last axis.
template <typename S>
inline std::pair<std::size_t, std::size_t> rows_cols(const Tensor<S>& x, const char* op) {
    if (x.ndim() == 0 || x.numel() == 0) throw DimError(std::string(op) + ": empty tensor");
    std::size_t cols = x.shape().back();
    return {x.numel() / cols, cols};
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape("add", a, b);
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    auto o = out.data_mut();
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
    detail::maybe_record<S>("add", {a, b}, out,
                            [as = a.storage(), bs = b.storage(), os = out.storage()] {
                                for (std::size_t i = 0; i < os->adjoint.size(); ++i) {
                                    as->adjoint[i] += os->adjoint[i];
                                    bs->adjoint[i] += os->adjoint[i];
                                }
                            });
    return out;
}

/// Adds a length-C vector to every row of an R x C matrix (bias add).
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& m, const Tensor<S>& v) {
    auto [rows, cols] = detail::rows_cols(m, "add_rowvec");
    if (v.ndim() != 1 || v.dim(0) != cols)
        throw DimError("add_rowvec: vector " + shape_str(v.shape()) + " vs matrix " +
                       shape_str(m.shape()));
    Tensor<S> out = Tensor<S>::zeros(m.shape());
    auto o = out.data_mut();
    auto mv = m.data(), vv = v.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = mv[r * cols + c] + vv[c];
    detail::maybe_record<S>(
        "add_rowvec", {m, v}, out,
        [ms = m.storage(), vs = v.storage(), os = out.storage(), rows, cols] {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    ms->adjoint[r * cols + c] += os->adjoint[r * cols + c];
                    vs->adjoint[c] += os->adjoint[r * cols + c];
                }
        });
    return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape("mul", a, b);
    Tensor<S> out = Tensor<S>::zeros(a.shape());
    auto o = out.data_mut();
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
    detail::maybe_record<S>("mul", {a, b}, out,
                            [as = a.storage(), bs = b.storage(), os = out.storage()] {
                                for (std::size_t i = 0; i < os->adjoint.size(); ++i) {
                                    as->adjoint[i] += os->adjoint[i] * bs->value[i];
                                    bs->adjoint[i] += os->adjoint[i] * as->value[i];
                                }
                            });
    return out;
}

/// Elementwise scale * x + shift with host-side constants.
template <typename S>
Tensor<S> affine(const Tensor<S>& x, S scale, S shift) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = scale * xv[i] + shift;
    detail::maybe_record<S>("affine", {x}, out, [xs = x.storage(), os = out.storage(), scale] {
        for (std::size_t i = 0; i < os->adjoint.size(); ++i)
            xs->adjoint[i] += scale * os->adjoint[i];
    });
    return out;
}

/// Clamp to [lo, hi]; gradient passes through strictly interior points only.
template <typename S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::min(hi, std::max(lo, xv[i]));
    detail::maybe_record<S>("clamp", {x}, out, [xs = x.storage(), os = out.storage(), lo, hi] {
        for (std::size_t i = 0; i < os->adjoint.size(); ++i)
            if (xs->value[i] > lo && xs->value[i] < hi) xs->adjoint[i] += os->adjoint[i];
    });
    return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > S(0) ? xv[i] : S(0);
    detail::maybe_record<S>("relu", {x}, out, [xs = x.storage(), os = out.storage()] {
        for (std::size_t i = 0; i < os->adjoint.size(); ++i)
            if (xs->value[i] > S(0)) xs->adjoint[i] += os->adjoint[i];
    });
    return out;
}

namespace detail {
template <typename S>
inline S gelu_scalar(S x) {
    const S k = S(0.7978845608028654);  // sqrt(2/pi)
    const S c = S(0.044715);
    return S(0.5) * x * (S(1) + std::tanh(k * (x + c * x * x * x)));
}

template <typename S>
inline S gelu_grad_scalar(S x) {
    const S k = S(0.7978845608028654);
    const S c = S(0.044715);
    const S t = std::tanh(k * (x + c * x * x * x));
    const S sech2 = S(1) - t * t;
    return S(0.5) * (S(1) + t) + S(0.5) * x * sech2 * k * (S(1) + S(3) * c * x * x);
}
}  // namespace detail

/// GELU, tanh approximation.
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = detail::gelu_scalar(xv[i]);
    detail::maybe_record<S>("gelu", {x}, out, [xs = x.storage(), os = out.storage()] {
        for (std::size_t i = 0; i < os->adjoint.size(); ++i)
            xs->adjoint[i] += os->adjoint[i] * detail::gelu_grad_scalar(xs->value[i]);
    });
    return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const S v = xv[i];
        if (v >= S(0)) {
            o[i] = S(1) / (S(1) + std::exp(-v));
        } else {
            const S e = std::exp(v);
            o[i] = e / (S(1) + e);
        }
    }
    detail::maybe_record<S>("sigmoid", {x}, out, [xs = x.storage(), os = out.storage()] {
        for (std::size_t i = 0; i < os->adjoint.size(); ++i) {
            const S s = os->value[i];
            xs->adjoint[i] += os->adjoint[i] * s * (S(1) - s);
        }
    });
    return out;
}

/// Natural logarithm, elementwise.
template <typename S>
Tensor<S> log(const Tensor<S>& x) {
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(xv[i]);
    detail::maybe_record<S>("log", {x}, out, [xs = x.storage(), os = out.storage()] {
        for (std::size_t i = 0; i < os->adjoint.size(); ++i)
            xs->adjoint[i] += os->adjoint[i] / xs->value[i];
    });
    return out;
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw DimError("matmul: expects 2-d tensors, got " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimError("matmul: inner dims " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    Tensor<S> out = Tensor<S>::zeros({m, n});
    detail::mm_nn(out.data_mut().data(), a.data().data(), b.data().data(), m, k, n);
    detail::maybe_record<S>("matmul", {a, b}, out,
                            [as = a.storage(), bs = b.storage(), os = out.storage(), m, k, n] {
                                detail::mm_nt(as->adjoint.data(), os->adjoint.data(),
                                              bs->value.data(), m, n, k);
                                detail::mm_tn(bs->adjoint.data(), as->value.data(),
                                              os->adjoint.data(), k, m, n);
                            });
    return out;
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& x) {
    if (x.ndim() != 2) throw DimError("transpose2d: expects 2-d tensor");
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor<S> out = Tensor<S>::zeros({c, r});
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) o[j * r + i] = xv[i * c + j];
    detail::maybe_record<S>("transpose2d", {x}, out, [xs = x.storage(), os = out.storage(), r, c] {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) xs->adjoint[i * c + j] += os->adjoint[j * r + i];
    });
    return out;
}

/// Softmax over the last axis, max-subtracted for stability.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
    auto [rows, cols] = detail::rows_cols(x, "softmax");
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const S* in = xv.data() + r * cols;
        S* dst = o.data() + r * cols;
        S mx = in[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
        S sum = S(0);
        for (std::size_t c = 0; c < cols; ++c) {
            dst[c] = std::exp(in[c] - mx);
            sum += dst[c];
        }
        for (std::size_t c = 0; c < cols; ++c) dst[c] /= sum;
    }
    detail::maybe_record<S>("softmax", {x}, out,
                            [xs = x.storage(), os = out.storage(), rows, cols] {
                                for (std::size_t r = 0; r < rows; ++r) {
                                    const S* y = os->value.data() + r * cols;
                                    const S* dy = os->adjoint.data() + r * cols;
                                    S dot = S(0);
                                    for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
                                    for (std::size_t c = 0; c < cols; ++c)
                                        xs->adjoint[r * cols + c] += y[c] * (dy[c] - dot);
                                }
                            });
    return out;
}

/// Layer normalization over the last axis, then gamma * xhat + beta.
template <typename S>
Tensor<S> layernorm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
    auto [rows, cols] = detail::rows_cols(x, "layernorm");
    if (gamma.numel() != cols || beta.numel() != cols)
        throw DimError("layernorm: affine params " + shape_str(gamma.shape()) + "/" +
                       shape_str(beta.shape()) + " vs last dim " + std::to_string(cols));
    if (!(eps > S(0))) throw ContractError("layernorm: eps must be positive");
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto o = out.data_mut();
    auto xv = x.data();
    auto g = gamma.data(), be = beta.data();
    std::vector<S> inv_std(rows), mean(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const S* in = xv.data() + r * cols;
        S mu = S(0);
        for (std::size_t c = 0; c < cols; ++c) mu += in[c];
        mu /= S(cols);
        S var = S(0);
        for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
        var /= S(cols);
        const S is = S(1) / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = is;
        for (std::size_t c = 0; c < cols; ++c)
            o[r * cols + c] = g[c] * ((in[c] - mu) * is) + be[c];
    }
    detail::maybe_record<S>(
        "layernorm", {x, gamma, beta}, out,
        [xs = x.storage(), gs = gamma.storage(), bs = beta.storage(), os = out.storage(),
         mean = std::move(mean), inv_std = std::move(inv_std), rows, cols] {
            for (std::size_t r = 0; r < rows; ++r) {
                const S* in = xs->value.data() + r * cols;
                const S* dy = os->adjoint.data() + r * cols;
                const S is = inv_std[r];
                S sum_gdy = S(0), sum_gdy_xhat = S(0);
                for (std::size_t c = 0; c < cols; ++c) {
                    const S xhat = (in[c] - mean[r]) * is;
                    const S gdy = gs->value[c] * dy[c];
                    sum_gdy += gdy;
                    sum_gdy_xhat += gdy * xhat;
                    gs->adjoint[c] += dy[c] * xhat;
                    bs->adjoint[c] += dy[c];
                }
                for (std::size_t c = 0; c < cols; ++c) {
                    const S xhat = (in[c] - mean[r]) * is;
                    const S gdy = gs->value[c] * dy[c];
                    xs->adjoint[r * cols + c] +=
                        is * (gdy - sum_gdy / S(cols) - xhat * sum_gdy_xhat / S(cols));
                }
            }
        });
    return out;
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    S acc = S(0);
    for (S v : x.data()) acc += v;
    Tensor<S> out = Tensor<S>::scalar(acc);
    detail::maybe_record<S>("sum_all", {x}, out, [xs = x.storage(), os = out.storage()] {
        for (auto& a : xs->adjoint) a += os->adjoint[0];
    });
    return out;
}

/// Copying reshape; element order is preserved.
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw DimError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    Tensor<S> out = Tensor<S>::from(std::move(shape), {x.data().begin(), x.data().end()});
    detail::maybe_record<S>("reshape", {x}, out, [xs = x.storage(), os = out.storage()] {
        for (std::size_t i = 0; i < xs->adjoint.size(); ++i) xs->adjoint[i] += os->adjoint[i];
    });
    return out;
}

/// Rows [r0, r1) of a 2-d tensor.
template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, std::size_t r0, std::size_t r1) {
    if (x.ndim() != 2 || r1 > x.dim(0) || r0 >= r1)
        throw DimError("slice_rows: rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                       ") of " + shape_str(x.shape()));
    const std::size_t cols = x.dim(1);
    Tensor<S> out = Tensor<S>::zeros({r1 - r0, cols});
    std::copy_n(x.data().data() + r0 * cols, (r1 - r0) * cols, out.data_mut().data());
    detail::maybe_record<S>("slice_rows", {x}, out,
                            [xs = x.storage(), os = out.storage(), r0, cols] {
                                for (std::size_t i = 0; i < os->adjoint.size(); ++i)
                                    xs->adjoint[r0 * cols + i] += os->adjoint[i];
                            });
    return out;
}

/// Row i of a 2-d tensor as a 1-d vector.
template <typename S>
Tensor<S> row(const Tensor<S>& x, std::size_t i) {
    if (x.ndim() != 2 || i >= x.dim(0))
        throw DimError("row: index " + std::to_string(i) + " of " + shape_str(x.shape()));
    const std::size_t cols = x.dim(1);
    Tensor<S> out = Tensor<S>::zeros({cols});
    std::copy_n(x.data().data() + i * cols, cols, out.data_mut().data());
    detail::maybe_record<S>("row", {x}, out, [xs = x.storage(), os = out.storage(), i, cols] {
        for (std::size_t c = 0; c < cols; ++c) xs->adjoint[i * cols + c] += os->adjoint[c];
    });
    return out;
}

/// Columns [c0, c1) of a 2-d tensor.
template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, std::size_t c0, std::size_t c1) {
    if (x.ndim() != 2 || c1 > x.dim(1) || c0 >= c1)
        throw DimError("slice_cols: cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                       ") of " + shape_str(x.shape()));
    const std::size_t rows = x.dim(0), cols = x.dim(1), w = c1 - c0;
    Tensor<S> out = Tensor<S>::zeros({rows, w});
    auto o = out.data_mut();
    auto xv = x.data();
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(xv.data() + r * cols + c0, w, o.data() + r * w);
    detail::maybe_record<S>("slice_cols", {x}, out,
                            [xs = x.storage(), os = out.storage(), rows, cols, c0, w] {
                                for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t c = 0; c < w; ++c)
                                        xs->adjoint[r * cols + c0 + c] += os->adjoint[r * w + c];
                            });
    return out;
}

/// Stacks K equal-length 1-d vectors into a K x C matrix.
template <typename S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& rows) {
    if (rows.empty()) throw DimError("stack_rows: empty input");
    const std::size_t cols = rows[0].numel();
    for (const auto& r : rows)
        if (r.ndim() != 1 || r.numel() != cols) throw DimError("stack_rows: ragged inputs");
    Tensor<S> out = Tensor<S>::zeros({rows.size(), cols});
    auto o = out.data_mut();
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(rows[i].data().data(), cols, o.data() + i * cols);
    std::vector<std::shared_ptr<detail::Storage<S>>> srcs;
    for (const auto& r : rows) srcs.push_back(r.storage());
    detail::maybe_record_vec<S>("stack_rows", rows, out,
                                [srcs = std::move(srcs), os = out.storage(), cols] {
                                    for (std::size_t i = 0; i < srcs.size(); ++i)
                                        for (std::size_t c = 0; c < cols; ++c)
                                            srcs[i]->adjoint[c] += os->adjoint[i * cols + c];
                                });
    return out;
}

/// Concatenates 1-d tensors end to end.
template <typename S>
Tensor<S> concat_1d(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw DimError("concat_1d: empty input");
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != 1) throw DimError("concat_1d: expects 1-d parts");
        total += p.numel();
    }
    Tensor<S> out = Tensor<S>::zeros({total});
    auto o = out.data_mut();
    std::size_t off = 0;
    std::vector<std::shared_ptr<detail::Storage<S>>> srcs;
    std::vector<std::size_t> offs;
    for (const auto& p : parts) {
        std::copy_n(p.data().data(), p.numel(), o.data() + off);
        srcs.push_back(p.storage());
        offs.push_back(off);
        off += p.numel();
    }
    detail::maybe_record_vec<S>(
        "concat_1d", parts, out, [srcs = std::move(srcs), offs = std::move(offs), os = out.storage()] {
            for (std::size_t i = 0; i < srcs.size(); ++i)
                for (std::size_t j = 0; j < srcs[i]->numel(); ++j)
                    srcs[i]->adjoint[j] += os->adjoint[offs[i] + j];
        });
    return out;
}

/// Concatenates 2-d tensors with equal row counts along columns.
template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw DimError("concat_cols: empty input");
    const std::size_t rows = parts[0].dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.dim(0) != rows) throw DimError("concat_cols: ragged inputs");
        total += p.dim(1);
    }
    Tensor<S> out = Tensor<S>::zeros({rows, total});
    auto o = out.data_mut();
    std::size_t off = 0;
    std::vector<std::shared_ptr<detail::Storage<S>>> srcs;
    std::vector<std::size_t> offs, widths;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(p.data().data() + r * w, w, o.data() + r * total + off);
        srcs.push_back(p.storage());
        offs.push_back(off);
        widths.push_back(w);
        off += w;
    }
    detail::maybe_record_vec<S>(
        "concat_cols", parts, out,
        [srcs = std::move(srcs), offs = std::move(offs), widths = std::move(widths),
         os = out.storage(), rows, total] {
            for (std::size_t i = 0; i < srcs.size(); ++i)
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[i]; ++c)
                        srcs[i]->adjoint[r * widths[i] + c] +=
                            os->adjoint[r * total + offs[i] + c];
        });
    return out;
}

/// Rearranges an H x W x 3 image into N rows of flattened P x P x 3 patches,
/// patches in raster order.
template <typename S>
Tensor<S> im2patches(const Tensor<S>& img, std::size_t patch) {
    if (img.ndim() != 3 || img.dim(2) != 3)
        throw DimError("im2patches: expects HxWx3, got " + shape_str(img.shape()));
    const std::size_t h = img.dim(0), w = img.dim(1);
    if (patch == 0 || h % patch != 0 || w % patch != 0)
        throw DimError("im2patches: image " + shape_str(img.shape()) +
                       " not divisible by patch " + std::to_string(patch));
    const std::size_t gy = h / patch, gx = w / patch;
    const std::size_t plen = patch * patch * 3;
    Tensor<S> out = Tensor<S>::zeros({gy * gx, plen});
    auto o = out.data_mut();
    auto iv = img.data();
    for (std::size_t py = 0; py < gy; ++py)
        for (std::size_t px = 0; px < gx; ++px) {
            S* dst = o.data() + (py * gx + px) * plen;
            for (std::size_t dy = 0; dy < patch; ++dy)
                for (std::size_t dx = 0; dx < patch; ++dx)
                    for (std::size_t c = 0; c < 3; ++c)
                        dst[(dy * patch + dx) * 3 + c] =
                            iv[((py * patch + dy) * w + (px * patch + dx)) * 3 + c];
        }
    detail::maybe_record<S>(
        "im2patches", {img}, out,
        [is = img.storage(), os = out.storage(), gy, gx, patch, w, plen] {
            for (std::size_t py = 0; py < gy; ++py)
                for (std::size_t px = 0; px < gx; ++px) {
                    const S* src = os->adjoint.data() + (py * gx + px) * plen;
                    for (std::size_t dy = 0; dy < patch; ++dy)
                        for (std::size_t dx = 0; dx < patch; ++dx)
                            for (std::size_t c = 0; c < 3; ++c)
                                is->adjoint[((py * patch + dy) * w + (px * patch + dx)) * 3 + c] +=
                                    src[(dy * patch + dx) * 3 + c];
                }
        });
    return out;
}

}  // namespace gff
