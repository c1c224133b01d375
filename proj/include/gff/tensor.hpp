#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gff/errors.hpp"

namespace gff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

template <typename S>
struct Storage {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;     // empty until first accumulation / explicit zeroing
    std::vector<S> adjoint;  // scratch, owned by the running backward pass
    bool requires_grad = false;
    bool tracked = false;  // produced under an active tape

    std::size_t numel() const { return value.size(); }
};

}  // namespace detail

/// Dense row-major tensor handle. Copies share storage; operations never
/// mutate their inputs, so shared values behave like immutable snapshots.
/// The optimizer mutates parameter storage in place through data_mut().
template <typename S>
class Tensor {
public:
    using Scalar = S;

    Tensor() : st_(std::make_shared<detail::Storage<S>>()) {}

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.st_->value.assign(shape_numel(shape), S(0));
        t.st_->shape = std::move(shape);
        return t;
    }

    static Tensor full(Shape shape, S fill) {
        Tensor t = zeros(std::move(shape));
        for (auto& v : t.st_->value) v = fill;
        return t;
    }

    static Tensor from(Shape shape, std::vector<S> data) {
        if (shape_numel(shape) != data.size())
            throw DimError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
        Tensor t;
        t.st_->shape = std::move(shape);
        t.st_->value = std::move(data);
        return t;
    }

    static Tensor scalar(S v) { return from({1}, {v}); }

    const Shape& shape() const { return st_->shape; }
    std::size_t ndim() const { return st_->shape.size(); }
    std::size_t dim(std::size_t i) const { return st_->shape.at(i); }
    std::size_t numel() const { return st_->numel(); }

    std::span<const S> data() const { return st_->value; }
    std::span<S> data_mut() { return st_->value; }

    S item() const {
        if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
        return st_->value[0];
    }

    S at(std::size_t i) const { return st_->value[i]; }

    bool requires_grad() const { return st_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        st_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return !st_->grad.empty(); }
    std::span<const S> grad() const { return st_->grad; }
    std::span<S> grad_mut() { return st_->grad; }

    /// Allocates (if needed) and zero-fills the gradient slot.
    void zero_grad() { st_->grad.assign(st_->numel(), S(0)); }
    void clear_grad() { st_->grad.clear(); }

    Tensor clone() const {
        Tensor t;
        t.st_->shape = st_->shape;
        t.st_->value = st_->value;
        return t;
    }

    bool same_storage(const Tensor& other) const { return st_ == other.st_; }

    bool all_finite() const {
        for (S v : st_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::shared_ptr<detail::Storage<S>> storage() const { return st_; }

private:
    std::shared_ptr<detail::Storage<S>> st_;
};

/// Dynamic tape of recorded primitive operations. One tape is confined to one
/// thread; installing a Tape makes it the thread's recording target for the
/// lifetime of the object (RAII). Nodes are appended in execution order, so
/// the list is topologically sorted by construction.
template <typename S>
class Tape {
public:
    struct Node {
        const char* op;
        std::vector<std::shared_ptr<detail::Storage<S>>> inputs;
        std::shared_ptr<detail::Storage<S>> output;
        std::function<void()> pull;  // adds d(loss)/d(inputs) from output adjoint
    };

    Tape() : previous_(current_) { current_ = this; }
    ~Tape() { current_ = previous_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return current_; }

    /// Scoped recording pause: ops run value-only while alive. Used to keep
    /// a frozen prefix of the pipeline out of the graph.
    struct Suspend {
        Suspend() : saved(current_) { current_ = nullptr; }
        ~Suspend() { current_ = saved; }
        Suspend(const Suspend&) = delete;
        Suspend& operator=(const Suspend&) = delete;
        Tape* saved;
    };

    void record(Node node) { nodes_.push_back(std::move(node)); }

    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::size_t i) const { return nodes_[i]; }

    /// Reverse pass from a scalar loss. Visits every node exactly once, in
    /// reverse recording order. Gradient accumulation into requires_grad
    /// tensors is additive across backward calls; adjoint scratch is fresh
    /// per call. Returns the number of nodes visited.
    std::size_t backward(const Tensor<S>& loss) {
        if (loss.numel() != 1)
            throw ContractError("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape()));
        std::vector<std::shared_ptr<detail::Storage<S>>> touched;
        auto touch = [&](const std::shared_ptr<detail::Storage<S>>& st) {
            if (st->adjoint.size() != st->numel()) {
                st->adjoint.assign(st->numel(), S(0));
                touched.push_back(st);
            }
        };
        for (auto& n : nodes_) {
            touch(n.output);
            for (auto& in : n.inputs) touch(in);
        }
        touch(loss.storage());
        loss.storage()->adjoint[0] = S(1);

        std::size_t visited = 0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it, ++visited) it->pull();

        for (auto& st : touched) {
            if (st->requires_grad) {
                if (st->grad.size() != st->numel()) st->grad.assign(st->numel(), S(0));
                for (std::size_t i = 0; i < st->numel(); ++i) st->grad[i] += st->adjoint[i];
            }
            st->adjoint.clear();
        }
        return visited;
    }

private:
    static inline thread_local Tape* current_ = nullptr;
    Tape* previous_;
    std::vector<Node> nodes_;
};

namespace detail {

template <typename S>
inline bool op_input_tracked(const Tensor<S>& t) {
    return t.requires_grad() || t.storage()->tracked;
}

// Records a node for `out` if a tape is active and any input participates in
// the graph. `pull` must add into input adjoints using out->adjoint.
template <typename S>
inline void maybe_record(const char* op, std::initializer_list<Tensor<S>> inputs,
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

}  // namespace detail

}  // namespace gff
